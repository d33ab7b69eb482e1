"""Parking-availability data: CSV ingest, lot filtering, imputation, windowing, synthetic data."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

SLOT_SECONDS = 900
SLOTS_PER_DAY = 96
PA_HEADER = ["timestamp", "lot_id", "available"]
LOTS_HEADER = ["lot_id", "lat", "lon", "planning_area", "land_use", "road_density"]
WEATHER_HEADER = ["timestamp", "temperature", "humidity", "wind_speed"]
WEATHER_CHANNELS = ("temperature", "humidity", "wind_speed")
TEMPORAL_FEATURE_DIM = 2 + 7 + len(WEATHER_CHANNELS)
SPATIAL_NUMERIC_DIM = 3


class DataError(ValueError):
    pass


def parse_timestamp(text: str) -> tuple[int, int]:
    """ISO-8601 with offset -> (epoch seconds, utc offset seconds)."""
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        raise DataError(f"timestamp {text!r} has no timezone")
    return int(ts.timestamp()), int(ts.utcoffset().total_seconds())


def format_timestamp(epoch: int, offset: int) -> str:
    return datetime.fromtimestamp(int(epoch), tz=timezone(timedelta(seconds=int(offset)))).isoformat()


@dataclass(frozen=True)
class LotRecord:
    lot_id: str
    latitude: float
    longitude: float
    planning_area: str
    land_use: str
    road_density: float

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise DataError(f"lot {self.lot_id}: latitude {self.latitude} out of range")
        if not -180.0 <= self.longitude <= 180.0:
            raise DataError(f"lot {self.lot_id}: longitude {self.longitude} out of range")


@dataclass
class SeriesFrame:
    """Availability on a regular 15-minute grid. ``values`` is NaN where ``mask`` is false."""

    timestamps: np.ndarray
    lot_ids: list[str]
    values: np.ndarray
    mask: np.ndarray
    utc_offset: int = 0
    duplicates: int = 0

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        if self.values.shape != (len(self.timestamps), len(self.lot_ids)):
            raise DataError(f"values shape {self.values.shape} does not match grid")
        if len(self.timestamps) > 1 and np.any(np.diff(self.timestamps) != SLOT_SECONDS):
            raise DataError("timestamps are not strictly increasing at 900 s spacing")

    @property
    def n_steps(self) -> int:
        return len(self.timestamps)

    @property
    def n_lots(self) -> int:
        return len(self.lot_ids)

    def missing_rate(self) -> np.ndarray:
        return 1.0 - self.mask.mean(axis=0)

    def select(self, lot_ids: Sequence[str]) -> "SeriesFrame":
        index = {lot: i for i, lot in enumerate(self.lot_ids)}
        cols = [index[lot] for lot in lot_ids]
        return replace(self, lot_ids=list(lot_ids), values=self.values[:, cols].copy(),
                       mask=self.mask[:, cols].copy())


@dataclass
class TemporalFeatureFrame:
    timestamps: np.ndarray
    slot: np.ndarray
    day_of_week: np.ndarray
    temperature: np.ndarray
    humidity: np.ndarray
    wind_speed: np.ndarray
    utc_offset: int = 0

    @classmethod
    def from_weather(cls, timestamps, utc_offset, weather: dict[str, np.ndarray]):
        timestamps = np.asarray(timestamps, dtype=np.int64)
        slot, dow = calendar_keys(timestamps, utc_offset)
        return cls(timestamps, slot, dow, *(np.asarray(weather[k], dtype=float) for k in WEATHER_CHANNELS),
                   utc_offset=utc_offset)

    def weather(self) -> np.ndarray:
        return np.stack([self.temperature, self.humidity, self.wind_speed], axis=1)

    def matrix(self, weather_mean, weather_std) -> np.ndarray:
        """(steps, 12): sin/cos of time of day, one-hot weekday, z-scored weather."""
        angle = 2.0 * np.pi * self.slot / SLOTS_PER_DAY
        dow = np.eye(7)[self.day_of_week]
        z = (self.weather() - weather_mean) / weather_std
        return np.column_stack([np.sin(angle), np.cos(angle), dow, z])


def calendar_keys(timestamps, utc_offset: int) -> tuple[np.ndarray, np.ndarray]:
    """Local time-of-day slot in [0, 96) and weekday in [0, 7) (Monday = 0)."""
    local = np.asarray(timestamps, dtype=np.int64) + int(utc_offset)
    slot = (local % 86400) // SLOT_SECONDS
    # 1970-01-01 was a Thursday
    dow = (local // 86400 + 3) % 7
    return slot.astype(np.int64), dow.astype(np.int64)


# ingest

def _rows(path, header):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None or [h.strip() for h in first] != header:
            raise DataError(f"{path}: expected header {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            yield lineno, row


def _float(path, lineno, text, name):
    try:
        v = float(text)
    except ValueError:
        raise DataError(f"{path}:{lineno}: {name} {text!r} is not a number") from None
    if not math.isfinite(v):
        raise DataError(f"{path}:{lineno}: {name} is not finite")
    return v


def _ts(path, lineno, text):
    try:
        return parse_timestamp(text)
    except ValueError as exc:
        raise DataError(f"{path}:{lineno}: bad timestamp {text!r}: {exc}") from None


def load_pa_csv(path) -> SeriesFrame:
    """Read ``timestamp,lot_id,available`` rows onto a 15-minute grid.

    Within each slot the latest observation wins. Exact (timestamp, lot)
    repeats keep the later row and are counted in ``duplicates``.
    """
    latest: dict[tuple[int, str], tuple[int, float]] = {}
    seen: set[tuple[int, str]] = set()
    duplicates = 0
    offset = None
    for lineno, (ts_text, lot, avail) in _rows(path, PA_HEADER):
        epoch, off = _ts(path, lineno, ts_text)
        offset = off if offset is None else offset
        lot = lot.strip()
        if not lot:
            raise DataError(f"{path}:{lineno}: empty lot_id")
        value = _float(path, lineno, avail, "available")
        if value < 0:
            raise DataError(f"{path}:{lineno}: negative availability {value}")
        if (epoch, lot) in seen:
            duplicates += 1
        seen.add((epoch, lot))
        key = (epoch - epoch % SLOT_SECONDS, lot)
        prev = latest.get(key)
        if prev is None or epoch >= prev[0]:
            latest[key] = (epoch, value)
    if not latest:
        raise DataError(f"{path}: no rows")
    if duplicates:
        log.warning("%s: %d duplicate (timestamp, lot) rows, last occurrence kept", path, duplicates)

    lots = sorted({lot for _, lot in latest})
    slots = sorted({s for s, _ in latest})
    grid = np.arange(slots[0], slots[-1] + SLOT_SECONDS, SLOT_SECONDS, dtype=np.int64)
    col = {lot: j for j, lot in enumerate(lots)}
    values = np.full((len(grid), len(lots)), np.nan)
    for (s, lot), (_, v) in latest.items():
        values[(s - grid[0]) // SLOT_SECONDS, col[lot]] = v
    return SeriesFrame(grid, lots, values, ~np.isnan(values), utc_offset=offset or 0, duplicates=duplicates)


def load_lots_csv(path) -> list[LotRecord]:
    out = []
    for lineno, (lot, lat, lon, pln, use, rd) in _rows(path, LOTS_HEADER):
        try:
            out.append(LotRecord(lot.strip(), _float(path, lineno, lat, "lat"), _float(path, lineno, lon, "lon"),
                                 pln.strip(), use.strip(), _float(path, lineno, rd, "road_density")))
        except DataError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
    return out


def load_weather_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Weather rows -> (epoch seconds, (rows, 3) values), sorted by time."""
    stamps, vals = [], []
    for lineno, row in _rows(path, WEATHER_HEADER):
        stamps.append(_ts(path, lineno, row[0])[0])
        vals.append([_float(path, lineno, v, name) for v, name in zip(row[1:], WEATHER_CHANNELS)])
    if not stamps:
        raise DataError(f"{path}: no rows")
    order = np.argsort(stamps, kind="stable")
    return np.asarray(stamps, dtype=np.int64)[order], np.asarray(vals, dtype=float)[order]


def align_weather(grid, utc_offset, stamps, values) -> TemporalFeatureFrame:
    """Last weather observation per grid slot, forward/backward filled over gaps."""
    grid = np.asarray(grid, dtype=np.int64)
    idx = (stamps - grid[0]) // SLOT_SECONDS
    aligned = np.full((len(grid), values.shape[1]), np.nan)
    ok = (idx >= 0) & (idx < len(grid))
    # sorted input: later rows overwrite earlier ones in the same slot
    aligned[idx[ok]] = values[ok]
    aligned = _fill(aligned)
    if np.isnan(aligned).any():
        raise DataError("weather does not overlap the availability time range")
    return TemporalFeatureFrame.from_weather(grid, utc_offset, dict(zip(WEATHER_CHANNELS, aligned.T)))


def load_dataset(directory) -> tuple[SeriesFrame, TemporalFeatureFrame, list[LotRecord]]:
    d = Path(directory)
    frame = load_pa_csv(d / "pa.csv")
    lots = {r.lot_id: r for r in load_lots_csv(d / "lots.csv")}
    missing = [lot for lot in frame.lot_ids if lot not in lots]
    if missing:
        raise DataError(f"lots without a lots.csv record: {missing[:5]}")
    stamps, values = load_weather_csv(d / "weather.csv")
    temporal = align_weather(frame.timestamps, frame.utc_offset, stamps, values)
    return frame, temporal, [lots[lot] for lot in frame.lot_ids]


# preprocessing

def split_boundaries(n_steps: int, ratios=(10, 1, 1)) -> tuple[int, int]:
    total = sum(ratios)
    return n_steps * ratios[0] // total, n_steps * (ratios[0] + ratios[1]) // total


def kl_shift(train_values, test_values, bins: int = 32, smoothing: float = 1e-6) -> float:
    """KL(train || test) between smoothed histograms on a shared value range."""
    train_values = np.asarray(train_values, dtype=float)
    test_values = np.asarray(test_values, dtype=float)
    if train_values.size == 0 or test_values.size == 0:
        return math.inf
    lo = min(train_values.min(), test_values.min())
    hi = max(train_values.max(), test_values.max())
    if hi <= lo:
        hi = lo + 1.0
    p = np.histogram(train_values, bins=bins, range=(lo, hi))[0] + smoothing
    q = np.histogram(test_values, bins=bins, range=(lo, hi))[0] + smoothing
    p /= p.sum()
    q /= q.sum()
    return float(np.sum(p * np.log(p / q)))


def filter_lots(frame: SeriesFrame, max_missing: float = 0.30, kl_threshold: float = 0.5,
                ratios=(10, 1, 1), bins: int = 32, smoothing: float = 1e-6) -> SeriesFrame:
    """Keep lots with missing rate < ``max_missing`` and train/test KL shift <= ``kl_threshold``."""
    train_end, test_start = split_boundaries(frame.n_steps, ratios)
    keep = []
    rates = frame.missing_rate()
    for j, lot in enumerate(frame.lot_ids):
        if not rates[j] < max_missing:
            continue
        col, m = frame.values[:, j], frame.mask[:, j]
        train = col[:train_end][m[:train_end]]
        test = col[test_start:][m[test_start:]]
        if kl_shift(train, test, bins, smoothing) <= kl_threshold:
            keep.append(lot)
    if not keep:
        raise DataError("every lot was removed by the missing-rate / distribution-shift filter")
    return frame.select(keep)


def _fill(a: np.ndarray) -> np.ndarray:
    """Forward fill along axis 0, then backward fill leading gaps."""
    out = a.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        ok = ~np.isnan(col)
        if not ok.any():
            continue
        idx = np.where(ok, np.arange(len(col)), 0)
        np.maximum.accumulate(idx, out=idx)
        col[:] = col[idx]
        first = np.argmax(ok)
        col[:first] = col[first]
    return out


def impute_missing(frame: SeriesFrame) -> SeriesFrame:
    """Forward/backward fill gaps per lot; ``mask`` still marks the real observations."""
    if frame.mask.all():
        return frame
    dead = [lot for lot, ok in zip(frame.lot_ids, frame.mask.any(axis=0)) if not ok]
    if dead:
        raise DataError(f"lots with no observations cannot be imputed: {dead[:5]}")
    return replace(frame, values=_fill(frame.values))


# windowing

@dataclass
class SpatialFeatures:
    numeric: np.ndarray
    categorical: np.ndarray
    planning_vocab: list[str]
    land_use_vocab: list[str]

    @classmethod
    def from_lots(cls, lots: Sequence[LotRecord], planning_vocab=None, land_use_vocab=None) -> "SpatialFeatures":
        """Min-max scaled numerics plus category indices; pass stored vocabularies to reuse an encoding."""
        raw = np.array([[r.latitude, r.longitude, r.road_density] for r in lots], dtype=float)
        lo, hi = raw.min(axis=0), raw.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        pv = list(planning_vocab) if planning_vocab is not None else sorted({r.planning_area for r in lots})
        uv = list(land_use_vocab) if land_use_vocab is not None else sorted({r.land_use for r in lots})
        try:
            cat = np.array([[pv.index(r.planning_area), uv.index(r.land_use)] for r in lots], dtype=np.int64)
        except ValueError as exc:
            raise DataError(f"lot category outside the stored vocabulary: {exc}") from None
        return cls((raw - lo) / span, cat, pv, uv)


@dataclass
class WindowedDataset:
    """Stride-1 windows over one contiguous split; arrays are zero-copy views of the split."""

    series: np.ndarray  # (steps, N) z-scored
    observed: np.ndarray  # (steps, N) bool
    temporal: np.ndarray  # (steps, C_t)
    timestamps: np.ndarray
    spatial: SpatialFeatures
    mean: np.ndarray
    std: np.ndarray
    history: int
    horizon: int
    start: int  # absolute index of series[0] in the full frame
    lot_ids: list[str] = field(default_factory=list)
    utc_offset: int = 0
    weather_mean: np.ndarray | None = None
    weather_std: np.ndarray | None = None

    @property
    def n_windows(self) -> int:
        return max(0, len(self.series) - self.history - self.horizon + 1)

    def _windows(self, a, offset, length):
        view = np.lib.stride_tricks.sliding_window_view(a, length, axis=0)
        view = np.moveaxis(view, -1, 1)
        return view[offset: offset + self.n_windows]

    @property
    def inputs(self) -> np.ndarray:
        return self._windows(self.series, 0, self.history)

    @property
    def targets(self) -> np.ndarray:
        return self._windows(self.series, self.history, self.horizon)

    @property
    def targets_raw(self) -> np.ndarray:
        return self.denormalize(self.targets)

    @property
    def target_mask(self) -> np.ndarray:
        return self._windows(self.observed, self.history, self.horizon)

    @property
    def input_temporal(self) -> np.ndarray:
        return self._windows(self.temporal, 0, self.history)

    @property
    def target_times(self) -> np.ndarray:
        return self._windows(self.timestamps, self.history, self.horizon)

    def batch(self, idx):
        idx = np.asarray(idx)
        return (self.inputs[idx], self.input_temporal[idx], self.targets[idx], self.target_mask[idx])

    def denormalize(self, z):
        return np.asarray(z) * self.std + self.mean


def split_and_window(frame: SeriesFrame, temporal: TemporalFeatureFrame, lots: Sequence[LotRecord],
                     history: int = 12, horizon: int = 12, ratios=(10, 1, 1), stats: dict | None = None):
    """Chronological split, train-only normalisation, stride-1 windows inside each split.

    ``stats`` (keys mean, std, weather_mean, weather_std, and optionally
    planning_vocab, land_use_vocab) replaces the statistics computed from the
    training split, so a stored model sees exactly its training encoding.
    """
    if np.isnan(frame.values).any():
        raise DataError("impute missing values before windowing")
    if len(lots) != frame.n_lots or [r.lot_id for r in lots] != frame.lot_ids:
        raise DataError("lot records do not line up with the frame's lots")
    b1, b2 = split_boundaries(frame.n_steps, ratios)
    bounds = [(0, b1), (b1, b2), (b2, frame.n_steps)]
    for lo, hi in bounds:
        if hi - lo < history + horizon:
            raise DataError(f"split [{lo}, {hi}) too short for one window of {history}+{horizon} steps")

    train_vals = np.where(frame.mask[:b1], frame.values[:b1], np.nan)
    with np.errstate(invalid="ignore"):
        mean = np.nanmean(train_vals, axis=0)
        std = np.nanstd(train_vals, axis=0)
    mean = np.where(np.isnan(mean), frame.values[:b1].mean(axis=0), mean)
    std = np.where(np.isnan(std) | (std < 1e-8), 1.0, std)
    weather = temporal.weather()
    w_mean = weather[:b1].mean(axis=0)
    w_std = weather[:b1].std(axis=0)
    w_std = np.where(w_std < 1e-8, 1.0, w_std)
    stats = stats or {}
    if "mean" in stats:
        mean, std = np.asarray(stats["mean"], dtype=float), np.asarray(stats["std"], dtype=float)
        w_mean = np.asarray(stats["weather_mean"], dtype=float)
        w_std = np.asarray(stats["weather_std"], dtype=float)
        if mean.shape != (frame.n_lots,) or std.shape != (frame.n_lots,):
            raise DataError(f"stored statistics cover {mean.shape} lots, data has {frame.n_lots}")
    feats = temporal.matrix(w_mean, w_std)
    z = (frame.values - mean) / std
    spatial = SpatialFeatures.from_lots(lots, stats.get("planning_vocab"), stats.get("land_use_vocab"))
    out = []
    for lo, hi in bounds:
        out.append(WindowedDataset(z[lo:hi], frame.mask[lo:hi], feats[lo:hi], frame.timestamps[lo:hi],
                                   spatial, mean, std, history, horizon, lo, list(frame.lot_ids),
                                   frame.utc_offset, w_mean, w_std))
    return tuple(out)


def split_manifest(train: WindowedDataset, val: WindowedDataset, test: WindowedDataset) -> dict:
    return {
        "boundaries": [train.start, val.start, test.start, test.start + len(test.series)],
        "history": train.history,
        "horizon": train.horizon,
        "lot_ids": train.lot_ids,
        "mean": train.mean.tolist(),
        "std": train.std.tolist(),
        "weather_mean": train.weather_mean.tolist(),
        "weather_std": train.weather_std.tolist(),
        "windows": [train.n_windows, val.n_windows, test.n_windows],
    }


def write_manifest(path, datasets) -> None:
    Path(path).write_text(json.dumps(split_manifest(*datasets), indent=2, sort_keys=True) + "\n")


def prepare(frame, temporal, lots, history=12, horizon=12, ratios=(10, 1, 1),
            max_missing=0.30, kl_threshold=0.5, keep_lots: Sequence[str] | None = None,
            stats: dict | None = None):
    """filter -> impute -> split; ``keep_lots`` bypasses filtering with a fixed lot list."""
    if keep_lots is not None:
        missing = sorted(set(keep_lots) - set(frame.lot_ids))
        if missing:
            raise DataError(f"lots not present in the data: {missing[:5]}")
        frame = frame.select(keep_lots)
    else:
        frame = filter_lots(frame, max_missing, kl_threshold, ratios)
    by_id = {r.lot_id: r for r in lots}
    frame = impute_missing(frame)
    try:
        records = [by_id[lot] for lot in frame.lot_ids]
    except KeyError as exc:
        raise DataError(f"lot {exc} has no entry in the lot table") from None
    return split_and_window(frame, temporal, records, history, horizon, ratios, stats)


# synthetic data

LAND_USES = ("residential", "commercial", "industrial", "mixed")
PLANNING_AREAS = ("CENTRAL", "EAST", "NORTH", "NORTH-EAST", "WEST")
# daily amplitude (fraction of capacity), slot of peak availability, weekend amplitude factor
_CLASS_PROFILE = {
    "residential": (0.50, 52, 1.0),
    "commercial": (0.70, 4, 0.4),
    "industrial": (0.40, 8, 0.5),
    "mixed": (0.60, 72, 0.8),
}


def ring_diffuse(state: np.ndarray, coeff: float) -> np.ndarray:
    """One explicit heat-diffusion step on a ring: x - coeff * L x. Conserves sum(x)."""
    return state - coeff * (2.0 * state - np.roll(state, 1, axis=-1) - np.roll(state, -1, axis=-1))


def synth_generate(n_lots: int, n_days: int, seed: int, diffusion: float = 0.2, noise: float = 0.05,
                   persistence: float = 0.97, missing_rate: float = 0.0,
                   start: str = "2020-07-01T00:00:00+08:00"):
    """Ring of lots: daily profile by land use plus a diffusing, weather-driven anomaly.

    Availability fraction = 0.5 + profile(slot, weekday) + anomaly, clipped to
    [0, 1] and scaled by capacity. The anomaly follows
    ``a <- persistence * ring_diffuse(a, diffusion) + shock`` where each shock
    has std ``noise`` (in capacity fractions) and shares a weather component
    across lots.
    """
    if n_lots < 2:
        raise ValueError("need at least two lots")
    rng = np.random.default_rng(seed)
    t0, offset = parse_timestamp(start)
    steps = n_days * SLOTS_PER_DAY
    stamps = t0 + SLOT_SECONDS * np.arange(steps, dtype=np.int64)
    slot, dow = calendar_keys(stamps, offset)

    capacity = rng.integers(50, 501, size=n_lots).astype(float)
    uses = [LAND_USES[i] for i in rng.integers(0, len(LAND_USES), size=n_lots)]
    jitter = rng.integers(-4, 5, size=n_lots)
    amp = np.array([_CLASS_PROFILE[u][0] for u in uses])
    peak = np.array([_CLASS_PROFILE[u][1] for u in uses]) + jitter
    weekend = np.array([_CLASS_PROFILE[u][2] for u in uses])

    phase = 2.0 * np.pi * (slot[:, None] - peak[None, :]) / SLOTS_PER_DAY
    amp_t = np.where((dow >= 5)[:, None], amp * weekend, amp)
    profile = 0.5 + amp_t * np.cos(phase)

    shock = rng.standard_normal(steps)
    local = rng.standard_normal((steps, n_lots))
    anomaly = np.zeros((steps, n_lots))
    a = np.zeros(n_lots)
    for t in range(steps):
        a = persistence * ring_diffuse(a, diffusion) + noise * (0.6 * shock[t] + 0.8 * local[t])
        anomaly[t] = a
    values = capacity * np.clip(profile + anomaly, 0.0, 1.0)

    temp_anom = np.zeros(steps)
    for t in range(1, steps):
        temp_anom[t] = 0.9 * temp_anom[t - 1] + 0.4 * shock[t]
    day_angle = 2.0 * np.pi * (slot - 30) / SLOTS_PER_DAY
    temperature = 27.0 + 2.5 * np.sin(day_angle) + temp_anom
    humidity = 80.0 - 3.0 * (temperature - 27.0) + rng.normal(0.0, 1.0, steps)
    wind = 2.0 + np.abs(rng.normal(0.0, 1.0, steps))

    mask = np.ones_like(values, dtype=bool)
    if missing_rate > 0:
        mask = rng.random(values.shape) >= missing_rate
        values = np.where(mask, values, np.nan)

    lot_ids = [f"L{i:04d}" for i in range(n_lots)]
    angle = 2.0 * np.pi * np.arange(n_lots) / n_lots
    lots = [
        LotRecord(lot_ids[i], round(1.3521 + 0.08 * math.sin(angle[i]), 6),
                  round(103.8198 + 0.08 * math.cos(angle[i]), 6),
                  PLANNING_AREAS[int(i * len(PLANNING_AREAS) // n_lots)], uses[i],
                  round(float(rng.uniform(0.5, 12.0)), 4))
        for i in range(n_lots)
    ]
    frame = SeriesFrame(stamps, lot_ids, values, mask, utc_offset=offset)
    temporal = TemporalFeatureFrame(stamps, slot, dow, temperature, humidity, wind, utc_offset=offset)
    return frame, temporal, lots


def write_pa_csv(frame: SeriesFrame, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PA_HEADER)
        for t, epoch in enumerate(frame.timestamps):
            stamp = format_timestamp(epoch, frame.utc_offset)
            for j, lot in enumerate(frame.lot_ids):
                if frame.mask[t, j]:
                    w.writerow([stamp, lot, repr(float(frame.values[t, j]))])


def write_lots_csv(lots: Sequence[LotRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOTS_HEADER)
        for r in lots:
            w.writerow([r.lot_id, repr(r.latitude), repr(r.longitude), r.planning_area, r.land_use,
                        repr(r.road_density)])


def write_weather_csv(temporal: TemporalFeatureFrame, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(WEATHER_HEADER)
        for i, epoch in enumerate(temporal.timestamps):
            w.writerow([format_timestamp(epoch, temporal.utc_offset), repr(float(temporal.temperature[i])),
                        repr(float(temporal.humidity[i])), repr(float(temporal.wind_speed[i]))])


def write_dataset(directory, frame, temporal, lots) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_pa_csv(frame, d / "pa.csv")
    write_lots_csv(lots, d / "lots.csv")
    write_weather_csv(temporal, d / "weather.csv")
