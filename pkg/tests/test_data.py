import json
import math

import numpy as np
import pytest

from stpark.data import (
    SLOT_SECONDS, DataError, SeriesFrame, calendar_keys, filter_lots, format_timestamp, impute_missing,
    kl_shift, load_dataset, load_pa_csv, parse_timestamp, prepare, ring_diffuse, split_and_window,
    split_boundaries, synth_generate, write_dataset, write_manifest,
)

T0 = "2021-03-01T00:00:00+08:00"


def _stamp(k, base=T0, step=SLOT_SECONDS):
    epoch, off = parse_timestamp(base)
    return format_timestamp(epoch + k * step, off)


def _write_pa(path, rows):
    lines = ["timestamp,lot_id,available"] + [f"{t},{lot},{v}" for t, lot, v in rows]
    path.write_text("\n".join(lines) + "\n")


def _frame(values, mask=None):
    values = np.asarray(values, dtype=float)
    mask = ~np.isnan(values) if mask is None else mask
    stamps = parse_timestamp(T0)[0] + SLOT_SECONDS * np.arange(values.shape[0])
    return SeriesFrame(stamps, [f"L{j}" for j in range(values.shape[1])], values, mask, utc_offset=8 * 3600)


def test_load_fixture_shape(tmp_path):
    rows = [(_stamp(k), lot, 10 * k + j) for k in range(4) for j, lot in enumerate(["a", "b", "c"])]
    _write_pa(tmp_path / "pa.csv", rows)
    frame = load_pa_csv(tmp_path / "pa.csv")
    assert frame.values.shape == (4, 3)
    assert frame.mask.all()
    assert frame.lot_ids == ["a", "b", "c"]
    assert frame.values[2, 1] == 21
    assert frame.utc_offset == 8 * 3600


def test_load_gap_is_one_missing_entry(tmp_path):
    rows = [(_stamp(k), lot, 5) for k in range(4) for lot in ["a", "b", "c"] if (k, lot) != (2, "b")]
    _write_pa(tmp_path / "pa.csv", rows)
    frame = load_pa_csv(tmp_path / "pa.csv")
    assert (~frame.mask).sum() == 1
    assert not frame.mask[2, 1]
    assert np.isnan(frame.values[2, 1])


def test_five_minute_data_resamples_to_last_per_slot(tmp_path):
    raw = np.arange(12, dtype=float) * 3.0 + 1.0
    rows = [(_stamp(k, step=300), "a", v) for k, v in enumerate(raw)]
    _write_pa(tmp_path / "pa.csv", rows)
    frame = load_pa_csv(tmp_path / "pa.csv")
    # hand-resampled: slot i holds raw reading 3i + 2
    assert frame.n_steps == len(raw) // 3
    np.testing.assert_array_equal(frame.values[:, 0], raw[2::3])


def test_duplicates_last_wins_and_counted(tmp_path, caplog):
    rows = [(_stamp(0), "a", 1), (_stamp(1), "a", 2), (_stamp(1), "a", 9)]
    _write_pa(tmp_path / "pa.csv", rows)
    frame = load_pa_csv(tmp_path / "pa.csv")
    assert frame.duplicates == 1
    assert frame.values[1, 0] == 9
    assert "duplicate" in caplog.text


def test_malformed_row_reports_line(tmp_path):
    (tmp_path / "pa.csv").write_text(f"timestamp,lot_id,available\n{_stamp(0)},a,3\n{_stamp(1)},a,oops\n")
    with pytest.raises(DataError, match=r"pa.csv:3"):
        load_pa_csv(tmp_path / "pa.csv")


def test_missing_timezone_rejected(tmp_path):
    (tmp_path / "pa.csv").write_text("timestamp,lot_id,available\n2021-03-01T00:00:00,a,3\n")
    with pytest.raises(DataError, match="timezone"):
        load_pa_csv(tmp_path / "pa.csv")


def test_frame_rejects_irregular_spacing():
    with pytest.raises(DataError):
        SeriesFrame(np.array([0, 900, 2700]), ["a"], np.zeros((3, 1)), np.ones((3, 1), bool))


def test_calendar_keys_local_time():
    epoch, off = parse_timestamp("2021-03-01T10:15:00+08:00")  # a Monday
    slot, dow = calendar_keys(np.array([epoch]), off)
    assert slot[0] == 41 and dow[0] == 0


def test_filter_missing_rate_boundary():
    n = 100
    vals = np.tile(np.arange(n, dtype=float)[:, None] % 7, (1, 2))
    mask = np.ones((n, 2), dtype=bool)
    mask[:31, 0] = False  # 31% missing
    mask[:29, 1] = False  # 29% missing
    frame = _frame(np.where(mask, vals, np.nan), mask)
    np.testing.assert_allclose(frame.missing_rate(), [0.31, 0.29])
    kept = filter_lots(frame, kl_threshold=math.inf)
    assert kept.lot_ids == ["L1"]


def test_kl_identity_and_two_spike_oracle():
    x = np.random.default_rng(0).normal(size=500)
    assert kl_shift(x, x) == pytest.approx(0.0, abs=1e-12)
    n = 10
    got = kl_shift(np.full(n, 100.0), np.full(n, 0.0), bins=32, smoothing=1e-6)
    # mirrored spikes: p = (a at bin 31, b at bin 0, b elsewhere), q swaps a and b
    a = (n + 1e-6) / (n + 32e-6)
    b = 1e-6 / (n + 32e-6)
    expected = (a - b) * math.log(a / b)
    assert got == pytest.approx(expected, rel=1e-12)
    assert got > 0.5


def test_filter_drops_shifted_lot_and_is_idempotent():
    n = 120
    steady = 10.0 + 5.0 * (np.arange(n) % 4)  # same four levels in every period
    shifted = np.where(np.arange(n) < 100, 100.0, 0.0)
    frame = _frame(np.column_stack([steady, shifted]))
    once = filter_lots(frame)
    assert once.lot_ids == ["L0"]
    twice = filter_lots(once)
    assert twice.lot_ids == once.lot_ids
    np.testing.assert_array_equal(twice.values, once.values)


def test_filter_all_removed_errors():
    frame = _frame(np.full((10, 1), np.nan), np.zeros((10, 1), bool))
    with pytest.raises(DataError):
        filter_lots(frame)


@pytest.mark.parametrize("col, expected", [
    ([5, np.nan, 7], [5, 5, 7]),
    ([np.nan, 4], [4, 4]),
    ([1, 2, 3], [1, 2, 3]),
])
def test_impute(col, expected):
    frame = _frame(np.array(col, dtype=float)[:, None])
    out = impute_missing(frame)
    np.testing.assert_array_equal(out.values[:, 0], expected)
    np.testing.assert_array_equal(out.mask, frame.mask)


def test_impute_no_gaps_is_identity():
    frame = _frame(np.arange(6, dtype=float).reshape(3, 2))
    assert impute_missing(frame).values.tobytes() == frame.values.tobytes()


def test_split_boundaries():
    assert split_boundaries(1200, (10, 1, 1)) == (1000, 1100)


def _synthetic(n_lots=4, n_days=8, seed=0, **kw):
    frame, temporal, lots = synth_generate(n_lots, n_days, seed, **kw)
    return frame, temporal, lots


def test_windows_and_normalisation():
    frame, temporal, lots = _synthetic()
    tr, va, te = prepare(frame, temporal, lots, keep_lots=frame.lot_ids)
    b1, b2 = split_boundaries(frame.n_steps)
    assert (tr.start, va.start, te.start) == (0, b1, b2)
    assert np.abs(tr.series.mean(axis=0)).max() < 1e-9
    assert np.abs(tr.series.std(axis=0) - 1).max() < 1e-9
    # stats come from training rows only
    assert np.abs(te.series.mean(axis=0)).max() > 1e-6
    # targets immediately follow inputs inside one split
    step = tr.target_times[:, 0] - tr.timestamps[tr.history - 1: tr.history - 1 + tr.n_windows]
    assert np.all(step == SLOT_SECONDS)
    np.testing.assert_array_equal(tr.inputs[5, 1:], tr.inputs[6, :-1])
    assert te.inputs.shape == (te.n_windows, 12, 4)
    # the earliest test input is after every validation step
    assert te.timestamps[0] > va.timestamps[-1]


def test_split_too_short():
    frame, temporal, lots = _synthetic(n_days=1)
    with pytest.raises(DataError, match="too short"):
        prepare(frame, temporal, lots, keep_lots=frame.lot_ids)


def test_pipeline_determinism_and_manifest(tmp_path):
    frame, temporal, lots = _synthetic()
    a = prepare(frame, temporal, lots, keep_lots=frame.lot_ids)
    b = prepare(*_synthetic(), keep_lots=frame.lot_ids)
    for x, y in zip(a, b):
        assert x.series.tobytes() == y.series.tobytes()
        assert x.temporal.tobytes() == y.temporal.tobytes()
    write_manifest(tmp_path / "m.json", a)
    doc = json.loads((tmp_path / "m.json").read_text())
    assert doc["boundaries"][1:3] == list(split_boundaries(8 * 96))


def test_stored_stats_reproduce_encoding():
    frame, temporal, lots = _synthetic()
    tr, _, te = prepare(frame, temporal, lots, keep_lots=frame.lot_ids)
    stats = {"mean": tr.mean, "std": tr.std, "weather_mean": tr.weather_mean, "weather_std": tr.weather_std,
             "planning_vocab": tr.spatial.planning_vocab, "land_use_vocab": tr.spatial.land_use_vocab}
    _, _, te2 = prepare(frame, temporal, lots, keep_lots=frame.lot_ids, stats=stats)
    assert te2.series.tobytes() == te.series.tobytes()
    np.testing.assert_array_equal(te2.spatial.categorical, te.spatial.categorical)


def test_synth_determinism_and_ranges():
    f1, t1, l1 = _synthetic(seed=3)
    f2, t2, l2 = _synthetic(seed=3)
    assert f1.values.tobytes() == f2.values.tobytes()
    assert t1.temperature.tobytes() == t2.temperature.tobytes()
    assert l1 == l2
    assert (f1.values >= 0).all()
    f3, _, _ = _synthetic(seed=4)
    assert f3.values.tobytes() != f1.values.tobytes()


def test_synth_capacities_in_range():
    frame, _, _ = _synthetic(n_lots=40, n_days=2, seed=5)
    peak = frame.values.max(axis=0)
    assert peak.max() <= 500 and peak.min() > 0


def test_diffusion_conserves_total():
    x = np.random.default_rng(2).uniform(0, 100, size=(5, 9))
    for coeff in (0.0, 0.1, 0.25):
        y = x
        for _ in range(50):
            y = ring_diffuse(y, coeff)
        assert np.abs(y.sum(axis=-1) - x.sum(axis=-1)).max() < 1e-9


def test_noiseless_synth_is_periodic():
    frame, _, _ = synth_generate(3, 21, 1, diffusion=0.0, noise=0.0)
    week = 7 * 96
    np.testing.assert_array_equal(frame.values[:week], frame.values[week: 2 * week])


def test_synth_missing_and_roundtrip(tmp_path):
    frame, temporal, lots = synth_generate(3, 2, 9, missing_rate=0.1)
    assert 0.0 < (~frame.mask).mean() < 0.25
    write_dataset(tmp_path, frame, temporal, lots)
    f2, t2, l2 = load_dataset(tmp_path)
    assert f2.lot_ids == frame.lot_ids
    np.testing.assert_array_equal(f2.mask, frame.mask)
    np.testing.assert_array_equal(f2.values[f2.mask], frame.values[frame.mask])
    np.testing.assert_array_equal(t2.temperature, temporal.temperature)
    assert l2 == lots


def test_split_and_window_requires_imputed():
    frame = _frame(np.array([[1.0], [np.nan]] * 600))
    frame_t = synth_generate(2, 13, 0)[1]
    with pytest.raises(DataError, match="impute"):
        split_and_window(frame, frame_t, [])
