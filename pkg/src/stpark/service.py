"""Read-only JSON forecast endpoint over a loaded checkpoint."""
from __future__ import annotations

import json
import logging
import threading
from dataclasses import asdict, dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional
from urllib.parse import parse_qs, urlsplit

import numpy as np

from . import autodiff as ad
from .checkpoint import Checkpoint, restore_model
from .data import (SLOT_SECONDS, DataError, SpatialFeatures, format_timestamp, impute_missing,
                   load_dataset)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ForecastPayload:
    lot_id: str
    issued_at: str
    timestamps: list
    predictions: list
    recent_timestamps: list
    recent_observed: list

    def to_json(self) -> bytes:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":")).encode("utf-8")


class Forecaster:
    """Forecasts for every lot from the latest ``history`` steps, computed once at construction.

    Parameters are frozen (read-only arrays) so concurrent requests cannot
    disturb them; every payload is derived from the cached forecast table.
    """

    def __init__(self, ckpt: Checkpoint, frame, temporal, lots):
        self.digest = ckpt.digest
        self.model = restore_model(ckpt)
        for p in self.model.params.values():
            p.data.setflags(write=False)
        cfg = self.model.config
        self.lot_ids = list(ckpt.meta["lot_ids"])
        missing = sorted(set(self.lot_ids) - set(frame.lot_ids))
        if missing:
            raise DataError(f"data lacks checkpoint lots {missing[:5]}")
        T = cfg.history
        if frame.n_steps < T:
            raise DataError(f"need at least {T} steps of data, have {frame.n_steps}")
        frame = frame.select(self.lot_ids)
        filled = impute_missing(frame)
        mean, std = ckpt.norm["mean"], ckpt.norm["std"]
        by_id = {r.lot_id: r for r in lots}
        spatial = SpatialFeatures.from_lots([by_id[i] for i in self.lot_ids],
                                            ckpt.meta["planning_vocab"], ckpt.meta["land_use_vocab"])
        feats = temporal.matrix(ckpt.norm["weather_mean"], ckpt.norm["weather_std"])
        X = ((filled.values[-T:] - mean) / std)[None]
        with ad.no_grad():
            F_s = self.model.spatial_features(spatial.numeric, spatial.categorical)
            z = self.model(X, feats[-T:][None], F_s).data[0]
        self.forecast = np.maximum(z * std + mean, 0.0)  # (horizon, N)
        self.forecast.setflags(write=False)
        self.horizon = cfg.horizon
        self.offset = frame.utc_offset
        self.last = int(frame.timestamps[-1])
        self.recent_times = [format_timestamp(t, self.offset) for t in frame.timestamps[-T:]]
        recent = frame.values[-T:]
        self.recent = np.where(frame.mask[-T:], recent, np.nan)
        self._index = {lot: j for j, lot in enumerate(self.lot_ids)}
        self._cache: dict[tuple[str, int], bytes] = {}
        self._lock = threading.Lock()

    @classmethod
    def from_directory(cls, ckpt: Checkpoint, directory) -> "Forecaster":
        return cls(ckpt, *load_dataset(directory))

    def payload(self, lot_id: str, steps: Optional[int] = None) -> ForecastPayload:
        steps = self.horizon if steps is None else steps
        if not 1 <= steps <= self.horizon:
            raise ValueError(f"steps must be in [1, {self.horizon}]")
        j = self._index[lot_id]
        times = [format_timestamp(self.last + SLOT_SECONDS * (k + 1), self.offset) for k in range(steps)]
        recent = [None if np.isnan(v) else float(v) for v in self.recent[:, j]]
        return ForecastPayload(lot_id, format_timestamp(self.last, self.offset), times,
                               [float(v) for v in self.forecast[:steps, j]], self.recent_times, recent)

    def payload_bytes(self, lot_id: str, steps: Optional[int] = None) -> bytes:
        key = (lot_id, self.horizon if steps is None else steps)
        with self._lock:
            cached = self._cache.get(key)
        if cached is None:
            cached = self.payload(*key).to_json()
            with self._lock:
                cached = self._cache.setdefault(key, cached)
        return cached

    def knows(self, lot_id: str) -> bool:
        return lot_id in self._index


def _error(status: int, message: str) -> tuple[int, bytes]:
    return status, json.dumps({"error": message, "status": status}, sort_keys=True).encode("utf-8")


def handle(forecaster: Optional[Forecaster], target: str) -> tuple[int, bytes]:
    """Route one GET request; separated from the HTTP plumbing for testing."""
    url = urlsplit(target)
    if url.path == "/health":
        if forecaster is None:
            return 503, json.dumps({"status": "unavailable"}).encode("utf-8")
        body = {"status": "ok", "digest": forecaster.digest, "lots": len(forecaster.lot_ids),
                "horizon": forecaster.horizon, "issued_at": format_timestamp(forecaster.last, forecaster.offset)}
        return 200, json.dumps(body, sort_keys=True).encode("utf-8")
    if url.path != "/forecast":
        return _error(404, f"no route {url.path}")
    if forecaster is None:
        return _error(503, "checkpoint not loaded")
    try:
        query = parse_qs(url.query, keep_blank_values=True, strict_parsing=bool(url.query))
    except ValueError:
        return _error(400, "malformed query string")
    unknown = set(query) - {"lot", "steps"}
    if unknown:
        return _error(400, f"unknown query parameters {sorted(unknown)}")
    lots = query.get("lot", [])
    if len(lots) != 1 or not lots[0]:
        return _error(400, "exactly one non-empty 'lot' parameter is required")
    steps = None
    if "steps" in query:
        raw = query["steps"]
        if len(raw) != 1 or not raw[0].isdigit():
            return _error(400, "'steps' must be a single positive integer")
        steps = int(raw[0])
        if not 1 <= steps <= forecaster.horizon:
            return _error(400, f"'steps' must be in [1, {forecaster.horizon}]")
    if not forecaster.knows(lots[0]):
        return _error(404, f"unknown lot {lots[0]!r}")
    return 200, forecaster.payload_bytes(lots[0], steps)


class _Handler(BaseHTTPRequestHandler):
    server_version = "stpark"

    def do_GET(self):  # noqa: N802 - http.server naming
        status, body = handle(self.server.forecaster, self.path)
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, fmt, *args):
        log.debug("%s - %s", self.address_string(), fmt % args)


def make_server(forecaster: Optional[Forecaster], host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    server = ThreadingHTTPServer((host, port), _Handler)
    server.daemon_threads = True
    server.forecaster = forecaster
    return server
