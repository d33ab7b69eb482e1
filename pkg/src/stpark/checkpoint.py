"""Versioned binary checkpoints: JSON header plus a little-endian float64 payload.

Layout::

    b"STPKCKPT" | uint64 LE header length | header JSON (UTF-8, sorted keys) | payload

The header lists every array by name with its shape and byte offset into the
payload. ``digest`` is the SHA-256 of the header (serialised without the
digest field) followed by the payload, so any flipped byte is detected.
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

MAGIC = b"STPKCKPT"
FORMAT_VERSION = 1
_PREFIXES = ("param", "norm", "adam.m", "adam.v", "best")


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: dict
    params: dict[str, np.ndarray]
    norm: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    adam_step: Optional[int] = None
    adam_m: dict[str, np.ndarray] = field(default_factory=dict)
    adam_v: dict[str, np.ndarray] = field(default_factory=dict)
    best_params: Optional[dict[str, np.ndarray]] = None
    digest: str = ""

    def arrays(self) -> list[tuple[str, np.ndarray]]:
        groups = {"param": self.params, "norm": self.norm, "adam.m": self.adam_m,
                  "adam.v": self.adam_v, "best": self.best_params or {}}
        out = []
        for prefix in _PREFIXES:
            for key in sorted(groups[prefix]):
                out.append((f"{prefix}/{key}", groups[prefix][key]))
        return out


def _header_bytes(header: dict) -> bytes:
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")


def encode(ckpt: Checkpoint) -> bytes:
    entries, chunks, offset = [], [], 0
    for name, arr in ckpt.arrays():
        a = np.ascontiguousarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        chunks.append(a.tobytes())
        offset += a.nbytes
    payload = b"".join(chunks)
    header = {
        "format_version": FORMAT_VERSION,
        "config": ckpt.config,
        "meta": ckpt.meta,
        "adam_step": ckpt.adam_step,
        "has_best": ckpt.best_params is not None,
        "arrays": entries,
        "payload_bytes": len(payload),
    }
    digest = hashlib.sha256(_header_bytes(header) + payload).hexdigest()
    ckpt.digest = digest
    header["digest"] = digest
    head = _header_bytes(header)
    return MAGIC + struct.pack("<Q", len(head)) + head + payload


def decode(blob: bytes) -> Checkpoint:
    if len(blob) < len(MAGIC) + 8 or not blob.startswith(MAGIC):
        raise CheckpointError("not a checkpoint file (bad magic or truncated preamble)")
    (head_len,) = struct.unpack_from("<Q", blob, len(MAGIC))
    start = len(MAGIC) + 8
    if len(blob) < start + head_len:
        raise CheckpointError("truncated checkpoint header")
    try:
        header = json.loads(blob[start: start + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format_version {version!r} (expected {FORMAT_VERSION})")
    payload = blob[start + head_len:]
    if len(payload) != header["payload_bytes"]:
        raise CheckpointError(f"truncated checkpoint payload: {len(payload)} of {header['payload_bytes']} bytes")
    digest = header.pop("digest", None)
    if hashlib.sha256(_header_bytes(header) + payload).hexdigest() != digest:
        raise CheckpointError("checkpoint digest mismatch: file is corrupt")

    groups = {p: {} for p in _PREFIXES}
    for e in header["arrays"]:
        prefix, _, key = e["name"].partition("/")
        count = int(np.prod(e["shape"], dtype=np.int64))
        a = np.frombuffer(payload, dtype="<f8", count=count, offset=e["offset"])
        groups[prefix][key] = a.astype(np.float64).reshape(e["shape"])
    return Checkpoint(
        config=header["config"], params=groups["param"], norm=groups["norm"], meta=header["meta"],
        adam_step=header["adam_step"], adam_m=groups["adam.m"], adam_v=groups["adam.v"],
        best_params=groups["best"] if header["has_best"] else None, digest=digest,
    )


def save_checkpoint(path, ckpt: Checkpoint) -> str:
    """Write atomically (temp file in the target directory, then rename); returns the digest."""
    blob = encode(ckpt)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return ckpt.digest


def load_checkpoint(path) -> Checkpoint:
    return decode(Path(path).read_bytes())


# conversions to and from live training objects

def norm_stats(ds) -> dict[str, np.ndarray]:
    return {"mean": ds.mean, "std": ds.std, "weather_mean": ds.weather_mean, "weather_std": ds.weather_std}


def data_meta(ds) -> dict:
    return {"lot_ids": list(ds.lot_ids), "utc_offset": int(ds.utc_offset),
            "planning_vocab": list(ds.spatial.planning_vocab),
            "land_use_vocab": list(ds.spatial.land_use_vocab)}


def from_training(model, ds, state=None, train_config=None, data_config=None) -> Checkpoint:
    """Snapshot model parameters, data encoding and (optionally) the full training state."""
    meta = data_meta(ds)
    if train_config is not None:
        meta["train"] = train_config.to_dict()
    if data_config is not None:
        meta["data"] = data_config
    ckpt = Checkpoint(model.config.to_dict(), {k: p.data for k, p in model.params.items()},
                      norm_stats(ds), meta)
    if state is not None:
        meta["state"] = {"epoch": state.epoch, "best_val": state.best_val,
                         "bad_epochs": state.bad_epochs, "log": state.log}
        ckpt.adam_step = state.adam.step
        ckpt.adam_m, ckpt.adam_v = dict(state.adam.m), dict(state.adam.v)
        ckpt.best_params = state.best_params
    return ckpt


def restore_model(ckpt: Checkpoint, params: str = "param"):
    """DeepPA with the stored parameters; ``params="best"`` picks the best-on-validation set."""
    from .model import DeepPA, ModelConfig

    source = ckpt.params if params == "param" else ckpt.best_params
    if source is None:
        raise CheckpointError("checkpoint holds no best-on-validation parameters")
    model = DeepPA(ModelConfig.from_dict(ckpt.config))
    if set(source) != set(model.params):
        raise CheckpointError("checkpoint parameter keys do not match the configured model")
    for k, p in model.params.items():
        if source[k].shape != p.shape:
            raise CheckpointError(f"parameter {k}: stored {source[k].shape}, model {p.shape}")
        p.data = source[k].copy()
    return model


def restore_state(ckpt: Checkpoint):
    from .training import AdamState, TrainState

    s = ckpt.meta.get("state")
    if s is None or ckpt.adam_step is None:
        raise CheckpointError("checkpoint holds no training state")
    adam = AdamState(ckpt.adam_step, {k: v.copy() for k, v in ckpt.adam_m.items()},
                     {k: v.copy() for k, v in ckpt.adam_v.items()})
    best = None if ckpt.best_params is None else {k: v.copy() for k, v in ckpt.best_params.items()}
    return TrainState(s["epoch"], adam, float(s["best_val"]), best, s["bad_epochs"], list(s["log"]))


def data_stats(ckpt: Checkpoint) -> dict:
    """The ``stats`` argument for data preparation that reproduces the training encoding."""
    out = dict(ckpt.norm)
    out["planning_vocab"] = ckpt.meta["planning_vocab"]
    out["land_use_vocab"] = ckpt.meta["land_use_vocab"]
    return out
