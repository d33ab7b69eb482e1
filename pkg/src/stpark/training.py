"""Masked MAE training with Adam, step-halving schedule, horizon-bucket metrics."""
from __future__ import annotations

import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import autodiff as ad
from .autodiff import NonFiniteError, Tensor
from .data import WindowedDataset
from .model import DeepPA

log = logging.getLogger(__name__)

BUCKETS = (("1-4", 0, 4), ("5-8", 4, 8), ("9-12", 8, 12))


@dataclass
class TrainConfig:
    batch_size: int = 8
    lr0: float = 1e-3
    lr_halving_period: int = 3
    max_epochs: int = 30
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience: int = 10
    checkpoint_path: Optional[str] = None
    log_path: Optional[str] = None

    def __post_init__(self):
        for name in ("batch_size", "lr0", "lr_halving_period", "max_epochs", "patience"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def mae_loss(pred: Tensor, target, mask=None) -> Tensor:
    """Mean |pred - target| over entries where ``mask`` is true."""
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ad.ShapeError(f"prediction {pred.shape} vs target {target.shape}")
    if mask is None:
        mask = np.ones(target.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    count = int(mask.sum())
    if count == 0:
        raise ValueError("mae_loss: mask excludes every entry")
    return ad.tabs(pred - target).__mul__(mask.astype(float)).sum() * (1.0 / count)


def lr_schedule(epoch: int, lr0: float = 1e-3, period: int = 3) -> float:
    return lr0 * 0.5 ** (epoch // period)


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    """Bias-corrected Adam, in place on ``params[k].data``; returns the advanced state."""
    state.step += 1
    c1 = 1.0 - beta1 ** state.step
    c2 = 1.0 - beta2 ** state.step
    for key, p in params.items():
        g = grads.get(key)
        if g is None:
            g = np.zeros(p.shape)
        if g.shape != p.shape:
            raise ad.ShapeError(f"gradient for {key} has shape {g.shape}, parameter {p.shape}")
        m = state.m.get(key)
        if m is None:
            m = state.m[key] = np.zeros(p.shape)
            state.v[key] = np.zeros(p.shape)
        v = state.v[key]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state


@dataclass
class MetricsReport:
    """MAE / RMSE per horizon bucket in de-normalised units."""

    buckets: dict[str, tuple[float, float]]
    truncated: bool = False

    def mae(self, bucket="avg") -> float:
        return self.buckets[bucket][0]

    def rmse(self, bucket="avg") -> float:
        return self.buckets[bucket][1]

    def to_dict(self) -> dict:
        out = {name: {"mae": m, "rmse": r} for name, (m, r) in self.buckets.items()}
        out["truncated"] = self.truncated
        return out

    def table(self, digits: int = 4) -> str:
        names = list(self.buckets)
        head = "| " + " | ".join(f"{n} MAE | {n} RMSE" for n in names) + " |"
        cells = " | ".join(f"{self.buckets[n][0]:.{digits}f} | {self.buckets[n][1]:.{digits}f}" for n in names)
        return head + "\n" + "|---" * (2 * len(names)) + "|\n| " + cells + " |"


def evaluate(pred, target, mask=None) -> MetricsReport:
    """Bucket metrics over arrays shaped (windows, horizon, lots)."""
    pred, target = np.asarray(pred, dtype=float), np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError(f"prediction {pred.shape} vs target {target.shape}")
    mask = np.ones(pred.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    horizon = pred.shape[1]
    err = pred - target

    def stats(lo, hi):
        e = err[:, lo:hi][mask[:, lo:hi]]
        if e.size == 0:
            return math.nan, math.nan
        return float(np.mean(np.abs(e))), float(np.sqrt(np.mean(e * e)))

    buckets = {}
    for name, lo, hi in BUCKETS:
        if lo < horizon:
            buckets[name] = stats(lo, min(hi, horizon))
    buckets["avg"] = stats(0, horizon)
    return MetricsReport(buckets, truncated=horizon < 12)


def predict_dataset(model: DeepPA, ds: WindowedDataset, batch_size: int = 64) -> np.ndarray:
    """Normalised predictions for every window, (windows, horizon, lots)."""
    out = []
    with ad.no_grad():
        F_s = model.spatial_features(ds.spatial.numeric, ds.spatial.categorical)
        for lo in range(0, ds.n_windows, batch_size):
            idx = np.arange(lo, min(lo + batch_size, ds.n_windows))
            X, F_t, _, _ = ds.batch(idx)
            out.append(model(X, F_t, F_s).data)
    return np.concatenate(out, axis=0)


def evaluate_model(model: DeepPA, ds: WindowedDataset) -> MetricsReport:
    pred = ds.denormalize(predict_dataset(model, ds))
    return evaluate(pred, ds.targets_raw, ds.target_mask)


@dataclass
class TrainState:
    """Everything needed to continue training exactly where it stopped."""

    epoch: int = 0
    adam: AdamState = field(default_factory=AdamState)
    best_val: float = math.inf
    best_params: Optional[dict] = None
    bad_epochs: int = 0
    log: list = field(default_factory=list)


def _snapshot(params):
    return {k: p.data.copy() for k, p in params.items()}


def train_epoch(model: DeepPA, ds: WindowedDataset, cfg: TrainConfig, state: TrainState) -> float:
    lr = lr_schedule(state.epoch, cfg.lr0, cfg.lr_halving_period)
    rng = np.random.default_rng([cfg.seed, state.epoch])
    order = rng.permutation(ds.n_windows)
    total, batches = 0.0, 0
    for b, lo in enumerate(range(0, len(order), cfg.batch_size)):
        idx = np.sort(order[lo: lo + cfg.batch_size])
        X, F_t, Y, M = ds.batch(idx)
        if not M.any():
            continue
        for p in model.params.values():
            p.grad = None
        try:
            F_s = model.spatial_features(ds.spatial.numeric, ds.spatial.categorical)
            loss = mae_loss(model(X, F_t, F_s), Y, M)
            loss.backward()
        except NonFiniteError as exc:
            raise NonFiniteError(f"epoch {state.epoch} batch {b}: {exc}") from exc
        if not math.isfinite(loss.item()):
            raise NonFiniteError(f"epoch {state.epoch} batch {b}: loss is not finite")
        grads = {k: p.grad for k, p in model.params.items() if p.grad is not None}
        adam_step(model.params, grads, state.adam, lr, cfg.beta1, cfg.beta2, cfg.eps)
        total += loss.item()
        batches += 1
    return total / max(batches, 1)


def train(model: DeepPA, train_ds: WindowedDataset, val_ds: WindowedDataset, cfg: TrainConfig,
          state: TrainState | None = None, epochs: int | None = None,
          on_epoch: Callable[[dict, TrainState], None] | None = None) -> TrainState:
    """Mini-batch MAE training with validation early stopping.

    Runs until ``cfg.max_epochs`` (or ``epochs`` more epochs) or until
    validation MAE fails to improve for ``cfg.patience`` epochs. The returned
    state holds the best-on-validation parameters and the per-epoch log.
    """
    state = state or TrainState()
    stop_at = cfg.max_epochs if epochs is None else min(cfg.max_epochs, state.epoch + epochs)
    while state.epoch < stop_at and state.bad_epochs < cfg.patience:
        lr = lr_schedule(state.epoch, cfg.lr0, cfg.lr_halving_period)
        t0 = time.perf_counter()
        train_mae = train_epoch(model, train_ds, cfg, state)
        val_mae = evaluate_model(model, val_ds).mae()
        record = {"epoch": state.epoch, "train_mae": train_mae, "val_mae": val_mae, "lr": lr,
                  "seconds": time.perf_counter() - t0}
        state.log.append(record)
        if val_mae < state.best_val:
            state.best_val, state.best_params, state.bad_epochs = val_mae, _snapshot(model.params), 0
        else:
            state.bad_epochs += 1
        state.epoch += 1
        log.info("epoch %d train %.4f val %.4f lr %.2e", record["epoch"], train_mae, val_mae, lr)
        if cfg.log_path:
            with open(cfg.log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record) + "\n")
        if on_epoch is not None:
            on_epoch(record, state)
    return state


def load_best(model: DeepPA, state: TrainState) -> DeepPA:
    if state.best_params is not None:
        for k, v in state.best_params.items():
            model.params[k].data[...] = v
    return model
