"""Classical baselines: historical average and least-squares vector autoregression."""
from __future__ import annotations

import numpy as np

from .data import SLOTS_PER_DAY, calendar_keys


class HistoricalAverage:
    """Mean of training observations keyed by (lot, time-of-day slot, weekday).

    Empty keys fall back to the (lot, slot) mean, then to the lot mean.
    """

    def fit(self, values, mask, timestamps, utc_offset: int = 0) -> "HistoricalAverage":
        values = np.asarray(values, dtype=float)
        mask = np.asarray(mask, dtype=bool)
        slot, dow = calendar_keys(timestamps, utc_offset)
        n = values.shape[1]
        v = np.where(mask, values, 0.0)
        w = mask.astype(float)
        key = slot * 7 + dow
        sums = np.zeros((SLOTS_PER_DAY * 7, n))
        counts = np.zeros((SLOTS_PER_DAY * 7, n))
        np.add.at(sums, key, v)
        np.add.at(counts, key, w)
        slot_sums = sums.reshape(SLOTS_PER_DAY, 7, n).sum(axis=1)
        slot_counts = counts.reshape(SLOTS_PER_DAY, 7, n).sum(axis=1)
        lot_counts = counts.sum(axis=0)
        if np.any(lot_counts == 0):
            raise ValueError("historical average: a lot has no training observations")
        lot_mean = sums.sum(axis=0) / lot_counts
        with np.errstate(invalid="ignore", divide="ignore"):
            slot_mean = np.where(slot_counts > 0, slot_sums / slot_counts, lot_mean)
            table = np.where(counts > 0, sums / counts, np.repeat(slot_mean, 7, axis=0))
        self.table = table.reshape(SLOTS_PER_DAY, 7, n)
        self.utc_offset = utc_offset
        return self

    def predict(self, timestamps) -> np.ndarray:
        """Predictions for any array of epoch seconds; a trailing lot axis is appended."""
        slot, dow = calendar_keys(timestamps, self.utc_offset)
        return self.table[slot, dow]


class VARModel:
    """x_t = c + sum_i A_i x_{t-i}, fit by ridge-stabilised least squares."""

    max_regressors = 2000

    def __init__(self, lag: int = 4, ridge: float = 1e-6):
        if lag < 1:
            raise ValueError("lag must be >= 1")
        self.lag = lag
        self.ridge = ridge

    def fit(self, series) -> "VARModel":
        x = np.asarray(series, dtype=float)
        steps, n = x.shape
        p = self.lag
        if n * p > self.max_regressors:
            raise ValueError(f"VAR with {n} series and lag {p} exceeds {self.max_regressors} regressors")
        if steps <= p + n * p:
            raise ValueError("not enough observations to fit the VAR")
        design = np.ones((steps - p, 1 + n * p))
        for i in range(1, p + 1):
            design[:, 1 + (i - 1) * n: 1 + i * n] = x[p - i: steps - i]
        target = x[p:]
        gram = design.T @ design
        gram[np.diag_indices_from(gram)] += self.ridge
        try:
            coef = np.linalg.solve(gram, design.T @ target)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(f"VAR normal equations are singular: {exc}") from None
        if not np.isfinite(coef).all():
            raise np.linalg.LinAlgError("VAR fit produced non-finite coefficients")
        self.intercept = coef[0]
        # A[i] maps x_{t-i-1} to x_t
        self.coefs = np.stack([coef[1 + i * n: 1 + (i + 1) * n].T for i in range(p)])
        return self

    def forecast(self, recent, steps: int) -> np.ndarray:
        """Iterate the recursion ``steps`` times from the last ``lag`` rows of ``recent``."""
        hist = list(np.asarray(recent, dtype=float)[-self.lag:])
        if len(hist) < self.lag:
            raise ValueError(f"need {self.lag} recent observations")
        out = []
        for _ in range(steps):
            nxt = self.intercept.copy()
            for i in range(self.lag):
                nxt += self.coefs[i] @ hist[-1 - i]
            out.append(nxt)
            hist.append(nxt)
        return np.array(out)

    def forecast_windows(self, inputs, steps: int) -> np.ndarray:
        """Vectorised :meth:`forecast` over a stack of windows (W, T, N) -> (W, steps, N)."""
        inputs = np.asarray(inputs, dtype=float)
        hist = [inputs[:, -self.lag + i] for i in range(self.lag)]
        out = []
        for _ in range(steps):
            nxt = np.broadcast_to(self.intercept, hist[-1].shape).copy()
            for i in range(self.lag):
                nxt += hist[-1 - i] @ self.coefs[i].T
            out.append(nxt)
            hist.append(nxt)
        return np.stack(out, axis=1)
