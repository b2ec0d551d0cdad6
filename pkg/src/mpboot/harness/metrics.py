"""Learning curves, normalisation and cross-seed aggregation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class AggregationError(ValueError):
    pass


def normalize(returns, floor, best):
    """``(ret - floor) / (best - floor)``; a flat problem (best == floor) maps to 0."""
    returns = np.asarray(returns, dtype=float)
    span = best - floor
    if span == 0:
        return np.zeros_like(returns)
    return (returns - floor) / span


@dataclass
class LearningCurve:
    """Evaluation returns, shape (n_seeds, n_epochs + 1)."""
    seeds: tuple
    returns: np.ndarray
    floor: float
    best: float

    @property
    def normalized(self) -> np.ndarray:
        return normalize(self.returns, self.floor, self.best)

    @property
    def n_epochs(self) -> int:
        return self.returns.shape[1] - 1

    def rows(self):
        norm = self.normalized
        for i, s in enumerate(self.seeds):
            for e in range(self.returns.shape[1]):
                yield (int(s), e, float(self.returns[i, e]), float(norm[i, e]))


CURVE_COLUMNS = ("seed", "epoch", "mean_return", "normalized_return")


@dataclass
class AggregateTable:
    epochs: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n: int


def aggregate(curves) -> AggregateTable:
    """Per-epoch mean and standard error (sample std / sqrt(n)) across seeds.

    ``curves`` is a sequence of per-seed arrays, a 2-D array (seed, epoch) or
    a mapping seed -> array.
    """
    if isinstance(curves, dict):
        curves = [curves[k] for k in sorted(curves)]
    curves = [np.asarray(c, dtype=float).reshape(-1) for c in curves]
    if len(curves) < 2:
        raise AggregationError("need at least two seeds to aggregate")
    lengths = {len(c) for c in curves}
    if len(lengths) != 1:
        raise AggregationError(f"curves have different epoch counts: {sorted(lengths)}")
    data = np.stack(curves)
    n = len(data)
    return AggregateTable(np.arange(data.shape[1]), data.mean(0),
                          data.std(0, ddof=1) / np.sqrt(n), n)
