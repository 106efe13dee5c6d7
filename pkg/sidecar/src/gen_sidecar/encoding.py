"""Transforms between table values and model space.

Numeric columns are standardized for training and de-standardized (with a
clip to the observed range) on the way out. Discrete columns are not modelled
by the networks at all: whole discrete rows are drawn from their empirical
joint law and enter the networks only as a conditioning one-hot vector. That
choice pins every discrete marginal, the outcome rate in particular, to the
training data up to multinomial noise, while the networks carry the numeric
structure given the discrete part.
"""

from __future__ import annotations

import numpy as np

from .tabular import SidecarError


class NumericEncoder:
    """Per-column standardization with range-clipped decoding."""

    def __init__(self, names: list[str], mean, std, low, high):
        self.names = list(names)
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = np.asarray(std, dtype=np.float64)
        self.low = np.asarray(low, dtype=np.float64)
        self.high = np.asarray(high, dtype=np.float64)

    @classmethod
    def fit(cls, names: list[str], matrix: np.ndarray) -> "NumericEncoder":
        if matrix.shape[1] != len(names):
            raise SidecarError("numeric matrix does not match column names")
        if len(names) == 0:
            z = np.zeros(0)
            return cls(names, z, z, z, z)
        return cls(names, matrix.mean(axis=0), matrix.std(axis=0),
                   matrix.min(axis=0), matrix.max(axis=0))

    @property
    def width(self) -> int:
        return len(self.names)

    def _scale(self) -> np.ndarray:
        # constant columns standardize to zero and decode back to the constant
        return np.where(self.std > 0.0, self.std, 1.0)

    def transform(self, matrix: np.ndarray) -> np.ndarray:
        return (matrix - self.mean) / self._scale()

    def inverse(self, matrix: np.ndarray) -> np.ndarray:
        return np.clip(matrix * self._scale() + self.mean, self.low, self.high)

    def to_json(self) -> dict:
        return {
            "names": self.names,
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "low": self.low.tolist(),
            "high": self.high.tolist(),
        }

    @classmethod
    def from_json(cls, payload: dict) -> "NumericEncoder":
        return cls(payload["names"], payload["mean"], payload["std"],
                   payload["low"], payload["high"])


class DiscreteJoint:
    """Empirical joint law of the discrete columns.

    ``rows`` holds the distinct observed code combinations, one per row, and
    ``probs`` their observed frequencies. With no discrete columns the law is
    a single empty row with probability one, so callers need no special case.
    """

    def __init__(self, names: list[str], supports: list[int], rows, probs):
        self.names = list(names)
        self.supports = [int(s) for s in supports]
        self.probs = np.asarray(probs, dtype=np.float64)
        # explicit row count: reshape(-1, 0) is ambiguous for empty schemas
        self.rows = np.asarray(rows, dtype=np.int64).reshape(len(self.probs), len(self.names))

    @classmethod
    def from_codes(cls, names: list[str], supports: list[int], codes: np.ndarray) -> "DiscreteJoint":
        m = len(codes)
        if len(names) == 0:
            return cls(names, supports, np.zeros((1, 0)), [1.0])
        rows, counts = np.unique(codes.astype(np.int64), axis=0, return_counts=True)
        return cls(names, supports, rows, counts / m)

    @property
    def cond_dim(self) -> int:
        return sum(self.supports)

    def one_hot(self, codes: np.ndarray) -> np.ndarray:
        codes = np.asarray(codes, dtype=np.int64).reshape(len(codes), len(self.names))
        out = np.zeros((len(codes), self.cond_dim), dtype=np.float32)
        offset = 0
        for j, support in enumerate(self.supports):
            out[np.arange(len(codes)), offset + codes[:, j]] = 1.0
            offset += support
        return out

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        idx = rng.choice(len(self.probs), size=n, p=self.probs)
        return self.rows[idx]

    def to_json(self) -> dict:
        return {
            "names": self.names,
            "supports": self.supports,
            "rows": self.rows.tolist(),
            "probs": self.probs.tolist(),
        }

    @classmethod
    def from_json(cls, payload: dict) -> "DiscreteJoint":
        return cls(payload["names"], payload["supports"], payload["rows"], payload["probs"])
