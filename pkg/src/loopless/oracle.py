"""Finite-sum objectives f(x) = (1/n) sum_i f_i(x) with per-sample gradients.

Two losses over a sparse dataset (a_i, b_i), both carrying the ridge term
inside every f_i so each f_i is mu-strongly convex:

    logistic:  f_i(x) = log(1 + exp(-b_i a_i^T x)) + (mu/2)||x||^2
    ridge:     f_i(x) = (1/2)(a_i^T x - b_i)^2     + (mu/2)||x||^2

L is a cheap upper bound on every f_i's smoothness constant (max squared row
norm, scaled by the loss curvature bound, plus mu).

All margin and gradient arithmetic goes through one per-row scalar kernel, so
full_grad(x) agrees with grad_i(0, x) bitwise when n == 1 and the stored
full gradients the optimizers cache are reproducible.
"""

from __future__ import annotations

import math

import numpy as np

from .data import Dataset


def _softplus(t: float) -> float:
    # log(1 + e^t) without overflow
    return max(t, 0.0) + math.log1p(math.exp(-abs(t)))


def _sigmoid(t: float) -> float:
    if t >= 0.0:
        return 1.0 / (1.0 + math.exp(-t))
    e = math.exp(t)
    return e / (1.0 + e)


class Oracle:
    """Shared machinery; subclasses define the per-sample scalar loss."""

    loss_kind = "?"

    def __init__(self, dataset: Dataset, mu: float):
        if mu <= 0.0:
            raise ValueError(f"mu must be positive (strong convexity), got {mu}")
        self.dataset = dataset
        self.mu = float(mu)
        self.n = dataset.n
        self.d = dataset.d
        self.labels = dataset.labels
        # CSR-style row storage for cheap per-sample access
        self._indptr = np.zeros(self.n + 1, dtype=np.int64)
        for i, row in enumerate(dataset.rows):
            self._indptr[i + 1] = self._indptr[i] + row.nnz
        self._indices = np.concatenate(
            [r.indices for r in dataset.rows] or [np.array([], dtype=np.int64)]
        )
        self._values = np.concatenate(
            [r.values for r in dataset.rows] or [np.array([])]
        )
        # mostly-dense data gets dense row storage; per-sample ops then skip
        # the index gather, which matters in the per-step hot path
        density = self._indices.size / max(1, self.n * self.d)
        self._dense = None
        if density >= 0.25:
            self._dense = np.zeros((self.n, self.d))
            for i, row in enumerate(dataset.rows):
                self._dense[i, row.indices] = row.values
        max_sq = 0.0
        for row in dataset.rows:
            max_sq = max(max_sq, float(row.values @ row.values))
        self._max_row_sq = max_sq
        self.L = self._curvature_bound() * max_sq + self.mu
        if self.L < self.mu:
            raise AssertionError("L >= mu must hold by construction")

    # per-sample scalar pieces, in terms of the margin m = a_i^T x
    def _phi(self, m: float, b: float) -> float:
        raise NotImplementedError

    def _dphi(self, m: float, b: float) -> float:
        raise NotImplementedError

    def _curvature_bound(self) -> float:
        """Upper bound on phi'' over all margins."""
        raise NotImplementedError

    def _row(self, i: int):
        lo, hi = self._indptr[i], self._indptr[i + 1]
        return self._indices[lo:hi], self._values[lo:hi]

    def margin(self, i: int, x: np.ndarray) -> float:
        if self._dense is not None:
            return float(self._dense[i] @ x)
        idx, val = self._row(i)
        return float(val @ x[idx]) if idx.size else 0.0

    def loss_i(self, i: int, x: np.ndarray) -> float:
        if not 0 <= i < self.n:
            raise IndexError(f"sample index {i} out of range [0, {self.n})")
        return self._phi(self.margin(i, x), self.labels[i]) + 0.5 * self.mu * float(
            x @ x
        )

    def grad_i(self, i: int, x: np.ndarray) -> np.ndarray:
        if not 0 <= i < self.n:
            raise IndexError(f"sample index {i} out of range [0, {self.n})")
        out = self.mu * x
        if self._dense is not None:
            a = self._dense[i]
            out += self._dphi(float(a @ x), self.labels[i]) * a
            return out
        idx, val = self._row(i)
        if idx.size:
            m = float(val @ x[idx])
            out[idx] += self._dphi(m, self.labels[i]) * val
        return out

    def full_loss(self, x: np.ndarray) -> float:
        acc = 0.0
        for i in range(self.n):
            acc += self._phi(self.margin(i, x), self.labels[i])
        return acc / self.n + 0.5 * self.mu * float(x @ x)

    def full_grad(self, x: np.ndarray) -> np.ndarray:
        """(1/n) sum_i grad_i(i, x); costs n gradient calls in the accounting."""
        acc = np.zeros(self.d)
        if self._dense is not None:
            for i in range(self.n):
                a = self._dense[i]
                acc += self._dphi(float(a @ x), self.labels[i]) * a
        else:
            for i in range(self.n):
                idx, val = self._row(i)
                if idx.size:
                    m = float(val @ x[idx])
                    acc[idx] += self._dphi(m, self.labels[i]) * val
        return acc / self.n + self.mu * x

    def grad_table(self, x: np.ndarray) -> np.ndarray:
        """All per-sample gradients as an (n, d) array (diagnostics helper)."""
        out = np.empty((self.n, self.d))
        for i in range(self.n):
            out[i] = self.grad_i(i, x)
        return out

    def smoothness_constant(self) -> float:
        return self.L


class LogisticOracle(Oracle):
    loss_kind = "logistic"

    def _phi(self, m, b):
        return _softplus(-b * m)

    def _dphi(self, m, b):
        return -b * _sigmoid(-b * m)

    def _curvature_bound(self):
        return 0.25


class RidgeOracle(Oracle):
    loss_kind = "ridge"

    def _phi(self, m, b):
        r = m - b
        return 0.5 * r * r

    def _dphi(self, m, b):
        return m - b

    def _curvature_bound(self):
        return 1.0


_ORACLES = {"logistic": LogisticOracle, "ridge": RidgeOracle}


def make_oracle(dataset: Dataset, loss: str, mu: float) -> Oracle:
    try:
        cls = _ORACLES[loss]
    except KeyError:
        raise ValueError(f"unknown loss {loss!r}; expected one of {sorted(_ORACLES)}")
    return cls(dataset, mu)
