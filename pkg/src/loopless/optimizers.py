"""Stochastic finite-sum optimizers behind one stepping interface.

Five algorithms: gradient descent, SVRG and Katyusha with deterministic
reference refresh every m inner steps, and their loopless variants where the
refresh is triggered by a per-step Bernoulli(p) coin.

Shared conventions:
  * every optimizer holds an immutable oracle and exposes step(rng),
    tracked_point, oracle_calls, and epoch == oracle_calls / n;
  * each stochastic step draws the sample index first and the coin second
    from the same stream, and costs 2 stochastic-gradient calls plus n on a
    reference refresh; initialization costs n (the first full gradient);
  * the coin/loop refresh stores the PRE-update iterate (w <- x^k for the
    SVRG family, w <- y^k for the Katyusha family), exactly as the loopless
    recursions are defined;
  * the variance-reduced direction is formed as
        g = grad_i(x) - (grad_i(w) - grad_w)
    so the correction vanishes exactly (bitwise) when n == 1 and at w == x.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .oracle import Oracle
from .rng import SplitMix64


def _check_prob(p: float) -> float:
    if not 0.0 < p <= 1.0:
        raise ValueError(f"probability must lie in (0, 1], got {p}")
    return float(p)


def _check_positive(value: float, name: str) -> float:
    if value <= 0.0:
        raise ValueError(f"{name} must be positive, got {value}")
    return float(value)


def gd_step(x: np.ndarray, oracle: Oracle, step: float) -> np.ndarray:
    """One full-gradient descent step x - step * grad f(x)."""
    _check_positive(step, "step")
    return x - step * oracle.full_grad(x)


class GradientDescent:
    """Full-gradient baseline; n oracle calls per step (and at init)."""

    name = "gd"

    def __init__(self, oracle: Oracle, x0: np.ndarray, step_size: float):
        self.oracle = oracle
        self.step_size = _check_positive(step_size, "step_size")
        self.x = np.array(x0, dtype=np.float64)
        self.grad = oracle.full_grad(self.x)
        self.k = 0
        self.oracle_calls = oracle.n

    def step(self, rng=None):
        self.x = self.x - self.step_size * self.grad
        self.grad = self.oracle.full_grad(self.x)
        self.oracle_calls += self.oracle.n
        self.k += 1

    @property
    def tracked_point(self) -> np.ndarray:
        return self.x

    @property
    def epoch(self) -> float:
        return self.oracle_calls / self.oracle.n


class LSVRG:
    """Loopless SVRG: coin-triggered reference refresh, w^{k+1} = x^k."""

    name = "l-svrg"

    def __init__(self, oracle: Oracle, x0: np.ndarray, eta: float, p: float):
        self.oracle = oracle
        self.eta = _check_positive(eta, "eta")
        self.p = _check_prob(p)
        self.x = np.array(x0, dtype=np.float64)
        self.w = self.x
        self.grad_w = oracle.full_grad(self.w)
        self.k = 0
        self.oracle_calls = oracle.n

    @classmethod
    def theory(cls, oracle: Oracle, x0: np.ndarray) -> "LSVRG":
        params = lsvrg_theory_params(oracle)
        return cls(oracle, x0, **params)

    def step(self, rng: SplitMix64):
        oracle = self.oracle
        i = rng.randbelow(oracle.n)
        correction = oracle.grad_i(i, self.w) - self.grad_w
        g = oracle.grad_i(i, self.x) - correction
        x_prev = self.x
        self.x = x_prev - self.eta * g
        self.oracle_calls += 2
        if rng.bernoulli(self.p):
            self.w = x_prev
            self.grad_w = oracle.full_grad(self.w)
            self.oracle_calls += oracle.n
        self.k += 1

    @property
    def tracked_point(self) -> np.ndarray:
        return self.x

    @property
    def epoch(self) -> float:
        return self.oracle_calls / self.oracle.n


class LKatyusha:
    """Loopless Katyusha: negative momentum toward w, coin refresh w^{k+1} = y^k."""

    name = "l-katyusha"

    def __init__(
        self,
        oracle: Oracle,
        x0: np.ndarray,
        theta1: float,
        theta2: float,
        p: float,
    ):
        _check_positive(theta1, "theta1")
        _check_positive(theta2, "theta2")
        if theta1 + theta2 > 1.0:
            raise ValueError(
                f"theta1 + theta2 must be <= 1, got {theta1} + {theta2}"
            )
        self.oracle = oracle
        self.theta1 = float(theta1)
        self.theta2 = float(theta2)
        self.p = _check_prob(p)
        self.sigma = oracle.mu / oracle.L
        self.eta = theta2 / ((1.0 + theta2) * theta1)
        self.y = np.array(x0, dtype=np.float64)
        self.z = self.y
        self.w = self.y
        self.grad_w = oracle.full_grad(self.w)
        self.k = 0
        self.oracle_calls = oracle.n

    @classmethod
    def theory(cls, oracle: Oracle, x0: np.ndarray) -> "LKatyusha":
        params = lkatyusha_theory_params(oracle)
        return cls(oracle, x0, **params)

    def interpolate(self) -> np.ndarray:
        """x^k = theta1 z + theta2 w + (1 - theta1 - theta2) y."""
        return (
            self.theta1 * self.z
            + self.theta2 * self.w
            + (1.0 - self.theta1 - self.theta2) * self.y
        )

    def step(self, rng: SplitMix64):
        oracle = self.oracle
        x = self.interpolate()
        i = rng.randbelow(oracle.n)
        correction = oracle.grad_i(i, self.w) - self.grad_w
        g = oracle.grad_i(i, x) - correction
        eta_sigma = self.eta * self.sigma
        z_next = (eta_sigma * x + self.z - (self.eta / oracle.L) * g) / (
            1.0 + eta_sigma
        )
        y_next = x + self.theta1 * (z_next - self.z)
        self.oracle_calls += 2
        if rng.bernoulli(self.p):
            self.w = self.y
            self.grad_w = oracle.full_grad(self.w)
            self.oracle_calls += oracle.n
        self.z = z_next
        self.y = y_next
        self.k += 1

    @property
    def tracked_point(self) -> np.ndarray:
        return self.y

    @property
    def epoch(self) -> float:
        return self.oracle_calls / self.oracle.n


class LoopySVRG:
    """Original SVRG loop structure: refresh w <- x^k every m steps."""

    name = "svrg"

    def __init__(self, oracle: Oracle, x0: np.ndarray, eta: float, m: int):
        if m < 1:
            raise ValueError(f"inner loop length m must be >= 1, got {m}")
        self.oracle = oracle
        self.eta = _check_positive(eta, "eta")
        self.m = int(m)
        self.j = 0
        self.x = np.array(x0, dtype=np.float64)
        self.w = self.x
        self.grad_w = oracle.full_grad(self.w)
        self.k = 0
        self.oracle_calls = oracle.n

    @classmethod
    def theory(cls, oracle: Oracle, x0: np.ndarray) -> "LoopySVRG":
        params = loopy_svrg_theory_params(oracle)
        return cls(oracle, x0, **params)

    def step(self, rng: SplitMix64):
        oracle = self.oracle
        i = rng.randbelow(oracle.n)
        correction = oracle.grad_i(i, self.w) - self.grad_w
        g = oracle.grad_i(i, self.x) - correction
        x_prev = self.x
        self.x = x_prev - self.eta * g
        self.oracle_calls += 2
        self.j += 1
        if self.j == self.m:
            self.w = x_prev
            self.grad_w = oracle.full_grad(self.w)
            self.oracle_calls += oracle.n
            self.j = 0
        self.k += 1

    @property
    def tracked_point(self) -> np.ndarray:
        return self.x

    @property
    def epoch(self) -> float:
        return self.oracle_calls / self.oracle.n


class LoopyKatyusha:
    """Katyusha with a deterministic loop: refresh w <- y^k every m steps."""

    name = "katyusha"

    def __init__(
        self,
        oracle: Oracle,
        x0: np.ndarray,
        theta1: float,
        theta2: float,
        m: int,
    ):
        _check_positive(theta1, "theta1")
        _check_positive(theta2, "theta2")
        if theta1 + theta2 > 1.0:
            raise ValueError(
                f"theta1 + theta2 must be <= 1, got {theta1} + {theta2}"
            )
        if m < 1:
            raise ValueError(f"inner loop length m must be >= 1, got {m}")
        self.oracle = oracle
        self.theta1 = float(theta1)
        self.theta2 = float(theta2)
        self.m = int(m)
        self.j = 0
        self.sigma = oracle.mu / oracle.L
        self.eta = theta2 / ((1.0 + theta2) * theta1)
        self.y = np.array(x0, dtype=np.float64)
        self.z = self.y
        self.w = self.y
        self.grad_w = oracle.full_grad(self.w)
        self.k = 0
        self.oracle_calls = oracle.n

    @classmethod
    def theory(cls, oracle: Oracle, x0: np.ndarray) -> "LoopyKatyusha":
        params = loopy_katyusha_theory_params(oracle)
        return cls(oracle, x0, **params)

    def interpolate(self) -> np.ndarray:
        return (
            self.theta1 * self.z
            + self.theta2 * self.w
            + (1.0 - self.theta1 - self.theta2) * self.y
        )

    def step(self, rng: SplitMix64):
        oracle = self.oracle
        x = self.interpolate()
        i = rng.randbelow(oracle.n)
        correction = oracle.grad_i(i, self.w) - self.grad_w
        g = oracle.grad_i(i, x) - correction
        eta_sigma = self.eta * self.sigma
        z_next = (eta_sigma * x + self.z - (self.eta / oracle.L) * g) / (
            1.0 + eta_sigma
        )
        y_next = x + self.theta1 * (z_next - self.z)
        self.oracle_calls += 2
        self.j += 1
        if self.j == self.m:
            self.w = self.y
            self.grad_w = oracle.full_grad(self.w)
            self.oracle_calls += oracle.n
            self.j = 0
        self.z = z_next
        self.y = y_next
        self.k += 1

    @property
    def tracked_point(self) -> np.ndarray:
        return self.y

    @property
    def epoch(self) -> float:
        return self.oracle_calls / self.oracle.n


def lsvrg_theory_params(oracle: Oracle) -> dict:
    return {"eta": 1.0 / (6.0 * oracle.L), "p": 1.0 / oracle.n}


def lkatyusha_theory_params(oracle: Oracle) -> dict:
    sigma = oracle.mu / oracle.L
    theta1 = min(math.sqrt(2.0 * sigma * oracle.n / 3.0), 0.5)
    return {"theta1": theta1, "theta2": 0.5, "p": 1.0 / oracle.n}


def loopy_svrg_theory_params(oracle: Oracle) -> dict:
    # matched comparison: m = ceil(1/p) at the loopless preset p = 1/n
    return {"eta": 1.0 / (6.0 * oracle.L), "m": oracle.n}


def loopy_katyusha_theory_params(oracle: Oracle) -> dict:
    params = lkatyusha_theory_params(oracle)
    return {"theta1": params["theta1"], "theta2": params["theta2"], "m": oracle.n}


def gd_theory_params(oracle: Oracle) -> dict:
    return {"step_size": 1.0 / oracle.L}


def lsvrg_predicted_rate(eta: float, mu: float, p: float) -> float:
    """Per-step contraction factor of the L-SVRG Lyapunov bound."""
    return max(1.0 - eta * mu, 1.0 - p / 2.0)


def lkatyusha_predicted_rate(sigma: float, theta1: float, n: int) -> float:
    """Per-step contraction factor of the L-Katyusha Lyapunov bound."""
    return 1.0 - min(sigma / (6.0 * theta1), theta1 / (2.0 * n))


ALGORITHMS = {
    "gd": GradientDescent,
    "svrg": LoopySVRG,
    "l-svrg": LSVRG,
    "katyusha": LoopyKatyusha,
    "l-katyusha": LKatyusha,
}

THEORY_PARAMS = {
    "gd": gd_theory_params,
    "svrg": loopy_svrg_theory_params,
    "l-svrg": lsvrg_theory_params,
    "katyusha": loopy_katyusha_theory_params,
    "l-katyusha": lkatyusha_theory_params,
}


@dataclass
class TraceRecord:
    """Metrics snapshot at one checkpoint."""

    k: int
    oracle_calls: int
    epoch: float
    dist_sq: float | None = None
    f_gap: float | None = None
    lyapunov: object | None = None
    lemma_slacks: dict | None = None
    wall_ns: int = 0
    extras: dict = field(default_factory=dict)


def run(
    optimizer,
    rng: SplitMix64 | None,
    *,
    epochs: float,
    checkpoint_every: float = 1.0,
    metrics=None,
    hook=None,
) -> list[TraceRecord]:
    """Drive an optimizer until its epoch counter reaches the budget.

    Records the initial state and then one TraceRecord each time the epoch
    counter crosses a multiple of checkpoint_every (and at the final step).
    metrics(optimizer) may return a dict of TraceRecord field overrides;
    hook(optimizer) is called with the live optimizer at every checkpoint and
    must treat it as read-only.  Deterministic given (optimizer state, rng).
    """
    if epochs < 0:
        raise ValueError(f"epoch budget must be >= 0, got {epochs}")
    if checkpoint_every <= 0:
        raise ValueError(f"checkpoint_every must be positive, got {checkpoint_every}")

    t0 = time.perf_counter_ns()

    def record() -> TraceRecord:
        rec = TraceRecord(
            k=optimizer.k,
            oracle_calls=optimizer.oracle_calls,
            epoch=optimizer.epoch,
            wall_ns=time.perf_counter_ns() - t0,
        )
        if metrics is not None:
            for key, value in metrics(optimizer).items():
                setattr(rec, key, value)
        if hook is not None:
            hook(optimizer)
        return rec

    records = [record()]
    next_mark = (math.floor(optimizer.epoch / checkpoint_every) + 1) * checkpoint_every
    while optimizer.epoch < epochs:
        optimizer.step(rng)
        if optimizer.epoch >= next_mark or optimizer.epoch >= epochs:
            records.append(record())
            while next_mark <= optimizer.epoch:
                next_mark += checkpoint_every
    return records
