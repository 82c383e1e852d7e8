"""Long-horizon simulation oracle for consensus, independent of the classifier.

It propagates random initial states through ``e^{At}`` at a long horizon
``t`` and checks that the result is stationary (``x(2t) ~ x(t)``) and an
agreement state. The exponential is evaluated by mpmath in 40-digit
arithmetic: at horizons of 50 slow time constants, double-precision scaling
and squaring of a non-normal ``A`` loses roughly ``2^s cond(T)^2 eps``,
which can exceed the 1e-6 decision threshold. Nothing from the classifier
or the double-precision kernels in :mod:`linconsensus.linalg` is used.
"""

from __future__ import annotations

from dataclasses import dataclass

import mpmath
import numpy as np

_DPS = 40


@dataclass(frozen=True)
class OracleResult:
    solves: bool
    horizon: float
    stationary: bool
    agreement: bool
    worst_drift: float
    worst_spread: float


def long_horizon(A: np.ndarray, factor: float = 50.0, cap: float = 1e4) -> float:
    lam = np.linalg.eigvals(A)
    scale = max(float(np.linalg.norm(A, 2)), 1.0)
    decay = -lam.real[lam.real < -1e-7 * scale]
    if decay.size == 0:
        return 1.0
    return float(min(factor / decay.min(), cap))


def simulation_oracle(A, n: int, m: int, trials: int = 20, seed=0, rtol: float = 1e-6) -> OracleResult:
    """Does ``x' = Ax`` reach an agreement equilibrium from ``trials`` random states?"""
    A = np.asarray(A, dtype=float)
    k = n * m
    t = long_horizon(A)
    rng = np.random.default_rng(seed)
    X0 = rng.standard_normal((k, trials))
    with mpmath.workdps(_DPS):
        phi = mpmath.expm(mpmath.matrix(A.tolist()) * t)
        X1 = phi * mpmath.matrix(X0.tolist())
        X2 = phi * X1
        drift = np.empty(trials)
        spread = np.empty(trials)
        for c in range(trials):
            norm0 = max(1.0, float(np.linalg.norm(X0[:, c])))
            d = mpmath.sqrt(mpmath.fsum((X2[i, c] - X1[i, c]) ** 2 for i in range(k)))
            s = max(abs(X1[b * m + j, c] - X1[j, c]) for b in range(n) for j in range(m))
            drift[c] = float(d / norm0)
            spread[c] = float(s / norm0)
    stationary = bool(np.all(drift <= rtol))
    agreement = bool(np.all(spread <= rtol))
    return OracleResult(
        solves=stationary and agreement,
        horizon=t,
        stationary=stationary,
        agreement=agreement,
        worst_drift=float(drift.max()),
        worst_spread=float(spread.max()),
    )
