"""Closed-form consensus functions ``chi(x) = E x`` and average-consensus checks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from .classify import SystemMatrix, classify_consensus
from .errors import InconsistencyError, InputError, StructuralError
from .linalg import (
    DEFAULT_TOL,
    HORIZON_CAP,
    TolerancePolicy,
    agreement_basis,
    convergence_horizon,
    eigenvalues,
    left_null_space_basis,
    matrix_exponential,
    numeric_rank,
    rank_chain,
    sigma_max,
    spectral_projector_onto_nullspace,
)
from .reports import Report

# T = F_1 + ... + F_n with condition number above this is treated as singular
_SINGULAR_COND = 1e12


@dataclass(frozen=True)
class ConsensusFunctional:
    """``chi(x) = E x`` together with how ``E`` was obtained.

    ``F`` holds the left-null rows used by the left-null construction, ``T``
    their block sum; both are ``None`` when ``E`` was read off the limit
    matrix instead.
    """

    E: np.ndarray
    limit: np.ndarray
    n: int
    m: int
    method: str
    F: np.ndarray | None = None
    T: np.ndarray | None = None
    T_inv: np.ndarray | None = None
    block_row_disparity: float = 0.0

    @property
    def E_blocks(self) -> list[np.ndarray]:
        return [self.E[:, i * self.m:(i + 1) * self.m] for i in range(self.n)]

    @property
    def F_blocks(self) -> list[np.ndarray] | None:
        if self.F is None:
            return None
        return [self.F[:, i * self.m:(i + 1) * self.m] for i in range(self.n)]

    def __call__(self, x) -> np.ndarray:
        return evaluate_chi(self, x)

    def to_dict(self) -> dict[str, Any]:
        out = {
            "method": self.method,
            "n": self.n,
            "m": self.m,
            "E": self.E.tolist(),
            "limit_rank": int(numeric_rank(self.limit)) if self.limit.size else 0,
            "block_row_disparity": self.block_row_disparity,
        }
        if self.F is not None:
            out["F"] = self.F.tolist()
            out["T"] = self.T.tolist()
        return out


@dataclass(frozen=True)
class WeightedAverage:
    """Scalar-agent consensus function ``sum(y_i x_i) / sum(y_i)``."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel().copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def normalizer(self) -> float:
        return float(np.sum(self.weights))

    @property
    def normalized(self) -> np.ndarray:
        return self.weights / self.normalizer

    def __call__(self, x) -> np.ndarray:
        return evaluate_chi(self, x)


def _require_consensus(sys: SystemMatrix, tol: TolerancePolicy, what: str):
    verdict = classify_consensus(sys, tol)
    if not verdict.yes:
        raise StructuralError(
            f"{what} requires a system that solves consensus; classifier says {verdict.solves!r}"
        )
    return verdict


def consensus_function_method1(
    sys: SystemMatrix,
    tol: TolerancePolicy = DEFAULT_TOL,
    left_null: np.ndarray | None = None,
) -> ConsensusFunctional:
    """Consensus function from any basis ``F`` of ``N(A^T)``: ``E = (F_1+...+F_n)^-1 F``.

    Applies when ``rank(A) = (n-1)m``. ``left_null`` overrides the SVD basis
    (rows must annihilate ``A`` and be linearly independent); the result does
    not depend on the choice.
    """
    verdict = _require_consensus(sys, tol, "the left-null construction")
    n, m = sys.n, sys.m
    if verdict.rank_A != (n - 1) * m:
        raise StructuralError(
            f"left-null construction needs rank(A) = (n-1)m = {(n - 1) * m}, got {verdict.rank_A}; "
            "use the limit construction (limit_expm) instead"
        )
    if left_null is None:
        F = left_null_space_basis(sys.A, tol)
    else:
        F = np.asarray(left_null, dtype=float)
        if F.shape != (m, n * m):
            raise InputError(f"left-null basis must have shape {(m, n * m)}, got {F.shape}")
        resid = float(np.max(np.abs(F @ sys.A))) if F.size else 0.0
        scale = max(sigma_max(sys.A), 1.0) * max(float(np.max(np.abs(F))), 1.0)
        if resid > tol.convergence_abs * scale:
            raise InputError(f"supplied rows do not annihilate A (max |F A| = {resid:.3g})")
        if numeric_rank(F, tol) != m:
            raise InputError("supplied left-null rows are linearly dependent")
    if F.shape[0] != m:
        raise InconsistencyError(f"left null space has dimension {F.shape[0]}, expected {m}")
    T = F @ agreement_basis(n, m)
    cond = np.linalg.cond(T)
    if not np.isfinite(cond) or cond > _SINGULAR_COND:
        raise InconsistencyError(
            f"block sum T = F_1+...+F_n is numerically singular (cond {cond:.3g}); "
            "the system was probably misclassified"
        )
    T_inv = np.linalg.inv(T)
    E = np.linalg.solve(T, F)
    return ConsensusFunctional(
        E=E,
        limit=np.tile(E, (n, 1)),
        n=n,
        m=m,
        method="left-null",
        F=F,
        T=T,
        T_inv=T_inv,
    )


def limit_expm(sys: SystemMatrix, tol: TolerancePolicy = DEFAULT_TOL, cross_check: bool = True) -> np.ndarray:
    """``lim_{t->inf} e^{At}`` computed as the spectral projector onto ``N(A)``.

    With ``cross_check`` the projector is compared with ``e^{At}`` at a
    horizon of 50 time constants of the slowest stable mode (capped at 1e4).
    """
    _require_consensus(sys, tol, "limit_expm")
    B = spectral_projector_onto_nullspace(sys.A, tol)
    t = convergence_horizon(eigenvalues(sys.A), tol)
    # a capped horizon leaves slow modes undecayed, so the comparison is meaningless
    if cross_check and t < HORIZON_CAP:
        finite = matrix_exponential(sys.A * t)
        err = float(np.max(np.abs(finite - B))) if B.size else 0.0
        if err > tol.convergence_abs * max(1.0, float(np.max(np.abs(B)))):
            raise InconsistencyError(
                f"spectral projector and e^(A*{t:.4g}) differ by {err:.3g}"
            )
    return B


def consensus_function_limit(sys: SystemMatrix, tol: TolerancePolicy = DEFAULT_TOL) -> ConsensusFunctional:
    """Consensus function read off the first block row of ``lim e^{At}``.

    Works for any kernel dimension ``r <= m``. Block rows of the limit are
    equal in exact arithmetic; the largest measured difference is recorded.
    """
    B = limit_expm(sys, tol)
    n, m = sys.n, sys.m
    rows = B.reshape(n, m, n * m)
    disparity = float(np.max(np.abs(rows - rows[0])))
    if disparity > tol.convergence_abs * max(1.0, float(np.max(np.abs(B)))):
        raise InconsistencyError(f"block rows of the limit matrix differ by {disparity:.3g}")
    return ConsensusFunctional(E=rows[0].copy(), limit=B, n=n, m=m, method="limit",
                               block_row_disparity=disparity)


def consensus_function_scalar(sys: SystemMatrix, tol: TolerancePolicy = DEFAULT_TOL) -> WeightedAverage:
    """Weighted-average consensus function for scalar agents (``m = 1``).

    Any nonzero ``y`` with ``y^T A = 0`` gives ``chi(x) = y.x / sum(y)``.
    """
    if sys.m != 1:
        raise InputError(f"weighted-average form needs m = 1, got m = {sys.m}")
    A = sys.A
    n = sys.n
    spec = eigenvalues(A)
    classes = spec.classes(tol)
    if "unstable" in classes:
        raise StructuralError("clause 1 violated: some eigenvalue is neither zero nor in the open left half-plane")
    if "zero" not in classes:
        raise StructuralError("no zero eigenvalue: every trajectory tends to 0 and chi is identically zero")
    ones = np.ones(n)
    scale = max(sigma_max(A), 1.0)
    if float(np.max(np.abs(A @ ones))) > tol.convergence_abs * scale:
        raise StructuralError("clause 2 violated: A 1 != 0")
    r_a, r_a2 = rank_chain(A, tol)
    if not r_a == r_a2 == n - 1:
        raise StructuralError(
            f"clause 2 violated: need rank(A^2) = rank(A) = n-1 = {n - 1}, got {r_a2} and {r_a}"
        )
    y = left_null_space_basis(A, tol)
    if y.shape[0] != 1:
        raise InconsistencyError(f"left null space has dimension {y.shape[0]}, expected 1")
    y = y[0]
    total = float(np.sum(y))
    if abs(total) <= tol.convergence_abs * float(np.linalg.norm(y)):
        raise InconsistencyError("left-null weights sum to zero; no weighted average exists")
    if total < 0:
        y = -y
    return WeightedAverage(y)


def check_average_consensus(sys: SystemMatrix, tol: TolerancePolicy = DEFAULT_TOL) -> Report:
    """Clause report for ``chi(x) = (x_1 + ... + x_n) / n``.

    Holds iff ``rank(A^2) = rank(A) = m(n-1)``, ``[I ... I] A = 0``,
    ``A [I ... I]^T = 0`` and the spectrum is ``m`` zeros plus stable modes.
    """
    A = sys.A
    n, m = sys.n, sys.m
    report = Report("average consensus")
    r_a, r_a2 = rank_chain(A, tol)
    report.add("rank(A^2) = rank(A) = m(n-1)", r_a == r_a2 == m * (n - 1),
               f"rank A = {r_a}, rank A^2 = {r_a2}, m(n-1) = {m * (n - 1)}")
    ones = agreement_basis(n, m)
    thresh = tol.convergence_abs * max(sigma_max(A), 1.0)
    left = float(np.max(np.abs(ones.T @ A)))
    right = float(np.max(np.abs(A @ ones)))
    if m == 1:
        left_name, right_name = "1^T A = 0", "A 1 = 0"
    else:
        left_name, right_name = "[I, ..., I] A = 0", "A [I, ..., I]^T = 0"
    report.add(left_name, left <= thresh, f"max residual {left:.3g}")
    report.add(right_name, right <= thresh, f"max residual {right:.3g}")
    classes = eigenvalues(A).classes(tol)
    n_zero, n_stable = classes.count("zero"), classes.count("stable")
    report.add("spectrum: m zero eigenvalues, the rest stable",
               n_zero == m and n_zero + n_stable == len(classes),
               f"{n_zero} zero, {n_stable} stable, {len(classes) - n_zero - n_stable} other")
    return report


def evaluate_chi(fn: ConsensusFunctional | WeightedAverage, x0) -> np.ndarray:
    """Group decision value reached from ``x0``."""
    x = np.asarray(x0, dtype=float).ravel()
    if isinstance(fn, WeightedAverage):
        if x.shape[0] != fn.weights.shape[0]:
            raise InputError(f"state has length {x.shape[0]}, weights have length {fn.weights.shape[0]}")
        return np.array([fn.weights @ x / fn.normalizer])
    if x.shape[0] != fn.E.shape[1]:
        raise InputError(f"state has length {x.shape[0]}, expected {fn.E.shape[1]}")
    return fn.E @ x
