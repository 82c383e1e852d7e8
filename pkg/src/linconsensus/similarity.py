"""Consensus systems built as ``A = T^-1 J T`` with ``J = diag(0_r, M)``.

A block transform ``T`` produces a consensus system when every block row but
the first sums to zero and both ``T_U`` (first block-row sum) and ``T_D``
(trailing ``(n-1)m`` principal submatrix) are invertible. The system is an
average-consensus system when additionally ``r = m`` and the first block row
is constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chi import check_average_consensus
from .classify import SystemMatrix, classify_consensus
from .errors import (
    ConditioningError,
    GenerationError,
    InconsistencyError,
    InputError,
    StructuralError,
)
from .linalg import (
    DEFAULT_TOL,
    TolerancePolicy,
    as_square,
    block_view,
    eigenvalues,
    null_space_basis,
    numeric_rank,
    range_basis,
    sigma_max,
)
from .reports import Report

GENERATION_COND = 1e6
SYNTHESIS_COND = 1e8
STABLE_EPS = 0.1


@dataclass(frozen=True)
class CanonicalForm:
    """``J = diag(0_{r x r}, M)`` with ``M`` strictly stable."""

    r: int
    M: np.ndarray

    def __post_init__(self):
        if int(self.r) != self.r or self.r < 1:
            raise InputError(f"canonical form needs a zero block of size r >= 1, got r = {self.r}")
        M = as_square(self.M, "M").copy()
        if M.size:
            spec = eigenvalues(M)
            if any(c != "stable" for c in spec.classes(DEFAULT_TOL)):
                raise InputError("M must have every eigenvalue in the open left half-plane")
        M.setflags(write=False)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "r", int(self.r))

    @property
    def order(self) -> int:
        return self.r + self.M.shape[0]

    @property
    def J(self) -> np.ndarray:
        J = np.zeros((self.order, self.order))
        J[self.r:, self.r:] = self.M
        return J


@dataclass(frozen=True)
class StructuredTransform:
    T: np.ndarray
    n: int
    m: int

    def __post_init__(self):
        T = as_square(self.T, "T").copy()
        if T.shape[0] != self.n * self.m:
            raise InputError(f"T has order {T.shape[0]}, expected n*m = {self.n * self.m}")
        T.setflags(write=False)
        object.__setattr__(self, "T", T)

    @property
    def blocks(self) -> np.ndarray:
        return block_view(self.T, self.n, self.m)

    @property
    def T_U(self) -> np.ndarray:
        return self.blocks[0].sum(axis=0)

    @property
    def T_D(self) -> np.ndarray:
        return self.T[self.m:, self.m:]


def _invertible(X: np.ndarray, tol: TolerancePolicy) -> tuple[bool, float]:
    if X.size == 0:
        return True, 1.0
    return numeric_rank(X, tol) == X.shape[0], float(np.linalg.cond(X))


def verify_transform(T, n: int, m: int, average: bool = False, tol: TolerancePolicy = DEFAULT_TOL) -> Report:
    """Check the block structure that makes ``T^-1 J T`` a consensus system."""
    st = T if isinstance(T, StructuredTransform) else StructuredTransform(T, n, m)
    blocks = st.blocks
    report = Report("average-form transform" if average else "consensus transform")
    scale = max(1.0, float(np.max(np.abs(st.T))))
    sums = [blocks[i].sum(axis=0) for i in range(1, n)]
    worst = max(float(np.max(np.abs(s))) for s in sums)
    report.add("block rows 2..n sum to zero", worst <= tol.convergence_abs * scale,
               f"max |sum_j T_ij| = {worst:.3g}")
    ok, cond = _invertible(st.T_U, tol)
    report.add("T_U = sum_j T_1j invertible", ok, f"cond {cond:.3g}")
    ok, cond = _invertible(st.T_D, tol)
    report.add("T_D invertible", ok, f"cond {cond:.3g}")
    if average:
        first = blocks[0]
        spread = max(float(np.max(np.abs(first[j] - first[0]))) for j in range(n))
        report.add("first block row constant (T_11 = ... = T_1n)",
                   spread <= tol.convergence_abs * scale, f"max spread {spread:.3g}")
        ok, cond = _invertible(first[0], tol)
        report.add("T_11 invertible", ok, f"cond {cond:.3g}")
    return report


def _well_conditioned(rng, shape, limit=GENERATION_COND, tries=100) -> np.ndarray:
    for _ in range(tries):
        X = rng.standard_normal(shape)
        if np.linalg.cond(X) < limit:
            return X
    raise GenerationError(f"no {shape} sample with condition number below {limit:g} in {tries} tries")


def construct_transform(n: int, m: int, seed=None, average: bool = False, max_tries: int = 100) -> StructuredTransform:
    """Random transform satisfying the consensus block conditions.

    ``T_D`` and the free first-row blocks are Gaussian, resampled until their
    condition numbers (and that of ``T``) fall below 1e6; ``T_i1`` is then
    fixed by the zero row-sum constraint.
    """
    if n < 2 or m < 1:
        raise InputError(f"need n >= 2 and m >= 1, got n={n}, m={m}")
    rng = np.random.default_rng(seed)
    k = n * m
    for _ in range(max_tries):
        T = np.zeros((k, k))
        T[m:, m:] = _well_conditioned(rng, ((n - 1) * m, (n - 1) * m), tries=max_tries)
        for i in range(1, n):
            rows = slice(i * m, (i + 1) * m)
            T[rows, :m] = -T[rows, m:].reshape(m, n - 1, m).sum(axis=1)
        if average:
            K = _well_conditioned(rng, (m, m), tries=max_tries)
            T[:m, :] = np.tile(K, (1, n))
        else:
            for _ in range(max_tries):
                first = rng.standard_normal((m, k))
                if np.linalg.cond(first.reshape(m, n, m).sum(axis=1)) < GENERATION_COND:
                    break
            else:
                raise GenerationError(f"could not sample an invertible T_U in {max_tries} tries")
            T[:m, :] = first
        if np.linalg.cond(T) < GENERATION_COND:
            return StructuredTransform(T, n, m)
    raise GenerationError(f"could not sample a transform with cond < {GENERATION_COND:g} in {max_tries} tries")


def random_stable_matrix(order: int, seed=None, eps: float = STABLE_EPS, rotate: bool = True) -> np.ndarray:
    """``-(Q^T Q + eps I)``, optionally conjugated by a random orthogonal matrix."""
    rng = np.random.default_rng(seed)
    Q = rng.standard_normal((order, order))
    M = -(Q.T @ Q + eps * np.eye(order))
    if rotate and order > 0:
        U, _ = np.linalg.qr(rng.standard_normal((order, order)))
        M = U.T @ M @ U
        M = 0.5 * (M + M.T)
    return M


def similarity_transform(A, T) -> np.ndarray:
    """``T^-1 A T`` without any structural checks."""
    T = np.asarray(T, dtype=float)
    return np.linalg.solve(T, np.asarray(A, dtype=float) @ T)


def synthesize_system(
    T: StructuredTransform,
    J: CanonicalForm,
    tol: TolerancePolicy = DEFAULT_TOL,
    verify: bool = True,
) -> SystemMatrix:
    """``A = T^-1 J T``; the result solves consensus with ``dim N(A) = r``."""
    n, m = T.n, T.m
    if J.order != n * m:
        raise InputError(f"J has order {J.order}, T has order {n * m}")
    if J.r > m:
        raise StructuralError(f"zero block r = {J.r} exceeds m = {m}; kernel cannot consist of agreement states")
    report = verify_transform(T, n, m, tol=tol)
    if not report.passed:
        names = ", ".join(c.name for c in report.failures())
        if J.r < m:
            # for r < m the structural clauses are only sufficient
            raise StructuralError(f"transform violates: {names}; outcome not determined by the sufficient conditions")
        raise StructuralError(f"transform violates: {names}")
    cond = float(np.linalg.cond(T.T))
    if not np.isfinite(cond) or cond > SYNTHESIS_COND:
        raise ConditioningError(f"cond(T) = {cond:.3g} exceeds {SYNTHESIS_COND:g}")
    sys = SystemMatrix(similarity_transform(J.J, T.T), n, m)
    if verify:
        verdict = classify_consensus(sys, tol)
        if not verdict.yes or verdict.dimN_A != J.r:
            raise InconsistencyError(
                f"synthesized system classified {verdict.solves!r} with dim N(A) = {verdict.dimN_A}, "
                f"expected 'yes' with {J.r}"
            )
    return sys


def bring_to_canonical(sys: SystemMatrix, tol: TolerancePolicy = DEFAULT_TOL) -> tuple[np.ndarray, CanonicalForm]:
    """``T1 = [basis N(A) | basis R(A)]`` so that ``T1^-1 A T1 = diag(0_r, M)``."""
    verdict = classify_consensus(sys, tol)
    if not verdict.yes:
        raise StructuralError(f"system does not solve consensus (classifier says {verdict.solves!r})")
    A = sys.A
    U = null_space_basis(A, tol)
    r = U.shape[1]
    if r == 0:
        raise StructuralError("A has no zero eigenvalue; its canonical form is trivial (M = A)")
    W = range_basis(A, tol)
    T1 = np.hstack([U, W])
    B = similarity_transform(A, T1)
    leak = max(float(np.max(np.abs(B[:, :r]))), float(np.max(np.abs(B[:r, :]))))
    if leak > tol.convergence_abs * max(1.0, sigma_max(A)):
        raise InconsistencyError(f"T1^-1 A T1 is not block diagonal (off-block residual {leak:.3g})")
    return T1, CanonicalForm(r, B[r:, r:])


def retarget_to_average(
    sys: SystemMatrix,
    tol: TolerancePolicy = DEFAULT_TOL,
    seed=None,
    T1=None,
    T2=None,
) -> tuple[np.ndarray, SystemMatrix]:
    """Find ``T`` such that ``T^-1 A T`` solves the average consensus problem.

    ``T = T1 T2`` where ``T1`` brings ``A`` to canonical form and ``T2`` has a
    constant first block row. Either factor may be supplied; otherwise
    ``T1`` comes from :func:`bring_to_canonical` and ``T2`` is drawn with
    ``seed``.
    """
    n, m = sys.n, sys.m
    verdict = classify_consensus(sys, tol)
    if not verdict.yes:
        raise StructuralError(f"system does not solve consensus (classifier says {verdict.solves!r})")
    if verdict.dimN_A != m:
        raise StructuralError(
            f"average retargeting needs dim N(A) = m = {m}, got {verdict.dimN_A}"
        )
    A = sys.A
    if T1 is None:
        T1, _ = bring_to_canonical(sys, tol)
    else:
        T1 = as_square(T1, "T1")
        B = similarity_transform(A, T1)
        leak = max(float(np.max(np.abs(B[:, :m]))), float(np.max(np.abs(B[:m, :]))))
        if leak > tol.convergence_abs * max(1.0, sigma_max(A)):
            raise StructuralError(f"T1^-1 A T1 is not of the form diag(0_m, M) (residual {leak:.3g})")
    if T2 is None:
        T2 = construct_transform(n, m, seed, average=True).T
    else:
        T2 = as_square(T2, "T2")
        report = verify_transform(T2, n, m, average=True, tol=tol)
        if not report.passed:
            names = ", ".join(c.name for c in report.failures())
            raise StructuralError(f"T2 violates: {names}")
    T = T1 @ T2
    out = SystemMatrix(similarity_transform(A, T), n, m)
    check = check_average_consensus(out, tol)
    if not check.passed:
        raise InconsistencyError("retargeted system fails the average-consensus check:\n" + check.format())
    return T, out


def random_consensus_system(
    n: int, m: int, seed=None, r: int | None = None, average: bool = False,
    tol: TolerancePolicy = DEFAULT_TOL, verify: bool = True,
) -> tuple[SystemMatrix, StructuredTransform, CanonicalForm]:
    """A system that solves consensus by construction, with its ``T`` and ``J``.

    With ``verify=False`` the classifier is not consulted, which is what
    labeled test corpora need.
    """
    r = m if r is None else r
    rng = np.random.default_rng(seed)
    T = construct_transform(n, m, rng, average=average)
    J = CanonicalForm(r, random_stable_matrix(n * m - r, rng))
    return synthesize_system(T, J, tol, verify=verify), T, J


NONCONSENSUS_KINDS = ("unstable", "defective", "kernel")


def random_nonconsensus_system(n: int, m: int, seed=None, kind: str = "unstable") -> SystemMatrix:
    """A system that fails consensus by construction.

    ``unstable``
        one eigenvalue of the stable block moved to ``+c``, ``c`` in [0.5, 2],
        by a rank-1 update;
    ``defective``
        the zero eigenvalue carries a 2x2 Jordan block, so
        ``rank(A^2) < rank(A)``;
    ``kernel``
        the last block row of ``T`` sums to an invertible matrix, so no
        nonzero kernel vector is an agreement state.
    """
    if kind not in NONCONSENSUS_KINDS:
        raise InputError(f"unknown kind {kind!r}; expected one of {NONCONSENSUS_KINDS}")
    rng = np.random.default_rng(seed)
    k = n * m
    T = construct_transform(n, m, rng).T.copy()
    if kind == "unstable":
        M = random_stable_matrix(k - m, rng)
        w, V = np.linalg.eigh(M)
        c = rng.uniform(0.5, 2.0)
        M = M + (c - w[-1]) * np.outer(V[:, -1], V[:, -1])
        J = np.zeros((k, k))
        J[m:, m:] = M
    elif kind == "defective":
        J = np.zeros((k, k))
        J[0, 1] = 1.0
        J[2:, 2:] = random_stable_matrix(k - 2, rng)
    else:
        J = np.zeros((k, k))
        J[m:, m:] = random_stable_matrix(k - m, rng)
        for _ in range(100):
            P = rng.standard_normal((m, m))
            bumped = T.copy()
            bumped[k - m:, :m] += P
            if np.linalg.cond(P) < 1e3 and np.linalg.cond(bumped) < GENERATION_COND:
                T = bumped
                break
        else:
            raise GenerationError("could not break the row-sum condition while keeping T well conditioned")
    return SystemMatrix(similarity_transform(J, T), n, m)
