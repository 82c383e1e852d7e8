"""Decide whether ``x' = Ax`` reaches consensus from every initial state.

Two independent routes are evaluated and must agree:

* rank chain ``rank(A) == rank(A^2)``, every eigenvalue zero or stable, and
  every kernel vector an agreement state ``1 (x) b``;
* ``dim N(A) == dim N(A^2) == dim N([C_11; ...; C_nn])`` with the same
  eigenvalue condition, where ``C_ii`` is the i-th block row sum of ``A``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import InputError
from .linalg import (
    DEFAULT_TOL,
    Spectrum,
    TolerancePolicy,
    as_square,
    block_view,
    eigenvalues,
    from_blocks,
    RANK_BAND,
    null_space_basis,
    numeric_rank,
    rank_chain,
    rank_chain_margin,
    rank_margin,
    sigma_max,
)

YES, NO, INDETERMINATE = "yes", "no", "indeterminate"


@dataclass(frozen=True)
class SystemMatrix:
    """An ``mn x mn`` matrix read as an ``n x n`` grid of ``m x m`` blocks."""

    A: np.ndarray
    n: int
    m: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise InputError(f"agent count n must be an integer >= 2, got {self.n}")
        if int(self.m) != self.m or self.m < 1:
            raise InputError(f"block size m must be an integer >= 1, got {self.m}")
        a = as_square(self.A, "A").copy()
        if a.shape[0] != self.n * self.m:
            raise InputError(
                f"A has order {a.shape[0]} but n*m = {self.n}*{self.m} = {self.n * self.m}"
            )
        a.setflags(write=False)
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "m", int(self.m))

    @property
    def order(self) -> int:
        return self.n * self.m

    @property
    def blocks(self) -> np.ndarray:
        return block_view(self.A, self.n, self.m)

    def block(self, i: int, j: int) -> np.ndarray:
        """Block ``A_ij`` (0-based indices)."""
        return self.blocks[i, j]


@dataclass(frozen=True)
class CDDecomposition:
    """``A = diag(C_11..C_nn) + D`` with every block row of ``D`` summing to zero."""

    C: np.ndarray  # (n, m, m)
    D: np.ndarray  # (n, n, m, m)

    @property
    def stacked_C(self) -> np.ndarray:
        """The ``mn x m`` matrix ``[C_11; C_22; ...; C_nn]``."""
        return np.vstack(list(self.C))

    def assemble(self) -> np.ndarray:
        n = self.C.shape[0]
        grid = self.D.copy()
        for i in range(n):
            grid[i, i] = grid[i, i] + self.C[i]
        return from_blocks(grid)


def decompose_cd(sys: SystemMatrix) -> CDDecomposition:
    blocks = sys.blocks
    n = sys.n
    D = blocks.copy()
    C = np.empty((n, sys.m, sys.m))
    for i in range(n):
        off = sum(blocks[i, j] for j in range(n) if j != i)
        D[i, i] = -off
        C[i] = blocks[i, i] + off
    return CDDecomposition(C=C, D=D)


def _is_agreement_vector(v: np.ndarray, n: int, m: int, tol: TolerancePolicy) -> bool:
    norm = np.linalg.norm(v)
    if norm == 0:
        return True
    b = (v / norm).reshape(n, m)
    return float(np.max(np.abs(b - b[0]))) <= tol.convergence_abs


def kernel_is_agreement(sys: SystemMatrix, tol: TolerancePolicy = DEFAULT_TOL) -> bool:
    """True iff every vector of ``N(A)`` has all ``n`` blocks equal."""
    basis = null_space_basis(sys.A, tol)
    return all(_is_agreement_vector(basis[:, k], sys.n, sys.m, tol) for k in range(basis.shape[1]))


@dataclass
class ConsensusVerdict:
    solves: str
    spectrum: Spectrum
    eigen_classes: list[str]
    borderline: list[bool]
    rank_A: int
    rank_A2: int
    dimN_A: int
    dimN_A2: int
    dimN_C: int
    kernel_is_agreement: bool
    route_rank_kernel: str
    route_dimensions: str
    n: int
    m: int
    reasons: list[str] = field(default_factory=list)
    rank_margin_decades: float = math.inf

    @property
    def yes(self) -> bool:
        return self.solves == YES

    def to_dict(self) -> dict[str, Any]:
        return {
            "solves": self.solves,
            "n": self.n,
            "m": self.m,
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.spectrum.eigenvalues],
            "eigen_classes": list(self.eigen_classes),
            "borderline": [bool(b) for b in self.borderline],
            "rank_A": self.rank_A,
            "rank_A2": self.rank_A2,
            "dimN_A": self.dimN_A,
            "dimN_A2": self.dimN_A2,
            "dimN_C": self.dimN_C,
            "kernel_is_agreement": self.kernel_is_agreement,
            "routes": {
                "rank_kernel": self.route_rank_kernel,
                "dimensions": self.route_dimensions,
            },
            "reasons": list(self.reasons),
            "rank_margin_decades": None if math.isinf(self.rank_margin_decades) else self.rank_margin_decades,
        }

    def format(self) -> str:
        lines = [f"solves consensus: {self.solves}  (n={self.n}, m={self.m})"]
        lines.append("eigenvalues:")
        for z, c, b in zip(self.spectrum.eigenvalues, self.eigen_classes, self.borderline):
            flag = " (borderline)" if b else ""
            lines.append(f"  {z.real: .6g}{z.imag:+.6g}j  {c}{flag}")
        lines.append(f"rank A = {self.rank_A}, rank A^2 = {self.rank_A2}")
        lines.append(f"dim N(A) = {self.dimN_A}, dim N(A^2) = {self.dimN_A2}, dim N(C) = {self.dimN_C}")
        lines.append(f"kernel consists of agreement states: {self.kernel_is_agreement}")
        lines.append(f"route rank/kernel: {self.route_rank_kernel}; route dimensions: {self.route_dimensions}")
        lines.extend(f"  - {r}" for r in self.reasons)
        return "\n".join(lines)


def _route(structural_ok: bool, hard_unstable: bool, any_borderline: bool, zero_count_ok: bool) -> str:
    if hard_unstable or not structural_ok:
        return NO
    if any_borderline or not zero_count_ok:
        return INDETERMINATE
    return YES


def classify_consensus(sys: SystemMatrix, tol: TolerancePolicy = DEFAULT_TOL) -> ConsensusVerdict:
    """Classify ``sys`` as solving consensus (``yes``), not (``no``) or ``indeterminate``.

    ``indeterminate`` is returned when an eigenvalue sits just outside the
    zero band, when a singular value lies within a factor ``RANK_BAND`` of a
    rank cutoff, when the zero-eigenvalue count disagrees with ``dim N(A)``,
    or when the two routes disagree. A clearly unstable eigenvalue still
    gives ``no``.
    """
    A = sys.A
    k = sys.order
    spec = eigenvalues(A)
    classes = spec.classes(tol)
    border = spec.borderline(tol)
    rank_A, rank_A2 = rank_chain(A, tol)
    dimN_A = k - rank_A
    dimN_A2 = k - rank_A2
    cd = decompose_cd(sys)
    # C vanishes exactly for zero-row-sum systems; measure it against A's scale
    dimN_C = sys.m - numeric_rank(cd.stacked_C, tol, scale=sigma_max(A))
    margin = min(rank_chain_margin(A, tol), rank_margin(cd.stacked_C, tol, scale=sigma_max(A)))
    knife_edge = margin < math.log10(RANK_BAND)
    agree = kernel_is_agreement(sys, tol)

    hard_unstable = any(c == "unstable" and not b for c, b in zip(classes, border))
    any_border = bool(np.any(border))
    n_zero = classes.count("zero")

    reasons = []

    def note(ok: bool, text: str):
        reasons.append(f"{'passed' if ok else 'failed'}: {text}")

    note(not hard_unstable, "every eigenvalue is zero or has negative real part")
    if any_border:
        reasons.append(
            f"warning: {int(np.sum(border))} eigenvalue(s) lie in the dead band just outside the zero cutoff"
        )
    chain = rank_A == rank_A2
    note(chain, f"rank(A) = rank(A^2) ({rank_A} vs {rank_A2})")
    note(agree, "every kernel vector is an agreement state 1 (x) b")
    dims = dimN_A == dimN_A2 == dimN_C
    note(dims, f"dim N(A) = dim N(A^2) = dim N(C) ({dimN_A}, {dimN_A2}, {dimN_C})")
    zero_count_ok = n_zero == dimN_A or not chain
    if not zero_count_ok:
        reasons.append(
            f"warning: {n_zero} zero eigenvalue(s) but dim N(A) = {dimN_A}; spectrum is numerically ambiguous"
        )

    route_i = _route(chain and agree, hard_unstable, any_border, zero_count_ok)
    route_ii = _route(dims, hard_unstable, any_border, zero_count_ok)
    if route_i == route_ii:
        solves = route_i
    else:
        solves = INDETERMINATE
        reasons.append(
            f"warning: classification routes disagree (rank/kernel: {route_i}, dimensions: {route_ii})"
        )
    if knife_edge and solves != INDETERMINATE and not hard_unstable:
        solves = INDETERMINATE
        reasons.append(
            f"warning: a singular value lies within {margin:.2f} decades of the rank cutoff; rank decisions are unreliable"
        )
    if solves == YES and dimN_A > sys.m:
        # cannot happen in exact arithmetic: kernel inside 1 (x) R^m
        solves = INDETERMINATE
        reasons.append(f"warning: dim N(A) = {dimN_A} exceeds m = {sys.m}")

    return ConsensusVerdict(
        solves=solves,
        spectrum=spec,
        eigen_classes=classes,
        borderline=[bool(b) for b in border],
        rank_A=rank_A,
        rank_A2=rank_A2,
        dimN_A=dimN_A,
        dimN_A2=dimN_A2,
        dimN_C=dimN_C,
        kernel_is_agreement=agree,
        route_rank_kernel=route_i,
        route_dimensions=route_ii,
        n=sys.n,
        m=sys.m,
        reasons=reasons,
        rank_margin_decades=margin,
    )
