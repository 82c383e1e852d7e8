"""Block Laplacians, switched consensus systems and common-Lyapunov monitoring.

A block Laplacian is a symmetric ``mn x mn`` matrix with diagonal blocks
``L_ii`` and off-diagonal blocks ``-L_ij`` where every coupling ``L_ij`` is
symmetric positive definite and ``L_ii = sum_{j != i} L_ij``. It has exactly
``m`` zero eigenvalues, with eigenspace ``range(1 (x) I_m)``.

A switched system ``x' = A_{s(t)} x`` whose subsystems share the consensus
function ``chi(x) = F x`` (with symmetric positive definite ``F_i`` that
commute with the couplings) converges to ``1 (x) chi(x(0))`` under any
switching. ``V = delta^T Theta delta`` with ``Theta = diag(F_1..F_n)`` is a
common Lyapunov function for the disagreement ``delta = x - 1 (x) chi(x(0))``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .classify import SystemMatrix, classify_consensus
from .errors import ComputationError, InputError, StructuralError
from .linalg import (
    DEFAULT_TOL,
    TolerancePolicy,
    agreement_basis,
    as_matrix,
    as_square,
    block_view,
    matrix_exponential,
    sigma_max,
)
from .reports import Report

LAPLACIAN_EPS = 0.1


def _coupling_blocks(L: np.ndarray, n: int, m: int) -> np.ndarray:
    """Blocks of ``L`` with off-diagonal signs flipped, so ``[i, j]`` is ``L_ij``."""
    grid = block_view(L, n, m).copy()
    for i in range(n):
        for j in range(n):
            if i != j:
                grid[i, j] = -grid[i, j]
    return grid


def _min_sym_eig(X: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (X + X.T))[0])


@dataclass(frozen=True)
class BlockLaplacian:
    L: np.ndarray
    n: int
    m: int

    def __post_init__(self):
        L = as_square(self.L, "L").copy()
        if L.shape[0] != self.n * self.m:
            raise InputError(f"L has order {L.shape[0]}, expected n*m = {self.n * self.m}")
        L.setflags(write=False)
        object.__setattr__(self, "L", L)

    def coupling(self, i: int, j: int) -> np.ndarray:
        """``L_ij`` as it appears in the sums (sign-corrected for ``i != j``)."""
        return _coupling_blocks(self.L, self.n, self.m)[i, j]


def is_block_laplacian(L, n: int, m: int, tol: TolerancePolicy = DEFAULT_TOL) -> Report:
    """Clause check: symmetry, positive definite couplings, diagonal block sums."""
    L = as_square(L.L if isinstance(L, BlockLaplacian) else L, "L")
    if L.shape[0] != n * m:
        raise InputError(f"L has order {L.shape[0]}, expected n*m = {n * m}")
    report = Report("block Laplacian")
    scale = max(1.0, float(np.max(np.abs(L))))
    asym = float(np.max(np.abs(L - L.T)))
    report.add("L symmetric", asym <= tol.convergence_abs * scale, f"max |L - L^T| = {asym:.3g}")
    grid = _coupling_blocks(L, n, m)
    pd_cut = tol.eig_zero_rel * max(sigma_max(L), 1e-300)
    worst_pd = min(_min_sym_eig(grid[i, j]) for i in range(n) for j in range(n) if i != j)
    sym_ok = all(
        np.max(np.abs(grid[i, j] - grid[i, j].T)) <= tol.convergence_abs * scale
        for i in range(n) for j in range(n) if i != j
    )
    report.add("couplings L_ij (i != j) symmetric positive definite", sym_ok and worst_pd > pd_cut,
               f"smallest coupling eigenvalue {worst_pd:.3g}")
    worst_sum = max(
        float(np.max(np.abs(grid[i, i] - sum(grid[i, j] for j in range(n) if j != i))))
        for i in range(n)
    )
    report.add("L_ii = sum_{j != i} L_ij", worst_sum <= tol.convergence_abs * scale,
               f"max residual {worst_sum:.3g}")
    return report


@dataclass
class LaplacianSpectrum:
    eigenvalues: np.ndarray
    zero_count: int
    lambda_next: float
    eigenspace_gap: float
    report: Report

    @property
    def passed(self) -> bool:
        return self.report.passed


def block_laplacian_spectrum_check(L: BlockLaplacian, tol: TolerancePolicy = DEFAULT_TOL) -> LaplacianSpectrum:
    """Verify ``lambda_1 = ... = lambda_m = 0 < lambda_{m+1}`` and the zero eigenspace."""
    n, m = L.n, L.m
    w, V = np.linalg.eigh(0.5 * (L.L + L.L.T))
    cut = tol.eig_zero_rel * sigma_max(L.L)
    zero = int(np.count_nonzero(np.abs(w) <= cut))
    report = Report("block Laplacian spectrum")
    report.add("exactly m zero eigenvalues", zero == m, f"{zero} within {cut:.3g}, m = {m}")
    report.add("no negative eigenvalues", bool(w[0] >= -cut), f"smallest {w[0]:.3g}")
    lam_next = float(w[m]) if len(w) > m else math.inf
    report.add("lambda_{m+1} > 0", lam_next > cut, f"lambda_(m+1) = {lam_next:.6g}")
    # compare orthogonal projectors onto the computed zero space and 1 (x) R^m
    Z = V[:, :m]
    Q = agreement_basis(n, m) / math.sqrt(n)
    gap = float(np.linalg.norm(Z @ Z.T - Q @ Q.T, 2))
    report.add("zero eigenspace = range(1 (x) I_m)", gap <= tol.convergence_abs, f"projector gap {gap:.3g}")
    return LaplacianSpectrum(eigenvalues=w, zero_count=zero, lambda_next=lam_next,
                             eigenspace_gap=gap, report=report)


def quadratic_form_identity(L: BlockLaplacian, x) -> tuple[float, float]:
    """``(x^T L x, 1/2 sum_{i != j} (x_i - x_j)^T L_ij (x_i - x_j))``."""
    n, m = L.n, L.m
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != n * m:
        raise InputError(f"state has length {x.shape[0]}, expected {n * m}")
    direct = float(x @ L.L @ x)
    grid = _coupling_blocks(L.L, n, m)
    xb = x.reshape(n, m)
    pairwise = 0.0
    for i in range(n):
        for j in range(n):
            if i != j:
                d = xb[i] - xb[j]
                pairwise += d @ grid[i, j] @ d
    return direct, 0.5 * pairwise


def random_block_laplacian(n: int, m: int, seed=None, eps: float = LAPLACIAN_EPS) -> BlockLaplacian:
    """Complete coupling with ``L_ij = L_ji = Q^T Q + eps I`` for Gaussian ``Q``."""
    if n < 2 or m < 1:
        raise InputError(f"need n >= 2 and m >= 1, got n={n}, m={m}")
    rng = np.random.default_rng(seed)
    L = np.zeros((n * m, n * m))
    for i in range(n):
        for j in range(i + 1, n):
            Q = rng.standard_normal((m, m))
            K = Q.T @ Q + eps * np.eye(m)
            L[i * m:(i + 1) * m, j * m:(j + 1) * m] = -K
            L[j * m:(j + 1) * m, i * m:(i + 1) * m] = -K
    for i in range(n):
        rows = slice(i * m, (i + 1) * m)
        L[rows, rows] = -sum(L[rows, j * m:(j + 1) * m] for j in range(n) if j != i)
    return BlockLaplacian(L, n, m)


def incidence_from_edges(edges: Sequence[tuple[int, int]], n_vertices: int | None = None) -> np.ndarray:
    """Oriented incidence matrix for 0-based edges, each directed from lower to higher index.

    Entry ``(v, e)`` is +1 if edge ``e`` ends at ``v``, -1 if it starts there.
    """
    seen = set()
    for u, v in edges:
        if u == v:
            raise InputError(f"self-loop at vertex {u}")
        key = (min(u, v), max(u, v))
        if key in seen:
            raise InputError(f"duplicate edge {key}")
        if min(u, v) < 0:
            raise InputError(f"negative vertex index in edge {(u, v)}")
        seen.add(key)
    if n_vertices is None:
        n_vertices = 1 + max((max(e) for e in edges), default=-1)
    B = np.zeros((n_vertices, len(edges)))
    for k, (u, v) in enumerate(edges):
        lo, hi = min(u, v), max(u, v)
        if hi >= n_vertices:
            raise InputError(f"edge {(u, v)} references a vertex beyond {n_vertices - 1}")
        B[lo, k] = -1.0
        B[hi, k] = 1.0
    return B


def laplacian_from_incidence(B_inc) -> np.ndarray:
    """Graph Laplacian ``B B^T`` of an oriented incidence matrix."""
    B = as_matrix(B_inc, "incidence matrix")
    for k in range(B.shape[1]):
        col = B[:, k]
        if not np.all(np.isin(col, (-1.0, 0.0, 1.0))):
            raise InputError(f"incidence column {k}: entries must be 0 or +-1")
        if np.count_nonzero(col == 1.0) != 1 or np.count_nonzero(col == -1.0) != 1:
            raise InputError(f"incidence column {k}: needs exactly one +1 and one -1")
    return B @ B.T


@dataclass
class SwitchedSystem:
    """Subsystems ``A_s`` sharing the consensus functional ``F`` (``m x mn``)."""

    subsystems: list[SystemMatrix]
    F: np.ndarray

    def __post_init__(self):
        if not self.subsystems:
            raise InputError("switched system needs at least one subsystem")
        n, m = self.subsystems[0].n, self.subsystems[0].m
        for k, s in enumerate(self.subsystems):
            if (s.n, s.m) != (n, m):
                raise InputError(f"subsystem {k} has (n, m) = {(s.n, s.m)}, expected {(n, m)}")
        F = as_matrix(self.F, "F")
        if F.shape != (m, n * m):
            raise InputError(f"F must have shape {(m, n * m)}, got {F.shape}")
        self.F = F

    @property
    def n(self) -> int:
        return self.subsystems[0].n

    @property
    def m(self) -> int:
        return self.subsystems[0].m

    @property
    def F_blocks(self) -> list[np.ndarray]:
        m = self.m
        return [self.F[:, i * m:(i + 1) * m] for i in range(self.n)]

    @property
    def Theta(self) -> np.ndarray:
        k = self.n * self.m
        Theta = np.zeros((k, k))
        for i, Fi in enumerate(self.F_blocks):
            Theta[i * self.m:(i + 1) * self.m, i * self.m:(i + 1) * self.m] = Fi
        return Theta

    def lyapunov_laplacian(self, s: int) -> np.ndarray:
        """``-(Theta A_s + A_s^T Theta^T)``, the matrix governing ``dV/dt``."""
        A = self.subsystems[s].A
        Th = self.Theta
        return -(Th @ A + A.T @ Th.T)

    def chi(self, x) -> np.ndarray:
        return self.F @ np.asarray(x, dtype=float)

    @classmethod
    def from_block_laplacians(cls, laplacians: Sequence[BlockLaplacian]) -> "SwitchedSystem":
        """``x' = -L_s x`` for each ``L_s``, with the average ``F = (1/n)[I ... I]``."""
        n, m = laplacians[0].n, laplacians[0].m
        subs = [SystemMatrix(-L.L, n, m) for L in laplacians]
        return cls(subs, agreement_basis(n, m).T / n)


def check_switched_assumptions(sys: SwitchedSystem, tol: TolerancePolicy = DEFAULT_TOL) -> Report:
    """Check the five standing assumptions for every subsystem, plus the Lyapunov step.

    Clause names are prefixed ``A<s>:`` with 0-based subsystem index ``s``.
    """
    n, m = sys.n, sys.m
    report = Report("switched-system assumptions")
    Fb = sys.F_blocks
    f_scale = max(1.0, float(np.max(np.abs(sys.F))))
    f_sym = all(float(np.max(np.abs(Fi - Fi.T))) <= tol.convergence_abs * f_scale for Fi in Fb)
    f_pd = min(_min_sym_eig(Fi) for Fi in Fb)
    F_sum = sum(Fb)
    sum_err = float(np.max(np.abs(F_sum - np.eye(m))))
    for s, sub in enumerate(sys.subsystems):
        p = f"A{s}: "
        A = sub.A
        a_scale = max(1.0, float(np.max(np.abs(A))))
        blocks = sub.blocks
        verdict = classify_consensus(sub, tol)
        report.add(p + "(1) solves a consensus problem", verdict.yes, f"classifier: {verdict.solves}")

        off = [(i, j) for i in range(n) for j in range(n) if i != j]
        asym = max(float(np.max(np.abs(blocks[i, j] - blocks[i, j].T))) for i, j in off)
        min_eig = min(_min_sym_eig(blocks[i, j]) for i, j in off)
        report.add(p + "(2) off-diagonal blocks symmetric positive definite",
                   asym <= tol.convergence_abs * a_scale and min_eig > tol.eig_zero_rel * sigma_max(A),
                   f"max asymmetry {asym:.3g}, smallest eigenvalue {min_eig:.3g}")

        diag_err = max(
            float(np.max(np.abs(blocks[i, i] + sum(blocks[i, j] for j in range(n) if j != i))))
            for i in range(n)
        )
        report.add(p + "(3) A_ii = -sum_{j != i} A_ij", diag_err <= tol.convergence_abs * a_scale,
                   f"max residual {diag_err:.3g}")

        fa = float(np.max(np.abs(sys.F @ A)))
        ok4 = (f_sym and f_pd > 0 and sum_err <= tol.convergence_abs
               and fa <= tol.convergence_abs * a_scale * f_scale)
        report.add(p + "(4) common consensus function: F A = 0, F_1+...+F_n = I, F_i > 0", ok4,
                   f"max |F A| = {fa:.3g}, max |sum F_i - I| = {sum_err:.3g}, min eig F_i = {f_pd:.3g}")

        comm = max(
            float(np.max(np.abs(Fb[i] @ blocks[i, j] - blocks[i, j] @ Fb[i])))
            for i in range(n) for j in range(n)
        )
        report.add(p + "(5) F_i A_ij = A_ij F_i", comm <= tol.convergence_abs * a_scale * f_scale,
                   f"max commutator {comm:.3g}")

        lap = is_block_laplacian(sys.lyapunov_laplacian(s), n, m, tol)
        report.add(p + "-(Theta A + A^T Theta) is a block Laplacian", lap.passed,
                   "; ".join(c.name for c in lap.failures()))
    return report


@dataclass(frozen=True)
class SwitchingSignal:
    """Finite piecewise-constant schedule: ``(duration, subsystem index)`` pairs."""

    segments: tuple[tuple[float, int], ...]

    def __post_init__(self):
        segs = tuple((float(d), int(s)) for d, s in self.segments)
        if not segs:
            raise InputError("switching signal needs at least one segment")
        for d, s in segs:
            if not (math.isfinite(d) and d > 0):
                raise InputError(f"segment duration must be positive, got {d}")
            if s < 0:
                raise InputError(f"subsystem index must be >= 0, got {s}")
        object.__setattr__(self, "segments", segs)

    @property
    def total_time(self) -> float:
        return math.fsum(d for d, _ in self.segments)

    @property
    def switch_times(self) -> list[float]:
        """Start time of every segment, plus the final time."""
        out = [0.0]
        acc = 0.0
        for d, _ in self.segments:
            acc += d
            out.append(acc)
        return out

    @classmethod
    def random(cls, n_subsystems: int, total_time: float = 20.0, seed=None,
               dwell: tuple[float, float] = (0.1, 2.0)) -> "SwitchingSignal":
        """Uniform dwell times in ``dwell``, uniformly chosen subsystems; last segment truncated."""
        lo, hi = dwell
        if not (0 < lo <= hi) or total_time <= 0:
            raise InputError(f"need 0 < dwell_min <= dwell_max and total_time > 0, got {dwell}, {total_time}")
        rng = np.random.default_rng(seed)
        segs = []
        t = 0.0
        while total_time - t > 1e-12 * total_time:
            d = min(float(rng.uniform(lo, hi)), total_time - t)
            segs.append((d, int(rng.integers(n_subsystems))))
            t += d
        return cls(tuple(segs))


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (samples, mn)
    delta: np.ndarray  # (samples, mn)
    V: np.ndarray
    active: np.ndarray  # subsystem index governing each sample's outgoing interval
    segment: np.ndarray  # segment index for each sample
    chi0: np.ndarray
    switch_times: list[float] = field(default_factory=list)

    def write_csv(self, path) -> None:
        k = self.states.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x_{i + 1}" for i in range(k)] + ["V"])
            for t, x, v in zip(self.times, self.states, self.V):
                w.writerow([repr(float(t))] + [repr(float(xi)) for xi in x] + [repr(float(v))])


def _sample_grid(signal: SwitchingSignal, dt: float) -> list[tuple[float, int]]:
    """(time, segment index) pairs: multiples of ``dt`` plus every switch instant."""
    bounds = signal.switch_times
    total = bounds[-1]
    out = []
    for seg in range(len(signal.segments)):
        a, b = bounds[seg], bounds[seg + 1]
        out.append((a, seg))
        k = math.floor(a / dt) + 1
        while k * dt < b - 1e-9 * dt:
            t = k * dt
            if t > a + 1e-9 * dt:
                out.append((t, seg))
            k += 1
    out.append((total, len(signal.segments) - 1))
    return out


def simulate_switched(
    sys: SwitchedSystem,
    signal: SwitchingSignal,
    x0,
    sample_dt: float = 0.01,
    unsafe: bool = False,
    tol: TolerancePolicy = DEFAULT_TOL,
) -> Trajectory:
    """Exact piecewise propagation ``x(t) = e^{A_s (t - t_seg)} x(t_seg)``.

    Every sample is computed from the state at the start of its segment, so
    the sampling grid never changes the propagated states. Unless ``unsafe``
    is set, the standing assumptions are checked first and the first failed
    clause is raised as :class:`StructuralError`.
    """
    n, m = sys.n, sys.m
    k = n * m
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.shape[0] != k:
        raise InputError(f"x0 has length {x0.shape[0]}, expected {k}")
    if not np.all(np.isfinite(x0)):
        raise InputError("x0 contains NaN or Inf")
    if not (math.isfinite(sample_dt) and sample_dt > 0):
        raise InputError(f"sample_dt must be positive, got {sample_dt}")
    for _, s in signal.segments:
        if s >= len(sys.subsystems):
            raise InputError(f"switching signal selects subsystem {s}, only {len(sys.subsystems)} exist")
    if not unsafe:
        report = check_switched_assumptions(sys, tol)
        if not report.passed:
            raise StructuralError(f"assumption failed: {report.failures()[0].name}")

    starts = [x0]
    bounds = signal.switch_times
    for (d, s) in signal.segments:
        starts.append(matrix_exponential(sys.subsystems[s].A * d) @ starts[-1])
    grid = _sample_grid(signal, sample_dt)
    times = np.empty(len(grid))
    states = np.empty((len(grid), k))
    seg_idx = np.empty(len(grid), dtype=int)
    for row, (t, seg) in enumerate(grid):
        offset = t - bounds[seg]
        A = sys.subsystems[signal.segments[seg][1]].A
        if offset == 0.0:
            x = starts[seg]
        elif row == len(grid) - 1:
            x = starts[-1]
        else:
            x = matrix_exponential(A * offset) @ starts[seg]
        times[row] = t
        states[row] = x
        seg_idx[row] = seg
    if not np.all(np.isfinite(states)):
        raise ComputationError("simulation produced non-finite states")
    chi0 = sys.F @ x0
    ones = agreement_basis(n, m)
    delta = states - (ones @ chi0)[np.newaxis, :]
    Th = sys.Theta
    V = np.einsum("ti,ij,tj->t", delta, Th, delta)
    active = np.array([signal.segments[s][1] for s in seg_idx])
    return Trajectory(times=times, states=states, delta=delta, V=V, active=active,
                      segment=seg_idx, chi0=chi0, switch_times=bounds)


@dataclass
class AuditResult:
    report: Report
    V: np.ndarray
    max_increase: float
    worst_bound_margin: float
    max_F_delta: float
    final_disagreement: float
    lambda_next: list[float]

    @property
    def passed(self) -> bool:
        return self.report.passed

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "report": self.report.to_dict(),
            "max_V_increase": self.max_increase,
            "worst_bound_margin": self.worst_bound_margin,
            "max_F_delta": self.max_F_delta,
            "final_disagreement_norm": self.final_disagreement,
            "lambda_m_plus_1": self.lambda_next,
            "V": [float(v) for v in self.V],
        }


def sample_spacing(times: np.ndarray) -> float:
    gaps = np.diff(times)
    gaps = gaps[gaps > 0]
    return float(gaps.min()) if gaps.size else 1.0


def lyapunov_audit(traj: Trajectory, sys: SwitchedSystem, tol: TolerancePolicy = DEFAULT_TOL,
                   monotone_slack: float = 1e-12, bound_slack: float = 1e-6,
                   f_delta_tol: float = 1e-8) -> AuditResult:
    """Check ``V`` along a simulated trajectory.

    * ``V`` nonincreasing up to ``monotone_slack * V(0)``;
    * ``dV/dt <= -lambda_{m+1} ||P delta||^2 + bound_slack * V(0)`` at interior
      samples of each segment, with ``dV/dt`` from 3-point differences and
      ``P`` the orthogonal projector onto ``range(1 (x) I_m)^perp``;
    * ``F delta = 0`` to ``f_delta_tol * max(1, ||x(0)||)``.

    Both ``V`` slacks are floored at the rounding level of ``V`` so that an
    equilibrium trajectory (``V(0) ~ 0``) passes.
    """
    n, m = sys.n, sys.m
    V = traj.V
    V0 = float(V[0])
    # rounding level of V itself; only matters when V(0) is essentially zero
    x0_norm = max(1.0, float(np.linalg.norm(traj.states[0])))
    v_floor = (64 * np.finfo(float).eps * x0_norm) ** 2 * float(np.linalg.norm(sys.Theta, 2))
    report = Report("Lyapunov audit")
    steps = np.diff(V)
    max_inc = float(steps.max()) if steps.size else 0.0
    report.add("V nonincreasing", max_inc <= max(monotone_slack * V0, v_floor),
               f"largest increase {max_inc:.3g}")

    lam = []
    for s in range(len(sys.subsystems)):
        w = np.linalg.eigvalsh(0.5 * (sys.lyapunov_laplacian(s) + sys.lyapunov_laplacian(s).T))
        lam.append(float(w[m]))
    Q = agreement_basis(n, m) / math.sqrt(n)
    P = np.eye(n * m) - Q @ Q.T
    d2 = np.einsum("ij,tj->ti", P, traj.delta)
    d2sq = np.sum(d2 * d2, axis=1)
    t = traj.times
    worst = -math.inf
    for i in range(1, len(t) - 1):
        seg = traj.segment[i]
        # the sample at a switch instant starts a segment; skip it and any
        # sample whose neighbours straddle a switch
        if traj.segment[i - 1] != seg or traj.segment[i + 1] != seg or t[i] == traj.switch_times[seg]:
            continue
        h0, h1 = t[i] - t[i - 1], t[i + 1] - t[i]
        dV = (-h1 / (h0 * (h0 + h1)) * V[i - 1] + (h1 - h0) / (h0 * h1) * V[i]
              + h0 / (h1 * (h0 + h1)) * V[i + 1])
        margin = dV + lam[traj.active[i]] * d2sq[i]
        worst = max(worst, margin)
    if worst == -math.inf:
        worst = 0.0
    bound = max(bound_slack * V0, v_floor / sample_spacing(t))
    report.add("dV/dt <= -lambda_(m+1) ||delta_2||^2", worst <= bound,
               f"worst margin {worst:.3g} (slack {bound:.3g})")

    f_delta = float(np.max(np.abs(traj.delta @ sys.F.T)))
    report.add("F delta = 0", f_delta <= f_delta_tol * x0_norm, f"max |F delta| = {f_delta:.3g}")
    final = float(np.linalg.norm(traj.delta[-1]))
    return AuditResult(report=report, V=V, max_increase=max_inc, worst_bound_margin=worst,
                       max_F_delta=f_delta, final_disagreement=final, lambda_next=lam)
