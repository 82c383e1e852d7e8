"""Dense linear-algebra primitives with an explicit tolerance policy.

Every decision that depends on a numerical zero (rank, null spaces, eigenvalue
classes) goes through a :class:`TolerancePolicy` so callers can see and
override the cutoffs.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, fields, replace

import numpy as np

from .errors import ComputationError, InputError, StructuralError

TOLERANCE_ENV_VAR = "LINCONSENSUS_TOL"

# eigenvalues with eig_zero < |lam| <= DEAD_BAND * eig_zero are "borderline"
DEAD_BAND = 1e3

# singular values within this factor of the rank cutoff make a rank decision a knife edge
RANK_BAND = 10.0

# cap on the horizon used by finite-time limit cross-checks
HORIZON_CAP = 1e4


@dataclass(frozen=True)
class TolerancePolicy:
    """Cutoffs used to turn floating-point results into exact decisions.

    Parameters
    ----------
    rank_rel : float
        Singular values at or below ``rank_rel * sigma_max * max(rows, cols)``
        count as zero.
    eig_zero_rel : float
        Eigenvalues with ``|lam| <= eig_zero_rel * sigma_max`` count as zero.
    convergence_abs : float
        Absolute tolerance for limit and trajectory comparisons.
    """

    rank_rel: float = 1e-10
    eig_zero_rel: float = 1e-9
    convergence_abs: float = 1e-6

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise InputError(f"tolerance {f.name} must be a positive finite number, got {v!r}")

    def rank_cutoff(self, sigma_max: float, shape: tuple[int, int]) -> float:
        return self.rank_rel * sigma_max * max(shape)

    def with_overrides(self, **kw) -> "TolerancePolicy":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)

    @classmethod
    def from_env(cls, environ=None) -> "TolerancePolicy":
        """Build a policy from ``LINCONSENSUS_TOL="rank_rel=1e-10,eig_zero_rel=..."``."""
        environ = os.environ if environ is None else environ
        raw = environ.get(TOLERANCE_ENV_VAR, "").strip()
        if not raw:
            return cls()
        names = {f.name for f in fields(cls)}
        kw = {}
        for item in raw.split(","):
            if not item.strip():
                continue
            key, sep, value = item.partition("=")
            key = key.strip()
            if not sep or key not in names:
                raise InputError(f"{TOLERANCE_ENV_VAR}: cannot parse {item!r}")
            try:
                kw[key] = float(value)
            except ValueError:
                raise InputError(f"{TOLERANCE_ENV_VAR}: {key} is not a number: {value!r}") from None
        return cls(**kw)


DEFAULT_TOL = TolerancePolicy()


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues sorted by real part then imaginary part, plus ``scale = sigma_max``."""

    eigenvalues: np.ndarray
    scale: float

    def __len__(self):
        return len(self.eigenvalues)

    def classes(self, tol: TolerancePolicy = DEFAULT_TOL) -> list[str]:
        return classify_eigenvalues(self, tol)

    def borderline(self, tol: TolerancePolicy = DEFAULT_TOL) -> np.ndarray:
        cut = tol.eig_zero_rel * self.scale
        mag = np.abs(self.eigenvalues)
        return (mag > cut) & (mag <= DEAD_BAND * cut)


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    """Return ``M`` as a finite 2-D float array or raise :class:`InputError`."""
    try:
        a = np.array(M, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{name}: not a real matrix ({exc})") from None
    if a.ndim == 1:
        a = a[np.newaxis, :]
    if a.ndim != 2:
        raise InputError(f"{name}: expected a 2-D matrix, got {a.ndim} dimensions")
    if not np.all(np.isfinite(a)):
        raise InputError(f"{name}: contains NaN or Inf")
    return a


def as_square(M, name: str = "matrix") -> np.ndarray:
    a = as_matrix(M, name)
    if a.shape[0] != a.shape[1]:
        raise InputError(f"{name}: expected a square matrix, got shape {a.shape}")
    return a


def sigma_max(M) -> float:
    a = np.asarray(M, dtype=float)
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, 2))


def _svd(a: np.ndarray):
    try:
        return np.linalg.svd(a, full_matrices=True)
    except np.linalg.LinAlgError as exc:
        raise ComputationError(f"SVD failed to converge for a {a.shape} matrix: {exc}") from None


def _rank_from_singular_values(s, shape, tol: TolerancePolicy, scale: float | None) -> int:
    if len(s) == 0:
        return 0
    ref = s[0] if scale is None else scale
    if ref == 0.0:
        return 0
    return int(np.count_nonzero(s > tol.rank_cutoff(ref, shape)))


def numeric_rank(M, tol: TolerancePolicy = DEFAULT_TOL, scale: float | None = None) -> int:
    """Number of singular values above ``rank_rel * sigma_max * max(rows, cols)``.

    ``scale`` replaces ``sigma_max`` as the reference magnitude. Pass it when
    ``M`` is derived from a larger matrix and may be pure rounding noise
    (e.g. block sums that vanish exactly in exact arithmetic).
    """
    a = as_matrix(M)
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    return _rank_from_singular_values(s, a.shape, tol, scale)


def rank_margin(M, tol: TolerancePolicy = DEFAULT_TOL, scale: float | None = None) -> float:
    """Distance in decades between the rank cutoff and the nearest singular value.

    Exact zeros are ignored; ``inf`` means no singular value is near the cutoff.
    """
    a = as_matrix(M)
    if a.size == 0:
        return math.inf
    s = np.linalg.svd(a, compute_uv=False)
    ref = s[0] if scale is None else scale
    if ref == 0.0:
        return math.inf
    s = s[s > 0]
    if s.size == 0:
        return math.inf
    return float(np.min(np.abs(np.log10(s / tol.rank_cutoff(ref, a.shape)))))


def null_space_basis(M, tol: TolerancePolicy = DEFAULT_TOL, scale: float | None = None) -> np.ndarray:
    """Orthonormal columns spanning the numerical null space of ``M``."""
    a = as_matrix(M)
    rows, cols = a.shape
    if cols == 0:
        return np.zeros((0, 0))
    if rows == 0:
        return np.eye(cols)
    _, s, vh = _svd(a)
    rank = _rank_from_singular_values(s, a.shape, tol, scale)
    return vh[rank:].T.copy()


def left_null_space_basis(M, tol: TolerancePolicy = DEFAULT_TOL, scale: float | None = None) -> np.ndarray:
    """Orthonormal rows spanning ``N(M^T)``, so that ``rows @ M ~ 0``."""
    a = as_matrix(M)
    return null_space_basis(a.T, tol, scale).T


def range_basis(M, tol: TolerancePolicy = DEFAULT_TOL) -> np.ndarray:
    """Orthonormal columns spanning the column space of ``M``."""
    a = as_matrix(M)
    if a.size == 0:
        return np.zeros((a.shape[0], 0))
    u, s, _ = _svd(a)
    rank = _rank_from_singular_values(s, a.shape, tol, None)
    return u[:, :rank].copy()


def eigenvalues(M) -> Spectrum:
    """Full complex spectrum of a real square matrix with exact conjugate pairing."""
    a = as_square(M)
    n = a.shape[0]
    scale = sigma_max(a)
    if n == 0:
        return Spectrum(np.zeros(0, dtype=complex), scale)
    try:
        lam = np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:
        raise ComputationError(f"eigenvalue solver failed on a {n}x{n} matrix: {exc}") from None
    if not np.all(np.isfinite(lam)):
        raise ComputationError(f"eigenvalue solver returned non-finite values: {lam}")
    lam = np.asarray(lam, dtype=complex)
    real = lam[lam.imag == 0].real
    upper = lam[lam.imag > 0]
    lower = lam[lam.imag < 0]
    if len(upper) != len(lower):
        raise ComputationError(
            f"spectrum of a real matrix lacks conjugate symmetry: {len(upper)} upper vs "
            f"{len(lower)} lower half-plane eigenvalues"
        )
    # pair each upper eigenvalue with its nearest lower partner and symmetrize
    lower = list(lower)
    paired = []
    for z in sorted(upper, key=lambda z: (z.real, z.imag)):
        k = int(np.argmin([abs(np.conj(w) - z) for w in lower]))
        w = lower.pop(k)
        mid = 0.5 * (z + np.conj(w))
        paired.extend([mid, np.conj(mid)])
    out = np.concatenate([real.astype(complex), np.array(paired, dtype=complex)])
    order = np.lexsort((out.imag, out.real))
    return Spectrum(out[order], scale)


def classify_eigenvalues(spec: Spectrum, tol: TolerancePolicy = DEFAULT_TOL) -> list[str]:
    """Tag each eigenvalue ``"zero"``, ``"stable"`` or ``"unstable"``.

    Purely imaginary eigenvalues are unstable: a consensus system admits no
    marginal nonzero modes.
    """
    cut = tol.eig_zero_rel * spec.scale
    tags = []
    for lam in spec.eigenvalues:
        if abs(lam) <= cut:
            tags.append("zero")
        elif lam.real < -cut:
            tags.append("stable")
        else:
            tags.append("unstable")
    return tags


_PADE = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0),
}
_PADE13 = (64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
           1187353796428800.0, 129060195264000.0, 10559470521600.0,
           670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
           960960.0, 16380.0, 182.0, 1.0)
# largest 1-norm for which each Pade degree reaches unit roundoff (Higham 2005)
_THETA = {3: 1.495585217958292e-2, 5: 2.539398330063230e-1,
          7: 9.504178996162932e-1, 9: 2.097847961257068e0}
_THETA13 = 5.371920351148152e0


def _pade_low(a: np.ndarray, deg: int):
    b = _PADE[deg]
    ident = np.eye(a.shape[0])
    a2 = a @ a
    powers = [ident, a2]
    for _ in range(2, deg // 2 + 1):
        powers.append(powers[-1] @ a2)
    u = sum(b[2 * k + 1] * powers[k] for k in range(len(powers)))
    v = sum(b[2 * k] * powers[k] for k in range(len(powers)))
    return a @ u, v


def _pade13(a: np.ndarray):
    b = _PADE13
    ident = np.eye(a.shape[0])
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a4 @ a2
    u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
    v = a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident
    return u, v


def matrix_exponential(M) -> np.ndarray:
    """``e^M`` by scaling and squaring with a diagonal Pade approximant.

    Degree selection follows Higham's 2005 algorithm: the smallest of
    degrees 3, 5, 7, 9 whose 1-norm bound covers ``M``, otherwise degree 13
    after scaling by ``2**-s``.
    """
    a = as_square(M)
    n = a.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    norm1 = float(np.linalg.norm(a, 1))
    s = 0
    for deg in (3, 5, 7, 9):
        if norm1 <= _THETA[deg]:
            u, v = _pade_low(a, deg)
            break
    else:
        if norm1 > _THETA13:
            s = int(math.ceil(math.log2(norm1 / _THETA13)))
        u, v = _pade13(a / 2.0 ** s)
    with np.errstate(over="ignore", invalid="ignore"):
        try:
            r = np.linalg.solve(v - u, v + u)
        except np.linalg.LinAlgError as exc:
            raise ComputationError(f"Pade denominator is singular: {exc}") from None
        for _ in range(s):
            r = r @ r
    if not np.all(np.isfinite(r)):
        raise ComputationError(
            f"matrix exponential overflowed (1-norm {norm1:.3g}, {s} squarings)"
        )
    return r


def convergence_horizon(spec: Spectrum, tol: TolerancePolicy = DEFAULT_TOL, factor: float = 50.0) -> float:
    """``factor / |Re lam|`` for the slowest stable eigenvalue, capped at ``HORIZON_CAP``."""
    cut = tol.eig_zero_rel * spec.scale
    stable = [-lam.real for lam in spec.eigenvalues if lam.real < -cut]
    if not stable:
        return 1.0
    return float(min(factor / min(stable), HORIZON_CAP))


def rank_chain(A, tol: TolerancePolicy = DEFAULT_TOL) -> tuple[int, int]:
    """``(rank(A), rank(A^2))`` with both cutoffs on the scale of ``A``.

    ``rank(A^2)`` is evaluated as ``rank(A W)`` for an orthonormal basis ``W``
    of ``R(A)``, since ``R(A^2) = A R(A)``. Forming ``A^2`` directly fails both
    ways: for nilpotent ``A`` it is pure rounding noise, and for non-normal
    ``A`` its singular values can sit far below ``sigma_max(A)^2``.
    """
    a = as_square(A)
    rank_a = numeric_rank(a, tol)
    if rank_a == 0:
        return 0, 0
    W = range_basis(a, tol)
    return rank_a, numeric_rank(a @ W, tol, scale=sigma_max(a))


def rank_chain_margin(A, tol: TolerancePolicy = DEFAULT_TOL) -> float:
    """Smallest :func:`rank_margin` over the two rank decisions of :func:`rank_chain`."""
    a = as_square(A)
    margin = rank_margin(a, tol)
    W = range_basis(a, tol)
    if W.shape[1]:
        margin = min(margin, rank_margin(a @ W, tol, scale=sigma_max(a)))
    return margin


def has_direct_sum(A, tol: TolerancePolicy = DEFAULT_TOL) -> bool:
    """True when ``rank(A) == rank(A^2)``, i.e. ``R^k = N(A) (+) R(A)``."""
    r_a, r_a2 = rank_chain(A, tol)
    return r_a == r_a2


def spectral_projector_onto_nullspace(A, tol: TolerancePolicy = DEFAULT_TOL) -> np.ndarray:
    """Projector onto ``N(A)`` along ``R(A)``.

    For a semistable ``A`` this is ``lim e^{At}``. Built from orthonormal bases
    ``U`` of ``N(A)`` and ``W`` of ``R(A)``: ``P = [U|W] diag(I, 0) [U|W]^-1``.
    """
    a = as_square(A, "A")
    k = a.shape[0]
    r_a, r_a2 = rank_chain(a, tol)
    if r_a != r_a2:
        raise StructuralError(
            f"no direct sum N(A) (+) R(A): rank(A)={r_a} but rank(A^2)={r_a2}"
        )
    u = null_space_basis(a, tol)
    w = range_basis(a, tol)
    r = u.shape[1]
    if r == 0:
        return np.zeros((k, k))
    if r == k:
        return np.eye(k)
    s = np.hstack([u, w])
    cond = np.linalg.cond(s)
    if not np.isfinite(cond) or cond > 1.0 / tol.rank_rel:
        raise StructuralError(
            f"null space and range are numerically dependent (cond [U|W] = {cond:.3g})"
        )
    s_inv = np.linalg.inv(s)
    return u @ s_inv[:r, :]


def matrices_close(X, Y, tol: TolerancePolicy = DEFAULT_TOL) -> bool:
    """Entrywise equality relative to the operands' max-norm, floored at ``convergence_abs``."""
    x = np.asarray(X, dtype=float)
    y = np.asarray(Y, dtype=float)
    if x.shape != y.shape:
        return False
    if x.size == 0:
        return True
    ref = max(1.0, float(np.max(np.abs(x))), float(np.max(np.abs(y))))
    return float(np.max(np.abs(x - y))) <= tol.convergence_abs * ref


def block_view(A: np.ndarray, n: int, m: int) -> np.ndarray:
    """View an ``mn x mn`` matrix as an ``(n, n, m, m)`` grid of blocks."""
    return A.reshape(n, m, n, m).transpose(0, 2, 1, 3)


def from_blocks(grid: np.ndarray) -> np.ndarray:
    n1, n2, m1, m2 = grid.shape
    return grid.transpose(0, 2, 1, 3).reshape(n1 * m1, n2 * m2)


def agreement_basis(n: int, m: int) -> np.ndarray:
    """The ``mn x m`` matrix ``1 (x) I_m`` whose range is the agreement subspace."""
    return np.kron(np.ones((n, 1)), np.eye(m))
