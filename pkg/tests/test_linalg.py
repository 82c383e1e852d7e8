import mpmath
import numpy as np
import pytest
import scipy.linalg
import sympy
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from linconsensus.errors import ComputationError, InputError, StructuralError
from linconsensus.linalg import (
    DEFAULT_TOL,
    TolerancePolicy,
    agreement_basis,
    block_view,
    eigenvalues,
    from_blocks,
    left_null_space_basis,
    matrix_exponential,
    null_space_basis,
    numeric_rank,
    rank_chain,
    spectral_projector_onto_nullspace,
)
from reference import EX_A, EX_LEFT_NULL, EX_LIMIT

small_ints = arrays(np.float64, st.tuples(st.integers(2, 6), st.integers(2, 6)),
                    elements=st.integers(-3, 3).map(float))


def test_tolerance_defaults_and_validation():
    tol = TolerancePolicy()
    assert (tol.rank_rel, tol.eig_zero_rel, tol.convergence_abs) == (1e-10, 1e-9, 1e-6)
    assert tol.rank_cutoff(2.0, (3, 5)) == pytest.approx(1e-9)
    with pytest.raises(InputError):
        TolerancePolicy(rank_rel=0)
    with pytest.raises(InputError):
        TolerancePolicy(eig_zero_rel=float("nan"))


def test_tolerance_from_env():
    tol = TolerancePolicy.from_env({"LINCONSENSUS_TOL": "rank_rel=1e-8, convergence_abs=1e-5"})
    assert tol.rank_rel == 1e-8 and tol.convergence_abs == 1e-5 and tol.eig_zero_rel == 1e-9
    assert TolerancePolicy.from_env({}) == DEFAULT_TOL
    with pytest.raises(InputError):
        TolerancePolicy.from_env({"LINCONSENSUS_TOL": "bogus=1"})


@pytest.mark.parametrize("M, rank", [(np.eye(4), 4), (np.zeros((3, 3)), 0), (EX_A, 2)])
def test_numeric_rank_examples(M, rank):
    assert numeric_rank(M) == rank


def test_numeric_rank_rejects_nonfinite():
    with pytest.raises(InputError):
        numeric_rank(np.array([[1.0, np.inf], [0, 1]]))


@given(small_ints)
def test_rank_matches_exact_rank(M):
    # integer matrices: sympy computes the rank exactly
    assert numeric_rank(M) == sympy.Matrix(M.astype(int)).rank()


@given(small_ints)
def test_rank_nullity(M):
    B = null_space_basis(M)
    assert numeric_rank(M) + B.shape[1] == M.shape[1]
    if B.shape[1]:
        assert np.allclose(B.T @ B, np.eye(B.shape[1]), atol=1e-12)
        assert np.max(np.abs(M @ B)) <= 1e-9 * max(1.0, np.linalg.norm(M, 2))


def test_null_space_examples():
    assert null_space_basis(np.zeros((2, 2))).shape == (2, 2)
    assert null_space_basis(np.eye(3)).shape == (3, 0)
    B = null_space_basis(EX_A)
    assert B.shape == (4, 2)
    # hand solution: kernel is {(a, b, a, b)}
    assert np.allclose(B[:2], B[2:], atol=1e-12)


def test_left_null_space_example():
    F = left_null_space_basis(EX_A)
    assert F.shape == (2, 4)
    assert np.max(np.abs(F @ EX_A)) < 1e-12
    # same row space as the printed annihilator
    assert numeric_rank(np.vstack([F, EX_LEFT_NULL])) == 2


def test_left_null_space_symmetric_and_full_rank(rng):
    S = rng.standard_normal((4, 2))
    M = S @ S.T
    L = left_null_space_basis(M)
    R = null_space_basis(M)
    assert numeric_rank(np.vstack([L, R.T])) == 2
    G = rng.standard_normal((5, 5)) @ rng.standard_normal((5, 5))
    assert left_null_space_basis(G).shape == (0, 5)


def test_eigenvalue_examples():
    assert np.allclose(eigenvalues(np.diag([-1.0, -2.0])).eigenvalues, [-2, -1])
    assert np.allclose(eigenvalues(np.array([[-1.0, 1], [1, -1]])).eigenvalues, [-2, 0], atol=1e-15)
    spec = eigenvalues(EX_A)
    # characteristic polynomial lambda^2 (lambda^2 + 2 lambda + 2)
    lam = sympy.symbols("lam")
    roots = sympy.Poly(sympy.Matrix(EX_A.astype(int)).charpoly(lam)).nroots()
    assert np.allclose(np.sort_complex(spec.eigenvalues), np.sort_complex(np.array(roots, dtype=complex)), atol=1e-12)
    assert spec.classes().count("zero") == 2 and spec.classes().count("stable") == 2


@given(arrays(np.float64, (5, 5), elements=st.floats(-5, 5)))
def test_eigenvalues_conjugate_and_sorted(M):
    ev = eigenvalues(M).eigenvalues
    assert np.allclose(np.sort_complex(ev), np.sort_complex(ev.conj()))
    keys = [(z.real, z.imag) for z in ev]
    assert keys == sorted(keys)


def test_eigenvalue_classes_borderline():
    M = np.diag([0.0, -1.0, 1e-7])
    spec = eigenvalues(M)
    assert spec.classes() == ["stable", "zero", "unstable"]
    assert list(spec.borderline()) == [False, False, True]


def test_expm_trivial():
    assert np.array_equal(matrix_exponential(np.zeros((3, 3))), np.eye(3))
    assert np.allclose(matrix_exponential(np.diag([1.0, -2.0])), np.diag([np.e, np.exp(-2)]), rtol=1e-14)


@given(arrays(np.float64, (4, 4), elements=st.floats(-10, 10)))
def test_expm_against_scipy(M):
    ours = matrix_exponential(M)
    ref = scipy.linalg.expm(M)
    assert np.allclose(ours, ref, rtol=1e-10, atol=1e-12 * np.max(np.abs(ref)))


def test_expm_against_high_precision(rng):
    for _ in range(10):
        M = rng.standard_normal((6, 6)) * rng.uniform(0.1, 15)
        with mpmath.workdps(40):
            ref = np.array(mpmath.expm(mpmath.matrix(M.tolist())).tolist(), dtype=float)
        err = np.linalg.norm(matrix_exponential(M) - ref) / np.linalg.norm(ref)
        assert err < 1e-12


def test_expm_semigroup(rng):
    for _ in range(20):
        M = rng.standard_normal((6, 6))
        s, t = rng.uniform(0, 2, 2)
        lhs = matrix_exponential(M * (s + t))
        rhs = matrix_exponential(M * s) @ matrix_exponential(M * t)
        assert np.linalg.norm(lhs - rhs) <= 1e-9 * np.linalg.norm(lhs)


def test_expm_decays_for_stable(rng):
    eps = 0.2
    Q = rng.standard_normal((5, 5))
    M = -(Q.T @ Q + eps * np.eye(5))
    assert np.max(np.abs(matrix_exponential(M * 100 / eps))) < DEFAULT_TOL.convergence_abs


def test_expm_overflow():
    with pytest.raises(ComputationError):
        matrix_exponential(np.array([[1e6]]))


def test_expm_example_at_fifty():
    assert np.max(np.abs(matrix_exponential(EX_A * 50) - EX_LIMIT)) <= 1e-6


def test_projector_examples():
    assert np.array_equal(spectral_projector_onto_nullspace(np.eye(3) * -2), np.zeros((3, 3)))
    assert np.array_equal(spectral_projector_onto_nullspace(np.zeros((3, 3))), np.eye(3))
    assert np.max(np.abs(spectral_projector_onto_nullspace(EX_A) - EX_LIMIT)) <= 1e-12
    with pytest.raises(StructuralError):
        spectral_projector_onto_nullspace(np.array([[0.0, 1], [0, 0]]))


def test_projector_properties(rng):
    for _ in range(30):
        k, r = 6, int(rng.integers(1, 4))
        S = rng.standard_normal((k, k))
        J = np.zeros((k, k))
        J[r:, r:] = rng.standard_normal((k - r, k - r))
        A = np.linalg.solve(S, J @ S)
        P = spectral_projector_onto_nullspace(A)
        nA = np.linalg.norm(A, 2)
        assert np.linalg.norm(P @ P - P) < 1e-8 * np.linalg.norm(P)
        assert np.linalg.norm(A @ P) < 1e-8 * nA and np.linalg.norm(P @ A) < 1e-8 * nA
        assert numeric_rank(P) == r


def test_rank_chain_detects_jordan_block():
    assert rank_chain(np.array([[0.0, 1], [0, 0]])) == (1, 0)
    assert rank_chain(EX_A) == (2, 2)


def test_block_helpers_roundtrip(rng):
    A = rng.standard_normal((6, 6))
    grid = block_view(A, 3, 2)
    assert np.array_equal(grid[1, 2], A[2:4, 4:6])
    assert np.array_equal(from_blocks(grid), A)
    assert np.array_equal(agreement_basis(3, 2), np.kron(np.ones((3, 1)), np.eye(2)))
