import networkx as nx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from linconsensus import (
    BlockLaplacian,
    SwitchedSystem,
    SwitchingSignal,
    SystemMatrix,
    block_laplacian_spectrum_check,
    check_switched_assumptions,
    incidence_from_edges,
    is_block_laplacian,
    laplacian_from_incidence,
    lyapunov_audit,
    quadratic_form_identity,
    random_block_laplacian,
    simulate_switched,
)
from linconsensus.errors import InputError, StructuralError
from linconsensus.linalg import matrix_exponential


def _spd(rng, m):
    Q = rng.standard_normal((m, m))
    return Q.T @ Q + 0.5 * np.eye(m)


def _complete(n):
    return n * np.eye(n) - np.ones((n, n))


def test_kron_complete_graph_is_block_laplacian(rng):
    K = _spd(rng, 2)
    assert is_block_laplacian(np.kron(_complete(3), K), 3, 2).passed


def test_path_graph_kron_is_not():
    path = np.array([[1.0, -1, 0], [-1, 2, -1], [0, -1, 1]])
    rep = is_block_laplacian(np.kron(path, np.eye(2)), 3, 2)
    assert [c.name for c in rep.failures()] == ["couplings L_ij (i != j) symmetric positive definite"]


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_generator_self_consistent(seed):
    L = random_block_laplacian(4, 2, seed)
    assert is_block_laplacian(L, 4, 2).passed
    assert block_laplacian_spectrum_check(L).passed
    assert np.array_equal(L.L, random_block_laplacian(4, 2, seed).L)


def test_complete_graph_spectrum(rng):
    K = _spd(rng, 2)
    L = BlockLaplacian(np.kron(_complete(3), K), 3, 2)
    res = block_laplacian_spectrum_check(L)
    assert res.passed and res.zero_count == 2
    assert res.lambda_next == pytest.approx(3 * np.linalg.eigvalsh(K)[0], rel=1e-12)
    scaled = block_laplacian_spectrum_check(BlockLaplacian(4.0 * L.L, 3, 2))
    assert scaled.lambda_next == pytest.approx(4.0 * res.lambda_next, rel=1e-12)


def test_spectrum_check_flags_bad_input():
    # two disconnected pairs: four zero eigenvalues instead of m = 2
    L = np.kron(np.kron(np.eye(2), np.array([[1.0, -1], [-1, 1]])), np.eye(2))
    res = block_laplacian_spectrum_check(BlockLaplacian(L, 4, 2))
    assert not res.passed and res.zero_count == 4


def test_quadratic_form_examples():
    L = BlockLaplacian(np.array([[1.0, -1], [-1, 1]]), 2, 1)
    assert quadratic_form_identity(L, [1.0, 0.0]) == (1.0, 1.0)
    L3 = random_block_laplacian(3, 2, 0)
    a, b = quadratic_form_identity(L3, np.tile([1.5, -2.0], 3))
    assert abs(a) < 1e-12 and abs(b) < 1e-12


@given(st.integers(2, 5), st.integers(1, 3), st.integers(0, 2**31))
def test_quadratic_form_identity_random(n, m, seed):
    L = random_block_laplacian(n, m, seed)
    x = np.random.default_rng(seed + 1).standard_normal(n * m)
    a, b = quadratic_form_identity(L, x)
    assert a == pytest.approx(b, rel=1e-9, abs=1e-12)


def test_incidence_and_laplacian():
    assert np.array_equal(laplacian_from_incidence(incidence_from_edges([(0, 1)])), [[1, -1], [-1, 1]])
    tri = laplacian_from_incidence(incidence_from_edges([(0, 1), (1, 2), (0, 2)]))
    assert np.array_equal(tri, 3 * np.eye(3) - np.ones((3, 3)))
    assert np.allclose(np.linalg.eigvalsh(tri), [0, 3, 3])
    path = laplacian_from_incidence(incidence_from_edges([(0, 1), (1, 2)]))
    assert np.allclose(np.linalg.eigvalsh(path), [0, 1, 3])


def test_incidence_orientation_min_to_max():
    B = incidence_from_edges([(2, 0)])
    assert B[:, 0].tolist() == [-1, 0, 1]


def test_incidence_errors():
    with pytest.raises(InputError):
        incidence_from_edges([(1, 1)])
    with pytest.raises(InputError):
        incidence_from_edges([(0, 1), (1, 0)])
    with pytest.raises(InputError):
        laplacian_from_incidence(np.array([[1.0], [1.0]]))
    with pytest.raises(InputError):
        laplacian_from_incidence(np.array([[2.0], [-1.0]]))


def test_laplacian_matches_networkx(rng):
    for _ in range(10):
        G = nx.gnp_random_graph(7, 0.5, seed=int(rng.integers(1 << 30)))
        edges = list(G.edges())
        if not edges:
            continue
        L = laplacian_from_incidence(incidence_from_edges(edges, 7))
        assert np.array_equal(L, nx.laplacian_matrix(G, nodelist=range(7)).toarray())


def _family(n, m, k, seed):
    rng = np.random.default_rng(seed)
    return SwitchedSystem.from_block_laplacians([random_block_laplacian(n, m, rng) for _ in range(k)])


def test_assumptions_hold_for_block_laplacians():
    rep = check_switched_assumptions(_family(3, 2, 2, 0))
    assert rep.passed, rep.format()


def test_assumption_two_detects_asymmetry():
    sw = _family(3, 2, 2, 0)
    A = sw.subsystems[1].A.copy()
    A[0, 3] += 0.3
    A[0, 0] -= 0.3  # keep (3): only the coupling block is now asymmetric
    sw = SwitchedSystem([sw.subsystems[0], SystemMatrix(A, 3, 2)], sw.F)
    rep = check_switched_assumptions(sw)
    assert not rep["A1: (2) off-diagonal blocks symmetric positive definite"].passed
    assert rep["A0: (2) off-diagonal blocks symmetric positive definite"].passed


def test_assumption_four_detects_mismatched_chi(rng):
    sw = _family(3, 1, 2, 1)
    # similarity by a diagonal matrix moves the left null space of one subsystem
    D = np.diag([1.0, 2.0, 3.0])
    A = np.linalg.solve(D, sw.subsystems[1].A @ D)
    sw = SwitchedSystem([sw.subsystems[0], SystemMatrix(A, 3, 1)], sw.F)
    rep = check_switched_assumptions(sw)
    assert not rep["A1: (4) common consensus function: F A = 0, F_1+...+F_n = I, F_i > 0"].passed
    assert rep["A0: (4) common consensus function: F A = 0, F_1+...+F_n = I, F_i > 0"].passed


def test_switching_signal_validation():
    with pytest.raises(InputError):
        SwitchingSignal(())
    with pytest.raises(InputError):
        SwitchingSignal(((0.0, 0),))
    sig = SwitchingSignal(((0.5, 0), (1.5, 1)))
    assert sig.total_time == 2.0 and sig.switch_times == [0.0, 0.5, 2.0]


def test_random_signal_properties():
    sig = SwitchingSignal.random(3, 20.0, seed=4)
    assert sig.total_time == pytest.approx(20.0, abs=1e-12)
    assert all(d <= 2.0 for d, _ in sig.segments)
    assert all(d >= 0.1 for d, _ in sig.segments[:-1])
    assert SwitchingSignal.random(3, 20.0, seed=4) == sig


def test_equilibrium_trajectory():
    sw = _family(3, 2, 2, 2)
    x0 = np.tile([1.0, -2.0], 3)
    traj = simulate_switched(sw, SwitchingSignal(((1.0, 0), (1.0, 1))), x0)
    assert np.allclose(traj.states, x0, atol=1e-12)
    assert np.max(np.abs(traj.V)) < 1e-24
    assert lyapunov_audit(traj, sw).passed


def test_single_segment_matches_expm(rng):
    sw = _family(3, 2, 1, 3)
    x0 = rng.standard_normal(6)
    traj = simulate_switched(sw, SwitchingSignal(((2.0, 0),)), x0, sample_dt=0.25)
    A = sw.subsystems[0].A
    for i in (1, 3, 4, 6, 8):
        assert np.allclose(traj.states[i], matrix_exponential(A * traj.times[i]) @ x0, atol=1e-14)


def test_switch_instants_are_samples():
    sw = _family(2, 1, 2, 0)
    sig = SwitchingSignal(((0.123, 0), (0.4567, 1), (0.2, 0)))
    traj = simulate_switched(sw, sig, [1.0, 0.0], sample_dt=0.1)
    for t in sig.switch_times:
        assert np.any(np.isclose(traj.times, t, rtol=0, atol=1e-15))
    assert np.all(np.diff(traj.times) > 0)


def test_alternating_schedule_converges_to_average(rng):
    sw = _family(3, 2, 2, 5)
    sig = SwitchingSignal(tuple((0.5, k % 2) for k in range(40)))
    x0 = rng.standard_normal(6)
    traj = simulate_switched(sw, sig, x0)
    assert np.linalg.norm(traj.delta[-1]) < 1e-6 * np.linalg.norm(x0)
    ave = x0.reshape(3, 2).mean(axis=0)
    assert np.allclose(traj.states[-1].reshape(3, 2), ave, atol=1e-6)
    assert lyapunov_audit(traj, sw).passed


@pytest.mark.parametrize("seed", range(5))
def test_chi_invariant_and_v_decreasing(seed):
    rng = np.random.default_rng(seed)
    sw = _family(4, 2, 3, seed)
    sig = SwitchingSignal.random(3, 5.0, rng)
    x0 = rng.standard_normal(8)
    traj = simulate_switched(sw, sig, x0)
    chi = traj.states @ sw.F.T
    assert np.max(np.abs(chi - chi[0])) <= 1e-7 * np.linalg.norm(x0)
    norm = np.linalg.norm(traj.delta, axis=1)
    active = norm[:-1] > 1e-6
    assert np.all(np.diff(traj.V)[active] < 0)


def test_fast_switching(rng):
    sw = _family(3, 2, 3, 9)
    sig = SwitchingSignal.random(3, 2.0, rng, dwell=(1e-3, 1e-2))
    traj = simulate_switched(sw, sig, rng.standard_normal(6), sample_dt=0.05)
    assert lyapunov_audit(traj, sw).passed


def test_sampling_never_changes_states(rng):
    sw = _family(3, 2, 2, 6)
    sig = SwitchingSignal.random(2, 3.0, rng)
    x0 = rng.standard_normal(6)
    coarse = simulate_switched(sw, sig, x0, sample_dt=0.1)
    fine = simulate_switched(sw, sig, x0, sample_dt=0.025)
    for t, x in zip(coarse.times, coarse.states):
        j = int(np.argmin(np.abs(fine.times - t)))
        if abs(fine.times[j] - t) < 1e-12:
            assert np.max(np.abs(fine.states[j] - x)) <= 1e-12


def test_simulation_refuses_invalid_family():
    sw = _family(3, 1, 2, 1)
    D = np.diag([1.0, 2.0, 3.0])
    bad = SwitchedSystem([sw.subsystems[0], SystemMatrix(np.linalg.solve(D, sw.subsystems[1].A @ D), 3, 1)], sw.F)
    sig = SwitchingSignal(((1.0, 0), (1.0, 1)))
    with pytest.raises(StructuralError, match="assumption failed"):
        simulate_switched(bad, sig, [1.0, 2.0, 3.0])
    traj = simulate_switched(bad, sig, [1.0, 2.0, 3.0], unsafe=True)
    audit = lyapunov_audit(traj, bad)
    assert not audit.report["F delta = 0"].passed


def test_simulation_input_errors():
    sw = _family(2, 1, 1, 0)
    sig = SwitchingSignal(((1.0, 0),))
    with pytest.raises(InputError):
        simulate_switched(sw, sig, [1.0])
    with pytest.raises(InputError):
        simulate_switched(sw, SwitchingSignal(((1.0, 3),)), [1.0, 0.0])
    with pytest.raises(InputError):
        simulate_switched(sw, sig, [np.nan, 0.0])


def test_trajectory_csv(tmp_path):
    sw = _family(2, 1, 1, 0)
    traj = simulate_switched(sw, SwitchingSignal(((0.05, 0),)), [1.0, 0.0])
    path = tmp_path / "t.csv"
    traj.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,x_1,x_2,V"
    assert len(lines) == len(traj.times) + 1
    assert float(lines[-1].split(",")[0]) == pytest.approx(0.05)
