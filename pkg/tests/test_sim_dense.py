import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from measlr.circuit import CircuitBuilder, DilatedCircuit, Measure
from measlr.dilation import Trajectory, measurement_unitary, project_registers, trajectory_probability
from measlr.pauli import PauliString
from measlr.protocols import build_ghz_1d, build_stp, w_vector
from measlr.sim_dense import (
    BudgetExceeded,
    NormCollapse,
    StateVector,
    apply_circuit,
    correlation,
    enumerate_branches,
    fidelity,
    max_correlation,
    reduced_density,
    squeezing_stats,
)

import oracle

# exp(-i pi/8 Sz^2)|++++>; minimal transverse variance from an explicit 16x16 covariance
OAT_XI2 = 0.5238730033111734


def test_bell_circuit():
    b = CircuitBuilder(2)
    b.gate("H", 0).gate("CNOT", 0, 1)
    state, traj = apply_circuit(b.build())
    np.testing.assert_allclose(state.amplitudes, (oracle.ket([0, 0]) + oracle.ket([1, 1])) / np.sqrt(2), atol=1e-15)
    assert traj.outcomes == () and traj.probability == 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_random_gates_match_oracle(seed):
    gen = np.random.default_rng(seed)
    n = 3
    b = CircuitBuilder(n)
    u = np.eye(2 ** n, dtype=complex)
    for _ in range(8):
        if gen.random() < 0.5:
            kind = str(gen.choice(["CNOT", "CZ", "SWAP", "CH"]))
            targets = tuple(int(q) for q in gen.choice(n, 2, replace=False))
        else:
            kind = str(gen.choice(["H", "S", "X", "Y", "Z"]))
            targets = (int(gen.integers(n)),)
        b.gate(kind, *targets)
        u = oracle.gate(kind, targets, n) @ u
    psi = oracle.random_state(n, gen)
    state, _ = apply_circuit(b.build(), StateVector(psi))
    np.testing.assert_allclose(state.amplitudes, u @ psi, atol=1e-12)


def test_norm_collapse_on_forced_impossible_outcome():
    b = CircuitBuilder(1)
    b.measure_z(0)
    with pytest.raises(NormCollapse):
        apply_circuit(b.build(), forced=[1])


def test_budget():
    with pytest.raises(BudgetExceeded):
        apply_circuit(DilatedCircuit(30, []))
    b = CircuitBuilder(3)
    for q in range(3):
        b.measure_z(q)
    with pytest.raises(BudgetExceeded):
        apply_circuit(b.build(), mode="explicit-dilation", max_qubits=5)


def test_fidelity_and_reduced_density():
    gen = np.random.default_rng(3)
    s = StateVector(oracle.random_state(3, gen))
    assert fidelity(s, s) == pytest.approx(1.0, abs=1e-12)
    bell = StateVector((oracle.ket([0, 0]) + oracle.ket([1, 1])) / np.sqrt(2))
    rd = reduced_density(bell, [1])
    np.testing.assert_allclose(rd.matrix, np.eye(2) / 2, atol=1e-15)
    with pytest.raises(ValueError):
        fidelity(bell, s)
    with pytest.raises(ValueError):
        reduced_density(bell, [0, 0])


def test_reduced_density_is_a_density(rng):
    for _ in range(10):
        n = int(rng.integers(2, 6))
        s = StateVector(oracle.random_state(n, rng))
        sub = sorted(rng.choice(n, int(rng.integers(1, n)), replace=False).tolist())
        m = reduced_density(s, sub).matrix
        np.testing.assert_allclose(m, m.conj().T, atol=1e-12)
        assert np.trace(m).real == pytest.approx(1.0, abs=1e-12)
        assert np.linalg.eigvalsh(m).min() > -1e-10
        np.testing.assert_allclose(m, oracle.partial_trace_keep(s.amplitudes, n, sub), atol=1e-12)


def test_ghz_protocol_fidelity_per_branch():
    inst = build_ghz_1d(1, 4)
    n = inst.circuit.n_physical
    target = np.zeros(2 ** n, dtype=complex)
    target[0] = target[-1] = 1 / np.sqrt(2)
    branches = enumerate_branches(inst.circuit)
    assert sum(t.probability for _, t in branches) == pytest.approx(1.0, abs=1e-12)
    for s, _ in branches:
        assert fidelity(s, StateVector(target)) == pytest.approx(1.0, abs=1e-12)


def test_correlation_examples():
    ghz = np.zeros(8, dtype=complex)
    ghz[0] = ghz[-1] = 1 / np.sqrt(2)
    assert correlation(StateVector(ghz), 0, 2) == pytest.approx(1.0, abs=1e-12)
    prod = StateVector.product([oracle.H @ [1, 0], [1, 0], np.array([1, 1j]) / np.sqrt(2)])
    for a, b in itertools.product("XYZ", repeat=2):
        assert correlation(prod, 0, 2, a, b) == pytest.approx(0.0, abs=1e-12)
    w4 = StateVector(w_vector(4))
    assert correlation(w4, 0, 3, "X", "X") == pytest.approx(0.5, abs=1e-12)
    # brute force on the explicit W vector
    v = w_vector(4)
    xx = oracle.single(4, 0, oracle.X) @ oracle.single(4, 3, oracle.X)
    assert np.vdot(v, xx @ v).real == pytest.approx(0.5, abs=1e-12)
    assert abs(max_correlation(w4, 0, 3)[0]) >= 0.5 - 1e-12


def test_trajectory_resolved_correlation():
    # measuring X on the middle GHZ qubit leaves the ends in a Bell pair
    ghz = np.zeros(8, dtype=complex)
    ghz[0] = ghz[-1] = 1 / np.sqrt(2)
    b = CircuitBuilder(3)
    b.measure(PauliString.single(3, "X", 1))
    state, _ = apply_circuit(b.build(), StateVector(ghz), mode="explicit-dilation")
    for bit in (0, 1):
        c = correlation(state, 0, 2, "Z", "Z", traj=Trajectory((bit,)), n_physical=3)
        # unnormalized convention: weighted by p_n = 1/2
        assert c == pytest.approx(0.5, abs=1e-12)
    # measuring Z instead collapses the ends to a product state
    b = CircuitBuilder(3)
    b.measure_z(1)
    state, _ = apply_circuit(b.build(), StateVector(ghz), mode="explicit-dilation")
    for bit in (0, 1):
        assert correlation(state, 0, 2, traj=Trajectory((bit,)), n_physical=3) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(NormCollapse):
        b2 = CircuitBuilder(1)
        b2.measure_z(0)
        st0, _ = apply_circuit(b2.build(), mode="explicit-dilation")
        correlation(st0, 0, 0, traj=Trajectory((1,)), n_physical=1)


def test_squeezing_examples():
    for n in (1, 3, 4):
        stats = squeezing_stats(StateVector.zeros(n))
        assert stats.xi2 == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(stats.spin_std[:2], np.sqrt(n / 4), atol=1e-12)
    n = 4
    sz = np.array([sum(0.5 - b for b in bits) for bits in itertools.product([0, 1], repeat=n)])
    plus = np.ones(2 ** n) / 4
    oat = StateVector(np.exp(-1j * np.pi / 8 * sz ** 2) * plus)
    stats = squeezing_stats(oat)
    assert stats.xi2 == pytest.approx(OAT_XI2, abs=1e-10)
    assert stats.xi2 < 1


def test_squeezing_degenerate_axis():
    ghz = np.zeros(8, dtype=complex)
    ghz[0] = ghz[-1] = 1 / np.sqrt(2)
    stats = squeezing_stats(StateVector(ghz))
    assert stats.degenerate and stats.xi2 is None
    assert stats.average_correlation == pytest.approx(6.0, abs=1e-12)


def test_explicit_dilation_matches_trajectory_mode():
    c = build_stp().circuit
    gen = np.random.default_rng(5)
    psi = StateVector.product([oracle.random_state(1, gen), [1, 0], [1, 0]])
    dilated, _ = apply_circuit(c, psi, mode="explicit-dilation")
    for bits in itertools.product([0, 1], repeat=2):
        traj = Trajectory(bits)
        branch = project_registers(dilated.amplitudes, 3, 2, traj)
        p = trajectory_probability(dilated, traj, 3)
        state, t2 = apply_circuit(c, psi, forced=list(bits))
        assert t2.probability == pytest.approx(p, abs=1e-12)
        np.testing.assert_allclose(branch / np.sqrt(p), state.amplitudes, atol=1e-12)


def test_outcome_average_equals_partial_trace():
    c = build_stp(feedback=False).circuit
    gen = np.random.default_rng(9)
    psi = StateVector.product([oracle.random_state(1, gen), [1, 0], [1, 0]])
    dilated, _ = apply_circuit(c, psi, mode="explicit-dilation")
    traced = reduced_density(dilated, [0, 1, 2]).matrix
    avg = sum(t.probability * np.outer(s.amplitudes, s.amplitudes.conj()) for s, t in enumerate_branches(c, psi))
    np.testing.assert_allclose(avg, traced, atol=1e-12)
    # the twirl: target site is maximally mixed
    np.testing.assert_allclose(reduced_density(dilated, [2]).matrix, np.eye(2) / 2, atol=1e-12)


def test_heisenberg_schrodinger_duality_for_measurement(rng):
    for _ in range(5):
        s = PauliString.from_label("+" + "".join(rng.choice(list("XYZ"), 2)))
        u = measurement_unitary(Measure(s, 0)).matrix(1)
        a = np.kron(oracle.pauli("".join(rng.choice(list("IXYZ"), 2))), oracle.LETTERS[str(rng.choice(list("IXYZ")))])
        psi = np.kron(oracle.random_state(2, rng), [1, 0])
        lhs = np.vdot(u @ psi, a @ (u @ psi))
        rhs = np.vdot(psi, u.conj().T @ a @ u @ psi)
        assert lhs == pytest.approx(rhs, abs=1e-12)


def test_state_dump_pairs():
    s = StateVector(np.array([1, 1j]) / np.sqrt(2))
    pairs = s.to_pairs()
    assert pairs[1][0] == pytest.approx(0.0) and pairs[1][1] == pytest.approx(1 / np.sqrt(2))
