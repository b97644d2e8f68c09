"""Dense statevector backend: trajectory mode and explicit Stinespring registers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .circuit import Cond, DilatedCircuit, GateOp, Measure, WeakMeasure
from .dilation import Trajectory
from .pauli import PauliString

DEFAULT_MAX_QUBITS = 26

_S2 = 1 / np.sqrt(2)
_H = np.array([[1, 1], [1, -1]], dtype=complex) * _S2
GATE_MATRICES = {
    "H": _H,
    "S": np.diag([1, 1j]).astype(complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.diag([1, -1]).astype(complex),
    "CNOT": np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex),
    "CZ": np.diag([1, 1, 1, -1]).astype(complex),
    "SWAP": np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex),
}
_CH = np.eye(4, dtype=complex)
_CH[2:, 2:] = _H
GATE_MATRICES["CH"] = _CH


class BudgetExceeded(ValueError):
    pass


class NormCollapse(ValueError):
    """Projection onto an outcome of zero probability."""


class StateVector:
    """Amplitudes on ``n_qubits``; qubit 0 is the most significant bit."""

    def __init__(self, amplitudes, n_qubits: Optional[int] = None):
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        n = int(round(np.log2(len(amps)))) if n_qubits is None else n_qubits
        if len(amps) != 2 ** n:
            raise ValueError("amplitude count is not 2**n_qubits")
        self.n_qubits = n
        self.amplitudes = amps

    @classmethod
    def zeros(cls, n: int) -> StateVector:
        amps = np.zeros(2 ** n, dtype=complex)
        amps[0] = 1
        return cls(amps, n)

    @classmethod
    def product(cls, single_qubit_states: Sequence) -> StateVector:
        amps = np.array([1.0], dtype=complex)
        for s in single_qubit_states:
            amps = np.kron(amps, np.asarray(s, dtype=complex))
        return cls(amps, len(single_qubit_states))

    def copy(self) -> StateVector:
        return StateVector(self.amplitudes.copy(), self.n_qubits)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def tensor(self, other: StateVector) -> StateVector:
        return StateVector(np.kron(self.amplitudes, other.amplitudes), self.n_qubits + other.n_qubits)

    def to_pairs(self) -> list:
        return [[float(a.real), float(a.imag)] for a in self.amplitudes]


@dataclass
class ReducedDensity:
    subset: tuple
    matrix: np.ndarray


def embed_gate(mat: np.ndarray, targets: Sequence[int], n: int) -> np.ndarray:
    """Full 2**n matrix of a gate on ``targets`` (for small oracle checks)."""
    dim = 2 ** n
    out = np.zeros((dim, dim), dtype=complex)
    for col in range(dim):
        e = np.zeros(dim, dtype=complex)
        e[col] = 1
        out[:, col] = apply_matrix(e, mat, targets, n)
    return out


def apply_matrix(amps: np.ndarray, mat: np.ndarray, targets: Sequence[int], n: int) -> np.ndarray:
    k = len(targets)
    psi = amps.reshape((2,) * n)
    op = mat.reshape((2,) * (2 * k))
    psi = np.tensordot(op, psi, axes=(list(range(k, 2 * k)), list(targets)))
    psi = np.moveaxis(psi, list(range(k)), list(targets))
    return psi.reshape(-1)


def apply_pauli(amps: np.ndarray, p: PauliString, n: int, offset: int = 0) -> np.ndarray:
    """``P|psi>`` for a Pauli string placed on qubits ``offset..``."""
    idx = np.arange(2 ** n, dtype=np.int64)
    xmask = 0
    zmask = 0
    for q in range(p.n_qubits):
        bit = 1 << (n - 1 - (q + offset))
        if p.x[q]:
            xmask |= bit
        if p.z[q]:
            zmask |= bit
    n_y = int(np.count_nonzero(p.x & p.z))
    signs = 1 - 2 * (np.bitwise_count(idx & zmask) & 1).astype(np.int8)
    out = np.empty_like(amps)
    out[idx ^ xmask] = amps * signs
    return out * (p.sign * 1j ** n_y)


def expectation(state: StateVector, p: PauliString) -> float:
    v = apply_pauli(state.amplitudes, p, state.n_qubits)
    return float(np.vdot(state.amplitudes, v).real)


def is_stabilized_by(state: StateVector, p: PauliString, atol: float = 1e-10) -> bool:
    v = apply_pauli(state.amplitudes, p, state.n_qubits)
    return bool(np.allclose(v, state.amplitudes, atol=atol))


class _Outcomes:
    def __init__(self, rng, forced):
        if rng is None or isinstance(rng, (int, np.integer)):
            rng = np.random.default_rng(rng)
        self.rng = rng
        self.forced = list(forced) if forced is not None else None

    def draw(self, reg: int, p1: float) -> int:
        if self.forced is not None and reg < len(self.forced):
            return int(self.forced[reg])
        return int(self.rng.random() < p1)


def _projected(amps, obs: PauliString, n: int, offset: int = 0):
    s_psi = apply_pauli(amps, obs, n, offset)
    return (amps + s_psi) / 2, (amps - s_psi) / 2


def apply_circuit(circuit: DilatedCircuit, initial: Optional[StateVector] = None,
                  mode: str = "trajectory", rng=None, forced: Optional[Sequence[int]] = None,
                  max_qubits: int = DEFAULT_MAX_QUBITS) -> tuple[StateVector, Trajectory]:
    """Run ``circuit`` on a dense state.

    ``trajectory`` mode projects and renormalizes after each measurement and
    records outcomes (``forced`` fixes them by register). ``explicit-dilation``
    mode keeps registers as qubits after the physical ones and never projects.
    """
    n_p = circuit.n_physical
    needed = n_p + (circuit.n_registers if mode in ("explicit-dilation", "explicit") else 0)
    if needed > max_qubits:
        raise BudgetExceeded(f"{needed} qubits exceed the budget of {max_qubits}")
    if initial is None:
        initial = StateVector.zeros(n_p)
    if mode == "trajectory":
        if initial.n_qubits != n_p:
            raise ValueError("initial state must cover the physical qubits")
        return _run_trajectory(circuit, initial, _Outcomes(rng, forced))
    if mode in ("explicit-dilation", "explicit"):
        n_r = circuit.n_registers
        if initial.n_qubits == n_p:
            initial = initial.tensor(StateVector.zeros(n_r))
        elif initial.n_qubits != n_p + n_r:
            raise ValueError("initial state has the wrong number of qubits")
        return _run_dilated(circuit, initial), Trajectory((), 1.0)
    raise ValueError(f"unknown mode {mode!r}")


def _run_trajectory(circuit, initial, outcomes: _Outcomes):
    n = circuit.n_physical
    amps = initial.amplitudes.copy()
    bits: dict = {}
    prob = 1.0
    for op in circuit.ops:
        if isinstance(op, GateOp):
            amps = apply_matrix(amps, GATE_MATRICES[op.gate.kind], op.gate.targets, n)
        elif isinstance(op, Measure):
            plus, minus = _projected(amps, op.obs, n)
            p1 = float(np.vdot(minus, minus).real)
            b = outcomes.draw(op.reg, p1)
            branch = minus if b else plus
            pb = float(np.vdot(branch, branch).real)
            if pb < 1e-14:
                raise NormCollapse(f"outcome {b} of register {op.reg} has zero probability")
            amps = branch / np.sqrt(pb)
            bits[op.reg] = b
            prob *= pb
        elif isinstance(op, WeakMeasure):
            plus, minus = _projected(amps, op.obs, n)
            k0 = plus + np.cos(op.angle) * minus
            k1 = 1j * np.sin(op.angle) * minus
            p1 = float(np.vdot(k1, k1).real)
            b = outcomes.draw(op.reg, p1)
            branch = k1 if b else k0
            pb = float(np.vdot(branch, branch).real)
            if pb < 1e-14:
                raise NormCollapse(f"outcome {b} of register {op.reg} has zero probability")
            amps = branch / np.sqrt(pb)
            bits[op.reg] = b
            prob *= pb
        elif isinstance(op, Cond):
            if sum(bits.get(r, 0) for r in op.parity) % 2:
                amps = apply_matrix(amps, GATE_MATRICES[op.gate.kind], op.gate.targets, n)
        else:
            raise TypeError(f"unknown op {op!r}")
    outcomes_vec = tuple(bits.get(r, 0) for r in range(circuit.n_registers))
    return StateVector(amps, n), Trajectory(outcomes_vec, prob)


def _run_dilated(circuit, state: StateVector) -> StateVector:
    n_p = circuit.n_physical
    n = state.n_qubits
    n_r = n - n_p
    amps = state.amplitudes.copy()
    reg_idx = np.arange(2 ** n_r)
    x2 = GATE_MATRICES["X"]
    for op in circuit.ops:
        if isinstance(op, GateOp):
            amps = apply_matrix(amps, GATE_MATRICES[op.gate.kind], op.gate.targets, n)
        elif isinstance(op, (Measure, WeakMeasure)):
            obs = op.obs.embed(n)
            plus, minus = _projected(amps, obs, n)
            kicked = apply_matrix(minus, x2, (n_p + op.reg,), n)
            if isinstance(op, Measure):
                amps = plus + kicked
            else:
                amps = plus + np.cos(op.angle) * minus + 1j * np.sin(op.angle) * kicked
        elif isinstance(op, Cond):
            mask = np.zeros(2 ** n_r, dtype=bool)
            for r in op.parity:
                mask ^= ((reg_idx >> (n_r - 1 - r)) & 1).astype(bool)
            moved = apply_matrix(amps, GATE_MATRICES[op.gate.kind], op.gate.targets, n)
            a2 = amps.reshape(2 ** n_p, 2 ** n_r)
            m2 = moved.reshape(2 ** n_p, 2 ** n_r)
            amps = np.where(mask[None, :], m2, a2).reshape(-1)
        else:
            raise TypeError(f"unknown op {op!r}")
    return StateVector(amps, n)


def _split(amps: np.ndarray, subset: Sequence[int], n: int) -> np.ndarray:
    psi = amps.reshape((2,) * n)
    rest = [q for q in range(n) if q not in subset]
    psi = np.transpose(psi, list(subset) + rest)
    return psi.reshape(2 ** len(subset), -1)


def reduced_density(s: StateVector, subset: Sequence[int]) -> ReducedDensity:
    subset = tuple(int(q) for q in subset)
    if len(set(subset)) != len(subset) or any(not 0 <= q < s.n_qubits for q in subset):
        raise ValueError(f"invalid subset {subset}")
    a = _split(s.amplitudes, subset, s.n_qubits)
    return ReducedDensity(subset, a @ a.conj().T)


def fidelity(s: StateVector, target: StateVector) -> float:
    """``<target|rho|target>`` where rho is ``s`` reduced to target's leading qubits."""
    if target.n_qubits > s.n_qubits:
        raise ValueError("target has more qubits than the state")
    a = s.amplitudes.reshape(2 ** target.n_qubits, -1)
    v = target.amplitudes.conj() @ a
    return float(np.vdot(v, v).real)


_AXES = {"X": GATE_MATRICES["X"], "Y": GATE_MATRICES["Y"], "Z": GATE_MATRICES["Z"]}


def _as_matrix(obs):
    return _AXES[obs] if isinstance(obs, str) else np.asarray(obs, dtype=complex)


def correlation(s: StateVector, i: int, f: int, obs_i="Z", obs_f="Z",
                traj: Optional[Trajectory] = None, n_physical: Optional[int] = None) -> float:
    """Connected correlator of ``obs_i`` at i and ``obs_f`` at f along a trajectory.

    With ``traj`` the state is read as a dilated state whose registers follow
    the ``n_physical`` physical qubits, and P_n projects onto the outcomes.
    """
    n = s.n_qubits
    amps = s.amplitudes
    if traj is not None:
        if n_physical is None:
            raise ValueError("n_physical is required with a trajectory")
        from .dilation import project_registers
        n_r = n - n_physical
        branch = project_registers(amps, n_physical, n_r, traj)
        amps = np.kron(branch, _register_basis(traj, n_r))
    p_n = float(np.vdot(amps, amps).real)
    if p_n < 1e-14:
        raise NormCollapse("trajectory has zero probability")
    oi = apply_matrix(amps, _as_matrix(obs_i), (i,), n)
    of = apply_matrix(amps, _as_matrix(obs_f), (f,), n)
    oif = apply_matrix(oi, _as_matrix(obs_f), (f,), n)
    e_if = np.vdot(amps, oif).real
    e_i = np.vdot(amps, oi).real
    e_f = np.vdot(amps, of).real
    return float(e_if - e_i * e_f / p_n)


def _register_basis(traj, n_r):
    vec = np.zeros(2 ** n_r)
    idx = 0
    for b in (list(traj.outcomes) + [0] * n_r)[:n_r]:
        idx = 2 * idx + b
    vec[idx] = 1
    return vec


def max_correlation(s: StateVector, i: int, f: int, **kw) -> tuple[float, str, str]:
    """Largest |Cor| over single-qubit Pauli axes at both sites."""
    best = (0.0, "Z", "Z")
    for a in "XYZ":
        for b in "XYZ":
            c = correlation(s, i, f, a, b, **kw)
            if abs(c) > abs(best[0]) + 1e-15:
                best = (c, a, b)
    return best


@dataclass
class SqueezingStats:
    mean_spin: np.ndarray
    spin_std: np.ndarray
    xi2: Optional[float]
    average_correlation: float
    degenerate: bool


def squeezing_stats(s: StateVector) -> SqueezingStats:
    """Collective-spin moments, squeezing parameter and summed pair correlations.

    When the mean spin vanishes the squeezing axis is undefined; ``xi2`` is
    then ``None`` and ``degenerate`` is set.
    """
    n = s.n_qubits
    amps = s.amplitudes
    s_psi = []
    for a in "XYZ":
        acc = np.zeros_like(amps)
        for j in range(n):
            acc += apply_matrix(amps, _AXES[a], (j,), n)
        s_psi.append(acc / 2)
    mean = np.array([np.vdot(amps, v).real for v in s_psi])
    second = np.array([[np.vdot(u, v).real for v in s_psi] for u in s_psi])
    cov = second - np.outer(mean, mean)
    std = np.sqrt(np.clip(np.diag(cov), 0, None))
    total = 0.0
    for u in range(n):
        for v in range(n):
            if u != v:
                total += abs(max_correlation(s, u, v)[0])
    norm = float(np.linalg.norm(mean))
    if norm < 1e-12:
        return SqueezingStats(mean, std, None, total, True)
    m = mean / norm
    trial = np.eye(3)[np.argmin(np.abs(m))]
    e1 = trial - m * (trial @ m)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(m, e1)
    plane = np.array([e1, e2])
    var_min = float(np.linalg.eigvalsh(plane @ cov @ plane.T)[0])
    return SqueezingStats(mean, std, n * var_min / norm ** 2, total, False)


def enumerate_branches(circuit: DilatedCircuit, initial: Optional[StateVector] = None,
                       max_branches: int = 1 << 12) -> list[tuple[StateVector, Trajectory]]:
    """Every nonzero-probability outcome assignment, by forcing registers in turn."""
    n_reg = circuit.n_registers
    if 2 ** n_reg > max_branches:
        raise BudgetExceeded(f"{2 ** n_reg} outcome assignments exceed {max_branches}")
    out = []
    for idx in range(2 ** n_reg):
        bits = [(idx >> (n_reg - 1 - k)) & 1 for k in range(n_reg)]
        try:
            out.append(apply_circuit(circuit, initial, "trajectory", forced=bits))
        except NormCollapse:
            continue
    return out


EIGENSTATES = {
    ("Z", 1): np.array([1, 0], dtype=complex),
    ("Z", -1): np.array([0, 1], dtype=complex),
    ("X", 1): np.array([1, 1], dtype=complex) * _S2,
    ("X", -1): np.array([1, -1], dtype=complex) * _S2,
    ("Y", 1): np.array([1, 1j], dtype=complex) * _S2,
    ("Y", -1): np.array([1, -1j], dtype=complex) * _S2,
}


def single_site_input(n: int, site: int, psi) -> StateVector:
    states = [np.array([1, 0], dtype=complex)] * n
    states[site] = np.asarray(psi, dtype=complex)
    return StateVector.product(states)
