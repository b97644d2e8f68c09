"""Stinespring-dilated measurement and feedback channels.

Registers are extra qubits appended after the physical ones; every register
starts in |0> and a measurement flips it when the outcome is -1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Union

import numpy as np

from .circuit import Cond, DilatedCircuit, Measure, WeakMeasure
from .pauli import CliffordGate, PauliString, commutes, conjugate_by_clifford, product

MeasurementOp = Measure
WeakMeasurementOp = WeakMeasure
ConditionedGate = Cond

_X2 = np.array([[0, 1], [1, 0]], dtype=complex)
_I2 = np.eye(2, dtype=complex)


class NonPauliResultError(ValueError):
    """A pure-Pauli result was requested where the conjugation produces a sum."""


@dataclass
class DilatedIndexMap:
    """Maps measurement ids to Stinespring registers, allocated in first-use order."""

    n_physical: int
    register_of_measurement: dict = field(default_factory=dict)

    @property
    def n_stinespring(self) -> int:
        return len(self.register_of_measurement)

    def register(self, measurement_id) -> int:
        if measurement_id not in self.register_of_measurement:
            self.register_of_measurement[measurement_id] = len(self.register_of_measurement)
        return self.register_of_measurement[measurement_id]

    def dilated_index(self, reg: int) -> int:
        if not 0 <= reg < self.n_stinespring:
            raise IndexError(f"register {reg} not allocated")
        return self.n_physical + reg


@dataclass(frozen=True)
class Trajectory:
    outcomes: tuple
    probability: float = 1.0


# --- dilated Pauli operators -------------------------------------------------

@dataclass(frozen=True, eq=False)
class DilatedPauli:
    """``i**phase * phys (x) reg``; both strings carry sign +1."""

    phys: PauliString
    reg: PauliString
    phase: int = 0

    def __post_init__(self):
        k = self.phase
        if self.phys.sign < 0:
            k += 2
        if self.reg.sign < 0:
            k += 2
        object.__setattr__(self, "phys", self.phys.with_sign(1))
        object.__setattr__(self, "reg", self.reg.with_sign(1))
        object.__setattr__(self, "phase", k % 4)

    @classmethod
    def physical(cls, p: PauliString, n_registers: int) -> DilatedPauli:
        return cls(p, PauliString.identity(n_registers))

    @property
    def coefficient(self) -> complex:
        return 1j ** self.phase

    def reg_letter(self, reg: int) -> str:
        return self.reg.letter(reg)

    def stinespring_support(self) -> list[int]:
        return self.reg.support()

    def __mul__(self, other: DilatedPauli) -> DilatedPauli:
        k1, p = product(self.phys, other.phys)
        k2, r = product(self.reg, other.reg)
        return DilatedPauli(p, r, self.phase + other.phase + k1 + k2)

    def scaled(self, k: int) -> DilatedPauli:
        return DilatedPauli(self.phys, self.reg, self.phase + k)

    def __eq__(self, other):
        if not isinstance(other, DilatedPauli):
            return NotImplemented
        return self.phase == other.phase and self.phys == other.phys and self.reg == other.reg

    def __hash__(self):
        return hash((self.phase, self.phys, self.reg))

    def __repr__(self):
        return f"DilatedPauli(i^{self.phase} {self.phys.to_text()} (x) ss{self.reg.to_text()})"

    def to_matrix(self) -> np.ndarray:
        return self.coefficient * np.kron(self.phys.to_matrix(), self.reg.to_matrix())

    def physical_part(self) -> PauliString:
        """Physical factor with the phase folded into a sign (phase must be real)."""
        if self.phase % 2:
            raise ValueError("operator is anti-Hermitian")
        return self.phys.with_sign(-1 if self.phase == 2 else 1)


@dataclass(frozen=True)
class DilatedSum:
    """Linear combination of dilated Pauli operators."""

    terms: tuple  # of (complex, DilatedPauli)

    def to_matrix(self) -> np.ndarray:
        return sum(c * t.to_matrix() for c, t in self.terms)


DilatedOperator = Union[DilatedPauli, DilatedSum]


def register_projector(n_phys: int, n_registers: int, reg: int, bit: int) -> DilatedSum:
    """|bit><bit| on one register as the sum (I +- Z)/2."""
    ident = DilatedPauli(PauliString.identity(n_phys), PauliString.identity(n_registers))
    z = DilatedPauli(PauliString.identity(n_phys), PauliString.single(n_registers, "Z", reg))
    return DilatedSum(((0.5, ident), (0.5 if bit == 0 else -0.5, z)))


def _set_reg_letter(reg: PauliString, k: int, letter: str) -> PauliString:
    letters = {j: reg.letter(j) for j in reg.support()}
    letters[k] = letter
    return PauliString.from_sites(reg.n_qubits, {j: c for j, c in letters.items() if c != "I"})


def conjugate_through_measurement(a: DilatedOperator, m: Measure) -> DilatedOperator:
    """``U^dagger a U`` for the measurement unitary U = P+ (x) I + P- (x) X on ``m.reg``.

    Sums are conjugated term by term; each term's physical part must commute or
    anticommute with the observable.
    """
    if isinstance(a, DilatedSum):
        return DilatedSum(tuple((c, conjugate_through_measurement(t, m)) for c, t in a.terms))
    s = m.obs
    if s.n_qubits != a.phys.n_qubits:
        raise ValueError("observable and operator have different physical sizes")
    if a.reg.n_qubits <= m.reg:
        raise IndexError(f"register {m.reg} not present on operator")
    letter = a.reg_letter(m.reg)
    k_s, s_abs = 2 * (s.sign < 0), s.with_sign(1)
    if commutes(a.phys, s_abs):
        if letter in ("I", "X"):
            return a
        k, ps = product(a.phys, s_abs)
        return DilatedPauli(ps, a.reg, a.phase + k + k_s)
    if letter == "I":
        return DilatedPauli(a.phys, _set_reg_letter(a.reg, m.reg, "X"), a.phase)
    if letter == "X":
        return DilatedPauli(a.phys, _set_reg_letter(a.reg, m.reg, "I"), a.phase)
    k, ps = product(a.phys, s_abs)
    if letter == "Y":
        return DilatedPauli(ps, _set_reg_letter(a.reg, m.reg, "Z"), a.phase + k + k_s + 1)
    return DilatedPauli(ps, _set_reg_letter(a.reg, m.reg, "Y"), a.phase + k + k_s + 3)


def conjugate_through_conditioned(a: DilatedOperator, c: Cond) -> DilatedOperator:
    """``R^dagger a R`` for R = (even parity) (x) I + (odd parity) (x) G.

    A Pauli feedback gate either leaves ``a`` alone or attaches the parity
    string Z~_K. Other Clifford gates give a two-term sum.
    """
    if isinstance(a, DilatedSum):
        return DilatedSum(tuple((w, conjugate_through_conditioned(t, c)) for w, t in a.terms))
    if not isinstance(c.gate, CliffordGate):
        raise NonPauliResultError(f"conditioned {c.gate.kind} is not Clifford")
    n_reg = a.reg.n_qubits
    zk = PauliString.uniform(n_reg, "Z", c.parity)
    if not commutes(a.reg, zk):
        raise NonPauliResultError("register factor does not commute with the parity condition")
    b = conjugate_by_clifford(a.phys, c.gate)
    same = np.array_equal(b.x, a.phys.x) and np.array_equal(b.z, a.phys.z)
    if not same:
        base = DilatedPauli(a.phys, a.reg, a.phase)
        flipped = DilatedPauli(b, a.reg, a.phase)
        zpart = DilatedPauli(PauliString.identity(a.phys.n_qubits), zk)
        return DilatedSum((
            (0.5, base), (0.5, flipped), (0.5, base * zpart), (-0.5, flipped * zpart),
        ))
    if b.sign > 0:
        return a
    k, reg = product(a.reg, zk)
    return DilatedPauli(a.phys, reg, a.phase + k)


# --- dense descriptions -------------------------------------------------------

@dataclass(frozen=True)
class MeasurementChannel:
    """Sum over outcomes n of P_n (x) A_n, with P_n = (1 + (-1)^n S)/2."""

    obs: PauliString
    reg: int
    actions: tuple  # (A_0, A_1) as 2x2 arrays

    def projectors(self) -> tuple:
        s = self.obs.to_matrix()
        ident = np.eye(s.shape[0])
        return (ident + s) / 2, (ident - s) / 2

    def matrix(self, n_registers: int) -> np.ndarray:
        """Full dilated matrix with registers after the physical qubits."""
        if not 0 <= self.reg < n_registers:
            raise IndexError(f"register {self.reg} out of range")
        p0, p1 = self.projectors()
        out = 0
        for p, act in zip((p0, p1), self.actions):
            reg_op = np.array([[1.0]], dtype=complex)
            for k in range(n_registers):
                reg_op = np.kron(reg_op, act if k == self.reg else _I2)
            out = out + np.kron(p, reg_op)
        return out


def _check_involutory(obs: PauliString):
    if not isinstance(obs, PauliString):
        raise TypeError("observable must be a PauliString")


def measurement_unitary(m: Measure) -> MeasurementChannel:
    _check_involutory(m.obs)
    return MeasurementChannel(m.obs, m.reg, (_I2, _X2))


def weak_measurement_unitary(w: WeakMeasure) -> MeasurementChannel:
    if not 0.0 <= w.angle <= np.pi / 2 + 1e-15:
        raise ValueError(f"angle {w.angle} outside [0, pi/2]")
    _check_involutory(w.obs)
    kick = np.cos(w.angle) * _I2 + 1j * np.sin(w.angle) * _X2
    return MeasurementChannel(w.obs, w.reg, (_I2, kick))


def conditioned_matrix(c: Cond, gate_matrix: np.ndarray, n_physical: int, n_registers: int) -> np.ndarray:
    """Dense dilated matrix of a parity-conditioned gate (oracle use, small sizes)."""
    from .sim_dense import embed_gate

    dim_p = 2 ** n_physical
    g_full = embed_gate(gate_matrix, c.gate.targets, n_physical)
    diag = np.zeros(2 ** n_registers)
    for idx in range(2 ** n_registers):
        bits = [(idx >> (n_registers - 1 - k)) & 1 for k in range(n_registers)]
        diag[idx] = sum(bits[r] for r in c.parity) % 2
    odd = np.diag(diag)
    even = np.eye(2 ** n_registers) - odd
    return np.kron(np.eye(dim_p), even) + np.kron(g_full, odd)


@dataclass(frozen=True)
class TrajectoryProjector:
    outcomes: tuple
    n_registers: int

    def register_bits(self) -> list[int]:
        bits = list(self.outcomes) + [0] * (self.n_registers - len(self.outcomes))
        return bits[: self.n_registers]

    def matrix(self, n_physical: int) -> np.ndarray:
        vec = np.zeros(2 ** self.n_registers)
        idx = 0
        for b in self.register_bits():
            idx = 2 * idx + b
        vec[idx] = 1.0
        return np.kron(np.eye(2 ** n_physical), np.diag(vec))


def trajectory_projector(traj: Trajectory, n_registers: int) -> TrajectoryProjector:
    extra = traj.outcomes[n_registers:]
    if any(extra):
        raise IndexError("nonzero outcome requested on an unallocated register")
    return TrajectoryProjector(tuple(int(b) for b in traj.outcomes[:n_registers]), n_registers)


def project_registers(amplitudes: np.ndarray, n_physical: int, n_registers: int, traj: Trajectory) -> np.ndarray:
    """Physical amplitudes (unnormalized) of the branch selected by ``traj``."""
    proj = trajectory_projector(traj, n_registers)
    psi = np.asarray(amplitudes).reshape(2 ** n_physical, 2 ** n_registers)
    idx = 0
    for b in proj.register_bits():
        idx = 2 * idx + b
    return psi[:, idx].copy()


def trajectory_probability(state, traj: Trajectory, n_physical: int) -> float:
    """Born weight of ``traj`` in a dilated state (physical qubits first)."""
    n_reg = state.n_qubits - n_physical
    branch = project_registers(state.amplitudes, n_physical, n_reg, traj)
    return float(np.vdot(branch, branch).real)


# --- resource counting --------------------------------------------------------

@dataclass(frozen=True)
class RegionCount:
    M: int
    N_obs: int
    regions: tuple  # S_-1, S_0, S_1, ...
    N_meas: int


def count_regions_outcomes(circuit: DilatedCircuit, task_sites: Iterable[int]) -> RegionCount:
    """Count measurement regions by the append rule and the outcomes used for feedback.

    A region is skipped when it equals or is a proper subset of one already
    listed. The task sites i and f then take the first two slots, absorbing a
    listed region that contains them.
    """
    i, f = task_sites
    for s in (i, f):
        circuit.geometry.coords(s)
    regions: list[frozenset] = []
    for op in circuit.measurements():
        s = op.region_sites()
        if any(s <= r for r in regions):
            continue
        regions.append(s)
    first = next((r for r in regions if i in r), None)
    if first is not None:
        regions.remove(first)
    else:
        first = frozenset({i})
    second = next((r for r in regions if f in r), None)
    if second is not None:
        regions.remove(second)
    else:
        second = frozenset({f})
    used = set()
    for op in circuit.conditioned():
        used.update(op.parity)
    ordered = (first, second) + tuple(regions)
    return RegionCount(
        M=len(ordered) - 2,
        N_obs=len(used),
        regions=tuple(tuple(sorted(r)) for r in ordered),
        N_meas=len(circuit.measurements()),
    )
