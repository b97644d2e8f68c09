"""Tableau execution of Clifford dilated circuits: sampling, enumeration, tomography."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .circuit import Cond, DilatedCircuit, GateOp, Measure, WeakMeasure
from .dilation import Trajectory
from .pauli import CliffordGate, PauliString, Tableau

# gate prefixes preparing +Z, -Z, +X, -X, +Y, -Y from |0>
EIGENSTATE_PREP = {
    ("Z", +1): (),
    ("Z", -1): ("X",),
    ("X", +1): ("H",),
    ("X", -1): ("X", "H"),
    ("Y", +1): ("H", "S"),
    ("Y", -1): ("H", "S", "Z"),
}


class NonCliffordError(ValueError):
    pass


class BranchBudgetExceeded(RuntimeError):
    pass


@dataclass
class RunRecord:
    final_tableau: Tableau
    trajectory: Trajectory
    depth_executed: int


def _check_clifford(circuit: DilatedCircuit):
    for op in circuit.ops:
        if isinstance(op, WeakMeasure):
            raise NonCliffordError("weak measurements need the dense backend")
        if isinstance(op, (GateOp, Cond)) and not isinstance(op.gate, CliffordGate):
            raise NonCliffordError(f"{op.gate.kind} is not a Clifford gate")


def _rng(source):
    if source is None or isinstance(source, (int, np.integer)):
        return np.random.default_rng(source)
    return source


def run_trajectory(circuit: DilatedCircuit, initial: Optional[Tableau] = None, rng=None,
                   forced: Optional[Sequence[int]] = None) -> RunRecord:
    """Sample one trajectory; ``forced[reg]`` pins the outcome of register ``reg``."""
    _check_clifford(circuit)
    t = Tableau(circuit.n_physical) if initial is None else initial.copy()
    gen = _rng(rng)
    bits: dict = {}
    prob = 1.0
    for op in circuit.ops:
        if isinstance(op, GateOp):
            t.apply(op.gate)
        elif isinstance(op, Measure):
            want = forced[op.reg] if forced is not None and op.reg < len(forced) else None
            b, det = t.measure(op.obs, rng=gen, forced=want)
            bits[op.reg] = b
            if not det:
                prob *= 0.5
        elif isinstance(op, Cond):
            if sum(bits.get(r, 0) for r in op.parity) % 2:
                t.apply(op.gate)
    outcomes = tuple(bits.get(r, 0) for r in range(circuit.n_registers))
    return RunRecord(t, Trajectory(outcomes, prob), circuit.depth())


def enumerate_trajectories(circuit: DilatedCircuit, initial: Optional[Tableau] = None,
                           max_branches: int = 1 << 16) -> list[RunRecord]:
    """Every outcome branch, depth first with outcome 0 explored before 1."""
    _check_clifford(circuit)
    depth = circuit.depth()
    n_reg = circuit.n_registers
    start = Tableau(circuit.n_physical) if initial is None else initial.copy()
    ops = circuit.ops
    records = []
    stack = [(start, 0, {}, 1.0)]
    n_leaves = 1
    while stack:
        t, pos, bits, prob = stack.pop()
        while pos < len(ops):
            op = ops[pos]
            pos += 1
            if isinstance(op, GateOp):
                t.apply(op.gate)
            elif isinstance(op, Measure):
                if t.expectation(op.obs) != 0:
                    b, _ = t.measure(op.obs)
                    bits[op.reg] = b
                    continue
                n_leaves += 1
                if n_leaves > max_branches:
                    raise BranchBudgetExceeded(f"more than {max_branches} branches")
                other = t.copy()
                other.measure(op.obs, forced=1)
                stack.append((other, pos, {**bits, op.reg: 1}, prob / 2))
                t.measure(op.obs, forced=0)
                bits[op.reg] = 0
                prob /= 2
            elif isinstance(op, Cond):
                if sum(bits.get(r, 0) for r in op.parity) % 2:
                    t.apply(op.gate)
        outcomes = tuple(bits.get(r, 0) for r in range(n_reg))
        records.append(RunRecord(t, Trajectory(outcomes, prob), depth))
    records.sort(key=lambda rec: rec.trajectory.outcomes)
    return records


def averaged_bloch(records: Sequence[RunRecord], site: int) -> tuple[float, float, float]:
    if not records:
        raise ValueError("no trajectories to average")
    n = records[0].final_tableau.n_qubits
    out = []
    for letter in "XYZ":
        p = PauliString.single(n, letter, site)
        out.append(sum(r.trajectory.probability * r.final_tableau.expectation(p) for r in records))
    return tuple(float(v) for v in out)


def prepared_input(n: int, site: int, axis: str, sign: int) -> Tableau:
    t = Tableau(n)
    for kind in EIGENSTATE_PREP[(axis, sign)]:
        t.apply(CliffordGate(kind, (site,)))
    return t


def input_records(circuit: DilatedCircuit, in_site: int, max_branches: int = 1 << 16) -> dict:
    """All trajectories for each of the six Pauli eigenstate inputs at ``in_site``."""
    out = {}
    for (axis, sign) in EIGENSTATE_PREP:
        init = prepared_input(circuit.n_physical, in_site, axis, sign)
        out[(axis, sign)] = enumerate_trajectories(circuit, init, max_branches)
    return out


def teleport_process_matrix(circuit: DilatedCircuit, in_site: int, out_site: int,
                            max_branches: int = 1 << 16, runs: Optional[dict] = None) -> np.ndarray:
    """Outcome-averaged Pauli transfer matrix from ``in_site`` to ``out_site``.

    Entry (a, b) is half the difference of the averaged <P_a> at the output for
    the +1 and -1 eigenstates of P_b at the input.
    """
    if runs is None:
        runs = input_records(circuit, in_site, max_branches)
    ptm = np.zeros((3, 3))
    for b, axis in enumerate("XYZ"):
        plus = averaged_bloch(runs[(axis, 1)], out_site)
        minus = averaged_bloch(runs[(axis, -1)], out_site)
        ptm[:, b] = (np.array(plus) - np.array(minus)) / 2
    return ptm


def branch_process_matrices(circuit: DilatedCircuit, in_site: int, out_site: int,
                            max_branches: int = 1 << 16, runs: Optional[dict] = None) -> dict:
    """Pauli transfer matrix of every outcome branch.

    Branches are keyed by the outcome tuple; a branch that does not occur for
    all six inputs maps to ``None``. ``runs`` reuses a prior ``input_records`` call.
    """
    if runs is None:
        runs = input_records(circuit, in_site, max_branches)
    n = circuit.n_physical
    paulis = [PauliString.single(n, a, out_site) for a in "XYZ"]
    per_input = {
        key: {r.trajectory.outcomes: r.final_tableau for r in recs} for key, recs in runs.items()
    }
    keys = set().union(*[set(v) for v in per_input.values()])
    out = {}
    for k in sorted(keys):
        if not all(k in v for v in per_input.values()):
            out[k] = None
            continue
        ptm = np.zeros((3, 3))
        for b, axis in enumerate("XYZ"):
            tp = per_input[(axis, 1)][k]
            tm = per_input[(axis, -1)][k]
            for a in range(3):
                ptm[a, b] = (tp.expectation(paulis[a]) - tm.expectation(paulis[a])) / 2
        out[k] = ptm
    return out
