"""Heisenberg-picture evolution of logical operators through dilated Clifford circuits."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .circuit import Cond, DilatedCircuit, Geometry, GateOp, Measure
from .dilation import (
    DilatedPauli,
    DilatedSum,
    conjugate_through_conditioned,
    conjugate_through_measurement,
)
from .pauli import CliffordGate, PauliString, Tableau, commutes, conjugate_by_clifford, product


class ResidualStinespringError(ValueError):
    """An X~ or Y~ register factor survived to the final evaluation."""


class BranchingConjugationError(ValueError):
    """Conjugation produced a sum of Pauli strings (non-Pauli feedback or projector input)."""


@dataclass(frozen=True)
class LogicalPair:
    x_logical: Union[DilatedPauli, PauliString]
    z_logical: Union[DilatedPauli, PauliString]


def nominal_pair(circuit: DilatedCircuit, site: int) -> LogicalPair:
    """X and Z on ``site`` lifted to the dilated space of ``circuit``."""
    n, n_reg = circuit.n_physical, circuit.n_registers
    return LogicalPair(
        DilatedPauli.physical(PauliString.single(n, "X", site), n_reg),
        DilatedPauli.physical(PauliString.single(n, "Z", site), n_reg),
    )


def _lift(p, n_reg: int) -> DilatedPauli:
    if isinstance(p, DilatedPauli):
        if p.reg.n_qubits != n_reg:
            return DilatedPauli(p.phys, p.reg.embed(n_reg), p.phase)
        return p
    return DilatedPauli.physical(p, n_reg)


def conjugate_op(a: DilatedPauli, op) -> DilatedPauli:
    """One backward step: ``op^dagger a op`` for a single circuit op."""
    if isinstance(op, GateOp):
        if not isinstance(op.gate, CliffordGate):
            raise BranchingConjugationError(f"{op.gate.kind} is not Clifford")
        return DilatedPauli(conjugate_by_clifford(a.phys, op.gate), a.reg, a.phase)
    if isinstance(op, Measure):
        out = conjugate_through_measurement(a, op)
    elif isinstance(op, Cond):
        out = conjugate_through_conditioned(a, op)
    else:
        raise BranchingConjugationError(f"{type(op).__name__} has no Pauli conjugation rule")
    if isinstance(out, DilatedSum):
        raise BranchingConjugationError("conjugation produced a sum of Pauli strings")
    return out


def evaluate_registers(a: DilatedPauli) -> PauliString:
    """Evaluate register factors in |0~>: Z~ gives +1, X~ or Y~ is an error."""
    if a.reg.x.any():
        raise ResidualStinespringError(f"register factor {a.reg.to_text()} is not diagonal")
    return a.physical_part()


def evolve_dilated(circuit: DilatedCircuit, pair: LogicalPair) -> tuple[DilatedPauli, DilatedPauli]:
    """Backward-evolve both operators through every op; register factors are kept."""
    n_reg = circuit.n_registers
    xl, zl = _lift(pair.x_logical, n_reg), _lift(pair.z_logical, n_reg)
    for op in reversed(circuit.ops):
        xl = conjugate_op(xl, op)
        zl = conjugate_op(zl, op)
    return xl, zl


def evolve_logical(circuit: DilatedCircuit, pair: LogicalPair) -> LogicalPair:
    """Logical pair at the initial time, with register factors evaluated in |0~>."""
    xl, zl = evolve_dilated(circuit, pair)
    return LogicalPair(evaluate_registers(xl), evaluate_registers(zl))


def _phys(p) -> PauliString:
    return p.phys if isinstance(p, DilatedPauli) else p


def anticommutation_front(pair: LogicalPair, geometry: Optional[Geometry] = None) -> int:
    """Site of largest coordinate where the single-site factors of the pair anticommute."""
    if not logicals_anticommute(pair):
        raise ValueError("the pair commutes, so it is not a logical pair")
    x, z = _phys(pair.x_logical), _phys(pair.z_logical)
    sites = np.flatnonzero((x.x & z.z) ^ (x.z & z.x)).tolist()
    if not sites:
        raise ValueError("the pair anticommutes only on the registers")
    if geometry is None:
        return max(sites)
    return max(sites, key=geometry.coords)


def _in_group_with_plus(t: Tableau, p: PauliString, q: PauliString) -> bool:
    """True iff q = p * s with s a +1 stabilizer of ``t``."""
    k, r = product(p, q)
    if k % 2:
        return False
    return t.expectation(r.with_sign(-1 if k == 2 else 1)) == 1


def verify_logical_action(initial: Tableau, pair_t: LogicalPair, site: int) -> bool:
    x, z = _phys(pair_t.x_logical), _phys(pair_t.z_logical)
    if isinstance(pair_t.x_logical, DilatedPauli):
        try:
            x = evaluate_registers(pair_t.x_logical)
            z = evaluate_registers(pair_t.z_logical)
        except ResidualStinespringError:
            return False
    n = initial.n_qubits
    return _in_group_with_plus(initial, PauliString.single(n, "X", site), x) and _in_group_with_plus(
        initial, PauliString.single(n, "Z", site), z
    )


def _interval(p: PauliString):
    s = p.support()
    return [min(s), max(s)] if s else None


def lightcone(circuit: DilatedCircuit, pair: LogicalPair) -> list[dict]:
    """Physical support intervals of both logicals after stepping back through each layer.

    Ops are stably sorted by their layer, which preserves every qubit and
    register dependency. Entry k describes the operators at the start of layer
    ``layer``; the first entry is the final-time pair.
    """
    layers = circuit.layers()
    order = sorted(range(len(circuit.ops)), key=lambda k: layers[k])
    n_reg = circuit.n_registers
    xl, zl = _lift(pair.x_logical, n_reg), _lift(pair.z_logical, n_reg)
    top = max(layers, default=0)
    report = [{"layer": top + 1, "x": _interval(xl.phys), "z": _interval(zl.phys), "events": False}]
    by_layer: dict = {}
    for k in order:
        by_layer.setdefault(layers[k], []).append(circuit.ops[k])
    for layer in range(top, -1, -1):
        ops = by_layer.get(layer, [])
        for op in reversed(ops):
            xl = conjugate_op(xl, op)
            zl = conjugate_op(zl, op)
        report.append({
            "layer": layer,
            "x": _interval(xl.phys),
            "z": _interval(zl.phys),
            "events": any(isinstance(op, (Measure, Cond)) for op in ops),
        })
    return report


def logicals_anticommute(pair: LogicalPair) -> bool:
    """Anticommutation on the dilated space: physical and register parts both count."""
    x, z = pair.x_logical, pair.z_logical
    flips = not commutes(_phys(x), _phys(z))
    if isinstance(x, DilatedPauli) and isinstance(z, DilatedPauli):
        flips ^= not commutes(x.reg, z.reg)
    return flips
