"""Dilated circuits: gates, measurements and outcome-conditioned gates on a geometry."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .pauli import CLIFFORD_KINDS, CliffordGate, PauliString

NON_CLIFFORD_KINDS = {"CH": 2}


@dataclass(frozen=True)
class UnitaryGate:
    """Named non-Clifford gate; only the dense backend can run it."""

    kind: str
    targets: tuple

    def __post_init__(self):
        if self.kind not in NON_CLIFFORD_KINDS:
            raise ValueError(f"unknown gate {self.kind!r}")
        targets = tuple(int(t) for t in self.targets)
        if len(targets) != NON_CLIFFORD_KINDS[self.kind] or len(set(targets)) != len(targets):
            raise ValueError(f"bad targets {targets} for {self.kind}")
        object.__setattr__(self, "targets", targets)

    @property
    def name(self) -> str:
        return self.kind

    @property
    def is_clifford(self) -> bool:
        return False


Gate = Union[CliffordGate, UnitaryGate]


def make_gate(kind: str, *targets: int) -> Gate:
    if kind in CLIFFORD_KINDS:
        return CliffordGate(kind, targets)
    return UnitaryGate(kind, targets)


@dataclass(frozen=True)
class GateOp:
    gate: Gate


@dataclass(frozen=True)
class Measure:
    """Projective measurement of ``obs`` recorded in Stinespring register ``reg``.

    ``region`` optionally declares the support used for region counting; it
    defaults to the observable's support.
    """

    obs: PauliString
    reg: int
    region: Optional[tuple] = None

    def region_sites(self) -> frozenset:
        if self.region is not None:
            return frozenset(self.region)
        return frozenset(self.obs.support())


@dataclass(frozen=True)
class WeakMeasure:
    obs: PauliString
    reg: int
    angle: float

    def region_sites(self) -> frozenset:
        return frozenset(self.obs.support())


@dataclass(frozen=True)
class Cond:
    """Apply ``gate`` iff the XOR of the listed registers is 1."""

    parity: tuple
    gate: Gate


Op = Union[GateOp, Measure, WeakMeasure, Cond]


@dataclass(frozen=True)
class Geometry:
    kind: str = "chain"
    dims: tuple = ()

    def __post_init__(self):
        if self.kind not in ("chain", "grid"):
            raise ValueError(f"unknown geometry {self.kind!r}")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.dims)) if self.dims else 0

    @property
    def dim(self) -> int:
        return 1 if self.kind == "chain" else len(self.dims)

    def coords(self, q: int) -> tuple:
        if not 0 <= q < self.n_sites:
            raise IndexError(f"site {q} outside geometry")
        if self.kind == "chain":
            return (q,)
        return tuple(int(c) for c in np.unravel_index(q, self.dims))

    def distance(self, a: int, b: int) -> int:
        return sum(abs(u - v) for u, v in zip(self.coords(a), self.coords(b)))


def op_qubits(op: Op) -> tuple:
    if isinstance(op, GateOp):
        return op.gate.targets
    if isinstance(op, Cond):
        return op.gate.targets
    return tuple(op.obs.support())


def is_two_site(op: Op) -> bool:
    return isinstance(op, (GateOp, Cond)) and len(op.gate.targets) == 2


@dataclass
class DilatedCircuit:
    n_physical: int
    ops: list = field(default_factory=list)
    geometry: Optional[Geometry] = None

    def __post_init__(self):
        if self.geometry is None:
            self.geometry = Geometry("chain", (self.n_physical,))

    @property
    def n_registers(self) -> int:
        regs = [op.reg for op in self.ops if isinstance(op, (Measure, WeakMeasure))]
        return max(regs) + 1 if regs else 0

    @property
    def is_clifford(self) -> bool:
        for op in self.ops:
            if isinstance(op, WeakMeasure):
                return False
            if isinstance(op, (GateOp, Cond)) and not op.gate.is_clifford:
                return False
        return True

    def measurements(self) -> list:
        return [op for op in self.ops if isinstance(op, (Measure, WeakMeasure))]

    def conditioned(self) -> list:
        return [op for op in self.ops if isinstance(op, Cond)]

    def layers(self) -> list[int]:
        """ASAP layer index of every op, counting two-site gates only.

        A two-site gate sits one layer after the latest of its qubits. Single-site
        gates and measurements take the current layer of their qubits, and a
        conditioned gate also waits for the layers of its registers.
        """
        t = [0] * self.n_physical
        reg_time: dict = {}
        out = []
        for op in self.ops:
            qs = op_qubits(op)
            base = max((t[q] for q in qs), default=0)
            if isinstance(op, Cond):
                base = max([base] + [reg_time.get(r, 0) for r in op.parity])
            layer = base + 1 if is_two_site(op) else base
            for q in qs:
                t[q] = layer
            if isinstance(op, (Measure, WeakMeasure)):
                reg_time[op.reg] = layer
            out.append(layer)
        return out

    def depth(self) -> int:
        return max(
            (lay for lay, op in zip(self.layers(), self.ops) if is_two_site(op)),
            default=0,
        )

    def without_conditioned(self) -> DilatedCircuit:
        return DilatedCircuit(self.n_physical, [op for op in self.ops if not isinstance(op, Cond)], self.geometry)

    def to_dict(self) -> dict:
        ops = []
        for op, layer in zip(self.ops, self.layers()):
            ops.append(dict(_op_record(op, self.n_physical), layer=layer))
        return {
            "n_physical": self.n_physical,
            "geometry": {"kind": self.geometry.kind, "dims": list(self.geometry.dims)},
            "ops": ops,
        }

    @classmethod
    def from_dict(cls, d: dict) -> DilatedCircuit:
        n = int(d["n_physical"])
        geo = Geometry(d["geometry"]["kind"], tuple(d["geometry"]["dims"]))
        ops = [_op_from_record(rec, n) for rec in d["ops"]]
        return cls(n, ops, geo)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> DilatedCircuit:
        return cls.from_dict(json.loads(text))


def _gate_record(g: Gate) -> dict:
    return {"name": g.kind, "targets": [t + 1 for t in g.targets]}


def _gate_from_record(rec: dict) -> Gate:
    return make_gate(rec["name"], *[t - 1 for t in rec["targets"]])


def _op_record(op: Op, n: int) -> dict:
    if isinstance(op, GateOp):
        return {"type": "gate", "gate": _gate_record(op.gate)}
    if isinstance(op, Measure):
        rec = {"type": "measure", "obs": op.obs.to_text(), "reg": op.reg}
        if op.region is not None:
            rec["region"] = [s + 1 for s in op.region]
        return rec
    if isinstance(op, WeakMeasure):
        return {"type": "weak_measure", "obs": op.obs.to_text(), "reg": op.reg, "angle": op.angle}
    if isinstance(op, Cond):
        return {"type": "cond", "parity": list(op.parity), "gate": _gate_record(op.gate)}
    raise TypeError(f"unknown op {op!r}")


def _op_from_record(rec: dict, n: int) -> Op:
    kind = rec["type"]
    if kind == "gate":
        return GateOp(_gate_from_record(rec["gate"]))
    if kind == "measure":
        region = tuple(s - 1 for s in rec["region"]) if "region" in rec else None
        return Measure(PauliString.from_text(rec["obs"], n), int(rec["reg"]), region)
    if kind == "weak_measure":
        return WeakMeasure(PauliString.from_text(rec["obs"], n), int(rec["reg"]), float(rec["angle"]))
    if kind == "cond":
        return Cond(tuple(int(r) for r in rec["parity"]), _gate_from_record(rec["gate"]))
    raise ValueError(f"unknown op type {kind!r}")


class CircuitBuilder:
    """Appends ops and allocates Stinespring registers in declaration order."""

    def __init__(self, n_physical: int, geometry: Optional[Geometry] = None):
        self.circuit = DilatedCircuit(n_physical, [], geometry)
        self._next_reg = 0

    @property
    def n(self) -> int:
        return self.circuit.n_physical

    def gate(self, kind: str, *targets: int) -> CircuitBuilder:
        self.circuit.ops.append(GateOp(make_gate(kind, *targets)))
        return self

    def measure(self, obs: PauliString | str, region=None) -> int:
        if isinstance(obs, str):
            obs = PauliString.from_text(obs, self.n)
        reg = self._next_reg
        self._next_reg += 1
        self.circuit.ops.append(Measure(obs, reg, tuple(region) if region is not None else None))
        return reg

    def measure_z(self, site: int, region=None) -> int:
        return self.measure(PauliString.single(self.n, "Z", site), region)

    def weak_measure(self, obs: PauliString, angle: float) -> int:
        reg = self._next_reg
        self._next_reg += 1
        self.circuit.ops.append(WeakMeasure(obs, reg, float(angle)))
        return reg

    def cond(self, parity, kind: str, *targets: int) -> CircuitBuilder:
        self.circuit.ops.append(Cond(tuple(parity), make_gate(kind, *targets)))
        return self

    def build(self) -> DilatedCircuit:
        return self.circuit
