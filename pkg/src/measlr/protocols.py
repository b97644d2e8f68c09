"""Protocol constructors (teleportation, Bell, GHZ, W) and sabotage transforms.

All sites are 0-based. Each builder records the resources it claims in
``metadata``; the auditor in :mod:`measlr.bounds` recomputes them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .circuit import CircuitBuilder, DilatedCircuit, Geometry
from .pauli import PauliString


@dataclass
class ProtocolInstance:
    circuit: DilatedCircuit
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dict(self.circuit.to_dict(), metadata=self.metadata)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> ProtocolInstance:
        meta = json.loads(json.dumps(d.get("metadata", {})))
        return cls(DilatedCircuit.from_dict(d), meta)

    @classmethod
    def from_json(cls, text: str) -> ProtocolInstance:
        return cls.from_dict(json.loads(text))


def _meta(kind, task, task_sites, D, depth, M, N_obs, offsets, params, **extra) -> dict:
    meta = {
        "kind": kind,
        "task": task,
        "task_sites": list(task_sites),
        "D": D,
        "depth": depth,
        "M": M,
        "N_obs": N_obs,
        "offsets": {"main": list(offsets)},
        "params": params,
    }
    meta.update(extra)
    return meta


# --- standard teleportation -------------------------------------------------

def build_stp(feedback: bool = True) -> ProtocolInstance:
    """Three-qubit teleportation from site 0 to site 2 through ancilla 1."""
    b = CircuitBuilder(3)
    b.gate("H", 1).gate("CNOT", 1, 2)
    b.gate("CNOT", 0, 1).gate("H", 0)
    r_i = b.measure_z(0, region=(0, 1))
    r_a = b.measure_z(1, region=(0, 1))
    if feedback:
        b.cond([r_a], "X", 2)
        b.cond([r_i], "Z", 2)
    meta = _meta("stp", "teleport", (0, 2), 2, 2, 0, 2 if feedback else 0, (1, 0), {},
                 lanes=[[0, 2]])
    return ProtocolInstance(b.build(), meta)


def stp_correction(m_i: int, m_a: int) -> str:
    """Pauli applied at the target for outcome bits (0 means +1)."""
    return {(0, 0): "I", (0, 1): "X", (1, 0): "Z", (1, 1): "Y"}[(m_i, m_a)]


# --- entanglement-swapping teleportation ------------------------------------

def _check_mt(M, T):
    if M < 0 or T < 3 or int(M) != M or int(T) != T:
        raise ValueError(f"need integer M >= 0 and T >= 3, got M={M}, T={T}")


def estp_layout(M: int, T: int, extra: int = 0) -> dict:
    ell = 2 * (T - 1) + extra
    A = [T - 1 + s * ell for s in range(M)]
    B = [a + 1 for a in A]
    C = [b + T - 2 for b in B]
    Dd = [c + 1 for c in C]
    n = T + M * ell
    return {"A": A, "B": B, "C": C, "D": Dd, "ell": ell, "n": n}


def _emit_estp(b: CircuitBuilder, base: int, M: int, T: int, extra: int = 0,
               bell_measure: bool = False):
    """Append one ESTP lane on sites ``base..``; returns layout and register lists."""
    lay = estp_layout(M, T, extra)
    A, B, C, Dd = lay["A"], lay["B"], lay["C"], lay["D"]
    last = lay["n"] - 1
    q = lambda j: base + j  # noqa: E731

    for s in range(M):
        b.gate("H", q(C[s])).gate("CNOT", q(C[s]), q(Dd[s]))
    b.gate("SWAP", q(0), q(1))
    for j in range(1, T - 1):
        b.gate("SWAP", q(j), q(j + 1))
        for s in range(M):
            b.gate("SWAP", q(C[s] - j), q(C[s] - j + 1))
            b.gate("SWAP", q(Dd[s] + j - 1), q(Dd[s] + j))
    z_regs, x_regs = [], []
    for s in range(M):
        a, bb = q(A[s]), q(B[s])
        if bell_measure:
            n = b.n
            z_regs.append(b.measure(PauliString.uniform(n, "X", (a, bb)), region=(a, bb)))
            x_regs.append(b.measure(PauliString.uniform(n, "Z", (a, bb)), region=(a, bb)))
        else:
            b.gate("CNOT", a, bb).gate("H", a)
            z_regs.append(b.measure_z(a, region=(a, bb)))
            x_regs.append(b.measure_z(bb, region=(a, bb)))
    return lay, z_regs, x_regs, q(last)


def _feedback(b, target, z_regs, x_regs):
    if x_regs:
        b.cond(x_regs, "X", target)
    if z_regs:
        b.cond(z_regs, "Z", target)


def build_estp(M: int, T: int, bell_measure: bool = False, _extra: int = 0) -> ProtocolInstance:
    """Teleport site 0 to site N-1 = (2M+1)(T-1) with M Bell-pair relays."""
    _check_mt(M, T)
    lay = estp_layout(M, T, _extra)
    b = CircuitBuilder(lay["n"])
    _, z_regs, x_regs, target = _emit_estp(b, 0, M, T, _extra, bell_measure)
    _feedback(b, target, z_regs, x_regs)
    if M == 0:
        depth, offsets = T - 1, (1, 0)
    elif bell_measure:
        depth, offsets = T - 1, (1, 0)
    else:
        depth, offsets = T, (1, -1)
    meta = _meta(
        "estp", "teleport", (0, target), target, depth, M, 2 * M, offsets,
        {"M": M, "T": T, "bell_measure": bell_measure, "extra": _extra},
        layout={k: lay[k] for k in "ABCD"}, ell=lay["ell"], T=T, lanes=[[0, target]],
    )
    return ProtocolInstance(b.build(), meta)


def build_multiqubit_estp(Q: int, M: int, T: int, _extra: int = 0,
                          _share: bool = False) -> ProtocolInstance:
    """Q independent ESTP lanes on the rows of a Q x N grid."""
    _check_mt(M, T)
    if Q < 1:
        raise ValueError("Q must be at least 1")
    lay = estp_layout(M, T, _extra)
    n = lay["n"]
    b = CircuitBuilder(Q * n, Geometry("grid", (Q, n)))
    lanes, regs = [], []
    for lane in range(Q):
        _, z_regs, x_regs, target = _emit_estp(b, lane * n, M, T, _extra)
        lanes.append([lane * n, target])
        regs.append((z_regs, x_regs))
    for lane in range(Q):
        z_regs, x_regs = regs[0] if (_share and lane > 0) else regs[lane]
        _feedback(b, lanes[lane][1], z_regs, x_regs)
    depth = T - 1 if M == 0 else T
    n_obs = 2 * M if _share else 2 * M * Q
    meta = _meta(
        "multi", "teleport", lanes[0], n - 1, depth, M, n_obs, (1, 0) if M == 0 else (1, -1),
        {"Q": Q, "M": M, "T": T, "extra": _extra, "share": _share},
        ell=lay["ell"], T=T, Q=Q, lanes=lanes,
    )
    return ProtocolInstance(b.build(), meta)


# --- Bell-pair distillation --------------------------------------------------

def build_bell_distill(M: int, T: int, flip_a: bool = False) -> ProtocolInstance:
    """Bell pair between site 0 and site 2(M+1)(T-1)+1 using M swapping relays.

    With ``flip_a`` the Z correction fires on even parity, leaving the pair in
    the Bell state with XX = -1.
    """
    _check_mt(M, T)
    full = estp_layout(M + 1, T)
    shift = T - 1  # old site B_1 = T becomes site 1
    n = full["n"] - shift + 1
    b = CircuitBuilder(n)
    A = [a - shift for a in full["A"]]
    B = [x - shift for x in full["B"]]
    C = [c - shift for c in full["C"]]
    Dd = [d - shift for d in full["D"]]
    for s in range(M + 1):
        b.gate("H", C[s]).gate("CNOT", C[s], Dd[s])
    for j in range(1, T - 1):
        for s in range(M + 1):
            b.gate("SWAP", C[s] - j, C[s] - j + 1)
            b.gate("SWAP", Dd[s] + j - 1, Dd[s] + j)
    b.gate("SWAP", 1, 0)
    b.gate("SWAP", n - 2, n - 1)
    z_regs, x_regs = [], []
    for s in range(1, M + 1):
        b.gate("CNOT", A[s], B[s]).gate("H", A[s])
        z_regs.append(b.measure_z(A[s], region=(A[s], B[s])))
        x_regs.append(b.measure_z(B[s], region=(A[s], B[s])))
    _feedback(b, n - 1, z_regs, x_regs)
    if flip_a:
        b.gate("Z", n - 1)
    meta = _meta(
        "bell", "bell", (0, n - 1), n - 1, T, M, 2 * M, (2, 0),
        {"M": M, "T": T, "flip_a": flip_a},
        T=T, bell_signs={"XX": -1 if flip_a else 1, "ZZ": 1},
    )
    return ProtocolInstance(b.build(), meta)


# --- GHZ ---------------------------------------------------------------------

def build_ghz_1d(M: int, ell: int) -> ProtocolInstance:
    """GHZ state on (M+1) patches of ``ell`` sites, fused by M boundary measurements."""
    if ell < 2 or ell % 2 or M < 0:
        raise ValueError(f"need even ell >= 2 and M >= 0, got ell={ell}, M={M}")
    n = (M + 1) * ell
    b = CircuitBuilder(n)
    half = ell // 2
    for k in range(M + 1):
        c = k * ell + half - 1
        b.gate("H", c).gate("CNOT", c, c + 1)
    for j in range(1, half):
        for k in range(M + 1):
            c = k * ell + half - 1
            b.gate("CNOT", c - j + 1, c - j)
            b.gate("CNOT", c + j, c + j + 1)
    regs = []
    for k in range(M):
        last, first = k * ell + ell - 1, (k + 1) * ell
        b.gate("CNOT", last, first)
        regs.append(b.measure_z(first))
    for k in range(M):
        first = (k + 1) * ell
        b.cond([regs[k]], "X", first)
        for q in range(first + 1, first + ell):
            b.cond(regs[: k + 1], "X", q)
    for k in range(M):
        b.gate("CNOT", k * ell + ell - 1, (k + 1) * ell)
    depth = half + 2 if M else half
    meta = _meta("ghz", "ghz", (0, n - 1), n - 1, depth, M, M, (2, 0), {"M": M, "ell": ell},
                 ell=ell, N=n)
    return ProtocolInstance(b.build(), meta)


# --- W state -----------------------------------------------------------------

def w_gate(b: CircuitBuilder, a: int, c: int):
    """Split an excitation on ``a`` evenly onto ``a`` and the empty site ``c``."""
    b.gate("CH", a, c).gate("CNOT", c, a)


def w_prep_estp_formula(N: int) -> int:
    return N // 2 - 2 * int(math.log2(N)) + 2


def build_w_state(n: int, mode: str = "unitary") -> ProtocolInstance:
    """W state on N = 2**n chain sites by n rounds of doubling from the centre.

    Between rounds the new qubits move outward by 2**(n-k) - 1 sites, by SWAP
    staircases or (``estp`` mode, rounds 2..n-2) by Bell-pair teleportation.
    """
    if n < 1 or int(n) != n:
        raise ValueError(f"n must be a positive integer, got {n}")
    if mode not in ("unitary", "estp"):
        raise ValueError(f"unknown mode {mode!r}")
    N = 2 ** n
    b = CircuitBuilder(N)
    half = N // 2
    right = lambda r: half + r  # noqa: E731
    left = lambda r: half - 1 - r  # noqa: E731
    b.gate("H", left(0)).gate("CNOT", left(0), right(0)).gate("X", right(0))
    occupied = [0]
    n_regions = 0
    n_obs = 0
    for k in range(2, n + 1):
        d = 2 ** (n - k) - 1
        teleport = mode == "estp" and 2 <= k <= n - 2
        pending_reset = []
        for side in (right, left):
            for p in occupied:
                q = p + 1
                w_gate(b, side(p), side(q))
                if d == 0:
                    continue
                if not teleport:
                    for j in range(d):
                        b.gate("SWAP", side(q + j), side(q + j + 1))
                    continue
                pairs = [(q + 2 + 2 * j, q + 3 + 2 * j) for j in range((d - 1) // 2)]
                for u, v in pairs:
                    b.gate("H", side(u)).gate("CNOT", side(u), side(v))
                b.gate("SWAP", side(q), side(q + 1))
                z_regs, x_regs = [], []
                for u in [q + 1] + [v for _, v in pairs[:-1]]:
                    s1, s2 = side(u), side(u + 1)
                    rz = b.measure(PauliString.uniform(N, "X", (s1, s2)), region=(s1, s2))
                    rx = b.measure(PauliString.uniform(N, "Z", (s1, s2)), region=(s1, s2))
                    z_regs.append(rz)
                    x_regs.append(rx)
                    pending_reset.append((s1, s2, rz, rx))
                    n_regions += 1
                    n_obs += 2
                _feedback(b, side(q + d), z_regs, x_regs)
        for s1, s2, rz, rx in pending_reset:
            # measured pair is a known Bell state; undo it so the sites read |00>
            b.cond([rz], "Z", s1)
            b.cond([rx], "X", s1)
            b.gate("CNOT", s1, s2).gate("H", s1)
        occupied = sorted(set(occupied) | {p + d + 1 for p in occupied})
    if mode == "unitary" or n <= 3:
        depth = N // 2 + n - 1 if n >= 2 else 1
    else:
        depth = 3 * n - 3
    meta = _meta(
        "w", "w", (0, N - 1), N - 1, depth, n_regions, n_obs, (2, 0), {"n": n, "mode": mode},
        N=N, formula_M=w_prep_estp_formula(N) if N >= 4 else 0,
    )
    meta["formula_mismatch"] = mode == "estp" and meta["formula_M"] != n_regions
    return ProtocolInstance(b.build(), meta)


def w_vector(N: int) -> np.ndarray:
    v = np.zeros(2 ** N, dtype=complex)
    for j in range(N):
        v[1 << (N - 1 - j)] = 1 / math.sqrt(N)
    return v


# --- sabotage ----------------------------------------------------------------

SABOTAGES = ("strip_feedback", "stretch_regions", "share_measurement")


def sabotage(instance: ProtocolInstance, transform: str, extra: int = 1) -> ProtocolInstance:
    """Return a broken copy of ``instance`` for negative controls."""
    transform = transform.replace("-", "_")
    meta = instance.metadata
    params = meta.get("params", {})
    if transform == "strip_feedback":
        new_meta = json.loads(json.dumps(meta))
        new_meta["N_obs"] = 0
        new_meta["sabotage"] = transform
        return ProtocolInstance(instance.circuit.without_conditioned(), new_meta)
    if transform == "stretch_regions":
        if extra < 1:
            raise ValueError("stretch needs extra >= 1")
        if meta.get("kind") == "estp":
            out = build_estp(params["M"], params["T"], params.get("bell_measure", False), _extra=extra)
        elif meta.get("kind") == "multi":
            out = build_multiqubit_estp(params["Q"], params["M"], params["T"], _extra=extra)
        else:
            raise ValueError(f"stretch_regions does not apply to {meta.get('kind')!r}")
        if params.get("M", 0) < 1:
            raise ValueError("stretch_regions needs at least one region")
        out.metadata["sabotage"] = f"{transform}({extra})"
        return out
    if transform == "share_measurement":
        if meta.get("kind") != "multi" or params.get("Q") != 2:
            raise ValueError("share_measurement needs a two-lane instance")
        out = build_multiqubit_estp(2, params["M"], params["T"], params.get("extra", 0), _share=True)
        out.metadata["sabotage"] = transform
        return out
    raise ValueError(f"unknown sabotage {transform!r}")


BUILDERS = {
    "stp": build_stp,
    "estp": build_estp,
    "bell": build_bell_distill,
    "ghz": build_ghz_1d,
    "w": build_w_state,
    "multi": build_multiqubit_estp,
}
