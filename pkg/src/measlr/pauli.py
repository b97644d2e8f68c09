"""Pauli strings, Clifford conjugation and the stabilizer tableau."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

CLIFFORD_KINDS = ("H", "S", "X", "Y", "Z", "CNOT", "CZ", "SWAP")
TWO_QUBIT_KINDS = ("CNOT", "CZ", "SWAP")

_I2 = np.eye(2, dtype=complex)
_PAULI_MATRICES = {
    (0, 0): _I2,
    (1, 0): np.array([[0, 1], [1, 0]], dtype=complex),
    (1, 1): np.array([[0, -1j], [1j, 0]], dtype=complex),
    (0, 1): np.array([[1, 0], [0, -1]], dtype=complex),
}
_LETTER_BITS = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
_BITS_LETTER = {v: k for k, v in _LETTER_BITS.items()}


class ContradictoryOutcome(ValueError):
    """A forced outcome disagrees with a deterministic measurement."""


def _g(x1, z1, x2, z2):
    """Exponent of i picked up by the single-site product P1*P2 (elementwise)."""
    x1 = np.asarray(x1, dtype=np.int8)
    z1 = np.asarray(z1, dtype=np.int8)
    x2 = np.asarray(x2, dtype=np.int8)
    z2 = np.asarray(z2, dtype=np.int8)
    y = x1 & z1
    xo = x1 & (1 - z1)
    zo = (1 - x1) & z1
    return y * (z2 - x2) + xo * z2 * (2 * x2 - 1) + zo * x2 * (1 - 2 * z2)


@dataclass(frozen=True, eq=False)
class PauliString:
    """Signed tensor product of I, X, Y, Z on ``n_qubits`` sites (0-based).

    ``Y`` is the Hermitian Pauli Y, stored as x=z=1.
    """

    x: np.ndarray
    z: np.ndarray
    sign: int = 1

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.uint8) & 1
        z = np.asarray(self.z, dtype=np.uint8) & 1
        if x.shape != z.shape or x.ndim != 1:
            raise ValueError("x and z supports must be 1-d with equal length")
        if self.sign not in (1, -1):
            raise ValueError(f"sign must be +1 or -1, got {self.sign}")
        x.setflags(write=False)
        z.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)

    @property
    def n_qubits(self) -> int:
        return len(self.x)

    @classmethod
    def identity(cls, n: int) -> PauliString:
        return cls(np.zeros(n, np.uint8), np.zeros(n, np.uint8), 1)

    @classmethod
    def single(cls, n: int, letter: str, site: int, sign: int = 1) -> PauliString:
        return cls.from_sites(n, {site: letter}, sign)

    @classmethod
    def from_sites(cls, n: int, letters: dict, sign: int = 1) -> PauliString:
        """Build from ``{site: letter}``; repeated sites are not allowed here."""
        x = np.zeros(n, np.uint8)
        z = np.zeros(n, np.uint8)
        for site, letter in letters.items():
            if not 0 <= site < n:
                raise IndexError(f"site {site} out of range for {n} qubits")
            x[site], z[site] = _LETTER_BITS[letter]
        return cls(x, z, sign)

    @classmethod
    def uniform(cls, n: int, letter: str, sites: Iterable[int], sign: int = 1) -> PauliString:
        return cls.from_sites(n, {s: letter for s in sites}, sign)

    @classmethod
    def from_label(cls, label: str) -> PauliString:
        """Dense label such as ``"-XIZY"``."""
        sign = 1
        if label and label[0] in "+-":
            sign = -1 if label[0] == "-" else 1
            label = label[1:]
        bits = [_LETTER_BITS[c] for c in label]
        return cls(np.array([b[0] for b in bits], np.uint8), np.array([b[1] for b in bits], np.uint8), sign)

    @classmethod
    def from_text(cls, text: str, n: int) -> PauliString:
        """Parse sparse text like ``"+X1*Z4*Z5"`` (1-based sites)."""
        text = text.strip()
        sign = 1
        if text and text[0] in "+-":
            sign = -1 if text[0] == "-" else 1
            text = text[1:]
        out = cls.identity(n)
        if text in ("", "I"):
            return cls(out.x, out.z, sign)
        k = 0
        for factor in text.split("*"):
            m = re.fullmatch(r"([IXYZ])(\d+)", factor.strip())
            if m is None:
                raise ValueError(f"cannot parse Pauli factor {factor!r}")
            term = cls.single(n, m.group(1), int(m.group(2)) - 1)
            dk, out = product(out, term)
            k += dk
        if k % 2:
            raise ValueError(f"{text!r} is not Hermitian")
        return cls(out.x, out.z, sign * (-1 if k % 4 == 2 else 1))

    def to_text(self) -> str:
        parts = [f"{self.letter(j)}{j + 1}" for j in self.support()]
        return ("+" if self.sign > 0 else "-") + ("*".join(parts) if parts else "I")

    def to_label(self) -> str:
        return ("+" if self.sign > 0 else "-") + "".join(self.letter(j) for j in range(self.n_qubits))

    def letter(self, site: int) -> str:
        return _BITS_LETTER[(int(self.x[site]), int(self.z[site]))]

    def support(self) -> list[int]:
        return np.flatnonzero(self.x | self.z).tolist()

    def weight(self) -> int:
        return int(np.count_nonzero(self.x | self.z))

    def is_identity(self) -> bool:
        return not (self.x.any() or self.z.any())

    def with_sign(self, sign: int) -> PauliString:
        return PauliString(self.x, self.z, sign)

    def __neg__(self) -> PauliString:
        return self.with_sign(-self.sign)

    def __mul__(self, other: PauliString) -> PauliString:
        return multiply(self, other)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PauliString):
            return NotImplemented
        return (
            self.sign == other.sign
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.z, other.z)
        )

    def __hash__(self):
        return hash((self.sign, self.x.tobytes(), self.z.tobytes()))

    def __repr__(self):
        return f"PauliString({self.to_text()!r}, n={self.n_qubits})"

    def embed(self, n: int, offset: int = 0) -> PauliString:
        """Place this string on sites ``offset..`` of an ``n``-site register."""
        x = np.zeros(n, np.uint8)
        z = np.zeros(n, np.uint8)
        x[offset:offset + self.n_qubits] = self.x
        z[offset:offset + self.n_qubits] = self.z
        return PauliString(x, z, self.sign)

    def to_matrix(self) -> np.ndarray:
        """Dense matrix, site 0 is the most significant tensor factor."""
        mat = np.array([[float(self.sign)]], dtype=complex)
        for xb, zb in zip(self.x.tolist(), self.z.tolist()):
            mat = np.kron(mat, _PAULI_MATRICES[(xb, zb)])
        return mat


def _check_lengths(p: PauliString, q: PauliString):
    if p.n_qubits != q.n_qubits:
        raise ValueError(f"length mismatch: {p.n_qubits} vs {q.n_qubits}")


def product(p: PauliString, q: PauliString) -> tuple[int, PauliString]:
    """Return ``(k, r)`` with ``p*q = i**k * r`` and ``r.sign == +1``."""
    _check_lengths(p, q)
    k = int(np.sum(_g(p.x, p.z, q.x, q.z)))
    k += 2 * ((p.sign < 0) + (q.sign < 0))
    return k % 4, PauliString(p.x ^ q.x, p.z ^ q.z, 1)


def multiply(p: PauliString, q: PauliString) -> PauliString:
    """``p*q`` with the phase resolved to a sign; a leftover factor of i is dropped."""
    k, r = product(p, q)
    return r.with_sign(-1 if k in (2, 3) else 1)


def commutes(p: PauliString, q: PauliString) -> bool:
    _check_lengths(p, q)
    return int(np.sum((p.x & q.z) ^ (p.z & q.x))) % 2 == 0


@dataclass(frozen=True)
class CliffordGate:
    kind: str
    targets: tuple

    def __post_init__(self):
        if self.kind not in CLIFFORD_KINDS:
            raise ValueError(f"unknown Clifford kind {self.kind!r}")
        targets = tuple(int(t) for t in self.targets)
        arity = 2 if self.kind in TWO_QUBIT_KINDS else 1
        if len(targets) != arity:
            raise ValueError(f"{self.kind} takes {arity} target(s), got {targets}")
        if arity == 2 and targets[0] == targets[1]:
            raise ValueError(f"{self.kind} targets must be distinct")
        object.__setattr__(self, "targets", targets)

    @property
    def name(self) -> str:
        return self.kind

    @property
    def is_clifford(self) -> bool:
        return True


def apply_clifford_bits(x, z, r, kind: str, targets: Sequence[int]):
    """Schrodinger update ``P -> g P g^dagger`` on qubit-major bit arrays, in place.

    ``x`` and ``z`` have the qubit on axis 0; ``r`` holds sign bits (1 means -1)
    and has the shape of ``x[0]``.
    """
    if kind == "H":
        (a,) = targets
        r ^= x[a] & z[a]
        tmp = x[a].copy()
        x[a] = z[a]
        z[a] = tmp
    elif kind == "S":
        (a,) = targets
        r ^= x[a] & z[a]
        z[a] ^= x[a]
    elif kind == "X":
        r ^= z[targets[0]]
    elif kind == "Z":
        r ^= x[targets[0]]
    elif kind == "Y":
        r ^= x[targets[0]] ^ z[targets[0]]
    elif kind == "CNOT":
        a, b = targets
        r ^= x[a] & z[b] & (x[b] ^ z[a] ^ 1)
        x[b] ^= x[a]
        z[a] ^= z[b]
    elif kind == "CZ":
        a, b = targets
        apply_clifford_bits(x, z, r, "H", (b,))
        apply_clifford_bits(x, z, r, "CNOT", (a, b))
        apply_clifford_bits(x, z, r, "H", (b,))
    elif kind == "SWAP":
        a, b = targets
        x[[a, b]] = x[[b, a]]
        z[[a, b]] = z[[b, a]]
    else:
        raise ValueError(f"unknown Clifford kind {kind!r}")


def conjugate_by_clifford(p: PauliString, g: CliffordGate) -> PauliString:
    """Heisenberg conjugation ``g^dagger p g``."""
    for t in g.targets:
        if not 0 <= t < p.n_qubits:
            raise IndexError(f"target {t} out of range for {p.n_qubits} qubits")
    x = p.x.copy()
    z = p.z.copy()
    r = np.array(1 if p.sign < 0 else 0, dtype=np.uint8)
    if g.kind == "S":
        # S^dagger = S Z, so S^dagger p S is the forward update by Z then S.
        apply_clifford_bits(x, z, r, "Z", g.targets)
    apply_clifford_bits(x, z, r, g.kind, g.targets)
    return PauliString(x, z, -1 if int(r) else 1)


class Tableau:
    """Stabilizer state with destabilizers; rows ``0..n-1`` are destabilizers.

    Storage is qubit-major: ``xs[q, row]``, ``zs[q, row]`` and sign bits ``r[row]``.
    """

    def __init__(self, n_qubits: int):
        if n_qubits < 0:
            raise ValueError("n_qubits must be nonnegative")
        n = n_qubits
        self.n = n
        self.xs = np.zeros((n, 2 * n), dtype=np.uint8)
        self.zs = np.zeros((n, 2 * n), dtype=np.uint8)
        self.r = np.zeros(2 * n, dtype=np.uint8)
        idx = np.arange(n)
        self.xs[idx, idx] = 1
        self.zs[idx, n + idx] = 1

    @property
    def n_qubits(self) -> int:
        return self.n

    def copy(self) -> Tableau:
        t = Tableau.__new__(Tableau)
        t.n = self.n
        t.xs = self.xs.copy()
        t.zs = self.zs.copy()
        t.r = self.r.copy()
        return t

    def row(self, k: int) -> PauliString:
        return PauliString(self.xs[:, k], self.zs[:, k], -1 if self.r[k] else 1)

    @property
    def stabilizer_rows(self) -> list[PauliString]:
        return [self.row(self.n + k) for k in range(self.n)]

    @property
    def destabilizer_rows(self) -> list[PauliString]:
        return [self.row(k) for k in range(self.n)]

    def apply(self, gate: CliffordGate) -> Tableau:
        for t in gate.targets:
            if not 0 <= t < self.n:
                raise IndexError(f"target {t} out of range for {self.n} qubits")
        apply_clifford_bits(self.xs, self.zs, self.r, gate.kind, gate.targets)
        return self

    def _anticommuting_rows(self, p: PauliString) -> np.ndarray:
        supp = np.flatnonzero(p.x | p.z)
        if len(supp) == 0:
            return np.zeros(2 * self.n, dtype=bool)
        xs = self.xs[supp]
        zs = self.zs[supp]
        ac = (xs & p.z[supp, None]) ^ (zs & p.x[supp, None])
        return (np.bitwise_xor.reduce(ac, axis=0) & 1).astype(bool)

    def _rowsum_into(self, rows: np.ndarray, src: int):
        """rows[i] <- src * rows[i] for every row index in ``rows``."""
        if len(rows) == 0:
            return
        qs = np.flatnonzero(self.xs[:, src] | self.zs[:, src])
        x1 = self.xs[qs, src][:, None]
        z1 = self.zs[qs, src][:, None]
        x2 = self.xs[np.ix_(qs, rows)]
        z2 = self.zs[np.ix_(qs, rows)]
        k = _g(x1, z1, x2, z2).sum(axis=0) + 2 * (self.r[rows].astype(np.int64) + int(self.r[src]))
        self.r[rows] = ((k % 4) >> 1).astype(np.uint8)
        self.xs[np.ix_(qs, rows)] = x2 ^ x1
        self.zs[np.ix_(qs, rows)] = z2 ^ z1

    def _stabilizer_product_sign(self, p: PauliString, ac: np.ndarray) -> int:
        """Sign s with ``s * |p|`` in the stabilizer group (deterministic case)."""
        n = self.n
        sel = n + np.flatnonzero(ac[:n])
        if len(sel) == 0:
            x = z = np.zeros(n, np.uint8)
            k = 0
        else:
            xs, zs = self.xs[:, sel], self.zs[:, sel]
            # left-to-right product: column j multiplies the running product of columns < j
            xa = np.bitwise_xor.accumulate(xs, axis=1)
            za = np.bitwise_xor.accumulate(zs, axis=1)
            xb = np.concatenate([np.zeros((n, 1), np.uint8), xa[:, :-1]], axis=1)
            zb = np.concatenate([np.zeros((n, 1), np.uint8), za[:, :-1]], axis=1)
            k = int(np.sum(_g(xs, zs, xb, zb))) + 2 * int(np.sum(self.r[sel]))
            x, z = xa[:, -1], za[:, -1]
        if not (np.array_equal(x, p.x) and np.array_equal(z, p.z)):
            raise AssertionError("stabilizer product does not reproduce the observable")
        return -1 if k % 4 == 2 else 1

    def expectation(self, p: PauliString) -> int:
        if p.n_qubits != self.n:
            raise ValueError("observable length does not match tableau")
        ac = self._anticommuting_rows(p)
        if ac[self.n:].any():
            return 0
        return p.sign * self._stabilizer_product_sign(p, ac)

    def measure(self, p: PauliString, rng: np.random.Generator | None = None,
                forced: int | None = None) -> tuple[int, bool]:
        """Measure ``p`` in place; returns ``(bit, deterministic)``, bit 0 is eigenvalue +1."""
        if p.n_qubits != self.n:
            raise ValueError("observable length does not match tableau")
        n = self.n
        ac = self._anticommuting_rows(p)
        stab_hits = np.flatnonzero(ac[n:])
        if len(stab_hits) == 0:
            bit = 0 if p.sign * self._stabilizer_product_sign(p, ac) > 0 else 1
            if forced is not None and int(forced) != bit:
                raise ContradictoryOutcome(f"outcome of {p.to_text()} is fixed to {bit}")
            return bit, True
        if forced is not None:
            if forced not in (0, 1):
                raise ValueError(f"forced outcome must be 0 or 1, got {forced}")
            bit = int(forced)
        else:
            if rng is None:
                raise ValueError("random measurement needs an rng or a forced outcome")
            bit = int(rng.integers(2))
        piv = n + int(stab_hits[0])
        others = np.flatnonzero(ac)
        others = others[others != piv]
        self._rowsum_into(others, piv)
        d = piv - n
        self.xs[:, d] = self.xs[:, piv]
        self.zs[:, d] = self.zs[:, piv]
        self.r[d] = self.r[piv]
        self.xs[:, piv] = p.x
        self.zs[:, piv] = p.z
        # row stores |p| with sign; eigenvalue of p is (-1)**bit
        self.r[piv] = bit ^ (1 if p.sign < 0 else 0)
        return bit, False

    def symplectic_rank(self) -> int:
        """Rank over GF(2) of all 2n rows (2n for a valid tableau)."""
        mat = np.concatenate([self.xs, self.zs], axis=0).T.copy()
        rank = 0
        rows, cols = mat.shape
        for c in range(cols):
            hits = np.flatnonzero(mat[rank:, c]) + rank
            if len(hits) == 0:
                continue
            mat[[rank, hits[0]]] = mat[[hits[0], rank]]
            below = np.flatnonzero(mat[:, c])
            below = below[below != rank]
            mat[below] ^= mat[rank]
            rank += 1
            if rank == rows:
                break
        return rank


def tableau_measure(t: Tableau, p: PauliString, rng: np.random.Generator | None = None,
                    forced: int | None = None) -> tuple[int, bool, Tableau]:
    """Measure ``p`` on ``t`` (mutated in place and returned)."""
    bit, det = t.measure(p, rng=rng, forced=forced)
    return bit, det, t


def tableau_expectation(t: Tableau, p: PauliString) -> int:
    return t.expectation(p)
