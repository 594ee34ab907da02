"""Pauli strings and weighted sums of Pauli strings.

Letters are stored in the symplectic form: an ``x`` bitmask and a ``z``
bitmask, bit ``j`` referring to qubit ``j``.  The canonical string for a
pattern ``(x, z)`` is ``prod_j i^(x_j z_j) X_j^(x_j) Z_j^(z_j)`` so that
``(1, 1)`` is exactly ``Y``.  Every phase produced by multiplication lives in
the coefficient.

Text format (used for golden files and CLI dumps)::

    (0.5+0j) X0 Z1 X2

Identity letters are omitted; the pure identity is written ``(c) I``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

import numpy as np
import scipy.sparse as sp

PRUNE_TOL = 1e-12
MAX_DENSE_QUBITS = 14

_LETTER_BITS = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
_BITS_LETTER = {v: k for k, v in _LETTER_BITS.items()}
_I_POW = (1, 1j, -1, -1j)


class DimensionError(ValueError):
    """Operands act on different numbers of qubits."""


class CapacityError(MemoryError):
    """Requested dense representation exceeds the size guard."""


def _popcount(v: int) -> int:
    return bin(v).count("1")


def _product_phase(x1: int, z1: int, x2: int, z2: int) -> tuple[int, int, int]:
    """Return (x, z, k) with P(x1,z1) P(x2,z2) = i^k P(x, z)."""
    x3 = x1 ^ x2
    z3 = z1 ^ z2
    k = (
        _popcount(x1 & z1)
        + _popcount(x2 & z2)
        + 2 * _popcount(z1 & x2)
        - _popcount(x3 & z3)
    ) % 4
    return x3, z3, k


@dataclass(frozen=True)
class PauliString:
    """A single Pauli string with a complex coefficient."""

    n_qubits: int
    x: int
    z: int
    coeff: complex = 1.0

    def __post_init__(self) -> None:
        if self.n_qubits <= 0:
            raise ValueError("n_qubits must be positive")
        limit = 1 << self.n_qubits
        if not (0 <= self.x < limit and 0 <= self.z < limit):
            raise DimensionError("letter mask exceeds n_qubits")

    @classmethod
    def from_label(cls, label: str, coeff: complex = 1.0) -> "PauliString":
        """Build from a dense label; character ``j`` is qubit ``j``."""
        x = z = 0
        for j, ch in enumerate(label.upper()):
            bx, bz = _LETTER_BITS[ch]
            x |= bx << j
            z |= bz << j
        return cls(len(label), x, z, complex(coeff))

    @classmethod
    def from_sparse(
        cls, n_qubits: int, letters: Mapping[int, str], coeff: complex = 1.0
    ) -> "PauliString":
        x = z = 0
        for q, ch in letters.items():
            if not 0 <= q < n_qubits:
                raise DimensionError(f"qubit {q} out of range for {n_qubits} qubits")
            bx, bz = _LETTER_BITS[ch.upper()]
            x |= bx << q
            z |= bz << q
        return cls(n_qubits, x, z, complex(coeff))

    @property
    def key(self) -> tuple[int, int]:
        return (self.x, self.z)

    @property
    def letters(self) -> str:
        return "".join(
            _BITS_LETTER[((self.x >> j) & 1, (self.z >> j) & 1)]
            for j in range(self.n_qubits)
        )

    @property
    def weight(self) -> int:
        return _popcount(self.x | self.z)

    def support(self) -> list[int]:
        m = self.x | self.z
        return [j for j in range(self.n_qubits) if (m >> j) & 1]

    def letter(self, q: int) -> str:
        return _BITS_LETTER[((self.x >> q) & 1, (self.z >> q) & 1)]

    def __mul__(self, other):
        if isinstance(other, PauliString):
            return multiply(self, other)
        if isinstance(other, (int, float, complex, np.number)):
            return PauliString(self.n_qubits, self.x, self.z, self.coeff * other)
        return NotImplemented

    __rmul__ = lambda self, other: self.__mul__(other)  # noqa: E731

    def commutes_with(self, other: "PauliString") -> bool:
        return (_popcount(self.x & other.z) + _popcount(self.z & other.x)) % 2 == 0

    def to_text(self) -> str:
        body = " ".join(f"{self.letter(q)}{q}" for q in self.support()) or "I"
        return f"({_fmt_complex(self.coeff)}) {body}"

    def __str__(self) -> str:
        return self.to_text()


def multiply(a: PauliString, b: PauliString) -> PauliString:
    """Matrix product of two Pauli strings, phase folded into the coefficient."""
    if a.n_qubits != b.n_qubits:
        raise DimensionError(f"{a.n_qubits} != {b.n_qubits} qubits")
    x, z, k = _product_phase(a.x, a.z, b.x, b.z)
    return PauliString(a.n_qubits, x, z, a.coeff * b.coeff * _I_POW[k])


class PauliSum:
    """Linear combination of Pauli strings, keyed by letter pattern.

    Instances are treated as immutable values; every arithmetic operation
    returns a new sum with duplicate patterns merged and near-zero terms
    (``|c| < tol``) dropped.
    """

    __slots__ = ("n_qubits", "_terms", "tol")

    def __init__(
        self,
        n_qubits: int,
        terms: Mapping[tuple[int, int], complex] | Iterable[PauliString] = (),
        tol: float = PRUNE_TOL,
    ) -> None:
        if n_qubits <= 0:
            raise ValueError("n_qubits must be positive")
        self.n_qubits = n_qubits
        self.tol = tol
        acc: dict[tuple[int, int], complex] = {}
        if isinstance(terms, Mapping):
            items = terms.items()
        else:
            items = []
            for p in terms:
                if p.n_qubits != n_qubits:
                    raise DimensionError(f"{p.n_qubits} != {n_qubits} qubits")
                items.append((p.key, p.coeff))
        for key, c in items:
            acc[key] = acc.get(key, 0.0) + complex(c)
        self._terms = {k: c for k, c in acc.items() if abs(c) >= tol}

    # construction helpers -------------------------------------------------

    @classmethod
    def identity(cls, n_qubits: int, coeff: complex = 1.0) -> "PauliSum":
        return cls(n_qubits, {(0, 0): coeff})

    @classmethod
    def zero(cls, n_qubits: int) -> "PauliSum":
        return cls(n_qubits)

    @classmethod
    def from_string(cls, p: PauliString) -> "PauliSum":
        return cls(p.n_qubits, [p])

    @classmethod
    def from_labels(cls, pairs: Iterable[tuple[str, complex]]) -> "PauliSum":
        strings = [PauliString.from_label(lab, c) for lab, c in pairs]
        if not strings:
            raise ValueError("need at least one label to infer n_qubits")
        return cls(strings[0].n_qubits, strings)

    # mapping-like access --------------------------------------------------

    def __len__(self) -> int:
        return len(self._terms)

    def __iter__(self) -> Iterator[PauliString]:
        for (x, z), c in self._terms.items():
            yield PauliString(self.n_qubits, x, z, c)

    def items(self):
        return self._terms.items()

    def coeff(self, key: tuple[int, int] | PauliString | str) -> complex:
        if isinstance(key, str):
            key = PauliString.from_label(key).key
        elif isinstance(key, PauliString):
            key = key.key
        return self._terms.get(key, 0.0)

    def __contains__(self, key) -> bool:
        return abs(self.coeff(key)) > 0

    def is_zero(self) -> bool:
        return not self._terms

    def sorted_terms(self) -> list[PauliString]:
        """Terms in a deterministic order (by support, then letters)."""
        return sorted(self, key=lambda p: (p.weight, p.support(), p.letters))

    # arithmetic -----------------------------------------------------------

    def _check(self, other: "PauliSum") -> None:
        if self.n_qubits != other.n_qubits:
            raise DimensionError(f"{self.n_qubits} != {other.n_qubits} qubits")

    def __add__(self, other):
        if isinstance(other, PauliString):
            other = PauliSum.from_string(other)
        if not isinstance(other, PauliSum):
            return NotImplemented
        self._check(other)
        acc = dict(self._terms)
        for k, c in other._terms.items():
            acc[k] = acc.get(k, 0.0) + c
        return PauliSum(self.n_qubits, acc, self.tol)

    def __neg__(self) -> "PauliSum":
        return PauliSum(self.n_qubits, {k: -c for k, c in self._terms.items()}, self.tol)

    def __sub__(self, other):
        if isinstance(other, PauliString):
            other = PauliSum.from_string(other)
        return self + (-other)

    def scale(self, s: complex) -> "PauliSum":
        return PauliSum(self.n_qubits, {k: c * s for k, c in self._terms.items()}, self.tol)

    def __mul__(self, other):
        if isinstance(other, (int, float, complex, np.number)):
            return self.scale(other)
        if isinstance(other, PauliString):
            other = PauliSum.from_string(other)
        if not isinstance(other, PauliSum):
            return NotImplemented
        return product(self, other)

    def __rmul__(self, other):
        if isinstance(other, (int, float, complex, np.number)):
            return self.scale(other)
        return NotImplemented

    def __matmul__(self, other: "PauliSum") -> "PauliSum":
        return product(self, other)

    # properties -----------------------------------------------------------

    def is_hermitian(self, atol: float = 1e-12) -> bool:
        return all(abs(c.imag) <= atol for c in self._terms.values())

    def real(self) -> "PauliSum":
        """Drop imaginary dust from the coefficients."""
        return PauliSum(self.n_qubits, {k: c.real for k, c in self._terms.items()}, self.tol)

    def norm1(self) -> float:
        return sum(abs(c) for c in self._terms.values())

    def allclose(self, other: "PauliSum", atol: float = 1e-12) -> bool:
        self._check(other)
        keys = set(self._terms) | set(other._terms)
        return all(abs(self.coeff(k) - other.coeff(k)) <= atol for k in keys)

    # dense / sparse -------------------------------------------------------

    def to_sparse(self) -> sp.csr_matrix:
        dim = 1 << self.n_qubits
        idx = np.arange(dim, dtype=np.int64)
        rows, cols, vals = [], [], []
        for (x, z), c in self._terms.items():
            sign = 1 - 2 * (np.bitwise_count(idx & z) & 1).astype(np.int8)
            rows.append(idx ^ x)
            cols.append(idx)
            vals.append(c * _I_POW[_popcount(x & z) % 4] * sign)
        if not rows:
            return sp.csr_matrix((dim, dim), dtype=complex)
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(dim, dim),
        )

    def to_dense(self) -> np.ndarray:
        return to_dense(self)

    # text -----------------------------------------------------------------

    def to_text(self) -> str:
        return "\n".join(p.to_text() for p in self.sorted_terms())

    @classmethod
    def from_text(cls, text: str, n_qubits: int) -> "PauliSum":
        strings = [parse_pauli_string(line, n_qubits) for line in text.splitlines() if line.strip()]
        return cls(n_qubits, strings)

    def __repr__(self) -> str:
        return f"PauliSum(n_qubits={self.n_qubits}, terms={len(self)})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, PauliSum):
            return NotImplemented
        return self.n_qubits == other.n_qubits and self.allclose(other, atol=0.0)

    __hash__ = None  # type: ignore[assignment]


def product(a: PauliSum, b: PauliSum) -> PauliSum:
    a._check(b)
    acc: dict[tuple[int, int], complex] = {}
    for (x1, z1), c1 in a._terms.items():
        for (x2, z2), c2 in b._terms.items():
            x, z, k = _product_phase(x1, z1, x2, z2)
            key = (x, z)
            acc[key] = acc.get(key, 0.0) + c1 * c2 * _I_POW[k]
    return PauliSum(a.n_qubits, acc, min(a.tol, b.tol))


def commutator(a: PauliSum, b: PauliSum) -> PauliSum:
    """``ab - ba``; only anticommuting string pairs contribute (twice)."""
    a._check(b)
    acc: dict[tuple[int, int], complex] = {}
    for (x1, z1), c1 in a._terms.items():
        for (x2, z2), c2 in b._terms.items():
            if (_popcount(x1 & z2) + _popcount(z1 & x2)) & 1 == 0:
                continue
            x, z, k = _product_phase(x1, z1, x2, z2)
            key = (x, z)
            acc[key] = acc.get(key, 0.0) + 2.0 * c1 * c2 * _I_POW[k]
    return PauliSum(a.n_qubits, acc, min(a.tol, b.tol))


def anticommutator(a: PauliSum, b: PauliSum) -> PauliSum:
    a._check(b)
    acc: dict[tuple[int, int], complex] = {}
    for (x1, z1), c1 in a._terms.items():
        for (x2, z2), c2 in b._terms.items():
            if (_popcount(x1 & z2) + _popcount(z1 & x2)) & 1:
                continue
            x, z, k = _product_phase(x1, z1, x2, z2)
            key = (x, z)
            acc[key] = acc.get(key, 0.0) + 2.0 * c1 * c2 * _I_POW[k]
    return PauliSum(a.n_qubits, acc, min(a.tol, b.tol))


def trace_product(a: PauliSum, b: PauliSum) -> complex:
    """Normalized trace ``Tr(ab) / 2^n``."""
    a._check(b)
    small, large = (a, b) if len(a) <= len(b) else (b, a)
    total = 0j
    for key, c in small._terms.items():
        d = large._terms.get(key)
        if d is not None:
            total += c * d
    return total


def to_dense(a: PauliSum) -> np.ndarray:
    if a.n_qubits > MAX_DENSE_QUBITS:
        raise CapacityError(
            f"dense matrix for {a.n_qubits} qubits exceeds the {MAX_DENSE_QUBITS}-qubit guard"
        )
    return a.to_sparse().toarray()


_TOKEN = re.compile(r"([IXYZ])(\d+)")


def parse_pauli_string(text: str, n_qubits: int) -> PauliString:
    """Inverse of :meth:`PauliString.to_text`."""
    text = text.strip()
    m = re.match(r"^\(([^)]*)\)\s*(.*)$", text)
    if not m:
        raise ValueError(f"cannot parse Pauli string {text!r}")
    coeff = complex(m.group(1).replace(" ", ""))
    letters: dict[int, str] = {}
    body = m.group(2).strip()
    if body and body != "I":
        for tok in body.split():
            tm = _TOKEN.fullmatch(tok)
            if not tm:
                raise ValueError(f"bad token {tok!r}")
            if tm.group(1) != "I":
                letters[int(tm.group(2))] = tm.group(1)
    return PauliString.from_sparse(n_qubits, letters, coeff)


def _fmt_complex(c: complex) -> str:
    return f"{c.real:.12g}{c.imag:+.12g}j"
