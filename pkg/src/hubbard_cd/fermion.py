"""Jordan-Wigner ladder operators and the Fermi-Hubbard Hamiltonians."""

from __future__ import annotations

from dataclasses import dataclass

from .lattice import DOWN, UP, HoneycombLattice
from .pauli import PauliString, PauliSum

CREATE, ANNIHILATE = "create", "annihilate"


def jw_ladder(j: int, n: int, kind: str) -> PauliSum:
    """``1/2 (X_j -/+ i Y_j) Z_0 ... Z_{j-1}``; minus for creation."""
    if not 0 <= j < n:
        raise IndexError(f"mode {j} out of range for {n} qubits")
    if kind not in (CREATE, ANNIHILATE):
        raise ValueError(f"kind must be {CREATE!r} or {ANNIHILATE!r}")
    zmask = (1 << j) - 1
    sign = -1j if kind == CREATE else 1j
    return PauliSum(
        n,
        [
            PauliString(n, 1 << j, zmask, 0.5),
            PauliString(n, 1 << j, zmask | (1 << j), 0.5 * sign),
        ],
    )


def number_op(q: int, n: int) -> PauliSum:
    """``(I - Z_q) / 2``."""
    return PauliSum(n, {(0, 0): 0.5, (0, 1 << q): -0.5})


def hopping_term(a: int, b: int, n: int) -> PauliSum:
    """``1/2 (X_a X_b + Y_a Y_b) Z_{a+1} ... Z_{b-1}`` = c_a^dag c_b + h.c."""
    a, b = min(a, b), max(a, b)
    if a == b:
        raise ValueError("hopping needs two distinct modes")
    between = ((1 << b) - 1) ^ ((1 << (a + 1)) - 1)
    x = (1 << a) | (1 << b)
    return PauliSum(n, {(x, between): 0.5, (x, between | x): 0.5})


def onsite_term(a: int, b: int, n: int) -> PauliSum:
    """``1/4 (I - Z_a)(I - Z_b)`` = n_a n_b."""
    za, zb = 1 << a, 1 << b
    return PauliSum(n, {(0, 0): 0.25, (0, za): -0.25, (0, zb): -0.25, (0, za | zb): 0.25})


@dataclass(frozen=True)
class HamiltonianSet:
    h_hop: PauliSum
    h_coul: PauliSum
    h_fh: PauliSum
    tau: float
    u: float

    @property
    def n_qubits(self) -> int:
        return self.h_fh.n_qubits


def build_hamiltonians(lat: HoneycombLattice, tau: float = 1.0, u: float = 1.5) -> HamiltonianSet:
    if tau <= 0:
        raise ValueError("tau must be positive")
    n = lat.n_qubits
    h_coul = PauliSum.zero(n)
    for i in lat.sites:
        h_coul = h_coul + onsite_term(lat.qubit_of(i, UP), lat.qubit_of(i, DOWN), n)
    h_coul = h_coul.scale(u)
    h_hop = PauliSum.zero(n)
    for a, b in lat.hopping_pairs():
        h_hop = h_hop + hopping_term(a, b, n)
    h_hop = h_hop.scale(-tau)
    return HamiltonianSet(h_hop, h_coul, h_hop + h_coul, float(tau), float(u))


def particle_number(lat: HoneycombLattice, spin: int) -> PauliSum:
    n = lat.n_qubits
    total = PauliSum.zero(n)
    for q in lat.spin_qubits(spin):
        total = total + number_op(q, n)
    return total


def half_filling(lat: HoneycombLattice) -> tuple[int, int]:
    """``(N_up, N_down)``; the extra electron of an odd lattice goes to spin up."""
    n = lat.n_sites
    return (n + 1) // 2, n // 2
