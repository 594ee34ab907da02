"""Ground state of the hopping Hamiltonian via X gates and a Givens network."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fermion import half_filling
from .lattice import DOWN, UP, HoneycombLattice
from .statevec import GIVENS, X, Circuit, Gate, StateVector, run

ORTHO_TOL = 1e-10


@dataclass(frozen=True)
class OrbitalBasis:
    """Single-particle orbitals of ``-tau * adjacency`` for one spin species.

    Attributes:
        energies: all ``N_site`` orbital energies, ascending.
        q: ``N_site x N_occ`` matrix whose columns are the occupied orbitals.
        occupations: ``(N_up, N_down)``.
        spin: which species ``q`` belongs to.
    """

    energies: np.ndarray
    q: np.ndarray
    occupations: tuple[int, int]
    spin: int

    @property
    def n_occ(self) -> int:
        return self.q.shape[1]

    @property
    def occupied_energy(self) -> float:
        return float(self.energies[: self.n_occ].sum())


def single_particle_orbitals(lat: HoneycombLattice, tau: float = 1.0, spin: int = UP) -> OrbitalBasis:
    """Lowest orbitals of ``-tau A``; ties keep ``eigh`` order, each column's
    first non-negligible entry is made positive."""
    h = -tau * lat.adjacency_matrix()
    energies, vecs = np.linalg.eigh(h)
    occ = half_filling(lat)
    n_occ = occ[0] if spin == UP else occ[1]
    q = vecs[:, :n_occ].copy()
    for k in range(n_occ):
        lead = np.flatnonzero(np.abs(q[:, k]) > 1e-9)
        if lead.size and q[lead[0], k] < 0:
            q[:, k] *= -1
    return OrbitalBasis(energies, q, occ, spin)


def givens_angles(q: np.ndarray) -> list[tuple[int, float]]:
    """Reduce ``W = Q^T`` to ``[D | 0]`` with column rotations on ``(c, c+1)``.

    Returns the rotations ``(c, theta)`` in discovery order; preparing the
    state applies them in reverse.  Uses ``N_occ (N_site - N_occ)`` rotations.
    """
    n, m = q.shape
    if not np.allclose(q.T @ q, np.eye(m), atol=ORTHO_TOL):
        raise ValueError("orbital matrix columns are not orthonormal")
    w = q.T.astype(float).copy()
    # row-echelon from the right: row i vanishes beyond column n - m + i
    for col in range(n - 1, n - m, -1):
        i = col - (n - m) - 1  # rows 0..i must vanish in this column
        for r in range(i + 1):
            # rotate rows (r, r+1) so that w[r, col] = 0
            a, b = w[r, col], w[r + 1, col]
            if abs(a) < 1e-15:
                continue
            rho = math.hypot(a, b)
            c, s = b / rho, a / rho
            top, bot = w[r].copy(), w[r + 1].copy()
            w[r] = c * top - s * bot
            w[r + 1] = s * top + c * bot
    rotations = []
    for i in range(m):
        for c in range(n - m + i - 1, i - 1, -1):
            theta = math.atan2(w[i, c + 1], w[i, c])
            co, si = math.cos(theta), math.sin(theta)
            left, right = w[:, c].copy(), w[:, c + 1].copy()
            w[:, c] = co * left + si * right
            w[:, c + 1] = -si * left + co * right
            rotations.append((c, theta))
    return rotations


def compile_givens(basis: OrbitalBasis, lat: HoneycombLattice) -> list[Gate]:
    """X gates on the first ``N_occ`` modes of the spin species, then the Givens network."""
    modes = lat.spin_qubits(basis.spin)
    gates = [Gate(X, (modes[k],)) for k in range(basis.n_occ)]
    for c, theta in reversed(givens_angles(basis.q)):
        if abs(theta) < 1e-15:
            continue
        gates.append(Gate(GIVENS, (modes[c], modes[c + 1]), theta=theta))
    return gates


def preparation_circuit(lat: HoneycombLattice, tau: float = 1.0) -> Circuit:
    """Both spin fragments, with every X gate ahead of every rotation.

    A bare X is only a fermionic creation operator on a basis state, so the
    second species must be occupied before the first one is rotated.
    """
    fragments = [compile_givens(single_particle_orbitals(lat, tau, s), lat) for s in (UP, DOWN)]
    circ = Circuit(lat.n_qubits)
    circ.extend(g for frag in fragments for g in frag if g.kind == X)
    circ.extend(g for frag in fragments for g in frag if g.kind != X)
    return circ


def prepare_initial(lat: HoneycombLattice, tau: float = 1.0) -> StateVector:
    """Ground state of ``H_hop`` at half filling (a Slater determinant per spin)."""
    return run(preparation_circuit(lat, tau))
