"""Reference ground energies in fixed particle-number sectors.

Sector dimension at most ``DENSE_LIMIT`` is diagonalised densely; larger
sectors use a restarted Lanczos iteration with full reorthogonalisation and
matrix-vector products built straight from the Pauli terms.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .fermion import HamiltonianSet, build_hamiltonians, half_filling
from .lattice import DOWN, UP, HoneycombLattice
from .pauli import DimensionError, PauliSum
from .statevec import StateVector

log = logging.getLogger(__name__)

DENSE_LIMIT = 4096
LANCZOS_BASIS = 200
LANCZOS_TOL = 1e-8
LANCZOS_MEMORY = 1 << 30
CACHE_MEMORY = 1 << 30
_I_POW = np.array([1, 1j, -1, -1j])


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, energy: float, residual: float) -> None:
        super().__init__(f"{message} (energy {energy:.12g}, residual {residual:.3g})")
        self.energy = energy
        self.residual = residual


@dataclass(frozen=True)
class SectorBasis:
    """Basis states with fixed spin-resolved occupations, sorted ascending."""

    n_up: int
    n_down: int
    states: np.ndarray

    @classmethod
    def build(cls, lat: HoneycombLattice, n_up: int, n_down: int) -> "SectorBasis":
        if not (0 <= n_up <= lat.n_sites and 0 <= n_down <= lat.n_sites):
            raise ValueError(f"sector ({n_up}, {n_down}) invalid for {lat.n_sites} sites")
        up = _occupations(lat.spin_qubits(UP), n_up)
        down = _occupations(lat.spin_qubits(DOWN), n_down)
        states = np.sort((up[:, None] | down[None, :]).ravel())
        return cls(n_up, n_down, states)

    @property
    def dim(self) -> int:
        return len(self.states)

    def index(self, bits: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.states, bits)

    def embed(self, v: np.ndarray, n_qubits: int) -> np.ndarray:
        full = np.zeros(1 << n_qubits, dtype=complex)
        full[self.states] = v
        return full


def _occupations(qubits: list[int], k: int) -> np.ndarray:
    masks = [sum(1 << q for q in combo) for combo in itertools.combinations(qubits, k)]
    return np.array(masks, dtype=np.int64)


class SectorOperator:
    """``H`` restricted to a number-conserving sector.

    Terms are grouped by their X mask; each group maps basis state ``i`` to
    ``i ^ x`` with a diagonal weight.  Group tables are cached while they fit
    in ``CACHE_MEMORY`` and recomputed per product otherwise.
    """

    def __init__(self, h: PauliSum, basis: SectorBasis) -> None:
        self.basis = basis
        groups: dict[int, list[tuple[int, complex]]] = {}
        for (x, z), c in h.items():
            groups.setdefault(x, []).append((z, c * _I_POW[bin(x & z).count("1") % 4]))
        self.groups = sorted(groups.items())
        self.real = all(abs(complex(c).imag) < 1e-14 for _, terms in self.groups for _, c in terms)
        self.dtype = float if self.real else complex
        per_group = basis.dim * (8 + np.dtype(self.dtype).itemsize)
        self._cache = None
        if per_group * len(self.groups) <= CACHE_MEMORY:
            self._cache = [self._table(x, terms) for x, terms in self.groups]

    @property
    def dim(self) -> int:
        return self.basis.dim

    def _table(self, x: int, terms) -> tuple[np.ndarray | None, np.ndarray | None, np.ndarray]:
        """``(rows, targets, weights)``; rows whose image leaves the sector
        must carry zero weight and are dropped."""
        s = self.basis.states
        d = np.zeros(len(s), dtype=self.dtype)
        for z, c in terms:
            sign = 1.0 - 2.0 * (np.bitwise_count(s & z) & 1)
            d += (c.real if self.real else c) * sign
        if x == 0:
            return None, None, d
        image = s ^ x
        target = np.minimum(self.basis.index(image), len(s) - 1)
        inside = s[target] == image
        if np.any(np.abs(d[~inside]) > 1e-12):
            raise ValueError("operator does not conserve the sector")
        keep = inside & (d != 0)
        return np.flatnonzero(keep), target[keep], d[keep]

    def _tables(self):
        if self._cache is not None:
            yield from self._cache
        else:
            for x, terms in self.groups:
                yield self._table(x, terms)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros(self.dim, dtype=np.result_type(v, self.dtype))
        for rows, target, d in self._tables():
            if rows is None:
                out += d * v
            else:
                # i -> i ^ x is injective, so no target index repeats
                out[target] += d * v[rows]
        return out

    def dense(self) -> np.ndarray:
        m = np.zeros((self.dim, self.dim), dtype=self.dtype)
        diag = np.arange(self.dim)
        for rows, target, d in self._tables():
            if rows is None:
                m[diag, diag] += d
            else:
                m[target, rows] += d
        return m


@dataclass(frozen=True)
class GroundState:
    energy: float
    vector: np.ndarray | None
    basis: SectorBasis
    method: str
    residual: float = 0.0


def lanczos(
    op: SectorOperator,
    tol: float = LANCZOS_TOL,
    max_basis: int = LANCZOS_BASIS,
    max_restarts: int = 200,
    seed: int = 0,
    want_vector: bool = False,
) -> tuple[float, np.ndarray | None, float, list[float]]:
    """Lowest eigenpair by explicitly restarted Lanczos.

    Each restart begins from the previous Ritz vector, so the Ritz value
    never increases.  Returns ``(energy, vector, residual, history)``.
    """
    n = op.dim
    itemsize = np.dtype(op.dtype).itemsize
    m_max = max(8, min(max_basis, n, LANCZOS_MEMORY // max(1, n * itemsize)))
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n).astype(op.dtype)
    v /= np.linalg.norm(v)
    history: list[float] = []
    energy, residual = math.inf, math.inf
    for _ in range(max_restarts):
        vs = np.empty((m_max, n), dtype=op.dtype)
        alpha, beta = [], []
        vs[0] = v
        k = 0
        for k in range(m_max):
            w = op.matvec(vs[k])
            a = float(np.vdot(vs[k], w).real)
            alpha.append(a)
            w -= vs[: k + 1].T @ (vs[: k + 1].conj() @ w)
            w -= vs[: k + 1].T @ (vs[: k + 1].conj() @ w)
            b = float(np.linalg.norm(w))
            t = np.diag(alpha) + np.diag(beta, 1) + np.diag(beta, -1)
            evals, evecs = np.linalg.eigh(t)
            residual = abs(b * evecs[-1, 0])
            if residual < tol or b < 1e-14 or k == m_max - 1 or k == n - 1:
                break
            beta.append(b)
            vs[k + 1] = w / b
        energy = float(evals[0])
        history.append(energy)
        ritz = evecs[:, 0] @ vs[: len(alpha)]
        ritz /= np.linalg.norm(ritz)
        if residual < tol or len(alpha) >= n:
            return energy, ritz if want_vector else None, residual, history
        v = ritz
    raise ConvergenceError("Lanczos did not converge", energy, residual)


def ground_energy(
    lat: HoneycombLattice,
    tau: float = 1.0,
    u: float = 1.5,
    sector: tuple[int, int] | None = None,
    method: str = "auto",
    want_vector: bool = True,
) -> GroundState:
    """Lowest eigenvalue of ``H_FH`` in ``sector`` (half filling by default).

    ``method`` is ``"auto"``, ``"dense"`` or ``"lanczos"``.
    """
    hams = build_hamiltonians(lat, tau, u)
    return sector_ground_state(hams.h_fh, lat, sector or half_filling(lat), method, want_vector)


def sector_ground_state(
    h: PauliSum,
    lat: HoneycombLattice,
    sector: tuple[int, int],
    method: str = "auto",
    want_vector: bool = True,
) -> GroundState:
    if h.n_qubits != lat.n_qubits:
        raise DimensionError("Hamiltonian and lattice sizes differ")
    basis = SectorBasis.build(lat, *sector)
    op = SectorOperator(h, basis)
    if method == "auto":
        method = "dense" if basis.dim <= DENSE_LIMIT else "lanczos"
    if method == "dense":
        evals, evecs = np.linalg.eigh(op.dense())
        return GroundState(float(evals[0]), evecs[:, 0] if want_vector else None, basis, "dense")
    if method != "lanczos":
        raise ValueError(f"unknown method {method!r}")
    e, vec, res, hist = lanczos(op, want_vector=want_vector)
    log.info("lanczos: E0=%.12f residual=%.2e restarts=%d", e, res, len(hist))
    return GroundState(e, vec, basis, "lanczos", res)


def expectation(state: StateVector | np.ndarray, h: PauliSum) -> float:
    """``<psi|H|psi>``; raises if the imaginary part exceeds 1e-10."""
    psi = state.amplitudes if isinstance(state, StateVector) else state
    if psi.shape[-1] != 1 << h.n_qubits:
        raise DimensionError("state and operator sizes differ")
    from .statevec import CompiledOperator

    val = CompiledOperator(h).expectation(psi)
    return float(val)


# ---------------------------------------------------------------------------
# golden numbers


@dataclass(frozen=True)
class GoldenEntry:
    lattice: str
    tau: float
    u: float
    sector: tuple[int, int]
    energy: float
    tolerance: float


def load_golden() -> list[GoldenEntry]:
    text = resources.files("hubbard_cd.data").joinpath("golden.txt").read_text()
    out = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        name, tau, u, nu, nd, e, tol = line.split()
        out.append(GoldenEntry(name, float(tau), float(u), (int(nu), int(nd)), float(e), float(tol)))
    return out


def golden_energy(lattice: str, tau: float = 1.0, u: float = 1.5, sector: tuple[int, int] | None = None) -> float:
    for entry in load_golden():
        if entry.lattice == lattice and entry.tau == tau and entry.u == u and (sector is None or entry.sector == sector):
            return entry.energy
    raise KeyError(f"no golden energy for {lattice} tau={tau} U={u} sector={sector}")


def reference_energy(lat: HoneycombLattice, hams: HamiltonianSet) -> float:
    """Golden value when registered, otherwise a fresh oracle solve."""
    try:
        return golden_energy(lat.label, hams.tau, hams.u, half_filling(lat))
    except KeyError:
        return sector_ground_state(hams.h_fh, lat, half_filling(lat), want_vector=False).energy
