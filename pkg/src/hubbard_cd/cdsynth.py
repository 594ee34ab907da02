"""Nested-commutator gauge potentials and the two-body CD operator pool.

For ``H_a(lam)`` and ``dH = dH_a/dlam`` the order-``l`` ansatz is

    A(lam) = sum_k alpha_k O_k,   O_k = i [H_a, [H_a, ... [H_a, dH]]]  (2k - 1 nestings)

and ``alpha`` minimises ``Tr[G^2]`` with ``G = dH - i[H_a, A]``.  Writing
``C_k = i[H_a, O_k]`` this is the least-squares problem ``M alpha = b`` with
``M_kj = Tr(C_k C_j)`` and ``b_k = Tr(dH C_k)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .fermion import HamiltonianSet
from .lattice import ConfigurationError
from .pauli import PauliSum, commutator, trace_product

LambdaHamiltonian = Union[PauliSum, Callable[[float], PauliSum]]

INTERP_STEP_THRESHOLD = 1000
INTERP_GRID = 1024


@dataclass(frozen=True)
class GaugePotential:
    order: int
    lam: float
    basis: tuple[PauliSum, ...]
    alpha: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.basis) != self.order or len(self.alpha) != self.order:
            raise ValueError("basis and alpha must both have length == order")

    def operator(self) -> PauliSum:
        """``A = sum_k alpha_k O_k``."""
        n = self.basis[0].n_qubits
        total = PauliSum.zero(n)
        for a, o in zip(self.alpha, self.basis):
            total = total + o.scale(a)
        return total


def _at(h_a: LambdaHamiltonian, lam: float) -> PauliSum:
    return h_a(lam) if callable(h_a) else h_a


def gauge_basis(h_a: LambdaHamiltonian, dldh: PauliSum, order: int, lam: float = 0.0) -> list[PauliSum]:
    """Operators ``O_1 .. O_order`` at ``lam``."""
    if order < 1:
        raise ValueError("order must be >= 1")
    h = _at(h_a, lam)
    if h.n_qubits != dldh.n_qubits:
        from .pauli import DimensionError

        raise DimensionError(f"{h.n_qubits} != {dldh.n_qubits} qubits")
    basis = []
    nested = commutator(h, dldh)
    basis.append(nested.scale(1j).real())
    for _ in range(1, order):
        nested = commutator(h, commutator(h, nested))
        basis.append(nested.scale(1j).real())
    return basis


def solve_alpha(h_a: LambdaHamiltonian, basis: Sequence[PauliSum], dldh: PauliSum, lam: float = 0.0) -> list[float]:
    """Least-squares coefficients; all-zero when no basis operator acts."""
    if not basis:
        raise ValueError("basis must be nonempty")
    h = _at(h_a, lam)
    cs = [commutator(h, o).scale(1j) for o in basis]
    k = len(cs)
    m = np.empty((k, k))
    b = np.empty(k)
    for i in range(k):
        b[i] = trace_product(dldh, cs[i]).real
        for j in range(i, k):
            m[i, j] = m[j, i] = trace_product(cs[i], cs[j]).real
    if not np.any(np.abs(m) > 0.0):
        return [0.0] * k
    alpha, *_ = np.linalg.lstsq(m, b, rcond=None)
    return [float(a) for a in alpha]


def action(h_a: LambdaHamiltonian, dldh: PauliSum, a_lam: PauliSum, lam: float = 0.0) -> float:
    """Normalised ``Tr[G^2] / 2^n`` for a trial gauge potential."""
    h = _at(h_a, lam)
    g = dldh - commutator(h, a_lam).scale(1j)
    return trace_product(g, g).real


def gauge_potential(h_a: LambdaHamiltonian, dldh: PauliSum, order: int, lam: float) -> GaugePotential:
    basis = gauge_basis(h_a, dldh, order, lam)
    alpha = solve_alpha(h_a, basis, dldh, lam)
    return GaugePotential(order, float(lam), tuple(basis), tuple(alpha))


class CdDriver:
    """Counterdiabatic term for ``H_a(lam) = H_hop + lam H_coul``.

    ``dH/dlam = H_coul``.  Coefficients are solved afresh at every requested
    ``lam``; for sweeps with more than ``INTERP_STEP_THRESHOLD`` steps call
    :meth:`use_interpolation` to switch to a linear table on a uniform grid.
    """

    def __init__(self, hams: HamiltonianSet, order: int = 1) -> None:
        self.hams = hams
        self.order = order
        self._table: tuple[np.ndarray, np.ndarray] | None = None
        self._basis_cache: dict[float, list[PauliSum]] = {}

    def h_a(self, lam: float) -> PauliSum:
        return self.hams.h_hop + self.hams.h_coul.scale(lam)

    def basis(self, lam: float) -> list[PauliSum]:
        # the first-order operator does not depend on lam because [H_c, H_c] = 0
        key = 0.0 if self.order == 1 else float(lam)
        if key not in self._basis_cache:
            self._basis_cache[key] = gauge_basis(self.h_a, self.hams.h_coul, self.order, key)
        return self._basis_cache[key]

    def alpha(self, lam: float) -> list[float]:
        if self._table is not None:
            grid, values = self._table
            return [float(np.interp(lam, grid, values[:, k])) for k in range(self.order)]
        return solve_alpha(self.h_a, self.basis(lam), self.hams.h_coul, lam)

    def use_interpolation(self, points: int = INTERP_GRID) -> None:
        grid = np.linspace(0.0, 1.0, points)
        self._table = None
        values = np.array([self.alpha(float(l)) for l in grid])
        self._table = (grid, values)

    def potential(self, lam: float) -> GaugePotential:
        return GaugePotential(self.order, float(lam), tuple(self.basis(lam)), tuple(self.alpha(lam)))


def cd_hamiltonian(schedule, t: float, driver: CdDriver) -> PauliSum:
    """``lam_dot(t) * A(lam(t))``."""
    if not 0.0 <= t <= schedule.T:
        raise ValueError(f"t={t} outside [0, {schedule.T}]")
    lam_dot = schedule.lam_dot(t)
    pot = driver.potential(schedule.lam(t))
    return pot.operator().scale(lam_dot)


@dataclass(frozen=True)
class CdPool:
    """Two-body generators, one per interacting qubit pair."""

    terms: tuple[PauliSum, ...]
    pairs: tuple[tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.terms)

    def to_text(self) -> str:
        blocks = []
        for (a, b), g in zip(self.pairs, self.terms):
            blocks.append(f"# pair {a} {b}\n{g.to_text()}")
        return "\n".join(blocks)


def two_body_pool(o1: PauliSum) -> CdPool:
    """Keep the weight-2 ``XY``/``YX`` strings of ``o1`` and group them by qubit pair.

    Each generator keeps the coefficients found in ``o1`` (so its relative
    sign makes it number conserving); the pair's two strings share one
    parameter.
    """
    groups: dict[tuple[int, int], list] = {}
    for p in o1:
        if p.weight != 2:
            continue
        support = p.support()
        letters = {p.letter(q) for q in support}
        if letters != {"X", "Y"}:
            continue
        groups.setdefault((support[0], support[1]), []).append(p)
    if not groups:
        raise ConfigurationError("empty two-body CD pool")
    pairs = tuple(sorted(groups))
    terms = []
    for pair in pairs:
        terms.append(PauliSum(o1.n_qubits, groups[pair]).real())
    return CdPool(tuple(terms), pairs)


def first_order_operator(hams: HamiltonianSet) -> PauliSum:
    """``O_1 = i [H_hop, H_coul]`` (identical to ``i [H_a(lam), H_coul]`` for any lam)."""
    return commutator(hams.h_hop, hams.h_coul).scale(1j).real()
