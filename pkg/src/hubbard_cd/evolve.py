"""Annealing schedule, Trotterized evolution and the energy-error metric.

Three variants share one first-order Trotter step built at the step midpoint
``t_j = (j - 1/2) dt``:

* ``adiabatic``     ``H_hop + lam H_coul``
* ``adiabatic_cd``  the same plus ``lam_dot A(lam)``
* ``cd_only``       ``H_hop + lam_dot A(lam)`` without the ramped interaction

Within a step the order is hopping terms, interaction terms, then CD terms.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .cdsynth import INTERP_STEP_THRESHOLD, CdDriver
from .fermion import HamiltonianSet, build_hamiltonians
from .lattice import HoneycombLattice
from .measure import build_groups, estimate_energy
from .pauli import PauliString, PauliSum
from .statevec import EXP_PAULI, CompiledOperator, Gate, StateVector, apply_gate, exp_pauli
from .stateprep import prepare_initial

ADIABATIC, ADIABATIC_CD, CD_ONLY = "adiabatic", "adiabatic_cd", "cd_only"
VARIANTS = (ADIABATIC, ADIABATIC_CD, CD_ONLY)
EXACT, SHOTS = "exact", "shots"


@dataclass(frozen=True)
class Schedule:
    """``lam(t) = sin^2[(pi/2) sin^2(pi t / 2T)]``."""

    T: float

    def __post_init__(self) -> None:
        if not self.T > 0:
            raise ValueError("T must be positive")

    def _check(self, t: float) -> None:
        if not -1e-12 <= t <= self.T * (1 + 1e-12):
            raise ValueError(f"t={t} outside [0, {self.T}]")

    def lam(self, t: float) -> float:
        self._check(t)
        s = math.sin(math.pi * t / (2 * self.T)) ** 2
        return math.sin(0.5 * math.pi * s) ** 2

    def lam_dot(self, t: float) -> float:
        self._check(t)
        s = math.sin(math.pi * t / (2 * self.T)) ** 2
        return (math.pi**2 / (4 * self.T)) * math.sin(math.pi * s) * math.sin(math.pi * t / self.T)


@dataclass(frozen=True)
class EvolutionPlan:
    variant: str
    trotter_steps: int
    dt: float
    order: int = 1

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.trotter_steps < 1:
            raise ValueError("need at least one Trotter step")
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    @property
    def T(self) -> float:
        return self.trotter_steps * self.dt

    @property
    def schedule(self) -> Schedule:
        return Schedule(self.T)

    def midpoint(self, j: int) -> float:
        if not 1 <= j <= self.trotter_steps:
            raise ValueError(f"step {j} outside 1..{self.trotter_steps}")
        return (j - 0.5) * self.dt

    @classmethod
    def from_time(cls, variant: str, T: float, dt: float, order: int = 1) -> "EvolutionPlan":
        return cls(variant, max(1, round(T / dt)), dt, order)


def _exponentials(op: PauliSum, factor: float) -> list[Gate]:
    gates = []
    if factor == 0.0:
        return gates
    for p in op.sorted_terms():
        if p.weight == 0:
            continue  # global phase
        gates.append(exp_pauli(p, theta=factor))
    return gates


class Stepper:
    """Builds Trotter steps for one plan and Hamiltonian set."""

    def __init__(self, plan: EvolutionPlan, hams: HamiltonianSet, driver: CdDriver | None = None) -> None:
        self.plan = plan
        self.hams = hams
        self.driver = None
        if plan.variant != ADIABATIC:
            self.driver = driver or CdDriver(hams, plan.order)
            if plan.trotter_steps > INTERP_STEP_THRESHOLD and self.driver._table is None:
                self.driver.use_interpolation()

    def cd_operator(self, lam: float) -> PauliSum:
        return self.driver.potential(lam).operator()

    def step(self, j: int) -> list[Gate]:
        plan = self.plan
        t = plan.midpoint(j)
        sched = plan.schedule
        lam = sched.lam(t)
        dt = plan.dt
        gates = _exponentials(self.hams.h_hop, dt)
        if plan.variant != CD_ONLY:
            gates += _exponentials(self.hams.h_coul, lam * dt)
        if plan.variant != ADIABATIC:
            gates += _exponentials(self.cd_operator(lam), sched.lam_dot(t) * dt)
        return gates


def build_step(plan: EvolutionPlan, j: int, hams: HamiltonianSet, driver: CdDriver | None = None) -> list[Gate]:
    """ExpPauli gates of Trotter step ``j`` (1-based)."""
    return Stepper(plan, hams, driver).step(j)


@dataclass(frozen=True)
class StepRecord:
    step: int
    t: float
    energy: float
    stderr: float = 0.0


@dataclass
class EvolutionResult:
    plan: EvolutionPlan
    e_initial: float
    records: list[StepRecord] = field(default_factory=list)
    state: StateVector | None = None
    shots: int = 0
    seed: int | None = None

    @property
    def e_final(self) -> float:
        return self.records[-1].energy if self.records else self.e_initial


def run_evolution(
    plan: EvolutionPlan,
    lat: HoneycombLattice,
    hams: HamiltonianSet | None = None,
    mode: str = EXACT,
    shots: int = 30000,
    seed: int = 0,
    record_every: int = 1,
    driver: CdDriver | None = None,
) -> EvolutionResult:
    """Evolve the hopping ground state and record ``<H_FH>`` along the way.

    In ``shots`` mode each recorded energy is a grouped-measurement estimate
    with ``shots`` samples per group, seeded by ``(seed, step)``.
    """
    if mode not in (EXACT, SHOTS):
        raise ValueError(f"mode must be {EXACT!r} or {SHOTS!r}")
    hams = hams or build_hamiltonians(lat)
    stepper = Stepper(plan, hams, driver)
    state = prepare_initial(lat, hams.tau)
    h_fh = CompiledOperator(hams.h_fh)
    groups = build_groups(lat) if mode == SHOTS else []

    def measure_energy(step: int) -> tuple[float, float]:
        if mode == EXACT:
            return float(h_fh.expectation(state.amplitudes)), 0.0
        est = estimate_energy(state, groups, shots, seed, hams.tau, hams.u, stream=step)
        return est.energy, est.stderr

    e0, _ = measure_energy(0)
    result = EvolutionResult(plan, e0, shots=shots if mode == SHOTS else 0, seed=seed if mode == SHOTS else None)
    psi = state.amplitudes
    for j in range(1, plan.trotter_steps + 1):
        for g in stepper.step(j):
            apply_gate(psi, g)
        if j % record_every == 0 or j == plan.trotter_steps:
            e, err = measure_energy(j)
            result.records.append(StepRecord(j, j * plan.dt, e, err))
    result.state = state
    return result


def energy_error(e_final: float, e_ground: float, e_initial: float) -> float:
    """``|(E_ground - E_final) / (E_ground - E_initial)|`` in percent; NaN when
    the initial state already has the ground energy."""
    gap = e_ground - e_initial
    if abs(gap) < 1e-12:
        return math.nan
    return abs((e_ground - e_final) / gap) * 100.0


# ---------------------------------------------------------------------------
# sweeps

CSV_COLUMNS = ("variant", "N", "dt", "T", "step", "t", "energy", "delta_e_pct", "shots", "seed")


@dataclass(frozen=True)
class SweepCell:
    variant: str
    N: int
    dt: float
    T: float
    step: int
    t: float
    energy: float
    delta_e_pct: float
    shots: int
    seed: int | None


def result_rows(result: EvolutionResult, e_ground: float) -> list[SweepCell]:
    p = result.plan
    return [
        SweepCell(
            p.variant, p.trotter_steps, p.dt, p.T, r.step, r.t, r.energy,
            energy_error(r.energy, e_ground, result.e_initial), result.shots, result.seed,
        )
        for r in result.records
    ]


def _sweep_cell(args) -> SweepCell:
    variant, n, dt, lat, hams, e_ground, mode, shots, seed = args
    res = run_evolution(EvolutionPlan(variant, n, dt), lat, hams, mode, shots, seed, record_every=n)
    return result_rows(res, e_ground)[-1]


def sweep(
    n_list: Sequence[int],
    dt_list: Sequence[float],
    variants: Iterable[str],
    lat: HoneycombLattice,
    hams: HamiltonianSet,
    e_ground: float,
    mode: str = EXACT,
    shots: int = 30000,
    seed: int = 0,
    workers: int = 1,
) -> list[SweepCell]:
    """Final-step ``Delta E`` for every ``(variant, N, dt)`` cell."""
    variants = list(variants)
    if not n_list or not dt_list or not variants:
        raise ValueError("sweep grids must be nonempty")
    jobs = [(v, n, dt, lat, hams, e_ground, mode, shots, seed) for v in variants for n in n_list for dt in dt_list]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_sweep_cell, jobs))
    return [_sweep_cell(j) for j in jobs]


def write_csv(rows: Iterable[SweepCell], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow(asdict(r))


# ---------------------------------------------------------------------------
# gate accounting


def exp_pauli_cost(p: PauliString) -> int:
    """Basic gates for ``exp(-i theta P)`` as a CNOT ladder: a basis change on
    every X/Y letter before and after, ``2 (w - 1)`` CNOTs and one RZ."""
    w = p.weight
    if w == 0:
        return 0
    xy = bin(p.x).count("1")
    return 2 * xy + 2 * (w - 1) + 1


def operator_cost(op: PauliSum) -> int:
    return sum(exp_pauli_cost(p) for p in op)


def gate_list_cost(gates: Iterable[Gate]) -> int:
    total = 0
    for g in gates:
        total += exp_pauli_cost(g.pauli) if g.kind == EXP_PAULI else 1
    return total


@dataclass(frozen=True)
class StepCost:
    hopping: int
    coulomb: int
    cd: int

    @property
    def adiabatic(self) -> int:
        return self.hopping + self.coulomb

    @property
    def with_cd(self) -> int:
        return self.adiabatic + self.cd


def step_cost(hams: HamiltonianSet, order: int = 1) -> StepCost:
    """Basic gates of one Trotter step, split by Hamiltonian part."""
    o = CdDriver(hams, order).basis(0.5)
    cd = PauliSum.zero(hams.n_qubits)
    for term in o:
        cd = cd + term
    return StepCost(operator_cost(hams.h_hop), operator_cost(hams.h_coul), operator_cost(cd))


def plan_to_dict(plan: EvolutionPlan) -> dict:
    d = asdict(plan)
    d["T"] = plan.T
    return d


def lam_grid(T: float, points: int = 20) -> np.ndarray:
    return np.linspace(0.0, T, points)
