"""Variational ansatze, costs, gradients and Adagrad training.

Both ansatze start from the hopping ground state.  The HV layer applies one
``U_c(gamma)`` per site, then one ``U_h(beta)`` per same-spin hopping pair,
each hopping group sandwiched between an FSWAP network and its reverse.  The
CD-inspired layer applies ``exp(-i theta_k G_k)`` for every two-body pool
generator ``G_k``.
"""

from __future__ import annotations

import csv
import hashlib
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .cdsynth import first_order_operator, two_body_pool
from .fermion import HamiltonianSet, build_hamiltonians
from .lattice import HoneycombLattice, edge_groups
from .measure import build_groups, estimate_energy, routing_network
from .statevec import (
    COUL,
    EXP_PAULI,
    HOP,
    Circuit,
    CompiledOperator,
    Gate,
    NoiseModel,
    StateVector,
    apply_gate,
    exp_pauli,
    generator,
    pauli_apply,
    apply_pauli_sum,
    TrajectoryTree,
)
from .stateprep import prepare_initial

HV, CD_INSPIRED = "hv", "cd_inspired"
EXACT, SHOTS, NOISY = "exact", "shots", "noisy"
FD_STEP = 0.01
FINITE_DIFFERENCE, PATHWISE = "fd", "pathwise"


@dataclass
class Ansatz:
    """Parameterised circuit acting on the prepared initial state."""

    kind: str
    circuit: Circuit
    initial: StateVector
    fswap_count: int = 0
    labels: list[str] = field(default_factory=list)

    @property
    def n_params(self) -> int:
        return self.circuit.n_params

    def state(self, params) -> StateVector:
        psi = self.initial.amplitudes.copy()
        for g in self.circuit.gates:
            apply_gate(psi, g, params)
        return StateVector(self.circuit.n_qubits, psi)


def _hv_layer(lat: HoneycombLattice, circ: Circuit, labels: list[str]) -> int:
    from .lattice import DOWN, UP

    slot = circ.n_params
    for i in lat.sites:
        a, b = sorted((lat.qubit_of(i, UP), lat.qubit_of(i, DOWN)))
        circ.append(Gate(COUL, (a, b), slot=slot))
        labels.append(f"gamma[{i}]")
        slot += 1
    fswaps = 0
    for k, pairs in enumerate(edge_groups(lat)[1:], start=2):
        if not pairs:
            continue
        pairs = sorted(pairs)
        routing, positions = routing_network(lat.n_qubits, pairs)
        circ.extend(routing)
        for (a, b), (p, q) in zip(pairs, positions):
            circ.append(Gate(HOP, (p, q), slot=slot))
            labels.append(f"beta[{a},{b}]")
            slot += 1
        circ.extend(reversed(routing))
        fswaps += 2 * len(routing)
    return fswaps


def build_ansatz(
    kind: str, lat: HoneycombLattice, layers: int = 1, hams: HamiltonianSet | None = None
) -> Ansatz:
    if layers < 1:
        raise ValueError("layers must be >= 1")
    hams = hams or build_hamiltonians(lat)
    circ = Circuit(lat.n_qubits)
    labels: list[str] = []
    fswaps = 0
    if kind == HV:
        for _ in range(layers):
            fswaps += _hv_layer(lat, circ, labels)
    elif kind == CD_INSPIRED:
        pool = two_body_pool(first_order_operator(hams))
        for _ in range(layers):
            for pair, gen in zip(pool.pairs, pool.terms):
                slot = circ.n_params
                for p in gen.sorted_terms():
                    circ.append(exp_pauli(p, slot=slot))
                labels.append(f"theta[{pair[0]},{pair[1]}]")
                circ.n_params = slot + 1
    else:
        raise ValueError(f"unknown ansatz {kind!r}")
    return Ansatz(kind, circ, prepare_initial(lat, hams.tau), fswaps, labels)


# ---------------------------------------------------------------------------
# cost and gradients


@dataclass(frozen=True)
class CostConfig:
    """How the energy is evaluated.

    Attributes:
        mode: ``exact``, ``shots`` or ``noisy``.
        shots: samples per measurement group in shot mode.
        noise: channel for noisy mode.
        trajectories: Monte Carlo trajectories averaged per noisy cost.
        gradient: ``fd`` for central differences with common random
            numbers, or ``pathwise`` for the adjoint derivative of the same
            trajectory estimator with its branch decisions held fixed (the
            ``step -> 0`` limit of ``fd``; noisy mode only).
    """

    mode: str = EXACT
    shots: int = 30000
    noise: NoiseModel | None = None
    trajectories: int = 100
    gradient: str = FINITE_DIFFERENCE

    def __post_init__(self) -> None:
        if self.mode not in (EXACT, SHOTS, NOISY):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == NOISY and self.noise is None:
            raise ValueError("noisy mode needs a noise model")
        if self.gradient not in (FINITE_DIFFERENCE, PATHWISE):
            raise ValueError(f"unknown gradient method {self.gradient!r}")
        if self.gradient == PATHWISE and self.mode != NOISY:
            raise ValueError("pathwise gradients apply to noisy mode only")


class Objective:
    """Energy of ``H_FH`` on an ansatz state, with cached operator data."""

    def __init__(self, ansatz: Ansatz, hams: HamiltonianSet, lat: HoneycombLattice, config: CostConfig = CostConfig()) -> None:
        self.ansatz = ansatz
        self.hams = hams
        self.lat = lat
        self.config = config
        self.h = CompiledOperator(hams.h_fh)
        self._groups = build_groups(lat) if config.mode == SHOTS else None
        self._generators: dict[int, object] = {}

    def _check(self, params) -> np.ndarray:
        params = np.asarray(params, dtype=float)
        if params.shape != (self.ansatz.n_params,):
            raise ValueError(f"expected {self.ansatz.n_params} parameters, got {params.shape}")
        return params

    def __call__(self, params, seed: int = 0, stream: int = 0) -> float:
        params = self._check(params)
        cfg = self.config
        if cfg.mode == EXACT:
            return float(self.h.expectation(self.ansatz.state(params).amplitudes))
        if cfg.mode == SHOTS:
            est = estimate_energy(
                self.ansatz.state(params), self._groups, cfg.shots, seed, self.hams.tau, self.hams.u, stream=stream
            )
            return est.energy
        return self._tree(params, seed, stream).energy(self.h)

    def _tree(self, params, seed: int, stream: int) -> TrajectoryTree:
        cfg = self.config
        return TrajectoryTree(self.ansatz.circuit, params, self.ansatz.initial, cfg.noise, cfg.trajectories, _mix(seed, stream))

    def pathwise_gradient(self, params, seed: int = 0, stream: int = 0) -> tuple[float, np.ndarray]:
        """Noisy energy and its derivative along the sampled trajectories."""
        tree = self._tree(self._check(params), seed, stream)
        energy = tree.energy(self.h)
        return energy, tree.gradient(self.h, self._generators)

    def _generator(self, k: int, gate: Gate):
        if k not in self._generators:
            self._generators[k] = generator(gate, self.ansatz.circuit.n_qubits)
        return self._generators[k]

    def adjoint_gradient(self, params) -> tuple[float, np.ndarray]:
        """Energy and exact gradient from one backward sweep."""
        params = self._check(params)
        phi = self.ansatz.state(params).amplitudes
        lam = self.h.apply(phi)
        energy = float(np.vdot(phi, lam).real)
        grad = np.zeros(len(params))
        gates = self.ansatz.circuit.gates
        for k in range(len(gates) - 1, -1, -1):
            g = gates[k]
            if g.slot is not None:
                if g.kind == EXP_PAULI:
                    gphi = pauli_apply(phi, g.pauli.x, g.pauli.z)
                else:
                    gphi = apply_pauli_sum(phi, self._generator(k, g))
                grad[g.slot] += 2.0 * g.scale * float(np.vdot(lam, gphi).imag)
            apply_gate(phi, g, params, inverse=True)
            apply_gate(lam, g, params, inverse=True)
        return energy, grad

    def fd_gradient(self, params, step: float = FD_STEP, seed: int = 0, stream: int = 0) -> np.ndarray:
        """Central differences; both sides reuse the same random stream."""
        params = self._check(params)
        grad = np.zeros(len(params))
        for i in range(len(params)):
            e = np.zeros(len(params))
            e[i] = step
            grad[i] = (self(params + e, seed, stream) - self(params - e, seed, stream)) / (2 * step)
        return grad

    def value_and_gradient(
        self, params, seed: int = 0, stream: int = 0, step: float = FD_STEP
    ) -> tuple[float, np.ndarray]:
        if self.config.mode == EXACT:
            return self.adjoint_gradient(params)
        if self.config.gradient == PATHWISE:
            return self.pathwise_gradient(params, seed, stream)
        return self(params, seed, stream), self.fd_gradient(params, step, seed, stream)


def _mix(seed: int, stream: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(stream)]).generate_state(1)[0])


def cost(ansatz: Ansatz, params, hams: HamiltonianSet, lat: HoneycombLattice, config: CostConfig = CostConfig()) -> float:
    return Objective(ansatz, hams, lat, config)(params)


def gradient(ansatz: Ansatz, params, hams: HamiltonianSet, lat: HoneycombLattice, config: CostConfig = CostConfig()) -> np.ndarray:
    return Objective(ansatz, hams, lat, config).value_and_gradient(params)[1]


# ---------------------------------------------------------------------------
# optimiser


@dataclass
class OptimizerState:
    eta: float = 0.05
    eps: float = 1e-8
    G: np.ndarray | None = None
    t: int = 0


def adagrad_step(state: OptimizerState, params, grad) -> np.ndarray:
    """``G += g^2``; ``theta -= eta g / sqrt(G + eps)``."""
    params = np.asarray(params, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if params.shape != grad.shape:
        raise ValueError("parameter and gradient shapes differ")
    if not state.eta > 0:
        raise ValueError("learning rate must be positive")
    if state.G is None:
        state.G = np.zeros_like(params)
    new_g = state.G + grad**2
    assert np.all(new_g >= state.G)
    state.G = new_g
    state.t += 1
    return params - state.eta * grad / np.sqrt(state.G + state.eps)


@dataclass(frozen=True)
class TrainConfig:
    eta: float = 0.05
    max_iter: int = 300
    seed: int = 0
    init_low: float = 0.0
    init_high: float = 1.0
    cost: CostConfig = CostConfig()
    fd_step: float = FD_STEP


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    energy: float
    grad_norm: float
    params_hash: str


@dataclass
class TrainingTrace:
    ansatz: str
    config: TrainConfig
    records: list[TraceRecord] = field(default_factory=list)
    initial_params: np.ndarray | None = None
    final_params: np.ndarray | None = None

    @property
    def energies(self) -> np.ndarray:
        return np.array([r.energy for r in self.records])

    @property
    def final_energy(self) -> float:
        return self.records[-1].energy

    @property
    def initial_energy(self) -> float:
        return self.records[0].energy

    def rows(self) -> list[dict]:
        cfg = self.config
        noise = cfg.cost.noise
        return [
            {
                "iteration": r.iteration,
                "energy": r.energy,
                "grad_norm": r.grad_norm,
                "seed": cfg.seed,
                "ansatz": self.ansatz,
                "noise_channel": noise.channel if noise else "none",
                "p": noise.p if noise else 0.0,
                "mode": cfg.cost.mode,
            }
            for r in self.records
        ]


TRACE_COLUMNS = ("iteration", "energy", "grad_norm", "seed", "ansatz", "noise_channel", "p", "mode")


def write_traces(traces, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TRACE_COLUMNS)
        w.writeheader()
        for tr in traces:
            w.writerows(tr.rows())


def _hash(params: np.ndarray) -> str:
    return hashlib.sha1(np.ascontiguousarray(params, dtype=float).tobytes()).hexdigest()[:12]


def initial_parameters(n: int, config: TrainConfig) -> np.ndarray:
    from .statevec import rng_for

    return rng_for(config.seed, 0xA5).uniform(config.init_low, config.init_high, n)


def train(
    ansatz: Ansatz, hams: HamiltonianSet, lat: HoneycombLattice, config: TrainConfig = TrainConfig()
) -> TrainingTrace:
    """Adagrad descent; record ``i`` holds the energy before update ``i`` and
    the last record is the energy at the final parameters."""
    obj = Objective(ansatz, hams, lat, config.cost)
    params = initial_parameters(ansatz.n_params, config)
    opt = OptimizerState(eta=config.eta)
    trace = TrainingTrace(ansatz.kind, config, initial_params=params.copy())
    for it in range(config.max_iter):
        e, g = obj.value_and_gradient(params, config.seed, it, config.fd_step)
        trace.records.append(TraceRecord(it, e, float(np.linalg.norm(g)), _hash(params)))
        params = adagrad_step(opt, params, g)
    e = obj(params, config.seed, config.max_iter)
    trace.records.append(TraceRecord(config.max_iter, e, math.nan, _hash(params)))
    trace.final_params = params
    return trace


def _train_job(args) -> TrainingTrace:
    kind, lat, hams, config = args
    return train(build_ansatz(kind, lat, hams=hams), hams, lat, config)


def train_many(
    kind: str, lat: HoneycombLattice, hams: HamiltonianSet, configs: list[TrainConfig], workers: int = 1
) -> list[TrainingTrace]:
    jobs = [(kind, lat, hams, c) for c in configs]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_train_job, jobs))
    return [_train_job(j) for j in jobs]


def config_dict(config: TrainConfig) -> dict:
    d = asdict(config)
    noise = config.cost.noise
    d["cost"]["noise"] = asdict(noise) if noise else None
    return d
