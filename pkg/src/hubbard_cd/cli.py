"""Command-line experiment runner.

Usage::

    hubbard-cd [--config FILE] <subcommand> [flags]

Subcommands: ``prepare``, ``evolve``, ``vqa``, ``sweep``, ``oracle``,
``count-gates`` and ``pool``.  Settings resolve as built-in defaults, then the
config file (section ``[experiment]`` followed by the subcommand's own
section), then command-line flags.  Every run writes plot-ready CSV plus a
``summary.json`` that echoes the resolved configuration.

The worker count for sweeps and multi-seed training is read from the
``HUBBARD_CD_THREADS`` environment variable (default: all cores).
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import logging
import math
import os
import sys
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .cdsynth import first_order_operator, two_body_pool
from .evolve import (
    ADIABATIC,
    ADIABATIC_CD,
    CD_ONLY,
    EvolutionPlan,
    Stepper,
    result_rows,
    run_evolution,
    step_cost,
    sweep,
    write_csv,
)
from .fermion import build_hamiltonians, half_filling
from .lattice import HoneycombLattice, build
from .oracle import ConvergenceError, reference_energy, sector_ground_state
from .pauli import PauliString
from .statevec import (
    CNOT,
    COUL,
    EXP_PAULI,
    FSWAP,
    GIVENS,
    HOP,
    RX,
    RZ,
    SQRT_ISWAP,
    CompiledOperator,
    Gate,
    NoiseModel,
)
from .stateprep import preparation_circuit, prepare_initial
from .vqa import CD_INSPIRED, HV, CostConfig, TrainConfig, build_ansatz, config_dict, train_many, write_traces

log = logging.getLogger("hubbard_cd")

THREADS_ENV = "HUBBARD_CD_THREADS"
SCHEMA_VERSION = 1
REFERENCE_STEP_GATES = {"adiabatic": 310, "with_cd": 930}
ALGORITHMS = {
    "evolve:adiabatic": ADIABATIC,
    "evolve:cd": ADIABATIC_CD,
    "evolve:cd_only": CD_ONLY,
    "vqa:hv": HV,
    "vqa:cd": CD_INSPIRED,
}

# Basic-gate content of the composite gates in {X, H, RX, RZ, CNOT, SqrtISwap}.
# Hopping, on-site and FSWAP units use two SqrtISwap each; a Pauli exponential
# uses a CNOT ladder with H (X letters) or RX (Y letters) basis changes.
UNIT_DECOMPOSITION = {
    HOP: {SQRT_ISWAP: 2, RZ: 2},
    COUL: {SQRT_ISWAP: 2, RX: 2, RZ: 2},
    FSWAP: {SQRT_ISWAP: 2, RZ: 2},
}


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass
class ExperimentConfig:
    """Everything one run needs; defaults follow the reference setup."""

    nx: int = 1
    ny: int = 1
    tau: float = 1.0
    u: float = 1.5
    algorithm: str = "evolve:cd"
    T: float | None = None
    N: int | None = None
    dt: float = 0.02
    order: int = 1
    record_every: int = 1
    eta: float = 0.05
    max_iter: int = 300
    seeds: int = 10
    layers: int = 1
    shots: int = 30000
    mode: str | None = None
    noise: str = "none"
    p: float = 0.01
    trajectories: int = 100
    gradient: str = "fd"
    seed: int = 0
    output: str = "results"
    n_list: list[int] = field(default_factory=lambda: [25, 50, 100, 200])
    dt_list: list[float] = field(default_factory=lambda: [0.02])
    variants: list[str] = field(default_factory=lambda: [ADIABATIC, ADIABATIC_CD])
    sector: list[int] | None = None
    method: str = "auto"

    def resolve(self) -> "ExperimentConfig":
        """Fill derived fields and check consistency; returns ``self``."""
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {sorted(ALGORITHMS)}")
        if self.nx < 1 or self.ny < 1:
            raise ConfigError("lattice dimensions must be positive")
        if self.dt is not None and not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.T is not None and self.N is not None:
            if not math.isclose(self.T, self.N * self.dt, rel_tol=1e-9, abs_tol=1e-12):
                raise ConfigError(f"T = {self.T} but N * dt = {self.N * self.dt}")
        elif self.T is not None:
            self.N = max(1, round(self.T / self.dt))
            if not math.isclose(self.T, self.N * self.dt, rel_tol=1e-9):
                raise ConfigError(f"T = {self.T} is not a multiple of dt = {self.dt}")
        elif self.N is None:
            self.N = 50
        self.T = self.N * self.dt
        if self.noise != "none":
            NoiseModel(self.noise, self.p)
            if self.mode not in (None, "noisy"):
                raise ConfigError("a noise channel requires mode = noisy")
            self.mode = "noisy"
        self.mode = self.mode or "exact"
        if self.mode not in ("exact", "shots", "noisy"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.mode == "noisy" and self.noise == "none":
            raise ConfigError("mode = noisy requires a noise channel")
        if self.shots < 1 or self.seeds < 1 or self.max_iter < 0:
            raise ConfigError("shots and seeds must be positive, max_iter nonnegative")
        for v in self.variants:
            if v not in (ADIABATIC, ADIABATIC_CD, CD_ONLY):
                raise ConfigError(f"unknown variant {v!r}")
        if self.sector is not None and len(self.sector) != 2:
            raise ConfigError("sector needs two occupations")
        return self

    @property
    def family(self) -> str:
        return self.algorithm.split(":")[0]

    @property
    def variant(self) -> str:
        return ALGORITHMS[self.algorithm]

    def lattice(self) -> HoneycombLattice:
        return build(self.nx, self.ny)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_LIST_TYPES = {"n_list": int, "dt_list": float, "variants": str, "sector": int}


def _convert(name: str, text: str):
    if name in _LIST_TYPES:
        cast = _LIST_TYPES[name]
        return [cast(t) for t in text.replace(",", " ").split()]
    if text.lower() in ("none", ""):
        return None
    kind = _FIELDS[name].type
    if kind.startswith("int"):
        return int(text)
    if kind.startswith("float"):
        return float(text)
    return text


def load_config(path: str | os.PathLike, section: str) -> dict:
    """Read ``key = value`` pairs from ``[experiment]`` and ``[section]``."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    if not parser.read(path):
        raise ConfigError(f"cannot read config file {path}")
    values = {}
    for sec in ("experiment", section):
        if not parser.has_section(sec):
            continue
        for key, text in parser.items(sec):
            key = key.replace("-", "_")
            if key not in _FIELDS:
                raise ConfigError(f"unknown key {key!r} in [{sec}]")
            try:
                values[key] = _convert(key, text)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {text!r}") from exc
    return values


def threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer") from None
        if n < 1:
            raise ConfigError(f"{THREADS_ENV} must be positive")
        return n
    return os.cpu_count() or 1


# ---------------------------------------------------------------------------
# gate counting


def basic_counts(gates: Sequence[Gate]) -> Counter:
    """Basic gates by type for a list of composite gates."""
    total: Counter = Counter()
    for g in gates:
        if g.kind == EXP_PAULI:
            total.update(_pauli_counts(g.pauli))
        elif g.kind in UNIT_DECOMPOSITION:
            total.update(UNIT_DECOMPOSITION[g.kind])
        elif g.kind == GIVENS:
            # two commuting Pauli exponentials
            total.update({SQRT_ISWAP: 2, RZ: 2})
        else:
            total[g.kind] += 1
    return total


def _pauli_counts(p: PauliString) -> Counter:
    c: Counter = Counter()
    w = p.weight
    if w == 0:
        return c
    ys = bin(p.x & p.z).count("1")
    xs = bin(p.x).count("1") - ys
    c["H"] += 2 * xs
    c[RX] += 2 * ys
    c[CNOT] += 2 * (w - 1)
    c[RZ] += 1
    return +c


def hv_swap_formula(lat: HoneycombLattice) -> float:
    """FSWAP count quoted for the HV layer: ``2 sum_rows n (n/2 + (n-2)/2)``."""
    rows = Counter(r for r, _ in lat.coords)
    return 2.0 * sum(n * (n / 2 + (n - 2) / 2) for n in rows.values())


def count_gates(cfg: ExperimentConfig) -> dict:
    """Per-category counts for one Trotter step and one layer of each ansatz."""
    lat = cfg.lattice()
    hams = build_hamiltonians(lat, cfg.tau, cfg.u)
    cost = step_cost(hams, cfg.order)
    stepper = Stepper(EvolutionPlan(ADIABATIC_CD, 2, 0.5, cfg.order), hams)
    step = stepper.step(1)
    n_hop = len(hams.h_hop)
    by_part = {
        "hopping": dict(basic_counts(step[:n_hop])),
        "coulomb": dict(basic_counts([g for g in step[n_hop:] if _is_coulomb(g)])),
    }
    by_part["cd"] = dict(basic_counts([g for g in step[n_hop:] if not _is_coulomb(g)]))
    pool = two_body_pool(first_order_operator(hams))
    per_string = sorted({_pauli_counts(p).total() for g in pool.terms for p in g})
    hv = build_ansatz(HV, lat, cfg.layers, hams)
    hv_kinds = Counter(g.kind for g in hv.circuit.gates)
    cd = build_ansatz(CD_INSPIRED, lat, cfg.layers, hams)
    n_site = lat.n_sites
    n_coulomb = hv_kinds[COUL] // cfg.layers
    n_hopping = hv_kinds[HOP] // cfg.layers
    n_swap = hv_kinds[FSWAP] // cfg.layers
    formula_swap = hv_swap_formula(lat)
    report = {
        "lattice": lat.label,
        "n_site": n_site,
        "n_qubits": lat.n_qubits,
        "trotter_step": {
            "hopping": cost.hopping,
            "coulomb": cost.coulomb,
            "cd": cost.cd,
            "adiabatic": cost.adiabatic,
            "with_cd": cost.with_cd,
            "by_type": by_part,
            "reference": REFERENCE_STEP_GATES,
            "ratio_adiabatic": cost.adiabatic / REFERENCE_STEP_GATES["adiabatic"],
            "ratio_with_cd": cost.with_cd / REFERENCE_STEP_GATES["with_cd"],
        },
        "cd_layer": {
            "generators": len(pool),
            "expected_generators": 2 * n_site - 4,
            "strings_per_generator": sorted({len(g) for g in pool.terms}),
            "gates_per_string": per_string,
            "basic_gates": basic_counts(cd.circuit.gates).total() // cfg.layers,
            "one_string_per_term": len(pool) * per_string[0],
        },
        "hv_layer": {
            "n_coulomb": n_coulomb,
            "n_hopping": n_hopping,
            "n_swap": n_swap,
            "n_swap_formula": formula_swap,
            "n_hv": n_coulomb + n_hopping + n_swap,
            "n_hv_formula": n_site + 2 * n_site + formula_swap,
            "basic_gates": basic_counts(hv.circuit.gates).total() // cfg.layers,
            "by_type": dict(basic_counts(hv.circuit.gates)),
        },
        "checks": {
            "n_coulomb_equals_n_site": n_coulomb == n_site,
            "n_hopping_equals_2_n_site": n_hopping == 2 * n_site,
            "pool_size_equals_2_n_site_minus_4": len(pool) == 2 * n_site - 4,
            "seven_gates_per_two_body_term": per_string == [7],
            "step_within_25pct": all(
                abs(r - 1) <= 0.25
                for r in (cost.adiabatic / REFERENCE_STEP_GATES["adiabatic"], cost.with_cd / REFERENCE_STEP_GATES["with_cd"])
            ),
        },
    }
    return report


def _is_coulomb(g: Gate) -> bool:
    """Interaction exponentials are diagonal (Z-only) strings."""
    return g.kind == EXP_PAULI and g.pauli.x == 0


# ---------------------------------------------------------------------------
# runners


def _out_dir(cfg: ExperimentConfig) -> Path:
    path = Path(cfg.output)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _finite(x: float) -> float | None:
    return None if x is None or not math.isfinite(x) else x


def _oracle(lat: HoneycombLattice, hams) -> dict:
    try:
        return {"energy": reference_energy(lat, hams), "converged": True}
    except ConvergenceError as exc:
        return {"energy": exc.energy, "converged": False, "residual": exc.residual}


def run_prepare(cfg: ExperimentConfig) -> dict:
    lat = cfg.lattice()
    hams = build_hamiltonians(lat, cfg.tau, cfg.u)
    circ = preparation_circuit(lat, cfg.tau)
    state = prepare_initial(lat, cfg.tau)
    out = _out_dir(cfg)
    lines = [f"{g.kind} {' '.join(map(str, g.qubits))}" + (f" {g.theta!r}" if g.theta is not None else "") for g in circ.gates]
    (out / "prepare_circuit.txt").write_text("\n".join(lines) + "\n")
    psi = state.amplitudes
    return {
        "gates": circ.counts(),
        "energy_hopping": float(CompiledOperator(hams.h_hop).expectation(psi)),
        "energy_fh": float(CompiledOperator(hams.h_fh).expectation(psi)),
        "sector": list(half_filling(lat)),
    }


def run_evolve(cfg: ExperimentConfig) -> dict:
    if cfg.family != "evolve":
        raise ConfigError("evolve needs an evolve:* algorithm")
    if cfg.mode == "noisy":
        raise ConfigError("evolution supports exact and shots modes")
    lat = cfg.lattice()
    hams = build_hamiltonians(lat, cfg.tau, cfg.u)
    plan = EvolutionPlan(cfg.variant, cfg.N, cfg.dt, cfg.order)
    oracle = _oracle(lat, hams)
    res = run_evolution(plan, lat, hams, cfg.mode, cfg.shots, cfg.seed, cfg.record_every)
    rows = result_rows(res, oracle["energy"])
    write_csv(rows, _out_dir(cfg) / "evolution.csv")
    cost = step_cost(hams, cfg.order)
    per_step = cost.adiabatic if cfg.variant == ADIABATIC else cost.with_cd
    if cfg.variant == CD_ONLY:
        per_step = cost.hopping + cost.cd
    return {
        "variant": cfg.variant,
        "e_initial": res.e_initial,
        "final_energy": res.e_final,
        "delta_e_pct": _finite(rows[-1].delta_e_pct),
        "oracle": oracle,
        "gate_counts": {"per_step": per_step, "total": per_step * cfg.N},
    }


def run_vqa(cfg: ExperimentConfig) -> dict:
    if cfg.family != "vqa":
        raise ConfigError("vqa needs a vqa:* algorithm")
    lat = cfg.lattice()
    hams = build_hamiltonians(lat, cfg.tau, cfg.u)
    noise = NoiseModel(cfg.noise, cfg.p) if cfg.mode == "noisy" else None
    cost = CostConfig(cfg.mode, cfg.shots, noise, cfg.trajectories, cfg.gradient if cfg.mode == "noisy" else "fd")
    configs = [TrainConfig(cfg.eta, cfg.max_iter, cfg.seed + k, cost=cost) for k in range(cfg.seeds)]
    traces = train_many(cfg.variant, lat, hams, configs, workers=min(threads(), cfg.seeds))
    out = _out_dir(cfg)
    write_traces(traces, out / "traces.csv")
    energies = np.array([t.energies for t in traces])
    with open(out / "median.csv", "w") as fh:
        fh.write("iteration,median,q25,q75\n")
        for it in range(energies.shape[1]):
            col = energies[:, it]
            q25, med, q75 = (float(v) for v in np.percentile(col, [25, 50, 75]))
            fh.write(f"{it},{med!r},{q25!r},{q75!r}\n")
    ansatz = build_ansatz(cfg.variant, lat, cfg.layers, hams)
    finals = [t.final_energy for t in traces]
    return {
        "ansatz": cfg.variant,
        "n_params": ansatz.n_params,
        "initial_state_energy": float(CompiledOperator(hams.h_fh).expectation(ansatz.initial.amplitudes)),
        "final_energies": finals,
        "median_final_energy": float(np.median(finals)),
        "oracle": _oracle(lat, hams),
        "gate_counts": dict(basic_counts(ansatz.circuit.gates)),
        "train_config": config_dict(configs[0]),
    }


def run_sweep(cfg: ExperimentConfig) -> dict:
    lat = cfg.lattice()
    hams = build_hamiltonians(lat, cfg.tau, cfg.u)
    oracle = _oracle(lat, hams)
    if cfg.mode == "noisy":
        raise ConfigError("sweeps support exact and shots modes")
    cells = sweep(cfg.n_list, cfg.dt_list, cfg.variants, lat, hams, oracle["energy"], cfg.mode, cfg.shots, cfg.seed, threads())
    write_csv(cells, _out_dir(cfg) / "sweep.csv")
    return {"cells": len(cells), "oracle": oracle}


def run_oracle(cfg: ExperimentConfig) -> dict:
    lat = cfg.lattice()
    hams = build_hamiltonians(lat, cfg.tau, cfg.u)
    sector = tuple(cfg.sector) if cfg.sector else half_filling(lat)
    try:
        gs = sector_ground_state(hams.h_fh, lat, sector, cfg.method, want_vector=False)
        result = {"energy": gs.energy, "method": gs.method, "residual": gs.residual, "dim": gs.basis.dim, "converged": True}
    except ConvergenceError as exc:
        result = {"energy": exc.energy, "residual": exc.residual, "converged": False}
    result["sector"] = list(sector)
    return result


def run_pool(cfg: ExperimentConfig) -> dict:
    lat = cfg.lattice()
    hams = build_hamiltonians(lat, cfg.tau, cfg.u)
    pool = two_body_pool(first_order_operator(hams))
    text = pool.to_text()
    (_out_dir(cfg) / "pool.txt").write_text(text + "\n")
    print(text)
    return {"generators": len(pool), "pairs": [list(p) for p in pool.pairs]}


RUNNERS = {
    "prepare": run_prepare,
    "evolve": run_evolve,
    "vqa": run_vqa,
    "sweep": run_sweep,
    "oracle": run_oracle,
    "count-gates": count_gates,
    "pool": run_pool,
}
DEFAULT_ALGORITHM = {"evolve": "evolve:cd", "vqa": "vqa:cd"}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("experiment")
    g.add_argument("--nx", type=int)
    g.add_argument("--ny", type=int)
    g.add_argument("--tau", type=float)
    g.add_argument("--u", type=float)
    g.add_argument("--algorithm", choices=sorted(ALGORITHMS))
    g.add_argument("--T", type=float, dest="T")
    g.add_argument("--N", type=int, dest="N")
    g.add_argument("--dt", type=float)
    g.add_argument("--order", type=int)
    g.add_argument("--record-every", type=int)
    g.add_argument("--eta", type=float)
    g.add_argument("--max-iter", type=int)
    g.add_argument("--seeds", type=int, help="number of training seeds")
    g.add_argument("--layers", type=int)
    g.add_argument("--shots", type=int, help="shots per measurement group")
    g.add_argument("--mode", choices=["exact", "shots", "noisy"])
    g.add_argument("--noise", choices=["none", "amplitude_damping", "bit_flip", "phase_flip"])
    g.add_argument("--p", type=float, help="noise probability per gate and qubit")
    g.add_argument("--trajectories", type=int)
    g.add_argument("--gradient", choices=["fd", "pathwise"], help="noisy-mode gradient")
    g.add_argument("--seed", type=int)
    g.add_argument("--output", "-o")
    g.add_argument("--n-list", type=int, nargs="+")
    g.add_argument("--dt-list", type=float, nargs="+")
    g.add_argument("--variants", nargs="+", choices=[ADIABATIC, ADIABATIC_CD, CD_ONLY])
    g.add_argument("--sector", type=int, nargs=2)
    g.add_argument("--method", choices=["auto", "dense", "lanczos"])

    parser = argparse.ArgumentParser(prog="hubbard-cd", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="INI file with [experiment] and per-command sections")
    parser.add_argument("--verbose", "-v", action="store_true")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in RUNNERS:
        sub.add_parser(name, parents=[common])
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    values: dict = {"algorithm": DEFAULT_ALGORITHM.get(args.command, "evolve:cd")}
    if args.config:
        values.update(load_config(args.config, args.command))
    for name in _FIELDS:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    return ExperimentConfig(**values).resolve()


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        start = time.perf_counter()
        result = RUNNERS[args.command](cfg)
    except (ConfigError, ValueError) as exc:
        print(f"hubbard-cd: error: {exc}", file=sys.stderr)
        return 2
    summary = {
        "schema_version": SCHEMA_VERSION,
        "command": args.command,
        "config": cfg.to_dict(),
        "result": result,
        "seed": cfg.seed,
        "wall_time_s": time.perf_counter() - start,
    }
    _write_json(_out_dir(cfg) / "summary.json", summary)
    if args.command != "pool":
        print(json.dumps(result, indent=2, default=_json_default))
    oracle = result.get("oracle", result) if isinstance(result, dict) else {}
    return 3 if oracle.get("converged") is False else 0


if __name__ == "__main__":
    sys.exit(main())
