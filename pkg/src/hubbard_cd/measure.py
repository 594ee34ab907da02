"""Shot-based energy estimation in four commuting measurement groups.

Group 1 reads the on-site pairs in the computational basis.  Each hopping
group first permutes modes with a network of adjacent FSWAPs so every pair
sits on neighbouring qubits (FSWAPs relabel fermionic modes exactly, so the
parity string disappears), then rotates each pair so that
``1/2 (XX + YY)`` becomes ``P(01) - P(10)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import HoneycombLattice, edge_groups
from .statevec import BASIS_CHANGE_HOP, FSWAP, Gate, StateVector, apply_gate, bitstring, rng_for, sample_indices

COULOMB, HOPPING = "coulomb", "hopping"
PER_GROUP, TOTAL = "per_group", "total"


@dataclass(frozen=True)
class MeasurementGroup:
    """One measurement setting.

    Attributes:
        kind: ``coulomb`` or ``hopping``.
        pairs: qubit pairs in the original JW order.
        routing: FSWAP network applied before the basis change.
        basis_change: per-pair rotations (empty for the on-site group).
        positions: where each pair sits after routing, as adjacent ``(p, p + 1)``.
    """

    kind: str
    pairs: tuple[tuple[int, int], ...]
    routing: tuple[Gate, ...]
    basis_change: tuple[Gate, ...]
    positions: tuple[tuple[int, int], ...]

    @property
    def gates(self) -> tuple[Gate, ...]:
        return self.routing + self.basis_change

    def values(self, n_qubits: int, tau: float, u: float) -> np.ndarray:
        """Energy contribution of every computational outcome."""
        idx = np.arange(1 << n_qubits, dtype=np.int64)
        f = np.zeros(len(idx))
        for p, q in self.positions:
            bp = (idx >> p) & 1
            bq = (idx >> q) & 1
            if self.kind == COULOMB:
                f += u * (bp & bq)
            else:
                f -= tau * ((1 - bp) * bq - bp * (1 - bq))
        return f


def routing_network(n: int, pairs: list[tuple[int, int]]) -> tuple[list[Gate], list[tuple[int, int]]]:
    """Adjacent FSWAPs that place the second member of every pair right after
    the first.  Returns the gates and the routed positions."""
    partner = {a: b for a, b in pairs}
    seconds = set(partner.values())
    target = []
    for q in range(n):
        if q in seconds:
            continue
        target.append(q)
        if q in partner:
            target.append(partner[q])
    order = list(range(n))  # order[pos] = mode currently at pos
    gates = []
    # bubble sort by target rank; each adjacent transposition is one FSWAP
    rank = {m: i for i, m in enumerate(target)}
    changed = True
    while changed:
        changed = False
        for pos in range(n - 1):
            if rank[order[pos]] > rank[order[pos + 1]]:
                order[pos], order[pos + 1] = order[pos + 1], order[pos]
                gates.append(Gate(FSWAP, (pos, pos + 1)))
                changed = True
    where = {m: pos for pos, m in enumerate(order)}
    positions = [(where[a], where[b]) for a, b in pairs]
    for p, q in positions:
        assert q == p + 1
    return gates, positions


def build_groups(lat: HoneycombLattice) -> list[MeasurementGroup]:
    n = lat.n_qubits
    groups = []
    for k, pairs in enumerate(edge_groups(lat)):
        if not pairs:
            continue
        pairs = sorted(pairs)
        if k == 0:
            groups.append(MeasurementGroup(COULOMB, tuple(pairs), (), (), tuple(pairs)))
            continue
        routing, positions = routing_network(n, pairs)
        change = tuple(Gate(BASIS_CHANGE_HOP, (p, q)) for p, q in positions)
        groups.append(MeasurementGroup(HOPPING, tuple(pairs), tuple(routing), change, tuple(positions)))
    return groups


def rotated_probabilities(state: StateVector, group: MeasurementGroup) -> np.ndarray:
    psi = state.amplitudes.copy()
    for g in group.gates:
        apply_gate(psi, g)
    return np.abs(psi) ** 2


def exact_group_energy(state: StateVector, group: MeasurementGroup, tau: float, u: float) -> float:
    probs = rotated_probabilities(state, group)
    return float(probs @ group.values(state.n_qubits, tau, u))


@dataclass(frozen=True)
class OutcomeRecord:
    group: int
    pair: tuple[int, int]
    outcome: str
    count: int


@dataclass
class EnergyEstimate:
    energy: float
    stderr: float
    group_energies: list[float]
    shots_per_group: list[int]
    records: list[OutcomeRecord] = field(default_factory=list)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["group", "pair", "outcome", "count"])
            for r in self.records:
                w.writerow([r.group, f"{r.pair[0]}-{r.pair[1]}", r.outcome, r.count])


def split_shots(shots: int, n_groups: int, allocation: str = PER_GROUP) -> list[int]:
    if shots < 1:
        raise ValueError("shots must be positive")
    if allocation == PER_GROUP:
        return [shots] * n_groups
    if allocation != TOTAL:
        raise ValueError(f"allocation must be {PER_GROUP!r} or {TOTAL!r}")
    base, extra = divmod(shots, n_groups)
    out = [base + (1 if k < extra else 0) for k in range(n_groups)]
    if min(out) < 1:
        raise ValueError("fewer shots than groups")
    return out


def estimate_energy(
    state: StateVector,
    groups: list[MeasurementGroup],
    shots: int,
    seed: int,
    tau: float = 1.0,
    u: float = 1.5,
    stream: int = 0,
    allocation: str = PER_GROUP,
    keep_records: bool = False,
) -> EnergyEstimate:
    """Sample every group and combine ``U sum P(11) - tau sum [P(01) - P(10)]``.

    The standard error adds the per-group sample variances of the per-shot
    energy divided by the group's shot count.
    """
    n = state.n_qubits
    alloc = split_shots(shots, len(groups), allocation)
    total, var = 0.0, 0.0
    energies, records = [], []
    for k, (group, s) in enumerate(zip(groups, alloc)):
        counts = sample_indices(_rotate(state, group), s, rng_for(seed, stream, k))
        f = group.values(n, tau, u)
        hit = np.flatnonzero(counts)
        c = counts[hit].astype(float)
        mean = float(c @ f[hit]) / s
        v = float(c @ (f[hit] - mean) ** 2) / (s - 1) if s > 1 else 0.0
        total += mean
        var += v / s
        energies.append(mean)
        if keep_records:
            records += _pair_records(k, group, hit, counts[hit], n)
    return EnergyEstimate(total, math.sqrt(var), energies, alloc, records)


def _rotate(state: StateVector, group: MeasurementGroup) -> np.ndarray:
    psi = state.amplitudes.copy()
    for g in group.gates:
        apply_gate(psi, g)
    return psi


def _pair_records(k: int, group: MeasurementGroup, idx: np.ndarray, counts: np.ndarray, n: int) -> list[OutcomeRecord]:
    out = []
    for pair, (p, q) in zip(group.pairs, group.positions):
        tally: dict[str, int] = {}
        for i, c in zip(idx, counts):
            key = f"{(int(i) >> p) & 1}{(int(i) >> q) & 1}"
            tally[key] = tally.get(key, 0) + int(c)
        out += [OutcomeRecord(k, pair, o, c) for o, c in sorted(tally.items())]
    return out


def outcome_string(index: int, n: int) -> str:
    return bitstring(index, n)
