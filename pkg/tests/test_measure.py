import csv
import math

import numpy as np
import pytest

from conftest import random_state
from hubbard_cd.fermion import build_hamiltonians, hopping_term, onsite_term
from hubbard_cd.lattice import HORIZONTAL, VERTICAL, DOWN, UP, Edge, HoneycombLattice
from hubbard_cd.measure import (
    COULOMB,
    HOPPING,
    TOTAL,
    MeasurementGroup,
    build_groups,
    estimate_energy,
    exact_group_energy,
    routing_network,
    split_shots,
)
from hubbard_cd.pauli import PauliSum
from hubbard_cd.statevec import FSWAP, CompiledOperator, StateVector


def plaquette():
    """Four sites in two snaked rows joined by one vertical bond (8 qubits)."""
    coords = ((0, 0), (0, 1), (1, 1), (1, 0))
    edges = (Edge(0, 1, HORIZONTAL), Edge(2, 3, HORIZONTAL), Edge(0, 3, VERTICAL))
    return HoneycombLattice(0, 0, coords, (False, False, True, True), edges, {0: 1, 1: -1})


def group_operator(group: MeasurementGroup, lat, tau, u):
    n = lat.n_qubits
    op = PauliSum.zero(n)
    for a, b in group.pairs:
        op = op + (onsite_term(a, b, n).scale(u) if group.kind == COULOMB else hopping_term(a, b, n).scale(-tau))
    return op


def test_four_groups(lat11):
    groups = build_groups(lat11)
    assert [g.kind for g in groups] == [COULOMB, HOPPING, HOPPING, HOPPING]
    assert groups[0].basis_change == () and groups[0].routing == ()


def test_vertical_group_routes_to_adjacency(lat11):
    g = build_groups(lat11)[3]
    assert (4, 7) in g.pairs
    assert g.routing and all(r.kind == FSWAP for r in g.routing)
    assert all(q == p + 1 for p, q in g.positions)


def test_routing_network_adjacent():
    gates, pos = routing_network(6, [(0, 5), (1, 3)])
    assert all(q == p + 1 for p, q in pos)
    assert all(abs(g.qubits[0] - g.qubits[1]) == 1 for g in gates)


def test_coulomb_example(lat11):
    site = 2
    bits = ["0"] * lat11.n_qubits
    bits[lat11.qubit_of(site, UP)] = bits[lat11.qubit_of(site, DOWN)] = "1"
    s = StateVector.from_bits("".join(bits))
    assert exact_group_energy(s, build_groups(lat11)[0], 1.0, 1.5) == pytest.approx(1.5, abs=1e-12)


def test_bonding_pair_example(lat11):
    n = lat11.n_qubits
    amps = np.zeros(1 << n, dtype=complex)
    amps[1 << 0] = amps[1 << 2] = 1 / math.sqrt(2)
    s = StateVector(n, amps)
    assert exact_group_energy(s, build_groups(lat11)[1], 1.0, 1.5) == pytest.approx(-1.0, abs=1e-12)


@pytest.mark.parametrize("which", ["1x1", "plaquette"])
def test_routing_reproduces_exact_expectations(which, lat11, rng):
    lat = lat11 if which == "1x1" else plaquette()
    hams = build_hamiltonians(lat, 1.0, 1.5)
    groups = build_groups(lat)
    total = 0.0
    for _ in range(3):
        s = StateVector(lat.n_qubits, random_state(lat.n_qubits, rng))
        total = 0.0
        for g in groups:
            e = exact_group_energy(s, g, 1.0, 1.5)
            assert abs(e - CompiledOperator(group_operator(g, lat, 1.0, 1.5)).expectation(s.amplitudes)) < 1e-12
            total += e
        assert abs(total - CompiledOperator(hams.h_fh).expectation(s.amplitudes)) < 1e-12


def test_estimator_within_three_standard_errors(lat11, hams11, rng):
    s = StateVector(lat11.n_qubits, random_state(lat11.n_qubits, rng))
    exact = CompiledOperator(hams11.h_fh).expectation(s.amplitudes)
    groups = build_groups(lat11)
    hits = 0
    for seed in range(100):
        est = estimate_energy(s, groups, 30000, seed)
        hits += abs(est.energy - exact) <= 3 * est.stderr
    assert hits >= 99


def test_estimator_unbiased_on_eight_qubits(rng):
    lat = plaquette()
    hams = build_hamiltonians(lat)
    groups = build_groups(lat)
    s = StateVector(lat.n_qubits, random_state(lat.n_qubits, rng))
    exact = CompiledOperator(hams.h_fh).expectation(s.amplitudes)
    ests = [estimate_energy(s, groups, 2000, seed) for seed in range(200)]
    mean = np.mean([e.energy for e in ests])
    sigma = np.mean([e.stderr for e in ests])
    assert abs(mean - exact) < 3 * sigma / math.sqrt(200)


def test_split_shots():
    assert split_shots(100, 4) == [100] * 4
    assert split_shots(10, 4, TOTAL) == [3, 3, 2, 2]
    with pytest.raises(ValueError):
        split_shots(0, 4)
    with pytest.raises(ValueError):
        split_shots(3, 4, TOTAL)


def test_estimate_is_seeded_and_records(lat11, rng, tmp_path):
    s = StateVector(lat11.n_qubits, random_state(lat11.n_qubits, rng))
    groups = build_groups(lat11)
    a = estimate_energy(s, groups, 500, 8, keep_records=True)
    b = estimate_energy(s, groups, 500, 8)
    assert a.energy == b.energy and a.shots_per_group == [500] * 4
    path = tmp_path / "m.csv"
    a.write_csv(path)
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["group", "pair", "outcome", "count"]
    per_pair = {}
    for r in rows:
        per_pair[(r["group"], r["pair"])] = per_pair.get((r["group"], r["pair"]), 0) + int(r["count"])
    assert set(per_pair.values()) == {500}
