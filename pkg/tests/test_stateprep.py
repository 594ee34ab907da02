import math

import numpy as np
import pytest

from hubbard_cd import lattice
from hubbard_cd.fermion import build_hamiltonians, half_filling, particle_number
from hubbard_cd.lattice import DOWN, UP
from hubbard_cd.oracle import SectorBasis, sector_ground_state
from hubbard_cd.statevec import GIVENS, X, CompiledOperator, run
from hubbard_cd.stateprep import (
    OrbitalBasis,
    compile_givens,
    givens_angles,
    preparation_circuit,
    prepare_initial,
    single_particle_orbitals,
)


def sector_mass(lat, psi):
    basis = SectorBasis.build(lat, *half_filling(lat))
    return float(np.sum(np.abs(psi[basis.states]) ** 2))


def test_single_bond_orbitals():
    b = single_particle_orbitals(lattice.single_bond(), 1.0, UP)
    assert np.allclose(b.energies, [-1, 1])
    assert np.allclose(b.q[:, 0], [1 / math.sqrt(2)] * 2)


def test_single_bond_one_quarter_turn():
    lat = lattice.single_bond()
    gates = compile_givens(single_particle_orbitals(lat, 1.0, UP), lat)
    assert [g.kind for g in gates] == [X, GIVENS]
    assert abs(abs(gates[1].theta) - math.pi / 4) < 1e-12


def test_single_bond_fidelity():
    lat = lattice.single_bond()
    hams = build_hamiltonians(lat)
    gs = sector_ground_state(hams.h_hop, lat, half_filling(lat), method="dense")
    psi = prepare_initial(lat).amplitudes
    overlap = np.vdot(gs.basis.embed(gs.vector, lat.n_qubits), psi)
    assert abs(overlap) ** 2 >= 1 - 1e-8


def test_1x1_spectrum_symmetric(lat11):
    e = single_particle_orbitals(lat11).energies
    assert np.allclose(np.sort(e), np.sort(-e))


@pytest.mark.parametrize("dims", [(1, 1), (1, 2)])
def test_prepared_energy_is_orbital_sum(dims):
    lat = lattice.build(*dims)
    hams = build_hamiltonians(lat)
    occ = sum(single_particle_orbitals(lat, 1.0, s).occupied_energy for s in (UP, DOWN))
    psi = prepare_initial(lat).amplitudes
    assert abs(CompiledOperator(hams.h_hop).expectation(psi) - occ) < 1e-10
    assert 1 - sector_mass(lat, psi) < 1e-12


def test_prepared_energy_matches_oracle(lat11, hams11):
    psi = prepare_initial(lat11).amplitudes
    e_min = sector_ground_state(hams11.h_hop, lat11, half_filling(lat11), method="lanczos").energy
    assert abs(CompiledOperator(hams11.h_hop).expectation(psi) - e_min) < 1e-8


def test_particle_numbers(lat11):
    psi = prepare_initial(lat11).amplitudes
    for spin, n in zip((UP, DOWN), half_filling(lat11)):
        assert abs(CompiledOperator(particle_number(lat11, spin)).expectation(psi) - n) < 1e-12


def test_rotation_count_bound(lat11):
    circ = preparation_circuit(lat11)
    n, m = lat11.n_sites, half_filling(lat11)[0]
    assert circ.counts()[GIVENS] <= 2 * m * (n - m)
    kinds = [g.kind for g in circ.gates]
    assert kinds.index(GIVENS) > max(i for i, k in enumerate(kinds) if k == X)


def test_filled_sector_needs_no_rotations():
    q = np.eye(3)
    assert all(abs(t) < 1e-15 for _, t in givens_angles(q)) or givens_angles(q) == []
    basis = OrbitalBasis(np.zeros(3), q, (3, 3), UP)
    lat = lattice.build(1, 1)
    gates = compile_givens(OrbitalBasis(np.zeros(6), np.eye(6), (6, 6), UP), lat)
    assert {g.kind for g in gates} == {X}
    assert basis.n_occ == 3


def test_non_orthonormal_rejected():
    with pytest.raises(ValueError):
        givens_angles(np.array([[1.0, 1.0], [0.0, 1.0], [0.0, 0.0]]))


def test_energy_invariant_under_orbital_permutation(lat11, hams11):
    from hubbard_cd.statevec import Circuit

    energies = []
    for perm in ([0, 1, 2], [2, 0, 1], [1, 2, 0]):
        frags = []
        for s in (UP, DOWN):
            b = single_particle_orbitals(lat11, 1.0, s)
            frags.append(compile_givens(OrbitalBasis(b.energies, b.q[:, perm], b.occupations, s), lat11))
        circ = Circuit(lat11.n_qubits)
        circ.extend(g for f in frags for g in f if g.kind == X)
        circ.extend(g for f in frags for g in f if g.kind != X)
        energies.append(CompiledOperator(hams11.h_hop).expectation(run(circ).amplitudes))
    assert np.allclose(energies, energies[0], atol=1e-10)
