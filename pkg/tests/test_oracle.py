import math

import numpy as np
import pytest

from hubbard_cd import lattice
from hubbard_cd.fermion import build_hamiltonians, half_filling
from hubbard_cd.oracle import (
    SectorBasis,
    SectorOperator,
    expectation,
    golden_energy,
    ground_energy,
    lanczos,
    load_golden,
)
from hubbard_cd.pauli import DimensionError, PauliSum, to_dense
from hubbard_cd.statevec import StateVector

from conftest import random_state


def test_single_site_double_occupation():
    gs = ground_energy(lattice.single_site(), 1.0, 1.5, (1, 1))
    assert abs(gs.energy - 1.5) < 1e-12


def test_single_bond_analytic():
    gs = ground_energy(lattice.single_bond(), 1.0, 1.5, (1, 1))
    assert abs(gs.energy - (1.5 - math.sqrt(1.5**2 + 16)) / 2) < 1e-10


def test_sector_size(lat11):
    assert SectorBasis.build(lat11, 3, 3).dim == math.comb(6, 3) ** 2
    assert SectorBasis.build(lat11, 2, 4).dim == math.comb(6, 2) * math.comb(6, 4)
    with pytest.raises(ValueError):
        SectorBasis.build(lat11, 7, 0)


def test_sector_operator_matches_dense_block():
    lat = lattice.single_bond()
    h = build_hamiltonians(lat).h_fh
    basis = SectorBasis.build(lat, 1, 1)
    block = to_dense(h)[np.ix_(basis.states, basis.states)]
    assert np.allclose(SectorOperator(h, basis).dense(), block)


def test_dense_and_lanczos_agree(lat11):
    dense = ground_energy(lat11, method="dense").energy
    lz = ground_energy(lat11, method="lanczos").energy
    assert abs(dense - lz) < 1e-8


def test_full_space_dense_agrees_with_sector(lat11, hams11):
    # the sector minimum equals the full-space minimum of H + penalty outside the sector
    from hubbard_cd.fermion import particle_number
    from hubbard_cd.lattice import DOWN, UP

    pen = PauliSum.zero(lat11.n_qubits)
    for spin, n in zip((UP, DOWN), half_filling(lat11)):
        d = particle_number(lat11, spin) - PauliSum.identity(lat11.n_qubits, n)
        pen = pen + (d @ d).scale(50.0)
    full = np.linalg.eigvalsh(to_dense(hams11.h_fh + pen))[0]
    assert abs(full - ground_energy(lat11).energy) < 1e-8


def test_golden_registry(lat11):
    entries = load_golden()
    assert {e.lattice for e in entries} >= {"1x1"}
    assert abs(golden_energy("1x1", 1.0, 1.5, (3, 3)) - ground_energy(lat11).energy) < 1e-8
    with pytest.raises(KeyError):
        golden_energy("9x9")


def test_spin_swap_symmetry(lat11):
    a = ground_energy(lat11, sector=(2, 4)).energy
    b = ground_energy(lat11, sector=(4, 2)).energy
    assert abs(a - b) < 1e-10


def test_lanczos_monotone_restarts(lat11, hams11):
    op = SectorOperator(hams11.h_fh, SectorBasis.build(lat11, 3, 3))
    e, _, res, hist = lanczos(op, max_basis=8, max_restarts=500)
    assert len(hist) > 1
    assert all(b <= a + 1e-12 for a, b in zip(hist, hist[1:]))
    assert res < 1e-8


def test_lanczos_vector_is_eigenvector(lat11, hams11):
    gs = ground_energy(lat11, method="lanczos")
    op = SectorOperator(hams11.h_fh, gs.basis)
    v = gs.vector
    assert np.linalg.norm(op.matvec(v) - gs.energy * v) < 1e-6
    assert abs(expectation(gs.basis.embed(v, lat11.n_qubits), hams11.h_fh) - gs.energy) < 1e-10


def test_expectation_examples(lat11, hams11, rng):
    assert expectation(StateVector(lat11.n_qubits), hams11.h_coul) == 0.0
    gs = ground_energy(lat11, method="dense")
    psi = gs.basis.embed(gs.vector, lat11.n_qubits)
    assert abs(expectation(psi, hams11.h_fh) - gs.energy) < 1e-10
    phi = random_state(lat11.n_qubits, rng)
    lhs = expectation(phi, hams11.h_hop + hams11.h_coul)
    assert abs(lhs - expectation(phi, hams11.h_hop) - expectation(phi, hams11.h_coul)) < 1e-12
    with pytest.raises(DimensionError):
        expectation(random_state(3, rng), hams11.h_fh)


def test_unknown_method(lat11):
    with pytest.raises(ValueError):
        ground_energy(lat11, method="qr")


@pytest.mark.large
def test_golden_1x2():
    lat = lattice.build(1, 2)
    assert abs(ground_energy(lat, method="lanczos", want_vector=False).energy - golden_energy("1x2")) < 1e-7
