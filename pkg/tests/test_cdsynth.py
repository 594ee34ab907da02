import numpy as np
import pytest
import scipy.sparse as sp

from hubbard_cd import lattice
from hubbard_cd.cdsynth import (
    CdDriver,
    action,
    cd_hamiltonian,
    first_order_operator,
    gauge_basis,
    gauge_potential,
    solve_alpha,
    two_body_pool,
)
from hubbard_cd.evolve import Schedule
from hubbard_cd.fermion import build_hamiltonians, particle_number
from hubbard_cd.lattice import DOWN, UP, ConfigurationError
from hubbard_cd.pauli import PauliSum, commutator, to_dense

LAMS = np.linspace(-1.0, 1.0, 11)


def lz(lam):
    return PauliSum.from_labels([("X", 1.0), ("Z", lam)])


DZ = PauliSum.from_labels([("Z", 1.0)])


def exact_gauge_potential(h, dh):
    """``A_mn = i <m|dH|n> / (E_n - E_m)`` for a nondegenerate spectrum."""
    e, v = np.linalg.eigh(h)
    d = v.conj().T @ dh @ v
    gap = e[None, :] - e[:, None]
    np.fill_diagonal(gap, np.inf)
    return v @ (1j * d / gap) @ v.conj().T


def test_landau_zener_first_basis_operator():
    (o1,) = gauge_basis(lz, DZ, 1, 0.3)
    assert o1.allclose(PauliSum.from_labels([("Y", 2.0)]))


def test_landau_zener_alpha_closed_form():
    for lam in LAMS:
        (alpha,) = solve_alpha(lz, gauge_basis(lz, DZ, 1, lam), DZ, lam)
        assert abs(alpha + 1 / (4 * (1 + lam**2))) < 1e-12


def test_landau_zener_potential_is_exact():
    for lam in LAMS:
        a = to_dense(gauge_potential(lz, DZ, 1, lam).operator())
        exact = exact_gauge_potential(to_dense(lz(lam)), to_dense(DZ))
        assert np.abs(a - exact).max() < 1e-12
        assert np.allclose(a, to_dense(PauliSum.from_labels([("Y", -1 / (2 * (1 + lam**2)))])))


def test_commuting_inputs_give_zero():
    h = PauliSum.from_labels([("ZI", 1.0), ("IZ", 0.5)])
    dh = PauliSum.from_labels([("ZZ", 1.0)])
    basis = gauge_basis(h, dh, 1)
    assert basis[0].is_zero()
    assert solve_alpha(h, basis, dh) == [0.0]


def test_higher_orders_hermitian():
    hams = build_hamiltonians(lattice.single_bond())
    driver = CdDriver(hams, order=3)
    for o in driver.basis(0.4):
        assert all(abs(complex(p.coeff).imag) < 1e-12 for p in o)
    assert len(driver.potential(0.4).alpha) == 3


def _sparse(op):
    return op.to_sparse().tocsr()


def test_alpha_matches_dense_action_scan(hams11):
    lam = 0.5
    driver = CdDriver(hams11)
    (alpha,) = driver.alpha(lam)
    h = _sparse(driver.h_a(lam))
    dh = _sparse(hams11.h_coul)
    o1 = _sparse(driver.basis(lam)[0])
    c = 1j * (h @ o1 - o1 @ h)
    dim = h.shape[0]

    def s(a):
        g = dh - a * c
        return float(sp.linalg.norm(g, "fro") ** 2) / dim

    grid = np.linspace(alpha - 0.05, alpha + 0.05, 201)
    scan = np.array([s(a) for a in grid])
    assert abs(grid[scan.argmin()] - alpha) <= grid[1] - grid[0]
    # S is quadratic in alpha: three samples pin the vertex exactly
    a0, a1, a2 = alpha - 0.01, alpha, alpha + 0.01
    s0, s1, s2 = s(a0), s(a1), s(a2)
    vertex = a1 - 0.01 * (s2 - s0) / (2 * (s2 - 2 * s1 + s0))
    assert abs(vertex - alpha) < 1e-8
    assert abs(s(alpha) - action(driver.h_a, hams11.h_coul, driver.potential(lam).operator(), lam)) < 1e-9


def test_action_never_increases(hams11):
    driver = CdDriver(hams11)
    zero = PauliSum.zero(hams11.n_qubits)
    for lam in np.linspace(0, 1, 11):
        with_cd = action(driver.h_a, hams11.h_coul, driver.potential(lam).operator(), lam)
        assert with_cd <= action(driver.h_a, hams11.h_coul, zero, lam) + 1e-12


def test_cd_hamiltonian_vanishes_at_endpoints(hams11):
    driver = CdDriver(hams11)
    sched = Schedule(2.0)
    assert cd_hamiltonian(sched, 0.0, driver).is_zero()
    assert cd_hamiltonian(sched, 2.0, driver).is_zero()
    mid = cd_hamiltonian(sched, 1.0, driver)
    assert not mid.is_zero() and mid.is_hermitian()
    with pytest.raises(ValueError):
        cd_hamiltonian(sched, 2.5, driver)


def test_interpolation_close_to_direct_solve(hams11):
    direct = CdDriver(hams11)
    table = CdDriver(hams11)
    table.use_interpolation()
    for lam in (0.013, 0.37, 0.9):
        assert abs(direct.alpha(lam)[0] - table.alpha(lam)[0]) < 1e-5


@pytest.mark.parametrize("dims,size", [((1, 1), 8), ((1, 2), 16), ((2, 1), 22)])
def test_pool_size(dims, size):
    lat = lattice.build(*dims)
    pool = two_body_pool(first_order_operator(build_hamiltonians(lat)))
    assert len(pool) == size == 2 * lat.n_sites - 4


def test_pool_strings_and_number_conservation(lat11, hams11):
    pool = two_body_pool(first_order_operator(hams11))
    assert pool.pairs == ((0, 2), (1, 3), (2, 4), (3, 5), (6, 8), (7, 9), (8, 10), (9, 11))
    for g in pool.terms:
        assert g.is_hermitian()
        for p in g:
            assert p.weight == 2 and set(p.letters.replace("I", "")) == {"X", "Y"}
        for spin in (UP, DOWN):
            assert commutator(g, particle_number(lat11, spin)).is_zero()


def test_empty_pool_raises():
    with pytest.raises(ConfigurationError):
        two_body_pool(PauliSum.from_labels([("ZZ", 1.0)]))
