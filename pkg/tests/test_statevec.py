import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_state
from hubbard_cd.pauli import PauliString, PauliSum, to_dense
from hubbard_cd.statevec import (
    AMPLITUDE_DAMPING,
    BIT_FLIP,
    CNOT,
    COUL,
    FSWAP,
    GIVENS,
    H,
    HOP,
    PHASE_FLIP,
    RX,
    RZ,
    SQRT_ISWAP,
    X,
    Circuit,
    CompiledOperator,
    DimensionMismatch,
    Gate,
    NoiseModel,
    StateVector,
    TrajectoryTree,
    UnboundParameterError,
    apply_exp_pauli,
    apply_gate,
    exp_pauli,
    gate_matrix,
    generator,
    run,
    run_trajectories,
    sample,
)


def dense_2q(m, a, b, n):
    """Embed a two-qubit matrix indexed ``2 b_a + b_b`` into ``n`` qubits."""
    dim = 1 << n
    out = np.zeros((dim, dim), dtype=complex)
    for j in range(dim):
        ba, bb = (j >> a) & 1, (j >> b) & 1
        rest = j & ~((1 << a) | (1 << b))
        for r in range(4):
            i = rest | ((r >> 1) << a) | ((r & 1) << b)
            out[i, j] += m[r, 2 * ba + bb]
    return out


def test_x_flips_zero():
    s = StateVector(1)
    apply_gate(s, Gate(X, (0,)))
    assert np.allclose(s.amplitudes, [0, 1])


def test_fswap_signs_double_occupation():
    s = StateVector.from_bits("11")
    apply_gate(s, Gate(FSWAP, (0, 1)))
    assert np.allclose(s.amplitudes, [0, 0, 0, -1])
    s = StateVector.from_bits("10")
    apply_gate(s, Gate(FSWAP, (0, 1)))
    assert np.allclose(s.probabilities(), StateVector.from_bits("01").probabilities())


def test_sqrt_iswap_twice():
    m = gate_matrix(Gate(SQRT_ISWAP, (0, 1)))
    assert np.allclose(m @ m, [[1, 0, 0, 0], [0, 0, 1j, 0], [0, 1j, 0, 0], [0, 0, 0, 1]])
    s = StateVector.from_bits("01")
    for _ in range(2):
        apply_gate(s, Gate(SQRT_ISWAP, (0, 1)))
    assert np.allclose(s.amplitudes, 1j * StateVector.from_bits("10").amplitudes)


def test_two_qubit_kernel_matches_dense(rng):
    n = 4
    for a, b in [(0, 1), (1, 0), (0, 3), (3, 1), (2, 3)]:
        m = sla.expm(-1j * (lambda r: r + r.conj().T)(rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))))
        psi = random_state(n, rng)
        out = psi.copy()
        from hubbard_cd.statevec import apply_2q

        apply_2q(out, m, a, b)
        assert np.allclose(out, dense_2q(m, a, b, n) @ psi, atol=1e-12)


def test_exp_pauli_eigenstate_phase():
    s = StateVector(1)
    apply_exp_pauli(s.amplitudes, PauliString.from_label("Z"), 0.4)
    assert np.allclose(s.amplitudes, [np.exp(-0.4j), 0])


def test_exp_pauli_zero_angle_is_identity(rng):
    psi = random_state(3, rng)
    out = psi.copy()
    apply_exp_pauli(out, PauliString.from_label("XYZ"), 0.0)
    assert np.array_equal(out, psi)


def test_exp_pauli_random_three_qubit(rng):
    p = PauliString.from_label("YXZ")
    psi = random_state(3, rng)
    out = psi.copy()
    apply_exp_pauli(out, p, 0.37)
    ref = sla.expm(-0.37j * to_dense(PauliSum.from_string(p))) @ psi
    assert np.abs(out - ref).max() < 1e-12


@settings(max_examples=100, deadline=None)
@given(
    st.integers(1, 4).flatmap(
        lambda n: st.tuples(
            st.just(n),
            st.text("IXYZ", min_size=n, max_size=n).filter(lambda s: set(s) != {"I"}),
            st.floats(-math.pi, math.pi, allow_nan=False),
        )
    )
)
def test_exp_pauli_matches_expm(args):
    n, label, theta = args
    rng = np.random.default_rng(abs(hash(label)) % 1000)
    psi = random_state(n, rng)
    out = psi.copy()
    p = PauliString.from_label(label)
    apply_exp_pauli(out, p, theta)
    ref = sla.expm(-1j * theta * to_dense(PauliSum.from_string(p))) @ psi
    assert np.abs(out - ref).max() < 1e-12


def test_exp_pauli_folds_coefficient(rng):
    p = PauliString.from_label("XZ", -0.75)
    g = exp_pauli(p, theta=0.2)
    psi = random_state(2, rng)
    out = apply_gate(psi.copy(), g)
    ref = sla.expm(-0.2j * to_dense(PauliSum.from_string(p))) @ psi
    assert np.allclose(out, ref)


def test_norm_preserved_over_many_random_gates():
    rng = np.random.default_rng(7)
    n = 8
    s = StateVector(n, random_state(n, rng))
    kinds = [X, H, RX, RZ, CNOT, SQRT_ISWAP, FSWAP, HOP, COUL, GIVENS]
    for _ in range(10_000):
        kind = kinds[rng.integers(len(kinds))]
        if kind in (X, H, RX, RZ):
            qs = (int(rng.integers(n)),)
        else:
            qs = tuple(int(q) for q in rng.choice(n, 2, replace=False))
        apply_gate(s, Gate(kind, qs, theta=float(rng.uniform(-3, 3))))
    assert abs(1 - s.norm()) < 1e-10


@pytest.mark.parametrize("kind", [RX, RZ, HOP, COUL, GIVENS])
def test_parametric_gates_are_exponentials_of_their_generators(kind, rng):
    n = 3
    qs = (0,) if kind in (RX, RZ) else (0, 2)
    g = Gate(kind, qs, theta=0.61)
    psi = random_state(n, rng)
    ref = sla.expm(-0.61j * to_dense(generator(g, n))) @ psi
    assert np.allclose(apply_gate(psi.copy(), g), ref, atol=1e-12)
    back = apply_gate(apply_gate(psi.copy(), g), g, inverse=True)
    assert np.allclose(back, psi)


def test_unbound_parameter():
    with pytest.raises(UnboundParameterError):
        apply_gate(StateVector(1), Gate(RZ, (0,), slot=0))
    with pytest.raises(UnboundParameterError):
        apply_gate(StateVector(1), Gate(RZ, (0,), slot=2), [0.1])


def test_gate_arity_and_circuit_bounds():
    with pytest.raises(ValueError):
        Gate(CNOT, (0,))
    with pytest.raises(ValueError):
        Gate(CNOT, (1, 1))
    with pytest.raises(DimensionMismatch):
        Circuit(2, [Gate(X, (2,))])
    with pytest.raises(DimensionMismatch):
        run(Circuit(2), initial=StateVector(3))
    c = Circuit(2, [Gate(RZ, (0,), slot=4)])
    assert c.n_params == 5


def test_empty_circuit_keeps_state(rng):
    s = StateVector(3, random_state(3, rng))
    assert np.array_equal(run(Circuit(3), initial=s).amplitudes, s.amplitudes)


def test_zero_noise_is_noiseless(rng):
    c = Circuit(3, [Gate(H, (0,)), Gate(CNOT, (0, 1)), Gate(RX, (2,), theta=0.3), Gate(HOP, (1, 2), theta=0.8)])
    s = StateVector(3, random_state(3, rng))
    for ch in (AMPLITUDE_DAMPING, BIT_FLIP, PHASE_FLIP):
        noisy = run(c, initial=s, noise=NoiseModel(ch, 0.0), rng_seed=4)
        assert np.array_equal(noisy.amplitudes, run(c, initial=s).amplitudes)


def test_certain_bit_flip():
    c = Circuit(1, [Gate(RZ, (0,), theta=0.0)])
    out = run(c, noise=NoiseModel(BIT_FLIP, 1.0), rng_seed=11)
    assert np.allclose(out.amplitudes, [0, 1])


def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel("depolarizing", 0.1)
    with pytest.raises(ValueError):
        NoiseModel(BIT_FLIP, 1.5)


def _kraus(channel, p):
    if channel == BIT_FLIP:
        return [math.sqrt(1 - p) * np.eye(2), math.sqrt(p) * np.array([[0, 1], [1, 0]])]
    if channel == PHASE_FLIP:
        return [math.sqrt(1 - p) * np.eye(2), math.sqrt(p) * np.diag([1, -1])]
    return [np.diag([1, math.sqrt(1 - p)]), np.array([[0, math.sqrt(p)], [0, 0]])]


@pytest.mark.parametrize("channel", [AMPLITUDE_DAMPING, BIT_FLIP, PHASE_FLIP])
@pytest.mark.parametrize("p", [0.01, 0.2])
def test_trajectories_reproduce_density_matrix(channel, p):
    gates = [Gate(RX, (0,), theta=1.1), Gate(H, (0,)), Gate(RZ, (0,), theta=0.4), Gate(RX, (0,), theta=0.9)]
    circ = Circuit(1, gates)
    rho = np.array([[1, 0], [0, 0]], dtype=complex)
    for g in gates:
        u = gate_matrix(g)
        rho = u @ rho @ u.conj().T
        rho = sum(k @ rho @ k.conj().T for k in _kraus(channel, p))
    obs = {"Z": np.diag([1, -1]), "X": np.array([[0, 1], [1, 0]])}
    batch = run_trajectories(circ, None, StateVector(1), NoiseModel(channel, p), 2000, 5)
    for name, o in obs.items():
        vals = np.einsum("ki,ij,kj->k", batch.conj(), o, batch).real
        exact = np.trace(rho @ o).real
        assert abs(vals.mean() - exact) < 3 * vals.std(ddof=1) / math.sqrt(len(vals)) + 1e-12, name


def test_trajectory_rows_are_normalised():
    circ = Circuit(2, [Gate(H, (0,)), Gate(CNOT, (0, 1)), Gate(RX, (1,), theta=0.5)])
    batch = run_trajectories(circ, None, StateVector(2), NoiseModel(AMPLITUDE_DAMPING, 0.3), 200, 2)
    assert np.allclose(np.sum(np.abs(batch) ** 2, axis=1), 1)


def _layered(n, rng):
    gates = []
    for _ in range(3):
        for q in range(0, n - 1, 2):
            gates.append(Gate(HOP, (q, q + 1), slot=len(gates)))
        for q in range(1, n - 1, 2):
            gates.append(Gate(COUL, (q, q + 1), slot=len(gates)))
        gates.append(exp_pauli(PauliString.from_label("XZY" + "I" * (n - 3), 0.5), slot=len(gates)))
    return Circuit(n, gates), rng.uniform(0, 1, len(gates))


@pytest.mark.parametrize("channel", [AMPLITUDE_DAMPING, BIT_FLIP, PHASE_FLIP])
def test_trajectory_tree_matches_independent_trajectories(channel, rng):
    n = 5
    circ, theta = _layered(n, rng)
    init = StateVector(n, random_state(n, rng))
    op = CompiledOperator(PauliSum.from_labels([("ZZIII", 0.7), ("XXIII", -0.4), ("IYZYI", 0.3), ("IIIIX", 1.1)]))
    noise = NoiseModel(channel, 0.05)
    batch = run_trajectories(circ, theta, init, noise, 60, 17)
    tree = TrajectoryTree(circ, theta, init, noise, 60, 17)
    assert tree.n_rows < 60
    assert abs(np.mean(op.expectation(batch)) - tree.energy(op)) < 1e-12


@pytest.mark.parametrize("channel", [AMPLITUDE_DAMPING, BIT_FLIP, PHASE_FLIP])
def test_pathwise_gradient_matches_common_random_number_differences(channel, rng):
    n = 5
    circ, theta = _layered(n, rng)
    init = StateVector(n, random_state(n, rng))
    op = CompiledOperator(PauliSum.from_labels([("ZZIII", 0.7), ("XXIII", -0.4), ("IYZYI", 0.3)]))
    noise = NoiseModel(channel, 0.05)
    tree = TrajectoryTree(circ, theta, init, noise, 40, 3)
    grad = tree.gradient(op)
    assert np.allclose(tree.rows[0], init.amplitudes)  # rewound
    h = 1e-6
    for k in range(len(theta)):
        e = np.zeros(len(theta))
        e[k] = h
        plus = TrajectoryTree(circ, theta + e, init, noise, 40, 3).energy(op)
        minus = TrajectoryTree(circ, theta - e, init, noise, 40, 3).energy(op)
        assert abs((plus - minus) / (2 * h) - grad[k]) < 1e-7


def test_sample_basis_state():
    counts = sample(StateVector.from_bits("01"), 1000, 3)
    assert counts == {"01": 1000}


def test_sample_uniform_statistics():
    s = StateVector(2, np.full(4, 0.5, dtype=complex))
    counts = sample(s, 30000, 9)
    sigma = math.sqrt(30000 * 0.25 * 0.75)
    assert sum(counts.values()) == 30000
    assert all(abs(c - 7500) < 5 * sigma for c in counts.values())


def test_sample_is_deterministic_per_seed(rng):
    s = StateVector(4, random_state(4, rng))
    assert sample(s, 500, 21) == sample(s, 500, 21)
    with pytest.raises(ValueError):
        sample(s, 0, 1)


def test_compiled_operator_matches_dense(rng, hams11):
    h = PauliSum.from_labels([("XZYI", 0.3), ("ZZII", -1.0), ("IXXI", 0.25), ("YIIY", 0.5), ("IIII", 0.1)])
    psi = random_state(4, rng)
    op = CompiledOperator(h)
    assert np.allclose(op.apply(psi), to_dense(h) @ psi)
    assert np.isclose(op.expectation(psi), np.vdot(psi, to_dense(h) @ psi).real)
    batch = np.stack([psi, random_state(4, rng)])
    assert np.allclose(op.expectation(batch), [op.expectation(b) for b in batch])
    with pytest.raises(ValueError):
        CompiledOperator(PauliSum.from_labels([("XIII", 1j)])).expectation(random_state(4, rng))
