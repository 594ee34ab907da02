"""Statevector simulation: gates, Pauli exponentials, noise trajectories, sampling.

Bit convention: qubit ``q`` is bit ``q`` of the amplitude index (qubit 0 is
the least significant bit).  Two-qubit gate matrices act on ``|b_a b_b>``
ordered as ``2 * b_a + b_b`` for ``Gate.qubits == (a, b)``.  Bitstrings
returned by :func:`sample` list qubit 0 first.

Kernels accept either a 1-D amplitude array or a 2-D ``(batch, 2**n)``
array; the batched form is used for noise trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .pauli import PauliString, PauliSum

CACHE_QUBITS = 16
_I_POW = np.array([1, 1j, -1, -1j])

X, H, RX, RZ, CNOT = "X", "H", "RX", "RZ", "CNOT"
SQRT_ISWAP, FSWAP, GIVENS, EXP_PAULI = "SqrtISwap", "FSWAP", "Givens", "ExpPauli"
BASIS_CHANGE_HOP, HOP, COUL = "BasisChangeHop", "Hop", "Coul"

ARITY = {
    X: 1, H: 1, RX: 1, RZ: 1,
    CNOT: 2, SQRT_ISWAP: 2, FSWAP: 2, GIVENS: 2, BASIS_CHANGE_HOP: 2, HOP: 2, COUL: 2,
}
PARAMETRIC = {RX, RZ, GIVENS, EXP_PAULI, HOP, COUL}

_S2 = 1 / math.sqrt(2)
FIXED_MATRICES = {
    X: np.array([[0, 1], [1, 0]], dtype=complex),
    H: np.array([[1, 1], [1, -1]], dtype=complex) * _S2,
    CNOT: np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex),
    SQRT_ISWAP: np.array(
        [[1, 0, 0, 0], [0, _S2, 1j * _S2, 0], [0, 1j * _S2, _S2, 0], [0, 0, 0, 1]], dtype=complex
    ),
    FSWAP: np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, -1]], dtype=complex),
    # (|01> + |10>)/sqrt2 -> |01>, (|01> - |10>)/sqrt2 -> |10>
    BASIS_CHANGE_HOP: np.array(
        [[1, 0, 0, 0], [0, _S2, _S2, 0], [0, _S2, -_S2, 0], [0, 0, 0, 1]], dtype=complex
    ),
}


class UnboundParameterError(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Gate:
    """One gate.  Rotation angle is ``scale * params[slot]`` when ``slot`` is
    set, otherwise the fixed ``theta``.

    ``ExpPauli`` applies ``exp(-i angle P)`` for the unit-coefficient string
    ``pauli``; ``Givens`` is the fermionic mode rotation
    ``exp(angle (c_b^dag c_a - c_a^dag c_b))`` including the parity of the
    qubits between ``a < b``.
    """

    kind: str
    qubits: tuple[int, ...]
    theta: float | None = None
    slot: int | None = None
    scale: float = 1.0
    pauli: PauliString | None = None

    def __post_init__(self) -> None:
        if self.kind == EXP_PAULI:
            if self.pauli is None or self.pauli.weight == 0:
                raise ValueError("ExpPauli needs a non-identity Pauli string")
        elif self.kind not in ARITY:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        elif len(self.qubits) != ARITY[self.kind]:
            raise ValueError(f"{self.kind} acts on {ARITY[self.kind]} qubits")
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError("repeated target qubit")

    @property
    def parametric(self) -> bool:
        return self.kind in PARAMETRIC

    def angle(self, params: Sequence[float] | None = None) -> float:
        if self.slot is None:
            return 0.0 if self.theta is None else self.theta
        if params is None or self.slot >= len(params):
            raise UnboundParameterError(f"parameter slot {self.slot} is unbound")
        return self.scale * float(params[self.slot])

    @property
    def touched(self) -> tuple[int, ...]:
        if self.kind == EXP_PAULI:
            return tuple(self.pauli.support())
        return self.qubits


def exp_pauli(p: PauliString, theta: float | None = None, slot: int | None = None, scale: float = 1.0) -> Gate:
    """``exp(-i theta c P)`` for ``p = c P`` with real ``c`` folded into the angle."""
    c = complex(p.coeff)
    if abs(c.imag) > 1e-12:
        raise ValueError("Pauli exponent needs a real coefficient")
    unit = PauliString(p.n_qubits, p.x, p.z, 1.0)
    if slot is None:
        return Gate(EXP_PAULI, tuple(unit.support()), theta=(theta or 0.0) * c.real, pauli=unit)
    return Gate(EXP_PAULI, tuple(unit.support()), slot=slot, scale=scale * c.real, pauli=unit)


@dataclass
class Circuit:
    n_qubits: int
    gates: list[Gate] = field(default_factory=list)
    n_params: int = 0

    def __post_init__(self) -> None:
        for g in self.gates:
            self._check(g)

    def _check(self, g: Gate) -> None:
        qs = g.pauli.support() if g.kind == EXP_PAULI else g.qubits
        if any(not 0 <= q < self.n_qubits for q in qs):
            raise DimensionMismatch(f"gate {g.kind} on {qs} outside {self.n_qubits} qubits")
        if g.kind == EXP_PAULI and g.pauli.n_qubits != self.n_qubits:
            raise DimensionMismatch("Pauli string size differs from circuit")
        if g.slot is not None and g.slot >= self.n_params:
            self.n_params = g.slot + 1

    def append(self, g: Gate) -> None:
        self._check(g)
        self.gates.append(g)

    def extend(self, gates: Iterable[Gate]) -> None:
        for g in gates:
            self.append(g)

    def __len__(self) -> int:
        return len(self.gates)

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for g in self.gates:
            out[g.kind] = out.get(g.kind, 0) + 1
        return out


class StateVector:
    """``2**n`` complex amplitudes."""

    def __init__(self, n_qubits: int, amplitudes: np.ndarray | None = None) -> None:
        self.n_qubits = n_qubits
        if amplitudes is None:
            amplitudes = np.zeros(1 << n_qubits, dtype=complex)
            amplitudes[0] = 1.0
        amplitudes = np.asarray(amplitudes, dtype=complex)
        if amplitudes.shape != (1 << n_qubits,):
            raise DimensionMismatch(f"expected {1 << n_qubits} amplitudes")
        self.amplitudes = amplitudes

    @classmethod
    def basis(cls, n_qubits: int, index: int) -> "StateVector":
        amps = np.zeros(1 << n_qubits, dtype=complex)
        amps[index] = 1.0
        return cls(n_qubits, amps)

    @classmethod
    def from_bits(cls, bits: str) -> "StateVector":
        """Computational basis state; character ``j`` is qubit ``j``."""
        return cls.basis(len(bits), sum(int(b) << j for j, b in enumerate(bits)))

    def copy(self) -> "StateVector":
        return StateVector(self.n_qubits, self.amplitudes.copy())

    def norm(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


# ---------------------------------------------------------------------------
# kernels


def _as_batch(psi: np.ndarray) -> np.ndarray:
    return psi.reshape(1, -1) if psi.ndim == 1 else psi


def _n_of(psi: np.ndarray) -> int:
    return psi.shape[-1].bit_length() - 1


def apply_1q(psi: np.ndarray, m: np.ndarray, q: int) -> None:
    b = _as_batch(psi)
    n = _n_of(b)
    v = b.reshape(b.shape[0], 1 << (n - q - 1), 2, 1 << q)
    v0 = v[:, :, 0, :].copy()
    v1 = v[:, :, 1, :]
    if m[0, 1] == 0 and m[1, 0] == 0:
        if m[0, 0] != 1:
            v[:, :, 0, :] *= m[0, 0]
        if m[1, 1] != 1:
            v1 *= m[1, 1]
        return
    v[:, :, 0, :] = m[0, 0] * v0 + m[0, 1] * v1
    v[:, :, 1, :] = m[1, 0] * v0 + m[1, 1] * v1


def apply_2q(psi: np.ndarray, m: np.ndarray, a: int, b: int) -> None:
    batch = _as_batch(psi)
    n = _n_of(batch)
    hi, lo = max(a, b), min(a, b)
    v = batch.reshape(batch.shape[0], 1 << (n - hi - 1), 2, 1 << (hi - lo - 1), 2, 1 << lo)

    def view(ba: int, bb: int) -> np.ndarray:
        bh, bl = (ba, bb) if a == hi else (bb, ba)
        return v[:, :, bh, :, bl, :]

    old = [view(k >> 1, k & 1).copy() for k in range(4)]
    for r in range(4):
        row = m[r]
        acc = None
        for c in range(4):
            if row[c] != 0:
                term = row[c] * old[c]
                acc = term if acc is None else acc + term
        view(r >> 1, r & 1)[...] = 0 if acc is None else acc


@lru_cache(maxsize=4096)
def _pauli_tables(n: int, x: int, z: int) -> tuple[np.ndarray, np.ndarray]:
    """Gather index and phase so that ``(P psi)[j] = phase[j] * psi[perm[j]]``."""
    idx = np.arange(1 << n, dtype=np.int64)
    perm = idx ^ x
    sign = 1 - 2 * (np.bitwise_count(perm & z) & 1).astype(np.int8)
    phase = _I_POW[bin(x & z).count("1") % 4] * sign
    return perm, phase


def pauli_apply(psi: np.ndarray, x: int, z: int) -> np.ndarray:
    """Return ``P psi`` for the canonical string ``(x, z)`` (new array)."""
    n = _n_of(psi)
    if n <= CACHE_QUBITS:
        perm, phase = _pauli_tables(n, x, z)
        return psi[..., perm] * phase
    b = _as_batch(psi)
    t = b.reshape((b.shape[0],) + (2,) * n).copy()
    for q in range(n):
        if (z >> q) & 1:
            sl = [slice(None)] * (n + 1)
            sl[n - q] = 1
            t[tuple(sl)] *= -1
    axes = [n - q for q in range(n) if (x >> q) & 1]
    if axes:
        t = np.flip(t, axis=axes)
    out = np.ascontiguousarray(t).reshape(b.shape) * _I_POW[bin(x & z).count("1") % 4]
    return out.reshape(psi.shape)


def apply_exp_pauli(psi: np.ndarray, p: PauliString, theta: float) -> None:
    """In place ``psi <- exp(-i theta P) psi``; the coefficient of ``p`` must be
    folded into ``theta`` by the caller (only the letters are used)."""
    if theta == 0.0:
        return
    c, s = math.cos(theta), math.sin(theta)
    rotated = pauli_apply(psi, p.x, p.z)
    psi *= c
    psi += (-1j * s) * rotated


def apply_pauli_sum(psi: np.ndarray, op: PauliSum) -> np.ndarray:
    out = np.zeros_like(psi)
    for (x, z), c in op.items():
        out += c * pauli_apply(psi, x, z)
    return out


@lru_cache(maxsize=1024)
def _givens_strings(n: int, a: int, b: int) -> tuple[tuple[PauliString, float], ...]:
    """Unit strings and weights of ``G = i (c_b^dag c_a - c_a^dag c_b)``."""
    from .fermion import ANNIHILATE, CREATE, jw_ladder

    ca, cb = jw_ladder(a, n, ANNIHILATE), jw_ladder(b, n, ANNIHILATE)
    cad, cbd = jw_ladder(a, n, CREATE), jw_ladder(b, n, CREATE)
    g = ((cbd * ca) - (cad * cb)).scale(1j)
    return tuple((PauliString(n, p.x, p.z, 1.0), p.coeff.real) for p in g.sorted_terms())


def givens_generator(n: int, a: int, b: int) -> PauliSum:
    return PauliSum(n, [p * w for p, w in _givens_strings(n, a, b)])


def _hop_matrix(t: float) -> np.ndarray:
    c, s = math.cos(t), math.sin(t)
    return np.array([[1, 0, 0, 0], [0, c, -1j * s, 0], [0, -1j * s, c, 0], [0, 0, 0, 1]], dtype=complex)


def _coul_matrix(t: float) -> np.ndarray:
    return np.diag([1, 1, 1, np.exp(-1j * t)]).astype(complex)


def gate_matrix(gate: Gate, params: Sequence[float] | None = None) -> np.ndarray:
    """Dense matrix of 1- and 2-qubit gates (not ExpPauli / Givens)."""
    if gate.kind in FIXED_MATRICES:
        return FIXED_MATRICES[gate.kind]
    t = gate.angle(params)
    if gate.kind == RX:
        c, s = math.cos(t / 2), math.sin(t / 2)
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)
    if gate.kind == RZ:
        return np.diag([np.exp(-0.5j * t), np.exp(0.5j * t)])
    if gate.kind == HOP:
        return _hop_matrix(t)
    if gate.kind == COUL:
        return _coul_matrix(t)
    raise ValueError(f"no small matrix for {gate.kind}")


def apply_gate(state, gate: Gate, params: Sequence[float] | None = None, inverse: bool = False):
    """Apply ``gate`` (or its inverse) in place; returns the state for chaining."""
    psi = state.amplitudes if isinstance(state, StateVector) else state
    if gate.kind == EXP_PAULI:
        t = gate.angle(params)
        apply_exp_pauli(psi, gate.pauli, -t if inverse else t)
        return state
    if gate.kind == GIVENS:
        t = gate.angle(params)
        t = -t if inverse else t
        n = _n_of(psi)
        a, b = sorted(gate.qubits)
        for p, w in _givens_strings(n, a, b):
            apply_exp_pauli(psi, p, t * w)
        return state
    m = gate_matrix(gate, params)
    if inverse:
        m = m.conj().T
    if len(gate.qubits) == 1:
        apply_1q(psi, m, gate.qubits[0])
    else:
        apply_2q(psi, m, gate.qubits[0], gate.qubits[1])
    return state


def generator(gate: Gate, n: int) -> PauliSum:
    """Hermitian ``G`` with ``gate = exp(-i angle G)``."""
    q = gate.qubits
    if gate.kind == EXP_PAULI:
        return PauliSum.from_string(gate.pauli)
    if gate.kind == RX:
        return PauliSum(n, {(1 << q[0], 0): 0.5})
    if gate.kind == RZ:
        return PauliSum(n, {(0, 1 << q[0]): 0.5})
    if gate.kind == HOP:
        x = (1 << q[0]) | (1 << q[1])
        return PauliSum(n, {(x, 0): 0.5, (x, x): 0.5})
    if gate.kind == COUL:
        from .fermion import onsite_term

        return onsite_term(q[0], q[1], n)
    if gate.kind == GIVENS:
        a, b = sorted(q)
        return givens_generator(n, a, b)
    raise ValueError(f"{gate.kind} has no generator")


# ---------------------------------------------------------------------------
# noise

AMPLITUDE_DAMPING, BIT_FLIP, PHASE_FLIP = "amplitude_damping", "bit_flip", "phase_flip"
CHANNELS = (AMPLITUDE_DAMPING, BIT_FLIP, PHASE_FLIP)


@dataclass(frozen=True)
class NoiseModel:
    """Single-qubit channel applied after every gate to every qubit it touches."""

    channel: str
    p: float
    insertion: str = "after_each_gate"

    def __post_init__(self) -> None:
        if self.channel not in CHANNELS:
            raise ValueError(f"unknown channel {self.channel!r}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based Philox generator keyed by ``(seed, *stream)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, stream)])))


def _qubit_view(b: np.ndarray, q: int):
    n = _n_of(b)
    v = b.reshape(b.shape[0], 1 << (n - q - 1), 2, 1 << q)
    return v[:, :, 0, :], v[:, :, 1, :]


def apply_noise_event(batch: np.ndarray, noise: NoiseModel, q: int, u: np.ndarray) -> None:
    """One Kraus event on qubit ``q`` for every trajectory, driven by uniforms ``u``."""
    p = noise.p
    if p == 0.0:
        return
    v0, v1 = _qubit_view(batch, q)
    if noise.channel == BIT_FLIP:
        hit = u < p
        if hit.any():
            tmp = v0[hit].copy()
            v0[hit] = v1[hit]
            v1[hit] = tmp
    elif noise.channel == PHASE_FLIP:
        hit = u < p
        if hit.any():
            v1[hit] *= -1
    else:
        p1 = np.einsum("kij,kij->k", v1.conj(), v1).real
        jump = u < p * p1
        if jump.any():
            v0[jump] = v1[jump] / np.sqrt(p1[jump])[:, None, None]
            v1[jump] = 0
        stay = ~jump
        if stay.any():
            v1[stay] *= math.sqrt(1 - p)
            norm = np.sqrt(1 - p * p1[stay])
            v0[stay] /= norm[:, None, None]
            v1[stay] /= norm[:, None, None]


def run(
    circuit: Circuit,
    params: Sequence[float] | None = None,
    initial: StateVector | None = None,
    noise: NoiseModel | None = None,
    rng_seed: int | None = None,
) -> StateVector:
    """Run the circuit once; with ``noise`` this is one Monte Carlo trajectory."""
    if initial is None:
        initial = StateVector(circuit.n_qubits)
    if initial.n_qubits != circuit.n_qubits:
        raise DimensionMismatch("initial state and circuit sizes differ")
    if noise is None:
        psi = initial.amplitudes.copy()
        for g in circuit.gates:
            apply_gate(psi, g, params)
        return StateVector(circuit.n_qubits, psi)
    batch = run_trajectories(circuit, params, initial, noise, 1, 0 if rng_seed is None else rng_seed)
    return StateVector(circuit.n_qubits, batch[0])


def run_trajectories(
    circuit: Circuit,
    params: Sequence[float] | None,
    initial: StateVector,
    noise: NoiseModel,
    n_traj: int,
    rng_seed: int,
) -> np.ndarray:
    """``(n_traj, 2**n)`` array of independent trajectories.

    Uniforms are drawn per (gate, touched qubit) event for the whole batch, so
    two runs with the same seed share random numbers even if parameters differ.
    """
    rng = rng_for(rng_seed)
    batch = np.repeat(initial.amplitudes[None, :], n_traj, axis=0)
    for g in circuit.gates:
        apply_gate(batch, g, params)
        for q in g.touched:
            u = rng.random(n_traj)
            apply_noise_event(batch, noise, q, u)
    return batch


def sample(state: StateVector, shots: int, rng_seed: int) -> dict[str, int]:
    """Multinomial sample; keys list qubit 0 first."""
    if shots <= 0:
        raise ValueError("shots must be positive")
    counts = sample_indices(state.amplitudes, shots, rng_for(rng_seed))
    n = state.n_qubits
    return {bitstring(int(i), n): int(counts[i]) for i in np.flatnonzero(counts)}


def bitstring(index: int, n: int) -> str:
    return "".join(str((index >> j) & 1) for j in range(n))


def sample_indices(psi: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Outcome counts per basis index."""
    probs = np.abs(psi) ** 2
    probs = probs / probs.sum()
    return rng.multinomial(shots, probs)


class CompiledOperator:
    """A Pauli sum prepared for repeated products and expectations.

    Terms sharing an X mask are merged into one diagonal ``d_x`` so that
    ``(H psi)[j] = sum_x d_x[j ^ x] psi[j ^ x]``.  Diagonals are stored for
    up to ``CACHE_QUBITS`` qubits and rebuilt term by term above that.
    """

    def __init__(self, op: PauliSum) -> None:
        self.op = op
        self.n_qubits = op.n_qubits
        groups: dict[int, list[tuple[int, complex]]] = {}
        for (x, z), c in op.items():
            groups.setdefault(x, []).append((z, c * _I_POW[bin(x & z).count("1") % 4]))
        self.groups = sorted(groups.items())
        self._diag: list[tuple[int, np.ndarray]] | None = None
        if self.n_qubits <= CACHE_QUBITS:
            idx = np.arange(1 << self.n_qubits, dtype=np.int64)
            self._diag = []
            for x, terms in self.groups:
                d = np.zeros(1 << self.n_qubits, dtype=complex)
                for z, c in terms:
                    d += c * (1.0 - 2.0 * (np.bitwise_count(idx & z) & 1))
                if np.all(np.abs(d.imag) < 1e-15):
                    d = d.real.copy()
                self._diag.append((x, d))

    def apply(self, psi: np.ndarray) -> np.ndarray:
        if self._diag is None:
            return apply_pauli_sum(psi, self.op)
        out = np.zeros(psi.shape, dtype=complex)
        for x, d in self._diag:
            t = d * psi
            out += t if x == 0 else t[..., _pauli_tables(self.n_qubits, x, 0)[0]]
        return out

    def expectation(self, psi: np.ndarray) -> float | np.ndarray:
        """``<psi|H|psi>`` (one value per row for a batch)."""
        if self._diag is None:
            val = np.sum(psi.conj() * apply_pauli_sum(psi, self.op), axis=-1)
        else:
            val = 0.0
            for x, d in self._diag:
                t = d * psi
                lhs = psi if x == 0 else psi[..., _pauli_tables(self.n_qubits, x, 0)[0]]
                val = val + np.sum(lhs.conj() * t, axis=-1)
        if np.any(np.abs(np.imag(val)) > 1e-10):
            raise ValueError("expectation has an imaginary part; operator not Hermitian?")
        return np.real(val) if np.ndim(val) else float(np.real(val))


# ---------------------------------------------------------------------------
# branching trajectories


class TrajectoryTree:
    """Noise trajectories that share one state until an error separates them.

    Produces exactly the trajectories of :func:`run_trajectories` (same
    uniforms, same branch decisions) but simulates each distinct history
    once.  Rows are left unnormalised; ``norm2`` tracks their squared norms.
    The recorded tape allows an adjoint sweep that differentiates the
    trajectory estimator with the branch decisions held fixed.
    """

    def __init__(
        self,
        circuit: Circuit,
        params: Sequence[float] | None,
        initial: StateVector,
        noise: NoiseModel,
        n_traj: int,
        rng_seed: int,
    ) -> None:
        self.circuit = circuit
        self.params = params
        self.noise = noise
        self.n_traj = n_traj
        dim = 1 << circuit.n_qubits
        self.phi = np.zeros((n_traj, dim), dtype=complex)
        self.phi[0] = initial.amplitudes
        self.norm2 = np.zeros(n_traj)
        self.norm2[0] = initial.norm()
        self.row_of = np.zeros(n_traj, dtype=np.int64)
        self.n_rows = 1
        self.tape: list[tuple] = []
        self._forward(rng_for(rng_seed))

    @property
    def rows(self) -> np.ndarray:
        return self.phi[: self.n_rows]

    @property
    def weights(self) -> np.ndarray:
        return np.bincount(self.row_of, minlength=self.n_rows) / self.n_traj

    def _forward(self, rng: np.random.Generator) -> None:
        p = self.noise.p
        for k, g in enumerate(self.circuit.gates):
            apply_gate(self.rows, g, self.params)
            self.tape.append(("gate", k))
            for q in g.touched:
                u = rng.random(self.n_traj)
                if p == 0.0:
                    continue
                if self.noise.channel == AMPLITUDE_DAMPING:
                    self._damp(q, u)
                else:
                    self._flip(q, u)

    def _pauli_row(self, arr: np.ndarray, r: int, q: int) -> None:
        v0, v1 = _qubit_view(arr[r : r + 1], q)
        if self.noise.channel == BIT_FLIP:
            tmp = v0.copy()
            v0[...] = v1
            v1[...] = tmp
        else:
            v1 *= -1

    def _flip(self, q: int, u: np.ndarray) -> None:
        hit = u < self.noise.p
        if not hit.any():
            return
        splits, full = [], []
        for r in np.unique(self.row_of[hit]):
            members = self.row_of == r
            if np.all(hit[members]):
                self._pauli_row(self.phi, r, q)
                full.append(r)
            else:
                c = self.n_rows
                self.phi[c] = self.phi[r]
                self.norm2[c] = self.norm2[r]
                self._pauli_row(self.phi, c, q)
                self.row_of[members & hit] = c
                self.n_rows += 1
                splits.append((r, c))
        self.tape.append(("flip", q, splits, full))

    def _damp(self, q: int, u: np.ndarray) -> None:
        p = self.noise.p
        n = self.n_rows
        v0, v1 = _qubit_view(self.rows, q)
        w1 = np.einsum("kij,kij->k", v1.conj(), v1).real
        p1 = w1 / self.norm2[:n]
        jump = u < p * p1[self.row_of]
        splits, full = [], []
        if jump.any():
            for r in np.unique(self.row_of[jump]):
                members = self.row_of == r
                if np.all(jump[members]):
                    full.append((r, self.phi[r].copy()))
                    self._lower_row(self.phi, r, q)
                    self.norm2[r] = p * w1[r]
                else:
                    c = self.n_rows
                    self.phi[c] = self.phi[r]
                    self._lower_row(self.phi, c, q)
                    self.norm2[c] = p * w1[r]
                    self.row_of[members & jump] = c
                    self.n_rows += 1
                    splits.append((r, c))
        keep = np.ones(n, dtype=bool)
        keep[[r for r, _ in full]] = False
        self.norm2[:n][keep] -= p * w1[keep]
        # K0 on every row; rows that just jumped have an empty |1> block
        _qubit_view(self.rows, q)[1][...] *= math.sqrt(1 - p)
        self.tape.append(("damp", q, splits, full))

    def _lower_row(self, arr: np.ndarray, r: int, q: int) -> None:
        """``K1 = sqrt(p) |0><1|`` on one row."""
        v0, v1 = _qubit_view(arr[r : r + 1], q)
        v0[...] = math.sqrt(self.noise.p) * v1
        v1[...] = 0

    def row_energies(self, op: "CompiledOperator") -> np.ndarray:
        rows = self.rows
        return np.real(np.sum(rows.conj() * op.apply(rows), axis=-1)) / self.norm2[: self.n_rows]

    def energy(self, op: "CompiledOperator") -> float:
        return float(self.weights @ self.row_energies(op))

    def gradient(self, op: "CompiledOperator", generators: dict[int, PauliSum] | None = None) -> np.ndarray:
        """Adjoint derivative of :meth:`energy` with branch decisions fixed.

        Consumes the tree (rows are rewound to the initial state).
        """
        n_q = self.circuit.n_qubits
        generators = {} if generators is None else generators
        w = self.weights
        n = self.n_rows
        h_phi = op.apply(self.rows)
        e = np.real(np.sum(self.rows.conj() * h_phi, axis=-1)) / self.norm2[:n]
        lam = np.zeros_like(self.phi)
        lam[:n] = (w / self.norm2[:n])[:, None] * (h_phi - e[:, None] * self.rows)
        grad = np.zeros(self.circuit.n_params)
        gates = self.circuit.gates
        sq = math.sqrt(self.noise.p)
        sq0 = math.sqrt(1 - self.noise.p)
        for entry in reversed(self.tape):
            n = self.n_rows
            if entry[0] == "gate":
                g = gates[entry[1]]
                phi, lm = self.phi[:n], lam[:n]
                if g.slot is not None:
                    if g.kind == EXP_PAULI:
                        gphi = pauli_apply(phi, g.pauli.x, g.pauli.z)
                    else:
                        if entry[1] not in generators:
                            generators[entry[1]] = generator(g, n_q)
                        gphi = apply_pauli_sum(phi, generators[entry[1]])
                    grad[g.slot] += 2.0 * g.scale * float(np.sum(lm.conj() * gphi).imag)
                apply_gate(phi, g, self.params, inverse=True)
                apply_gate(lm, g, self.params, inverse=True)
                continue
            kind, q, splits, full = entry
            if kind == "flip":
                for r in full:
                    self._pauli_row(self.phi, r, q)
                    self._pauli_row(lam, r, q)
                for r, c in reversed(splits):
                    self._pauli_row(lam, c, q)
                    lam[r] += lam[c]
                    lam[c] = 0
                    self.n_rows -= 1
            else:
                _qubit_view(self.phi[:n], q)[1][...] /= sq0
                _qubit_view(lam[:n], q)[1][...] *= sq0
                for r, saved in full:
                    self.phi[r] = saved
                    l0, l1 = _qubit_view(lam[r : r + 1], q)
                    l1[...] = sq * l0
                    l0[...] = 0
                for r, c in reversed(splits):
                    l0, l1 = _qubit_view(lam[c : c + 1], q)
                    _qubit_view(lam[r : r + 1], q)[1][...] += sq * l0
                    lam[c] = 0
                    self.n_rows -= 1
        return grad
