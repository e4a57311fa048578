"""Exact state-vector and density-matrix simulation for a handful of qubits.

Qubit 0 is the least significant bit of the amplitude index, so the basis
state ``|q3 q2 q1 q0>`` lives at index ``q0 + 2*q1 + 4*q2 + 8*q3``.  With
numpy's C ordering this means qubit ``q`` of an ``n``-qubit register is
tensor axis ``n - 1 - q``.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

STATE_ATOL = 1e-10
MATRIX_ATOL = 1e-12
EIGEN_ATOL = 1e-9

MAX_STATE_QUBITS = 6
MAX_DENSITY_QUBITS = 4

_SQRT_HALF = 1 / math.sqrt(2)

GATE_MATRICES = {
    "H": np.array([[1, 1], [1, -1]], dtype=complex) * _SQRT_HALF,
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    # control is the first target (higher tensor position), target the second
    "CNOT": np.array(
        [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
    ),
}
GATE_ARITY = {"H": 1, "X": 1, "Z": 1, "CNOT": 2}


class KernelError(ValueError):
    """Invalid use of the quantum kernel (bad index, dimension, or range)."""


def _check_qubits(n: int, limit: int) -> None:
    if not isinstance(n, (int, np.integer)) or not 1 <= n <= limit:
        raise KernelError(f"qubit count must be in 1..{limit}, got {n!r}")


def _check_index(q: int, n: int) -> None:
    if not isinstance(q, (int, np.integer)) or not 0 <= q < n:
        raise KernelError(f"qubit index {q!r} out of range for {n} qubits")


@dataclass(frozen=True)
class Gate:
    """One of H, X, Z on ``targets[0]``, or CNOT with ``targets=(control, target)``."""

    kind: str
    targets: tuple[int, ...]

    def __post_init__(self):
        if self.kind not in GATE_MATRICES:
            raise KernelError(f"unknown gate kind {self.kind!r}")
        targets = tuple(int(t) for t in self.targets)
        object.__setattr__(self, "targets", targets)
        if len(targets) != GATE_ARITY[self.kind]:
            raise KernelError(
                f"{self.kind} takes {GATE_ARITY[self.kind]} target(s), got {targets}"
            )
        if len(set(targets)) != len(targets):
            raise KernelError(f"gate targets must be distinct, got {targets}")

    @property
    def matrix(self) -> np.ndarray:
        return GATE_MATRICES[self.kind]


def H(q: int) -> Gate:
    return Gate("H", (q,))


def X(q: int) -> Gate:
    return Gate("X", (q,))


def Z(q: int) -> Gate:
    return Gate("Z", (q,))


def CNOT(control: int, target: int) -> Gate:
    return Gate("CNOT", (control, target))


class MeasurementBasis:
    """Measurement axis in the X-Z plane.

    ``angle`` 0 is the computational (Z) basis and ``pi/2`` the X basis.  The
    outcome-0 eigenvector is ``cos(a/2)|0> + sin(a/2)|1>``.  Angles are reduced
    modulo pi; note that ``a + pi`` describes the same axis with the outcome
    labels exchanged, so callers should pass angles already in ``[0, pi)`` when
    labels matter.
    """

    __slots__ = ("angle",)

    def __init__(self, angle: float = 0.0):
        angle = float(angle) % math.pi
        if math.isclose(angle, math.pi, abs_tol=1e-15):
            angle = 0.0
        self.angle = angle

    def __repr__(self):
        return f"MeasurementBasis({self.angle!r})"

    def __eq__(self, other):
        return isinstance(other, MeasurementBasis) and self.angle == other.angle

    def __hash__(self):
        return hash(self.angle)

    def rotation(self) -> np.ndarray:
        """Unitary mapping this basis onto the computational basis."""
        c, s = math.cos(self.angle / 2), math.sin(self.angle / 2)
        return np.array([[c, s], [-s, c]], dtype=complex)

    def eigenvector(self, bit: int) -> np.ndarray:
        c, s = math.cos(self.angle / 2), math.sin(self.angle / 2)
        if bit == 0:
            return np.array([c, s], dtype=complex)
        return np.array([-s, c], dtype=complex)


Z_BASIS = MeasurementBasis(0.0)
X_BASIS = MeasurementBasis(math.pi / 2)


def _as_basis(basis) -> MeasurementBasis:
    if basis is None:
        return Z_BASIS
    if isinstance(basis, MeasurementBasis):
        return basis
    return MeasurementBasis(basis)


# -- tensor helpers -----------------------------------------------------------


def _apply_matrix(psi: np.ndarray, n: int, U: np.ndarray, qubits: Sequence[int]) -> np.ndarray:
    """Apply ``U`` (acting on ``qubits``, first qubit most significant) to psi."""
    k = len(qubits)
    if k == 1:
        q = qubits[0]
        t = psi.reshape(-1, 2, 1 << q)
        out = np.empty_like(t)
        out[:, 0] = U[0, 0] * t[:, 0] + U[0, 1] * t[:, 1]
        out[:, 1] = U[1, 0] * t[:, 0] + U[1, 1] * t[:, 1]
        return out.reshape(-1)
    axes = [n - 1 - q for q in qubits]
    t = psi.reshape((2,) * n)
    t = np.tensordot(U.reshape((2,) * (2 * k)), t, axes=(list(range(k, 2 * k)), axes))
    t = np.moveaxis(t, list(range(k)), axes)
    return t.reshape(-1)


def _apply_matrix_dm(rho: np.ndarray, n: int, U: np.ndarray, qubits: Sequence[int]) -> np.ndarray:
    k = len(qubits)
    Ut = U.reshape((2,) * (2 * k))
    t = rho.reshape((2,) * (2 * n))
    row_axes = [n - 1 - q for q in qubits]
    t = np.tensordot(Ut, t, axes=(list(range(k, 2 * k)), row_axes))
    t = np.moveaxis(t, list(range(k)), row_axes)
    col_axes = [n + a for a in row_axes]
    t = np.tensordot(t, Ut.conj(), axes=(col_axes, list(range(k, 2 * k))))
    t = np.moveaxis(t, list(range(2 * n - k, 2 * n)), col_axes)
    dim = 2**n
    return t.reshape(dim, dim)


@functools.lru_cache(maxsize=None)
def _bit_mask(n: int, q: int) -> np.ndarray:
    mask = ((np.arange(2**n) >> q) & 1).astype(bool)
    mask.setflags(write=False)
    return mask


# -- state vectors ------------------------------------------------------------


class StateVector:
    """Pure state of 1..6 qubits.  Treated as immutable."""

    __slots__ = ("num_qubits", "amplitudes")

    def __init__(self, amplitudes, normalize: bool = False):
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        n = int(round(math.log2(amps.size))) if amps.size else 0
        if amps.size != 2**n:
            raise KernelError(f"amplitude count {amps.size} is not a power of two")
        _check_qubits(n, MAX_STATE_QUBITS)
        norm = np.linalg.norm(amps)
        if normalize:
            if norm == 0:
                raise KernelError("cannot normalize the zero vector")
            amps = amps / norm
        elif abs(norm - 1) > STATE_ATOL:
            raise KernelError(f"state is not normalized (norm={norm})")
        amps.setflags(write=False)
        self.num_qubits = n
        self.amplitudes = amps

    def __repr__(self):
        return f"StateVector({self.amplitudes!r})"

    def probabilities(self) -> np.ndarray:
        """Born probabilities of every computational basis state."""
        return np.abs(self.amplitudes) ** 2

    def to_density(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()))


def _sv(amps: np.ndarray, n: int) -> StateVector:
    # internal fast path: amps already normalized
    out = StateVector.__new__(StateVector)
    amps.setflags(write=False)
    out.num_qubits = n
    out.amplitudes = amps
    return out


def new_register(n: int) -> StateVector:
    """|0...0> on ``n`` qubits."""
    _check_qubits(n, MAX_STATE_QUBITS)
    amps = np.zeros(2**n, dtype=complex)
    amps[0] = 1
    return _sv(amps, n)


def basis_state(bits: str) -> StateVector:
    """Computational basis state written ``q_{n-1} ... q_0`` (qubit 0 last)."""
    n = len(bits)
    _check_qubits(n, MAX_STATE_QUBITS)
    amps = np.zeros(2**n, dtype=complex)
    amps[int(bits, 2)] = 1
    return _sv(amps, n)


def tensor(*states: StateVector) -> StateVector:
    """Join registers; the first argument becomes the lowest-numbered qubits."""
    amps = np.ones(1, dtype=complex)
    for s in states:
        amps = np.kron(s.amplitudes, amps)
    return StateVector(amps)


@functools.lru_cache(maxsize=None)
def _permutation(n: int, kind: str, targets: tuple[int, ...]) -> np.ndarray:
    idx = np.arange(2**n)
    if kind == "X":
        return idx ^ (1 << targets[0])
    control, target = targets
    return np.where((idx >> control) & 1, idx ^ (1 << target), idx)


@functools.lru_cache(maxsize=None)
def _z_signs(n: int, q: int) -> np.ndarray:
    return np.where(_bit_mask(n, q), -1.0, 1.0)


def apply_gate(state: StateVector, gate: Gate) -> StateVector:
    n = state.num_qubits
    for q in gate.targets:
        _check_index(q, n)
    kind = gate.kind
    if kind == "H":
        amps = _apply_matrix(state.amplitudes, n, gate.matrix, gate.targets)
    elif kind == "Z":
        amps = state.amplitudes * _z_signs(n, gate.targets[0])
    else:
        amps = state.amplitudes[_permutation(n, kind, gate.targets)]
    return _sv(amps, n)


def apply_gates(state: StateVector, gates: Sequence[Gate]) -> StateVector:
    for g in gates:
        state = apply_gate(state, g)
    return state


def born_probabilities(state: StateVector, qubit: int, basis=None) -> tuple[float, float]:
    n = state.num_qubits
    _check_index(qubit, n)
    basis = _as_basis(basis)
    amps = state.amplitudes
    if basis.angle != 0.0:
        amps = _apply_matrix(amps, n, basis.rotation(), (qubit,))
    probs = np.abs(amps) ** 2
    p1 = float(probs[_bit_mask(n, qubit)].sum())
    p0 = float(probs.sum()) - p1
    return p0, p1


def postselect(state: StateVector, qubit: int, bit: int, basis=None) -> tuple[float, StateVector | None]:
    """Probability of ``bit`` and the renormalized post-measurement state.

    The post-measurement state is ``None`` when the outcome is impossible.
    """
    n = state.num_qubits
    _check_index(qubit, n)
    basis = _as_basis(basis)
    rotate = basis.angle != 0.0
    amps = state.amplitudes
    if rotate:
        amps = _apply_matrix(amps, n, basis.rotation(), (qubit,))
    mask = _bit_mask(n, qubit) != bool(bit)
    amps = amps.copy()
    amps[mask] = 0
    p = float(np.vdot(amps, amps).real)
    if p < MATRIX_ATOL:
        return 0.0, None
    amps /= math.sqrt(p)
    if rotate:
        amps = _apply_matrix(amps, n, basis.rotation().conj().T, (qubit,))
    return p, _sv(amps, n)


def _draw_bit(p1: float, rng: np.random.Generator) -> int:
    if p1 < MATRIX_ATOL:
        return 0
    if p1 > 1 - MATRIX_ATOL:
        return 1
    return int(rng.random() < p1)


def measure(state: StateVector, qubit: int, basis, rng: np.random.Generator) -> tuple[int, StateVector]:
    """Sample a projective measurement and return ``(bit, collapsed_state)``."""
    n = state.num_qubits
    _check_index(qubit, n)
    basis = _as_basis(basis)
    if basis.angle != 0.0:
        _, p1 = born_probabilities(state, qubit, basis)
        bit = _draw_bit(p1, rng)
        return bit, postselect(state, qubit, bit, basis)[1]
    amps = state.amplitudes
    ones, zeros = _projectors(n, qubit)
    probs = amps.real**2 + amps.imag**2
    p1 = float(probs @ ones)
    bit = _draw_bit(p1, rng)
    if bit:
        post = amps * (ones / math.sqrt(p1))
    else:
        post = amps * (zeros / math.sqrt(1 - p1))
    return bit, _sv(post, n)


@functools.lru_cache(maxsize=None)
def _projectors(n: int, q: int) -> tuple[np.ndarray, np.ndarray]:
    ones = _bit_mask(n, q).astype(float)
    return ones, 1 - ones


def make_bell_pair() -> StateVector:
    """(|00> + |11>)/sqrt(2) built with H then CNOT, as on hardware."""
    return apply_gates(new_register(2), [H(0), CNOT(0, 1)])


def overlap(a: StateVector, b: StateVector) -> float:
    """|<a|b>|, insensitive to global phase."""
    if a.num_qubits != b.num_qubits:
        raise KernelError("overlap needs registers of equal size")
    return float(abs(np.vdot(a.amplitudes, b.amplitudes)))


# -- density matrices ---------------------------------------------------------

PHI_PLUS = np.array([1, 0, 0, 1], dtype=complex) * _SQRT_HALF
PHI_MINUS = np.array([1, 0, 0, -1], dtype=complex) * _SQRT_HALF
PSI_PLUS = np.array([0, 1, 1, 0], dtype=complex) * _SQRT_HALF
PSI_MINUS = np.array([0, 1, -1, 0], dtype=complex) * _SQRT_HALF
BELL_STATES = (PHI_PLUS, PHI_MINUS, PSI_PLUS, PSI_MINUS)


class DensityMatrix:
    """Mixed state of 1..4 qubits.  Treated as immutable."""

    __slots__ = ("num_qubits", "entries")

    def __init__(self, entries, check: bool = True):
        rho = np.asarray(entries, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise KernelError(f"density matrix must be square, got shape {rho.shape}")
        n = int(round(math.log2(rho.shape[0])))
        if rho.shape[0] != 2**n:
            raise KernelError(f"dimension {rho.shape[0]} is not a power of two")
        _check_qubits(n, MAX_DENSITY_QUBITS)
        if check:
            if abs(np.trace(rho) - 1) > STATE_ATOL:
                raise KernelError(f"trace must be 1, got {np.trace(rho).real}")
            if np.abs(rho - rho.conj().T).max() > STATE_ATOL:
                raise KernelError("density matrix is not Hermitian")
            if np.linalg.eigvalsh(rho).min() < -EIGEN_ATOL:
                raise KernelError("density matrix has a negative eigenvalue")
        rho = rho.copy()
        rho.setflags(write=False)
        self.num_qubits = n
        self.entries = rho

    def __repr__(self):
        return f"DensityMatrix({self.entries!r})"

    def purity(self) -> float:
        return float(np.trace(self.entries @ self.entries).real)

    def probabilities(self) -> np.ndarray:
        return np.real(np.diag(self.entries)).copy()


def _dm(rho: np.ndarray) -> DensityMatrix:
    return DensityMatrix(rho, check=False)


def maximally_mixed(n: int) -> DensityMatrix:
    _check_qubits(n, MAX_DENSITY_QUBITS)
    return _dm(np.eye(2**n, dtype=complex) / 2**n)


def tensor_dm(*states: DensityMatrix) -> DensityMatrix:
    """Join mixed registers; the first argument becomes the lowest qubits."""
    rho = np.ones((1, 1), dtype=complex)
    for s in states:
        rho = np.kron(s.entries, rho)
    return DensityMatrix(rho)


def make_werner(fidelity: float) -> DensityMatrix:
    """Werner state ``F |Phi+><Phi+| + (1-F)/3 (other Bell projectors)``."""
    if not 0.25 - STATE_ATOL <= fidelity <= 1 + STATE_ATOL:
        raise KernelError(f"Werner fidelity must be in [1/4, 1], got {fidelity}")
    weights = (fidelity,) + ((1 - fidelity) / 3,) * 3
    rho = sum(w * np.outer(b, b.conj()) for w, b in zip(weights, BELL_STATES))
    return _dm(rho)


def fidelity_to_bell(dm: DensityMatrix) -> float:
    """<Phi+| rho |Phi+> for a two-qubit state."""
    if not isinstance(dm, DensityMatrix) or dm.num_qubits != 2:
        raise KernelError("fidelity_to_bell expects a 2-qubit DensityMatrix")
    return float(np.vdot(PHI_PLUS, dm.entries @ PHI_PLUS).real)


def dm_apply(dm: DensityMatrix, gate: Gate) -> DensityMatrix:
    n = dm.num_qubits
    for q in gate.targets:
        _check_index(q, n)
    return _dm(_apply_matrix_dm(dm.entries, n, gate.matrix, gate.targets))


def dm_apply_unitary(dm: DensityMatrix, U: np.ndarray, qubits: Sequence[int]) -> DensityMatrix:
    """Conjugate by an arbitrary unitary on ``qubits`` (first listed is most significant)."""
    n = dm.num_qubits
    for q in qubits:
        _check_index(q, n)
    if U.shape != (2 ** len(qubits),) * 2:
        raise KernelError(f"unitary shape {U.shape} does not match {len(qubits)} qubits")
    return _dm(_apply_matrix_dm(dm.entries, n, np.asarray(U, dtype=complex), qubits))


def dm_born_probabilities(dm: DensityMatrix, qubit: int, basis=None) -> tuple[float, float]:
    n = dm.num_qubits
    _check_index(qubit, n)
    basis = _as_basis(basis)
    rho = dm.entries
    if basis.angle != 0.0:
        rho = _apply_matrix_dm(rho, n, basis.rotation(), (qubit,))
    diag = np.real(np.diag(rho))
    p1 = float(diag[_bit_mask(n, qubit)].sum())
    return float(diag.sum()) - p1, p1


def dm_postselect(dm: DensityMatrix, qubit: int, bit: int, basis=None) -> tuple[float, DensityMatrix | None]:
    n = dm.num_qubits
    _check_index(qubit, n)
    basis = _as_basis(basis)
    rotate = basis.angle != 0.0
    rho = dm.entries
    if rotate:
        rho = _apply_matrix_dm(rho, n, basis.rotation(), (qubit,))
    keep = _bit_mask(n, qubit) == bool(bit)
    rho = rho * np.outer(keep, keep)
    p = float(np.trace(rho).real)
    if p < MATRIX_ATOL:
        return 0.0, None
    rho = rho / p
    if rotate:
        rho = _apply_matrix_dm(rho, n, basis.rotation().conj().T, (qubit,))
    return p, _dm(rho)


def dm_measure(dm: DensityMatrix, qubit: int, basis, rng: np.random.Generator) -> tuple[int, DensityMatrix]:
    _, p1 = dm_born_probabilities(dm, qubit, basis)
    bit = _draw_bit(p1, rng)
    _, post = dm_postselect(dm, qubit, bit, basis)
    return bit, post


def partial_trace(dm: DensityMatrix, keep: Sequence[int]) -> DensityMatrix:
    """Reduce to the qubits in ``keep``; they are renumbered in ascending order."""
    n = dm.num_qubits
    keep = sorted(set(int(q) for q in keep))
    if not keep:
        raise KernelError("partial_trace must keep at least one qubit")
    for q in keep:
        _check_index(q, n)
    t = dm.entries.reshape((2,) * (2 * n))
    remaining = list(range(n - 1, -1, -1))  # qubit held by each row axis
    for q in [q for q in range(n) if q not in keep]:
        ax = remaining.index(q)
        t = np.trace(t, axis1=ax, axis2=len(remaining) + ax)
        remaining.remove(q)
    dim = 2 ** len(remaining)
    return _dm(t.reshape(dim, dim))


def reduced_state(state: StateVector, keep: Sequence[int]) -> DensityMatrix:
    """Reduced density matrix of a pure register (any size up to 6 qubits)."""
    n = state.num_qubits
    keep = sorted(set(int(q) for q in keep))
    for q in keep:
        _check_index(q, n)
    if len(keep) > MAX_DENSITY_QUBITS:
        raise KernelError("reduced state would exceed the density-matrix size limit")
    t = state.amplitudes.reshape((2,) * n)
    keep_axes = [n - 1 - q for q in reversed(keep)]
    rest = [a for a in range(n) if a not in keep_axes]
    m = np.transpose(t, keep_axes + rest).reshape(2 ** len(keep), -1)
    return _dm(m @ m.conj().T)


_PAULIS = (
    GATE_MATRICES["X"],
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    GATE_MATRICES["Z"],
)


def dm_depolarize(dm: DensityMatrix, qubit: int, keep: float) -> DensityMatrix:
    """Single-qubit depolarizing channel ``rho -> keep*rho + (1-keep)*I/2 (x) Tr_q rho``.

    Applied through its Pauli Kraus decomposition.
    """
    n = dm.num_qubits
    _check_index(qubit, n)
    if not 0 <= keep <= 1:
        raise KernelError(f"keep weight must be in [0, 1], got {keep}")
    w = (1 - keep) / 4
    rho = (1 - 3 * w) * dm.entries
    for P in _PAULIS:
        rho = rho + w * _apply_matrix_dm(dm.entries, n, P, (qubit,))
    return _dm(rho)
