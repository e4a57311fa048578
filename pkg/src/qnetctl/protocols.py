"""Gate-level network operations run on the exact kernel.

These are the ground truth for the scalar fidelity formulas in
:mod:`qnetctl.fidelity`.  The canonical entangled pair is |Phi+>, whose two
halves always give equal Z outcomes.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import kernel as k
from .kernel import CNOT, H, X, Z, DensityMatrix, MeasurementBasis, StateVector


class ProtocolError(RuntimeError):
    pass


class BsmOutcome(NamedTuple):
    bit1: int
    bit2: int


@functools.lru_cache(maxsize=None)
def bsm_gates(qa: int, qb: int) -> tuple[k.Gate, ...]:
    return (CNOT(qa, qb), H(qa))


def bsm(state: StateVector, qa: int, qb: int, rng: np.random.Generator) -> tuple[BsmOutcome, StateVector]:
    """Bell-state measurement: CNOT(qa -> qb), H(qa), then Z on both."""
    if qa == qb:
        raise k.KernelError("BSM needs two distinct qubits")
    state = k.apply_gates(state, bsm_gates(qa, qb))
    b1, state = k.measure(state, qa, k.Z_BASIS, rng)
    b2, state = k.measure(state, qb, k.Z_BASIS, rng)
    return BsmOutcome(b1, b2), state


@functools.lru_cache(maxsize=None)
def correction_gates(outcome: BsmOutcome, qubit: int) -> tuple[k.Gate, ...]:
    """Pauli fix-up for the far qubit: X if bit2, then Z if bit1."""
    gates = []
    if outcome.bit2:
        gates.append(X(qubit))
    if outcome.bit1:
        gates.append(Z(qubit))
    return tuple(gates)


# -- entanglement swapping -----------------------------------------------------

# Pairs (0,1) and (2,3) are created from |0000>; the repeater holds 1 and 2.
SWAP_PREP = {
    "a": (H(0), H(3)),
    "b": (CNOT(0, 1), CNOT(3, 2)),
    "c": bsm_gates(1, 2),
}


def swap_circuit_states() -> dict[str, StateVector]:
    """Register after each deterministic stage of the swap circuit."""
    state = k.new_register(4)
    out = {}
    for step, gates in SWAP_PREP.items():
        state = k.apply_gates(state, gates)
        out[step] = state
    return out


def swap_branch(outcome: BsmOutcome) -> tuple[float, StateVector]:
    """Probability and corrected final state for one BSM outcome."""
    state = swap_circuit_states()["c"]
    p1, state = k.postselect(state, 1, outcome.bit1)
    p2, state = k.postselect(state, 2, outcome.bit2)
    return p1 * p2, k.apply_gates(state, correction_gates(outcome, 3))


def swap_step_tables() -> dict[str, np.ndarray]:
    """Basis-state probabilities after steps a-d, averaged over BSM outcomes at d."""
    tables = {step: s.probabilities() for step, s in swap_circuit_states().items()}
    final = np.zeros(16)
    for b1 in (0, 1):
        for b2 in (0, 1):
            p, state = swap_branch(BsmOutcome(b1, b2))
            final += p * state.probabilities()
    tables["d"] = final
    return tables


def entanglement_swap(rng: np.random.Generator, _prepared: StateVector | None = None) -> tuple[StateVector, BsmOutcome]:
    """Run the four-qubit swap circuit once; qubits 0 and 3 end in |Phi+>."""
    state = _prepared if _prepared is not None else swap_circuit_states()["b"]
    outcome, state = bsm(state, 1, 2, rng)
    return k.apply_gates(state, correction_gates(outcome, 3)), outcome


@dataclass
class SwapShots:
    shots: int
    equal: int
    outcome_counts: dict[BsmOutcome, int]

    @property
    def equal_rate(self) -> float:
        return self.equal / self.shots


def run_swap_circuit(shots: int, rng: np.random.Generator) -> SwapShots:
    """Repeat the swap circuit and read qubits 0 and 3 in Z each time."""
    if shots < 1:
        raise ProtocolError("shots must be positive")
    prepared = swap_circuit_states()["b"]
    counts = {BsmOutcome(a, b): 0 for a in (0, 1) for b in (0, 1)}
    equal = 0
    for _ in range(shots):
        state, outcome = entanglement_swap(rng, prepared)
        counts[outcome] += 1
        m0, state = k.measure(state, 0, k.Z_BASIS, rng)
        m3, _ = k.measure(state, 3, k.Z_BASIS, rng)
        equal += m0 == m3
    return SwapShots(shots, equal, counts)


# -- teleportation -------------------------------------------------------------
# qubit 0 carries the input, (1, 2) is the fresh Bell pair, qubit 2 is the output.


def _teleport_register(input_state: StateVector) -> StateVector:
    if not isinstance(input_state, StateVector) or input_state.num_qubits != 1:
        raise k.KernelError("teleport takes a single-qubit StateVector")
    norm = float(np.linalg.norm(input_state.amplitudes))
    if abs(norm - 1) > k.STATE_ATOL:
        raise k.KernelError(f"input state is not normalized (norm={norm})")
    return k.tensor(input_state, k.make_bell_pair())


def _extract_qubit(state: StateVector, qubit: int, fixed_bits: dict[int, int]) -> StateVector:
    # other qubits are already collapsed to the given computational values
    base = sum(bit << q for q, bit in fixed_bits.items())
    amps = state.amplitudes[[base, base | (1 << qubit)]]
    return StateVector(amps, normalize=True)


def teleport_precorrection_state(input_state: StateVector) -> DensityMatrix:
    """Receiver's reduced state after the BSM but before hearing the bits."""
    state = k.apply_gates(_teleport_register(input_state), bsm_gates(0, 1))
    return k.reduced_state(state, [2])


def teleport_branch(input_state: StateVector, outcome: BsmOutcome) -> tuple[float, StateVector, StateVector]:
    """Forced-outcome teleportation: ``(probability, output, source_after)``."""
    state = k.apply_gates(_teleport_register(input_state), bsm_gates(0, 1))
    p1, state = k.postselect(state, 0, outcome.bit1)
    p2, state = k.postselect(state, 1, outcome.bit2)
    state = k.apply_gates(state, correction_gates(outcome, 2))
    output = _extract_qubit(state, 2, {0: outcome.bit1, 1: outcome.bit2})
    source = k.basis_state(str(outcome.bit1))
    return p1 * p2, output, source


def teleport(input_state: StateVector, rng: np.random.Generator) -> tuple[StateVector, BsmOutcome]:
    """Move ``input_state`` onto the far half of a fresh Bell pair.

    The source qubit is consumed: it ends in the computational state given by
    the first BSM bit.
    """
    state = _teleport_register(input_state)
    outcome, state = bsm(state, 0, 1, rng)
    state = k.apply_gates(state, correction_gates(outcome, 2))
    return _extract_qubit(state, 2, {0: outcome.bit1, 1: outcome.bit2}), outcome


# -- E91 -----------------------------------------------------------------------

EAVESDROPPERS = ("none", "intercept_resend")


@dataclass
class E91Config:
    n: int
    basis_set: Sequence[MeasurementBasis] = (k.Z_BASIS, k.X_BASIS)
    test_fraction: float = 0.2
    abort_threshold: float = 0.05
    eavesdropper: str = "none"

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ProtocolError(f"n must be a positive integer, got {self.n}")
        if not 0 < self.test_fraction < 1:
            raise ProtocolError(f"test_fraction must be in (0, 1), got {self.test_fraction}")
        if not 0 <= self.abort_threshold < 1:
            raise ProtocolError(f"abort_threshold must be in [0, 1), got {self.abort_threshold}")
        if self.eavesdropper not in EAVESDROPPERS:
            raise ProtocolError(f"eavesdropper must be one of {EAVESDROPPERS}")
        self.basis_set = tuple(k._as_basis(b) for b in self.basis_set)
        if not self.basis_set:
            raise ProtocolError("basis_set must not be empty")


@dataclass
class E91Result:
    key_alice: np.ndarray
    key_bob: np.ndarray
    qber_estimate: float
    aborted: bool
    sifted_count: int
    tested_count: int
    extras: dict = field(default_factory=dict, repr=False)


def _clean(probs: np.ndarray) -> np.ndarray:
    probs = np.where(probs < k.MATRIX_ATOL, 0.0, probs)
    return probs / probs.sum()


def e91_outcome_table(cfg: E91Config, channel_fidelity: float) -> np.ndarray:
    """Exact joint outcome probabilities per basis choice.

    Indexed ``[alice_basis, bob_basis, eve_basis, alice_bit * 2 + bob_bit]``.
    Eve's axis has length 1 when there is no eavesdropper.  Alice holds qubit
    0, Bob qubit 1; Eve measures Bob's qubit in flight and forwards the
    collapsed qubit.
    """
    if channel_fidelity == 1:
        pair = k.make_bell_pair().to_density()
    else:
        pair = k.make_werner(channel_fidelity)
    bases = cfg.basis_set
    eve = bases if cfg.eavesdropper == "intercept_resend" else (None,)
    table = np.zeros((len(bases), len(bases), len(eve), 4))
    for ie, be in enumerate(eve):
        if be is None:
            branches = [(1.0, pair)]
        else:
            branches = [k.dm_postselect(pair, 1, e, be) for e in (0, 1)]
        for ia, ba in enumerate(bases):
            for ib, bb in enumerate(bases):
                probs = np.zeros(4)
                for pe, rho in branches:
                    if rho is None:
                        continue
                    for a in (0, 1):
                        pa, rho_a = k.dm_postselect(rho, 0, a, ba)
                        if rho_a is None:
                            continue
                        p0, p1 = k.dm_born_probabilities(rho_a, 1, bb)
                        probs[2 * a] += pe * pa * p0
                        probs[2 * a + 1] += pe * pa * p1
                table[ia, ib, ie] = _clean(probs)
    return table


def e91_run(cfg: E91Config, channel_fidelity: float, rng: np.random.Generator) -> E91Result:
    """Simulate an entanglement-based key exchange of ``cfg.n`` rounds.

    Both sides announce every basis; same-basis rounds are sifted, a random
    ``test_fraction`` of them is disclosed to estimate the error rate, and the
    rest form the key unless the estimate exceeds ``abort_threshold``.
    """
    if not 0.25 <= channel_fidelity <= 1:
        raise k.KernelError(f"channel_fidelity must be in [1/4, 1], got {channel_fidelity}")
    table = e91_outcome_table(cfg, channel_fidelity)
    nb, n = len(cfg.basis_set), int(cfg.n)
    basis_a = rng.integers(nb, size=n)
    basis_b = rng.integers(nb, size=n)
    basis_e = rng.integers(table.shape[2], size=n) if table.shape[2] > 1 else np.zeros(n, dtype=int)
    cdf = np.cumsum(table[basis_a, basis_b, basis_e], axis=1)
    u = rng.random(n)
    joint = np.minimum((u[:, None] >= cdf[:, :3]).sum(axis=1), 3)
    bits_a = (joint >> 1).astype(np.uint8)
    bits_b = (joint & 1).astype(np.uint8)

    sifted = np.flatnonzero(basis_a == basis_b)
    tested_count = int(round(cfg.test_fraction * sifted.size))
    if tested_count < 1 or tested_count >= sifted.size:
        raise ProtocolError(
            f"{sifted.size} sifted rounds cannot supply a test subset at fraction {cfg.test_fraction}"
        )
    tested = np.sort(rng.choice(sifted, size=tested_count, replace=False))
    qber = float(np.count_nonzero(bits_a[tested] != bits_b[tested])) / tested_count
    aborted = qber > cfg.abort_threshold
    keep = np.setdiff1d(sifted, tested, assume_unique=True)
    if aborted:
        key_a = key_b = np.zeros(0, dtype=np.uint8)
    else:
        key_a, key_b = bits_a[keep], bits_b[keep]
    sifted_errors = int(np.count_nonzero(bits_a[sifted] != bits_b[sifted]))
    return E91Result(
        key_alice=key_a,
        key_bob=key_b,
        qber_estimate=qber,
        aborted=aborted,
        sifted_count=int(sifted.size),
        tested_count=tested_count,
        extras={"sifted_error_rate": sifted_errors / sifted.size},
    )


# -- distillation and oracle routes --------------------------------------------


def _werner_fidelity(dm: DensityMatrix) -> float:
    F = k.fidelity_to_bell(dm)
    if not 0.25 - k.STATE_ATOL <= F <= 1 + k.STATE_ATOL:
        raise k.KernelError(f"not a Werner state (fidelity {F})")
    if np.abs(dm.entries - k.make_werner(min(max(F, 0.25), 1.0)).entries).max() > k.STATE_ATOL:
        raise k.KernelError("input is not a Werner state")
    return F


def bbpssw_exact(pair1: DensityMatrix, pair2: DensityMatrix) -> tuple[float, DensityMatrix]:
    """Success probability and (un-twirled) surviving pair of one BBPSSW round.

    ``pair1`` is kept on qubits (0, 1) and ``pair2`` sacrificed on (2, 3);
    one side holds 0 and 2, the other 1 and 3.
    """
    for dm in (pair1, pair2):
        if dm.num_qubits != 2:
            raise k.KernelError("BBPSSW takes two-qubit pairs")
    rho = k.tensor_dm(pair1, pair2)
    rho = k.dm_apply(rho, CNOT(0, 2))
    rho = k.dm_apply(rho, CNOT(1, 3))
    total = np.zeros((4, 4), dtype=complex)
    p_success = 0.0
    for bit in (0, 1):
        p2, post = k.dm_postselect(rho, 2, bit)
        if post is None:
            continue
        p3, post = k.dm_postselect(post, 3, bit)
        if post is None:
            continue
        p = p2 * p3
        p_success += p
        total += p * k.partial_trace(post, [0, 1]).entries
    return p_success, DensityMatrix(total / p_success)


def twirl(dm: DensityMatrix) -> DensityMatrix:
    """Project a two-qubit state onto the Werner family, keeping its fidelity."""
    return k.make_werner(min(max(k.fidelity_to_bell(dm), 0.25), 1.0))


def distill_bbpssw(pair1: DensityMatrix, pair2: DensityMatrix, rng: np.random.Generator) -> tuple[bool, DensityMatrix | None]:
    """Sampled BBPSSW round; on success returns the twirled surviving pair."""
    _werner_fidelity(pair1)
    _werner_fidelity(pair2)
    rho = k.tensor_dm(pair1, pair2)
    rho = k.dm_apply(rho, CNOT(0, 2))
    rho = k.dm_apply(rho, CNOT(1, 3))
    m2, rho = k.dm_measure(rho, 2, k.Z_BASIS, rng)
    m3, rho = k.dm_measure(rho, 3, k.Z_BASIS, rng)
    if m2 != m3:
        return False, None
    return True, twirl(k.partial_trace(rho, [0, 1]))


def swap_werner_pairs(pair1: DensityMatrix, pair2: DensityMatrix) -> DensityMatrix:
    """Corrected end-to-end state of a swap, averaged over BSM outcomes.

    ``pair1`` sits on qubits (0, 1), ``pair2`` on (2, 3); the BSM acts on 1 and
    2 and the result is the reduced state of (0, 3).
    """
    rho = k.tensor_dm(pair1, pair2)
    for g in bsm_gates(1, 2):
        rho = k.dm_apply(rho, g)
    out = np.zeros((4, 4), dtype=complex)
    for b1 in (0, 1):
        for b2 in (0, 1):
            p1, post = k.dm_postselect(rho, 1, b1)
            if post is None:
                continue
            p2, post = k.dm_postselect(post, 2, b2)
            if post is None:
                continue
            for g in correction_gates(BsmOutcome(b1, b2), 3):
                post = k.dm_apply(post, g)
            out += p1 * p2 * k.partial_trace(post, [0, 3]).entries
    return DensityMatrix(out)


def depolarize_pair(pair: DensityMatrix, elapsed: float, coherence_time: float) -> DensityMatrix:
    """Independent single-qubit depolarizing noise on both halves of a pair.

    Each qubit keeps its state with weight ``exp(-elapsed / (2 T))``, so a
    Werner pair's distance from I/4 shrinks by ``exp(-elapsed / T)``.
    """
    keep = math.exp(-elapsed / (2 * coherence_time)) if math.isfinite(coherence_time) else 1.0
    rho = pair
    for q in range(pair.num_qubits):
        rho = k.dm_depolarize(rho, q, keep)
    return rho
