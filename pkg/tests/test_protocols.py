import math

import numpy as np
import pytest

from qnetctl import kernel as k
from qnetctl import protocols as proto
from qnetctl.kernel import KernelError
from qnetctl.protocols import BsmOutcome, E91Config, ProtocolError

OUTCOMES = [BsmOutcome(a, b) for a in (0, 1) for b in (0, 1)]


def table(*indices, value):
    t = np.zeros(16)
    t[list(indices)] = value
    return t


# Hand-derived: |0000> -> H(0),H(3) -> pairs (0,1),(3,2) -> CNOT(1,2),H(1) -> measure 1,2 and fix 3.
EXPECTED_STEPS = {
    "a": table(0b0000, 0b0001, 0b1000, 0b1001, value=0.25),
    "b": table(0b0000, 0b0011, 0b1100, 0b1111, value=0.25),
    "c": table(0b0000, 0b0010, 0b0101, 0b0111, 0b1001, 0b1011, 0b1100, 0b1110, value=0.125),
    "d": table(0b0000, 0b0010, 0b0100, 0b0110, 0b1001, 0b1011, 0b1101, 0b1111, value=0.125),
}


# -- BSM -----------------------------------------------------------------------


def _bell_on(vec, n=2, qa=0, qb=1):
    # place a two-qubit vector on (qa, qb) of an n-qubit |0..0> register
    amps = np.zeros(2**n, dtype=complex)
    for idx in range(4):
        amps[((idx & 1) << qa) | ((idx >> 1) << qb)] = vec[idx]
    return k.StateVector(amps)


@pytest.mark.parametrize(
    "bell, expected",
    [(k.PHI_PLUS, (0, 0)), (k.PHI_MINUS, (1, 0)), (k.PSI_PLUS, (0, 1)), (k.PSI_MINUS, (1, 1))],
)
@pytest.mark.parametrize("placement", [(0, 1), (2, 0)])
def test_bsm_is_deterministic_on_bell_states(bell, expected, placement):
    qa, qb = placement
    psi = _bell_on(bell, 3, qa, qb)
    for seed in range(8):
        outcome, post = proto.bsm(psi, qa, qb, np.random.default_rng(seed))
        assert outcome == expected
        assert np.linalg.norm(post.amplitudes) == pytest.approx(1, abs=k.STATE_ATOL)


def test_bsm_on_product_state():
    r = np.random.default_rng(0)
    bits1 = []
    for _ in range(2000):
        outcome, _ = proto.bsm(k.new_register(2), 0, 1, r)
        assert outcome.bit2 == 0
        bits1.append(outcome.bit1)
    assert np.mean(bits1) == pytest.approx(0.5, abs=0.04)


def test_bsm_rejects_same_qubit():
    with pytest.raises(KernelError):
        proto.bsm(k.new_register(2), 1, 1, np.random.default_rng(0))


# -- swapping ------------------------------------------------------------------


@pytest.mark.parametrize("step", "abcd")
def test_swap_step_tables(step):
    np.testing.assert_allclose(proto.swap_step_tables()[step], EXPECTED_STEPS[step], atol=1e-10)


@pytest.mark.parametrize("outcome", OUTCOMES)
def test_swap_branch_leaves_outer_pair_in_phi_plus(outcome):
    p, state = proto.swap_branch(outcome)
    assert p == pytest.approx(0.25, abs=1e-12)
    outer = k.reduced_state(state, [0, 3])
    assert k.fidelity_to_bell(outer) == pytest.approx(1, abs=k.STATE_ATOL)
    for q in (1, 2):
        assert k.reduced_state(state, [q]).purity() == pytest.approx(1, abs=k.STATE_ATOL)


def test_entanglement_swap_sampled():
    r = np.random.default_rng(4)
    for _ in range(50):
        state, outcome = proto.entanglement_swap(r)
        assert k.fidelity_to_bell(k.reduced_state(state, [0, 3])) == pytest.approx(1, abs=k.STATE_ATOL)
        middle = k.reduced_state(state, [1]).entries.real
        np.testing.assert_allclose(np.diag(middle), [1 - outcome.bit1, outcome.bit1], atol=k.STATE_ATOL)


def test_single_correction_still_gives_equal_z():
    # Only the X fix on qubit 3 (from bit2) is needed for Z-basis agreement.
    state = proto.swap_circuit_states()["c"]
    for b1, b2 in OUTCOMES:
        _, post = k.postselect(state, 1, b1)
        _, post = k.postselect(post, 2, b2)
        if b2:
            post = k.apply_gate(post, k.X(3))
        probs = post.probabilities()
        unequal = sum(p for i, p in enumerate(probs) if (i & 1) != (i >> 3 & 1))
        assert unequal == pytest.approx(0, abs=1e-12)


def test_run_swap_circuit_counts():
    shots = proto.run_swap_circuit(2000, np.random.default_rng(1))
    assert shots.equal_rate == 1.0
    assert sum(shots.outcome_counts.values()) == 2000
    for n in shots.outcome_counts.values():
        assert 400 < n < 600
    with pytest.raises(ProtocolError):
        proto.run_swap_circuit(0, np.random.default_rng(1))


# -- teleportation ---------------------------------------------------------------


def random_qubit(r):
    theta, phi = r.uniform(0, math.pi), r.uniform(0, 2 * math.pi)
    return k.StateVector([math.cos(theta / 2), np.exp(1j * phi) * math.sin(theta / 2)])


def test_teleport_basis_state():
    out, _ = proto.teleport(k.basis_state("0"), np.random.default_rng(0))
    assert k.overlap(out, k.basis_state("0")) == pytest.approx(1, abs=k.STATE_ATOL)


@pytest.mark.parametrize("outcome", OUTCOMES)
def test_teleport_plus_state_every_branch(outcome):
    plus = k.StateVector([1, 1], normalize=True)
    p, out, _ = proto.teleport_branch(plus, outcome)
    assert p == pytest.approx(0.25, abs=1e-12)
    assert k.overlap(plus, out) == pytest.approx(1, abs=k.STATE_ATOL)


def test_teleport_random_states():
    r = np.random.default_rng(2024)
    for _ in range(100):
        psi = random_qubit(r)
        out, _ = proto.teleport(psi, r)
        assert k.overlap(psi, out) == pytest.approx(1, abs=k.STATE_ATOL)


def test_receiver_sees_maximally_mixed_before_correction():
    r = np.random.default_rng(8)
    for _ in range(25):
        rho = proto.teleport_precorrection_state(random_qubit(r))
        np.testing.assert_allclose(rho.entries, np.eye(2) / 2, atol=k.STATE_ATOL)


def test_teleport_does_not_copy():
    # the source qubit's reduced state after the BSM is a computational state, not the input
    psi = k.StateVector([1, 1j], normalize=True)
    state = k.apply_gates(k.tensor(psi, k.make_bell_pair()), proto.bsm_gates(0, 1))
    for outcome in OUTCOMES:
        _, post = k.postselect(state, 0, outcome.bit1)
        _, post = k.postselect(post, 1, outcome.bit2)
        source = k.reduced_state(post, [0])
        assert np.real(psi.amplitudes.conj() @ source.entries @ psi.amplitudes) == pytest.approx(0.5, abs=1e-12)
        assert source.purity() == pytest.approx(1, abs=k.STATE_ATOL)


def test_teleport_rejects_bad_input():
    with pytest.raises(KernelError):
        proto.teleport(k.new_register(2), np.random.default_rng(0))


# -- E91 -----------------------------------------------------------------------


def test_e91_config_validation():
    for bad in (dict(n=0), dict(n=10, test_fraction=0), dict(n=10, test_fraction=1),
                dict(n=10, abort_threshold=1), dict(n=10, eavesdropper="pns")):
        with pytest.raises(ProtocolError):
            E91Config(**bad)


def test_e91_outcome_table_analytic():
    ideal = proto.e91_outcome_table(E91Config(n=1), 1.0)
    np.testing.assert_allclose(ideal[0, 0, 0], [0.5, 0, 0, 0.5], atol=1e-12)
    np.testing.assert_allclose(ideal[1, 1, 0], [0.5, 0, 0, 0.5], atol=1e-12)
    np.testing.assert_allclose(ideal[0, 1, 0], [0.25] * 4, atol=1e-12)
    eve = proto.e91_outcome_table(E91Config(n=1, eavesdropper="intercept_resend"), 1.0)
    # same basis as Eve: no error; other basis: error half the time
    for ab in (0, 1):
        mismatch = eve[ab, ab, :, 1] + eve[ab, ab, :, 2]
        np.testing.assert_allclose(sorted(mismatch), [0, 0.5], atol=1e-12)


def test_e91_noisy_channel_error_rate():
    # Werner noise gives mismatch 2(1-F)/3 in either of the two bases
    t = proto.e91_outcome_table(E91Config(n=1), 0.85)
    assert t[0, 0, 0, 1] + t[0, 0, 0, 2] == pytest.approx(2 * 0.15 / 3, abs=1e-12)


def test_e91_completeness():
    result = proto.e91_run(E91Config(n=20_000, abort_threshold=0.0), 1.0, np.random.default_rng(5))
    assert result.qber_estimate == 0.0
    assert not result.aborted
    np.testing.assert_array_equal(result.key_alice, result.key_bob)
    assert len(result.key_alice) == result.sifted_count - result.tested_count


def test_e91_intercept_resend():
    cfg = E91Config(n=20_000, eavesdropper="intercept_resend")
    result = proto.e91_run(cfg, 1.0, np.random.default_rng(6))
    assert result.aborted
    assert result.qber_estimate == pytest.approx(0.25, abs=0.03)
    assert len(result.key_alice) == 0


def test_e91_seeded_reproducible():
    cfg = E91Config(n=1000)
    a = proto.e91_run(cfg, 0.9, np.random.default_rng(11))
    b = proto.e91_run(cfg, 0.9, np.random.default_rng(11))
    np.testing.assert_array_equal(a.key_alice, b.key_alice)
    assert a.qber_estimate == b.qber_estimate


def test_e91_too_small():
    with pytest.raises(ProtocolError):
        proto.e91_run(E91Config(n=2), 1.0, np.random.default_rng(0))


def test_e91_fidelity_domain():
    with pytest.raises(KernelError):
        proto.e91_run(E91Config(n=100), 0.1, np.random.default_rng(0))


# -- distillation circuit ---------------------------------------------------------


def test_distill_circuit_perfect_inputs():
    ok, out = proto.distill_bbpssw(k.make_werner(1), k.make_werner(1), np.random.default_rng(0))
    assert ok
    assert k.fidelity_to_bell(out) == pytest.approx(1, abs=k.STATE_ATOL)


def test_distill_circuit_fixed_point():
    p, rho = proto.bbpssw_exact(k.make_werner(0.25), k.make_werner(0.25))
    assert k.fidelity_to_bell(rho) == pytest.approx(0.25, abs=k.STATE_ATOL)
    assert p == pytest.approx(0.5, abs=1e-12)


def test_distill_circuit_sampling_rate():
    r = np.random.default_rng(9)
    pair = k.make_werner(0.8)
    results = [proto.distill_bbpssw(pair, pair, r) for _ in range(3000)]
    rate = np.mean([ok for ok, _ in results])
    assert rate == pytest.approx(0.7688888888888885, abs=0.025)
    for ok, out in results[:20]:
        if ok:
            assert k.fidelity_to_bell(out) == pytest.approx(0.838150289017341, abs=1e-10)


def test_distill_output_is_werner():
    r = np.random.default_rng(1)
    ok = False
    while not ok:
        ok, out = proto.distill_bbpssw(k.make_werner(0.7), k.make_werner(0.9), r)
    np.testing.assert_allclose(out.entries, k.make_werner(k.fidelity_to_bell(out)).entries, atol=1e-12)


def test_distill_rejects_non_werner():
    rho = k.new_register(2).to_density()
    with pytest.raises(KernelError):
        proto.distill_bbpssw(rho, k.make_werner(0.9), np.random.default_rng(0))
