import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_network
from qnetctl.config import load_config
from qnetctl.fidelity import LLE
from qnetctl.netsim import EMPTY, EnumerationBudgetError, SlotState, edge_key, run, validate_configuration
from qnetctl.policies import GreedyPolicy, MaxWeightPolicy, RandomPolicy, make_policy


def state_with(lle_edges, queues):
    lles = {i: LLE(i, edge_key(u, v), 0) for i, (u, v) in enumerate(lle_edges)}
    return SlotState(0, lles, dict(queues), len(lles))


FULL = [("A", "S"), ("S", "B"), ("S", "C")]


@pytest.fixture
def two_links():
    # commodities 1 (A-B) and 2 (C-D) on disjoint links
    return make_network(["A", "B", "C", "D"], [("A", "B", 1), ("C", "D", 1)], [(1, "A", "B", 0.1), (2, "C", "D", 0.1)])


@pytest.mark.parametrize("policy", [GreedyPolicy(), RandomPolicy(), MaxWeightPolicy()])
def test_no_lles_gives_empty(policy, triangle_contention):
    assert policy.decide(state_with([], {1: 3, 2: 3}), triangle_contention, np.random.default_rng(0)) == EMPTY


def test_random_forced_choice(line2):
    state = state_with([("A", "R"), ("R", "B")], {1: 1})
    policy = RandomPolicy()
    picks = {policy.decide(state, line2, np.random.default_rng(s)) for s in range(30)}
    assert len(picks) == 1 and len(next(iter(picks))) == 1


def test_random_symmetric_split(triangle_contention):
    state = state_with(FULL, {1: 1, 2: 1})
    rng = np.random.default_rng(2024)
    policy = RandomPolicy()
    firsts = [policy.decide(state, triangle_contention, rng).assignments[0].commodity for _ in range(10_000)]
    assert np.mean(np.array(firsts) == 1) == pytest.approx(0.5, abs=0.02)


def test_random_falls_back_beyond_budget(triangle_contention):
    state = state_with(FULL, {1: 1, 2: 1})
    cfg = RandomPolicy(budget=1).decide(state, triangle_contention, np.random.default_rng(0))
    assert len(cfg) == 1
    assert validate_configuration(cfg, state, triangle_contention) == []


def test_greedy_longest_queue(triangle_contention):
    cfg = GreedyPolicy().decide(state_with(FULL, {1: 5, 2: 0}), triangle_contention)
    assert cfg.served() == {1: 1}
    cfg = GreedyPolicy().decide(state_with(FULL, {1: 1, 2: 4}), triangle_contention)
    assert cfg.served() == {2: 1}


def test_greedy_tie_goes_to_lower_id(triangle_contention):
    assert GreedyPolicy().decide(state_with(FULL, {1: 2, 2: 2}), triangle_contention).served() == {1: 1}


def test_greedy_serves_disjoint_commodities(two_links):
    cfg = GreedyPolicy().decide(state_with([("A", "B"), ("C", "D")], {1: 1, 2: 7}), two_links)
    assert cfg.served() == {1: 1, 2: 1}


@pytest.mark.parametrize("q2, q3, expected", [(3, 1, {2: 1}), (1, 3, {3: 1}), (2, 2, {2: 1})])
def test_greedy_fig5_contention(q2, q3, expected):
    # queues 2 and 3 both need the B-c2 link; worked out by hand
    net = load_config("fig5.json").network()
    lles = [("c1", "A"), ("A", "B"), ("B", "c2"), ("c3", "B"), ("c4", "C")]
    cfg = GreedyPolicy().decide(state_with(lles, {1: 4, 2: q2, 3: q3}), net)
    assert cfg.served() == expected


def test_greedy_prefers_shorter_path():
    net = make_network(
        ["A", "B", ("S", "switch", None), ("T", "switch", None)],
        [("A", "S", 1), ("S", "B", 1), ("A", "T", 1), ("T", "S", 1)],
        [(1, "A", "B", 0.1)],
    )
    lles = [("A", "S"), ("S", "B"), ("A", "T"), ("T", "S")]
    cfg = GreedyPolicy().decide(state_with(lles, {1: 1}), net)
    assert cfg.assignments[0].path == ("A", "S", "B")


def test_maxweight_all_queues_empty(triangle_contention):
    assert MaxWeightPolicy().decide(state_with(FULL, {1: 0, 2: 0}), triangle_contention) == EMPTY


def test_maxweight_single_commodity(line2):
    assert MaxWeightPolicy().decide(state_with([("A", "R"), ("R", "B")], {1: 1}), line2).served() == {1: 1}


@pytest.mark.parametrize("queues, winner", [((10, 1), 1), ((1, 10), 2), ((4, 4), 1)])
def test_maxweight_shared_link(triangle_contention, queues, winner):
    state = state_with(FULL, {1: queues[0], 2: queues[1]})
    assert MaxWeightPolicy().decide(state, triangle_contention).served() == {winner: 1}


def test_maxweight_budget(triangle_contention):
    state = state_with(FULL, {1: 1, 2: 1})
    with pytest.raises(EnumerationBudgetError):
        MaxWeightPolicy(budget=1).decide(state, triangle_contention)
    assert len(MaxWeightPolicy(budget=1, fallback=True).decide(state, triangle_contention)) == 1


@settings(max_examples=60, deadline=None)
@given(
    # nonzero queues of at least 5 exceed any possible service count, so scaling
    # leaves the feasible set unchanged and only the weights move
    q=st.tuples(*[st.sampled_from([0, 5, 6, 7, 9]) for _ in range(3)]),
    scale=st.integers(2, 50),
    picks=st.lists(st.sampled_from([("A", "S"), ("S", "B"), ("S", "C"), ("B", "C")]), max_size=5),
)
def test_maxweight_scale_invariant(q, scale, picks):
    net = make_network(
        ["A", ("S", "switch", None), "B", "C"],
        [("A", "S", 1), ("S", "B", 1), ("S", "C", 1), ("B", "C", 1)],
        [(1, "A", "B", 0.1), (2, "A", "C", 0.1), (3, "B", "C", 0.1)],
    )
    base = MaxWeightPolicy().decide(state_with(picks, dict(zip((1, 2, 3), q))), net)
    scaled = MaxWeightPolicy().decide(state_with(picks, {c: scale * x for c, x in zip((1, 2, 3), q)}), net)
    assert [(a.commodity, a.path) for a in base.assignments] == [(a.commodity, a.path) for a in scaled.assignments]


def test_make_policy():
    assert isinstance(make_policy("maxweight", fallback=True), MaxWeightPolicy)
    with pytest.raises(ValueError):
        make_policy("fifo")
    with pytest.raises(TypeError):
        make_policy("greedy", budget=3)


@pytest.mark.parametrize("name", ["random", "greedy", "maxweight"])
def test_policies_never_rejected(name):
    net = load_config("line2_two.json").network()
    assert run(net, make_policy(name), 5000, seed=8).rejected == 0
