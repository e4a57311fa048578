"""Controllers that choose which requests to serve each slot."""
from __future__ import annotations

import numpy as np

from .netsim import (
    DEFAULT_ENUM_BUDGET,
    EMPTY,
    Assignment,
    EnumerationBudgetError,
    Network,
    ServiceConfiguration,
    SlotState,
    _available,
    feasible_configurations,
    path_edges,
)
from .fidelity import chain_fidelity


class Policy:
    """Maps the current slot state to a service configuration.

    ``decide`` must return a configuration that is feasible for ``state``;
    ``rng`` is a stream owned by the policy for the whole run.
    """

    name = "policy"

    def decide(self, state: SlotState, network: Network, rng: np.random.Generator | None) -> ServiceConfiguration:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}()"


def _greedy(state, network, order_key, rng=None) -> ServiceConfiguration:
    """Add one request at a time, choosing by ``order_key`` among servable options."""
    avail = {e: list(ids) for e, ids in _available(state, network).items()}
    backlog = dict(state.queues)
    threshold = network.params.min_service_fidelity
    assignments = []
    while True:
        best = None
        for c in network.commodities:
            if backlog.get(c.id, 0) <= 0:
                continue
            for path in network.candidate_paths[c.id]:
                edges = path_edges(path)
                if not all(avail.get(e) for e in edges):
                    continue
                if threshold is not None:
                    F = chain_fidelity(
                        state.lles[avail[e][0]].fidelity(state.slot, network.params) for e in edges
                    )
                    if F < threshold:
                        continue
                key = order_key(c.id, path, backlog, rng)
                if best is None or key < best[0]:
                    best = (key, c.id, path, edges)
        if best is None:
            break
        _, cid, path, edges = best
        assignments.append(Assignment(cid, path, tuple(avail[e].pop(0) for e in edges)))
        backlog[cid] -= 1
    return ServiceConfiguration(tuple(assignments))


def _longest_queue_key(cid, path, backlog, rng):
    return (-backlog[cid], cid, len(path), path)


class GreedyPolicy(Policy):
    """Longest queue first; ties go to the lower commodity id, then the shorter path."""

    name = "greedy"

    def decide(self, state, network, rng=None):
        return _greedy(state, network, _longest_queue_key)


class RandomPolicy(Policy):
    """Uniform choice among the maximal feasible configurations.

    Falls back to a randomized greedy fill when enumeration is too large.
    """

    name = "random"

    def __init__(self, budget: int = DEFAULT_ENUM_BUDGET):
        self.budget = budget

    def decide(self, state, network, rng):
        try:
            configs = feasible_configurations(state, network, self.budget)
        except EnumerationBudgetError:
            return _greedy(state, network, lambda cid, path, backlog, r: r.random(), rng)
        if len(configs) == 1:
            return configs[0]
        return configs[int(rng.integers(len(configs)))]


class MaxWeightPolicy(Policy):
    """Serve the feasible configuration maximizing sum of queue length times services.

    Ties go to the lexicographically smallest configuration.  With
    ``fallback`` the policy degrades to longest-queue-first greedy when the
    enumeration budget is exceeded; otherwise the budget error propagates.
    """

    name = "maxweight"

    def __init__(self, budget: int = DEFAULT_ENUM_BUDGET, fallback: bool = False):
        self.budget = budget
        self.fallback = fallback

    def decide(self, state, network, rng=None):
        if not any(state.lles) or not any(state.queues.values()):
            return EMPTY
        try:
            configs = feasible_configurations(state, network, self.budget)
        except EnumerationBudgetError:
            if not self.fallback:
                raise
            return _greedy(state, network, _longest_queue_key)
        best, best_weight = EMPTY, 0
        for config in configs:
            weight = sum(state.queues[a.commodity] for a in config.assignments)
            if weight > best_weight or (
                weight == best_weight and config.sort_key() < best.sort_key()
            ):
                best, best_weight = config, weight
        return best


POLICIES = {"random": RandomPolicy, "greedy": GreedyPolicy, "maxweight": MaxWeightPolicy}


def make_policy(name: str, **params) -> Policy:
    try:
        cls = POLICIES[name]
    except KeyError:
        raise ValueError(f"unknown policy {name!r}; choose from {sorted(POLICIES)}") from None
    return cls(**params)
