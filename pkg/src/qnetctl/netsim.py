"""Discrete-time entanglement distribution model.

Every slot runs the same phases in order: expire old link-level
entanglements (LLEs), generate new ones, draw request arrivals, ask the
policy for a service configuration, apply it, and record metrics.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator, Sequence

import networkx as nx
import numpy as np

from .fidelity import LLE, FidelityParams, chain_fidelity

DEFAULT_ENUM_BUDGET = 200_000
ROLES = ("client", "switch")


class ConfigurationError(ValueError):
    """A topology, commodity, or run parameter is invalid."""


class EnumerationBudgetError(RuntimeError):
    """Exhaustive configuration enumeration exceeded its budget; use a greedy policy."""


def edge_key(u: str, v: str) -> tuple[str, str]:
    return (u, v) if u <= v else (v, u)


@dataclass(frozen=True)
class Node:
    id: str
    role: str = "client"
    memory: int | None = None  # None means unlimited


@dataclass(frozen=True)
class Edge:
    u: str
    v: str
    p_gen: float
    F0: float = 1.0

    @property
    def key(self) -> tuple[str, str]:
        return edge_key(self.u, self.v)


def validate_topology(nodes: Sequence[Node], edges: Sequence[Edge]) -> list[str]:
    errors = []
    ids = [n.id for n in nodes]
    if len(set(ids)) != len(ids):
        errors.append("duplicate node ids")
    for n in nodes:
        if n.role not in ROLES:
            errors.append(f"node {n.id}: role must be one of {ROLES}")
        if n.memory is not None and (int(n.memory) != n.memory or n.memory < 1):
            errors.append(f"node {n.id}: memory must be a positive integer or null")
    known = set(ids)
    seen = set()
    for e in edges:
        name = f"edge {e.u}-{e.v}"
        if e.u not in known or e.v not in known:
            errors.append(f"{name}: references an unknown node")
        if e.u == e.v:
            errors.append(f"{name}: endpoints must differ")
        if not 0 <= e.p_gen <= 1:
            errors.append(f"{name}: p_gen={e.p_gen} outside [0, 1]")
        if not 0.25 <= e.F0 <= 1:
            errors.append(f"{name}: F0={e.F0} outside [1/4, 1]")
        if e.key in seen:
            errors.append(f"{name}: duplicate edge")
        seen.add(e.key)
    return errors


@dataclass(frozen=True)
class Topology:
    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))
        errors = validate_topology(self.nodes, self.edges)
        if errors:
            raise ConfigurationError("; ".join(errors))

    @property
    def node_ids(self) -> list[str]:
        return [n.id for n in self.nodes]

    def node(self, node_id: str) -> Node:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(self.node_ids)
        g.add_edges_from(e.key for e in self.edges)
        return g


@dataclass(frozen=True)
class Commodity:
    id: int
    src: str
    dst: str
    rate: float


Path = tuple[str, ...]


def path_edges(path: Sequence[str]) -> list[tuple[str, str]]:
    return [edge_key(a, b) for a, b in zip(path, path[1:])]


def path_sort_key(path: Path) -> tuple:
    return (len(path), path)


def validate_commodities(nodes: Sequence[Node], commodities: Sequence[Commodity]) -> list[str]:
    errors = []
    roles = {n.id: n.role for n in nodes}
    ids = [c.id for c in commodities]
    if len(set(ids)) != len(ids):
        errors.append("duplicate commodity ids")
    for c in commodities:
        name = f"commodity {c.id}"
        for end in (c.src, c.dst):
            if end not in roles:
                errors.append(f"{name}: unknown node {end}")
            elif roles[end] != "client":
                errors.append(f"{name}: endpoint {end} is not a client")
        if c.src == c.dst:
            errors.append(f"{name}: src and dst must differ")
        if not 0 <= c.rate <= 1:
            errors.append(f"{name}: rate={c.rate} outside [0, 1]")
    return errors


class Network:
    """Topology, commodities and link parameters, with candidate paths resolved."""

    def __init__(
        self,
        topology: Topology,
        commodities: Sequence[Commodity],
        params: FidelityParams,
        max_path_hops: int = 6,
    ):
        self.topology = topology
        self.commodities = tuple(sorted(commodities, key=lambda c: c.id))
        self.params = params
        self.max_path_hops = max_path_hops
        errors = validate_commodities(topology.nodes, self.commodities)
        if int(max_path_hops) != max_path_hops or max_path_hops < 1:
            errors.append("max_path_hops must be a positive integer")
        if errors:
            raise ConfigurationError("; ".join(errors))
        self.edges = topology.edges
        self.edge_index = {e.key: i for i, e in enumerate(self.edges)}
        self.commodity_ids = [c.id for c in self.commodities]
        self.commodity_index = {c.id: i for i, c in enumerate(self.commodities)}
        caps = {n.id: (math.inf if n.memory is None else n.memory) for n in topology.nodes}
        self.memory = caps
        g = topology.graph()
        self.candidate_paths: dict[int, list[Path]] = {}
        for c in self.commodities:
            paths = [tuple(p) for p in nx.all_simple_paths(g, c.src, c.dst, cutoff=max_path_hops)]
            self.candidate_paths[c.id] = sorted(paths, key=path_sort_key)
        self._enum_cache: dict = {}

    def with_rates(self, rates: Sequence[float]) -> "Network":
        """Copy with new arrival rates, in commodity-id order."""
        commodities = [replace(c, rate=float(r)) for c, r in zip(self.commodities, rates)]
        return Network(self.topology, commodities, self.params, self.max_path_hops)


@dataclass(frozen=True)
class Assignment:
    commodity: int
    path: Path
    lle_ids: tuple[int, ...]

    def sort_key(self) -> tuple:
        return (self.commodity, len(self.path), self.path)


@dataclass(frozen=True)
class ServiceConfiguration:
    assignments: tuple[Assignment, ...] = ()

    def __post_init__(self):
        ordered = tuple(sorted(self.assignments, key=Assignment.sort_key))
        object.__setattr__(self, "assignments", ordered)

    def __len__(self):
        return len(self.assignments)

    def sort_key(self) -> tuple:
        return tuple(a.sort_key() for a in self.assignments)

    def served(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for a in self.assignments:
            out[a.commodity] = out.get(a.commodity, 0) + 1
        return out

    def lle_ids(self) -> list[int]:
        return [i for a in self.assignments for i in a.lle_ids]


EMPTY = ServiceConfiguration()


@dataclass
class SlotState:
    """Network state at a slot boundary.

    ``slot`` is the index of the next slot to run; ``queues`` is keyed by
    commodity id.
    """

    slot: int
    lles: dict[int, LLE]
    queues: dict[int, int]
    next_lle_id: int = 0

    @classmethod
    def initial(cls, network: Network) -> "SlotState":
        return cls(0, {}, {c: 0 for c in network.commodity_ids}, 0)

    def copy(self) -> "SlotState":
        return SlotState(self.slot, dict(self.lles), dict(self.queues), self.next_lle_id)

    def endpoint_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for lle in self.lles.values():
            for node in lle.edge:
                counts[node] = counts.get(node, 0) + 1
        return counts


# -- feasibility ---------------------------------------------------------------


def _available(state: SlotState, network: Network) -> dict[tuple[str, str], list[int]]:
    """Live LLE ids per edge, best fidelity first, then oldest id."""
    slot, params = state.slot, network.params
    per_edge: dict[tuple[str, str], list[tuple[float, int]]] = {}
    for lle in state.lles.values():
        per_edge.setdefault(lle.edge, []).append((-lle.fidelity(slot, params), lle.id))
    return {e: [i for _, i in sorted(v)] for e, v in per_edge.items()}


def _options(state: SlotState, network: Network, avail) -> list[tuple[int, Path, list[tuple[str, str]]]]:
    options = []
    for c in network.commodities:
        if state.queues.get(c.id, 0) <= 0:
            continue
        for path in network.candidate_paths[c.id]:
            edges = path_edges(path)
            if all(e in avail for e in edges):
                options.append((c.id, path, edges))
    return options


def _enumerate_multisets(options, edge_caps, queue_caps, budget, fidelity_ok=None):
    """All maximal multisets of options (as sorted index tuples) within capacity."""
    n = len(options)
    used_edges = {e: 0 for e in edge_caps}
    used_comm = {c: 0 for c in queue_caps}
    chosen: list[int] = []
    results: list[tuple[int, ...]] = []
    visited = 0

    def addable(j):
        c, _, edges = options[j]
        if used_comm[c] >= queue_caps[c]:
            return False
        need: dict = {}
        for e in edges:
            need[e] = need.get(e, 0) + 1
            if used_edges[e] + need[e] > edge_caps[e]:
                return False
        return fidelity_ok is None or fidelity_ok(j, used_edges)

    def push(j, sign):
        c, _, edges = options[j]
        used_comm[c] += sign
        for e in edges:
            used_edges[e] += sign

    def dfs(start):
        nonlocal visited
        visited += 1
        if visited > budget:
            raise EnumerationBudgetError(
                f"configuration enumeration exceeded budget {budget}; use a greedy policy"
            )
        extended = False
        for j in range(start, n):
            if addable(j):
                chosen.append(j)
                push(j, 1)
                dfs(j)
                push(j, -1)
                chosen.pop()
        # maximal only if nothing at all can be added (including lower indices)
        for j in range(n):
            if addable(j):
                extended = True
                break
        if not extended:
            results.append(tuple(chosen))

    dfs(0)
    return results


def _materialize(index_sets, options, avail) -> list[ServiceConfiguration]:
    configs = []
    for idx in index_sets:
        taken = {e: 0 for e in avail}
        assignments = []
        for j in idx:
            c, path, edges = options[j]
            ids = []
            for e in edges:
                ids.append(avail[e][taken[e]])
                taken[e] += 1
            assignments.append(Assignment(c, path, tuple(ids)))
        configs.append(ServiceConfiguration(tuple(assignments)))
    configs.sort(key=ServiceConfiguration.sort_key)
    return configs


def feasible_configurations(
    state: SlotState, network: Network, budget: int = DEFAULT_ENUM_BUDGET
) -> list[ServiceConfiguration]:
    """Every maximal feasible service configuration for the current slot.

    Each LLE serves at most one request and each commodity is served at most
    as many times as it has queued requests.  Several LLEs on one edge are
    interchangeable for feasibility; the configuration draws them best
    fidelity first.  Results are sorted by (commodity id, path length, path).
    """
    avail = _available(state, network)
    options = _options(state, network, avail)
    if not options:
        return [EMPTY]
    edge_caps = {e: len(v) for e, v in avail.items()}
    queue_caps = {c: min(q, sum(edge_caps.values())) for c, q in state.queues.items()}
    threshold = network.params.min_service_fidelity
    fidelity_ok = None
    if threshold is not None:
        slot, params = state.slot, network.params

        def fidelity_ok(j, used_edges):
            need: dict = {}
            fids = []
            for e in options[j][2]:
                fids.append(state.lles[avail[e][used_edges[e] + need.get(e, 0)]].fidelity(slot, params))
                need[e] = need.get(e, 0) + 1
            return chain_fidelity(fids) >= threshold

        index_sets = _enumerate_multisets(options, edge_caps, queue_caps, budget, fidelity_ok)
    else:
        key = (
            tuple(sorted(edge_caps.items())),
            tuple(sorted(queue_caps.items())),
            tuple((c, p) for c, p, _ in options),
        )
        index_sets = network._enum_cache.get(key)
        if index_sets is None:
            index_sets = _enumerate_multisets(options, edge_caps, queue_caps, budget)
            if len(network._enum_cache) < 4096:
                network._enum_cache[key] = index_sets
    return _materialize(index_sets, options, avail)


def validate_configuration(config: ServiceConfiguration, state: SlotState, network: Network) -> list[str]:
    """Reasons ``config`` cannot be executed in ``state`` (empty when valid)."""
    problems = []
    seen: set[int] = set()
    served: dict[int, int] = {}
    commodities = {c.id: c for c in network.commodities}
    threshold = network.params.min_service_fidelity
    for a in config.assignments:
        c = commodities.get(a.commodity)
        if c is None:
            problems.append(f"unknown commodity {a.commodity}")
            continue
        if len(a.path) < 2 or a.path[0] != c.src or a.path[-1] != c.dst:
            problems.append(f"commodity {c.id}: path {a.path} does not join {c.src} and {c.dst}")
            continue
        if len(set(a.path)) != len(a.path):
            problems.append(f"commodity {c.id}: path {a.path} is not simple")
        edges = path_edges(a.path)
        if len(a.lle_ids) != len(edges):
            problems.append(f"commodity {c.id}: {len(a.lle_ids)} LLEs for {len(edges)} hops")
            continue
        for e, i in zip(edges, a.lle_ids):
            lle = state.lles.get(i)
            if lle is None:
                problems.append(f"LLE {i} is not live")
            elif lle.edge != e:
                problems.append(f"LLE {i} lies on {lle.edge}, not {e}")
            if i in seen:
                problems.append(f"LLE {i} assigned twice")
            seen.add(i)
        served[c.id] = served.get(c.id, 0) + 1
        if threshold is not None and all(i in state.lles for i in a.lle_ids):
            F = chain_fidelity(state.lles[i].fidelity(state.slot, network.params) for i in a.lle_ids)
            if F < threshold:
                problems.append(f"commodity {c.id}: fidelity {F:.6f} below threshold")
    for cid, n in served.items():
        if n > state.queues.get(cid, 0):
            problems.append(f"commodity {cid}: {n} services exceed queue {state.queues.get(cid, 0)}")
    return problems


# -- slot dynamics -------------------------------------------------------------


@dataclass
class SlotRecord:
    slot: int
    queues: list[int]
    arrivals: list[int]
    served: list[int]
    generated: int
    expired: int
    consumed: int
    live: int
    rejected: bool
    fidelities: list[float] = field(default_factory=list)


def step(
    state: SlotState,
    policy,
    network: Network,
    rng: np.random.Generator,
    policy_rng: np.random.Generator | None = None,
) -> tuple[SlotState, SlotRecord]:
    """Advance one slot.  ``state`` is left untouched."""
    t = state.slot
    params = network.params
    lles = dict(state.lles)

    # 1. expire
    cutoff = params.cutoff_age
    expired = [i for i, lle in lles.items() if t - lle.created_slot >= cutoff]
    for i in expired:
        del lles[i]

    # 2. generate, at most one per edge, within node memory
    draws = rng.random(len(network.edges))
    counts: dict[str, int] = {}
    for lle in lles.values():
        for node in lle.edge:
            counts[node] = counts.get(node, 0) + 1
    next_id = state.next_lle_id
    generated = 0
    memory = network.memory
    for e, u in zip(network.edges, draws):
        if u < e.p_gen:
            a, b = e.key
            if counts.get(a, 0) < memory[a] and counts.get(b, 0) < memory[b]:
                lles[next_id] = LLE(next_id, e.key, t, e.F0)
                counts[a] = counts.get(a, 0) + 1
                counts[b] = counts.get(b, 0) + 1
                next_id += 1
                generated += 1

    # 3. arrivals
    draws = rng.random(len(network.commodities))
    arrivals = [int(u < c.rate) for c, u in zip(network.commodities, draws)]
    queues = dict(state.queues)
    for c, a in zip(network.commodities, arrivals):
        queues[c.id] += a

    # 4. decide
    view = SlotState(t, lles, queues, next_id)
    config = policy.decide(view, network, policy_rng)

    # 5. serve
    rejected = bool(validate_configuration(config, view, network))
    served = [0] * len(network.commodities)
    fidelities = []
    consumed = 0
    if not rejected:
        for a in config.assignments:
            fids = [lles[i].fidelity(t, params) for i in a.lle_ids]
            for i in a.lle_ids:
                del lles[i]
            consumed += len(a.lle_ids)
            queues[a.commodity] -= 1
            served[network.commodity_index[a.commodity]] += 1
            fidelities.append(chain_fidelity(fids))

    new_state = SlotState(t + 1, lles, queues, next_id)
    record = SlotRecord(
        slot=t,
        queues=[queues[c] for c in network.commodity_ids],
        arrivals=arrivals,
        served=served,
        generated=generated,
        expired=len(expired),
        consumed=consumed,
        live=len(lles),
        rejected=rejected,
        fidelities=fidelities,
    )
    return new_state, record


def rng_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent simulation and policy streams derived from one seed."""
    sim, pol = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(sim), np.random.default_rng(pol)


def iter_run(network: Network, policy, horizon: int, seed: int) -> Iterator[tuple[SlotState, SlotRecord]]:
    if int(horizon) != horizon or horizon < 1:
        raise ConfigurationError(f"horizon must be a positive integer, got {horizon}")
    sim_rng, policy_rng = rng_streams(seed)
    state = SlotState.initial(network)
    for _ in range(int(horizon)):
        state, record = step(state, policy, network, sim_rng, policy_rng)
        yield state, record


def run(
    network: Network,
    policy,
    horizon: int,
    seed: int,
    observer: Callable[[SlotState, SlotRecord], None] | None = None,
) -> "Metrics":
    """Run ``horizon`` slots from the empty state and collect metrics."""
    metrics = Metrics(network.commodity_ids)
    for state, record in iter_run(network, policy, horizon, seed):
        if observer is not None:
            observer(state, record)
        metrics.append(record)
    return metrics


# -- metrics -------------------------------------------------------------------

METRICS_SCHEMA_VERSION = 1


class Metrics:
    """Per-slot time series of one run.

    CSV columns, in order: ``slot``; then for each commodity id ``c``
    ``queue_<c>``, ``arrivals_<c>``, ``served_<c>``; then ``lles_generated``,
    ``lles_expired``, ``lles_consumed``, ``lles_live``, ``rejected``,
    ``mean_fidelity`` (empty when nothing was delivered that slot).
    """

    def __init__(self, commodity_ids: Sequence[int]):
        self.commodity_ids = list(commodity_ids)
        self.records: list[SlotRecord] = []

    def append(self, record: SlotRecord) -> None:
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def columns(self) -> list[str]:
        cols = ["slot"]
        for c in self.commodity_ids:
            cols += [f"queue_{c}", f"arrivals_{c}", f"served_{c}"]
        return cols + ["lles_generated", "lles_expired", "lles_consumed", "lles_live", "rejected", "mean_fidelity"]

    def queues(self) -> np.ndarray:
        return np.array([r.queues for r in self.records], dtype=np.int64).reshape(len(self.records), -1)

    def arrivals(self) -> np.ndarray:
        return np.array([r.arrivals for r in self.records], dtype=np.int64).reshape(len(self.records), -1)

    def served(self) -> np.ndarray:
        return np.array([r.served for r in self.records], dtype=np.int64).reshape(len(self.records), -1)

    def total_queue(self) -> np.ndarray:
        return self.queues().sum(axis=1)

    @property
    def rejected(self) -> int:
        return sum(r.rejected for r in self.records)

    def delivered_fidelities(self) -> list[float]:
        return [f for r in self.records for f in r.fidelities]

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(self.columns())
        for r in self.records:
            row = [r.slot]
            for q, a, s in zip(r.queues, r.arrivals, r.served):
                row += [q, a, s]
            mean_f = f"{sum(r.fidelities) / len(r.fidelities):.12g}" if r.fidelities else ""
            row += [r.generated, r.expired, r.consumed, r.live, int(r.rejected), mean_f]
            w.writerow(row)

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()

    def summary(self) -> dict:
        n = len(self.records)
        arrivals = self.arrivals().sum(axis=0)
        served = self.served().sum(axis=0)
        queues = self.queues()
        fids = self.delivered_fidelities()
        per_commodity = {}
        for i, c in enumerate(self.commodity_ids):
            per_commodity[str(c)] = {
                "arrivals": int(arrivals[i]),
                "served": int(served[i]),
                "final_queue": int(queues[-1, i]) if n else 0,
                "mean_queue": round(float(queues[:, i].mean()), 9) if n else 0.0,
                "throughput": round(float(served[i]) / n, 9) if n else 0.0,
            }
        return {
            "schema_version": METRICS_SCHEMA_VERSION,
            "slots": n,
            "commodities": per_commodity,
            "lles_generated": sum(r.generated for r in self.records),
            "lles_expired": sum(r.expired for r in self.records),
            "lles_consumed": sum(r.consumed for r in self.records),
            "rejected_decisions": self.rejected,
            "delivered": len(fids),
            "mean_delivered_fidelity": round(sum(fids) / len(fids), 12) if fids else None,
        }
