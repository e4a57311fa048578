"""Capacity-region enumeration and simulation-based stability sweeps.

The estimator covers the memoryless regime (every LLE lives one slot), where
the set of live links is an i.i.d. draw each slot.  For each link
realization ``x`` we list the service vectors of its maximal configurations;
the region is the downward closure of the Minkowski sum over ``x`` of
``P(x) * conv{service vectors}``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError

from .fidelity import LLE
from .netsim import Network, SlotState, feasible_configurations, run

_TOL = 1e-9


class UnsupportedRegimeError(ValueError):
    pass


@dataclass
class Realization:
    present: tuple[bool, ...]
    probability: float
    services: np.ndarray  # one row per maximal configuration


@dataclass
class CapacityRegion:
    """Downward-closed convex set of sustainable arrival-rate vectors.

    ``vertices`` are the Pareto-extreme expected service vectors; the region
    is also ``{lam >= 0 : A lam <= b}`` with ``(A, b) = halfspaces``.
    """

    commodity_ids: list[int]
    vertices: np.ndarray
    halfspaces: tuple[np.ndarray, np.ndarray]
    realizations: list[Realization] = field(repr=False, default_factory=list)
    downward_closed: bool = True

    @property
    def dim(self) -> int:
        return len(self.commodity_ids)

    def contains(self, rates: Sequence[float], tol: float = _TOL) -> bool:
        lam = np.asarray(rates, dtype=float)
        if lam.shape != (self.dim,):
            raise ValueError(f"expected {self.dim} rates, got {lam.shape}")
        if (lam < -tol).any():
            return False
        A, b = self.halfspaces
        return bool((A @ lam <= b + tol).all())

    def contains_lp(self, rates: Sequence[float], tol: float = _TOL) -> bool:
        """Membership by direct linear feasibility over per-realization mixtures."""
        return membership_lp(self.realizations, rates, tol)

    def max_scale(self, direction: Sequence[float]) -> float:
        """Largest ``rho`` with ``rho * direction`` in the region."""
        d = np.asarray(direction, dtype=float)
        if (d < 0).any() or not d.any():
            raise ValueError("direction must be nonnegative and nonzero")
        A, b = self.halfspaces
        proj = A @ d
        ratios = [bi / pi for bi, pi in zip(b, proj) if pi > _TOL]
        return min(ratios) if ratios else math.inf


def membership_lp(realizations: Sequence[Realization], rates: Sequence[float], tol: float = _TOL) -> bool:
    lam = np.asarray(rates, dtype=float)
    if (lam < -tol).any():
        return False
    dim = lam.size
    blocks = [r for r in realizations if r.probability > 0]
    nvar = sum(len(r.services) for r in blocks)
    A_eq = np.zeros((len(blocks), nvar))
    A_ub = np.zeros((dim, nvar))
    col = 0
    for i, r in enumerate(blocks):
        m = len(r.services)
        A_eq[i, col:col + m] = 1
        A_ub[:, col:col + m] = -r.probability * r.services.T
        col += m
    res = linprog(
        np.zeros(nvar),
        A_ub=A_ub,
        b_ub=-(lam - tol),
        A_eq=A_eq,
        b_eq=np.ones(len(blocks)),
        bounds=(0, None),
        method="highs",
    )
    return res.status == 0


def _pareto(points: np.ndarray) -> np.ndarray:
    points = np.unique(np.round(points, 12), axis=0)
    keep = []
    for i, p in enumerate(points):
        dominated = False
        for j, q in enumerate(points):
            if i != j and (q >= p - 1e-12).all() and (q > p + 1e-12).any():
                dominated = True
                break
        if not dominated:
            keep.append(p)
    return np.array(keep)


def _closure_points(points: np.ndarray) -> np.ndarray:
    d = points.shape[1]
    out = [np.zeros(d)]
    for p in points:
        for mask in itertools.product((0, 1), repeat=d):
            out.append(p * np.array(mask))
    return np.unique(np.array(out), axis=0)


def _hull(points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pareto vertices and upper facets of the downward closure of ``points``."""
    d = points.shape[1]
    points = _pareto(points)
    active = np.flatnonzero(points.max(axis=0) > _TOL)
    A_rows, b_rows = [], []
    for c in range(d):
        if c not in active:
            row = np.zeros(d)
            row[c] = 1
            A_rows.append(row)
            b_rows.append(0.0)
    if active.size == 0:
        return np.zeros((1, d)), np.array(A_rows), np.array(b_rows)
    sub = points[:, active]
    if active.size == 1:
        top = sub[:, 0].max()
        vertices = points[np.isclose(sub[:, 0], top)][:1]
        row = np.zeros(d)
        row[active[0]] = 1
        A_rows.append(row)
        b_rows.append(float(top))
        return vertices, np.array(A_rows), np.array(b_rows)
    cloud = _closure_points(sub)
    try:
        hull = ConvexHull(cloud)
    except QhullError:
        hull = ConvexHull(cloud, qhull_options="QJ")
    facets = {}
    for eq in hull.equations:
        normal, offset = eq[:-1], -eq[-1]
        if (normal < -_TOL).any() or offset <= _TOL:
            continue
        scale = normal.max()
        key = tuple(np.round(np.append(normal, offset) / scale, 9))
        facets[key] = (normal / scale, offset / scale)
    for normal, offset in facets.values():
        row = np.zeros(d)
        row[active] = normal
        A_rows.append(row)
        b_rows.append(offset)
    on_hull = set(hull.vertices)
    vertex_rows = []
    for i in on_hull:
        p = cloud[i]
        match = np.flatnonzero(np.all(np.abs(sub - p) < 1e-12, axis=1))
        if match.size:
            vertex_rows.append(points[match[0]])
    vertices = _pareto(np.array(vertex_rows)) if vertex_rows else np.zeros((1, d))
    order = np.lexsort(vertices.T[::-1])
    return vertices[order], np.array(A_rows), np.array(b_rows)


def enumerate_realizations(network: Network, budget: int = 1 << 12) -> list[Realization]:
    """Every on/off pattern of link generation with its probability and service vectors."""
    edges = network.edges
    if 2 ** len(edges) > budget:
        raise UnsupportedRegimeError(f"{len(edges)} edges give too many link realizations")
    queues = {c: len(edges) for c in network.commodity_ids}
    out = []
    for present in itertools.product((False, True), repeat=len(edges)):
        prob = 1.0
        for e, on in zip(edges, present):
            prob *= e.p_gen if on else 1 - e.p_gen
        lles = {
            i: LLE(i, e.key, 0, e.F0) for i, (e, on) in enumerate(zip(edges, present)) if on
        }
        state = SlotState(0, lles, dict(queues), len(edges))
        services = []
        for config in feasible_configurations(state, network):
            served = config.served()
            services.append([served.get(c, 0) for c in network.commodity_ids])
        out.append(Realization(present, prob, np.array(services, dtype=float)))
    return out


def estimate_capacity_region(network: Network) -> CapacityRegion:
    """Capacity region of a small network whose LLEs last a single slot."""
    if network.params.cutoff_age != 1:
        raise UnsupportedRegimeError(
            "capacity enumeration needs cutoff_age = 1; bound other regimes by simulation"
        )
    if network.params.min_service_fidelity is not None:
        raise UnsupportedRegimeError("capacity enumeration does not model a service fidelity threshold")
    realizations = enumerate_realizations(network)
    dim = len(network.commodity_ids)
    acc = np.zeros((1, dim))
    for r in realizations:
        if r.probability == 0:
            continue
        pts = _pareto(r.services)
        acc = (acc[:, None, :] + r.probability * pts[None, :, :]).reshape(-1, dim)
        acc = _hull(acc)[0] if len(acc) > dim + 1 else _pareto(acc)
    vertices, A, b = _hull(acc)
    return CapacityRegion(list(network.commodity_ids), vertices, (A, b), realizations)


# -- stability sweeps ------------------------------------------------------------


def queue_slope(total_queue: np.ndarray) -> float:
    """Least-squares slope of the total backlog over the second half of a run."""
    tail = np.asarray(total_queue[len(total_queue) // 2:], dtype=float)
    if tail.size < 2:
        return 0.0
    x = np.arange(tail.size, dtype=float)
    return float(np.polyfit(x, tail, 1)[0])


@dataclass
class SweepPoint:
    rho: float
    rates: list[float]
    slopes: list[float]
    stable: bool

    @property
    def mean_slope(self) -> float:
        return float(np.mean(self.slopes))


def stability_sweep(
    network: Network,
    policy_factory: Callable[[], object],
    direction: Sequence[float],
    rho_grid: Sequence[float],
    horizon: int,
    seeds: Sequence[int],
    epsilon: float = 1e-3,
) -> list[SweepPoint]:
    """Simulate arrivals ``rho * direction`` for each ``rho`` and judge stability.

    A load point is stable when the mean backlog slope across seeds is below
    ``epsilon`` requests per slot.  This is a finite-horizon heuristic.
    """
    d = np.asarray(direction, dtype=float)
    if d.shape != (len(network.commodity_ids),) or (d < 0).any():
        raise ValueError("direction must be a nonnegative vector with one entry per commodity")
    points = []
    for rho in rho_grid:
        rates = [float(x) for x in rho * d]
        sized = network.with_rates(rates)
        slopes = []
        for seed in seeds:
            metrics = run(sized, policy_factory(), horizon, seed)
            slopes.append(queue_slope(metrics.total_queue()))
        points.append(SweepPoint(float(rho), rates, slopes, bool(np.mean(slopes) < epsilon)))
    return points
