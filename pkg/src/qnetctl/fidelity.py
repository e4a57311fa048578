"""Scalar Werner-fidelity algebra used by the network simulator."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce
from typing import Iterable

FIDELITY_FLOOR = 0.25
_TOL = 1e-12


class FidelityError(ValueError):
    pass


def _check(F: float) -> float:
    F = float(F)
    if not FIDELITY_FLOOR - _TOL <= F <= 1 + _TOL:
        raise FidelityError(f"fidelity must lie in [1/4, 1], got {F}")
    return min(max(F, FIDELITY_FLOOR), 1.0)


@dataclass(frozen=True)
class FidelityParams:
    """Decoherence settings shared by all links.

    ``coherence_time`` and ``cutoff_age`` are measured in slots; ``math.inf``
    disables decay or the age cutoff respectively.
    """

    coherence_time: float = math.inf
    cutoff_age: float = math.inf
    F0: float = 1.0
    min_service_fidelity: float | None = None

    def __post_init__(self):
        if not self.coherence_time > 0:
            raise FidelityError(f"coherence_time must be positive, got {self.coherence_time}")
        if self.cutoff_age != math.inf and (
            int(self.cutoff_age) != self.cutoff_age or self.cutoff_age < 1
        ):
            raise FidelityError(f"cutoff_age must be an integer >= 1 or inf, got {self.cutoff_age}")
        _check(self.F0)
        if self.min_service_fidelity is not None:
            _check(self.min_service_fidelity)


@dataclass(frozen=True)
class LLE:
    """A link-level entanglement held by the two endpoints of ``edge``."""

    id: int
    edge: tuple[str, str]
    created_slot: int
    F0: float = 1.0

    def age(self, slot: int) -> int:
        return slot - self.created_slot

    def fidelity(self, slot: int, params: FidelityParams) -> float:
        return decay(self.F0, self.age(slot), params)


def decay(F: float, elapsed: float, params: FidelityParams) -> float:
    """Depolarize toward the maximally mixed state: ``1/4 + (F-1/4) exp(-t/T)``."""
    F = _check(F)
    if elapsed < 0:
        raise FidelityError(f"elapsed time must be nonnegative, got {elapsed}")
    if params.coherence_time == math.inf or elapsed == 0:
        return F
    return FIDELITY_FLOOR + (F - FIDELITY_FLOOR) * math.exp(-elapsed / params.coherence_time)


def swap_fidelity(F1: float, F2: float) -> float:
    """Fidelity of the pair left after swapping two Werner pairs."""
    F1, F2 = _check(F1), _check(F2)
    return F1 * F2 + (1 - F1) * (1 - F2) / 3


def distill_fidelity(F1: float, F2: float) -> tuple[float, float]:
    """One BBPSSW round on two Werner pairs.

    Returns ``(output_fidelity, success_probability)``.
    """
    F1, F2 = _check(F1), _check(F2)
    # scaled by 9 to avoid dividing by 3, so fixed points such as F = 1/2 come out exact
    g1, g2 = 1 - F1, 1 - F2
    good = 9 * F1 * F2 + g1 * g2
    total = 9 * F1 * F2 + 3 * (F1 * g2 + F2 * g1) + 5 * g1 * g2
    return good / total, total / 9


def chain_fidelity(fidelities: Iterable[float]) -> float:
    """End-to-end fidelity after swapping along a path of links."""
    fidelities = [_check(F) for F in fidelities]
    if not fidelities:
        raise FidelityError("chain_fidelity needs at least one link")
    return reduce(swap_fidelity, fidelities)
