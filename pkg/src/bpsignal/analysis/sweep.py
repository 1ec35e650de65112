"""Empirical throughput multiplier: how far can demand be scaled?

:func:`empirical_multiplier` scales every arrival rate of a scenario by
``rho`` and bisects, on a grid of step ``resolution``, for the largest
``rho`` whose runs (all seeds) satisfy a criterion.  The criterion is
assumed monotone in ``rho`` (met below some level, failed above it).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

from ..controller import Controller
from ..simulator import run_replicas
from .stability import stability_statistic


class Criterion:
    name = "criterion"

    def __call__(self, trace) -> bool:
        raise NotImplementedError


@dataclass(frozen=True)
class NoCapacityBreach(Criterion):
    """No link ever holds more vehicles than its capacity."""

    name = "no-capacity-breach"

    def __call__(self, trace) -> bool:
        return not trace.breached()


@dataclass(frozen=True)
class StabilityBelow(Criterion):
    """Worst-link fraction of slots with ``Q > V`` stays below ``tau``."""

    V: float
    tau: float
    name = "stability-below"

    def __call__(self, trace) -> bool:
        if math.isinf(self.V):
            return True
        return stability_statistic(trace, [self.V]).worst[0] < self.tau


@dataclass
class SweepResult:
    controller: str
    rho_hat: float
    at_upper_bound: bool          # criterion still met at the top of the range
    below_range: bool             # criterion failed even at the bottom
    evaluations: dict = field(default_factory=dict)   # rho -> passed

    def to_dict(self) -> dict:
        return {
            "controller": self.controller,
            "rho_hat": self.rho_hat,
            "at_upper_bound": self.at_upper_bound,
            "below_range": self.below_range,
            "evaluations": [{"rho": r, "passed": p} for r, p in sorted(self.evaluations.items())],
        }


def empirical_multiplier(
    scenario,
    controller: Union[str, Controller, None] = None,
    criterion: Optional[Criterion] = None,
    lo: float = 0.5,
    hi: float = 2.0,
    resolution: float = 0.05,
    seeds: Optional[Sequence[int]] = None,
) -> SweepResult:
    """Largest grid multiplier in ``[lo, hi]`` meeting ``criterion`` on every seed.

    ``controller`` is a controller name (built from the scenario's
    parameters) or a ready :class:`Controller`.  If the criterion holds at
    ``hi`` the result is ``hi`` with ``at_upper_bound`` set; if it fails at
    ``lo`` the result is ``0`` with ``below_range`` set.
    """
    from ..scenario import build_controller

    if not 0 < lo < hi:
        raise ValueError("multiplier range must satisfy 0 < lo < hi")
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    criterion = criterion or NoCapacityBreach()
    seeds = [scenario.seed] if seeds is None else [int(s) for s in seeds]
    name = controller if isinstance(controller, str) else None
    if controller is None:
        name = scenario.controller

    def make():
        if isinstance(controller, Controller):
            return controller
        return build_controller(scenario, name)

    k_lo = math.ceil(lo / resolution - 1e-9)
    k_hi = math.floor(hi / resolution + 1e-9)
    evals = {}

    def ok(k: int) -> bool:
        rho = round(k * resolution, 10)
        if rho not in evals:
            traces = run_replicas(scenario.scaled(rho), seeds, make())
            evals[rho] = all(criterion(t) for t in traces)
        return evals[rho]

    label = make().name
    if ok(k_hi):
        return SweepResult(label, round(k_hi * resolution, 10), True, False, evals)
    if not ok(k_lo):
        return SweepResult(label, 0.0, False, True, evals)
    good, bad = k_lo, k_hi
    while bad - good > 1:
        mid = (good + bad) // 2
        if ok(mid):
            good = mid
        else:
            bad = mid
    return SweepResult(label, round(good * resolution, 10), False, False, evals)
