"""Comparison controllers: fixed-time plans and a SCATS-like split selector.

The SCATS-like controller is an approximation of the adaptive system in
operation in many cities.  It runs a cycle through the junction's phases in
order, with green times given by a split plan chosen from a fixed library.
At every cycle boundary it

1. measures the degree of saturation (DS) of each phase, the effectively
   used share of its green time;
2. lengthens the cycle when the busiest phase is above the target DS and
   shortens it otherwise, within ``[c_min, c_max]``;
3. votes for the library plan whose predicted per-phase DS values deviate
   least from their mean.

A green slot counts as fully used when the active phase discharged at its
saturation rate; queue-limited discharge counts as the fraction achieved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from .controller import Controller


# ---------------------------------------------------------------------------
# fixed time


@dataclass(frozen=True)
class FixedTimePlan:
    steps: tuple  # ((phase_id, duration_slots), ...)

    def __post_init__(self):
        if not self.steps:
            raise ValueError("fixed-time plan needs at least one step")
        for pid, dur in self.steps:
            if int(dur) != dur or dur < 1:
                raise ValueError(f"duration for phase {pid} must be an integer >= 1, got {dur}")

    @property
    def cycle(self) -> int:
        return int(sum(d for _, d in self.steps))


def fixed_time_decide(plan: FixedTimePlan, t: int) -> int:
    pos = t % plan.cycle
    for pid, dur in plan.steps:
        if pos < dur:
            return pid
        pos -= dur
    raise AssertionError("unreachable")


class FixedTimeController(Controller):
    name = "fixed-time"

    def __init__(self, plans: Optional[Mapping[int, FixedTimePlan]] = None, green: int = 15):
        self.plans = dict(plans or {})
        self.green = green

    def reset(self, cnet, seeds):
        super().reset(cnet, seeds)
        self._plans = []
        for j in range(cnet.L):
            plan = self.plans.get(j) or FixedTimePlan(tuple((pid, self.green) for pid in cnet.phase_ids[j]))
            for pid, _ in plan.steps:
                if pid not in cnet.phase_ids[j]:
                    raise ValueError(f"fixed-time plan for junction {j} uses unknown phase {pid}")
            self._plans.append(plan)

    def decide(self, t, Q, z):
        row = [self.cnet.phase_index(j, fixed_time_decide(p, t)) for j, p in enumerate(self._plans)]
        return np.tile(np.array(row, dtype=np.intp), (Q.shape[0], 1))


# ---------------------------------------------------------------------------
# degree of saturation


def degree_of_saturation(used_green: float, total_green: float) -> float:
    if used_green < 0 or total_green < 0:
        raise ValueError("green times must be nonnegative")
    if used_green > total_green:
        raise ValueError(f"used green {used_green} exceeds total green {total_green}")
    if total_green == 0:
        return 0.0
    return used_green / total_green


# ---------------------------------------------------------------------------
# SCATS-like


def default_library(n_phases: int, size: int = 5) -> tuple:
    """Equal split first, then plans boosting one phase by 2x, 3x, ..."""
    plans = [tuple([1.0 / n_phases] * n_phases)]
    factor = 2
    while len(plans) < size and n_phases > 1:
        for k in range(n_phases):
            w = [1.0] * n_phases
            w[k] = float(factor)
            s = sum(w)
            plans.append(tuple(x / s for x in w))
            if len(plans) == size:
                break
        factor += 1
    return tuple(plans)


def split_greens(fractions: Sequence[float], cycle: int) -> tuple:
    """Integer green times summing to ``cycle``; phases with a positive share get >= 1 slot."""
    n = len(fractions)
    ideal = [f * cycle for f in fractions]
    greens = [max(1 if f > 0 else 0, math.floor(x)) for f, x in zip(fractions, ideal)]
    short = cycle - sum(greens)
    order = sorted(range(n), key=lambda k: (-(ideal[k] - math.floor(ideal[k])), k))
    i = 0
    while short > 0:
        k = order[i % n]
        if fractions[k] > 0:
            greens[k] += 1
            short -= 1
        i += 1
    floor = [1 if f > 0 else 0 for f in fractions]
    while short < 0:
        k = max((k for k in range(n) if greens[k] > floor[k]), key=lambda k: (greens[k] - ideal[k], -k))
        greens[k] -= 1
        short += 1
    return tuple(greens)


def vote_split_plan(library: Sequence[Sequence[float]], used: Sequence[float], cycle: float,
                    current: int = 0) -> int:
    """Index of the plan whose predicted per-phase DS is most even.

    ``used`` is the effectively used green per phase over the last cycle of
    length ``cycle``; under a plan with shares ``s`` the predicted DS of
    phase ``k`` is ``used[k] / (s[k] * cycle)``.  Ties keep ``current``.
    """
    scores = []
    for plan in library:
        pred = []
        for u, s in zip(used, plan):
            if s > 0:
                pred.append(u / (s * cycle))
            else:
                pred.append(math.inf if u > 0 else 0.0)
        mean = sum(pred) / len(pred)
        scores.append(max(abs(p - mean) for p in pred) if math.isfinite(mean) else math.inf)
    best = min(scores)
    if scores[current] == best:
        return current
    return scores.index(best)


@dataclass(frozen=True)
class ScatsParams:
    c_min: int = 40
    c_max: int = 120
    target_ds: float = 0.9
    step_fraction: float = 0.05
    initial_cycle: Optional[int] = None
    library: Optional[tuple] = None
    library_size: int = 5

    def __post_init__(self):
        if not 1 <= self.c_min <= self.c_max:
            raise ValueError("need 1 <= c_min <= c_max")


@dataclass(frozen=True)
class ScatsState:
    params: ScatsParams
    library: tuple
    cycle: int
    plan: int
    greens: tuple
    position: int = 0
    used: tuple = ()
    green: tuple = ()
    last: Optional[int] = None
    history: tuple = field(default=(), compare=False)  # (cycle, plan) per completed cycle

    @classmethod
    def initial(cls, n_phases: int, params: ScatsParams = ScatsParams()) -> "ScatsState":
        library = tuple(tuple(float(x) for x in p) for p in (params.library or default_library(n_phases, params.library_size)))
        for p in library:
            if len(p) != n_phases or any(x < 0 for x in p) or abs(sum(p) - 1) > 1e-9:
                raise ValueError(f"split plan {p} must have {n_phases} nonnegative shares summing to 1")
        if params.c_min < n_phases:
            raise ValueError("c_min must leave at least one slot per phase")
        cycle = params.initial_cycle or params.c_min
        cycle = min(max(cycle, params.c_min), params.c_max)
        zero = tuple(0.0 for _ in range(n_phases))
        return cls(params, library, cycle, 0, split_greens(library[0], cycle),
                   0, zero, tuple(0 for _ in range(n_phases)))


def _phase_at(greens: Sequence[int], position: int) -> int:
    for k, g in enumerate(greens):
        if position < g:
            return k
        position -= g
    raise AssertionError("position beyond cycle")


def _end_of_cycle(state: ScatsState) -> ScatsState:
    p = state.params
    ds = [degree_of_saturation(min(u, g), g) for u, g in zip(state.used, state.green)]
    step = max(1, round(p.step_fraction * state.cycle))
    cycle = state.cycle
    if max(ds) > p.target_ds:
        cycle += step
    elif max(ds) < p.target_ds:
        cycle -= step
    cycle = min(max(cycle, p.c_min), p.c_max)
    plan = vote_split_plan(state.library, state.used, sum(state.greens), state.plan)
    n = len(state.greens)
    return replace(
        state,
        cycle=cycle,
        plan=plan,
        greens=split_greens(state.library[plan], cycle),
        position=0,
        used=tuple(0.0 for _ in range(n)),
        green=tuple(0 for _ in range(n)),
        history=state.history + ((cycle, plan),),
    )


def scats_decide(state: ScatsState, usage: Optional[float], t: int) -> tuple:
    """Advance one slot; returns ``(phase index, new state)``.

    ``usage`` is the effectively used fraction of the previous slot's green
    for the phase that was then active (``None`` before the first slot).
    """
    used, green = list(state.used), list(state.green)
    if state.last is not None and usage is not None:
        used[state.last] += min(max(usage, 0.0), 1.0)
        green[state.last] += 1
    state = replace(state, used=tuple(used), green=tuple(green))
    if state.position >= sum(state.greens):
        state = _end_of_cycle(state)
    k = _phase_at(state.greens, state.position)
    return k, replace(state, position=state.position + 1, last=k)


class ScatsController(Controller):
    name = "scats"

    def __init__(self, params: ScatsParams = ScatsParams()):
        self.params = params

    def reset(self, cnet, seeds):
        super().reset(cnet, seeds)
        self.states = [
            [ScatsState.initial(int(cnet.n_phases[j]), self.params) for j in range(cnet.L)]
            for _ in seeds
        ]
        self.usage = [[None] * cnet.L for _ in seeds]
        # movement masks per (junction, phase) over the junction's movements
        self._members = []
        for j, junction in enumerate(cnet.net.junctions):
            order = [cnet.movements[i] for i in cnet.jmov[j]]
            self._members.append(np.array([[m in p for m in order] for p in junction.phases]))

    def decide(self, t, Q, z):
        B = Q.shape[0]
        out = np.empty((B, self.cnet.L), dtype=np.intp)
        for b in range(B):
            for j in range(self.cnet.L):
                k, self.states[b][j] = scats_decide(self.states[b][j], self.usage[b][j], t)
                out[b, j] = k
        return out

    def observe(self, phases, discharged, R):
        c = self.cnet
        for b in range(phases.shape[0]):
            for j in range(c.L):
                idx = c.jmov[j]
                mask = self._members[j][phases[b, j]] & (R[b, idx] > 0)
                if mask.any():
                    self.usage[b][j] = float((discharged[b, idx][mask] / R[b, idx][mask]).max())
                else:
                    self.usage[b][j] = 0.0
