"""Backpressure phase selection.

Each junction weighs every movement by the queue difference between its
upstream and downstream links, scores each phase by the rate-weighted sum
of those differences, and activates the highest-scoring phase.  Only queues
on links touched by the junction's own movements are consulted.

Two entry points share the rule:

* the scalar functions (:func:`phase_pressure`, :func:`select_phase`,
  :func:`decide_all`) work on plain dicts and are what the tests reason with;
* :class:`BackpressureController` evaluates the same rule on ``(replica,
  link)`` arrays inside the simulator's slot loop.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .compiled import CompiledNetwork
from .network import Junction, Movement, Network, junction_rate


class _Exit:
    def __repr__(self) -> str:
        return "EXIT"


EXIT = _Exit()
"""Marker for the downstream side of a movement that leaves the network."""


class TiePolicy(str, enum.Enum):
    LOWEST = "lowest-phase-id"
    KEEP_PREVIOUS = "keep-previous"
    RANDOM = "seeded-random"


@dataclass(frozen=True)
class LocalObservation:
    junction: int
    queues: Mapping[int, float]
    state: int
    exits: frozenset = field(default_factory=frozenset)

    def downstream(self, link: int):
        return EXIT if link in self.exits else self.queues[link]


def observe(net: Network, j: int, Q: Sequence[float], z: int) -> LocalObservation:
    """Slice the junction-local part of a full queue vector."""
    junction = net.junction(j)
    links = junction.links
    exits = frozenset(l for l in links if net.links[l].exit)
    return LocalObservation(j, {l: float(Q[l]) for l in sorted(links)}, z, exits)


def movement_weight(q_from: float, q_to) -> float:
    if q_to is EXIT:
        return float(q_from)
    return float(q_from) - float(q_to)


def phase_pressure(junction: Junction, obs: LocalObservation, p: int) -> float:
    phase = junction.phase(p)
    total = 0.0
    for m in junction.movements:
        if m not in phase:
            continue
        w = movement_weight(obs.queues[m.src], obs.downstream(m.dst))
        total += w * junction_rate(junction, p, m, obs.state)
    return total


def maximal_phases(junction: Junction, obs: LocalObservation) -> list:
    """Ids of every phase attaining the maximum pressure."""
    scores = [(p.id, phase_pressure(junction, obs, p.id)) for p in junction.phases]
    best = max(s for _, s in scores)
    return [pid for pid, s in scores if s == best]


def select_phase(
    junction: Junction,
    obs: LocalObservation,
    tie: TiePolicy = TiePolicy.LOWEST,
    prev: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> int:
    candidates = maximal_phases(junction, obs)
    tie = TiePolicy(tie)
    if len(candidates) == 1:
        return candidates[0]
    if tie is TiePolicy.KEEP_PREVIOUS and prev in candidates:
        return prev
    if tie is TiePolicy.RANDOM:
        rng = rng if rng is not None else np.random.default_rng(0)
        ordered = sorted(candidates)
        return ordered[int(rng.integers(len(ordered)))]
    return min(candidates)


def decide_all(
    net: Network,
    Q: Sequence[float],
    z: Sequence[int],
    tie: TiePolicy = TiePolicy.LOWEST,
    prev: Optional[Sequence[Optional[int]]] = None,
    rng: Optional[np.random.Generator] = None,
) -> list:
    """Phase id chosen at every junction, each from its local view only."""
    prev = prev if prev is not None else [None] * net.n_junctions
    return [
        select_phase(j, observe(net, j.id, Q, z[j.id]), tie, prev[j.id], rng)
        for j in net.junctions
    ]


# ---------------------------------------------------------------------------
# controllers driven by the simulator


class Controller:
    """Per-slot policy used by the simulator.

    ``decide`` receives queues ``(B, N)`` and state indices ``(B, L)`` for
    ``B`` independent replicas and returns phase indices ``(B, L)`` into
    each junction's phase list.  ``observe`` is called after every slot with
    the realized per-movement discharges and offered rates.
    """

    name = "controller"

    def reset(self, cnet: CompiledNetwork, seeds: Sequence[int]) -> None:
        self.cnet = cnet
        self.n_replicas = len(seeds)

    def decide(self, t: int, Q: np.ndarray, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def observe(self, phases: np.ndarray, discharged: np.ndarray, R: np.ndarray) -> None:
        pass


class BackpressureController(Controller):
    name = "backpressure"

    def __init__(self, tie: TiePolicy = TiePolicy.LOWEST):
        self.tie = TiePolicy(tie)

    def reset(self, cnet, seeds):
        super().reset(cnet, seeds)
        self.prev = np.zeros((len(seeds), cnet.L), dtype=np.intp)
        self.rngs = [np.random.default_rng([int(s), 3]) for s in seeds]
        self.ids = [np.asarray(ids, dtype=float) for ids in cnet.phase_ids]

    def pressures(self, Q: np.ndarray, z: np.ndarray) -> list:
        """Phase pressures per junction, each of shape ``(B, n_phases)``."""
        c = self.cnet
        W = Q[:, c.frm] - Q[:, c.to] * c.interior_to
        out = []
        for j in range(c.L):
            Rj = c.rates[j][z[:, j]]
            out.append((Rj * W[:, None, c.jmov[j]]).sum(axis=-1))
        return out

    def decide(self, t, Q, z):
        B = Q.shape[0]
        choice = np.empty((B, self.cnet.L), dtype=np.intp)
        for j, S in enumerate(self.pressures(Q, z)):
            ismax = S == S.max(axis=1, keepdims=True)
            pick = np.where(ismax, self.ids[j], np.inf).argmin(axis=1)
            if self.tie is TiePolicy.KEEP_PREVIOUS and t > 0:
                keep = ismax[np.arange(B), self.prev[:, j]]
                pick = np.where(keep, self.prev[:, j], pick)
            elif self.tie is TiePolicy.RANDOM:
                order = np.argsort(self.ids[j], kind="stable")
                for b in np.flatnonzero(ismax.sum(axis=1) > 1):
                    opts = order[ismax[b, order]]
                    pick[b] = opts[int(self.rngs[b].integers(len(opts)))]
            choice[:, j] = pick
        self.prev = choice
        return choice
