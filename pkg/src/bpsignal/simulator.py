"""Slotted-time macroscopic simulation of a signalized road network.

Each link holds a fluid queue split into one share per outgoing movement
(turn ratios decide how arriving vehicles are divided).  In every slot:

1. the controller picks a phase per junction from the queues at the start
   of the slot;
2. exogenous arrivals join their entry link and may pass in the same slot;
3. every movement of an active phase passes
   ``R * (1 - exp(-(share + arrivals) / R))`` vehicles, ``R`` being the
   movement's rate under the current phase and traffic state;
4. transfers into a finite-capacity link are scaled down so the link
   cannot overfill (spillback); vehicles reaching an exit link leave;
5. vehicles that moved into an interior link join its shares and wait for
   the next slot.

Several replicas (independent seeds) can advance together; every replica
evolves exactly as it would alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from .compiled import CompiledNetwork
from .controller import Controller
from .processes import ARRIVAL_STREAM, STATE_STREAM, stream

CHUNK = 4096


class SimulationError(RuntimeError):
    """An invariant of the queue dynamics was violated."""


_TINY = 2.0 ** -53


def discharge(x: float, R: float) -> float:
    """Vehicles passing in one slot from ``x`` waiting with at most ``R`` passable."""
    if x < 0 or R < 0:
        raise ValueError("discharge needs nonnegative inputs")
    if R == 0 or x == 0:
        return 0.0
    if x < R * _TINY:
        # x(1 - x/2R) rounds to x; avoids x/R underflowing for subnormal x
        return x
    return min(x, -R * math.expm1(-x / R))


def discharge_array(x: np.ndarray, R: np.ndarray) -> np.ndarray:
    served = R > 0
    Rs = np.where(served, R, 1.0)
    out = np.where(x < Rs * _TINY, x, -Rs * np.expm1(-x / Rs))
    return np.minimum(out, x) * served


@dataclass
class SimState:
    """State of one replica at the start of slot ``t``."""

    t: int
    queues: np.ndarray   # (N,)
    shares: np.ndarray   # (M,) per-movement portions of the upstream queue
    states: np.ndarray   # (L,) traffic state index per junction


@dataclass
class SlotRecord:
    t: int
    phases: np.ndarray
    states: np.ndarray
    arrivals: np.ndarray
    discharges: np.ndarray
    queues: np.ndarray        # after the slot
    exits: float

    @property
    def lyapunov(self) -> float:
        return float(np.dot(self.queues, self.queues))


class Engine:
    """Queue dynamics for one compiled network and turn-ratio vector."""

    def __init__(self, cnet: CompiledNetwork, ratios: np.ndarray, check: bool = True):
        self.cnet = cnet
        self.ratios = np.asarray(ratios, dtype=float)
        self.check = check
        self.capacity_tol = 1e-9 * np.maximum(1.0, np.where(np.isfinite(cnet.capacity), cnet.capacity, 1.0))
        self.guard = np.isfinite(cnet.capacity) & ~cnet.entry

    def apportion(self, per_link: np.ndarray) -> np.ndarray:
        """Split ``(B, N)`` link amounts across outgoing movements by turn ratio."""
        return per_link[:, self.cnet.frm] * self.ratios

    def advance(self, shares, Q, A, phases, states):
        """One slot for ``B`` replicas; returns ``(shares, Q, moved, R)``."""
        c = self.cnet
        R = c.service_rates(phases, states)
        pool = shares + self.apportion(A)
        moved = discharge_array(pool, R)
        if c.bounded:
            residual = np.maximum(c.capacity - Q - A, 0.0)
            want = c.inflow_sum(moved)
            over = want > residual
            if over.any():
                scale = np.where(over, residual / np.where(over, want, 1.0), 1.0)
                moved = np.minimum(moved * scale[:, c.to], pool)
        shares = pool - moved
        inflow = c.inflow_sum(moved)
        inflow[:, c.exit] = 0.0
        shares = shares + self.apportion(inflow)
        Q = c.link_sum(shares)
        if self.check:
            if shares.min(initial=0.0) < 0:
                raise SimulationError("negative queue share")
            if (Q[:, self.guard] > (c.capacity + self.capacity_tol)[self.guard]).any():
                raise SimulationError("link capacity exceeded by an internal transfer")
        return shares, Q, moved, R


def step(engine: Engine, state: SimState, decisions: Sequence[int], arrivals: Sequence[float]):
    """Advance one replica by one slot.

    ``decisions`` are phase ids per junction and ``arrivals`` the exogenous
    vehicles per link for this slot.  Returns ``(new_state, record)``.
    """
    c = engine.cnet
    p = np.array([[c.phase_index(j, pid) for j, pid in enumerate(decisions)]], dtype=np.intp)
    A = np.asarray(arrivals, dtype=float)[None, :]
    z = np.asarray(state.states, dtype=np.intp)[None, :]
    shares, Q, moved, R = engine.advance(state.shares[None, :], state.queues[None, :], A, p, z)
    exits = float(c.inflow_sum(moved)[0, c.exit].sum())
    rec = SlotRecord(state.t, np.asarray(decisions), z[0].copy(), A[0].copy(), moved[0], Q[0], exits)
    return SimState(state.t + 1, Q[0], shares[0], state.states.copy()), rec


# ---------------------------------------------------------------------------
# traces


@dataclass
class Trace:
    scenario_hash: str
    seed: int
    controller: str
    link_ids: list
    junction_ids: list
    movements: list
    queues: np.ndarray            # (T+1, N) at the start of each slot, plus final
    phases: np.ndarray            # (T, L) phase ids
    states: np.ndarray            # (T, L) state ids
    exits: np.ndarray             # (T,)
    arrivals: Optional[np.ndarray] = None     # (T, N)
    discharges: Optional[np.ndarray] = None   # (T, M)
    capacity: Optional[np.ndarray] = None     # (N,) inf where unbounded
    exit_links: Optional[np.ndarray] = None   # (N,) True for exit links
    meta: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return self.phases.shape[0]

    def __len__(self) -> int:
        return self.horizon

    @property
    def total_queue(self) -> np.ndarray:
        return self.queues.sum(axis=1)

    @property
    def lyapunov(self) -> np.ndarray:
        return (self.queues ** 2).sum(axis=1)

    def breached(self) -> bool:
        """Whether any link ever held more vehicles than its capacity."""
        if self.capacity is None:
            return False
        return bool((self.queues > self.capacity + 1e-9).any())

    def interior_links(self) -> list:
        """Positions of links that can hold a queue (all but exits)."""
        if self.exit_links is None:
            return list(range(len(self.link_ids)))
        return [k for k in range(len(self.link_ids)) if not self.exit_links[k]]

    def records(self) -> Iterator[SlotRecord]:
        for t in range(self.horizon):
            yield SlotRecord(
                t,
                self.phases[t],
                self.states[t],
                None if self.arrivals is None else self.arrivals[t],
                None if self.discharges is None else self.discharges[t],
                self.queues[t + 1],
                float(self.exits[t]),
            )


# ---------------------------------------------------------------------------
# runs


def run_replicas(scenario, seeds: Sequence[int], controller: Optional[Controller] = None,
                 record_flows: bool = False, check: bool = True) -> list:
    """Run ``scenario`` once per seed, all replicas advancing together."""
    from .scenario import build_controller

    seeds = [int(s) for s in seeds]
    B = len(seeds)
    T = int(scenario.horizon)
    cnet = scenario.compiled()
    engine = Engine(cnet, scenario.ratio_vector(cnet), check=check)
    ctrl = controller if controller is not None else build_controller(scenario)
    ctrl.reset(cnet, seeds)
    N, L, M = cnet.N, cnet.L, cnet.M

    q0 = np.zeros(N)
    for link, v in scenario.initial_queues.items():
        q0[link] = v
    shares = np.tile(q0[cnet.frm] * engine.ratios, (B, 1))
    Q = cnet.link_sum(shares)

    arr_rng = [{a: stream(s, ARRIVAL_STREAM, a) for a in scenario.arrivals} for s in seeds]
    st_rng = [{j: stream(s, STATE_STREAM, j) for j in scenario.states} for s in seeds]
    prev_state = [{j: None for j in scenario.states} for _ in seeds]

    queues = np.empty((B, T + 1, N))
    queues[:, 0] = Q
    phases = np.empty((B, T, L), dtype=np.intp)
    states = np.zeros((B, T, L), dtype=np.intp)
    exits = np.empty((B, T))
    arrivals = np.empty((B, T, N)) if record_flows else None
    discharges = np.empty((B, T, M)) if record_flows else None
    exit_mask = cnet.exit

    for start in range(0, T, CHUNK):
        n = min(CHUNK, T - start)
        A_chunk = np.zeros((B, n, N))
        for b in range(B):
            for a, proc in scenario.arrivals.items():
                A_chunk[b, :, a] = proc.sample_path(start, n, arr_rng[b][a])
            for j, proc in scenario.states.items():
                path = proc.sample_path(n, st_rng[b][j], prev_state[b][j])
                states[b, start:start + n, j] = path
                prev_state[b][j] = int(path[-1])
        for k in range(n):
            t = start + k
            A = A_chunk[:, k]
            z = states[:, t]
            p = ctrl.decide(t, Q, z)
            shares, Q, moved, R = engine.advance(shares, Q, A, p, z)
            ctrl.observe(p, moved, R)
            queues[:, t + 1] = Q
            phases[:, t] = p
            exits[:, t] = (cnet.inflow_sum(moved) * exit_mask).sum(axis=1)
            if record_flows:
                arrivals[:, t] = A
                discharges[:, t] = moved

    phase_lookup = [np.asarray(ids) for ids in cnet.phase_ids]
    state_lookup = [np.asarray(ids) for ids in cnet.state_ids]
    shash = scenario.hash()
    traces = []
    for b, seed in enumerate(seeds):
        ph = np.empty((T, L), dtype=np.int64)
        zs = np.empty((T, L), dtype=np.int64)
        for j in range(L):
            ph[:, j] = phase_lookup[j][phases[b, :, j]]
            zs[:, j] = state_lookup[j][states[b, :, j]]
        traces.append(Trace(
            scenario_hash=shash,
            seed=seed,
            controller=ctrl.name,
            link_ids=[l.id for l in cnet.net.links],
            junction_ids=[j.id for j in cnet.net.junctions],
            movements=list(cnet.movements),
            queues=queues[b],
            phases=ph,
            states=zs,
            exits=exits[b],
            arrivals=None if arrivals is None else arrivals[b],
            discharges=None if discharges is None else discharges[b],
            capacity=cnet.capacity.copy(),
            exit_links=cnet.exit.copy(),
            meta={"rho": scenario.rho},
        ))
    return traces


def run(scenario, controller: Optional[Controller] = None, seed: Optional[int] = None,
        record_flows: bool = True) -> Trace:
    """Single replica of ``scenario`` (its own seed unless ``seed`` is given)."""
    seed = scenario.seed if seed is None else seed
    return run_replicas(scenario, [seed], controller, record_flows=record_flows)[0]
