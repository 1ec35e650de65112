"""Synthetic networks for tests and benchmarks."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .network import Link, Network, make_junction
from .processes import IidArrivals, IidStates
from .scenario import Scenario

DIRS = ("N", "E", "S", "W")
STEP = {"N": (-1, 0), "E": (0, 1), "S": (1, 0), "W": (0, -1)}
OPP = {"N": "S", "S": "N", "E": "W", "W": "E"}
PHASES = (("N", "S"), ("E", "W"), ("N",), ("S",), ("E",), ("W",))


def grid_network(rows: int, cols: int, rng: np.random.Generator,
                 capacity: Optional[float] = None, max_states: int = 2) -> Network:
    """Rectangular grid of four-approach junctions with random rates.

    Each approach may turn into any other direction (no U-turns).  Every
    phase releases whole approaches, so a link's movements always run
    together.  Boundary approaches are fed by entry links and drain into
    exit links.
    """
    links = []

    def new_link(entry=False, exit=False, label=None):
        lid = len(links)
        links.append(Link(lid, None if exit else capacity, entry, exit, label))
        return lid

    inc = {}   # (r, c, d): link arriving at (r,c) from direction d
    out = {}   # (r, c, d): link leaving (r,c) towards direction d
    for r in range(rows):
        for c in range(cols):
            for d in DIRS:
                dr, dc = STEP[d]
                nr, nc = r + dr, c + dc
                inside = 0 <= nr < rows and 0 <= nc < cols
                if not inside:
                    inc[(r, c, d)] = new_link(entry=True, label=f"in {r},{c} {d}")
                    out[(r, c, d)] = new_link(exit=True, label=f"out {r},{c} {d}")
                elif (r, c, d) not in out:
                    ab = new_link(label=f"{r},{c}->{nr},{nc}")
                    ba = new_link(label=f"{nr},{nc}->{r},{c}")
                    out[(r, c, d)] = ab
                    inc[(nr, nc, OPP[d])] = ab
                    out[(nr, nc, OPP[d])] = ba
                    inc[(r, c, d)] = ba

    junctions = []
    for r in range(rows):
        for c in range(cols):
            jid = len(junctions)
            movs, by_app = [], {d: [] for d in DIRS}
            for d in DIRS:
                for e in DIRS:
                    if e != d:
                        by_app[d].append(len(movs))
                        movs.append((inc[(r, c, d)], out[(r, c, e)]))
            phases = [(k, [i for d in apps for i in by_app[d]]) for k, apps in enumerate(PHASES)]
            n_states = int(rng.integers(1, max_states + 1))
            rates = {}
            for pid, members in phases:
                for i in members:
                    for s in range(n_states):
                        rates[(pid, i, s)] = float(rng.choice([0.5, 1.0, 1.5, 2.0]))
            junctions.append(make_junction(jid, movs, phases, range(n_states), None, rates))
    return Network(tuple(links), tuple(junctions))


def grid_scenario(rows: int, cols: int, seed: int, horizon: int = 10_000,
                  capacity: Optional[float] = None, load: float = 0.1,
                  controller: str = "backpressure") -> Scenario:
    """Random grid with iid arrivals, random turn ratios and iid states."""
    rng = np.random.default_rng(seed)
    net = grid_network(rows, cols, rng, capacity)
    arrivals = {
        l.id: IidArrivals((1 - load, load / 2, load / 2), 1 / 1.5)
        for l in net.links if l.entry
    }
    ratios = {}
    for l in net.links:
        outs = [m.dst for m in net.movements() if m.src == l.id]
        if outs:
            w = rng.dirichlet(np.ones(len(outs)))
            w[-1] = 1.0 - w[:-1].sum()
            ratios[l.id] = {b: float(x) for b, x in zip(outs, w)}
    states = {}
    for j in net.junctions:
        if len(j.states) > 1:
            states[j.id] = IidStates(tuple(float(x) for x in rng.dirichlet(np.ones(len(j.states)))))
    return Scenario(net, horizon, seed, arrivals, ratios, states, controller,
                    name=f"grid{rows}x{cols}")
