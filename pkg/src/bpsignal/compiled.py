"""Flat array view of a :class:`~bpsignal.network.Network` for the slot loop."""

from __future__ import annotations

import numpy as np

from .network import Network, junction_rate


class CompiledNetwork:
    """Index arrays and rate tensors derived once from an immutable network.

    Movements are numbered globally in order of their upstream link (ties
    keep junction order), so per-link sums are contiguous ``reduceat``
    segments.  ``rates[j]`` has shape ``(n_states, n_phases, n_movements_j)``
    and lists junction ``j``'s movements in the order of ``jmov[j]``.
    """

    def __init__(self, net: Network):
        self.net = net
        self.N = net.n_links
        self.L = net.n_junctions

        tagged = []
        for j in net.junctions:
            for k, m in enumerate(j.movements):
                tagged.append((m.src, j.id, k, m))
        tagged.sort(key=lambda t: (t[0], t[1], t[2]))
        self.movements = [t[3] for t in tagged]
        self.M = len(self.movements)
        self.index = {m: i for i, m in enumerate(self.movements)}
        self.frm = np.array([m.src for m in self.movements], dtype=np.intp)
        self.to = np.array([m.dst for m in self.movements], dtype=np.intp)
        self.junction_of = np.array([t[1] for t in tagged], dtype=np.intp)

        self.exit = np.array([l.exit for l in net.links], dtype=bool)
        self.entry = np.array([l.entry for l in net.links], dtype=bool)
        self.capacity = np.array(
            [np.inf if (l.capacity is None or l.exit) else float(l.capacity) for l in net.links]
        )
        self.interior_to = ~self.exit[self.to]
        self.bounded = bool(np.isfinite(self.capacity).any())

        # reduceat segments: outflow grouped by source link
        self.src_links, self.src_starts = np.unique(self.frm, return_index=True)
        # inflow grouped by destination link (through a permutation)
        self.to_perm = np.argsort(self.to, kind="stable")
        self.dst_links, self.dst_starts = np.unique(self.to[self.to_perm], return_index=True)

        self.jmov = []
        self.rates = []
        self.phase_ids = []
        self.state_ids = []
        for j in net.junctions:
            idx = np.array([self.index[m] for m in j.movements], dtype=np.intp)
            self.jmov.append(idx)
            tab = np.zeros((len(j.states), len(j.phases), len(j.movements)))
            for zi, s in enumerate(j.states):
                for pi, p in enumerate(j.phases):
                    for mi, m in enumerate(j.movements):
                        tab[zi, pi, mi] = junction_rate(j, p.id, m, s.id)
            self.rates.append(tab)
            self.phase_ids.append([p.id for p in j.phases])
            self.state_ids.append([s.id for s in j.states])
        self.n_phases = np.array([len(p) for p in self.phase_ids], dtype=np.intp)

    # ------------------------------------------------------------------

    def link_sum(self, per_movement: np.ndarray) -> np.ndarray:
        """Sum ``(B, M)`` per-movement values into ``(B, N)`` by upstream link."""
        out = np.zeros(per_movement.shape[:-1] + (self.N,))
        if self.M:
            out[..., self.src_links] = np.add.reduceat(per_movement, self.src_starts, axis=-1)
        return out

    def inflow_sum(self, per_movement: np.ndarray) -> np.ndarray:
        """Sum ``(B, M)`` per-movement values into ``(B, N)`` by downstream link."""
        out = np.zeros(per_movement.shape[:-1] + (self.N,))
        if self.M:
            out[..., self.dst_links] = np.add.reduceat(
                per_movement[..., self.to_perm], self.dst_starts, axis=-1
            )
        return out

    def service_rates(self, phases: np.ndarray, states: np.ndarray) -> np.ndarray:
        """Per-movement rates ``(B, M)`` for phase and state index arrays ``(B, L)``."""
        B = phases.shape[0]
        R = np.zeros((B, self.M))
        for j in range(self.L):
            R[:, self.jmov[j]] = self.rates[j][states[:, j], phases[:, j]]
        return R

    def phase_index(self, j: int, phase_id: int) -> int:
        return self.phase_ids[j].index(phase_id)

    def state_index(self, j: int, state_id: int) -> int:
        return self.state_ids[j].index(state_id)
