"""Capacity region of a signalized network as a linear program.

An arrival-rate vector ``lam`` is supportable when there are movement flows
``f >= 0`` and, for every junction and traffic state, convex weights
``theta`` over the junction's phases such that

* each non-exit link conserves flow: what enters it (exogenous plus
  upstream movements) leaves it through its own movements;
* no movement carries more than its long-run service
  ``G_m = sum_z pi(z) sum_p theta(z, p) * rate(p, m, z)``.

Exit links absorb whatever reaches them.  Because movement sets of different
junctions are disjoint, the joint convex hull factorizes into one hull per
junction, so ``theta`` only needs per-junction weights.

When turn ratios are given, each movement's flow is pinned to its share of
the upstream link's throughput; without them routing is free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import linprog

from ..compiled import CompiledNetwork
from ..controller import Controller
from ..network import Junction, Network, junction_rate

RESIDUAL_TOL = 1e-8
_HIGHS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


class RegionError(RuntimeError):
    """The LP solver failed or returned an uncertifiable answer."""


class UnboundedMultiplierError(RegionError):
    """Every positive multiple of the direction is supportable."""


def junction_rate_hull(junction: Junction, z: int) -> list:
    """Service-rate vector of every phase under state ``z`` (hull generators).

    Vectors list rates in the order of ``junction.movements``.
    """
    return [
        tuple(junction_rate(junction, p.id, m, z) for m in junction.movements)
        for p in junction.phases
    ]


def state_marginals(net: Network, pi) -> list:
    """Per-junction state distributions (ordered like ``junction.states``).

    ``pi`` may map junction id to a probability vector, map tuples of state
    ids (one per junction) to joint probabilities, or be ``None`` when every
    junction has a single state.
    """
    if pi is None:
        out = []
        for j in net.junctions:
            if len(j.states) != 1:
                raise ValueError(f"junction {j.id} has several states; give a state distribution")
            out.append(np.ones(1))
        return out
    keys = list(pi.keys())
    if keys and isinstance(keys[0], tuple):
        out = [np.zeros(len(j.states)) for j in net.junctions]
        for combo, prob in pi.items():
            if len(combo) != net.n_junctions:
                raise ValueError("joint state tuples need one state per junction")
            for j, sid in zip(net.junctions, combo):
                out[j.id][j.state_index(sid)] += prob
    else:
        out = []
        for j in net.junctions:
            v = pi.get(j.id)
            v = np.ones(1) if v is None and len(j.states) == 1 else v
            if v is None:
                raise ValueError(f"no state distribution for junction {j.id}")
            out.append(np.asarray(v, dtype=float))
    for j, v in zip(net.junctions, out):
        if len(v) != len(j.states) or (v < 0).any() or abs(v.sum() - 1) > 1e-9:
            raise ValueError(f"state distribution of junction {j.id} is not a distribution over its states")
    return out


@dataclass
class RegionCertificate:
    feasible: bool
    flows: dict = field(default_factory=dict)       # (src, dst) -> f
    weights: dict = field(default_factory=dict)     # (junction, state id) -> {phase id: theta}
    service: dict = field(default_factory=dict)     # (src, dst) -> G
    residuals: dict = field(default_factory=dict)
    witness: Optional[dict] = None                  # infeasible: violated family and where

    def to_dict(self) -> dict:
        d = {"feasible": self.feasible, "residuals": self.residuals}
        if self.feasible:
            d["flows"] = [{"from": a, "to": b, "flow": v} for (a, b), v in sorted(self.flows.items())]
            d["service"] = [{"from": a, "to": b, "rate": v} for (a, b), v in sorted(self.service.items())]
            d["weights"] = [
                {"junction": j, "state": z, "phases": {str(p): w for p, w in sorted(th.items())}}
                for (j, z), th in sorted(self.weights.items())
            ]
        else:
            d["witness"] = self.witness
        return d


class _Program:
    """Variable layout and constraint matrices shared by both LP modes."""

    def __init__(self, net: Network, pi, ratios: Optional[Mapping] = None):
        self.net = net
        self.c = CompiledNetwork(net)
        self.marg = state_marginals(net, pi)
        self.ratios = ratios
        c = self.c
        M = c.M
        self.theta_index = {}
        k = M
        for j, junction in enumerate(net.junctions):
            for zi in range(len(junction.states)):
                for pi_ in range(len(junction.phases)):
                    self.theta_index[(j, zi, pi_)] = k
                    k += 1
        self.n_core = k
        self.cons_links = [l.id for l in net.links if not l.exit]

        # simplex rows
        rows = []
        for j, junction in enumerate(net.junctions):
            for zi in range(len(junction.states)):
                row = np.zeros(k)
                for pi_ in range(len(junction.phases)):
                    row[self.theta_index[(j, zi, pi_)]] = 1.0
                rows.append(row)
        self.A_simplex = np.array(rows)

        # service rows: f_m - G_m(theta) <= 0
        S = np.zeros((M, k))
        for i, m in enumerate(c.movements):
            j = int(c.junction_of[i])
            S[i, i] = 1.0
            local = list(c.jmov[j]).index(i)
            for zi in range(len(net.junctions[j].states)):
                w = self.marg[j][zi]
                if w == 0:
                    continue
                for pi_ in range(len(net.junctions[j].phases)):
                    S[i, self.theta_index[(j, zi, pi_)]] -= w * c.rates[j][zi, pi_, local]
        self.A_service = S

        # conservation rows over flow variables only; rhs coefficient per link
        if ratios is None:
            C = np.zeros((len(self.cons_links), k))
            for r, a in enumerate(self.cons_links):
                C[r, :M] = (c.frm == a).astype(float) - (c.to == a).astype(float)
            self.cons_rows = C
            self.cons_link_of_row = list(self.cons_links)
            self.cons_weight = np.ones(len(self.cons_links))
        else:
            rows, link_of, wts = [], [], []
            for i, m in enumerate(c.movements):
                r_m = float(ratios[i])
                row = np.zeros(k)
                row[i] = 1.0
                row[:M] -= r_m * (c.to == m.src)
                rows.append(row)
                link_of.append(m.src)
                wts.append(r_m)
            self.cons_rows = np.array(rows)
            self.cons_link_of_row = link_of
            self.cons_weight = np.array(wts)

    def bounds(self, extra: int):
        return [(0, None)] * (self.n_core + extra)

    def unpack(self, x: np.ndarray) -> tuple:
        c = self.c
        flows = {(m.src, m.dst): float(x[i]) for i, m in enumerate(c.movements)}
        G = -(self.A_service[:, c.M:self.n_core] @ x[c.M:self.n_core])
        service = {(m.src, m.dst): float(G[i]) for i, m in enumerate(c.movements)}
        weights = {}
        for j, junction in enumerate(self.net.junctions):
            for zi, s in enumerate(junction.states):
                weights[(j, s.id)] = {
                    p.id: float(x[self.theta_index[(j, zi, pi_)]]) for pi_, p in enumerate(junction.phases)
                }
        return flows, service, weights

    def residuals(self, x: np.ndarray, lam: np.ndarray) -> dict:
        M = self.c.M
        core = x[:self.n_core]
        rhs = np.array([self.cons_weight[r] * lam[a] for r, a in enumerate(self.cons_link_of_row)])
        return {
            "conservation": float(np.abs(self.cons_rows @ core - rhs).max(initial=0.0)),
            "service": float(max(0.0, (self.A_service @ core).max(initial=0.0))),
            "simplex": float(np.abs(self.A_simplex @ core - 1).max(initial=0.0)),
            "nonnegativity": float(max(0.0, -core.min(initial=0.0))),
        }


def _check_lambda(net: Network, lam: Sequence[float]) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (net.n_links,):
        raise ValueError(f"rate vector needs {net.n_links} entries, one per link")
    if (lam < 0).any():
        raise ValueError("arrival rates must be nonnegative")
    for l in net.links:
        if lam[l.id] > 0 and not l.entry:
            raise ValueError(f"link {l.id} is not an entry link but has a positive rate")
    return lam


def _ratio_vector(net: Network, ratios, c: CompiledNetwork):
    if ratios is None:
        return None
    if isinstance(ratios, np.ndarray):
        return ratios
    # links without given ratios split uniformly, as in the simulator
    fanout = np.bincount(c.frm, minlength=net.n_links)
    out = np.empty(c.M)
    for i, m in enumerate(c.movements):
        given = ratios.get(m.src)
        out[i] = 1.0 / fanout[m.src] if given is None else float(given.get(m.dst, 0.0))
    return out


def _hops_to_exit(net: Network) -> np.ndarray:
    """Shortest movement count from each link to an exit (inf if none)."""
    hops = np.full(net.n_links, np.inf)
    for l in net.links:
        if l.exit:
            hops[l.id] = 0
    movs = net.movements()
    for _ in range(net.n_links):
        changed = False
        for m in movs:
            if hops[m.dst] + 1 < hops[m.src]:
                hops[m.src] = hops[m.dst] + 1
                changed = True
        if not changed:
            break
    return hops


def capacity_feasible(net: Network, pi, lam: Sequence[float], ratios=None) -> RegionCertificate:
    """Decide whether ``lam`` lies in the capacity region.

    Solves an elastic program in which each non-exit link may accumulate a
    deficit ``d >= 0``; ``lam`` is feasible iff the weighted deficit can be
    driven to zero.  Deficits on links farther from an exit cost more (and
    entry links a little more than interior ones), so an infeasible answer
    names the most downstream interior bottleneck.
    """
    lam = _check_lambda(net, lam)
    prog = _Program(net, pi, None)
    rv = _ratio_vector(net, ratios, prog.c)
    if rv is not None:
        prog = _Program(net, pi, rv)
    n_rows = len(prog.cons_link_of_row)
    links = prog.cons_links
    link_pos = {a: k for k, a in enumerate(links)}
    nd = len(links)
    K = prog.n_core

    A_eq_cons = np.zeros((n_rows, K + nd))
    A_eq_cons[:, :K] = prog.cons_rows
    for r, a in enumerate(prog.cons_link_of_row):
        A_eq_cons[r, K + link_pos[a]] = prog.cons_weight[r]
    b_eq_cons = np.array([prog.cons_weight[r] * lam[a] for r, a in enumerate(prog.cons_link_of_row)])
    A_eq_s = np.hstack([prog.A_simplex, np.zeros((prog.A_simplex.shape[0], nd))])
    A_ub = np.hstack([prog.A_service, np.zeros((prog.A_service.shape[0], nd))])

    hops = _hops_to_exit(net)
    cost = np.zeros(K + nd)
    entry = {l.id for l in net.links if l.entry}
    for a, k in link_pos.items():
        # at equal depth an interior link is the preferred culprit over an entry
        cost[K + k] = 1.0 + (hops[a] if math.isfinite(hops[a]) else net.n_links) + 0.5 * (a in entry)

    res = linprog(
        cost,
        A_ub=A_ub if A_ub.size else None,
        b_ub=np.zeros(A_ub.shape[0]) if A_ub.size else None,
        A_eq=np.vstack([A_eq_cons, A_eq_s]),
        b_eq=np.concatenate([b_eq_cons, np.ones(A_eq_s.shape[0])]),
        bounds=[(0, None)] * (K + nd),
        method="highs",
        options=_HIGHS,
    )
    if res.status != 0:
        raise RegionError(f"capacity LP failed: {res.message}")
    x = res.x
    deficit = {a: float(x[K + k]) for a, k in link_pos.items()}
    if max(deficit.values(), default=0.0) <= RESIDUAL_TOL:
        resid = prog.residuals(x[:K], lam)
        if max(resid.values()) > RESIDUAL_TOL:
            raise RegionError(f"feasible LP answer fails residual checks: {resid}")
        flows, service, weights = prog.unpack(x)
        return RegionCertificate(True, flows, weights, service, resid)
    bad = {a: v for a, v in deficit.items() if v > RESIDUAL_TOL}
    return RegionCertificate(
        False,
        residuals={"total_deficit": float(sum(bad.values()))},
        witness={"family": "conservation", "links": {str(a): v for a, v in sorted(bad.items())}},
    )


def max_throughput_multiplier(net: Network, pi, direction: Sequence[float], ratios=None) -> float:
    """Largest ``rho`` with ``rho * direction`` in the (closed) capacity region."""
    direction = _check_lambda(net, direction)
    if not (direction > 0).any():
        raise ValueError("direction must be positive on at least one entry link")
    prog = _Program(net, pi, None)
    rv = _ratio_vector(net, ratios, prog.c)
    if rv is not None:
        prog = _Program(net, pi, rv)
    K = prog.n_core
    n_rows = len(prog.cons_link_of_row)
    A_eq_cons = np.zeros((n_rows, K + 1))
    A_eq_cons[:, :K] = prog.cons_rows
    for r, a in enumerate(prog.cons_link_of_row):
        A_eq_cons[r, K] = -prog.cons_weight[r] * direction[a]
    A_eq_s = np.hstack([prog.A_simplex, np.zeros((prog.A_simplex.shape[0], 1))])
    A_ub = np.hstack([prog.A_service, np.zeros((prog.A_service.shape[0], 1))])
    cost = np.zeros(K + 1)
    cost[K] = -1.0
    res = linprog(
        cost,
        A_ub=A_ub, b_ub=np.zeros(A_ub.shape[0]),
        A_eq=np.vstack([A_eq_cons, A_eq_s]),
        b_eq=np.concatenate([np.zeros(n_rows), np.ones(A_eq_s.shape[0])]),
        bounds=[(0, None)] * (K + 1),
        method="highs",
        options=_HIGHS,
    )
    if res.status == 3:
        raise UnboundedMultiplierError("direction is serviceable at every scale")
    if res.status != 0:
        raise RegionError(f"multiplier LP failed: {res.message}")
    rho = float(res.x[K])
    resid = prog.residuals(res.x[:K], rho * direction)
    if max(resid.values()) > RESIDUAL_TOL:
        raise RegionError(f"multiplier LP answer fails residual checks: {resid}")
    return rho


def scenario_multiplier(scenario) -> float:
    """Boundary multiplier of a scenario's mean arrival rates under its turn ratios."""
    c = scenario.compiled()
    pi = {j: v for j, v in scenario.state_distribution().items()}
    return max_throughput_multiplier(scenario.network, pi, scenario.arrival_rates(), scenario.ratio_vector(c))


class RandomizedCertificateController(Controller):
    """Stationary randomized policy: phase drawn from a certificate's weights.

    Each slot, junction ``j`` in state ``z`` activates phase ``p`` with
    probability ``theta[(j, z)][p]``, independently of the queues.
    """

    name = "randomized-certificate"

    def __init__(self, certificate: RegionCertificate):
        if not certificate.feasible:
            raise ValueError("randomized policy needs a feasible certificate")
        self.certificate = certificate

    def reset(self, cnet, seeds):
        super().reset(cnet, seeds)
        self.rngs = [np.random.default_rng([int(s), 4]) for s in seeds]
        self.cdf = []
        for j in range(cnet.L):
            tab = []
            for sid in cnet.state_ids[j]:
                w = self.certificate.weights[(j, sid)]
                p = np.clip(np.array([w[pid] for pid in cnet.phase_ids[j]]), 0, None)
                cdf = np.cumsum(p / p.sum())
                cdf[-1] = 1.0
                tab.append(cdf)
            self.cdf.append(tab)

    def decide(self, t, Q, z):
        B = Q.shape[0]
        out = np.empty((B, self.cnet.L), dtype=np.intp)
        for b in range(B):
            u = self.rngs[b].random(self.cnet.L)
            for j in range(self.cnet.L):
                out[b, j] = int(np.searchsorted(self.cdf[j][z[b, j]], u[j], side="right"))
        return out
