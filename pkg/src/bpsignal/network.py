"""Road-network data model: links, junctions, movements, phases and rate tables.

A network is a set of links joined by signalized junctions.  Each junction
owns a set of movements (ordered ``(from_link, to_link)`` pairs), a list of
phases (subsets of those movements that may run together) and a finite set
of traffic states that select which service rates apply.

Rates are expressed in vehicles per slot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional


@dataclass(frozen=True, order=True)
class Movement:
    """A vehicle path through a junction from one link to another."""

    src: int
    dst: int

    def __str__(self) -> str:  # pragma: no cover - trivial
        return f"{self.src}->{self.dst}"


@dataclass(frozen=True)
class Link:
    id: int
    capacity: Optional[float] = None  # None means unbounded
    entry: bool = False
    exit: bool = False
    label: Optional[str] = None

    @property
    def bounded(self) -> bool:
        return self.capacity is not None


@dataclass(frozen=True)
class Phase:
    id: int
    movements: frozenset

    def __contains__(self, m: Movement) -> bool:
        return m in self.movements


@dataclass(frozen=True)
class TrafficState:
    id: int
    label: Optional[str] = None


@dataclass(frozen=True)
class RateTable:
    """Service rates keyed by ``(phase id, movement, state id)``.

    Entries that are absent fall back to ``default_saturation`` when the
    movement belongs to the phase.  Movements outside a phase are never
    served, whatever the table says; tables that claim otherwise are
    rejected by :func:`validate_network`.
    """

    entries: dict = field(default_factory=dict)
    default_saturation: Optional[float] = None


@dataclass(frozen=True)
class Junction:
    id: int
    movements: tuple
    phases: tuple
    states: tuple = (TrafficState(0),)
    rates: RateTable = field(default_factory=RateTable)

    def phase(self, phase_id: int) -> Phase:
        for p in self.phases:
            if p.id == phase_id:
                return p
        raise KeyError(f"junction {self.id} has no phase {phase_id}")

    def phase_index(self, phase_id: int) -> int:
        for k, p in enumerate(self.phases):
            if p.id == phase_id:
                return k
        raise KeyError(f"junction {self.id} has no phase {phase_id}")

    def state_index(self, state_id: int) -> int:
        for k, s in enumerate(self.states):
            if s.id == state_id:
                return k
        raise KeyError(f"junction {self.id} has no traffic state {state_id}")

    @property
    def links(self) -> set:
        """Every link touched by one of this junction's movements."""
        out = set()
        for m in self.movements:
            out.add(m.src)
            out.add(m.dst)
        return out


@dataclass(frozen=True)
class Network:
    links: tuple
    junctions: tuple

    @property
    def n_links(self) -> int:
        return len(self.links)

    @property
    def n_junctions(self) -> int:
        return len(self.junctions)

    def link(self, link_id: int) -> Link:
        if not 0 <= link_id < len(self.links) or self.links[link_id].id != link_id:
            raise KeyError(f"unknown link {link_id}")
        return self.links[link_id]

    def junction(self, junction_id: int) -> Junction:
        if not 0 <= junction_id < len(self.junctions) or self.junctions[junction_id].id != junction_id:
            raise KeyError(f"unknown junction {junction_id}")
        return self.junctions[junction_id]

    def movements(self) -> list:
        """All movements in junction order, then junction-local order."""
        return [m for j in self.junctions for m in j.movements]

    def outgoing(self, link_id: int) -> list:
        return [m for m in self.movements() if m.src == link_id]

    def with_capacity(self, capacity: Optional[float]) -> "Network":
        """Copy with every non-exit link given ``capacity`` (None = unbounded)."""
        links = tuple(
            Link(l.id, l.capacity if l.exit else capacity, l.entry, l.exit, l.label)
            for l in self.links
        )
        return Network(links, self.junctions)


# ---------------------------------------------------------------------------
# rate function


def junction_rate(junction: Junction, phase_id: int, m: Movement, state_id: int) -> float:
    phase = junction.phase(phase_id)
    junction.state_index(state_id)
    if m not in junction.movements:
        raise KeyError(f"movement {m} does not belong to junction {junction.id}")
    if m not in phase:
        return 0.0
    key = (phase_id, m, state_id)
    if key in junction.rates.entries:
        return float(junction.rates.entries[key])
    if junction.rates.default_saturation is None:
        raise KeyError(f"no rate for {key} in junction {junction.id} and no default")
    return float(junction.rates.default_saturation)


def rate(net: Network, j: int, p: int, m: Movement, z: int) -> float:
    """Vehicles per slot that movement ``m`` passes at junction ``j`` when
    phase ``p`` is active under traffic state ``z``."""
    return junction_rate(net.junction(j), p, m, z)


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    ids: tuple = ()

    def __str__(self) -> str:
        return f"{self.kind}: {self.message}"


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set:
        return {v.kind for v in self.violations}

    def add(self, kind: str, message: str, *ids) -> None:
        self.violations.append(Violation(kind, message, tuple(ids)))

    def __str__(self) -> str:
        if self.ok:
            return "valid"
        return "\n".join(str(v) for v in self.violations)


def validate_network(net: Network) -> ValidationReport:
    """Check every structural invariant of ``net``; never raises."""
    rep = ValidationReport()

    ids = [l.id for l in net.links]
    if ids != list(range(len(ids))):
        rep.add("link ids", "link ids must be unique and dense from 0", *ids)
    jids = [j.id for j in net.junctions]
    if jids != list(range(len(jids))):
        rep.add("junction ids", "junction ids must be unique and dense from 0", *jids)
    known = set(ids)

    for l in net.links:
        if l.capacity is not None and not (l.capacity > 0 and math.isfinite(l.capacity)):
            rep.add("capacity", f"link {l.id} capacity must be positive or unbounded", l.id)
        if l.entry and l.exit:
            rep.add("entry exit", f"link {l.id} cannot be both entry and exit", l.id)

    owner = {}
    for j in net.junctions:
        if len(set(j.movements)) != len(j.movements):
            rep.add("duplicate movement", f"junction {j.id} lists a movement twice", j.id)
        for m in j.movements:
            if m.src == m.dst:
                rep.add("self movement", f"movement {m} in junction {j.id} loops on itself", j.id)
            for end in (m.src, m.dst):
                if end not in known:
                    rep.add("unknown link", f"movement {m} in junction {j.id} references link {end}", j.id, end)
            if m in owner and owner[m] != j.id:
                rep.add(
                    "movement shared across junctions",
                    f"movement {m} belongs to junctions {owner[m]} and {j.id}",
                    owner[m], j.id,
                )
            owner.setdefault(m, j.id)

        if not j.phases:
            rep.add("no phases", f"junction {j.id} has no phases", j.id)
        pids = [p.id for p in j.phases]
        if len(set(pids)) != len(pids):
            rep.add("duplicate phase id", f"junction {j.id} repeats a phase id", j.id)
        movs = set(j.movements)
        served = set()
        for p in j.phases:
            if not p.movements:
                rep.add("empty phase", f"phase {p.id} of junction {j.id} has no movements", j.id, p.id)
            stray = p.movements - movs
            if stray:
                rep.add("phase movement", f"phase {p.id} of junction {j.id} uses foreign movements", j.id, p.id)
            served |= p.movements
        for m in j.movements:
            if m not in served:
                rep.add("unreachable movement", f"movement {m} of junction {j.id} is in no phase", j.id)

        if not j.states:
            rep.add("no states", f"junction {j.id} has no traffic states", j.id)
        sids = [s.id for s in j.states]
        if len(set(sids)) != len(sids):
            rep.add("duplicate state id", f"junction {j.id} repeats a state id", j.id)

        d = j.rates.default_saturation
        if d is not None and not (d >= 0 and math.isfinite(d)):
            rep.add("rate", f"junction {j.id} default saturation must be finite and >= 0", j.id)
        for (pid, m, sid), r in j.rates.entries.items():
            if pid not in pids or sid not in sids or m not in movs:
                rep.add("rate key", f"rate entry {(pid, str(m), sid)} of junction {j.id} references unknown ids", j.id, pid)
                continue
            if not (r >= 0 and math.isfinite(r)):
                rep.add("rate", f"rate {r} for {(pid, str(m), sid)} in junction {j.id} is not finite and >= 0", j.id, pid)
            if m not in j.phase(pid) and r != 0:
                rep.add(
                    "rate outside phase",
                    f"movement {m} is not in phase {pid} of junction {j.id} but has rate {r}",
                    j.id, pid,
                )
        if d is None:
            for p in j.phases:
                for m in p.movements:
                    for sid in sids:
                        if (p.id, m, sid) not in j.rates.entries:
                            rep.add("missing rate", f"no rate for {(p.id, str(m), sid)} in junction {j.id}", j.id, p.id)

    by_id = {l.id: l for l in net.links}
    out_links = {m.src for m in owner}
    for m in owner:
        src = by_id.get(m.src)
        if src is not None and src.exit:
            rep.add("exit has movement", f"exit link {m.src} has outgoing movement {m}", m.src)
    for l in net.links:
        if not l.exit and l.id not in out_links:
            rep.add("dead end", f"link {l.id} is not an exit but has no outgoing movement", l.id)

    return rep


class NetworkError(ValueError):
    """Raised when a network fails to parse or validate."""

    def __init__(self, message: str, report: Optional[ValidationReport] = None):
        super().__init__(message)
        self.report = report


def check_network(net: Network) -> Network:
    rep = validate_network(net)
    if not rep.ok:
        raise NetworkError(f"invalid network:\n{rep}", rep)
    return net


def make_junction(
    jid: int,
    movements: Iterable,
    phases: Iterable,
    states: Iterable = (0,),
    default_saturation: Optional[float] = 1.0,
    rates: Optional[dict] = None,
) -> Junction:
    """Convenience constructor using plain tuples.

    ``phases`` is an iterable of ``(phase_id, [movement indices])``; ``rates``
    maps ``(phase_id, movement_index, state_id)`` to a rate.
    """
    movs = tuple(Movement(a, b) for a, b in movements)
    ph = tuple(Phase(pid, frozenset(movs[k] for k in idx)) for pid, idx in phases)
    st = tuple(s if isinstance(s, TrafficState) else TrafficState(int(s)) for s in states)
    entries = {(pid, movs[k], sid): float(r) for (pid, k, sid), r in (rates or {}).items()}
    return Junction(jid, movs, ph, st, RateTable(entries, default_saturation))
