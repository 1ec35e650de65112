"""JSON network files.

Format (all ids are dense integers starting at 0)::

    {
      "links": [{"id": 0, "capacity": 100 | null, "entry": true, "exit": false,
                 "label": "optional"}, ...],
      "junctions": [{
          "id": 0,
          "movements": [[from, to], ...],
          "phases": [{"id": 0, "movements": [0, 2]}, ...],   # indices into movements
          "states": [0, 1] | [{"id": 0, "label": "dry"}, ...],
          "rates": [{"phase": 0, "movement": 2, "state": 0, "rate": 1.5}, ...],
          "default_saturation": 1.0 | null
      }, ...]
    }

Unknown keys are rejected.  See ``docs/formats.md``.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Union

from .network import (
    Junction,
    Link,
    Movement,
    Network,
    NetworkError,
    Phase,
    RateTable,
    TrafficState,
    validate_network,
)

LINK_KEYS = {"id", "capacity", "entry", "exit", "label"}
JUNCTION_KEYS = {"id", "movements", "phases", "states", "rates", "default_saturation"}
PHASE_KEYS = {"id", "movements"}
RATE_KEYS = {"phase", "movement", "state", "rate"}
STATE_KEYS = {"id", "label"}


def _fail(where: str, msg: str):
    raise NetworkError(f"{where}: {msg}")


def _keys(obj, allowed: set, required: set, where: str) -> None:
    if not isinstance(obj, dict):
        _fail(where, "expected an object")
    extra = set(obj) - allowed
    if extra:
        _fail(where, f"unknown keys {sorted(extra)}")
    missing = required - set(obj)
    if missing:
        _fail(where, f"missing keys {sorted(missing)}")


def _int(v, where: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        _fail(where, f"expected an integer, got {v!r}")
    return v


def _num(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(where, f"expected a number, got {v!r}")
    return float(v)


def network_from_dict(doc: dict) -> Network:
    _keys(doc, {"links", "junctions"}, {"links", "junctions"}, "network")
    if not isinstance(doc["links"], list) or not isinstance(doc["junctions"], list):
        _fail("network", "links and junctions must be arrays")

    links = []
    for k, d in enumerate(doc["links"]):
        where = f"links[{k}]"
        _keys(d, LINK_KEYS, {"id"}, where)
        cap = d.get("capacity")
        cap = None if cap is None else _num(cap, where + ".capacity")
        links.append(Link(
            _int(d["id"], where + ".id"),
            cap,
            bool(d.get("entry", False)),
            bool(d.get("exit", False)),
            d.get("label"),
        ))
    seen = [l.id for l in links]
    if len(set(seen)) != len(seen):
        _fail("links", "duplicate link ids")
    links.sort(key=lambda l: l.id)

    junctions = []
    for k, d in enumerate(doc["junctions"]):
        where = f"junctions[{k}]"
        _keys(d, JUNCTION_KEYS, {"id", "movements", "phases"}, where)
        movs = []
        for i, pair in enumerate(d["movements"]):
            if not isinstance(pair, list) or len(pair) != 2:
                _fail(f"{where}.movements[{i}]", "expected [from, to]")
            movs.append(Movement(_int(pair[0], f"{where}.movements[{i}][0]"),
                                 _int(pair[1], f"{where}.movements[{i}][1]")))
        phases = []
        for i, p in enumerate(d["phases"]):
            pw = f"{where}.phases[{i}]"
            _keys(p, PHASE_KEYS, PHASE_KEYS, pw)
            members = set()
            for idx in p["movements"]:
                idx = _int(idx, pw + ".movements")
                if not 0 <= idx < len(movs):
                    _fail(pw, f"movement index {idx} out of range")
                members.add(movs[idx])
            phases.append(Phase(_int(p["id"], pw + ".id"), frozenset(members)))
        pids = [p.id for p in phases]
        if len(set(pids)) != len(pids):
            _fail(where, "duplicate phase ids")

        states = []
        for i, s in enumerate(d.get("states", [0])):
            sw = f"{where}.states[{i}]"
            if isinstance(s, dict):
                _keys(s, STATE_KEYS, {"id"}, sw)
                states.append(TrafficState(_int(s["id"], sw + ".id"), s.get("label")))
            else:
                states.append(TrafficState(_int(s, sw)))
        sids = [s.id for s in states]
        if len(set(sids)) != len(sids):
            _fail(where, "duplicate state ids")

        entries = {}
        for i, r in enumerate(d.get("rates", [])):
            rw = f"{where}.rates[{i}]"
            _keys(r, RATE_KEYS, RATE_KEYS, rw)
            idx = _int(r["movement"], rw + ".movement")
            if not 0 <= idx < len(movs):
                _fail(rw, f"movement index {idx} out of range")
            key = (_int(r["phase"], rw + ".phase"), movs[idx], _int(r["state"], rw + ".state"))
            if key in entries:
                _fail(rw, "duplicate rate entry")
            entries[key] = _num(r["rate"], rw + ".rate")
        default = d.get("default_saturation")
        default = None if default is None else _num(default, where + ".default_saturation")

        junctions.append(Junction(
            _int(d["id"], where + ".id"),
            tuple(movs),
            tuple(phases),
            tuple(states),
            RateTable(entries, default),
        ))
    jids = [j.id for j in junctions]
    if len(set(jids)) != len(jids):
        _fail("junctions", "duplicate junction ids")
    junctions.sort(key=lambda j: j.id)

    net = Network(tuple(links), tuple(junctions))
    rep = validate_network(net)
    if not rep.ok:
        raise NetworkError(f"invalid network:\n{rep}", rep)
    return net


def load_network(text: Union[bytes, str]) -> Network:
    """Parse and validate a JSON network document."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    if not text.strip():
        raise NetworkError("empty network document")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise NetworkError(f"line {e.lineno} column {e.colno}: {e.msg}") from e
    return network_from_dict(doc)


def read_network(path: Union[str, Path]) -> Network:
    return load_network(Path(path).read_bytes())


def network_to_dict(net: Network) -> dict:
    links = []
    for l in net.links:
        d = {"id": l.id, "capacity": l.capacity, "entry": l.entry, "exit": l.exit}
        if l.label is not None:
            d["label"] = l.label
        links.append(d)
    junctions = []
    for j in net.junctions:
        index = {m: k for k, m in enumerate(j.movements)}
        states = [s.id if s.label is None else {"id": s.id, "label": s.label} for s in j.states]
        rates = [
            {"phase": pid, "movement": index[m], "state": sid, "rate": r}
            for (pid, m, sid), r in sorted(
                j.rates.entries.items(), key=lambda kv: (kv[0][0], index[kv[0][1]], kv[0][2])
            )
        ]
        junctions.append({
            "id": j.id,
            "movements": [[m.src, m.dst] for m in j.movements],
            "phases": [{"id": p.id, "movements": sorted(index[m] for m in p.movements)} for p in j.phases],
            "states": states,
            "rates": rates,
            "default_saturation": j.rates.default_saturation,
        })
    return {"links": links, "junctions": junctions}


def save_network(net: Network) -> bytes:
    return (json.dumps(network_to_dict(net), indent=2) + "\n").encode("utf-8")
