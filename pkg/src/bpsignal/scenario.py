"""Scenario files: a network plus demand, routing, states and a controller.

Scenario JSON::

    {
      "name": "fig1",
      "network": "fig1_lanes.json" | {...inline network...},
      "horizon": 14400, "seed": 7, "slot_seconds": 1.0,
      "link_capacity": 100,                      # optional, non-exit links
      "controller": "backpressure",
      "controller_params": {"backpressure": {"tie": "lowest-phase-id"},
                            "fixed-time": {"plans": {"0": [[0, 15], [1, 15]]}},
                            "scats": {"c_min": 40, "c_max": 120, ...}},
      "arrivals": {"0": {"kind": "iid", "pmf": [0.5, 0.5]}, ...},
      "turn_ratios": {"0": {"3": 0.75, "5": 0.25}, ...},
      "states": {"0": {"kind": "iid", "pi": [0.8, 0.2]}},
      "initial_queues": {"0": 5.0}
    }

Relative network paths resolve against the scenario file's directory.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .baselines import FixedTimeController, FixedTimePlan, ScatsController, ScatsParams
from .compiled import CompiledNetwork
from .controller import BackpressureController, Controller, TiePolicy
from .netfile import network_from_dict, network_to_dict, read_network
from .network import Network
from .processes import ArrivalProcess, StateProcess, arrivals_from_dict, states_from_dict

CONTROLLERS = ("backpressure", "fixed-time", "scats")
SCENARIO_KEYS = {
    "name", "network", "horizon", "seed", "slot_seconds", "link_capacity", "controller",
    "controller_params", "arrivals", "turn_ratios", "states", "initial_queues", "rho",
}


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    network: Network
    horizon: int
    seed: int = 0
    arrivals: dict = field(default_factory=dict)       # link -> ArrivalProcess
    turn_ratios: dict = field(default_factory=dict)    # link -> {to_link: fraction}
    states: dict = field(default_factory=dict)         # junction -> StateProcess
    controller: str = "backpressure"
    controller_params: dict = field(default_factory=dict)
    initial_queues: dict = field(default_factory=dict)
    slot_seconds: float = 1.0
    link_capacity: Optional[float] = None
    name: str = "scenario"
    rho: float = 1.0

    def __post_init__(self):
        validate_scenario(self)

    # -- derived -----------------------------------------------------------

    def compiled(self) -> CompiledNetwork:
        cached = self.__dict__.get("_cnet")
        if cached is None:
            cached = CompiledNetwork(self.network)
            object.__setattr__(self, "_cnet", cached)
        return cached

    def ratio_vector(self, cnet: Optional[CompiledNetwork] = None) -> np.ndarray:
        cnet = cnet or self.compiled()
        out = np.empty(cnet.M)
        for i, m in enumerate(cnet.movements):
            out[i] = self.ratio(m.src, m.dst)
        return out

    def ratio(self, src: int, dst: int) -> float:
        given = self.turn_ratios.get(src)
        if given is None:
            n = sum(1 for m in self.network.movements() if m.src == src)
            return 1.0 / n
        return float(given.get(dst, 0.0))

    def arrival_rates(self) -> np.ndarray:
        lam = np.zeros(self.network.n_links)
        for a, proc in self.arrivals.items():
            lam[a] = proc.rate
        return lam

    def state_distribution(self) -> dict:
        """Stationary per-junction state distributions, keyed by junction id."""
        out = {}
        for j in self.network.junctions:
            proc = self.states.get(j.id)
            if proc is None:
                pi = np.zeros(len(j.states))
                pi[0] = 1.0
            else:
                pi = proc.stationary()
            out[j.id] = pi
        return out

    # -- variants ----------------------------------------------------------

    def scaled(self, rho: float) -> "Scenario":
        """All arrival rates multiplied by ``rho`` (relative to this scenario)."""
        arr = {a: p.scaled(rho) for a, p in self.arrivals.items()}
        return replace(self, arrivals=arr, rho=self.rho * rho)

    def with_controller(self, name: str) -> "Scenario":
        return replace(self, controller=name)

    def with_horizon(self, horizon: int) -> "Scenario":
        return replace(self, horizon=horizon)

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "network": network_to_dict(self.network),
            "horizon": self.horizon,
            "seed": self.seed,
            "slot_seconds": self.slot_seconds,
            "controller": self.controller,
            "controller_params": self.controller_params,
            "arrivals": {str(a): p.to_dict() for a, p in sorted(self.arrivals.items())},
            "turn_ratios": {str(a): {str(b): r for b, r in sorted(d.items())}
                            for a, d in sorted(self.turn_ratios.items())},
            "states": {str(j): p.to_dict() for j, p in sorted(self.states.items())},
            "initial_queues": {str(a): v for a, v in sorted(self.initial_queues.items())},
            "rho": self.rho,
        }

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def validate_scenario(s: Scenario) -> None:
    net = s.network
    if int(s.horizon) != s.horizon or s.horizon < 0:
        raise ScenarioError("horizon must be a nonnegative integer")
    if s.controller not in CONTROLLERS:
        raise ScenarioError(f"controller must be one of {CONTROLLERS}, got {s.controller!r}")
    for name in s.controller_params:
        if name not in CONTROLLERS:
            raise ScenarioError(f"parameters given for unknown controller {name!r}")
    for a, proc in s.arrivals.items():
        if not 0 <= a < net.n_links:
            raise ScenarioError(f"arrivals for unknown link {a}")
        if not net.links[a].entry:
            raise ScenarioError(f"link {a} is not an entry link but has arrivals")
        if not isinstance(proc, ArrivalProcess):
            raise ScenarioError(f"arrival process for link {a} is not an ArrivalProcess")
    outs = {}
    for m in net.movements():
        outs.setdefault(m.src, set()).add(m.dst)
    for a, d in s.turn_ratios.items():
        if a not in outs:
            raise ScenarioError(f"turn ratios given for link {a}, which has no outgoing movements")
        stray = set(d) - outs[a]
        if stray:
            raise ScenarioError(f"turn ratios for link {a} name non-movements to {sorted(stray)}")
        vals = list(d.values())
        if any(v < 0 for v in vals) or abs(sum(vals) - 1) > 1e-9:
            raise ScenarioError(f"turn ratios for link {a} must be >= 0 and sum to 1")
    for j, proc in s.states.items():
        if not 0 <= j < net.n_junctions:
            raise ScenarioError(f"state process for unknown junction {j}")
        n = len(net.junctions[j].states)
        if len(proc.stationary()) != n:
            raise ScenarioError(f"state process for junction {j} must cover its {n} states")
    for a, v in s.initial_queues.items():
        if not 0 <= a < net.n_links or net.links[a].exit or v < 0:
            raise ScenarioError(f"bad initial queue for link {a}")
        cap = net.links[a].capacity
        if cap is not None and v > cap:
            raise ScenarioError(f"initial queue on link {a} exceeds its capacity")


def _int_keys(d: dict, what: str) -> dict:
    try:
        return {int(k): v for k, v in d.items()}
    except ValueError as e:
        raise ScenarioError(f"{what} keys must be integer ids") from e


def scenario_from_dict(doc: dict, base: Optional[Path] = None) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a JSON object")
    extra = set(doc) - SCENARIO_KEYS
    if extra:
        raise ScenarioError(f"unknown scenario keys {sorted(extra)}")
    for key in ("network", "horizon"):
        if key not in doc:
            raise ScenarioError(f"scenario missing {key!r}")
    netdoc = doc["network"]
    if isinstance(netdoc, str):
        path = Path(netdoc)
        if not path.is_absolute() and base is not None:
            path = base / path
        net = read_network(path)
    else:
        net = network_from_dict(netdoc)
    cap = doc.get("link_capacity")
    if cap is not None:
        net = net.with_capacity(float(cap))
    try:
        arrivals = {a: arrivals_from_dict(d) for a, d in _int_keys(doc.get("arrivals", {}), "arrivals").items()}
        states = {j: states_from_dict(d) for j, d in _int_keys(doc.get("states", {}), "states").items()}
    except ValueError as e:
        raise ScenarioError(str(e)) from e
    ratios = {a: {int(b): float(r) for b, r in d.items()}
              for a, d in _int_keys(doc.get("turn_ratios", {}), "turn_ratios").items()}
    initial = {a: float(v) for a, v in _int_keys(doc.get("initial_queues", {}), "initial_queues").items()}
    return Scenario(
        network=net,
        horizon=int(doc["horizon"]),
        seed=int(doc.get("seed", 0)),
        arrivals=arrivals,
        turn_ratios=ratios,
        states=states,
        controller=doc.get("controller", "backpressure"),
        controller_params=copy.deepcopy(doc.get("controller_params", {})),
        initial_queues=initial,
        slot_seconds=float(doc.get("slot_seconds", 1.0)),
        link_capacity=cap,
        name=doc.get("name", "scenario"),
        rho=float(doc.get("rho", 1.0)),
    )


def load_scenario(path: Union[str, Path]) -> Scenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ScenarioError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from e
    return scenario_from_dict(doc, base=path.parent)


def build_controller(scenario: Scenario, name: Optional[str] = None) -> Controller:
    name = name or scenario.controller
    params = dict(scenario.controller_params.get(name, {}))
    try:
        if name == "backpressure":
            return BackpressureController(TiePolicy(params.pop("tie", TiePolicy.LOWEST)), **params)
        if name == "fixed-time":
            plans = {
                int(j): FixedTimePlan(tuple((int(p), int(d)) for p, d in steps))
                for j, steps in params.pop("plans", {}).items()
            }
            return FixedTimeController(plans, **params)
        if name == "scats":
            if "library" in params:
                params["library"] = tuple(tuple(float(x) for x in plan) for plan in params["library"])
            return ScatsController(ScatsParams(**params))
    except TypeError as e:
        raise ScenarioError(f"bad parameters for {name}: {e}") from e
    raise ScenarioError(f"unknown controller {name!r}")


DATA = Path(__file__).parent / "data"


def shipped(name: str) -> Path:
    """Path of a scenario or network file shipped with the package."""
    path = DATA / name
    if not path.suffix:
        path = path.with_suffix(".json")
    if not path.exists():
        raise FileNotFoundError(f"no shipped file {name!r} in {DATA}")
    return path
