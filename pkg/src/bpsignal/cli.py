"""Command-line front end.

Subcommands::

    bpsignal simulate --scenario FILE [--controller NAME] [--seed N] [--rho R] [--horizon T] --out DIR
    bpsignal capacity --network FILE (--lambda V | --direction V) [--pi SPEC] [--scenario FILE] --out DIR
    bpsignal sweep    --scenario FILE [--controllers A,B] [--rho-min] [--rho-max] [--resolution] [--seeds] --out DIR
    bpsignal compare  --scenario FILE [--controllers A,B] [--rho R] [--seed N] --out DIR
    bpsignal replay   --manifest FILE [--out DIR]

Every run writes ``manifest.json`` next to its artifacts, recording the
scenario hash, seed, package versions, the normalized command line and the
SHA-256 of every artifact; ``replay`` re-executes a manifest and checks
that each artifact is reproduced byte for byte.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.
``--out`` defaults to ``$BPSIGNAL_OUT`` (or ``./bpsignal-out``).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from . import export, plotting
from .analysis.region import (
    RegionError,
    capacity_feasible,
    max_throughput_multiplier,
    scenario_multiplier,
)
from .analysis.stability import drift_estimate, stability_statistic
from .analysis.sweep import NoCapacityBreach, StabilityBelow, empirical_multiplier
from .netfile import read_network
from .network import NetworkError
from .scenario import CONTROLLERS, ScenarioError, load_scenario, shipped
from .simulator import SimulationError, run, run_replicas

ENV_OUT = "BPSIGNAL_OUT"


class ConfigError(Exception):
    """Bad user input: exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# argument helpers


def _resolve(path: str) -> Path:
    """An existing file path, or the name of a file shipped with the package."""
    p = Path(path)
    if p.exists():
        return p.resolve()
    try:
        return shipped(p.name)
    except FileNotFoundError:
        raise ConfigError(f"no such file: {path}") from None


def _floats(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


def _controllers(text: str) -> list:
    names = [x.strip() for x in text.split(",") if x.strip()]
    for n in names:
        if n not in CONTROLLERS:
            raise ConfigError(f"unknown controller {n!r}; choose from {', '.join(CONTROLLERS)}")
    if not names:
        raise ConfigError("no controllers given")
    return names


def _rate_vector(net, values: list, what: str) -> np.ndarray:
    """Full per-link vector from either all links or just the entry links."""
    entries = [l.id for l in net.links if l.entry]
    lam = np.zeros(net.n_links)
    if len(values) == net.n_links:
        lam[:] = values
    elif len(values) == len(entries):
        lam[entries] = values
    else:
        raise ConfigError(
            f"--{what} needs {len(entries)} values (entry links {entries}) or {net.n_links} (all links)"
        )
    return lam


def _pi(spec: Optional[str]) -> Optional[dict]:
    """``"0:0.8,0.2;1:1"`` -> ``{0: [0.8, 0.2], 1: [1.0]}``."""
    if not spec:
        return None
    out = {}
    for part in spec.split(";"):
        if not part.strip():
            continue
        j, _, probs = part.partition(":")
        try:
            out[int(j)] = _floats(probs)
        except ValueError:
            raise ConfigError(f"bad --pi entry {part!r}; expected JUNCTION:P0,P1,...") from None
    return out


def _out_dir(args) -> Path:
    out = args.out or os.environ.get(ENV_OUT) or "bpsignal-out"
    return Path(out)


def _versions() -> dict:
    import matplotlib
    import scipy

    return {
        "bpsignal": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "matplotlib": matplotlib.__version__,
        "python": platform.python_version(),
    }


def _load_scenario(args):
    scen = load_scenario(_resolve(args.scenario))
    if getattr(args, "horizon", None) is not None:
        if args.horizon < 0:
            raise ConfigError("--horizon must be >= 0")
        scen = scen.with_horizon(args.horizon)
    rho = getattr(args, "rho", None)
    if rho is not None:
        if rho <= 0:
            raise ConfigError("--rho must be positive")
        scen = scen.scaled(rho)
    return scen


class _Artifacts:
    """Collects written files so the manifest can list their digests."""

    def __init__(self, out: Path):
        self.out = out
        self.files = {}

    def write(self, name: str, data: bytes) -> None:
        export.atomic_write(self.out / name, data)
        self.files[name] = hashlib.sha256(data).hexdigest()


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args, art: _Artifacts) -> dict:
    scen = _load_scenario(args)
    if args.controller:
        scen = scen.with_controller(args.controller)
    seed = scen.seed if args.seed is None else args.seed
    trace = run(scen, seed=seed, record_flows=False)
    art.write("trace.csv", export.trace_csv(trace))
    if trace.horizon > 0:
        grid = sorted({float(v) for v in args.v_grid} | {10.0 * scen.network.n_links})
        report = stability_statistic(trace, grid)
        art.write("stability.csv", export.stability_csv(report))
        art.write("drift.csv", export.drift_csv(drift_estimate(trace)))
        if not args.no_plots:
            art.write("queues-per-link.svg", plotting.queues_per_link(trace))
    final = float(trace.total_queue[-1])
    print(f"simulated {trace.horizon} slots with {trace.controller}: final total queue {final:.3f}, "
          f"capacity breached: {'yes' if trace.breached() else 'no'}")
    return {"scenario_hash": scen.hash(), "seed": seed, "controller": scen.controller}


def cmd_capacity(args, art: _Artifacts) -> dict:
    net = read_network(_resolve(args.network))
    if args.link_capacity is not None:
        net = net.with_capacity(args.link_capacity)
    ratios = None
    pi = _pi(args.pi)
    if args.scenario:
        scen = load_scenario(_resolve(args.scenario))
        if pi is None:
            pi = scen.state_distribution()
        if args.turn_ratios:
            ratios = scen.ratio_vector()
    if (args.lam is None) == (args.direction is None):
        raise ConfigError("give exactly one of --lambda or --direction")
    try:
        if args.lam is not None:
            lam = _rate_vector(net, _floats(args.lam), "lambda")
            cert = capacity_feasible(net, pi, lam, ratios)
            verdict = "feasible" if cert.feasible else "infeasible"
            art.write("certificate.json", export.json_bytes(cert.to_dict()))
            print(verdict)
            if not cert.feasible:
                print(f"witness: {cert.witness['family']} at links {', '.join(cert.witness['links'])}")
            return {"verdict": verdict}
        d = _rate_vector(net, _floats(args.direction), "direction")
        rho = max_throughput_multiplier(net, pi, d, ratios)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    art.write("multiplier.json", export.json_bytes({"direction": [float(x) for x in d], "rho_star": round(rho, 9)}))
    print(f"rho* = {rho:.6f}")
    return {"rho_star": round(rho, 9)}


def _criterion(args):
    if args.criterion == "no-breach":
        return NoCapacityBreach()
    V = args.V if args.V is not None else float("inf")
    return StabilityBelow(V, args.tau)


def cmd_sweep(args, art: _Artifacts) -> dict:
    scen = _load_scenario(args)
    if not 0 < args.rho_min < args.rho_max:
        raise ConfigError("rho range must satisfy 0 < rho-min < rho-max")
    seeds = _ints(args.seeds) if args.seeds else [scen.seed]
    results = []
    for name in _controllers(args.controllers):
        r = empirical_multiplier(scen, name, _criterion(args), args.rho_min, args.rho_max,
                                 args.resolution, seeds)
        results.append(r)
        flag = " (upper bound of range)" if r.at_upper_bound else ""
        print(f"{name}: rho_hat = {r.rho_hat:.2f}{flag}")
    art.write("sweep.csv", export.sweep_csv(results))
    art.write("sweep.json", export.json_bytes([r.to_dict() for r in results]))
    if not args.no_plots:
        art.write("sweep-multiplier-bar.svg", plotting.sweep_multiplier_bar(results))
    return {"scenario_hash": scen.hash(), "seeds": seeds}


def cmd_compare(args, art: _Artifacts) -> dict:
    scen = _load_scenario(args)
    seed = scen.seed if args.seed is None else args.seed
    summary = {}
    for name in _controllers(args.controllers):
        trace = run_replicas(scen.with_controller(name), [seed])[0]
        if trace.horizon == 0:
            raise ConfigError("cannot compare controllers over an empty horizon")
        summary[name] = plotting.queue_summary(trace)
        links, mx, avg = summary[name]
        print(f"{name}: max queue {float(mx.max()):.3f}, mean queue {float(avg.mean()):.3f}, "
              f"breached: {'yes' if trace.breached() else 'no'}")
    art.write("compare.csv", export.compare_csv(summary))
    if not args.no_plots:
        art.write("max-queue-comparison.svg", plotting.queue_comparison(summary, "max"))
        art.write("avg-queue-comparison.svg", plotting.queue_comparison(summary, "avg"))
    return {"scenario_hash": scen.hash(), "seed": seed}


COMMANDS = {
    "simulate": cmd_simulate,
    "capacity": cmd_capacity,
    "sweep": cmd_sweep,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bpsignal", description="Backpressure signal control simulator and analysis tools.")
    p.add_argument("--version", action="version", version=f"bpsignal {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, scenario=True):
        if scenario:
            sp.add_argument("--scenario", required=True, help="scenario JSON (path or shipped name)")
        sp.add_argument("--out", help=f"output directory (default ${ENV_OUT} or ./bpsignal-out)")

    s = sub.add_parser("simulate", help="run one scenario and write its trace")
    common(s)
    s.add_argument("--controller", choices=CONTROLLERS)
    s.add_argument("--seed", type=int)
    s.add_argument("--rho", type=float, help="scale all arrival rates")
    s.add_argument("--horizon", type=int)
    s.add_argument("--v-grid", type=float, nargs="*", default=[1, 10, 100], dest="v_grid")
    s.add_argument("--no-plots", action="store_true")

    c = sub.add_parser("capacity", help="capacity-region feasibility or boundary multiplier")
    c.add_argument("--network", required=True)
    c.add_argument("--lambda", dest="lam", help="arrival rates (entry links or all links)")
    c.add_argument("--direction", help="rate direction for the boundary multiplier")
    c.add_argument("--pi", help="state distribution, e.g. '0:0.8,0.2;1:1'")
    c.add_argument("--scenario", help="take the state distribution (and turn ratios) from a scenario")
    c.add_argument("--turn-ratios", action="store_true", help="constrain flows by the scenario's turn ratios")
    c.add_argument("--link-capacity", type=float)
    common(c, scenario=False)

    w = sub.add_parser("sweep", help="largest demand multiplier meeting a criterion")
    common(w)
    w.add_argument("--controllers", default=",".join(CONTROLLERS))
    w.add_argument("--rho-min", type=float, default=0.5)
    w.add_argument("--rho-max", type=float, default=2.0)
    w.add_argument("--resolution", type=float, default=0.05)
    w.add_argument("--seeds", help="comma-separated seeds (default: the scenario seed)")
    w.add_argument("--criterion", choices=("no-breach", "stability"), default="no-breach")
    w.add_argument("--V", type=float, help="threshold for the stability criterion")
    w.add_argument("--tau", type=float, default=0.01)
    w.add_argument("--horizon", type=int)
    w.add_argument("--no-plots", action="store_true")

    m = sub.add_parser("compare", help="per-link queue statistics across controllers")
    common(m)
    m.add_argument("--controllers", default=",".join(CONTROLLERS))
    m.add_argument("--rho", type=float)
    m.add_argument("--seed", type=int)
    m.add_argument("--horizon", type=int)
    m.add_argument("--no-plots", action="store_true")

    r = sub.add_parser("replay", help="re-run a manifest and verify its artifacts")
    r.add_argument("--manifest", required=True)
    r.add_argument("--out", help="directory for the re-run (default: a 'replay' folder beside the manifest)")
    return p


def _normalized_argv(args) -> list:
    """Command line with paths made absolute and ``--out`` removed."""
    argv = [args.command]
    for key, value in sorted(vars(args).items()):
        if key in ("command", "out") or value is None or value is False:
            continue
        flag = "--" + {"lam": "lambda", "v_grid": "v-grid"}.get(key, key.replace("_", "-"))
        if key in ("scenario", "network"):
            value = str(_resolve(value))
        if value is True:
            argv.append(flag)
        elif isinstance(value, list):
            argv.append(flag)
            argv.extend(repr(float(v)) for v in value)
        else:
            argv.extend([flag, str(value)])
    return argv


def _execute(args) -> int:
    out = _out_dir(args)
    art = _Artifacts(out)
    info = COMMANDS[args.command](args, art)
    manifest = {
        "command": args.command,
        "argv": _normalized_argv(args),
        "versions": _versions(),
        "artifacts": dict(sorted(art.files.items())),
    }
    manifest.update(info)
    export.atomic_write(out / "manifest.json", export.json_bytes(manifest))
    return 0


def _replay(args) -> int:
    path = Path(args.manifest)
    if path.is_dir():
        path = path / "manifest.json"
    try:
        manifest = json.loads(path.read_text())
        argv = list(manifest["argv"])
        expected = manifest["artifacts"]
    except (OSError, ValueError, KeyError) as e:
        raise ConfigError(f"unreadable manifest {path}: {e}") from e
    out = Path(args.out) if args.out else path.parent / "replay"
    code = main(argv + ["--out", str(out)])
    if code != 0:
        return code
    again = json.loads((out / "manifest.json").read_text())["artifacts"]
    bad = sorted(k for k in set(expected) | set(again) if expected.get(k) != again.get(k))
    if bad:
        print(f"replay differs in: {', '.join(bad)}", file=sys.stderr)
        return 2
    print(f"replay reproduced {len(expected)} artifacts byte-for-byte")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        if args.command == "replay":
            return _replay(args)
        return _execute(args)
    except (ConfigError, ScenarioError, NetworkError, FileNotFoundError) as e:
        print(f"bpsignal: configuration error: {e}", file=sys.stderr)
        return 1
    except (SimulationError, RegionError) as e:
        print(f"bpsignal: runtime error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
