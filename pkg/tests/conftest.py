"""Shared fixtures: small hand-checkable networks and random junction builders."""

import numpy as np
import pytest

from bpsignal.netfile import read_network
from bpsignal.network import Link, Network, make_junction
from bpsignal.scenario import shipped


def single_junction(n_entry, movements, phases, default_saturation=1.0, rates=None, states=(0,)):
    """One junction over links ``0..n_entry-1`` (entries) and the rest exits."""
    n_links = 1 + max(max(a, b) for a, b in movements)
    links = tuple(Link(i, None, i < n_entry, i >= n_entry) for i in range(n_links))
    j = make_junction(0, movements, phases, states, default_saturation, rates)
    return Network(links, (j,))


def random_junction(rng, jid=0, n_phases=None, n_movements=None, first_link=0, integer_rates=True):
    """Junction with random movements, phases and (dyadic) rates.

    Links ``first_link .. first_link+n_in-1`` feed the junction, the next
    ``n_out`` links receive from it.  Returns ``(junction, in_links, out_links)``.
    """
    n_mov = n_movements or int(rng.integers(1, 13))
    n_ph = n_phases or int(rng.integers(1, 9))
    n_in = int(rng.integers(1, 5))
    n_out = int(rng.integers(1, 5))
    ins = list(range(first_link, first_link + n_in))
    outs = list(range(first_link + n_in, first_link + n_in + n_out))
    # one movement per input link first, so no non-exit link is a dead end
    movs = [(a, outs[int(rng.integers(n_out))]) for a in ins]
    rest = [(a, b) for a in ins for b in outs if (a, b) not in movs]
    extra = max(0, min(n_mov - len(movs), len(rest)))
    movs += [rest[k] for k in rng.choice(len(rest), extra, replace=False)] if extra else []
    order = rng.permutation(len(movs))
    movs = [movs[k] for k in order]
    n_mov = len(movs)
    phases = []
    for pid in range(n_ph):
        k = int(rng.integers(1, n_mov + 1))
        phases.append((pid, sorted(int(x) for x in rng.choice(n_mov, k, replace=False))))
    covered = {i for _, idx in phases for i in idx}
    missing = [i for i in range(n_mov) if i not in covered]
    if missing:
        phases[0] = (0, sorted(set(phases[0][1]) | set(missing)))
    rates = {}
    for pid, idx in phases:
        for i in idx:
            r = int(rng.integers(0, 9)) / 4 if integer_rates else float(rng.uniform(0, 3))
            rates[(pid, i, 0)] = r
    return make_junction(jid, movs, phases, (0,), None, rates), ins, outs


def brute_pressures(net, j, Q, z):
    """Pressure of every phase, enumerated term by term from the raw rate table."""
    junction = net.junctions[j]
    out = {}
    for p in junction.phases:
        total = 0.0
        for m in junction.movements:
            if m not in p.movements:
                continue
            down = 0.0 if net.links[m.dst].exit else Q[m.dst]
            r = junction.rates.entries.get((p.id, m, z), junction.rates.default_saturation)
            total += (Q[m.src] - down) * r
        out[p.id] = total
    return out


def brute_choice(net, j, Q, z):
    pr = brute_pressures(net, j, Q, z)
    best = max(pr.values())
    return min(pid for pid, v in pr.items() if v == best)


@pytest.fixture
def conflict2():
    return read_network(shipped("conflict2"))


@pytest.fixture
def tandem():
    return read_network(shipped("tandem"))


@pytest.fixture
def fig1():
    return read_network(shipped("fig1_junction"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
