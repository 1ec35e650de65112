"""Exogenous arrival processes and traffic-state processes.

Every process draws from its own ``numpy`` generator seeded by
``(scenario seed, stream id)`` and consumes exactly one uniform variate per
slot, so a path sampled in chunks equals one sampled slot by slot.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

ARRIVAL_STREAM = 0
STATE_STREAM = 1


def stream(seed: int, kind: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), kind, int(index)])


# ---------------------------------------------------------------------------
# arrivals


class ArrivalProcess:
    """Bounded admissible arrivals for one entry link."""

    kind = "abstract"

    @property
    def rate(self) -> float:
        """Long-run mean vehicles per slot."""
        raise NotImplementedError

    @property
    def bound(self) -> float:
        """Largest possible single-slot realization."""
        raise NotImplementedError

    def scaled(self, rho: float) -> "ArrivalProcess":
        raise NotImplementedError

    def sample_path(self, t0: int, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantArrivals(ArrivalProcess):
    value: float
    kind = "constant"

    def __post_init__(self):
        if not self.value >= 0:
            raise ValueError("constant arrival rate must be >= 0")

    @property
    def rate(self):
        return self.value

    @property
    def bound(self):
        return self.value

    def scaled(self, rho):
        return ConstantArrivals(self.value * rho)

    def sample_path(self, t0, n, rng):
        rng.random(n)  # keep the stream aligned with the other kinds
        return np.full(n, float(self.value))

    def to_dict(self):
        return {"kind": "constant", "rate": self.value}


@dataclass(frozen=True)
class IidArrivals(ArrivalProcess):
    """``scale * K`` with ``K`` drawn from ``pmf`` over ``{0, ..., len(pmf)-1}``."""

    pmf: tuple
    scale: float = 1.0
    kind = "iid"

    def __post_init__(self):
        p = np.asarray(self.pmf, dtype=float)
        if p.ndim != 1 or len(p) == 0 or (p < 0).any() or abs(p.sum() - 1) > 1e-9:
            raise ValueError("iid arrival pmf must be a nonnegative vector summing to 1")
        if not self.scale >= 0:
            raise ValueError("iid arrival scale must be >= 0")

    @classmethod
    def uniform(cls, a_max: int, scale: float = 1.0) -> "IidArrivals":
        return cls(tuple([1.0 / (a_max + 1)] * (a_max + 1)), scale)

    @property
    def rate(self):
        return self.scale * float(np.dot(np.arange(len(self.pmf)), self.pmf))

    @property
    def bound(self):
        top = max(k for k, p in enumerate(self.pmf) if p > 0)
        return self.scale * top

    def scaled(self, rho):
        return IidArrivals(self.pmf, self.scale * rho)

    def sample_path(self, t0, n, rng):
        cdf = np.cumsum(self.pmf)
        cdf[-1] = 1.0
        k = np.searchsorted(cdf, rng.random(n), side="right")
        return self.scale * np.minimum(k, len(self.pmf) - 1)

    def to_dict(self):
        return {"kind": "iid", "pmf": list(self.pmf), "scale": self.scale}


@dataclass(frozen=True)
class ProfileArrivals(ArrivalProcess):
    """Piecewise-constant rate profile, repeated, times iid uniform noise.

    ``segments`` is ``((duration_slots, rate), ...)``; a slot's arrivals are
    ``rate(t) * U`` with ``U`` uniform on ``[1 - noise, 1 + noise]``.
    """

    segments: tuple
    noise: float = 0.0
    scale: float = 1.0
    kind = "profile"

    def __post_init__(self):
        if not self.segments:
            raise ValueError("profile needs at least one segment")
        for d, r in self.segments:
            if int(d) != d or d < 1 or not r >= 0:
                raise ValueError("profile segments need integer duration >= 1 and rate >= 0")
        if not 0 <= self.noise <= 1:
            raise ValueError("profile noise must lie in [0, 1]")

    @property
    def period(self) -> int:
        return int(sum(d for d, _ in self.segments))

    def rate_at(self, t: np.ndarray) -> np.ndarray:
        edges = np.cumsum([d for d, _ in self.segments])
        rates = np.array([r for _, r in self.segments], dtype=float)
        return self.scale * rates[np.searchsorted(edges, np.asarray(t) % self.period, side="right")]

    @property
    def rate(self):
        return self.scale * sum(d * r for d, r in self.segments) / self.period

    @property
    def bound(self):
        return self.scale * max(r for _, r in self.segments) * (1 + self.noise)

    def scaled(self, rho):
        return ProfileArrivals(self.segments, self.noise, self.scale * rho)

    def sample_path(self, t0, n, rng):
        u = rng.random(n)
        return self.rate_at(np.arange(t0, t0 + n)) * (1 - self.noise + 2 * self.noise * u)

    def to_dict(self):
        return {"kind": "profile", "segments": [list(s) for s in self.segments],
                "noise": self.noise, "scale": self.scale}


def sample_arrivals(proc: ArrivalProcess, t: int, rng: np.random.Generator) -> float:
    """One slot's arrivals; successive calls reproduce ``sample_path``."""
    return float(proc.sample_path(t, 1, rng)[0])


def arrivals_from_dict(d: dict) -> ArrivalProcess:
    d = dict(d)
    kind = d.pop("kind", None)
    try:
        if kind == "constant":
            return ConstantArrivals(float(d.pop("rate")), **d)
        if kind == "iid":
            if "uniform_max" in d:
                return IidArrivals.uniform(int(d.pop("uniform_max")), **d)
            return IidArrivals(tuple(float(x) for x in d.pop("pmf")), **d)
        if kind == "profile":
            segs = tuple((int(a), float(b)) for a, b in d.pop("segments"))
            return ProfileArrivals(segs, **d)
    except TypeError as e:
        raise ValueError(f"bad {kind} arrival process: {e}") from e
    raise ValueError(f"unknown or unbounded arrival kind {kind!r}")


# ---------------------------------------------------------------------------
# traffic states


class StateProcess:
    kind = "abstract"

    def stationary(self) -> np.ndarray:
        raise NotImplementedError

    def sample_path(self, n: int, rng: np.random.Generator, prev: Optional[int] = None) -> np.ndarray:
        """States for ``n`` consecutive slots; ``prev`` is the state of the slot before."""
        raise NotImplementedError


@dataclass(frozen=True)
class IidStates(StateProcess):
    pi: tuple
    kind = "iid"

    def __post_init__(self):
        p = np.asarray(self.pi, dtype=float)
        if p.ndim != 1 or (p < 0).any() or abs(p.sum() - 1) > 1e-9:
            raise ValueError("state distribution must be nonnegative and sum to 1")

    def stationary(self):
        return np.asarray(self.pi, dtype=float)

    def sample_path(self, n, rng, prev=None):
        cdf = np.cumsum(self.pi)
        cdf[-1] = 1.0
        return np.minimum(np.searchsorted(cdf, rng.random(n), side="right"), len(self.pi) - 1)

    def to_dict(self):
        return {"kind": "iid", "pi": list(self.pi)}


@dataclass(frozen=True)
class MarkovStates(StateProcess):
    matrix: tuple
    initial: int = 0
    kind = "markov"

    def __post_init__(self):
        P = np.asarray(self.matrix, dtype=float)
        n = P.shape[0]
        if P.ndim != 2 or P.shape != (n, n) or (P < 0).any() or np.abs(P.sum(axis=1) - 1).max() > 1e-9:
            raise ValueError("transition matrix must be square with stochastic rows")
        # primitive (irreducible and aperiodic) iff P^k > 0 for k = (n-1)^2 + 1
        reach = np.linalg.matrix_power((P > 0).astype(float), (n - 1) ** 2 + 1)
        if not (reach > 0).all():
            raise ValueError("state chain must be irreducible and aperiodic")
        if not 0 <= self.initial < n:
            raise ValueError("initial state out of range")

    def stationary(self):
        P = np.asarray(self.matrix, dtype=float)
        n = P.shape[0]
        A = np.vstack([P.T - np.eye(n), np.ones(n)])
        b = np.zeros(n + 1)
        b[-1] = 1.0
        pi = np.linalg.lstsq(A, b, rcond=None)[0]
        return np.clip(pi, 0, None) / np.clip(pi, 0, None).sum()

    def sample_path(self, n, rng, prev=None):
        # slot 0 is one transition away from ``initial``
        cdf = np.cumsum(np.asarray(self.matrix, dtype=float), axis=1)
        cdf[:, -1] = 1.0
        u = rng.random(n)
        out = np.empty(n, dtype=np.intp)
        s = self.initial if prev is None else int(prev)
        for k in range(n):
            s = min(int(np.searchsorted(cdf[s], u[k], side="right")), len(cdf) - 1)
            out[k] = s
        return out

    def to_dict(self):
        return {"kind": "markov", "matrix": [list(r) for r in self.matrix], "initial": self.initial}


def states_from_dict(d: dict) -> StateProcess:
    d = dict(d)
    kind = d.pop("kind", None)
    try:
        if kind == "iid":
            return IidStates(tuple(float(x) for x in d.pop("pi")), **d)
        if kind == "markov":
            return MarkovStates(tuple(tuple(float(x) for x in r) for r in d.pop("matrix")), **d)
    except TypeError as e:
        raise ValueError(f"bad {kind} state process: {e}") from e
    raise ValueError(f"unknown state process kind {kind!r}")
