"""Empirical stability diagnostics for simulated queue traces.

* :func:`stability_statistic` evaluates the fraction of slots each queue
  spends above a threshold ``V`` (strong stability asks this to vanish as
  ``V`` grows).
* :func:`drift_estimate` bins one-slot changes of the quadratic Lyapunov
  function ``L(Q) = sum Q_a^2`` by total queue and fits ``B - eps * sum Q``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


def lyapunov(Q) -> float:
    """Quadratic Lyapunov function ``sum_a Q_a**2``."""
    q = np.asarray(Q, dtype=float)
    return float(np.dot(q.ravel(), q.ravel()))


def _queues(trace_or_queues) -> np.ndarray:
    q = getattr(trace_or_queues, "queues", trace_or_queues)
    q = np.asarray(q, dtype=float)
    if q.ndim == 1:
        q = q[:, None]
    return q


@dataclass
class StabilityReport:
    thresholds: np.ndarray     # (K,)
    per_link: np.ndarray       # (K, N) fraction of slots with Q_a > V
    worst: np.ndarray          # (K,) max over links
    trend_slope: float         # least-squares slope of sum Q over the second half
    horizon: int

    def at(self, V: float) -> float:
        """Worst-case statistic at a threshold from the grid."""
        k = int(np.flatnonzero(np.isclose(self.thresholds, V))[0])
        return float(self.worst[k])

    def rows(self):
        for k, V in enumerate(self.thresholds):
            yield float(V), float(self.worst[k]), [float(x) for x in self.per_link[k]]


def stability_statistic(trace, V_grid: Sequence[float]) -> StabilityReport:
    """Fraction of slots ``t < T`` with ``Q_a(t) > V`` for every link and ``V``.

    ``trace`` is a :class:`~bpsignal.simulator.Trace` (queues at the start of
    each of its ``T`` slots are used) or a ``(T, N)`` array of queue values.
    """
    q = _queues(trace)
    if hasattr(trace, "horizon"):
        q = q[: trace.horizon]
    T = q.shape[0]
    if T == 0:
        raise ValueError("stability statistic needs a nonempty trace")
    V = np.asarray(sorted(float(v) for v in V_grid))
    per_link = np.empty((len(V), q.shape[1]))
    for k, v in enumerate(V):
        per_link[k] = (q > v).sum(axis=0) / T
    worst = per_link.max(axis=1) if q.shape[1] else np.zeros(len(V))

    total = q.sum(axis=1)
    half = total[T // 2:]
    if len(half) >= 2:
        x = np.arange(len(half), dtype=float)
        slope = float(np.polyfit(x, half, 1)[0])
    else:
        slope = 0.0
    return StabilityReport(V, per_link, worst, slope, T)


@dataclass
class LyapunovSeries:
    values: np.ndarray       # L(Q(t)) for t = 0..T
    bin_edges: np.ndarray    # (K+1,) on sum Q
    bin_centers: np.ndarray  # (K,) mean sum Q of the slots in each bin
    drift: np.ndarray        # (K,) mean L(t+1) - L(t) per bin (nan when empty)
    counts: np.ndarray       # (K,)
    B: float                 # fitted intercept of drift ~ B - eps * sum Q
    eps: float

    @property
    def knee(self) -> float:
        """Total queue beyond which the fitted drift is negative."""
        return self.B / self.eps if self.eps > 0 else float("inf")

    def bins_above(self, level: float) -> np.ndarray:
        """Indices of nonempty bins lying entirely above ``level``."""
        return np.flatnonzero((self.bin_edges[:-1] >= level) & (self.counts > 0))


def drift_estimate(trace, bins: int = 10, edges: Optional[Sequence[float]] = None,
                   arrival_rates: Optional[Sequence[float]] = None) -> LyapunovSeries:
    """Conditional one-slot Lyapunov drift binned by total queue.

    Bins are quantiles of ``sum Q`` (so every bin holds a similar number of
    slots) unless explicit ``edges`` are given.

    With ``arrival_rates`` (and a trace that recorded its arrivals) the
    per-slot changes are corrected by the control variate
    ``2 * sum_a Q_a(t) * (A_a(t) - lambda_a)``.  Arrivals in slot ``t`` are
    independent of ``Q(t)``, so the correction has conditional mean zero and
    leaves every bin's expected drift unchanged while removing most of the
    arrival noise.
    """
    q = _queues(trace)
    if q.shape[0] < 2:
        raise ValueError("drift needs at least two queue snapshots")
    L = (q ** 2).sum(axis=1)
    dL = np.diff(L)
    if arrival_rates is not None:
        A = getattr(trace, "arrivals", None)
        if A is None:
            raise ValueError("arrival-corrected drift needs a trace with recorded arrivals")
        lam = np.asarray(arrival_rates, dtype=float)
        dL = dL - 2.0 * (q[:-1] * (np.asarray(A) - lam)).sum(axis=1)
    s = q[:-1].sum(axis=1)
    if edges is None:
        e = np.unique(np.quantile(s, np.linspace(0, 1, bins + 1)))
        if len(e) < 2:
            e = np.array([s.min(), s.min() + 1.0])
    else:
        e = np.asarray(edges, dtype=float)
    idx = np.clip(np.searchsorted(e, s, side="right") - 1, 0, len(e) - 2)
    K = len(e) - 1
    counts = np.bincount(idx, minlength=K)
    with np.errstate(invalid="ignore", divide="ignore"):
        drift = np.bincount(idx, weights=dL, minlength=K) / counts
        centers = np.bincount(idx, weights=s, minlength=K) / counts
    if np.ptp(s) > 0:
        slope, intercept = np.polyfit(s, dL, 1)
    else:
        slope, intercept = 0.0, float(dL.mean())
    return LyapunovSeries(L, e, centers, drift, counts, float(intercept), float(-slope))
