"""Stability statistic and Lyapunov drift diagnostics."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bpsignal.analysis import drift_estimate, lyapunov, stability_statistic
from bpsignal.analysis.region import scenario_multiplier
from bpsignal.scenario import load_scenario, shipped
from bpsignal.simulator import run


class TestStatistic:
    def test_zero_trace(self):
        rep = stability_statistic(np.zeros((100, 3)), [0.5, 1, 10])
        assert (rep.worst == 0).all() and (rep.per_link == 0).all()

    def test_linear_growth(self):
        T = 1000
        rep = stability_statistic(np.arange(T, dtype=float), [T / 2])
        assert rep.at(T / 2) == pytest.approx(0.5, abs=2e-3)  # 499 of 1000 slots
        assert rep.trend_slope == pytest.approx(1.0)

    def test_empty_trace(self):
        with pytest.raises(ValueError):
            stability_statistic(np.zeros((0, 2)), [1.0])

    def test_trace_uses_slot_starts(self):
        scen = load_scenario(shipped("conflict2_stationary")).with_horizon(50)
        trace = run(scen)
        rep = stability_statistic(trace, [0.0])
        assert rep.horizon == 50
        want = (trace.queues[:50] > 0).mean(axis=0).max()
        assert rep.at(0.0) == pytest.approx(want)

    @settings(max_examples=100, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 40), st.integers(1, 4)), elements=st.floats(0, 100)),
           st.lists(st.floats(0, 120), min_size=1, max_size=6))
    def test_bounded_and_monotone(self, q, grid):
        rep = stability_statistic(q, grid)
        assert ((rep.per_link >= 0) & (rep.per_link <= 1)).all()
        assert (np.diff(rep.per_link, axis=0) <= 0).all()
        assert list(rep.thresholds) == sorted(rep.thresholds)

    def test_inside_vs_outside_capacity(self):
        base = load_scenario(shipped("conflict2_stationary")).with_horizon(20_000)
        rho = scenario_multiplier(base)
        N = base.network.n_links
        inside = stability_statistic(run(base.scaled(0.9 * rho), record_flows=False), [10 * N])
        outside = stability_statistic(run(base.scaled(1.5 * rho), record_flows=False), [10 * N])
        assert inside.worst[0] < 0.01
        assert outside.worst[0] > 0.5
        assert outside.trend_slope > 0.1 > abs(inside.trend_slope)


class TestLyapunov:
    def test_example(self):
        assert lyapunov([3, 4]) == 25

    @settings(max_examples=50)
    @given(st.lists(st.floats(0, 1e6), max_size=10))
    def test_nonnegative(self, q):
        assert lyapunov(q) >= 0

    def test_constant_trace_has_zero_drift(self):
        q = np.full((500, 3), 4.0)
        series = drift_estimate(q, bins=5)
        assert np.nanmax(np.abs(series.drift)) == 0

    def test_stationary_trace_mean_drift(self, rng):
        q = rng.uniform(0, 10, (200_000, 3))
        series = drift_estimate(q, bins=8)
        mean = np.nansum(series.drift * series.counts) / series.counts.sum()
        assert abs(mean) < 0.5
        assert (series.values >= 0).all()

    def test_too_short(self):
        with pytest.raises(ValueError):
            drift_estimate(np.zeros((1, 2)))

    def test_explicit_edges(self):
        q = np.arange(10, dtype=float)[:, None]
        series = drift_estimate(q, edges=[0, 5, 100])
        assert list(series.counts) == [5, 4]
        assert series.drift[0] == pytest.approx(np.mean([(t + 1) ** 2 - t ** 2 for t in range(5)]))

    def test_control_variate_needs_arrivals(self):
        with pytest.raises(ValueError):
            drift_estimate(np.zeros((5, 2)), arrival_rates=[0.1, 0.1])

    def test_backpressure_drift_negative_above_knee(self):
        scen = load_scenario(shipped("conflict2_stationary")).with_horizon(50_000)
        scen = scen.scaled(0.95 * scenario_multiplier(scen))
        trace = run(scen)
        series = drift_estimate(trace, arrival_rates=scen.arrival_rates())
        assert 0 < series.knee < np.inf
        above = series.bins_above(series.knee)
        assert len(above) > 0
        assert (series.drift[above] < 0).all()
