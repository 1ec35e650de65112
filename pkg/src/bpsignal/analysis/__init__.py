"""Stability diagnostics, capacity region and throughput sweeps."""

from .region import (
    RegionCertificate,
    RegionError,
    UnboundedMultiplierError,
    capacity_feasible,
    junction_rate_hull,
    max_throughput_multiplier,
)
from .stability import LyapunovSeries, StabilityReport, drift_estimate, lyapunov, stability_statistic
from .sweep import NoCapacityBreach, StabilityBelow, SweepResult, empirical_multiplier

__all__ = [
    "RegionCertificate", "RegionError", "UnboundedMultiplierError", "capacity_feasible",
    "junction_rate_hull", "max_throughput_multiplier", "LyapunovSeries", "StabilityReport",
    "drift_estimate", "lyapunov", "stability_statistic", "NoCapacityBreach", "StabilityBelow",
    "SweepResult", "empirical_multiplier",
]
