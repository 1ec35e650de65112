"""Backpressure traffic-signal control: network model, controllers, simulator and analysis."""

__version__ = "0.1.0"
