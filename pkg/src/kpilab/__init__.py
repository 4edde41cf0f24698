"""Telecom KPI time series toolkit: simulation, detection, classification."""

__version__ = "0.1.0"
