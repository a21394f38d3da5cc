"""Integrability tests for quasilinear systems via hydrodynamic reductions."""

__version__ = "0.1.0"
