"""Discrete simulator for compressible nematic liquid crystal flow.

The scheme couples a regularized continuity equation, a director heat flow
with a gradient cut-off, and a Galerkin momentum equation on a Lamé
eigenbasis.  The :mod:`nflow.monitors` module turns the usual a priori
estimates (energy balance, maximum principles, interpolation inequalities)
into runtime checks.
"""

__version__ = "0.1.0"
