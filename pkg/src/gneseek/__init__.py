"""Distributed generalized Nash equilibrium seeking for single- and
double-integrator agents over undirected networks."""

__version__ = "0.1.0"
