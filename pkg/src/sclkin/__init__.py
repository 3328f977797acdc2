"""Numerical laboratory for viscous stochastic scalar conservation laws on the torus
and their kinetic formulation."""

__version__ = "0.1.0"
