"""Barriers, Dirichlet solvers and radial studies for the Lagrangian phase equation."""

from utils.version import __version__

__all__ = ["__version__"]
