"""Continuous Lagrange discretization of the 3D Maxwell eigenvalue problem
via a vector potential of order r plus the gradient of a scalar of order r+1."""

__version__ = "0.1.0"
