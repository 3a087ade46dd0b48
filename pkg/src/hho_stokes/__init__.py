"""Hybrid high-order discretization of 2D Stokes flow with a posteriori error estimation."""
