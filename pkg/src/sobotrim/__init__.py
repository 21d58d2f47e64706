"""Numerical laboratory for bounded approximation of manifold-valued Sobolev maps."""
