"""Spectral kinetic solver and moment-closure toolkit for FENE dumbbell suspensions.

The package has two halves. The first is a deterministic Galerkin solver for
the configuration-space Fokker-Planck equation of a FENE dumbbell in a
homogeneous flow, discretized with weighted Jacobi polynomials in the radial
direction and real spherical harmonics on the sphere, marched with a
semi-implicit second-order backward differentiation scheme. The second is a
suite of conformation-tensor closure models (FENE-P and quasi-equilibrium
closures driven by Newton inversion, a precomputed lookup table, or a small
neural network) benchmarked against the resolved solver.
"""

from __future__ import annotations

__version__ = "0.1.0"
