"""Particle-coupled solver for first-order Hamilton-Jacobi equations.

Samples particles from an initial density, evolves them under the
Hamiltonian flow with geometric integrators, and fits a scalar network
whose spatial gradient regresses the particle momenta.
"""

__version__ = "0.1.0"
