"""Multi-time integral-equation dynamics with light-cone interactions.

Evaluates the reduced integral operators of the two- and N-particle
equations psi = psi_free + A psi on the Minkowski half-space (and the
conformally rescaled FLRW variant), checks the numerics against the
operator-norm bound ledger, and solves by truncated Neumann iteration with
contraction-based tail certificates.
"""

__version__ = "0.1.0"
