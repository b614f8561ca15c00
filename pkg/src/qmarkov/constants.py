"""Shared numerical tolerances.

Every operation and test pulls its thresholds from here so that a change in
one place is seen everywhere.
"""

ALGEBRAIC_TOL = 1e-12
SPECTRAL_TOL = 1e-10
VALIDATION_TOL = 1e-10

# An eigenvalue counts as 1 if |lam - 1| < MIXING_TOL; every other modulus
# must stay below 1 - MIXING_TOL for the chain to be mixing.
MIXING_TOL = 1e-9
RANK_TOL = 1e-8

CENTERING_TOL = 1e-8
POSITIVITY_TOL = 1e-10
PROBABILITY_FLOOR = 1e-14
DEGENERACY_TOL = 1e-10
