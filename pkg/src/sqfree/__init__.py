"""sqfree: GRH-conditional squarefree certification toolkit.

Conductor lower bounds for quadratic characters from prime sums and
archimedean integrals, twist search (brute-force and lattice-based), a
mixed-integer LP refinement using binned zero counts, certificate
assembly/verification, and a random-matrix Monte Carlo lab for the gap
statistics underpinning the method's complexity heuristics.
"""

__version__ = "0.1.0"
