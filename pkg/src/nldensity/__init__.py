"""n-level density computations for the family of quadratic Dirichlet
L-functions attached to 8d (d odd squarefree).

Three routes to the same statistics live here:

* ``density`` — the combinatorial evaluation of the n-level density in the
  Fourier domain (set-partition sieve, pairing sums, constrained integrals);
* ``rmt`` — the symplectic kernel-determinant prediction, integrated in real
  space;
* ``empirical`` — brute-force character-sum averages over the discriminant
  family, plus the Poisson-summation and theta-sum identities used to verify
  the machinery.

Supporting modules: ``partitions`` (set-partition lattice), ``numtheory``
(primes, Jacobi symbols, Gauss-type sums), ``testfun`` (even test functions
with compactly supported transforms).
"""

from . import density, empirical, numtheory, partitions, rmt, testfun  # noqa: F401

__version__ = "0.1.0"
