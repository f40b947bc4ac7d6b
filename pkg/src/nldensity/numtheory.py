"""Primes, Jacobi symbols, the odd-squarefree discriminant family, the
M_Z/R_Z squarefree decomposition, and quadratic Gauss-type sums.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import isqrt

import numpy as np

# ---------------------------------------------------------------- primes


def primes_up_to(limit: int) -> np.ndarray:
    """Ascending primes <= limit (plain sieve, fine to ~1e8)."""
    if limit < 2:
        return np.empty(0, dtype=np.int64)
    sieve = np.ones(limit + 1, dtype=bool)
    sieve[:2] = False
    for p in range(2, isqrt(limit) + 1):
        if sieve[p]:
            sieve[p * p:: p] = False
    return np.flatnonzero(sieve).astype(np.int64)


def iter_prime_segments(limit: int, span: int = 16_000_000):
    """Yield ascending int64 arrays of primes < limit, segment by segment.

    Odd-only segmented sieve; memory stays ~span/2 booleans regardless of
    limit, so streaming primes to 1e9 is cheap.
    """
    if limit <= 2:
        return
    if limit <= 5:
        seg = primes_up_to(limit - 1)
        if len(seg):
            yield seg
        return
    base = primes_up_to(isqrt(limit - 1))
    first = base[base < limit]
    # primes below the first segment boundary come from the base sieve itself
    lo = int(base[-1]) + 1 if len(base) else 2
    if len(first):
        yield first
    odd_base = base[base > 2]
    while lo < limit:
        hi = min(lo + span, limit)
        # index i represents the odd number start+2i
        start = lo if lo % 2 == 1 else lo + 1
        if start >= hi:
            break
        m = (hi - start + 1) // 2
        flags = np.ones(m, dtype=bool)
        for q in odd_base:
            q = int(q)
            q2 = q * q
            if q2 >= hi:
                break
            first_mult = max(q2, ((start + q - 1) // q) * q)
            if first_mult % 2 == 0:
                first_mult += q
            if first_mult >= hi:
                continue
            flags[(first_mult - start) // 2:: q] = False
        seg = start + 2 * np.flatnonzero(flags).astype(np.int64)
        if len(seg):
            yield seg
        lo = hi


@dataclass(frozen=True)
class PrimeTable:
    """Ascending primes <= limit."""

    limit: int
    primes: np.ndarray

    @staticmethod
    def build(limit: int) -> "PrimeTable":
        return PrimeTable(limit, primes_up_to(limit))


def smallest_prime_factors(limit: int) -> np.ndarray:
    """spf[t] = smallest prime factor of t (spf[0]=spf[1]=0), int32."""
    spf = np.zeros(limit + 1, dtype=np.int32)
    for p in range(2, isqrt(limit) + 1):
        if spf[p] == 0:
            spf[p * p:: p][spf[p * p:: p] == 0] = p
            spf[p] = p
    rest = np.flatnonzero(spf[2:] == 0) + 2
    spf[rest] = rest
    return spf


# ---------------------------------------------------------------- jacobi


def jacobi(a: int, n: int) -> int:
    """Jacobi symbol (a|n), n odd positive, by the binary algorithm."""
    if n <= 0 or n % 2 == 0:
        raise ValueError(f"modulus must be odd positive, got {n}")
    a %= n
    t = 1
    while a:
        while a % 2 == 0:
            a //= 2
            if n % 8 in (3, 5):
                t = -t
        a, n = n, a
        if a % 4 == 3 and n % 4 == 3:
            t = -t
        a %= n
    return t if n == 1 else 0


# ------------------------------------------------- discriminant family


@dataclass(frozen=True)
class FamilyD:
    """Odd squarefree d with X <= d <= 2X, ascending."""

    X: int
    members: np.ndarray


def enumerate_family(X: int) -> FamilyD:
    """Sieve the odd squarefree integers in [X, 2X]."""
    if X < 3:
        raise ValueError(f"X must be >= 3, got {X}")
    if X > 2**40:
        raise ValueError(f"X={X} beyond supported index range")
    lo, hi = X, 2 * X
    flags = np.ones(hi - lo + 1, dtype=bool)
    for q in range(2, isqrt(hi) + 1):
        q2 = q * q
        start = ((lo + q2 - 1) // q2) * q2
        if start <= hi:
            flags[start - lo:: q2] = False
    d = np.arange(lo, hi + 1, dtype=np.int64)[flags]
    return FamilyD(X, d[d % 2 == 1])


# --------------------------------------- squarefree decomposition M_Z/R_Z

_MU_SMALL_CACHE: dict[int, np.ndarray] = {}


def mu_up_to(limit: int) -> np.ndarray:
    """Mobius function on 0..limit via spf factorization."""
    if limit in _MU_SMALL_CACHE:
        return _MU_SMALL_CACHE[limit]
    spf = smallest_prime_factors(limit)
    mu = np.zeros(limit + 1, dtype=np.int8)
    mu[1] = 1
    for t in range(2, limit + 1):
        p = spf[t]
        r = t // p
        mu[t] = 0 if r % p == 0 else -mu[r]
    _MU_SMALL_CACHE[limit] = mu
    return mu


def is_squarefree(d: int) -> bool:
    if d < 1:
        raise ValueError("d must be positive")
    q = 2
    while q * q <= d:
        if d % (q * q) == 0:
            return False
        q += 1
    return True


def m_z(d: int, Z: int) -> int:
    """Sum of mu(l) over l <= Z with l^2 | d."""
    if d < 1 or Z < 1:
        raise ValueError("need d >= 1 and Z >= 1")
    top = min(Z, isqrt(d))
    mu = mu_up_to(max(top, 1))
    return int(sum(int(mu[l]) for l in range(1, top + 1) if d % (l * l) == 0))


def r_z(d: int, Z: int) -> int:
    """mu^2(d) - M_Z(d); identically 0 once Z >= sqrt(d)."""
    return int(is_squarefree(d)) - m_z(d, Z)


def m_z_range(lo: int, hi: int, Z: int) -> np.ndarray:
    """Vector of M_Z(d) for d in [lo, hi] (sieve over l^2 strides)."""
    mu = mu_up_to(Z)
    out = np.zeros(hi - lo + 1, dtype=np.int64)
    for l in range(1, Z + 1):
        if mu[l] == 0:
            continue
        l2 = l * l
        if l2 > hi:
            break
        start = ((lo + l2 - 1) // l2) * l2
        if start <= hi:
            out[start - lo:: l2] += int(mu[l])
    return out


def squarefree_flags_range(lo: int, hi: int) -> np.ndarray:
    flags = np.ones(hi - lo + 1, dtype=bool)
    q = 2
    while q * q <= hi:
        q2 = q * q
        start = ((lo + q2 - 1) // q2) * q2
        if start <= hi:
            flags[start - lo:: q2] = False
        q += 1
    return flags


# ------------------------------------------------------ Gauss-type sums


def _factor_odd(k: int):
    """(prime, exponent) pairs of odd k by trial division."""
    out = []
    t = k
    q = 3
    while q * q <= t:
        if t % q == 0:
            e = 0
            while t % q == 0:
                t //= q
                e += 1
            out.append((q, e))
        q += 2
    if t > 1:
        out.append((t, 1))
    return out


def gauss_g(m: int, k: int) -> float:
    """The multiplicative Gauss-type sum G_m(k) for odd k >= 1.

    Prime-power table, with a = valuation of m at p (a = infinity for m = 0):
      b <= a, b even      -> phi(p^b)
      b <= a, b odd       -> 0
      b = a+1, b even     -> -p^a
      b = a+1, b odd      -> (m/p^a | p) * p^a * sqrt(p)
      b >= a+2            -> 0
    """
    if k < 1 or k % 2 == 0:
        raise ValueError(f"k must be odd positive, got {k}")
    val = 1.0
    for p, b in _factor_odd(k):
        if m == 0:
            a = None  # infinity
        else:
            a = 0
            mm = abs(m)
            while mm % p == 0:
                mm //= p
                a += 1
        if a is None or b <= a:
            val *= (p**b - p ** (b - 1)) if b % 2 == 0 else 0.0
        elif b == a + 1:
            if b % 2 == 0:
                val *= -float(p**a)
            else:
                val *= jacobi(m // p**a, p) * p**a * np.sqrt(p)
        else:
            val *= 0.0
        if val == 0.0:
            return 0.0
    return float(val)


def gauss_tau_bruteforce(m: int, k: int) -> complex:
    """Direct sum over a mod k of (a|k) e(am/k); oracle for gauss_g."""
    if k < 1 or k % 2 == 0:
        raise ValueError(f"k must be odd positive, got {k}")
    if k > 100_000:
        raise ValueError(f"k={k} too large for the O(k) brute force")
    a = np.arange(k, dtype=np.int64)
    sym = jacobi_row(k)
    return complex(np.sum(sym * np.exp(2j * np.pi * (a * (m % k)) / k)))


def jacobi_row(k: int) -> np.ndarray:
    """(t|k) for t = 0..k-1 as int8, built multiplicatively from the prime
    factors of k (tiled Legendre tables)."""
    out = np.ones(k, dtype=np.int8)
    out[0] = 0 if k > 1 else 1
    for p, e in _factor_odd(k):
        leg = legendre_table(p)
        tiled = np.tile(leg, k // p + 1)[:k]
        if e % 2 == 1:
            out *= tiled
        else:
            out *= (tiled != 0).astype(np.int8) * np.abs(tiled)
    return out


def legendre_table(q: int) -> np.ndarray:
    """(t|q) for t = 0..q-1, prime q, via the incremental-squares sieve."""
    leg = np.full(q, -1, dtype=np.int8)
    leg[0] = 0
    r = 0
    for j in range(1, (q - 1) // 2 + 1):
        r += 2 * j - 1
        if r >= q:
            r -= q
        leg[r] = 1
    return leg
