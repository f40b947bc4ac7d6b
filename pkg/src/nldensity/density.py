"""Transform-side evaluation of the n-level density combinatorics.

Two entry points mirror the two formula layers:

* ``theorem_rhs``     — the full partition/subset-chain expansion: sum over
  set partitions F of {1..n} (blocks become product test functions), then
  over subsets S ⊆ {1..ν}, S₂ ⊆ S, even S₃ ⊊ S₂, and splits I ⊊ S₂∖S₃,
  combining plain integrals of F_l, integrals of their transforms, |u|-pair
  integrals, and the constrained half-space integrals below.
* ``asymptotic_limit`` — the scaled family-average limit: a perfect-pairing
  term (even n only) minus half a sum over even proper subsets S with
  pairings on S and constrained terms on the complement.

``constrained_integral`` is the shared building block: the joint integral
over nonnegative u-variables of a product of transforms restricted to the
half-space  sum over I ≤ sum over I-complement − 1.  The complement
variables are integrated outermost (descending support radius) and the
innermost variable is done in closed form via `integral_fhat`, so the
region boundary never appears as a discontinuous indicator.

All quadrature here lives on the compactly supported transform side, which
keeps every integral finite-range; accuracy is set by the per-level
adaptive tolerances (see module constants).  The x-space counterpart in
`rmt` is computed by completely different means, making the agreement of
the two modules a genuine two-sided check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .partitions import SetPartition, enumerate_pairings, enumerate_partitions
from .testfun import (
    TestFunction,
    _adaptive_gl,
    integral_f,
    integral_fhat,
    pair_integral_abs_u,
    product_transform,
)

__all__ = [
    "DensityResult",
    "constrained_integral",
    "asymptotic_limit",
    "theorem_rhs",
    "theorem_rhs_pairings_only",
    "one_level_identity",
    "SupportConditionError",
]

# Per-level absolute tolerance inside the nested constrained integral; the
# documented contract for the full integral is 1e-8 absolute.
_TOL_LEVEL = 1e-9
# Tolerance assumed for each |u|-pair integral / transform integral when
# accumulating the reported quadrature-error estimate.
_ERR_PAIR = 1e-10
_ERR_CONSTRAINED = 1e-8

_MAX_N = 4


class SupportConditionError(ValueError):
    """The combined transform support violates the admissible region."""


def _check_support(fs: Sequence[TestFunction], limit: float = 2.0) -> float:
    s = float(sum(f.sigma for f in fs))
    if s > limit + 1e-12:
        raise SupportConditionError(
            f"support condition violated: sum of transform supports "
            f"{s:g} exceeds {limit:g}")
    return s


@dataclass(frozen=True)
class DensityResult:
    """Value of the expansion plus its per-term breakdown.

    breakdown maps a readable term key — "F=<blocks> S=<set> S2=<set>" —
    to that term's contribution; the keys' values sum to `value` up to
    float accumulation. quadrature_error is a coarse upper estimate of the
    numerical error contributed by the inner quadratures.
    """

    value: float
    breakdown: Dict[str, float]
    quadrature_error: float


# ------------------------------------------------------ constrained integral


def constrained_integral(fhats_I: Sequence[TestFunction],
                         fhats_Ic: Sequence[TestFunction]) -> float:
    """Joint integral of prod of transforms over u >= 0 restricted to

        sum(u_i, i in I)  <=  sum(u_j, j in I-complement) - 1.

    The complement variables are integrated outermost in descending support
    order; the innermost variable (an I variable when I is nonempty, else
    the last complement variable) has analytic limits and is evaluated in
    closed form, so the integrand seen by every adaptive level is
    continuous. Absolute accuracy ~1e-8.
    """
    fi = sorted(fhats_I, key=lambda f: -f.sigma)
    fc = sorted(fhats_Ic, key=lambda f: -f.sigma)
    if not fc:
        raise ValueError("the complement side needs at least one transform")
    total_c = sum(f.sigma for f in fc)
    if total_c <= 1.0 + 1e-15:
        return 0.0  # region empty up to measure zero

    def inner_i(level: int, slack: float) -> float:
        # integrate the I variables subject to sum w <= slack
        if slack <= 0.0:
            return 0.0
        tf = fi[level]
        if level == len(fi) - 1:
            return integral_fhat(tf, 0.0, min(tf.sigma, slack))
        ub = min(tf.sigma, slack)
        if ub <= 0.0:
            return 0.0
        return _adaptive_gl(
            lambda w: _vec(lambda wi: inner_i(level + 1, slack - wi), w),
            0.0, ub, _TOL_LEVEL)

    def outer_c(level: int, acc: float) -> float:
        tf = fc[level]
        remaining = sum(f.sigma for f in fc[level + 1:])
        if level == len(fc) - 1 and not fi:
            lb = max(0.0, 1.0 - acc)
            if lb >= tf.sigma:
                return 0.0
            return integral_fhat(tf, lb, tf.sigma)
        if level == len(fc) - 1:
            # last complement variable; below it only I variables remain
            lb = max(0.0, 1.0 - acc)  # need positive slack
            if lb >= tf.sigma:
                return 0.0
            return _adaptive_gl(
                lambda v: _vec(
                    lambda vi: float(tf.fhat(vi)) * inner_i(0, acc + vi - 1.0),
                    v),
                lb, tf.sigma, _TOL_LEVEL)
        # enough mass must remain reachable for the constraint
        lb = max(0.0, 1.0 - acc - remaining) if not fi else 0.0
        if lb >= tf.sigma:
            return 0.0
        return _adaptive_gl(
            lambda v: _vec(
                lambda vi: float(tf.fhat(vi)) * outer_c(level + 1, acc + vi),
                v),
            lb, tf.sigma, _TOL_LEVEL)

    return outer_c(0, 0.0)


def _vec(func, xs):
    """Evaluate a scalar function over a node array (for _adaptive_gl)."""
    xs = np.atleast_1d(xs)
    return np.array([func(float(x)) for x in xs])


# ------------------------------------------------------------ asymptotics


def _half_pair(a: TestFunction, b: TestFunction) -> float:
    """integral_0^inf u ghat_a(u) ghat_b(u) du."""
    return 0.5 * pair_integral_abs_u(a, b)


def asymptotic_limit(ghats: Sequence[TestFunction]) -> float:
    """The scaled large-X limit of the family average for n weights:
    a perfect-pairing term when n is even, minus half the sum over even
    proper subsets S of pairings on S times alternating constrained terms
    on the complement."""
    ghats = list(ghats)
    n = len(ghats)
    if n < 1:
        raise ValueError("need at least one weight function")
    _check_support(ghats)
    first = 0.0
    if n % 2 == 0:
        for pairing in enumerate_pairings(range(n)):
            prod = 1.0
            for a, b in pairing:
                prod *= _half_pair(ghats[a], ghats[b])
            first += prod
    ssum = 0.0
    indices = list(range(n))
    for size in range(0, n, 2):  # even |S|, S proper
        for s_set in combinations(indices, size):
            pair_s = 0.0
            for pairing in enumerate_pairings(s_set):
                prod = 1.0
                for a, b in pairing:
                    prod *= _half_pair(ghats[a], ghats[b])
                pair_s += prod
            if pair_s == 0.0:
                continue
            comp = [i for i in indices if i not in s_set]
            isum = 0.0
            for isize in range(0, len(comp)):  # I proper subset of comp
                for i_set in combinations(comp, isize):
                    rest = [ghats[j] for j in comp if j not in i_set]
                    c = constrained_integral([ghats[i] for i in i_set], rest)
                    isum += (-1.0) ** isize * c
            ssum += pair_s * isum
    return first - 0.5 * ssum


# --------------------------------------------------------------- theorem


def _block_function(fs: Sequence[TestFunction],
                    block: Tuple[int, ...]) -> TestFunction:
    if len(block) == 1:
        return fs[block[0] - 1]
    return product_transform([fs[i - 1] for i in block])


def _fmt_set(s) -> str:
    return "{" + ",".join(str(i + 1) for i in sorted(s)) + "}"


def _theorem_rhs_impl(fs: Sequence[TestFunction],
                      include_constrained: bool) -> DensityResult:
    fs = list(fs)
    n = len(fs)
    if not 1 <= n <= _MAX_N:
        raise ValueError(f"supported levels are 1..{_MAX_N}, got n = {n}")
    _check_support(fs)

    breakdown: Dict[str, float] = {}
    err = 0.0
    for F in enumerate_partitions(n):
        nu = F.nu
        coef = float((-2) ** (n - nu))
        for b in F.blocks:
            coef *= math.factorial(len(b) - 1)
        fl = [_block_function(fs, b) for b in F.blocks]
        int_f = [integral_f(t) for t in fl]
        int_fhat_full = [integral_fhat(t, -t.sigma, t.sigma) for t in fl]
        pair_cache: Dict[Tuple[int, int], float] = {}

        def pair_abs(a: int, b: int) -> float:
            k = (a, b) if a <= b else (b, a)
            v = pair_cache.get(k)
            if v is None:
                v = pair_integral_abs_u(fl[k[0]], fl[k[1]])
                pair_cache[k] = v
            return v

        blocks = list(range(nu))
        for s_size in range(nu + 1):
            for s_set in combinations(blocks, s_size):
                prod_outside = 1.0
                for l in blocks:
                    if l not in s_set:
                        prod_outside *= int_f[l]
                for s2_size in range(s_size + 1):
                    for s2 in combinations(s_set, s2_size):
                        rem = [l for l in s_set if l not in s2]
                        factor_hat = (-0.5) ** len(rem)
                        for l in rem:
                            factor_hat *= int_fhat_full[l]
                        # first bracket term: even-|S2| full pairings
                        first = 0.0
                        pairings = enumerate_pairings(s2)
                        for pairing in pairings:
                            prod = 1.0
                            for a, b in pairing:
                                prod *= pair_abs(a, b)
                            first += prod
                        if pairings:
                            first *= 2.0 ** (len(s2) // 2)
                        second = 0.0
                        n_constrained = 0
                        if include_constrained:
                            for s3_size in range(0, len(s2), 2):
                                for s3 in combinations(s2, s3_size):
                                    pair3 = 0.0
                                    for pairing in enumerate_pairings(s3):
                                        prod = 1.0
                                        for a, b in pairing:
                                            prod *= pair_abs(a, b)
                                        pair3 += prod
                                    if pair3 == 0.0:
                                        continue
                                    pair3 *= 2.0 ** (s3_size // 2)
                                    rest = [l for l in s2 if l not in s3]
                                    isum = 0.0
                                    for isize in range(0, len(rest)):
                                        for i_set in combinations(rest, isize):
                                            ic = [fl[j] for j in rest
                                                  if j not in i_set]
                                            c = constrained_integral(
                                                [fl[i] for i in i_set], ic)
                                            isum += (-1.0) ** isize * c
                                            n_constrained += 1
                                    second += (pair3 * float((-2) ** len(rest))
                                               * isum)
                        bracket = first - 0.5 * second
                        term = coef * prod_outside * factor_hat * bracket
                        key = (f"F={'|'.join(''.join(map(str, b)) for b in F.blocks)}"
                               f" S={_fmt_set(s_set)} S2={_fmt_set(s2)}")
                        breakdown[key] = breakdown.get(key, 0.0) + term
                        scale = abs(coef * prod_outside * factor_hat)
                        err += scale * (len(pairings) * _ERR_PAIR
                                        + 0.5 * n_constrained * _ERR_CONSTRAINED)
    value = math.fsum(breakdown.values())
    return DensityResult(value=value, breakdown=breakdown,
                         quadrature_error=err)


def theorem_rhs(fs: Sequence[TestFunction]) -> DensityResult:
    """Full partition/subset-chain expansion of the n-level density."""
    return _theorem_rhs_impl(fs, include_constrained=True)


def theorem_rhs_pairings_only(fs: Sequence[TestFunction]) -> DensityResult:
    """The same expansion with every constrained term hard-disabled (the
    reduced formula valid when the total transform support is below 1)."""
    return _theorem_rhs_impl(fs, include_constrained=False)


def one_level_identity(f: TestFunction) -> float:
    """Closed one-level form: integral of f minus integral_0^1 of fhat."""
    return integral_f(f) - integral_fhat(f, 0.0, 1.0)
