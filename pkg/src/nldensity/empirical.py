"""Brute-force family character sums and the smooth-cutoff machinery.

This module computes, exactly and deterministically, the averaged sums that
the analytic machinery in `density` predicts:

* ``family_sum_direct``   — the weighted prime sums summed over the odd
  squarefree moduli d in [X, 2X] (the quadratic characters mod 8d);
* ``family_sum_smoothed`` and its M/R split — the same with a smooth cutoff
  weight in d and the squarefree indicator opened up as mu^2 = M_Z + R_Z;
* ``poisson_identity_check`` — both sides of the Poisson-summation identity
  that converts the d-average of M_Z(d) (d|k) into Gauss-sum dual terms;
* ``alternating_theta_sum`` — the alternating theta-like series whose limit
  is minus half the cutoff mass;
* ``prime_side_sum``       — the per-modulus explicit-formula prime side.

Performance model: the double sum over (d, p) pairs is organized d-major in
blocks. Per block, each modulus gets a bit-packed Jacobi table (sign bit per
residue) sized so a whole block of tables stays cache-resident, and a single
pass over the shared prime stream updates every modulus' residue pointer
incrementally from prime half-gaps — no division in the hot loop. Weights
are precomputed per prime as float32; accumulation is float64.

Determinism: each modulus owns one float64 accumulator updated in ascending
prime order (an identical operation sequence for any block size or thread
count), and the final reduction is an ordered compensated sum over fixed
64-entry chunks. Two runs with the same flags and backend produce
bit-identical results regardless of --threads.

Long runs checkpoint per-modulus partials to the cache directory and resume
automatically; finished totals are cached as JSON (see `cache`).
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import _backend, cache
from .numtheory import (
    enumerate_family,
    gauss_g,
    is_squarefree,
    iter_prime_segments,
    jacobi,
    jacobi_row,
    m_z_range,
    mu_up_to,
    primes_up_to,
    smallest_prime_factors,
    squarefree_flags_range,
)
from .testfun import TestFunction

__all__ = [
    "SmoothCutoff",
    "complement_cutoff",
    "phi_tilde",
    "phi_tilde_many",
    "phi_hat0",
    "alternating_theta_sum",
    "poisson_identity_check",
    "FamilyConfig",
    "make_family_config",
    "auto_epsilon",
    "auto_u",
    "auto_z",
    "family_sum_direct",
    "family_sum_smoothed",
    "family_sum_m",
    "family_sum_r",
    "prime_side_sum",
    "normalized_average",
    "KERNEL_VERSION",
]

log = logging.getLogger("nldensity.empirical")

# Bumped whenever scan semantics change; part of every cache/checkpoint key.
KERNEL_VERSION = 1

# Moduli below this use the plain modulo scan (the incremental-gap fast path
# needs d larger than twice the largest prime half-gap in range).
SMALL_D_LIMIT = 512
# Moduli per scan block: 512 bit-packed tables of <= 2*10^6 bits stay within
# a large shared L3 while one pass streams the prime arrays past them.
BLOCK_D = 512
# Fixed reduction chunk for the deterministic compensated merge.
KAHAN_CHUNK = 64
# Prime streams are capped here (a memory guard — the stream costs about
# 9 bytes per prime per weight function; the half-gap byte encoding itself
# is valid far beyond this range).
PRIME_RANGE_LIMIT = 2_200_000_000
CKPT_EVERY_BLOCKS = 4

# Frozen envelope constants for the cutoff-transform decay
# |phi_tilde(xi)| <= C_j * U^(j-1) / |xi|^j. Measured maxima at U in {3, 10}
# were about {j=2: 0.18, j=4: 0.56, j=6: 14.8}; frozen with a safety margin.
C_J_SAFE = {2: 0.5, 4: 2.0, 6: 25.0}


# --------------------------------------------------------------- cutoff


def _smoothstep(t):
    """C-infinity step: 0 for t<=0, 1 for t>=1, exp(-1/t)-blended between."""
    t = np.asarray(t, dtype=np.float64)
    out = np.empty_like(t)
    out[t <= 0.0] = 0.0
    out[t >= 1.0] = 1.0
    mid = (t > 0.0) & (t < 1.0)
    tm = t[mid]
    g = np.exp(-1.0 / tm)
    g1 = np.exp(-1.0 / (1.0 - tm))
    out[mid] = g / (g + g1)
    return out


@dataclass(frozen=True)
class SmoothCutoff:
    """Smooth weight supported on (1, 2), flat at 1 on [1+1/U, 2-1/U].

    The transition shape is the exp(-1/t) smoothstep; its derivative bound
    (max |step'| = 2, measured once and frozen) gives |Phi'| <= 2U. The
    total mass is exactly 1 - 1/U by the step's point symmetry.
    """

    U: float

    def __post_init__(self):
        if not (self.U >= 2.0):
            raise ValueError(f"U must be >= 2, got {self.U}")

    def value(self, t):
        t = np.asarray(t, dtype=np.float64)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        invu = 1.0 / self.U
        out = np.zeros_like(t)
        out[(t >= 1.0 + invu) & (t <= 2.0 - invu)] = 1.0
        lo = (t > 1.0) & (t < 1.0 + invu)
        out[lo] = _smoothstep((t[lo] - 1.0) * self.U)
        hi = (t > 2.0 - invu) & (t < 2.0)
        out[hi] = _smoothstep((2.0 - t[hi]) * self.U)
        return float(out[0]) if scalar else out


class _ComplementCutoff:
    """1 - Phi on [1, 2] (inclusive), 0 outside; complements a SmoothCutoff.

    Including the endpoints makes `indicator = Phi + complement` exact on all
    of [X, 2X], which is what the direct/smoothed decomposition check needs.
    """

    def __init__(self, phi: SmoothCutoff):
        self.phi = phi

    def value(self, t):
        t = np.asarray(t, dtype=np.float64)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        out = np.where((t >= 1.0) & (t <= 2.0),
                       1.0 - np.atleast_1d(self.phi.value(t)), 0.0)
        return float(out[0]) if scalar else out


def complement_cutoff(phi: SmoothCutoff) -> _ComplementCutoff:
    return _ComplementCutoff(phi)


def phi_hat0(phi: SmoothCutoff) -> float:
    """integral of Phi — exactly 1 - 1/U for the fixed smoothstep shape."""
    return 1.0 - 1.0 / phi.U


# ------------------------------------------------- transform of the cutoff

_PT_ORDERS = (16, 32, 64, 128, 256, 512, 1024, 2048, 4096, 8192)
_pt_cache: dict = {}


def _pt_tables(phi: SmoothCutoff):
    """Per-order Gauss-Legendre tables for the two transition bands, with
    the cutoff already folded into the weights."""
    tables = _pt_cache.get(phi.U)
    if tables is not None:
        return tables
    U = phi.U
    xs1, wp1, xs2, wp2, offs, cnts = [], [], [], [], [], []
    off = 0
    for order in _PT_ORDERS:
        t, w = np.polynomial.legendre.leggauss(order)
        t = 0.5 * (t + 1.0)
        w = 0.5 * w
        xs1.append(1.0 + t / U)
        wp1.append((w / U) * _smoothstep(t))
        xs2.append(2.0 - 1.0 / U + t / U)
        wp2.append((w / U) * _smoothstep(1.0 - t))
        offs.append(off)
        cnts.append(order)
        off += order
    tables = (
        np.concatenate(xs1), np.concatenate(wp1),
        np.concatenate(xs2), np.concatenate(wp2),
        np.asarray(offs, dtype=np.int64), np.asarray(cnts, dtype=np.int64),
        1.0 + 1.0 / U, 2.0 - 1.0 / U,
    )
    if len(_pt_cache) > 8:
        _pt_cache.clear()
    _pt_cache[phi.U] = tables
    return tables


def phi_tilde_many(phi: SmoothCutoff, xis) -> np.ndarray:
    """integral Phi(x) (cos(2 pi xi x) + sin(2 pi xi x)) dx, batched.

    The plateau contributes in closed form; each transition band is a
    Gauss-Legendre sum whose order scales with the phase swept across the
    band, keeping the absolute error near 1e-12 over the usable range.
    """
    xis = np.ascontiguousarray(np.atleast_1d(np.asarray(xis, dtype=np.float64)))
    x1, wp1, x2, wp2, offs, cnts, a, b = _pt_tables(phi)
    phase = 2.0 * np.pi * np.abs(xis) / phi.U
    need = np.ceil(16.0 + 0.62 * phase).astype(np.int64)
    sel = np.searchsorted(np.asarray(_PT_ORDERS), need)
    sel = np.minimum(sel, len(_PT_ORDERS) - 1)
    kern = _backend.kernels()
    return kern.phi_tilde_batch(xis, sel, offs, cnts, x1, wp1, x2, wp2, a, b)


def phi_tilde(phi: SmoothCutoff, xi: float) -> float:
    """Scalar wrapper around `phi_tilde_many`."""
    return float(phi_tilde_many(phi, np.array([float(xi)]))[0])


# -------------------------------------------------- theta-type alternating sum


def alternating_theta_sum(phi: SmoothCutoff, y: float) -> float:
    """sum_{m>=1} (-1)^m phi_tilde(m^2/y^2).

    Truncated at the first m whose term bound C6*U^5/(m^2/y^2)^6 drops below
    1e-12; the partial sums approach -phi_hat0/2 with error O(U/y).
    """
    if not (y > 0):
        raise ValueError(f"y must be positive, got {y}")
    U = phi.U
    c6 = C_J_SAFE[6] * U ** 5
    # per-term bound c6 * (y/m)^12 < 1e-12  =>  m > y * (c6 * 1e12)^(1/12)
    m_cut = int(math.ceil(y * (c6 * 1e12) ** (1.0 / 12.0))) + 1
    ms = np.arange(1, m_cut + 1, dtype=np.float64)
    vals = phi_tilde_many(phi, (ms / y) ** 2)
    signs = np.where(np.arange(1, m_cut + 1) % 2 == 1, -1.0, 1.0)
    return math.fsum((signs * vals).tolist())


# ------------------------------------------------ Poisson-dualized identity


def _phi_tilde_tail_bound(U: float, xi_step: float, m_from: int) -> float:
    """Upper bound for sum_{m >= m_from} |phi_tilde(m * xi_step)|.

    Uses the decay envelope with j in {2, 4, 6} and an integral comparison
    sum_{m>=M} m^-j <= M^(1-j) * j/(j-1); returns the best of the three.
    """
    best = math.inf
    for j, cj in C_J_SAFE.items():
        if xi_step <= 0:
            continue
        per = cj * U ** (j - 1) / (xi_step ** j)
        tail = per * (m_from ** (1 - j)) * (j / (j - 1.0))
        best = min(best, tail)
    return best


def poisson_identity_check(k: int, X: int, Z: int,
                           phi: SmoothCutoff) -> Tuple[float, float]:
    """Both sides of the dual-sum identity for sum_d M_Z(d) (d|k) Phi(d/X).

    Left side: direct summation over odd d in (X, 2X). Right side:
    X/(2k) * (2|k) * sum over odd alpha <= Z coprime to k of mu(alpha)/alpha^2
    times the dual m-sum of (-1)^m G_m(k) phi_tilde(m X / (2 alpha^2 k)),
    truncated where the decay envelope certifies the remaining mass is below
    1e-10 * X.
    """
    if k < 1 or k % 2 == 0:
        raise ValueError(f"k must be odd positive, got {k}")
    if X < 3 or X > 10 ** 6:
        raise ValueError(f"X={X} outside the direct-sum cost guard (3..1e6)")
    if Z < 1:
        raise ValueError(f"Z must be >= 1, got {Z}")

    # Left side: odd d in [X, 2X]; Phi vanishes at the endpoints anyway.
    lo = X if X % 2 == 1 else X + 1
    d = np.arange(lo, 2 * X + 1, 2, dtype=np.int64)
    mz = m_z_range(X, 2 * X, Z)[(d - X).astype(np.int64)]
    jrow = jacobi_row(k)
    chi = jrow[(d % k).astype(np.int64)].astype(np.float64)
    lhs = float(np.sum(mz.astype(np.float64) * chi
                       * np.atleast_1d(phi.value(d / float(X)))))

    # Right side.
    pref = (X / (2.0 * k)) * jacobi(2, k)
    mu = mu_up_to(Z)
    g_abs_max = float(k)  # |G_m(k)| <= k for every m, from the 5-case table
    alpha_terms: List[float] = []
    budget = 1e-10 * X
    n_alpha = max(1, sum(1 for a in range(1, Z + 1, 2)
                         if math.gcd(a, k) == 1 and mu[a] != 0))
    for alpha in range(1, Z + 1, 2):
        if math.gcd(alpha, k) != 1 or mu[alpha] == 0:
            continue
        xi_step = X / (2.0 * alpha * alpha * k)
        # truncation error <= |pref| * (1/alpha^2) * 2 * max|G| * tail
        target = budget * alpha * alpha / (2.0 * abs(pref) * g_abs_max
                                           * n_alpha)
        m_cut = 4
        while (_phi_tilde_tail_bound(phi.U, xi_step, m_cut + 1) > target
               and m_cut < 10 ** 7):
            m_cut *= 2
        if m_cut >= 10 ** 7:
            raise RuntimeError(
                "poisson_identity_check: dual-sum truncation bound "
                f"unattainable (k={k}, X={X}, alpha={alpha}; "
                f"best tail {_phi_tilde_tail_bound(phi.U, xi_step, m_cut):g})")
        ms = np.arange(1, m_cut + 1, dtype=np.float64)
        vals_pos = phi_tilde_many(phi, ms * xi_step)
        vals_neg = phi_tilde_many(phi, -ms * xi_step)
        terms = [gauss_g(0, k) * phi_hat0(phi)]
        for m in range(1, m_cut + 1):
            sgn = -1.0 if m % 2 == 1 else 1.0
            terms.append(sgn * (gauss_g(m, k) * vals_pos[m - 1]
                                + gauss_g(-m, k) * vals_neg[m - 1]))
        alpha_terms.append((mu[alpha] / (alpha * alpha)) * math.fsum(terms))
    rhs = pref * math.fsum(alpha_terms)
    return lhs, rhs


# ----------------------------------------------------------- family config


def auto_epsilon(X: int, n: int, sum_sigma: float) -> float:
    """Default support-margin exponent, clamped to keep the configuration
    usable at finite X (the asymptotic formula exceeds 2 at desk scale)."""
    cap = 2.0 - sum_sigma
    if cap <= 0:
        raise ValueError(
            f"support condition violated: sum of transform supports "
            f"{sum_sigma} must be < 2")
    formula = 10.0 * (n + 1) * math.log(math.log(X)) / math.log(X)
    return max(min(formula, 0.5, cap), 1e-9)


def auto_u(X: int) -> float:
    return max(2.0, math.log(math.log(X)))


def auto_z(X: int, n: int) -> int:
    return max(1, int(round(math.log(X) ** (n + 2))))


@dataclass(frozen=True)
class FamilyConfig:
    """Everything a family-average run needs.

    X: modulus scale (d runs over [X, 2X]); epsilon: support margin;
    Y = floor(X^(2-epsilon)): prime-product cap (vacuous whenever the
    invariant sum(sigma) <= 2 - epsilon holds, since any integer product
    below X^(2-eps) is below its floor); Z: squarefree-split depth;
    U: cutoff sharpness; ghats: the weight functions, one per level.
    """

    X: int
    ghats: Tuple[TestFunction, ...]
    epsilon: float
    Y: int
    Z: int
    U: float

    def __post_init__(self):
        if self.X < 3:
            raise ValueError(f"X must be >= 3, got {self.X}")
        if len(self.ghats) < 1:
            raise ValueError("need at least one weight function")
        s = self.sum_sigma
        if s > 2.0 - self.epsilon + 1e-12:
            raise ValueError(
                f"support condition violated: sum of transform supports "
                f"{s} exceeds 2 - epsilon = {2.0 - self.epsilon}")
        if self.Z < 1 or self.Y < 2:
            raise ValueError("need Z >= 1 and Y >= 2")

    @property
    def n(self) -> int:
        return len(self.ghats)

    @property
    def sum_sigma(self) -> float:
        return float(sum(g.sigma for g in self.ghats))


def make_family_config(X: int, ghats: Sequence[TestFunction],
                       epsilon: Optional[float] = None,
                       Z: Optional[int] = None,
                       U: Optional[float] = None) -> FamilyConfig:
    """Build a FamilyConfig, filling epsilon/Z/U with their defaults."""
    ghats = tuple(ghats)
    n = len(ghats)
    sum_sigma = float(sum(g.sigma for g in ghats))
    eps = auto_epsilon(X, n, sum_sigma) if epsilon is None else float(epsilon)
    y = int(float(X) ** (2.0 - eps))
    z = auto_z(X, n) if Z is None else int(Z)
    u = auto_u(X) if U is None else float(U)
    return FamilyConfig(X=int(X), ghats=ghats, epsilon=eps, Y=y, Z=z, U=u)


# ------------------------------------------------------- prime-stream build


@dataclass
class _Stream:
    halfgaps: np.ndarray          # uint8, halfgaps[0] = 0 (first prime is 3)
    wpos: List[np.ndarray]        # float32 per function, for d % 4 == 1
    wneg: List[np.ndarray]        # float32 per function, for d % 4 == 3
    pidx: np.ndarray              # int64: prime -> stream index (<= limit)
    pidx_limit: int

    @property
    def prime_count(self) -> int:
        return int(self.halfgaps.shape[0])


_stream_memo: dict = {}


def _stream_signature(X: int, ghats: Sequence[TestFunction],
                      pidx_limit: int) -> tuple:
    return (X, pidx_limit,
            tuple((g.form, g.sigma) for g in ghats))


def _build_stream(X: int, ghats: Sequence[TestFunction],
                  pidx_limit: int) -> _Stream:
    """Sieve all odd primes p <= X^max(sigma) and precompute, per prime:
    the half-gap to its predecessor and the class-resolved weights

        w(p) = (log p / sqrt p) * ghat(log p / log X) * (2|p) [* (-1)^((p-1)/2)]

    The (2|p) factor and the reciprocity sign are what turn the quadratic
    character mod 8d into a pure residue-table lookup mod d.
    """
    sig = _stream_signature(X, ghats, pidx_limit)
    memo = _stream_memo.get(sig)
    if memo is not None:
        return memo
    smax = max(g.sigma for g in ghats)
    P = int(round(float(X) ** smax))
    if P > PRIME_RANGE_LIMIT:
        raise ValueError(
            f"prime range X^sigma = {P:.3g} exceeds the supported stream "
            f"limit {PRIME_RANGE_LIMIT:.3g}; reduce X or sigma")
    ln_x = math.log(X)
    hg_parts: List[np.ndarray] = []
    w_parts: List[List[np.ndarray]] = [[] for _ in ghats]
    wn_parts: List[List[np.ndarray]] = [[] for _ in ghats]
    pidx = np.full(pidx_limit + 1, -1, dtype=np.int64)
    prev = None
    count = 0
    if P >= 3:
        for seg in iter_prime_segments(P + 1):
            if seg.size and seg[0] == 2:
                seg = seg[1:]
            if seg.size == 0:
                continue
            p = seg.astype(np.int64)
            if prev is None:
                hg = np.empty(p.size, dtype=np.uint8)
                hg[0] = 0
                hg[1:] = ((p[1:] - p[:-1]) // 2).astype(np.uint8)
            else:
                gaps = np.empty(p.size, dtype=np.int64)
                gaps[0] = p[0] - prev
                gaps[1:] = p[1:] - p[:-1]
                hg = (gaps // 2).astype(np.uint8)
            prev = int(p[-1])
            hg_parts.append(hg)
            pf = p.astype(np.float64)
            lnp = np.log(pf)
            base = lnp / np.sqrt(pf)
            t = lnp / ln_x
            # (2|p): +1 iff p = +-1 mod 8;  reciprocity sign: -1 iff p = 3 mod 4
            leg2 = np.where((p & 7 == 1) | (p & 7 == 7), 1.0, -1.0)
            sign4 = np.where(p & 3 == 1, 1.0, -1.0)
            for fi, g in enumerate(ghats):
                w0 = base * g.fhat(t) * leg2
                w_parts[fi].append(w0.astype(np.float32))
                wn_parts[fi].append((w0 * sign4).astype(np.float32))
            small = p <= pidx_limit
            if np.any(small):
                pidx[p[small]] = count + np.flatnonzero(small)
            count += p.size
    halfgaps = (np.concatenate(hg_parts) if hg_parts
                else np.empty(0, dtype=np.uint8))
    wpos = [np.concatenate(parts) if parts else np.empty(0, dtype=np.float32)
            for parts in w_parts]
    wneg = [np.concatenate(parts) if parts else np.empty(0, dtype=np.float32)
            for parts in wn_parts]
    stream = _Stream(halfgaps=halfgaps, wpos=wpos, wneg=wneg,
                     pidx=pidx, pidx_limit=pidx_limit)
    _stream_memo.clear()  # keep at most one stream resident (they are large)
    _stream_memo[sig] = stream
    return stream


def _odd_prime_factors(d: int, spf: np.ndarray) -> List[int]:
    out: List[int] = []
    t = d
    while t > 1:
        q = int(spf[t])
        out.append(q)
        while t % q == 0:
            t //= q
    return out


# ------------------------------------------------------------- scan engine


def _scan_payload(X: int, ghats: Sequence[TestFunction], kind: str) -> dict:
    return {
        "op": "scan",
        "X": int(X),
        "kind": kind,
        "factors": [{"form": g.form, "sigma": repr(float(g.sigma))}
                    for g in ghats],
        "kv": KERNEL_VERSION,
        "block": BLOCK_D,
        "backend": _backend.backend_name(),
    }


_scan_memo: dict = {}


def _scan_per_d(X: int, ghats: Sequence[TestFunction], ds: np.ndarray,
                kind: str, threads: Optional[int], progress: bool,
                want_ckpt: bool) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Per-modulus character sums: for every d in ds (ascending), the value
    sum_p w_f(p) * chi_8d(p) for each weight function f (at most two).

    Returns (per1, per2-or-None) aligned with ds. Writes/reads checkpoints
    under the cache directory when want_ckpt is set.
    """
    n = len(ghats)
    if n not in (1, 2):
        raise ValueError(f"scan supports 1 or 2 weight functions, got {n}")
    payload = _scan_payload(X, ghats, kind)
    key = cache.payload_key(payload)
    memo_hit = _scan_memo.get(key)
    if memo_hit is not None:
        return memo_hit

    nd = int(ds.shape[0])
    per1 = np.zeros(nd, dtype=np.float64)
    per2 = np.zeros(nd, dtype=np.float64) if n == 2 else None

    small_mask = ds < SMALL_D_LIMIT
    big_pos = np.flatnonzero(~small_mask)
    small_pos = np.flatnonzero(small_mask)
    nblocks = (big_pos.size + BLOCK_D - 1) // BLOCK_D
    # one extra done-slot for the small-d pass
    done = np.zeros(nblocks + 1, dtype=bool)

    if want_ckpt:
        ck = cache.load_checkpoint(key)
        if ck is not None and ck.get("per1") is not None \
                and ck["per1"].shape[0] == nd \
                and ck["done"].shape[0] == done.shape[0]:
            per1 = ck["per1"].astype(np.float64)
            if n == 2 and ck.get("per2") is not None:
                per2 = ck["per2"].astype(np.float64)
            done = ck["done"].astype(bool)
            log.info("scan %s: resumed checkpoint (%d/%d blocks done)",
                     key, int(done[:nblocks].sum()), nblocks)

    if done.all():
        result = (per1, per2)
        _scan_memo.clear()
        _scan_memo[key] = result
        return result

    max_d = int(ds.max()) if nd else 3
    stream = _build_stream(X, ghats, pidx_limit=max_d)
    spf = smallest_prime_factors(max_d)
    kern = _backend.kernels()
    hg = stream.halfgaps

    def save_ckpt():
        if not want_ckpt:
            return
        arrays = {"per1": per1, "done": done}
        if per2 is not None:
            arrays["per2"] = per2
        cache.save_checkpoint(key, arrays)

    def run_block(b: int):
        """Scan one block; returns (positions, out1, out2) — pure, no shared
        writes, so blocks can run on any number of threads."""
        pos = big_pos[b * BLOCK_D:(b + 1) * BLOCK_D]
        blk = ds[pos].astype(np.int64)
        order = np.argsort(((blk & 3) != 1).astype(np.int8), kind="stable")
        blk_sorted = blk[order]
        pos_sorted = pos[order]
        cls_split = int(np.count_nonzero((blk_sorted & 3) == 1))
        D = blk_sorted.size
        W = (int(blk_sorted.max()) >> 6) + 1
        table = np.zeros((D, W), dtype=np.int64)
        t8 = table.view(np.uint8)
        for j in range(D):
            row = jacobi_row(int(blk_sorted[j]))
            pb = np.packbits(row < 0, bitorder="little")
            t8[j, :pb.size] = pb
        out1 = np.zeros(D, dtype=np.float64)
        out2 = np.zeros(D, dtype=np.float64) if n == 2 else None
        lidx = np.arange(D, dtype=np.int64)
        if n == 1:
            kern.scan_block_n1(blk_sorted, cls_split, table, lidx, hg,
                               stream.wpos[0], stream.wneg[0], out1)
        else:
            kern.scan_block_n2(blk_sorted, cls_split, table, lidx, hg,
                               stream.wpos[0], stream.wneg[0],
                               stream.wpos[1], stream.wneg[1], out1, out2)
        # Bit tables store (r|d) = 0 positions (p | d) as +1; subtract those
        # weights to restore the exact zero of the character.
        for j in range(D):
            dj = int(blk_sorted[j])
            is_pos_class = (dj & 3) == 1
            for q in _odd_prime_factors(dj, spf):
                idx = int(stream.pidx[q]) if q <= stream.pidx_limit else -1
                if idx < 0:
                    continue
                w1 = stream.wpos[0] if is_pos_class else stream.wneg[0]
                out1[j] -= float(w1[idx])
                if n == 2:
                    w2 = stream.wpos[1] if is_pos_class else stream.wneg[1]
                    out2[j] -= float(w2[idx])
        return pos_sorted, out1, out2

    pending = [b for b in range(nblocks) if not done[b]]
    t0 = time.time()
    completed_since_ckpt = 0
    effective = _backend.set_threads(threads)
    use_pool = effective > 1 and _backend.backend_name() == "numba"

    def finish_block(b, result):
        nonlocal completed_since_ckpt
        pos_sorted, out1, out2 = result
        per1[pos_sorted] = out1
        if n == 2:
            per2[pos_sorted] = out2
        done[b] = True
        completed_since_ckpt += 1
        if progress:
            nd_done = int(done[:nblocks].sum())
            log.info("scan %s: block %d/%d done (%.1fs elapsed)",
                     key, nd_done, nblocks, time.time() - t0)
        if completed_since_ckpt >= CKPT_EVERY_BLOCKS:
            save_ckpt()
            completed_since_ckpt = 0

    if use_pool and len(pending) > 1:
        with ThreadPoolExecutor(max_workers=effective) as ex:
            futures = {ex.submit(run_block, b): b for b in pending}
            for fut in as_completed(futures):
                finish_block(futures[fut], fut.result())
    else:
        for b in pending:
            finish_block(b, run_block(b))

    if not done[nblocks]:
        for pos in small_pos:
            d = int(ds[pos])
            jrow = jacobi_row(d)
            is_pos_class = (d & 3) == 1
            w1 = stream.wpos[0] if is_pos_class else stream.wneg[0]
            per1[pos] = kern.scan_small(jrow, d, hg, w1)
            if n == 2:
                w2 = stream.wpos[1] if is_pos_class else stream.wneg[1]
                per2[pos] = kern.scan_small(jrow, d, hg, w2)
        done[nblocks] = True
    save_ckpt()

    result = (per1, per2)
    _scan_memo.clear()
    _scan_memo[key] = result
    return result


def _contributions(per1: np.ndarray, per2: Optional[np.ndarray]) -> np.ndarray:
    return per1 if per2 is None else per1 * per2


# ------------------------------------------------------------- family sums


def _guard_desk_scale(cfg: FamilyConfig) -> None:
    if cfg.n > 2:
        raise ValueError(
            f"family sums support n <= 2 (cost guard), got n = {cfg.n}")
    if cfg.X > 10 ** 6:
        raise ValueError(
            f"family sums support X <= 1e6 (cost guard), got X = {cfg.X}")


def family_sum_direct(cfg: FamilyConfig, *, threads: Optional[int] = None,
                      progress: bool = False,
                      use_cache: bool = True) -> float:
    """The double sum over odd squarefree d in [X, 2X] and prime tuples:

        sum_d mu^2(d) prod_i ( sum_p (log p/sqrt p) ghat_i(log p/log X) chi_8d(p) )

    The tuple-product cap prod p_i <= Y never binds under the config
    invariant sum(sigma) <= 2 - epsilon (integer products below X^(2-eps)
    are below its floor), so the prime sums factor per level.
    """
    _guard_desk_scale(cfg)
    payload = {"op": "family_sum_direct", **_scan_payload(cfg.X, cfg.ghats,
                                                          "squarefree")}
    if use_cache:
        hit = cache.get_result(payload)
        if hit is not None:
            return float(hit["value"])
    t0 = time.time()
    fam = enumerate_family(cfg.X)
    ds = fam.members
    per1, per2 = _scan_per_d(cfg.X, cfg.ghats, ds, "squarefree",
                             threads, progress, want_ckpt=True)
    kern = _backend.kernels()
    value = float(kern.kahan_chunks(_contributions(per1, per2), KAHAN_CHUNK))
    if use_cache:
        cache.put_result(payload, {
            "value": value,
            "d_count": int(ds.size),
            "wall_s": time.time() - t0,
        })
    return value


def _smoothed_parts(cfg: FamilyConfig, phi, threads, progress):
    """Shared engine for the smoothed sums: returns (c_m, c_r) contribution
    arrays over all odd d in [X, 2X], where c_m uses M_Z(d) and c_r uses
    R_Z(d) = mu^2 - M_Z. Their per-entry float sum is exactly the mu^2
    contribution (R term is 0 on squarefree d, an exact negation elsewhere).
    """
    _guard_desk_scale(cfg)
    X = cfg.X
    lo = X if X % 2 == 1 else X + 1
    ds = np.arange(lo, 2 * X + 1, 2, dtype=np.int64)
    per1, per2 = _scan_per_d(X, cfg.ghats, ds, "allodd",
                             threads, progress, want_ckpt=False)
    raw = _contributions(per1, per2)
    offs = (ds - X).astype(np.int64)
    mz = m_z_range(X, 2 * X, cfg.Z)[offs].astype(np.float64)
    sqf = squarefree_flags_range(X, 2 * X)[offs].astype(np.float64)
    rz = sqf - mz
    wphi = np.atleast_1d(phi.value(ds / float(X)))
    base = wphi * raw
    return mz * base, rz * base


def family_sum_m(cfg: FamilyConfig, phi, *, threads: Optional[int] = None,
                 progress: bool = False) -> float:
    c_m, _ = _smoothed_parts(cfg, phi, threads, progress)
    return float(_backend.kernels().kahan_chunks(c_m, KAHAN_CHUNK))


def family_sum_r(cfg: FamilyConfig, phi, *, threads: Optional[int] = None,
                 progress: bool = False) -> float:
    _, c_r = _smoothed_parts(cfg, phi, threads, progress)
    return float(_backend.kernels().kahan_chunks(c_r, KAHAN_CHUNK))


def family_sum_smoothed(cfg: FamilyConfig, phi, *,
                        threads: Optional[int] = None,
                        progress: bool = False) -> float:
    """Smoothed family sum; evaluated as the M-part plus the R-part of one
    traversal, which makes mu^2 = M_Z + R_Z an exact identity of floats."""
    c_m, c_r = _smoothed_parts(cfg, phi, threads, progress)
    kern = _backend.kernels()
    return float(kern.kahan_chunks(c_m, KAHAN_CHUNK)) \
        + float(kern.kahan_chunks(c_r, KAHAN_CHUNK))


# ------------------------------------------------------ per-modulus sums


def prime_side_sum(d: int, X: int, h: TestFunction) -> float:
    """(1/log X) * sum_p (log p/sqrt p) chi_8d(p) (hhat(t_p) + hhat(-t_p)),
    t_p = log p / log X — the prime side of the explicit formula for one
    modulus. The p = 2 term vanishes identically (8d is even)."""
    if d < 1 or d % 2 == 0:
        raise ValueError(f"d must be odd positive, got {d}")
    if not is_squarefree(d):
        raise ValueError(f"d must be squarefree, got {d}")
    if not (h.sigma < 2.0):
        raise ValueError(
            f"support condition violated: transform support {h.sigma} >= 2")
    if X < 3:
        raise ValueError(f"X must be >= 3, got {X}")
    P = int(round(float(X) ** h.sigma))
    if P > 2 * 10 ** 6:
        raise ValueError(f"prime range {P} beyond the per-modulus guard 2e6")
    terms: List[float] = []
    ln_x = math.log(X)
    for p in primes_up_to(P).tolist():
        if p == 2:
            continue
        chi = jacobi(8 * d, p)
        if chi == 0:
            continue
        t = math.log(p) / ln_x
        w = math.log(p) / math.sqrt(p)
        terms.append(w * chi * (float(h.fhat(t)) + float(h.fhat(-t))))
    return math.fsum(terms) / ln_x


def normalized_average(cfg: FamilyConfig, *, threads: Optional[int] = None,
                       progress: bool = False,
                       use_cache: bool = True) -> dict:
    """family_sum_direct normalized by pi^2/(4 X log X) — the scaling under
    which the family average converges to its predicted limit."""
    s = family_sum_direct(cfg, threads=threads, progress=progress,
                          use_cache=use_cache)
    norm = math.pi ** 2 / (4.0 * cfg.X * math.log(cfg.X)) * s
    return {
        "X": cfg.X,
        "raw_sum": s,
        "normalized_sum": norm,
        "d_count": int(enumerate_family(cfg.X).members.size),
    }
