"""JIT-compiled hot kernels (numba backend).

Every function here has a pure-numpy twin of the same name and signature in
`_kernels_numpy`; `nldensity._backend.kernels()` selects between them. The
two backends agree to floating-point roundoff (last-ulp sums may differ
because accumulation orders differ); within a single backend results are
bit-identical for any thread count — see the determinism notes below.

Scan kernels
------------
The family character sums need, for each fundamental-ish discriminant 8d,
the weighted sum over odd primes p of w(p) * (p mod d | d). The residue
p mod d is tracked incrementally from the prime half-gap stream (one byte
per prime), and the Jacobi table for d is bit-packed (bit r set means
(r|d) = -1); positions with (r|d) = 0 (p dividing d) are stored as +1 and
corrected by the caller, which subtracts the affected weights per d.

Determinism: each d owns one float64 accumulator updated in ascending-prime
order — an identical operation sequence no matter how d-blocks are sized or
scheduled across threads — and all final reductions are ordered Kahan sums
over fixed-size chunks.
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = [
    "scan_block_n1",
    "scan_block_n2",
    "scan_small",
    "phi_tilde_batch",
    "cosine_batch",
    "ct2",
    "ct3",
    "ct4",
    "kahan_chunks",
]


@njit(cache=True, nogil=True)
def scan_block_n1(ds, cls_split, table, gidx, halfgaps, wa, wb, per_d):
    """Character scan for one block of moduli, one weight stream.

    ds        : int64[D], block moduli (all > 2*max prime gap), d % 4 == 1
                entries first (< cls_split), d % 4 == 3 after.
    table     : int64[D, W] bit-packed sign tables (bit r => (r|d) == -1).
    gidx      : int64[D], destination slots in per_d.
    halfgaps  : uint8[NP], (p_i - p_{i-1})/2 with p_0 = 3 (halfgaps[0] = 0).
    wa, wb    : float32[NP], per-prime weights for the two residue classes.
    per_d     : float64 output, per_d[gidx[j]] = sum_p w(p) * sign.
    """
    D = ds.shape[0]
    NP = halfgaps.shape[0]
    r = np.empty(D, np.int64)
    acc = np.zeros(D, np.float64)
    for j in range(D):
        r[j] = 3 % ds[j]
    if NP > 0:
        for j in range(D):
            rj = r[j]
            bit = (table[j, rj >> 6] >> (rj & 63)) & 1
            wv = np.float64(wa[0]) if j < cls_split else np.float64(wb[0])
            acc[j] += wv - 2.0 * wv * np.float64(bit)
    for i in range(1, NP):
        g2 = np.int64(halfgaps[i]) * 2
        wva = np.float64(wa[i])
        twa = 2.0 * wva
        wvb = np.float64(wb[i])
        twb = 2.0 * wvb
        for j in range(cls_split):
            rj = r[j] + g2
            dj = ds[j]
            if rj >= dj:
                rj -= dj
            r[j] = rj
            bit = (table[j, rj >> 6] >> (rj & 63)) & 1
            acc[j] += wva - twa * np.float64(bit)
        for j in range(cls_split, D):
            rj = r[j] + g2
            dj = ds[j]
            if rj >= dj:
                rj -= dj
            r[j] = rj
            bit = (table[j, rj >> 6] >> (rj & 63)) & 1
            acc[j] += wvb - twb * np.float64(bit)
    for j in range(D):
        per_d[gidx[j]] = acc[j]


@njit(cache=True, nogil=True)
def scan_block_n2(ds, cls_split, table, gidx, halfgaps, wa, wb, w2a, w2b,
                  per_d, per_d2):
    """Character scan for one block, two weight streams sharing the signs."""
    D = ds.shape[0]
    NP = halfgaps.shape[0]
    r = np.empty(D, np.int64)
    acc1 = np.zeros(D, np.float64)
    acc2 = np.zeros(D, np.float64)
    for j in range(D):
        r[j] = 3 % ds[j]
    if NP > 0:
        for j in range(D):
            rj = r[j]
            b = np.float64((table[j, rj >> 6] >> (rj & 63)) & 1)
            if j < cls_split:
                w1 = np.float64(wa[0])
                w2 = np.float64(w2a[0])
            else:
                w1 = np.float64(wb[0])
                w2 = np.float64(w2b[0])
            acc1[j] += w1 - 2.0 * w1 * b
            acc2[j] += w2 - 2.0 * w2 * b
    for i in range(1, NP):
        g2 = np.int64(halfgaps[i]) * 2
        w1a = np.float64(wa[i])
        t1a = 2.0 * w1a
        w1b = np.float64(wb[i])
        t1b = 2.0 * w1b
        v2a = np.float64(w2a[i])
        t2a = 2.0 * v2a
        v2b = np.float64(w2b[i])
        t2b = 2.0 * v2b
        for j in range(cls_split):
            rj = r[j] + g2
            dj = ds[j]
            if rj >= dj:
                rj -= dj
            r[j] = rj
            b = np.float64((table[j, rj >> 6] >> (rj & 63)) & 1)
            acc1[j] += w1a - t1a * b
            acc2[j] += v2a - t2a * b
        for j in range(cls_split, D):
            rj = r[j] + g2
            dj = ds[j]
            if rj >= dj:
                rj -= dj
            r[j] = rj
            b = np.float64((table[j, rj >> 6] >> (rj & 63)) & 1)
            acc1[j] += w1b - t1b * b
            acc2[j] += v2b - t2b * b
    for j in range(D):
        per_d[gidx[j]] = acc1[j]
        per_d2[gidx[j]] = acc2[j]


@njit(cache=True, nogil=True)
def scan_small(jrow, d, halfgaps, w):
    """Modulo-path scan for one small modulus (d may be < max prime gap).

    jrow: int8[d] full Jacobi row (signs AND exact zeros), w: float32[NP]
    already specialized to d's residue class. Returns sum_p w(p)*(p mod d|d).
    """
    NP = halfgaps.shape[0]
    acc = 0.0
    if NP == 0:
        return acc
    r = 3 % d
    acc += np.float64(w[0]) * np.float64(jrow[r])
    for i in range(1, NP):
        r = (r + np.int64(halfgaps[i]) * 2) % d
        acc += np.float64(w[i]) * np.float64(jrow[r])
    return acc


@njit(cache=True, nogil=True)
def phi_tilde_batch(xi, sel, offs, cnts, x1, wp1, x2, wp2, a, b):
    """Fourier-type transform of the smooth cutoff at many frequencies.

    For each frequency xi[i], computes
        integral Phi(x) * (cos(2 pi xi x) + sin(2 pi xi x)) dx
    as (plateau closed form on [a, b]) + (two Gauss-Legendre band sums).
    sel[i] picks an order bucket; bucket t uses nodes x*[offs[t]:offs[t]+cnts[t]]
    with weights wp* that already include Phi at the node.
    """
    n = xi.shape[0]
    out = np.empty(n, np.float64)
    two_pi = 2.0 * np.pi
    for i in range(n):
        c = two_pi * xi[i]
        if c == 0.0:
            acc = b - a
        else:
            acc = (np.sin(c * b) - np.sin(c * a)
                   + np.cos(c * a) - np.cos(c * b)) / c
        t = sel[i]
        lo = offs[t]
        hi = lo + cnts[t]
        for q in range(lo, hi):
            acc += wp1[q] * (np.cos(c * x1[q]) + np.sin(c * x1[q]))
        for q in range(lo, hi):
            acc += wp2[q] * (np.cos(c * x2[q]) + np.sin(c * x2[q]))
        out[i] = acc
    return out


@njit(cache=True, nogil=True)
def cosine_batch(xs, unodes, wfh):
    """out[i] = 2 * sum_q wfh[q] * cos(2 pi unodes[q] xs[i])."""
    n = xs.shape[0]
    m = unodes.shape[0]
    out = np.empty(n, np.float64)
    two_pi = 2.0 * np.pi
    for i in range(n):
        c = two_pi * xs[i]
        acc = 0.0
        for q in range(m):
            acc += wfh[q] * np.cos(c * unodes[q])
        out[i] = 2.0 * acc
    return out


@njit(cache=True, nogil=True)
def ct2(km, wf1, wf2):
    """sum_{i,j} wf1[i] wf2[j] * (-km[i,j]^2)  (2-point derangement term)."""
    m = km.shape[0]
    total = 0.0
    for i in range(m):
        row = 0.0
        for j in range(m):
            k = km[i, j]
            row += wf2[j] * k * k
        total += wf1[i] * row
    return -total


@njit(cache=True, nogil=True)
def ct3(km, wf1, wf2, wf3):
    """sum 2 * km[i,j] km[i,k] km[j,k] * wf1[i] wf2[j] wf3[k]."""
    m = km.shape[0]
    total = 0.0
    for i in range(m):
        acc_i = 0.0
        for j in range(m):
            kij = km[i, j]
            if kij == 0.0:
                continue
            acc_j = 0.0
            for k in range(m):
                acc_j += wf3[k] * km[i, k] * km[j, k]
            acc_i += wf2[j] * kij * acc_j
        total += wf1[i] * acc_i
    return 2.0 * total


@njit(cache=True, nogil=True)
def ct4(km, wf1, wf2, wf3, wf4):
    """4-point derangement sum: pair-squares minus twice the 4-cycles."""
    m = km.shape[0]
    total = 0.0
    for i in range(m):
        acc_i = 0.0
        for j in range(m):
            kij = km[i, j]
            acc_j = 0.0
            for k in range(m):
                kik = km[i, k]
                kjk = km[j, k]
                acc_k = 0.0
                for l in range(m):
                    kil = km[i, l]
                    kjl = km[j, l]
                    kkl = km[k, l]
                    term = (kij * kij * kkl * kkl
                            + kik * kik * kjl * kjl
                            + kil * kil * kjk * kjk
                            - 2.0 * (kij * kjk * kkl * kil
                                     + kij * kjl * kkl * kik
                                     + kik * kjk * kjl * kil))
                    acc_k += wf4[l] * term
                acc_j += wf3[k] * acc_k
            acc_i += wf2[j] * acc_j
        total += wf1[i] * acc_i
    return total


@njit(cache=True, nogil=True)
def kahan_chunks(values, chunk):
    """Ordered Kahan reduction: per-chunk compensated sums, then a serial
    compensated merge in chunk order. Bit-stable for fixed (values, chunk)."""
    n = values.shape[0]
    nchunks = (n + chunk - 1) // chunk
    partials = np.empty(max(nchunks, 1), np.float64)
    if nchunks == 0:
        partials[0] = 0.0
        return 0.0
    for c in range(nchunks):
        lo = c * chunk
        hi = min(lo + chunk, n)
        s = 0.0
        comp = 0.0
        for i in range(lo, hi):
            y = values[i] - comp
            t = s + y
            comp = (t - s) - y
            s = t
        partials[c] = s
    s = 0.0
    comp = 0.0
    for c in range(nchunks):
        y = partials[c] - comp
        t = s + y
        comp = (t - s) - y
        s = t
    return s
