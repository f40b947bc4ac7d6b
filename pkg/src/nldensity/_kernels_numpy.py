"""Pure-numpy twins of the JIT kernels in `_kernels_numba`.

Same names, signatures, and semantics; vectorized instead of JIT-compiled.
This backend exists for environments without a working numba and as an
independent cross-check (tests assert the two backends agree). Accumulation
orders differ from the JIT path, so last-ulp results may differ between
backends; within this backend results are deterministic.

The scan kernels here recompute residues with whole-array modulo per modulus,
which is orders of magnitude slower than the incremental JIT path — fine for
validation scale, unsuitable for the largest family runs (the JIT backend is
the production path; see README).
"""

from __future__ import annotations

import numpy as np

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

_PRIME_SLICE = 1 << 22


def _primes_from_halfgaps(halfgaps: np.ndarray) -> np.ndarray:
    return 3 + 2 * np.cumsum(halfgaps.astype(np.int64))


def _signs_for(table_row: np.ndarray, residues: np.ndarray) -> np.ndarray:
    bits = (table_row[residues >> 6] >> (residues & 63)) & 1
    return 1.0 - 2.0 * bits.astype(np.float64)


def scan_block_n1(ds, cls_split, table, gidx, halfgaps, wa, wb, per_d):
    if halfgaps.shape[0] == 0:
        per_d[gidx] = 0.0
        return
    p = _primes_from_halfgaps(halfgaps)
    for j in range(ds.shape[0]):
        w = wa if j < cls_split else wb
        acc = 0.0
        for lo in range(0, p.shape[0], _PRIME_SLICE):
            hi = min(lo + _PRIME_SLICE, p.shape[0])
            signs = _signs_for(table[j], p[lo:hi] % ds[j])
            acc += float(np.sum(w[lo:hi].astype(np.float64) * signs))
        per_d[gidx[j]] = acc


def scan_block_n2(ds, cls_split, table, gidx, halfgaps, wa, wb, w2a, w2b,
                  per_d, per_d2):
    if halfgaps.shape[0] == 0:
        per_d[gidx] = 0.0
        per_d2[gidx] = 0.0
        return
    p = _primes_from_halfgaps(halfgaps)
    for j in range(ds.shape[0]):
        w1 = wa if j < cls_split else wb
        w2 = w2a if j < cls_split else w2b
        acc1 = 0.0
        acc2 = 0.0
        for lo in range(0, p.shape[0], _PRIME_SLICE):
            hi = min(lo + _PRIME_SLICE, p.shape[0])
            signs = _signs_for(table[j], p[lo:hi] % ds[j])
            acc1 += float(np.sum(w1[lo:hi].astype(np.float64) * signs))
            acc2 += float(np.sum(w2[lo:hi].astype(np.float64) * signs))
        per_d[gidx[j]] = acc1
        per_d2[gidx[j]] = acc2


def scan_small(jrow, d, halfgaps, w):
    if halfgaps.shape[0] == 0:
        return 0.0
    p = _primes_from_halfgaps(halfgaps)
    acc = 0.0
    for lo in range(0, p.shape[0], _PRIME_SLICE):
        hi = min(lo + _PRIME_SLICE, p.shape[0])
        signs = jrow[p[lo:hi] % d].astype(np.float64)
        acc += float(np.sum(w[lo:hi].astype(np.float64) * signs))
    return acc


def phi_tilde_batch(xi, sel, offs, cnts, x1, wp1, x2, wp2, a, b):
    xi = np.asarray(xi, dtype=np.float64)
    out = np.empty(xi.shape[0], np.float64)
    c = 2.0 * np.pi * xi
    nz = c != 0.0
    out[~nz] = b - a
    cz = c[nz]
    out[nz] = (np.sin(cz * b) - np.sin(cz * a)
               + np.cos(cz * a) - np.cos(cz * b)) / cz
    for t in np.unique(sel):
        mask = sel == t
        lo = offs[t]
        hi = lo + cnts[t]
        cm = c[mask][:, None]
        for xn, wn in ((x1, wp1), (x2, wp2)):
            phase = cm * xn[lo:hi][None, :]
            out[mask] += (np.cos(phase) + np.sin(phase)) @ wn[lo:hi]
    return out


def cosine_batch(xs, unodes, wfh):
    xs = np.asarray(xs, dtype=np.float64)
    out = np.empty(xs.shape[0], np.float64)
    block = max(1, (1 << 22) // max(1, unodes.shape[0]))
    for lo in range(0, xs.shape[0], block):
        hi = min(lo + block, xs.shape[0])
        phase = 2.0 * np.pi * np.multiply.outer(xs[lo:hi], unodes)
        out[lo:hi] = 2.0 * (np.cos(phase) @ wfh)
    return out


def ct2(km, wf1, wf2):
    return -float(np.einsum("i,ij,j->", wf1, km * km, wf2, optimize=False))


def ct3(km, wf1, wf2, wf3):
    return 2.0 * float(np.einsum("i,j,k,ij,ik,jk->", wf1, wf2, wf3,
                                 km, km, km, optimize=False))


def ct4(km, wf1, wf2, wf3, wf4):
    # Same derangement sum as the JIT version, rearranged into matrix chains
    # (values agree to rounding): three pair-square products minus twice the
    # three 4-cycle contractions.
    k2 = km * km

    def quad(wa, wb):
        return float(np.einsum("i,ij,j->", wa, k2, wb, optimize=False))

    pair_sq = (quad(wf1, wf2) * quad(wf3, wf4)
               + quad(wf1, wf3) * quad(wf2, wf4)
               + quad(wf1, wf4) * quad(wf2, wf3))

    def cycle(wa, wb, wc, wd):
        # sum_{ijkl} wa_i wb_j wc_k wd_l K_ij K_jk K_kl K_li
        a = np.einsum("ij,j,jk->ik", km, wb, km, optimize=False)
        b = np.einsum("ik,k,kl->il", a, wc, km, optimize=False)
        return float(np.einsum("i,il,il,l->", wa, b, km, wd, optimize=False))

    cycles = (cycle(wf1, wf2, wf3, wf4)
              + cycle(wf1, wf2, wf4, wf3)
              + cycle(wf1, wf3, wf2, wf4))
    return pair_sq - 2.0 * cycles


def kahan_chunks(values, chunk):
    n = values.shape[0]
    nchunks = (n + chunk - 1) // chunk
    if nchunks == 0:
        return 0.0
    partials = np.empty(nchunks, np.float64)
    for c in range(nchunks):
        lo = c * chunk
        hi = min(lo + chunk, n)
        s = 0.0
        comp = 0.0
        for i in range(lo, hi):
            y = float(values[i]) - comp
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
