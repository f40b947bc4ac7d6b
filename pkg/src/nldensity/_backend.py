"""Kernel backend selection: numba-accelerated loops or pure-numpy fallbacks.

The hot numeric paths (family character-sum scans, theta-sum batches, tensor
quadrature for the kernel determinant, bump transforms) exist twice with
identical signatures and semantics:

* ``_kernels_numba`` — ``@njit`` loops, the default when numba imports;
* ``_kernels_numpy`` — vectorized numpy, always available.

Selection is by the environment variable ``NLD_BACKEND``:

* ``auto`` (default): numba if importable, else numpy;
* ``numba``: require numba, raise if missing;
* ``numpy``: force the fallback even when numba is present.

Within a backend, results are bit-identical across thread counts and block
sizes: each output owns one accumulator updated in a fixed order, and the
final reductions are ordered compensated sums over fixed-size chunks.  Across
backends the results agree to the last few ulps (the numpy fallback uses
pairwise partial sums inside its vectorized chunks), which is why the active
backend name is part of every cache key.
"""
import os

_choice = os.environ.get("NLD_BACKEND", "auto").strip().lower()
if _choice not in ("auto", "numba", "numpy"):
    raise ValueError(f"NLD_BACKEND must be auto|numba|numpy, got {_choice!r}")

HAS_NUMBA = False
if _choice in ("auto", "numba"):
    try:
        import numba  # noqa: F401
        HAS_NUMBA = True
    except ImportError:
        if _choice == "numba":
            raise
USE_NUMBA = HAS_NUMBA and _choice != "numpy"

_kernels = None


def kernels():
    """Return the active kernels module (lazy import, cached)."""
    global _kernels
    if _kernels is None:
        if USE_NUMBA:
            from . import _kernels_numba as mod
        else:
            from . import _kernels_numpy as mod
        _kernels = mod
    return _kernels


def backend_name():
    return "numba" if USE_NUMBA else "numpy"


def set_threads(requested):
    """Set worker thread count; returns the count actually in effect.

    numba cannot exceed its startup thread pool (NUMBA_NUM_THREADS, which
    defaults to the machine core count), so the request is clamped.  The
    numpy backend is single-threaded at this layer; the clamp result is 1.
    """
    if requested is None:
        requested = int(os.environ.get("NLD_THREADS", "0")) or 1
    requested = max(1, int(requested))
    if USE_NUMBA:
        import numba

        cap = numba.config.NUMBA_NUM_THREADS
        eff = min(requested, cap)
        numba.set_num_threads(eff)
        return eff
    return 1
