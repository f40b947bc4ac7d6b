"""Command-line interface: computations and verification runs as JSON reports.

Subcommands
-----------
density          evaluate the transform-side expansion (and optionally the
                 x-space kernel integral) for a configured function tuple
rmt-integral     the kernel-density integral alone
empirical        brute-force family averages vs the predicted limit
verify-gauss     Gauss-sum table vs brute-force character sums
verify-mobius    partition counts and the distinct-index inversion identity
verify-poisson   both sides of the dual-sum identity on the standard grid
verify-corollary transform side vs kernel side at n = 1, 2, 3

Every run prints one JSON document (schema 1) with the resolved inputs, the
outputs with error estimates, a pass/fail status, and the wall time. Exit
status: 0 pass, 1 fail, 2 usage error. Reports are byte-identical across
--threads settings apart from the wall_time field.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import _backend, empirical, numtheory
from .density import (
    SupportConditionError,
    asymptotic_limit,
    theorem_rhs,
    theorem_rhs_pairings_only,
)
from .partitions import enumerate_partitions, mobius_from_bottom
from .rmt import QuadratureToleranceError, rmt_integral
from .testfun import TestFunction, make_smooth_bump, make_triangle

__all__ = ["main"]


class UsageError(Exception):
    pass


# ------------------------------------------------------------ config I/O


def _tf_from_spec(spec: Dict) -> TestFunction:
    if not isinstance(spec, dict):
        raise UsageError(f"malformed config entry (expected object): {spec!r}")
    family = spec.get("family")
    sigma = spec.get("sigma")
    if family not in ("triangle", "bump"):
        raise UsageError(f"unknown family {family!r} (triangle|bump)")
    try:
        sigma = float(sigma)
    except (TypeError, ValueError):
        raise UsageError(f"malformed sigma {sigma!r}")
    if sigma <= 0:
        raise UsageError(f"sigma must be positive, got {sigma}")
    return make_triangle(sigma) if family == "triangle" \
        else make_smooth_bump(sigma)


def _load_config(path: str, n: Optional[int]) -> List[TestFunction]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as e:
        raise UsageError(f"cannot read config {path}: {e}")
    except json.JSONDecodeError as e:
        raise UsageError(f"malformed config {path}: {e}")
    specs = doc if isinstance(doc, list) else [doc]
    fs = [_tf_from_spec(s) for s in specs]
    if n is not None and n != len(fs):
        raise UsageError(f"--n {n} does not match {len(fs)} config entries")
    s = sum(f.sigma for f in fs)
    if s > 2.0 + 1e-12:
        raise UsageError(f"support condition violated: Σσ = {s:g} ≥ 2")
    return fs


def _parse_floats(text: str, name: str) -> List[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip() != ""]
    except ValueError:
        raise UsageError(f"malformed {name} list: {text!r}")


def _echo_functions(fs: Sequence[TestFunction]) -> List[Dict]:
    return [{"family": f.form, "sigma": f.sigma} for f in fs]


# ------------------------------------------------------------- reporting


def _emit(report: Dict, t0: float) -> None:
    report["wall_time"] = round(time.time() - t0, 3)
    sys.stdout.write(json.dumps(report, indent=2, sort_keys=True) + "\n")


def _report(command: str, inputs: Dict, outputs: Dict, status: str,
            tolerance) -> Dict:
    return {
        "schema": 1,
        "command": command,
        "inputs": inputs,
        "outputs": outputs,
        "status": status,
        "tolerance": tolerance,
    }


# ------------------------------------------------------------- subcommands


def _cmd_density(args) -> int:
    t0 = time.time()
    fs = _load_config(args.config, args.n)
    tol = args.tol
    outputs: Dict = {}
    if args.side in ("theorem", "both"):
        res = theorem_rhs(fs)
        outputs["theorem"] = {"value": res.value,
                              "est_error": res.quadrature_error}
        outputs["breakdown"] = {k: v for k, v in
                                sorted(res.breakdown.items())}
    if args.side in ("rmt", "both"):
        r = rmt_integral(fs, tol=1e-6 if tol is None else min(tol, 1e-4))
        outputs["rmt"] = {"value": r.value, "est_error": r.est_error}
    status = "pass"
    if args.side == "both":
        diff = abs(outputs["theorem"]["value"] - outputs["rmt"]["value"])
        outputs["diff"] = {"value": diff, "est_error": 0.0}
        if tol is not None:
            status = "pass" if diff <= tol else "fail"
    inputs = {"n": len(fs), "functions": _echo_functions(fs),
              "side": args.side}
    _emit(_report("density", inputs, outputs, status, tol), t0)
    return 0 if status == "pass" else 1


def _cmd_rmt_integral(args) -> int:
    t0 = time.time()
    fs = _load_config(args.config, args.n)
    tol = 1e-6 if args.tol is None else args.tol
    r = rmt_integral(fs, tol=tol)
    outputs = {"value": r.value, "est_error": r.est_error, "n": r.n}
    inputs = {"n": len(fs), "functions": _echo_functions(fs)}
    _emit(_report("rmt-integral", inputs, outputs, "pass", tol), t0)
    return 0


def _auto_or_float(text: str, name: str) -> Optional[float]:
    if text == "auto":
        return None
    try:
        return float(text)
    except ValueError:
        raise UsageError(f"malformed {name}: {text!r} (number or 'auto')")


def _empirical_functions(args) -> List[TestFunction]:
    sigmas = _parse_floats(args.sigma, "--sigma")
    families = [t.strip() for t in args.family.split(",") if t.strip()]
    n = args.n
    if len(sigmas) == 1:
        sigmas = sigmas * n
    if len(families) == 1:
        families = families * n
    if len(sigmas) != n or len(families) != n:
        raise UsageError(
            f"--sigma/--family must supply 1 or {n} entries")
    return [_tf_from_spec({"family": fam, "sigma": sig})
            for fam, sig in zip(families, sigmas)]


def _empirical_point(X: int, fs, eps, z, u, threads, progress) -> Dict:
    cfg = empirical.make_family_config(
        X, fs, epsilon=eps,
        Z=None if z is None else int(z),
        U=u)
    res = empirical.normalized_average(cfg, threads=threads,
                                       progress=progress)
    predicted = asymptotic_limit(fs)
    gap = abs(res["normalized_sum"] - predicted)
    return {
        "X": X,
        "normalized_sum": res["normalized_sum"],
        "predicted_limit": predicted,
        "gap": gap,
        "raw_sum": res["raw_sum"],
        "d_count": res["d_count"],
        "epsilon": cfg.epsilon,
        "Y": cfg.Y,
        "Z": cfg.Z,
        "U": cfg.U,
    }


def _cmd_empirical(args) -> int:
    t0 = time.time()
    fs = _empirical_functions(args)
    eps = _auto_or_float(args.eps, "--eps")
    z = _auto_or_float(args.z, "--z")
    u = _auto_or_float(args.u, "--u")
    xs = ([int(round(x)) for x in _parse_floats(args.sweep, "--sweep")]
          if args.sweep else [int(round(float(args.x)))])
    try:
        points = [_empirical_point(x, fs, eps, z, u, args.threads,
                                   args.progress) for x in xs]
    except ValueError as e:
        raise UsageError(str(e))
    if args.csv:
        sys.stdout.write("X,normalized_sum,predicted_limit,gap\n")
        for p in points:
            sys.stdout.write(f"{p['X']},{p['normalized_sum']!r},"
                             f"{p['predicted_limit']!r},{p['gap']!r}\n")
        return 0
    inputs = {"n": args.n, "functions": _echo_functions(fs),
              "sweep": bool(args.sweep)}
    outputs = {"points": points} if args.sweep else points[0]
    _emit(_report("empirical", inputs, outputs, "pass", args.tol), t0)
    return 0


def verify_gauss(kmax: int = 3000, mmax: int = 20) -> Tuple[float, int]:
    """Max |G_m(k) - tau_m(k)/eps_k| over odd k <= kmax, |m| <= mmax.

    eps_k is 1 for k = 1 mod 4 and i for k = 3 mod 4; the quotient must be
    real, so the imaginary part counts toward the error too.
    """
    worst = 0.0
    checked = 0
    ms = np.arange(-mmax, mmax + 1, dtype=np.int64)
    for k in range(1, kmax + 1, 2):
        jrow = numtheory.jacobi_row(k).astype(np.float64)
        a = np.arange(k, dtype=np.float64)
        phases = np.exp((2j * np.pi / k) * np.outer(ms, a))
        taus = phases @ jrow
        eps = 1.0 if k % 4 == 1 else 1.0j
        quot = taus / eps
        for mi, m in enumerate(ms.tolist()):
            g = numtheory.gauss_g(int(m), k)
            err = abs(quot[mi] - g)
            if err > worst:
                worst = err
            checked += 1
    return worst, checked


def _cmd_verify_gauss(args) -> int:
    t0 = time.time()
    tol = 1e-6 if args.tol is None else args.tol
    worst, checked = verify_gauss(args.kmax, args.mmax)
    status = "pass" if worst <= tol else "fail"
    outputs = {"max_error": {"value": worst, "est_error": 0.0},
               "pairs_checked": {"value": checked, "exact": True}}
    _emit(_report("verify-gauss",
                  {"kmax": args.kmax, "mmax": args.mmax},
                  outputs, status, tol), t0)
    return 0 if status == "pass" else 1


_BELL = [1, 2, 5, 15, 52, 203, 877, 4140]


def verify_mobius(nmax: int = 6, seed: int = 1) -> Tuple[bool, List[int]]:
    """Exact checks of the partition machinery.

    1. Partition counts match the Bell numbers for n = 1..8.
    2. Distinct-index inversion for n <= nmax: with random integer vectors
       v_i, the sum of prod_i v_i[j_i] over pairwise-distinct (j_1..j_n)
       equals sum over partitions F of the Mobius weight of F times the
       product over blocks of the collapsed sums sum_j prod_{i in B} v_i[j].
       All integer arithmetic, so equality is exact.
    """
    counts = [len(enumerate_partitions(n)) for n in range(1, 9)]
    ok = counts == _BELL
    rng = np.random.default_rng(seed)
    m = 7
    for n in range(1, nmax + 1):
        v = rng.integers(-4, 5, size=(n, m)).astype(object)
        lhs = 0
        idx = [0] * n

        def rec(i, used, prod):
            nonlocal lhs
            if i == n:
                lhs += prod
                return
            for j in range(m):
                if not (used >> j) & 1:
                    rec(i + 1, used | (1 << j), prod * int(v[i, j]))

        rec(0, 0, 1)
        rhs = 0
        for F in enumerate_partitions(n):
            w = mobius_from_bottom(F)
            prod = 1
            for b in F.blocks:
                s = 0
                for j in range(m):
                    p = 1
                    for i in b:
                        p *= int(v[i - 1, j])
                    s += p
                prod *= s
            rhs += w * prod
        if lhs != rhs:
            ok = False
    return ok, counts


def _cmd_verify_mobius(args) -> int:
    t0 = time.time()
    ok, counts = verify_mobius(args.n, args.seed)
    status = "pass" if ok else "fail"
    outputs = {"bell_counts": {"value": counts, "exact": True},
               "inversion_exact": {"value": ok, "exact": True}}
    _emit(_report("verify-mobius", {"n": args.n, "seed": args.seed},
                  outputs, status, None), t0)
    return 0 if status == "pass" else 1


_POISSON_GRID = {
    "k": (3, 5, 9, 15, 21, 105),
    "X": (10 ** 3, 10 ** 4),
    "Z": (1, 10),
}


def verify_poisson(tol_scale: float = 1e-8, U: float = 10.0):
    phi = empirical.SmoothCutoff(U)
    rows = []
    worst = 0.0
    for k in _POISSON_GRID["k"]:
        for X in _POISSON_GRID["X"]:
            for Z in _POISSON_GRID["Z"]:
                lhs, rhs = empirical.poisson_identity_check(k, X, Z, phi)
                scaled = abs(lhs - rhs) / X
                worst = max(worst, scaled)
                rows.append({"k": k, "X": X, "Z": Z, "lhs": lhs, "rhs": rhs,
                             "scaled_diff": scaled})
    return worst, rows


def _cmd_verify_poisson(args) -> int:
    t0 = time.time()
    tol = 1e-8 if args.tol is None else args.tol
    worst, rows = verify_poisson(tol)
    status = "pass" if worst <= tol else "fail"
    outputs = {"max_scaled_diff": {"value": worst, "est_error": 0.0},
               "grid": rows}
    _emit(_report("verify-poisson", {"grid": _POISSON_GRID, "U": 10.0},
                  outputs, status, tol), t0)
    return 0 if status == "pass" else 1


# The two-sided comparison configurations (sigma tuples per level count).
COROLLARY_CONFIGS: Dict[int, List[Tuple[Tuple[str, float], ...]]] = {
    1: [(("triangle", 0.5),), (("triangle", 1.0),), (("triangle", 1.9),),
        (("bump", 0.5),), (("bump", 1.0),), (("bump", 1.9),)],
    2: [(("triangle", 0.45), ("triangle", 0.45)),
        (("triangle", 0.9), ("triangle", 0.6)),
        (("triangle", 1.2), ("triangle", 0.7))],
    3: [(("triangle", 0.5), ("triangle", 0.5), ("triangle", 0.5))],
}


def _cmd_verify_corollary(args) -> int:
    t0 = time.time()
    n = args.n
    if n not in COROLLARY_CONFIGS:
        raise UsageError(f"--n must be 1, 2, or 3, got {n}")
    tol = (1e-5 if n == 1 else 1e-4) if args.tol is None else args.tol
    rows = []
    worst = 0.0
    for cfg in COROLLARY_CONFIGS[n]:
        fs = [_tf_from_spec({"family": fam, "sigma": sig})
              for fam, sig in cfg]
        th = theorem_rhs(fs)
        rm = rmt_integral(fs, tol=min(1e-4, tol))
        diff = abs(th.value - rm.value)
        worst = max(worst, diff)
        rows.append({
            "functions": _echo_functions(fs),
            "theorem": th.value,
            "rmt": rm.value,
            "rmt_est_error": rm.est_error,
            "diff": diff,
        })
    outputs: Dict = {"configs": rows,
                     "max_diff": {"value": worst, "est_error": 0.0}}
    status = "pass" if worst <= tol else "fail"
    if n == 1:
        anchor = theorem_rhs([make_triangle(2.0)]).value
        outputs["anchor_triangle_sigma2"] = {"value": anchor,
                                             "expected": 0.25}
        if abs(anchor - 0.25) > 1e-8:
            status = "fail"
    _emit(_report("verify-corollary", {"n": n}, outputs, status, tol), t0)
    return 0 if status == "pass" else 1


# ----------------------------------------------------------------- parser


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="nldensity",
        description="n-level density computations for a quadratic family")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, tol_help="tolerance asserted in the report"):
        sp.add_argument("--tol", type=float, default=None, help=tol_help)
        sp.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: NLD_THREADS or 1)")
        sp.add_argument("--seed", type=int, default=1,
                        help="seed for randomized test points")

    sp = sub.add_parser("density", help="transform-side expansion")
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--config", required=True,
                    help="JSON: {family, sigma} or a list of them")
    sp.add_argument("--side", choices=("theorem", "rmt", "both"),
                    default="both")
    common(sp)
    sp.set_defaults(func=_cmd_density)

    sp = sub.add_parser("rmt-integral", help="kernel-density integral")
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--config", required=True)
    common(sp)
    sp.set_defaults(func=_cmd_rmt_integral)

    sp = sub.add_parser("empirical", help="family-average brute force")
    sp.add_argument("--n", type=int, default=1)
    sp.add_argument("--x", default="1e4", help="modulus scale X")
    sp.add_argument("--sigma", default="1.0", help="comma list, one per level")
    sp.add_argument("--family", default="triangle", help="comma list")
    sp.add_argument("--eps", default="auto")
    sp.add_argument("--z", default="auto")
    sp.add_argument("--u", default="auto")
    sp.add_argument("--sweep", default=None,
                    help="comma list of X values; CSV with --csv")
    sp.add_argument("--csv", action="store_true")
    sp.add_argument("--progress", action="store_true",
                    help="log scan progress to stderr")
    common(sp)
    sp.set_defaults(func=_cmd_empirical)

    sp = sub.add_parser("verify-gauss", help="Gauss-sum table vs brute force")
    sp.add_argument("--kmax", type=int, default=3000)
    sp.add_argument("--mmax", type=int, default=20)
    common(sp)
    sp.set_defaults(func=_cmd_verify_gauss)

    sp = sub.add_parser("verify-mobius", help="partition-lattice identities")
    sp.add_argument("--n", type=int, default=6)
    common(sp)
    sp.set_defaults(func=_cmd_verify_mobius)

    sp = sub.add_parser("verify-poisson", help="dual-sum identity grid")
    common(sp)
    sp.set_defaults(func=_cmd_verify_poisson)

    sp = sub.add_parser("verify-corollary",
                        help="transform side vs kernel side")
    sp.add_argument("--n", type=int, required=True)
    common(sp)
    sp.set_defaults(func=_cmd_verify_corollary)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    if getattr(args, "progress", False):
        logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                            format="%(asctime)s %(name)s %(message)s")
    _backend.set_threads(args.threads)
    try:
        return args.func(args)
    except UsageError as e:
        sys.stderr.write(f"error: {e}\n")
        return 2
    except SupportConditionError as e:
        sys.stderr.write(f"error: {e}\n")
        return 2
    except QuadratureToleranceError as e:
        sys.stderr.write(f"error: {e}\n")
        return 1
    except ValueError as e:
        sys.stderr.write(f"error: {e}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
