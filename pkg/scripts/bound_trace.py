#!/usr/bin/env python3
"""Run the full pipeline on a mid-size composite and record the best-bound
trace as X grows (the shape should climb like X^(3/2) while the twist pool
keeps improving).

Writes a CSV with columns X,best_bound,best_q plus trend flags, and the
certificate/partial outcome.  Defaults reproduce the 50-digit demo used in
the acceptance suite: twist search to ~1e5, prime sums to 1e8.
"""

from __future__ import annotations

import argparse
import math
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).parent.parent / "src"))

from sqfree.certify import Certificate, PipelineConfig, certify_squarefree  # noqa: E402
from sqfree.intcore import is_probable_prime  # noqa: E402


def default_demo_n() -> int:
    """Deterministic 50-digit squarefree composite with three large prime
    factors (no semiprime structure, nothing findable by small-factor work)."""
    def next_prime(n):
        n += 1
        if n % 2 == 0:
            n += 1
        while not is_probable_prime(n):
            n += 2
        return n

    p1 = next_prime(2_100_000_000_000_037)
    p2 = next_prime(33_000_000_000_000_059)
    p3 = next_prime(470_000_000_000_000_089)
    n = p1 * p2 * p3
    assert 10**49 <= n < 10**50
    return n


def trend_flags(xs, bounds):
    """(positive_slope, convexish): total gain positive, and the upper-half
    X range gains at least as much per unit X as the lower half."""
    if len(xs) < 3:
        return bounds[-1] > bounds[0], False
    mid = len(xs) // 2
    lo_gain = (bounds[mid] - bounds[0]) / max(xs[mid] - xs[0], 1e-9)
    hi_gain = (bounds[-1] - bounds[mid]) / max(xs[-1] - xs[mid], 1e-9)
    return bounds[-1] > bounds[0], hi_gain >= 0.8 * lo_gain


def run(n: int, trace_path: str, prime_budget: int, q_rounds: int,
        workers: int = 1):
    cfg = PipelineConfig(
        q_base=7, q_start_exp=2, max_rounds=q_rounds,
        x_start=math.log(1e4), x_growth=1.26,
        prime_budget=prime_budget,
        topup_limit=10**7,
        search_keep=0.02, refine_top_n=2, step_dim=8,
        use_pollard=True, workers=workers,
        trace_path=trace_path,
    )
    out = certify_squarefree(n, cfg)
    rows = []
    for line in open(trace_path, encoding="utf-8"):
        if line.startswith("#") or line.startswith("X,"):
            continue
        x, bound, q = line.strip().split(",")
        rows.append((float(x), float(bound), int(q)))
    xs = [r[0] for r in rows]
    bounds = [r[1] for r in rows]
    pos, convexish = trend_flags(xs, bounds)
    return out, rows, pos, convexish


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=0)
    ap.add_argument("--trace", default="bound_trace.csv")
    ap.add_argument("--prime-budget", type=int, default=10**8)
    ap.add_argument("--rounds", type=int, default=6)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    n = args.n or default_demo_n()
    out, rows, pos, convexish = run(n, args.trace, args.prime_budget, args.rounds,
                                    args.workers)
    print(f"N = {n}")
    for x, b, q in rows:
        print(f"  X = {x:7.3f}  best bound = {b:9.4f}  q = {q}")
    print(f"positive_slope = {pos}  convexish = {convexish}")
    if isinstance(out, Certificate):
        print(f"outcome: {out.conclusion} (grh_conditional={out.grh_conditional})")
    else:
        print(f"outcome: partial, best {out.best_report.lower_bound:.4f}, "
              f"checked to {out.factor_checked_to}")


if __name__ == "__main__":
    main()
