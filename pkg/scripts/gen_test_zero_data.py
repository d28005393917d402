#!/usr/bin/env python3
"""Regenerate the frozen zero-list test data under tests/data/.

Covers the canonical discriminants used by the suite plus 20 reproducibly
chosen random fundamental discriminants in [1e4, 1e6].  Run from the repo
root.  Regeneration is deterministic.
"""

import pathlib
import sys

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).parent))
from zero_oracle import write_zero_file  # noqa: E402

sys.path.insert(0, str(pathlib.Path(__file__).parent.parent / "src"))
from sqfree.intcore import is_fundamental_discriminant  # noqa: E402

DATA = pathlib.Path(__file__).parent.parent / "tests" / "data"


def random_fundamental_list(n=20, lo=10**4, hi=10**6, seed=20250810):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        d = int(rng.integers(lo, hi))
        d += (1 - d) % 4  # push to 1 mod 4
        if lo <= d <= hi and is_fundamental_discriminant(d) and d not in out:
            out.append(d)
    return out


def main():
    DATA.mkdir(parents=True, exist_ok=True)
    write_zero_file(DATA / "zeros_1548889.txt", 1548889, 160.0)
    write_zero_file(DATA / "zeros_5.txt", 5, 120.0)
    rand = DATA / "rand"
    rand.mkdir(exist_ok=True)
    for d in random_fundamental_list():
        write_zero_file(rand / f"zeros_{d}.txt", d, 35.0)
        print("done", d)


if __name__ == "__main__":
    main()
