"""Staged brute-force search over fundamental discriminants q for twists
that maximize the conductor lower bound.

Each stage scores every surviving candidate by a short prime sum minus the
log|q| penalty, keeps the top fraction, and hands the survivors to the next
(longer) stage; the finalists get the full quadratic-form treatment.  Small
primes can be "lined up" (chi_{qd}(p) = +1) during enumeration, which pays
off exactly for the primes where `lineup_bias` is positive.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .bounds import BoundReport, lower_bound, prime_sum
from .exceptions import DataError, SquareFactorFound
from .intcore import (
    CharacterDescriptor,
    enumerate_fundamental,
    kronecker,
    kronecker_fast,
    sieve_segment,
)
from .testfns import TestFunctionSpec, build_quadratic_form, eval_g_many, \
    optimize_coefficients, step_spec, triangle_spec

__all__ = [
    "lineup_bias",
    "default_lineup_primes",
    "SearchStage",
    "SearchConfig",
    "CandidateScore",
    "short_scores",
    "staged_search",
    "refine_top",
]


def lineup_bias(p: int) -> float:
    """Expected net gain from forcing chi_{qd}(p) = +1 during enumeration:
    (2 log p/(p-1)) (sqrt(p) + 1/(p+1)) - log(2(p+1)/p).

    Positive exactly for p <= 251."""
    lp = math.log(p)
    return 2 * lp / (p - 1) * (math.sqrt(p) + 1.0 / (p + 1)) - math.log(2.0 * (p + 1) / p)


def default_lineup_primes(d: int, count: int = 4) -> tuple[int, ...]:
    """First `count` positive-bias primes usable for d (skipping p | d)."""
    out = []
    for p in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59,
              61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107, 109, 113, 127,
              131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193,
              197, 199, 211, 223, 227, 229, 233, 239, 241, 251):
        if len(out) == count:
            break
        if d % p != 0 and lineup_bias(p) > 0:
            out.append(p)
    return tuple(out)


@dataclass(frozen=True)
class SearchStage:
    X: float                 # support bound of the short scoring sum
    keep: float = 0.01       # fraction of candidates surviving the stage

    def __post_init__(self):
        if not (self.X > 0 and 0 < self.keep <= 1):
            raise ValueError("need X > 0 and keep in (0, 1]")


@dataclass(frozen=True)
class SearchConfig:
    q_max: int
    stages: tuple[SearchStage, ...] = (SearchStage(math.log(1e4), 0.01),)
    lineup_primes: tuple[int, ...] = ()
    lineup_sign: bool = True     # force chi_{qd}(-1) = +1 (sign(q) = sign(d))
    min_pool: int = 25           # below this, relax lineup constraints
    auto_relax: bool = True
    min_keep: int = 10           # every stage keeps at least this many
    checkpoint_path: str | None = None
    table_budget: int = 1 << 25

    def __post_init__(self):
        xs = [s.X for s in self.stages]
        ks = [s.keep for s in self.stages]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("stage X values must be strictly increasing")
        if any(b > a for a, b in zip(ks, ks[1:])):
            raise ValueError("keep fractions must be non-increasing")

    def hash(self) -> str:
        payload = json.dumps({
            "q_max": self.q_max,
            "stages": [[s.X, s.keep] for s in self.stages],
            "lineup_primes": list(self.lineup_primes),
            "lineup_sign": self.lineup_sign,
            "min_pool": self.min_pool,
            "auto_relax": self.auto_relax,
            "min_keep": self.min_keep,
        }, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class CandidateScore:
    q: int
    score: float
    stage_reached: int


def _legendre_table(p: int) -> np.ndarray:
    t = -np.ones(p, dtype=np.int8)
    t[0] = 0
    i = np.arange(1, (p - 1) // 2 + 1, dtype=np.int64)
    t[(i * i) % p] = 1
    return t


_KRON2 = np.array([0, 1, 0, -1, 0, -1, 0, 1], dtype=np.int8)  # (q|2) by q mod 8


def short_scores(
    char: CharacterDescriptor,
    qs,
    spec: TestFunctionSpec,
    table_budget: int = 1 << 25,
) -> np.ndarray:
    """prime_sum(char, q, spec) - log|q| for every q at once, via per-prime
    quadratic-residue tables.  Requires |q| < 2**62 and sum of primes below
    e^X within `table_budget` bytes; semantics match the scalar route."""
    d = char.d
    n_max = int(math.exp(spec.X))
    seg = sieve_segment(2, n_max + 1)
    primes = seg.primes
    if int(primes.sum()) > table_budget:
        raise DataError("short-score table budget exceeded; use prime_sum per q")
    qs_arr = np.asarray(qs, dtype=np.int64)
    logs = np.log(primes.astype(float))
    gvals = eval_g_many(spec, logs)
    scores = np.zeros(qs_arr.size)

    for idx, p in enumerate(primes.tolist()):
        chid = kronecker_fast(d, p)
        if chid == 0:
            if d % (p * p) == 0 and char.known_square_part % p != 0:
                raise SquareFactorFound(p)
            continue  # p | d exactly once: chi vanishes for every twist
        y = float(logs[idx])
        wa = 2.0 * y / math.sqrt(p) * float(gvals[idx])
        wb = 0.0
        pj, j = p * p, 2
        while pj <= n_max:
            w = 2.0 * y / math.sqrt(pj) * float(eval_g_many(spec, np.array([j * y]))[0])
            if j % 2 == 0:
                wb += w
            else:
                wa += w
            pj *= p
            j += 1
        if p == 2:
            s = _KRON2[qs_arr & 7].astype(np.float64) * chid
        else:
            s = _legendre_table(p)[qs_arr % p].astype(np.float64) * chid
        if wb != 0.0:
            scores += wa * s + wb * np.abs(s)
        else:
            scores += wa * s
    return scores - np.log(np.abs(qs_arr).astype(float))


def _candidate_pool(char: CharacterDescriptor, cfg: SearchConfig) -> list[int]:
    d = char.d

    def enumerate_with(lineup):
        out = [1] if (not cfg.lineup_sign or d > 0) else []
        for q in enumerate_fundamental(cfg.q_max, coprime_to=d, lineup=lineup):
            if cfg.lineup_sign and q * d < 0:
                continue
            out.append(q)
        return out

    lineup = tuple((p, kronecker(d, p)) for p in cfg.lineup_primes
                   if kronecker(d, p) != 0)
    pool = enumerate_with(lineup)
    if len(pool) < cfg.min_pool and cfg.auto_relax and lineup:
        pool = enumerate_with(())
    if not pool:
        pool = [1] if d > 0 or not cfg.lineup_sign else []
        if not pool:
            pool = [1]
    return pool


def _atomic_write(path: str, text: str):
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def staged_search(char: CharacterDescriptor, cfg: SearchConfig,
                  stop_after_stage: int | None = None) -> list[CandidateScore]:
    """Enumerate candidate twists, filter through the staged short sums, and
    return the survivors ranked by final-stage score (best first).

    Deterministic for a fixed config; resumable from `checkpoint_path`
    (stage granularity, atomic writes).  `stop_after_stage` halts early with
    the checkpoint written, emulating an interrupted run."""
    state = None
    if cfg.checkpoint_path and os.path.exists(cfg.checkpoint_path):
        try:
            with open(cfg.checkpoint_path, "r", encoding="utf-8") as fh:
                state = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise DataError(f"corrupt checkpoint: {e}") from e
        if not isinstance(state, dict) or "config_hash" not in state:
            raise DataError("corrupt checkpoint: missing fields")
        if state["config_hash"] != cfg.hash():
            state = None  # different search; start over

    if state is None:
        pool = _candidate_pool(char, cfg)
        start_stage = 0
        scored = [(q, 0.0) for q in pool]
    else:
        start_stage = state["stage"] + 1
        scored = [(int(q), float(s)) for q, s in state["candidates"]]

    for si in range(start_stage, len(cfg.stages)):
        stage = cfg.stages[si]
        spec = triangle_spec(stage.X)
        qs = [q for q, _ in scored]
        try:
            vals = short_scores(char, qs, spec, cfg.table_budget)
        except DataError:
            vals = np.array([prime_sum(char, q, spec).sum - math.log(abs(q))
                             for q in qs])
        order = sorted(range(len(qs)),
                       key=lambda i: (-vals[i], abs(qs[i]), 0 if qs[i] > 0 else 1))
        n_keep = max(min(cfg.min_keep, len(qs)), math.ceil(stage.keep * len(qs)))
        scored = [(qs[i], float(vals[i])) for i in order[:n_keep]]
        if cfg.checkpoint_path:
            _atomic_write(cfg.checkpoint_path, json.dumps({
                "config_hash": cfg.hash(),
                "stage": si,
                "candidates": [[q, s] for q, s in scored],
            }))
        if stop_after_stage is not None and si >= stop_after_stage:
            return [CandidateScore(q, s, si + 1) for q, s in scored]

    last = len(cfg.stages)
    return [CandidateScore(q, s, last) for q, s in scored]


def refine_top(
    char: CharacterDescriptor,
    candidates,
    X_full: float,
    M: int,
    prime_budget: int = 1 << 34,
    workers: int = 1,
) -> list[BoundReport]:
    """Re-evaluate candidates with the quadratic-form-optimized step test
    function at (X_full, M) and the full bound; sorted best-first."""
    if not candidates:
        raise ValueError("need at least one candidate")
    reports = []
    for cand in candidates:
        q = cand.q if isinstance(cand, CandidateScore) else int(cand)
        form = build_quadratic_form(char, q, X_full, M, prime_budget)
        opt = optimize_coefficients(form)
        spec = step_spec(X_full, opt.a)
        reports.append(lower_bound(char, q, spec, prime_budget, workers))
    reports.sort(key=lambda r: (-r.lower_bound, abs(r.q)))
    return reports
