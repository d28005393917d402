"""Certification pipeline: squarefree and not-squarefull proofs.

The pipeline normalizes N to a discriminant d (odd part, sign fixed so
d = 1 mod 4), then alternates twist search and bound refinement over a
doubling twist range Q and a growing prime-sum length e^X.  A conductor
lower bound L forces the square part l of d to satisfy
l <= sqrt(N / e^L); every prime up to e^X was tested against d as a
by-product of the prime sums, so once that by-product coverage (plus any
explicit top-up) reaches sqrt(N / e^L), squarefree-ness is certified.
Any vanishing character value with a square divisor short-circuits to an
unconditional square-factor certificate.

For the not-squarefull conclusion, N squarefull implies N = s^2 c^3 with
c the conductor of the attached character, so log c > L caps s at
sqrt(N / e^{3L}): a cube check plus a much smaller factor search suffices.

All conclusions except explicit factors are conditional on GRH;
comparisons against sqrt(N / e^L) are done in outward-rounded exact
rational arithmetic with a recorded precision slack, so floating error can
only make the requirement stricter.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath as mp

from . import __version__
from .bounds import BoundReport, lower_bound, prime_sum
from .exceptions import BudgetError, DataError, SquareFactorFound
from .intcore import (
    CharacterDescriptor,
    is_perfect_power,
    iter_primes,
    pollard_pm1,
    trial_divide,
)
from .testfns import TestFunctionSpec
from .twistsearch import (
    SearchConfig,
    SearchStage,
    default_lineup_primes,
    refine_top,
    staged_search,
)

__all__ = [
    "PipelineConfig",
    "Certificate",
    "PartialReport",
    "certify_squarefree",
    "prove_not_squarefull",
    "verify_certificate",
    "required_factor_bound",
]

VALUE_TOL = 1e-6  # recorded recomputation tolerance of certificate values


@dataclass(frozen=True)
class PipelineConfig:
    q_base: int = 2
    q_start_exp: int = 2
    x_start: float = math.log(1e4)
    x_growth: float = 1.35
    max_rounds: int = 20
    prime_budget: int = 1 << 34
    topup_limit: int = 10_000_000     # direct trial-division ceiling
    search_keep: float = 0.05
    refine_top_n: int = 3
    step_dim: int = 8                 # quadratic-form parameter M per refinement
    lineup_count: int = 3
    use_lattice: bool = False
    use_lp: bool = False
    use_pollard: bool = True
    pollard_b1: int = 100_000
    slack: float = 1e-3
    workers: int = 1
    assume_factor_checked_to: int = 1  # external small-factor ruling (recorded)
    theoretical: bool = False          # proof-style nu/X schedule
    fixed_spec: TestFunctionSpec | None = None
    fixed_q: int | None = None
    trace_path: str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.q_base < 2 or self.max_rounds < 1 or self.slack <= 0:
            raise ValueError("budgets must be positive")

    def hash(self) -> str:
        payload = json.dumps({
            k: (v.to_json() if isinstance(v, TestFunctionSpec) else v)
            for k, v in self.__dict__.items()
        }, sort_keys=True, default=str)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Certificate:
    N: int
    conclusion: str                    # squarefree | not_squarefull | square_factor
    q: int
    spec: TestFunctionSpec | None
    bound_report: BoundReport | None
    factor_checked_to: int
    small_factors: tuple[int, ...]     # primes p | N with p^2 not dividing N
    not_perfect_square: bool | None
    not_perfect_cube: bool | None
    square_factor: int | None = None
    witness_prime: int | None = None   # multiplicity-1 prime (unconditional)
    grh_conditional: bool = True
    slack: float = 1e-3
    value_tol: float = VALUE_TOL
    tool_version: str = __version__
    config_hash: str = ""

    def to_json(self) -> str:
        return json.dumps({
            "version": 1,
            "N": str(self.N),
            "conclusion": self.conclusion,
            "q": str(self.q),
            "spec": None if self.spec is None else json.loads(self.spec.to_json()),
            "bound_report": (None if self.bound_report is None
                             else json.loads(self.bound_report.to_json())),
            "factor_checked_to": str(self.factor_checked_to),
            "small_factors": [str(p) for p in self.small_factors],
            "not_perfect_square": self.not_perfect_square,
            "not_perfect_cube": self.not_perfect_cube,
            "square_factor": None if self.square_factor is None else str(self.square_factor),
            "witness_prime": None if self.witness_prime is None else str(self.witness_prime),
            "grh_conditional": self.grh_conditional,
            "envelope": {"slack": self.slack, "value_tol": self.value_tol},
            "tool_version": self.tool_version,
            "config_hash": self.config_hash,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Certificate":
        p = json.loads(text)
        return cls(
            N=int(p["N"]), conclusion=p["conclusion"], q=int(p["q"]),
            spec=(None if p["spec"] is None
                  else TestFunctionSpec.from_json(json.dumps(p["spec"]))),
            bound_report=(None if p["bound_report"] is None
                          else BoundReport.from_json(json.dumps(p["bound_report"]))),
            factor_checked_to=int(p["factor_checked_to"]),
            small_factors=tuple(int(x) for x in p["small_factors"]),
            not_perfect_square=p["not_perfect_square"],
            not_perfect_cube=p["not_perfect_cube"],
            square_factor=(None if p["square_factor"] is None
                           else int(p["square_factor"])),
            witness_prime=(None if p["witness_prime"] is None
                           else int(p["witness_prime"])),
            grh_conditional=p["grh_conditional"],
            slack=p["envelope"]["slack"], value_tol=p["envelope"]["value_tol"],
            tool_version=p["tool_version"], config_hash=p["config_hash"],
        )


@dataclass(frozen=True)
class PartialReport:
    """Budget exhausted: best bound so far, no conclusion."""

    N: int
    best_report: BoundReport | None
    factor_checked_to: int
    small_factors: tuple[int, ...]
    reason: str


# ---------------------------------------------------------------------------
# exact outward-rounded threshold arithmetic

def _exp_lower(x: float) -> Fraction:
    """A rational lower bound for e^x (x float), good to ~1e-40 relative."""
    with mp.workdps(60):
        val = mp.exp(mp.mpf(x))
        sign, man, exp, _ = val._mpf_
        frac = Fraction(man if sign == 0 else -man) * Fraction(2) ** exp
    return frac * Fraction(10**45 - 1, 10**45)


def required_factor_bound(N: int, L: float, slack: float, exponent: int = 1) -> int:
    """Smallest integer B with B^2 >= N / e^{exponent (L - slack)} (outward)."""
    e_lo = _exp_lower(exponent * (L - slack))
    target = Fraction(N) / e_lo
    b = math.isqrt(int(target))
    while Fraction(b) * b < target:
        b += 1
    return b


def _factor_bound_satisfied(B: int, N: int, L: float, slack: float,
                            exponent: int = 1) -> bool:
    return Fraction(B) * B * _exp_lower(exponent * (L - slack)) >= N


# ---------------------------------------------------------------------------
# pipeline state

@dataclass
class _State:
    N: int                      # the odd (sign-free) part being analyzed
    char: CharacterDescriptor
    checked_to: int = 1         # all primes <= this tested against N
    units: set = field(default_factory=set)
    best: BoundReport | None = None
    lp_bound: float = -math.inf
    trace: list = field(default_factory=list)

    def absorb(self, rep: BoundReport):
        self.units.update(rep.unit_factors)
        self.checked_to = max(self.checked_to, rep.primes_checked_to)
        if self.best is None or rep.lower_bound > self.best.lower_bound:
            self.best = rep

    @property
    def best_L(self) -> float:
        return self.best.lower_bound if self.best else 0.0


def _sweep_square_factors(N: int, lo: int, hi: int) -> tuple[int | None, list[int]]:
    """Scan primes in [lo, hi] dividing N; return (square factor, unit primes)."""
    units = []
    for seg in iter_primes(max(2, lo), hi + 1):
        for p in seg.primes.tolist():
            if N % p == 0:
                if N % (p * p) == 0:
                    return p, units
                units.append(p)
    return None, units


def _emit_trace(cfg: PipelineConfig, state: _State):
    if cfg.trace_path and state.best is not None:
        state.trace.append((state.best.X, state.best_L, state.best.q))
        with open(cfg.trace_path, "w", encoding="utf-8") as fh:
            fh.write(f"# sqfree {__version__} trace config={cfg.hash()} "
                     f"grh_conditional=true\n")
            fh.write("X,best_bound,best_q\n")
            best_so_far = -math.inf
            for X, L, q in state.trace:
                best_so_far = max(best_so_far, L)
                fh.write(f"{X!r},{best_so_far!r},{q}\n")


def _theoretical_x(N: int, Q: int) -> float:
    ll = math.log(math.log(N))
    nu = 0.5 * ll + 1.0 / (12.0 * ll)
    return 4.0 * nu * math.log(Q)


def _run_bound_rounds(state: _State, cfg: PipelineConfig, stop_check):
    """Iterate Q = q_base^k rounds until stop_check(state) or budgets end.

    Raises SquareFactorFound on a square divisor.  Returns None; the caller
    reads the final state."""
    N, char = state.N, state.char
    if cfg.fixed_spec is not None:
        rep = lower_bound(char, cfg.fixed_q or 1, cfg.fixed_spec,
                          cfg.prime_budget, cfg.workers)
        if rep.square_factor_found:
            raise SquareFactorFound(rep.square_factor_found)
        state.absorb(rep)
        _emit_trace(cfg, state)
        return

    X = _theoretical_x(N, cfg.q_base ** cfg.q_start_exp) if cfg.theoretical \
        else cfg.x_start
    for k in range(cfg.max_rounds):
        Q = cfg.q_base ** (cfg.q_start_exp + k)
        if cfg.theoretical:
            X = _theoretical_x(N, Q)
        X = min(X, math.log(cfg.prime_budget) - 1e-6)
        short_X = min(math.log(1e4), X)
        stages = [SearchStage(short_X, cfg.search_keep)]
        if X > short_X + 0.5:
            stages.append(SearchStage(min(X, short_X + 1.6), cfg.search_keep))
        scfg = SearchConfig(
            q_max=Q, stages=tuple(stages),
            lineup_primes=default_lineup_primes(char.d, cfg.lineup_count),
            table_budget=1 << 27)
        ranked = staged_search(char, scfg)
        pool = ranked[: cfg.refine_top_n]
        if cfg.use_lattice:
            from .lattice import build_twist_lattice, extract_characters, lll_reduce
            try:
                basis = build_twist_lattice(char, min(100, max(5, Q)), min(100, max(5, Q)),
                                            75 + (cfg.seed % 75))
                cands = extract_characters(lll_reduce(basis), basis, max_results=3)
                known = {c.q for c in pool}
                extra = [c.q for c in cands
                         if c.q not in known and math.gcd(c.q, char.d) == 1]
                pool = pool + extra[:2]
            except ValueError:
                pass
        reports = refine_top(char, pool, X, cfg.step_dim,
                             cfg.prime_budget, cfg.workers)
        for rep in reports:
            if rep.square_factor_found:
                raise SquareFactorFound(rep.square_factor_found)
            state.absorb(rep)
        if cfg.use_lp and state.best is not None:
            # reported alongside, never folded into the certificate: the
            # certificate bound must stay recomputable by the verifier
            from .lpsolve import build_lp_system, solve_lp
            from .testfns import sinc_power_spec
            specs = [sinc_power_spec(X, kk) for kk in range(1, 5)]
            dirs = [(True, kk > 1) for kk in range(1, 5)]
            sysb = build_lp_system(char, state.best.q, specs, T=4.0, V=100,
                                   integer_bin_count=20, bound_directions=dirs,
                                   prime_budget=cfg.prime_budget,
                                   workers=cfg.workers)
            sol = solve_lp(sysb, node_budget=2000)
            if sol.status in ("optimal", "budget_exceeded"):
                state.lp_bound = max(state.lp_bound, sol.logd_lower)
        _emit_trace(cfg, state)
        if stop_check(state):
            return
        if not cfg.theoretical:
            X *= cfg.x_growth
    return


def _pollard_probe(N: int, cfg: PipelineConfig) -> int | None:
    if not cfg.use_pollard or N % 2 == 0:
        return None
    return pollard_pm1(N, cfg.pollard_b1, cfg.seed)


def _analyze_found_factor(N: int, f: int) -> tuple[int | None, list[int]]:
    """Classify a discovered factor: (a square prime divisor or None, the
    multiplicity-1 primes).  Collects everything; callers pick what serves
    their conclusion."""
    facs, cof = trial_divide(f, 10**6)
    units = []
    square = None
    primes = [p for p, _ in facs] + ([cof] if cof > 1 else [])
    for p in primes:
        if N % (p * p) == 0:
            square = square or p
        elif N % p == 0:
            units.append(p)
    return square, units


# ---------------------------------------------------------------------------
# public pipeline entry points

def certify_squarefree(N: int, cfg: PipelineConfig = PipelineConfig()):
    """Produce a Certificate (squarefree or square_factor) or a PartialReport."""
    if N <= 1:
        raise ValueError("need N > 1")
    if N <= 3:
        return Certificate(N, "squarefree", 1, None, None, 1, (), True, None,
                           grh_conditional=False, slack=cfg.slack,
                           config_hash=cfg.hash())
    small = []
    if N % 2 == 0:
        if N % 4 == 0:
            return _square_factor_cert(N, 2, cfg)
        small.append(2)
    n_odd = N // 2 if N % 2 == 0 else N

    r = is_perfect_power(n_odd, 2)
    if r is not None and r > 1:
        return _square_factor_cert(N, r, cfg)

    d = n_odd if n_odd % 4 == 1 else -n_odd
    state = _State(n_odd, CharacterDescriptor(d))
    state.units.update(small)

    f = _pollard_probe(n_odd, cfg)
    if f and f < n_odd:
        sq, units = _analyze_found_factor(N, f)
        if sq is not None:
            return _square_factor_cert(N, sq, cfg)
        state.units.update(units)

    def closed(st: _State) -> bool:
        if st.best is None:
            return False
        B = max(st.checked_to, cfg.assume_factor_checked_to)
        if _factor_bound_satisfied(B, st.N, st.best_L, cfg.slack):
            return True
        # cube-root shortcut: all primes to N^(1/3) checked means l = 1
        if (st.checked_to + 1) ** 3 > st.N:
            return True
        # direct top-up when the requirement is within trial-division reach
        B_req = required_factor_bound(st.N, st.best_L, cfg.slack)
        if st.checked_to < B_req <= cfg.topup_limit:
            sq, units = _sweep_square_factors(st.N, st.checked_to + 1, B_req)
            if sq is not None:
                raise SquareFactorFound(sq)
            st.units.update(units)
            st.checked_to = max(st.checked_to, B_req)
            return True
        return False

    try:
        _run_bound_rounds(state, cfg, closed)
        done = state.best is not None and closed(state)
    except SquareFactorFound as e:
        return _square_factor_cert(N, e.factor, cfg)

    if done:
        B = max(state.checked_to, cfg.assume_factor_checked_to)
        unconditional = (state.checked_to + 1) ** 3 > state.N
        return Certificate(
            N, "squarefree", state.best.q, state.best.spec, state.best,
            factor_checked_to=B,
            small_factors=tuple(sorted(state.units)),
            not_perfect_square=True, not_perfect_cube=None,
            grh_conditional=not unconditional, slack=cfg.slack,
            config_hash=cfg.hash())
    return PartialReport(N, state.best, state.checked_to,
                         tuple(sorted(state.units)), "budgets exhausted")


def prove_not_squarefull(N: int, cfg: PipelineConfig = PipelineConfig()):
    """Certificate that N has a multiplicity-1 prime factor (or square_factor
    / partial outcome).  Needs N odd."""
    if N <= 1 or N % 2 == 0:
        raise ValueError("need odd N > 1")
    r = is_perfect_power(N, 3)
    if r is not None and r > 1:
        return _square_factor_cert(N, r, cfg)  # perfect cube: N is squarefull
    r2 = is_perfect_power(N, 2)
    if r2 is not None and r2 > 1:
        return _square_factor_cert(N, r2, cfg)

    d = N if N % 4 == 1 else -N
    state = _State(N, CharacterDescriptor(d))

    f = _pollard_probe(N, cfg)
    if f and f < N:
        sq, units = _analyze_found_factor(N, f)
        if units:
            return _witness_cert(N, units[0], cfg)
        if sq is not None:
            return _square_factor_cert(N, sq, cfg)

    def closed(st: _State) -> bool:
        if st.units:
            return True
        if st.best is None:
            return False
        B = max(st.checked_to, cfg.assume_factor_checked_to)
        if _factor_bound_satisfied(B, st.N, st.best_L, cfg.slack, exponent=3):
            return True
        B_req = required_factor_bound(st.N, st.best_L, cfg.slack, exponent=3)
        if st.checked_to < B_req <= cfg.topup_limit:
            sq, units = _sweep_square_factors(st.N, st.checked_to + 1, B_req)
            st.units.update(units)
            if units:
                return True
            if sq is not None:
                raise SquareFactorFound(sq)
            st.checked_to = max(st.checked_to, B_req)
            return True
        return False

    try:
        _run_bound_rounds(state, cfg, closed)
        done = state.best is not None and closed(state)
    except SquareFactorFound as e:
        return _square_factor_cert(N, e.factor, cfg)

    if state.units:
        return _witness_cert(N, min(state.units), cfg)
    if done:
        B = max(state.checked_to, cfg.assume_factor_checked_to)
        return Certificate(
            N, "not_squarefull", state.best.q, state.best.spec, state.best,
            factor_checked_to=B, small_factors=(),
            not_perfect_square=True, not_perfect_cube=True,
            grh_conditional=True, slack=cfg.slack, config_hash=cfg.hash())
    return PartialReport(N, state.best, state.checked_to,
                         tuple(sorted(state.units)), "budgets exhausted")


def _square_factor_cert(N: int, r: int, cfg: PipelineConfig) -> Certificate:
    if N % (r * r) != 0:
        raise DataError(f"claimed square factor {r} does not divide {N} squared")
    return Certificate(N, "square_factor", 1, None, None, 1, (), None, None,
                       square_factor=r, grh_conditional=False,
                       slack=cfg.slack, config_hash=cfg.hash())


def _witness_cert(N: int, p: int, cfg: PipelineConfig) -> Certificate:
    return Certificate(N, "not_squarefull", 1, None, None, 1, (p,),
                       not_perfect_square=None,
                       not_perfect_cube=is_perfect_power(N, 3) is None,
                       witness_prime=p, grh_conditional=False,
                       slack=cfg.slack, config_hash=cfg.hash())


# ---------------------------------------------------------------------------
# verification

def verify_certificate(cert: Certificate, budget: int = 5_000_000,
                       workers: int = 1) -> bool:
    """Recompute every claim of the certificate; False on any discrepancy.

    Raises BudgetError (inconclusive, distinct from False) when the factor
    recheck or prime sum would exceed `budget`.
    """
    N = cert.N
    if N <= 1:
        return False
    if cert.conclusion == "square_factor":
        r = cert.square_factor
        return r is not None and r > 1 and N % (r * r) == 0

    if cert.conclusion == "not_squarefull" and cert.witness_prime:
        p = cert.witness_prime
        return N % p == 0 and N % (p * p) != 0

    if cert.conclusion not in ("squarefree", "not_squarefull"):
        return False
    if N <= 3 and cert.conclusion == "squarefree":
        return True
    if cert.bound_report is None or cert.spec is None:
        return False

    n_odd = N
    if cert.conclusion == "squarefree":
        if N % 4 == 0:
            return False
        n_odd = N // 2 if N % 2 == 0 else N
    elif N % 2 == 0:
        return False

    rep = cert.bound_report
    d = n_odd if n_odd % 4 == 1 else -n_odd
    if rep.d != d:
        return False

    # 1. composition identity, exactly as stored
    if rep.lower_bound != rep.prime_sum + rep.arch_terms - rep.twist_penalty:
        return False
    if abs(rep.twist_penalty - math.log(abs(rep.q))) > 1e-12:
        return False

    # 2. the B-vs-sqrt(N/e^L) arithmetic, outward-rounded exact
    expo = 1 if cert.conclusion == "squarefree" else 3
    B = cert.factor_checked_to
    if not _factor_bound_satisfied(B, n_odd, rep.lower_bound, cert.slack, expo):
        # the cube-root shortcut is the one alternative closing rule
        if not (cert.conclusion == "squarefree" and (B + 1) ** 3 > n_odd):
            return False

    # 3. power attestations
    if cert.not_perfect_square and is_perfect_power(n_odd, 2) is not None:
        return False
    if cert.not_perfect_cube and is_perfect_power(n_odd, 3) is not None:
        return False
    if cert.conclusion == "squarefree" and is_perfect_power(n_odd, 2) is not None:
        return False
    if cert.conclusion == "not_squarefull" and is_perfect_power(n_odd, 3) is not None:
        return False

    # 4. independent recomputation of the prime sum and archimedean block
    if math.exp(rep.spec.X) > budget:
        raise BudgetError("prime sum recheck exceeds verification budget")
    ps = prime_sum(CharacterDescriptor(d), rep.q, rep.spec,
                   prime_budget=budget, workers=workers,
                   segment_span=1 << 19)  # different split: independent path
    if ps.square_factor is not None:
        return False
    if abs(ps.sum - rep.prime_sum) > cert.value_tol:
        return False
    from .bounds import arch_terms
    at = arch_terms(rep.spec, "even" if rep.q * d > 0 else "odd")
    if abs(at - rep.arch_terms) > cert.value_tol:
        return False

    # 5. the factor screen up to B
    if B > budget:
        raise BudgetError("factor recheck exceeds verification budget")
    sq, units = _sweep_square_factors(n_odd, 2, B)
    if cert.conclusion == "squarefree":
        if sq is not None:
            return False
        declared = set(cert.small_factors)
        if N % 2 == 0:
            units = sorted(set(units) | {2})
        if set(units) - declared:
            return False
    else:  # not_squarefull via the bound: no factor <= B at all is required
        if sq is not None or units:
            return False
    return True
