"""Conductor lower bounds for quadratic characters.

Evaluates, for a test-function pair (g, h) supported on [0, X]:

  * the archimedean block  log(8 pi e^gamma)
        - int_0^inf (1 - g(x)) / (2 sinh(x/2)) dx
        + chi(-1) * int_0^inf g(x) / (2 cosh(x/2)) dx,
  * the prime-power sum  2 sum_{n = p^j <= e^X} Lambda(n) chi(n) n^{-1/2} g(log n),
  * the zero-side sum  2 sum_{gamma < T} h(gamma)  from an ingested ordinate list,

and composes them into GRH-conditional lower bounds for log of the conductor,
with a -log|q| penalty when the character is twisted by a fundamental
discriminant q.  A vanishing character value at a prime p (with p not
dividing q) triggers the square-divisor test p^2 | d: a hit short-circuits
the computation, since it answers the original question outright.

The module also evaluates the Gaussian-damped character series whose
reflection point locates the conductor heuristically (theta scan).
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .exceptions import BudgetError, DataError
from .intcore import CharacterDescriptor, iter_primes, kronecker_fast
from .testfns import (
    LOG_8PI_EGAMMA,
    TestFunctionSpec,
    csch2,
    eval_g,
    eval_g_many,
    eval_h,
    h_tail_envelope,
    sech2,
)

__all__ = [
    "ZeroList",
    "BoundReport",
    "PrimeSumResult",
    "arch_terms",
    "prime_sum",
    "lower_bound",
    "zero_sum",
    "tail_bound",
    "explicit_formula_residual",
    "theta_scan",
    "ThetaScanResult",
]


# ---------------------------------------------------------------------------
# zero lists (ingested from external tools; never computed here)

@dataclass(frozen=True)
class ZeroList:
    """Non-negative zero ordinates, ascending, with a completeness height."""

    ordinates: np.ndarray
    source: str = ""
    t_complete: float = 0.0

    def __post_init__(self):
        o = np.asarray(self.ordinates, dtype=float)
        if o.ndim != 1 or (o.size and (np.any(np.diff(o) < 0) or o[0] < 0)):
            raise DataError("ordinates must be ascending and non-negative")
        object.__setattr__(self, "ordinates", o)

    @classmethod
    def from_file(cls, path) -> "ZeroList":
        t_complete = 0.0
        vals = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    if line.startswith("#T_complete="):
                        t_complete = float(line.split("=", 1)[1])
                    continue
                vals.append(float(line))
        return cls(np.array(vals), source=str(path), t_complete=t_complete)

    def to_file(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"#T_complete={self.t_complete!r}\n")
            for g in self.ordinates:
                fh.write(f"{float(g)!r}\n")


# ---------------------------------------------------------------------------
# archimedean block

def arch_terms(spec: TestFunctionSpec, parity: str) -> float:
    """log(8 pi e^gamma) minus the sinh integral plus the signed cosh integral.

    parity 'even' means chi(-1) = +1.  Adaptive quadrature to ~1e-10; the
    removable 0/0 at the origin is harmless because (1 - g) vanishes there.
    """
    if parity not in ("even", "odd"):
        raise ValueError("parity must be 'even' or 'odd'")
    X = spec.X

    def sinh_part(x):
        if x < 1e-12:
            x = 1e-12
        return (1.0 - eval_g(spec, x)) * csch2(x)

    kinks = None
    if spec.family == "step_autocorr":
        delta = X / (2 * spec.param("M") + 1)
        kinks = [k * delta for k in range(1, 2 * spec.param("M") + 1)]
    main, _ = integrate.quad(sinh_part, 0.0, X, epsabs=1e-11, epsrel=1e-11,
                             limit=400, points=kinks)
    # beyond the support g = 0 and the integrand has the closed form primitive
    tail = -math.log(math.tanh(0.25 * X))
    cosh_part, _ = integrate.quad(lambda x: eval_g(spec, x) * sech2(x),
                                  0.0, X, epsabs=1e-11, epsrel=1e-11,
                                  limit=400, points=kinks)
    eps = 1.0 if parity == "even" else -1.0
    return LOG_8PI_EGAMMA - (main + tail) + eps * cosh_part


# ---------------------------------------------------------------------------
# prime-power sum

@dataclass(frozen=True)
class PrimeSumResult:
    sum: float
    square_factor: int | None
    checked_to: int                     # all primes <= this were examined
    unit_factors: tuple[int, ...] = ()  # primes p | d with p^2 not dividing d


def _segment_terms(d: int, q: int, spec: TestFunctionSpec, lo: int, hi: int,
                   ksp: int = 1):
    """Terms of the prime part over primes in [lo, hi); raises nothing.

    Returns (terms ascending by prime, square_factor or None, unit_factors).
    Stops at the first square factor.
    """
    qd = q * d
    out = []
    units = []
    for seg in iter_primes(lo, hi):
        ps = seg.primes
        if ps.size == 0:
            continue
        logs = np.log(ps.astype(float))
        gvals = eval_g_many(spec, logs)
        w = 2.0 * logs / np.sqrt(ps.astype(float)) * gvals
        chis = np.empty(ps.size)
        for i, p in enumerate(ps.tolist()):
            chi = kronecker_fast(qd, p)
            if chi == 0 and q % p != 0:
                # p | d: an unknown square divisor answers the question outright
                if d % (p * p) == 0:
                    if ksp % p != 0:
                        return (chis[:i] * w[:i]).tolist(), p, tuple(units)
                elif ksp % p != 0:
                    units.append(p)
            chis[i] = chi
        nz = chis != 0.0
        out.extend((chis[nz] * w[nz]).tolist())
    return out, None, tuple(units)


def prime_sum(
    char: CharacterDescriptor,
    q: int,
    spec: TestFunctionSpec,
    prime_budget: int = 1 << 34,
    workers: int = 1,
    segment_span: int = 1 << 22,
) -> PrimeSumResult:
    """2 sum over prime powers n <= e^X of Lambda(n) chi_{qd}(n) n^{-1/2} g(log n).

    Compensated accumulation per segment, segments merged in fixed ascending
    order, so the value is reproducible regardless of `workers`.  Early exit
    with the square factor when a vanishing character value exposes one.
    """
    X = spec.X
    n_max = int(math.exp(X))
    while math.exp(X) < n_max:  # guard the float -> int edge
        n_max -= 1
    if n_max > prime_budget:
        raise BudgetError(f"prime sum to {n_max} exceeds budget {prime_budget}")
    d = char.d

    bounds_list = []
    a = 2
    while a <= n_max:
        b = min(a + segment_span, n_max + 1)
        bounds_list.append((a, b))
        a = b

    partials: list[list[float]] = []
    square_factor = None
    units: list[int] = []
    if workers <= 1 or len(bounds_list) <= 1:
        for lo, hi in bounds_list:
            terms, sq, us = _segment_terms(d, q, spec, lo, hi, char.known_square_part)
            partials.append(terms)
            units.extend(us)
            if sq is not None:
                square_factor = sq
                break
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(_segment_terms, d, q, spec, lo, hi,
                              char.known_square_part)
                    for lo, hi in bounds_list]
            for fut in futs:
                terms, sq, us = fut.result()
                partials.append(terms)
                units.extend(us)
                if sq is not None:
                    square_factor = sq
                    break

    total = math.fsum(math.fsum(terms) for terms in partials)

    if square_factor is None:
        # higher prime powers p^j <= e^X, j >= 2 (cheap: p <= e^{X/2})
        qd = q * d
        extra = []
        for seg in iter_primes(2, math.isqrt(n_max) + 1):
            for p in seg.primes.tolist():
                chi = kronecker_fast(qd, p)
                if chi == 0:
                    continue
                y = math.log(p)
                pj, cj, j = p * p, chi * chi, 2
                while pj <= n_max:
                    extra.append(2.0 * cj * y / math.sqrt(pj) * eval_g(spec, j * y))
                    pj *= p
                    cj *= chi
                    j += 1
        total += math.fsum(extra)

    return PrimeSumResult(total, square_factor, n_max, tuple(sorted(set(units))))


# ---------------------------------------------------------------------------
# bound reports

@dataclass(frozen=True)
class BoundReport:
    """The evaluated components of a GRH-conditional conductor lower bound.

    lower_bound == prime_sum + arch_terms - twist_penalty exactly as stored.
    """

    d: int
    q: int
    spec: TestFunctionSpec
    X: float
    prime_sum: float
    arch_terms: float
    twist_penalty: float
    lower_bound: float
    primes_checked_to: int
    square_factor_found: int | None = None
    unit_factors: tuple[int, ...] = ()

    def to_json(self) -> str:
        return json.dumps({
            "d": str(self.d),
            "q": str(self.q),
            "spec": json.loads(self.spec.to_json()),
            "X": self.X,
            "prime_sum": self.prime_sum,
            "arch_terms": self.arch_terms,
            "twist_penalty": self.twist_penalty,
            "lower_bound": self.lower_bound,
            "primes_checked_to": self.primes_checked_to,
            "square_factor_found":
                None if self.square_factor_found is None else str(self.square_factor_found),
            "unit_factors": [str(u) for u in self.unit_factors],
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "BoundReport":
        p = json.loads(text)
        return cls(
            d=int(p["d"]), q=int(p["q"]),
            spec=TestFunctionSpec.from_json(json.dumps(p["spec"])),
            X=p["X"], prime_sum=p["prime_sum"], arch_terms=p["arch_terms"],
            twist_penalty=p["twist_penalty"], lower_bound=p["lower_bound"],
            primes_checked_to=p["primes_checked_to"],
            square_factor_found=(None if p["square_factor_found"] is None
                                 else int(p["square_factor_found"])),
            unit_factors=tuple(int(u) for u in p.get("unit_factors", [])),
        )


def lower_bound(
    char: CharacterDescriptor,
    q: int,
    spec: TestFunctionSpec,
    prime_budget: int = 1 << 34,
    workers: int = 1,
) -> BoundReport:
    """Assemble the conductor lower bound report for the twist by q.

    GRH-conditional: log of the conductor of the character (d|.) is at least
    `lower_bound` when no square factor was found en route.
    """
    ps = prime_sum(char, q, spec, prime_budget=prime_budget, workers=workers)
    at = arch_terms(spec, "even" if q * char.d > 0 else "odd")
    penalty = math.log(abs(q))
    return BoundReport(
        d=char.d, q=q, spec=spec, X=spec.X,
        prime_sum=ps.sum, arch_terms=at, twist_penalty=penalty,
        lower_bound=ps.sum + at - penalty,
        primes_checked_to=ps.checked_to,
        square_factor_found=ps.square_factor,
        unit_factors=ps.unit_factors,
    )


# ---------------------------------------------------------------------------
# zero-side sums and the truncation envelope

#: default constants of the zero-counting envelope
#:   N(t) <= (t/2pi) [log m + log((t+2)/(2 pi e))] + C1 (log m + log(t+2)) + C2
#: (ordinates counted with gamma >= 0 only).  Conservative classical shape;
#: config-overridable, and certificates record the values used.
ENVELOPE_C1 = 1.0
ENVELOPE_C2 = 5.0


def _count_envelope(t: float, modulus_log: float, c1: float, c2: float) -> float:
    t = max(t, 0.0)
    smooth = t / (2 * math.pi) * (modulus_log + math.log((t + 2.0) / (2 * math.pi * math.e)))
    return max(0.0, smooth) + c1 * (modulus_log + math.log(t + 2.0)) + c2


def _count_envelope_deriv(t: float, modulus_log: float, c1: float) -> float:
    main = (modulus_log + math.log((t + 2.0) / (2 * math.pi * math.e))) / (2 * math.pi)
    return max(0.0, main) + t / (2 * math.pi * (t + 2.0)) + c1 / (t + 2.0)


def tail_bound(
    spec: TestFunctionSpec,
    T: float,
    modulus_log: float,
    c1: float = ENVELOPE_C1,
    c2: float = ENVELOPE_C2,
) -> float:
    """Upper bound for |2 sum_{gamma >= T} h(gamma)|, by partial summation of a
    nonincreasing majorant of h against the zero-counting envelope.

    Monotone nonincreasing in T.  For slowly decaying families (triangle,
    step_autocorr: 1/t^2) the value is finite but loose; `tail_is_loose`
    reports that flag.
    """
    if T < 0:
        raise ValueError("need T >= 0")
    H_T = h_tail_envelope(spec, T)
    env_T = _count_envelope(T, modulus_log, c1, c2)

    def integrand(t):
        return _count_envelope_deriv(t, modulus_log, c1) * h_tail_envelope(spec, t)

    val, _ = integrate.quad(integrand, T, np.inf, limit=400)
    return 2.0 * (env_T * H_T + val)


def tail_is_loose(spec: TestFunctionSpec) -> bool:
    """True for families whose transform decays too slowly (~1/t^2) for tight tails."""
    return spec.family in ("triangle", "step_autocorr", "g_alpha")


def zero_sum(
    zeros: ZeroList,
    spec: TestFunctionSpec,
    T: float,
    modulus_log: float = 0.0,
) -> tuple[float, float]:
    """(2 sum_{gamma < T} h(gamma), truncation tail bound).

    The list must be complete up to T; `modulus_log` feeds the envelope of
    the tail estimate (log of the character modulus).
    """
    if zeros.t_complete < T:
        raise DataError(f"zero list complete to {zeros.t_complete}, below T = {T}")
    sel = zeros.ordinates[zeros.ordinates < T]
    s = 2.0 * float(np.sum(eval_h(spec, sel))) if sel.size else 0.0
    return s, tail_bound(spec, T, modulus_log)


def explicit_formula_residual(
    char: CharacterDescriptor,
    q: int,
    spec: TestFunctionSpec,
    zeros: ZeroList,
    T: float,
) -> float:
    """|log|q d| - (zero sum + prime sum + archimedean block)|.

    Test-harness use: requires d squarefree (so |q d| is the true conductor)
    and the zero list complete to T.  Expected <= tail bound + 1e-3.
    """
    modulus_log = math.log(abs(q * char.d))
    zs, _ = zero_sum(zeros, spec, T, modulus_log)
    ps = prime_sum(char, q, spec)
    if ps.square_factor is not None:
        raise DataError(f"d has square factor {ps.square_factor}; residual undefined")
    at = arch_terms(spec, "even" if q * char.d > 0 else "odd")
    return abs(modulus_log - (zs + ps.sum + at))


# ---------------------------------------------------------------------------
# theta scan

@dataclass(frozen=True)
class ThetaScanResult:
    values: np.ndarray
    candidates: np.ndarray      # candidate reflection points B
    residuals: np.ndarray       # mean squared pairing mismatch per candidate
    symmetry_estimate: float | None
    square_factor: int | None


def theta_scan(
    char: CharacterDescriptor,
    x_grid: np.ndarray,
    terms_budget: int = 50_000_000,
    stability_ratio: float = 0.25,
) -> ThetaScanResult:
    """Evaluate S(x) = x^{-1/2} sum_n chi(n) (n/x)^a exp(-pi (n/x)^2) on a
    geometric grid (a = 0 for even characters, 1 for odd) and estimate the
    reflection point B minimizing sum |S(x) - S(B/x)|^2 over grid pairs.

    Heuristic and non-certifying: the estimate is None unless the best
    candidate's residual is below `stability_ratio` times the median.
    A zero character value at a prime with a square divisor short-circuits.
    """
    x = np.asarray(x_grid, dtype=float)
    if x.ndim != 1 or x.size < 1 or np.any(x <= 0):
        raise ValueError("need a 1-d grid of positive points")
    if x.size >= 2:
        ratios = x[1:] / x[:-1]
        r = float(ratios[0])
        if r <= 1 or np.any(np.abs(ratios / r - 1) > 1e-9):
            raise ValueError("grid must be geometric and increasing")
    else:
        r = math.e

    d = char.d
    a_exp = 0 if d > 0 else 1
    cutoff = math.sqrt(math.log(1e20) / math.pi)  # Gaussian factor below 1e-20
    n_global = int(cutoff * x[-1]) + 1
    if int(cutoff * float(np.sum(x))) + x.size > terms_budget:
        raise BudgetError("theta series term budget exceeded")

    chi = np.zeros(n_global + 1)
    square_factor = None
    for n in range(1, n_global + 1):
        c = kronecker_fast(d, n)
        if c == 0:
            g = math.gcd(n, abs(d))
            if g > 1:
                p = _smallest_prime_factor(g)
                if d % (p * p) == 0 and char.known_square_part % p != 0:
                    square_factor = p
                    break
        chi[n] = c
    if square_factor is not None:
        empty = np.array([])
        return ThetaScanResult(empty, empty, empty, None, square_factor)

    ns = np.arange(1, n_global + 1, dtype=float)
    vals = np.empty(x.size)
    for i, xi in enumerate(x):
        m = int(cutoff * xi) + 1
        t = ns[:m] / xi
        series = chi[1: m + 1] * np.exp(-math.pi * t * t)
        if a_exp:
            series = series * t
        vals[i] = float(np.sum(series)) / math.sqrt(xi)

    # pair residuals: candidates B_j = x_0^2 r^j map grid index i -> j - i.
    # Relative mismatch, so zero-tail pairings cannot fake a symmetry point.
    n_pts = x.size
    peak = float(np.max(np.abs(vals))) if n_pts else 0.0
    cands = []
    resids = []
    for j in range(2 * n_pts - 1):
        pairs = [(i, j - i) for i in range(n_pts) if 0 <= j - i < n_pts]
        if len(pairs) < min(5, n_pts):
            continue
        num = math.fsum((vals[i] - vals[k]) ** 2 for i, k in pairs)
        den = math.fsum(vals[i] ** 2 + vals[k] ** 2 for i, k in pairs)
        if den < 1e-10 * len(pairs) * peak * peak:
            continue
        cands.append(x[0] ** 2 * r ** j)
        resids.append(num / den)
    cands = np.array(cands)
    resids = np.array(resids)
    estimate = None
    if resids.size:
        jstar = int(np.argmin(resids))
        if resids[jstar] < stability_ratio * float(np.median(resids)):
            estimate = float(cands[jstar])
    return ThetaScanResult(vals, cands, resids, estimate, None)


def _smallest_prime_factor(n: int) -> int:
    if n % 2 == 0:
        return 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return f
        f += 2
    return n
