"""Mixed-integer linear refinement of the conductor lower bound.

Several test functions at once give two-sided explicit-formula constraints;
binning the zero ordinates into counts m(v) on [0, T) linearizes them:

  2 sum_v m(v) h_k^-(v)  <=  logd + log|q| - P_k  <=  2 sum_v m(v) h_k^+(v) + E_k

(per normalized test function g_k(0) = 1), where P_k is the prime sum plus
archimedean block and E_k bounds the truncated zero tail.  Because every
family certifies h >= 0, the truncated zero sum is already a lower bound for
the full one, so no tail term enters the lower direction.  Minimizing `logd`
subject to these (with the leading bins constrained integer) yields a valid
GRH-conditional lower bound: the true (logd, m) is feasible.

The LP relaxation is solved by an exact rational simplex (inputs converted
to binary-exact Fractions), integrality by best-bound branch and bound.
A machine-checkable dual certificate is emitted for the pure-LP path only.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .bounds import arch_terms, prime_sum, tail_bound, tail_is_loose
from .exceptions import DataError
from .intcore import CharacterDescriptor
from .testfns import TestFunctionSpec, eval_h, h_prime_bound

__all__ = [
    "LPSystem",
    "LPSolution",
    "tail_bound",
    "tail_is_loose",
    "build_lp_system",
    "solve_lp",
    "export_lp",
    "solve_lp_relaxation_only",
]


@dataclass(frozen=True)
class LPSystem:
    T: float
    V: int
    h_minus: np.ndarray           # K x V lower bin envelopes (>= 0)
    h_plus: np.ndarray            # K x V upper bin envelopes
    rhs_terms: tuple              # per k: (g0, P_k, E_k)
    integer_bin_count: int
    q: int
    d: int
    directions: tuple             # per k: (use_lower, use_upper)
    envelope: tuple = ()          # (c1, c2) used for the tails

    @property
    def delta_bin(self) -> float:
        return self.T / self.V

    def __post_init__(self):
        if np.any(self.h_minus > self.h_plus + 1e-15):
            raise ValueError("bin envelopes must satisfy h_minus <= h_plus")
        if not (0 <= self.integer_bin_count <= self.V):
            raise ValueError("integer bin count out of range")


@dataclass(frozen=True)
class LPSolution:
    logd_lower: float
    m: tuple
    status: str                   # optimal | infeasible | budget_exceeded
    dual_certificate: tuple | None = None
    audit: tuple = ()

    def to_json(self) -> str:
        return json.dumps({
            "logd_lower": self.logd_lower,
            "m": list(self.m),
            "status": self.status,
            "audit": list(self.audit),
            "dual_certificate": (None if self.dual_certificate is None
                                 else [str(f) for f in self.dual_certificate]),
        }, sort_keys=True)


def _bin_extrema(spec: TestFunctionSpec, T: float, V: int, grid_per_bin: int = 64):
    """Per-bin (min, max) of h over [v delta, (v+1) delta), grid plus
    derivative-bound padding; the lower envelope is clipped at 0 (h >= 0)."""
    delta = T / V
    lip = h_prime_bound(spec)
    pad = lip * delta / grid_per_bin / 2.0
    lo = np.empty(V)
    hi = np.empty(V)
    for v in range(V):
        ts = np.linspace(v * delta, (v + 1) * delta, grid_per_bin + 1)
        vals = eval_h(spec, ts)
        lo[v] = max(0.0, float(np.min(vals)) - pad)
        hi[v] = float(np.max(vals)) + pad
    return lo, hi


def build_lp_system(
    char: CharacterDescriptor,
    q: int,
    specs: list[TestFunctionSpec],
    T: float,
    V: int,
    integer_bin_count: int = 0,
    bound_directions=None,
    envelope_c=(1.0, 5.0),
    prime_budget: int = 1 << 34,
    workers: int = 1,
) -> LPSystem:
    """Assemble the binned two-sided system for the given test functions.

    `bound_directions` gives per-k (use_lower, use_upper) flags; the tail
    envelopes use the modulus |q d| (conductor bounded by modulus)."""
    if V < 1 or T <= 0 or not specs:
        raise ValueError("need V >= 1, T > 0 and at least one test function")
    K = len(specs)
    if bound_directions is None:
        bound_directions = [(True, True)] * K
    modulus_log = math.log(abs(q * char.d))
    parity = "even" if q * char.d > 0 else "odd"
    h_lo = np.empty((K, V))
    h_hi = np.empty((K, V))
    rhs = []
    for k, spec in enumerate(specs):
        h_lo[k], h_hi[k] = _bin_extrema(spec, T, V)
        ps = prime_sum(char, q, spec, prime_budget=prime_budget, workers=workers)
        if ps.square_factor is not None:
            raise DataError(f"square factor {ps.square_factor} found; no LP needed")
        P = ps.sum + arch_terms(spec, parity)
        E = tail_bound(spec, T, modulus_log, envelope_c[0], envelope_c[1])
        rhs.append((1.0, P, E))
    return LPSystem(T, V, h_lo, h_hi, tuple(rhs), integer_bin_count, q, char.d,
                    tuple(tuple(dd) for dd in bound_directions), tuple(envelope_c))


# ---------------------------------------------------------------------------
# exact simplex (dense tableau, Bland's rule, two-phase)

def _simplex(A, b, c):
    """min c.x  s.t. A x <= b, x >= 0, all Fractions.

    Returns (status, x, obj, duals); status in {'optimal', 'infeasible'};
    duals u satisfy u >= 0, c + A^T u >= 0, -u.b = obj when optimal (a
    machine-checkable optimality certificate for the lower-bound direction).
    """
    m, n = len(A), len(c)
    # rows: [A | I_slack | rhs]; artificial handling by flipping negative rows
    ncols = n + m
    T = [[Fraction(0)] * (ncols + 1) for _ in range(m)]
    art = []
    for i in range(m):
        for j in range(n):
            T[i][j] = A[i][j]
        T[i][n + i] = Fraction(1)
        T[i][ncols] = b[i]
    basis = [n + i for i in range(m)]
    # phase 1 if any negative rhs
    neg = [i for i in range(m) if b[i] < 0]
    if neg:
        for i in neg:
            T[i] = [-x for x in T[i]]
        # artificial columns for flipped rows (inserted just before the rhs)
        for idx, i in enumerate(neg):
            for row in range(m):
                T[row].insert(ncols + idx, Fraction(1) if row == i else Fraction(0))
            basis[i] = ncols + idx
            art.append(ncols + idx)
        art_set = set(art)
        total = ncols + len(neg)
        obj1 = [Fraction(0)] * (total + 1)
        for i in neg:
            for j in range(total + 1):
                obj1[j] -= T[i][j]
        for a in art:
            obj1[a] += 1  # cost 1 on artificials; basic columns end up at 0
        status = _pivot_loop(T, basis, obj1, art_set=art_set)
        if status != "optimal" or -obj1[-1] != 0:
            return "infeasible", None, None, None
        # drive leftover (value-0) artificials out of the basis
        drop_rows = []
        for i in range(m):
            if basis[i] in art_set:
                piv = next((j for j in range(ncols) if T[i][j] != 0), None)
                if piv is not None:
                    _do_pivot(T, basis, obj1, i, piv)
                else:
                    drop_rows.append(i)  # redundant constraint
        for i in sorted(drop_rows, reverse=True):
            del T[i], basis[i]
        if drop_rows:
            art.append(-1)  # marker: row set changed, duals not recoverable
        keep = [j for j in range(total) if j not in art_set] + [total]
        colmap = {old: new for new, old in enumerate(keep[:-1])}
        for i in range(len(T)):
            T[i] = [T[i][j] for j in keep]
        basis = [colmap[bv] for bv in basis]
    # phase 2
    obj = [Fraction(x) for x in c] + [Fraction(0)] * m + [Fraction(0)]
    for i, bv in enumerate(basis):
        if obj[bv] != 0:
            coef = obj[bv]
            for j in range(len(obj)):
                obj[j] -= coef * T[i][j]
    status = _pivot_loop(T, basis, obj)
    if status == "unbounded":
        return "unbounded", None, None, None
    x = [Fraction(0)] * n
    for i, bv in enumerate(basis):
        if bv < n:
            x[bv] = T[i][-1]
    value = -obj[-1]
    # the slack reduced cost equals the certificate multiplier in both row
    # orientations (the flip is absorbed by the slack's -1 coefficient)
    duals = None if -1 in art else [obj[n + i] for i in range(m)]
    return "optimal", x, value, duals


def _pivot_loop(T, basis, obj, art_set=frozenset()):
    m = len(T)
    ncols = len(obj) - 1
    while True:
        enter = next((j for j in range(ncols)
                      if obj[j] < 0 and j not in art_set), None)
        if enter is None:
            return "optimal"
        ratios = [(T[i][-1] / T[i][enter], basis[i], i)
                  for i in range(m) if T[i][enter] > 0]
        if not ratios:
            return "unbounded"
        _, _, leave = min(ratios, key=lambda t: (t[0], t[1]))  # Bland tie-break
        _do_pivot(T, basis, obj, leave, enter)


def _do_pivot(T, basis, obj, row, col):
    piv = T[row][col]
    T[row] = [x / piv for x in T[row]]
    for i in range(len(T)):
        if i != row and T[i][col] != 0:
            coef = T[i][col]
            T[i] = [x - coef * y for x, y in zip(T[i], T[row])]
    if obj[col] != 0:
        coef = obj[col]
        for j in range(len(obj)):
            obj[j] -= coef * T[row][j]
    basis[row] = col


def _assemble(system: LPSystem, extra_bounds):
    """Rows (A, b) and costs c with x = (logd, m_0..m_{V-1}), all Fractions.

    logd >= 0 is sound: any conductor is >= 3.  `extra_bounds` are branch
    cuts (var_index, 'le'|'ge', integer)."""
    V = system.V
    n = 1 + V
    A, b = [], []
    for k, (g0, P, E) in enumerate(system.rhs_terms):
        use_lo, use_hi = system.directions[k]
        g0f, Pf, Ef = Fraction(g0), Fraction(P), Fraction(E)
        lq = Fraction(math.log(abs(system.q)))
        if use_lo:
            # 2 sum m h^- - g0 logd <= g0 log|q| - P   (h >= 0: no tail term)
            row = [Fraction(0)] * n
            row[0] = -g0f
            for v in range(V):
                row[1 + v] = 2 * Fraction(float(system.h_minus[k][v]))
            A.append(row)
            b.append(g0f * lq - Pf)
        if use_hi:
            # g0 logd - 2 sum m h^+ <= E - g0 log|q| + P
            row = [Fraction(0)] * n
            row[0] = g0f
            for v in range(V):
                row[1 + v] = -2 * Fraction(float(system.h_plus[k][v]))
            A.append(row)
            b.append(Ef - g0f * lq + Pf)
    for var, kind, val in extra_bounds:
        row = [Fraction(0)] * n
        if kind == "le":
            row[var] = Fraction(1)
            A.append(row)
            b.append(Fraction(val))
        else:
            row[var] = Fraction(-1)
            A.append(row)
            b.append(Fraction(-val))
    c = [Fraction(0)] * n
    c[0] = Fraction(1)
    return A, b, c


def solve_lp_relaxation_only(system: LPSystem):
    """Exact LP relaxation; returns (status, x fractions, value fraction, duals)."""
    A, b, c = _assemble(system, ())
    return _simplex(A, b, c)


def _verify_dual(system: LPSystem, duals, value) -> bool:
    A, b, c = _assemble(system, ())
    if any(u < 0 for u in duals):
        return False
    n = len(c)
    for j in range(n):
        if c[j] + sum(A[i][j] * duals[i] for i in range(len(A))) < 0:
            return False
    return -sum(u * bb for u, bb in zip(duals, b)) == value


def solve_lp(system: LPSystem, node_budget: int = 100_000) -> LPSolution:
    """Minimize logd over the system; first `integer_bin_count` bins integer.

    Best-bound branch and bound on the exact LP relaxation; most-fractional
    branching, lowest index on ties.  On budget exhaustion the returned
    logd_lower is the proven global lower bound so far (always a valid lower
    bound for the true optimum, hence for the true logd)."""
    nint = system.integer_bin_count
    audit = []
    status0, x0, val0, duals0 = _simplex(*_assemble(system, ()))
    if status0 == "infeasible":
        return LPSolution(math.nan, (), "infeasible", None, ("root infeasible",))
    if status0 == "unbounded":  # cannot happen with logd >= 0, but be safe
        return LPSolution(0.0, (), "optimal", None, ("unbounded guard",))

    def frac_vars(x):
        return [(v, x[1 + v]) for v in range(nint) if x[1 + v].denominator != 1]

    if not frac_vars(x0) or nint == 0:
        cert = (tuple(duals0) if nint == 0 and duals0 is not None
                and _verify_dual(system, duals0, val0) else None)
        return LPSolution(float(val0), tuple(float(f) for f in x0[1:]),
                          "optimal", cert, ("root integral",))

    counter = 0
    incumbent = None        # (value fraction, x)
    heap = [(val0, 0, x0, ())]
    nodes_done = 0
    while heap:
        bound, _, x, cuts = heapq.heappop(heap)
        if incumbent is not None and bound >= incumbent[0]:
            heap = []  # best-bound order: nothing better remains
            break
        fr = frac_vars(x)
        if not fr:
            if incumbent is None or bound < incumbent[0]:
                incumbent = (bound, x)
            continue
        nodes_done += 1
        if nodes_done > node_budget:
            open_bounds = [bound] + [h[0] for h in heap]
            if incumbent is not None:
                open_bounds.append(incumbent[0])
            lb = min(open_bounds)
            audit.append(f"budget exceeded after {node_budget} nodes")
            return LPSolution(float(lb),
                              tuple(float(f) for f in x[1:]),
                              "budget_exceeded", None, tuple(audit))
        # most-fractional variable, lowest index on ties
        v, xv = max(fr, key=lambda t: (min(t[1] - math.floor(t[1]),
                                           math.ceil(t[1]) - t[1]), -t[0]))
        lo, hi = math.floor(xv), math.ceil(xv)
        for kind, val in (("le", lo), ("ge", hi)):
            counter += 1
            child_cuts = cuts + (((1 + v), kind, val),)
            st, cx, cval, _ = _simplex(*_assemble(system, child_cuts))
            audit.append(f"node {counter}: m({v}) {kind} {val} -> {st}")
            if st != "optimal":
                continue
            if incumbent is not None and cval >= incumbent[0]:
                continue
            heapq.heappush(heap, (cval, counter, cx, child_cuts))
    if incumbent is None:
        return LPSolution(math.nan, (), "infeasible", None, tuple(audit))
    return LPSolution(float(incumbent[0]),
                      tuple(float(f) for f in incumbent[1][1:]),
                      "optimal", None, tuple(audit))


# ---------------------------------------------------------------------------
# LP text export (CPLEX-style)

def export_lp(system: LPSystem) -> str:
    """Human-readable LP text (CPLEX format): minimize logd subject to the
    two-sided bin constraints; leading bins declared General (integer)."""
    lines = ["\\ conductor lower-bound system", "Minimize", " obj: logd", "Subject To"]
    ci = 0
    for k, (g0, P, E) in enumerate(system.rhs_terms):
        use_lo, use_hi = system.directions[k]
        lq = math.log(abs(system.q))
        if use_lo:
            terms = " ".join(
                f"+ {float(2 * system.h_minus[k][v])!r} m{v}" for v in range(system.V))
            lines.append(f" lo{ci}: {terms} - {float(g0)!r} logd <= {float(g0 * lq - P)!r}")
            ci += 1
        if use_hi:
            terms = " ".join(
                f"- {float(2 * system.h_plus[k][v])!r} m{v}" for v in range(system.V))
            lines.append(f" hi{ci}: {float(g0)!r} logd {terms} <= {float(E - g0 * lq + P)!r}")
            ci += 1
    lines.append("Bounds")
    lines.append(" logd >= 0")
    for v in range(system.V):
        lines.append(f" m{v} >= 0")
    if system.integer_bin_count:
        lines.append("General")
        lines.append(" " + " ".join(f"m{v}" for v in range(system.integer_bin_count)))
    lines.append("End")
    return "\n".join(lines) + "\n"
