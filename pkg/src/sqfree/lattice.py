"""Correlating-character lattice: build, LLL-reduce, extract twist candidates.

A short vector in the lattice corresponds to a product of prime discriminants
q = prod q_j* whose character agrees with (d|.) on many small primes relative
to the log|q| penalty, i.e. it makes

    2 sum_{p <= P} (1 - chi_q(p) chi_d(p)) log(p)/sqrt(p) + log|q|

small.  Reduction is exact integer arithmetic throughout (no floating
Gram-Schmidt): correctness over speed at the dimensions involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import mpmath as mp

from .exceptions import SquareFactorFound
from .intcore import (
    CharacterDescriptor,
    is_fundamental_discriminant,
    kronecker,
    sieve_segment,
)

__all__ = [
    "LatticeBasis",
    "ExtractedCharacter",
    "build_twist_lattice",
    "lll_reduce",
    "lll_is_reduced",
    "extract_characters",
    "correlation_objective",
    "basis_to_text",
    "basis_from_text",
]


@dataclass(frozen=True)
class LatticeBasis:
    rows: tuple[tuple[int, ...], ...]   # (n+m+1) x (n+m+1), arbitrary precision
    primes: tuple[int, ...]             # p_1..p_n
    prime_discs: tuple[int, ...]        # q_1*..q_m*
    m_scale: int
    d: int

    @property
    def n(self) -> int:
        return len(self.primes)

    @property
    def m(self) -> int:
        return len(self.prime_discs)


def _floor_scaled_sqrtlog(p: int, bits: int) -> int:
    """floor(2^bits * sqrt(log p)) exactly (value is irrational for p >= 2)."""
    with mp.workprec(bits + 80):
        return int(mp.floor(mp.mpf(2) ** bits * mp.sqrt(mp.log(p))))


def _weight(p: int, m_scale: int) -> int:
    """w(p) = floor(2^{M+1} sqrt(log p) / p^{1/4})."""
    with mp.workprec(m_scale + 80):
        return int(mp.floor(mp.mpf(2) ** (m_scale + 1) * mp.sqrt(mp.log(p))
                            / mp.root(p, 4)))


def build_twist_lattice(
    char: CharacterDescriptor,
    P: int,
    Q: int,
    m_scale: int,
) -> LatticeBasis:
    """Row basis over primes p <= P and prime discriminants from odd primes
    q <= Q plus {-4, 8, -8}; q* = (-1)^((q-1)/2) q for odd prime q.

    Row layout: the d-row [i(d,p_k), 0.., 2^M]; one row per q_j* with the
    diagonal floor(2^M sqrt(log|q_j*|)) entry; then n rows 2 w(p_k) e_k, so
    the first block is effectively mod 2 w(p_k).  Entries are exact.
    """
    if P < 3 or Q < 3:
        raise ValueError("need P, Q >= 3")
    if not 1 <= m_scale <= 256:
        raise ValueError("scale exponent out of range [1, 256]")
    d = char.d
    primes = [int(p) for p in sieve_segment(2, P + 1).primes.tolist()]
    odd_q = [int(p) for p in sieve_segment(3, Q + 1).primes.tolist()]
    prime_discs = [(-q if q % 4 == 3 else q) for q in odd_q] + [-4, 8, -8]
    n, m = len(primes), len(prime_discs)
    w = {p: _weight(p, m_scale) for p in primes}
    two_m = 1 << m_scale

    def i_entry(top: int, p: int) -> int:
        chi = kronecker(top, p)
        if chi == 0 and top == d and d % (p * p) == 0 \
                and char.known_square_part % p != 0:
            raise SquareFactorFound(p)
        # chi = 0 (p | top) gets the half weight: the prime is neither aligned
        # nor anti-aligned, and the entry must stay integral
        return (1 + chi) * w[p] // 2

    rows: list[list[int]] = []
    rows.append([i_entry(d, p) for p in primes] + [0] * m + [two_m])
    for j, qs in enumerate(prime_discs):
        row = [i_entry(qs, p) for p in primes] + [0] * m + [0]
        row[n + j] = _floor_scaled_sqrtlog(abs(qs), m_scale)
        rows.append(row)
    for k, p in enumerate(primes):
        row = [0] * (n + m + 1)
        row[k] = 2 * w[p]
        rows.append(row)
    return LatticeBasis(tuple(tuple(r) for r in rows), tuple(primes),
                        tuple(prime_discs), m_scale, d)


# ---------------------------------------------------------------------------
# exact integral LLL (Cohen-style lambda/d bookkeeping; no floats)

def lll_reduce(rows, delta: Fraction = Fraction(3, 4)) -> list[list[int]]:
    """LLL-reduce linearly independent integer rows (exact arithmetic).

    Output generates the same lattice, is size-reduced (|mu_ij| <= 1/2) and
    satisfies the Lovasz condition with parameter `delta` (default 3/4).
    """
    delta = Fraction(delta)
    if not Fraction(1, 4) < delta < 1:
        raise ValueError("delta must lie in (1/4, 1)")
    if hasattr(rows, "rows"):
        rows = rows.rows
    b = [list(map(int, r)) for r in rows]
    n = len(b)
    if n == 0:
        return []
    dim = len(b[0])
    if any(len(r) != dim for r in b):
        raise ValueError("ragged rows")

    def dot(u, v):
        return sum(x * y for x, y in zip(u, v))

    lam = [[0] * n for _ in range(n)]
    d = [0] * (n + 1)   # d[0] = 1, d[i] = Gram determinant of b_1..b_i
    d[0] = 1
    d[1] = dot(b[0], b[0])
    if d[1] == 0:
        raise ValueError("dependent (zero) row")

    def redi(k, l):
        if 2 * abs(lam[k][l]) > d[l + 1]:
            q = (2 * lam[k][l] + d[l + 1]) // (2 * d[l + 1])  # nearest integer
            b[k] = [x - q * y for x, y in zip(b[k], b[l])]
            lam[k][l] -= q * d[l + 1]
            for i in range(l):
                lam[k][i] -= q * lam[l][i]

    def swapi(k):
        b[k], b[k - 1] = b[k - 1], b[k]
        for j in range(k - 1):
            lam[k][j], lam[k - 1][j] = lam[k - 1][j], lam[k][j]
        lam_ = lam[k][k - 1]
        bb = (d[k - 1] * d[k + 1] + lam_ * lam_) // d[k]
        for i in range(k + 1, kmax + 1):
            t = lam[i][k]
            lam[i][k] = (d[k + 1] * lam[i][k - 1] - lam_ * t) // d[k]
            lam[i][k - 1] = (bb * t + lam_ * lam[i][k]) // d[k + 1]
        d[k] = bb

    k = 1
    kmax = 0
    while k < n:
        if k > kmax:
            kmax = k
            for j in range(k + 1):
                u = dot(b[k], b[j])
                for i in range(j):
                    u = (d[i + 1] * u - lam[k][i] * lam[j][i]) // d[i]
                if j < k:
                    lam[k][j] = u
                else:
                    d[k + 1] = u
                    if d[k + 1] == 0:
                        raise ValueError("dependent rows")
        redi(k, k - 1)
        # Lovasz condition, exactly: d[k+1] d[k-1] + lam^2 >= delta d[k]^2
        lhs = delta.denominator * (d[k + 1] * d[k - 1] + lam[k][k - 1] ** 2)
        rhs = delta.numerator * d[k] * d[k]
        if lhs < rhs:
            swapi(k)
            k = max(1, k - 1)
        else:
            for l in range(k - 2, -1, -1):
                redi(k, l)
            k += 1
    return b


def lll_is_reduced(rows, delta: Fraction = Fraction(3, 4)) -> bool:
    """Independent validator: exact rational Gram-Schmidt, then check
    size-reduction and the Lovasz condition."""
    delta = Fraction(delta)
    b = [[Fraction(int(x)) for x in r] for r in rows]
    n = len(b)
    star: list[list[Fraction]] = []
    mu = [[Fraction(0)] * n for _ in range(n)]
    norms: list[Fraction] = []
    for i in range(n):
        v = list(b[i])
        for j in range(i):
            mu[i][j] = _fdot(b[i], star[j]) / norms[j]
            v = [x - mu[i][j] * y for x, y in zip(v, star[j])]
        star.append(v)
        norms.append(_fdot(v, v))
        if norms[i] == 0:
            return False
    for i in range(n):
        for j in range(i):
            if abs(mu[i][j]) > Fraction(1, 2):
                return False
    for k in range(1, n):
        if norms[k] < (delta - mu[k][k - 1] ** 2) * norms[k - 1]:
            return False
    return True


def _fdot(u, v):
    return sum(x * y for x, y in zip(u, v))


# ---------------------------------------------------------------------------
# extraction

@dataclass(frozen=True)
class ExtractedCharacter:
    q: int
    selected: tuple[int, ...]   # indices into basis.prime_discs
    norm_sq: int
    objective: float


def correlation_objective(d: int, q: int, P: int) -> float:
    """2 sum_{p <= P} (1 - chi_q(p) chi_d(p)) log(p)/sqrt(p) + log|q|."""
    total = 0.0
    for p in sieve_segment(2, P + 1).primes.tolist():
        cq, cd = kronecker(q, int(p)), kronecker(d, int(p))
        total += 2.0 * (1 - cq * cd) * math.log(p) / math.sqrt(p)
    return total + math.log(abs(q)) if q != 1 else total


def extract_characters(reduced_rows, basis: LatticeBasis, max_results: int = 10
                       ) -> list[ExtractedCharacter]:
    """Read twist candidates off reduced vectors (and +-1 pair combinations)
    whose last coordinate is +-2^M.

    The first n coordinates are reduced mod 2 w(p_k); q is the product of the
    prime discriminants with odd multiplier, restricted to fundamental
    products.  Results are sorted by the correlation objective.
    """
    n, m = basis.n, basis.m
    two_m = 1 << basis.m_scale
    w = [basis.rows[m + 1 + k][k] // 2 for k in range(n)]  # bottom 2w(p_k) rows
    diag = [basis.rows[1 + j][n + j] for j in range(m)]
    vecs = [list(map(int, r)) for r in reduced_rows]
    pool = list(vecs)
    for i in range(len(vecs)):
        for j in range(i + 1, len(vecs)):
            pool.append([a + b for a, b in zip(vecs[i], vecs[j])])
            pool.append([a - b for a, b in zip(vecs[i], vecs[j])])

    seen = {}
    for v in pool:
        if abs(v[-1]) != two_m:
            continue
        if v[-1] < 0:
            v = [-x for x in v]
        sel = []
        ok = True
        for j in range(m):
            u, r = divmod(v[n + j], diag[j])
            if r != 0:
                ok = False
                break
            if u & 1:
                sel.append(j)
        if not ok:
            continue
        q = 1
        for j in sel:
            q *= basis.prime_discs[j]
        if q != 1 and not is_fundamental_discriminant(q):
            continue  # e.g. two even prime discriminants multiplied together
        norm = two_m * two_m
        for k in range(n):
            r = v[k] % (2 * w[k])
            r = min(r, 2 * w[k] - r)  # nearest multiple of 2w(p_k)
            norm += r * r
        for j in sel:
            norm += diag[j] ** 2
        if q not in seen or norm < seen[q][0]:
            seen[q] = (norm, tuple(sel))

    out = [ExtractedCharacter(q, sel, norm,
                              correlation_objective(basis.d, q, basis.primes[-1]))
           for q, (norm, sel) in seen.items()]
    out.sort(key=lambda e: (e.objective, abs(e.q)))
    return out[:max_results]


# ---------------------------------------------------------------------------
# plain text import/export

def basis_to_text(rows) -> str:
    if hasattr(rows, "rows"):
        rows = rows.rows
    return "\n".join(" ".join(str(int(x)) for x in r) for r in rows) + "\n"


def basis_from_text(text: str) -> list[list[int]]:
    rows = [[int(tok) for tok in line.split()] for line in text.strip().splitlines()]
    if rows and any(len(r) != len(rows[0]) for r in rows):
        raise ValueError("ragged rows")
    return rows
