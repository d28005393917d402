"""Integer arithmetic services: Kronecker symbols, sieves, power tests,
fundamental-discriminant detection and light factoring helpers.

Everything operates on Python ints (arbitrary precision) and is pure and
reentrant.  The quadratic character attached to a discriminant d is always
evaluated through `kronecker`, which never factors d; a ~200-digit unfactored
d costs O(log d * log n) word operations per value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import BudgetError

try:  # GMP-backed Kronecker symbol; hot loops prefer it, semantics identical
    from gmpy2 import kronecker as _gmp_kronecker
except ImportError:  # pragma: no cover
    _gmp_kronecker = None

__all__ = [
    "CharacterDescriptor",
    "PrimeSegment",
    "kronecker",
    "kronecker_fast",
    "iroot",
    "is_perfect_power",
    "sieve_segment",
    "iter_primes",
    "trial_divide",
    "pollard_pm1",
    "is_probable_prime",
    "is_squarefree",
    "is_fundamental_discriminant",
    "enumerate_fundamental",
]


def kronecker(d: int, n: int) -> int:
    """Kronecker symbol (d|n), by the standard reciprocity loop.

    Total on all integer pairs: (d|0) = 1 iff d = +-1; (d|2) follows the
    +-1 mod 8 rule; completely multiplicative in n.  d is never factored.
    """
    if n == 0:
        return 1 if d in (1, -1) else 0
    k = 1
    if n < 0:
        n = -n
        if d < 0:
            k = -k
    if d % 2 == 0 and n % 2 == 0:
        return 0
    # strip the 2-part of n and apply (d|2) per factor
    z = (n & -n).bit_length() - 1
    n >>= z
    if z & 1 and d % 8 in (3, 5):
        k = -k
    # n is odd and positive; run the Jacobi reciprocity loop on a = d mod n
    a = d % n
    while a:
        z = (a & -a).bit_length() - 1
        a >>= z
        if z & 1 and n % 8 in (3, 5):
            k = -k
        if a % 4 == 3 and n % 4 == 3:
            k = -k
        a, n = n % a, a
    return k if n == 1 else 0


if _gmp_kronecker is not None:
    def kronecker_fast(d: int, n: int) -> int:
        """GMP-backed (d|n); same contract as `kronecker`."""
        return int(_gmp_kronecker(d, n))
else:  # pragma: no cover
    kronecker_fast = kronecker


def iroot(n: int, k: int) -> int:
    """floor(n ** (1/k)) for n >= 0, k >= 1, by integer Newton iteration."""
    if n < 0 or k < 1:
        raise ValueError("need n >= 0 and k >= 1")
    if n < 2 or k == 1:
        return n
    # start above the root so the iteration decreases monotonically
    x = 1 << -(-n.bit_length() // k)
    while True:
        y = ((k - 1) * x + n // x ** (k - 1)) // k
        if y >= x:
            break
        x = y
    while x ** k > n:
        x -= 1
    return x


def is_perfect_power(n: int, k: int) -> int | None:
    """Return r with r**k == n if n is a perfect k-th power, else None.

    Exact for any size; the Newton root is re-verified by powering.
    Only k in {2, 3} is needed by the certification logic, but any k works.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    r = iroot(n, k)
    return r if r ** k == n else None


# ---------------------------------------------------------------------------
# sieving

@dataclass(frozen=True)
class PrimeSegment:
    """Complete, sorted list of the primes in [lo, hi)."""

    lo: int
    hi: int
    primes: np.ndarray  # int64, ascending


_SIEVE_MAX_SPAN = 1 << 27  # segment memory guard (~128 MB of flags)


def _small_primes(limit: int) -> np.ndarray:
    """Primes < limit by a plain sieve (limit expected <= ~2**32)."""
    if limit < 3:
        return np.array([2][: max(0, limit - 2)], dtype=np.int64)
    flags = np.ones(limit, dtype=bool)
    flags[:2] = False
    for p in range(2, math.isqrt(limit - 1) + 1):
        if flags[p]:
            flags[p * p:: p] = False
    return np.flatnonzero(flags).astype(np.int64)


def sieve_segment(lo: int, hi: int, max_span: int = _SIEVE_MAX_SPAN) -> PrimeSegment:
    """Sieve the primes in [lo, hi); hi <= 2**63, span capped by `max_span`."""
    if not 0 <= lo < hi <= 1 << 63:
        raise ValueError("need 0 <= lo < hi <= 2**63")
    if hi - lo > max_span:
        raise BudgetError(f"segment span {hi - lo} exceeds budget {max_span}")
    base = _small_primes(math.isqrt(hi - 1) + 1)
    flags = np.ones(hi - lo, dtype=bool)
    for i in range(max(0, 2 - lo)):
        flags[i] = False  # 0 and 1
    for p in base.tolist():
        start = max(p * p, ((lo + p - 1) // p) * p)
        if start < hi:
            flags[start - lo:: p] = False
    primes = (np.flatnonzero(flags) + lo).astype(np.int64)
    return PrimeSegment(lo, hi, primes)


def iter_primes(lo: int, hi: int, span: int = 1 << 22):
    """Yield PrimeSegments covering [lo, hi) in ascending order."""
    a = lo
    while a < hi:
        b = min(a + span, hi)
        yield sieve_segment(a, b)
        a = b


# ---------------------------------------------------------------------------
# factoring helpers

def trial_divide(n: int, bound: int) -> tuple[list[tuple[int, int]], int]:
    """Extract all prime factors <= bound of n >= 1.

    Returns (factors, cofactor) with factors as (prime, exponent) pairs in
    ascending order; the cofactor has no prime factor <= bound.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    factors: list[tuple[int, int]] = []
    rem = n
    for seg in iter_primes(2, bound + 1):
        for p in seg.primes.tolist():
            if p * p > rem:
                break
            if rem % p == 0:
                e = 0
                while rem % p == 0:
                    rem //= p
                    e += 1
                factors.append((p, e))
        if seg.primes.size and seg.primes[-1] ** 2 > rem:
            break
    if 1 < rem <= bound:
        # cofactor itself is prime (no divisor up to its square root remains)
        factors.append((rem, 1))
        rem = 1
    return factors, rem


def is_probable_prime(n: int) -> bool:
    """Miller-Rabin; deterministic for n < 3.3e24 via the standard base set."""
    if n < 2:
        return False
    for p in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if n % p == 0:
            return n == p
    d = n - 1
    r = (d & -d).bit_length() - 1
    d >>= r
    for a in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def pollard_pm1(n: int, b1: int, seed: int = 0) -> int | None:
    """Stage-1 p-1 factoring attempt with smoothness bound b1.

    Tries base 2 then base 3 (then a seed-derived base if both collapse to
    the trivial gcd).  Returns a non-trivial factor, or None when the stage
    is inconclusive.  None is NOT a proof that no small factor exists.
    """
    if n <= 1 or n % 2 == 0:
        raise ValueError("need odd n > 1")
    prime_powers: list[int] = []
    for seg in iter_primes(2, b1 + 1):
        for p in seg.primes.tolist():
            pk = p
            while pk * p <= b1:
                pk *= p
            prime_powers.append(pk)
    bases = [2, 3, 5 + (seed % 97)]
    for base in bases:
        if math.gcd(base, n) not in (1, n):
            return math.gcd(base, n)
        a = base % n
        trivial = False
        # gcd after every prime power so simultaneous splits are separated
        for pk in prime_powers:
            a = pow(a, pk, n)
            g = math.gcd(a - 1, n)
            if g == n:
                trivial = True
                break
            if g > 1:
                return g
        if not trivial:
            return None  # completed stage 1 without a split
    return None


def is_squarefree(n: int, budget: int = 10_000_000) -> bool:
    """Exact squarefree test for n >= 1 by trial division to the cube root.

    After removing all primes <= cbrt(n), the cofactor is 1, p, p^2 or p*q,
    so one perfect-square check settles it.  Raises BudgetError when the
    cube root exceeds `budget`.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    if n == 1:
        return True
    b = iroot(n, 3) + 1
    if b > budget:
        raise BudgetError(f"cube root {b} exceeds factoring budget {budget}")
    factors, cofactor = trial_divide(n, b)
    if any(e >= 2 for _, e in factors):
        return False
    return cofactor == 1 or is_perfect_power(cofactor, 2) is None


def is_fundamental_discriminant(d: int, budget: int = 10_000_000) -> bool:
    """True iff d = 1 mod 4 squarefree, or d = 4m with m = 2,3 mod 4 squarefree.

    d = 1 counts as the unit discriminant.  Needs |d| factorable by trial
    division within `budget` (cube-root bound).
    """
    if d == 0:
        return False
    if d % 4 == 1:
        return is_squarefree(abs(d), budget)
    if d % 4 == 0:
        m = d // 4
        return m % 4 in (2, 3) and is_squarefree(abs(m), budget)
    return False


# ---------------------------------------------------------------------------
# character descriptors and fundamental-discriminant enumeration

@dataclass(frozen=True)
class CharacterDescriptor:
    """The real character n -> (d|n) for d = 0 or 1 (mod 4), d != 0.

    `known_square_part` records a square divisor l**2 | d already discovered
    (d = D * l**2 with conductor |D| generally unknown).
    """

    d: int
    known_square_part: int = 1

    def __post_init__(self):
        if self.d == 0 or self.d % 4 not in (0, 1):
            raise ValueError("need d = 0 or 1 (mod 4) and d != 0")
        if self.known_square_part < 1:
            raise ValueError("square part must be >= 1")

    @property
    def parity(self) -> str:
        """'even' when chi(-1) = +1 (d > 0), 'odd' when chi(-1) = -1."""
        return "odd" if self.d < 0 else "even"

    def chi(self, n: int) -> int:
        return kronecker(self.d, n)


def _squarefree_flags(lo: int, hi: int) -> np.ndarray:
    """Boolean flags for squarefree-ness of [lo, hi), by marking p^2 multiples."""
    flags = np.ones(hi - lo, dtype=bool)
    if lo == 0:
        flags[0] = False
    for p in _small_primes(math.isqrt(hi - 1) + 1).tolist():
        p2 = p * p
        start = ((lo + p2 - 1) // p2) * p2
        if start < hi:
            flags[start - lo:: p2] = False
    return flags


def enumerate_fundamental(
    q_max: int,
    *,
    coprime_to: int = 1,
    lineup: tuple[tuple[int, int], ...] = (),
    block: int = 1 << 16,
):
    """Yield the fundamental discriminants q with 3 <= |q| <= q_max, ascending
    by |q| (positive sign first), filtered by gcd(q, coprime_to) = 1 and by
    the constraints kronecker(q, p) == want for each (p, want) in `lineup`.
    """
    if q_max >= 1 << 63:
        raise ValueError("q_max must fit in 63 bits")

    def emit(q: int):
        if coprime_to != 1 and math.gcd(abs(q), abs(coprime_to)) != 1:
            return None
        for p, want in lineup:
            if kronecker(q, p) != want:
                return None
        return q

    lo = 3
    while lo <= q_max:
        hi = min(lo + block, q_max + 1)
        sf = _squarefree_flags(lo, hi)
        sf4 = _squarefree_flags(max(1, lo // 4), hi // 4 + 1) if hi >= 4 else None
        off4 = max(1, lo // 4)
        for a in range(lo, hi):
            r = a & 3
            if r == 1:  # +a = 1 mod 4
                if sf[a - lo] and (q := emit(a)) is not None:
                    yield q
            elif r == 3:  # -a = 1 mod 4
                if sf[a - lo] and (q := emit(-a)) is not None:
                    yield q
            elif r == 0:
                m = a >> 2
                if sf4 is not None and sf4[m - off4]:
                    if m & 3 in (2, 3) and (q := emit(a)) is not None:
                        yield q
                    if (-m) & 3 in (2, 3) and (q := emit(-a)) is not None:
                        yield q
        lo = hi
