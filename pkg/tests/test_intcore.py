import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sqfree.exceptions import BudgetError
from sqfree.intcore import (
    CharacterDescriptor,
    enumerate_fundamental,
    is_fundamental_discriminant,
    is_perfect_power,
    is_probable_prime,
    is_squarefree,
    iter_primes,
    iroot,
    kronecker,
    kronecker_fast,
    pollard_pm1,
    sieve_segment,
    trial_divide,
)


# --- independent oracle: factor n, use Euler's criterion + the 2-rule --------

def _factor_small(n):
    out = []
    d = 2
    while d * d <= n:
        e = 0
        while n % d == 0:
            n //= d
            e += 1
        if e:
            out.append((d, e))
        d += 1
    if n > 1:
        out.append((n, 1))
    return out


def kronecker_oracle(d, n):
    """(d|n) from the definition: factor n, Legendre via Euler's criterion."""
    if n == 0:
        return 1 if d in (1, -1) else 0
    val = 1
    if n < 0:
        val = -1 if d < 0 else 1
        n = -n
    for p, e in _factor_small(n):
        if p == 2:
            if d % 2 == 0:
                s = 0
            else:
                s = 1 if d % 8 in (1, 7) else -1
        else:
            r = pow(d % p, (p - 1) // 2, p)
            s = 0 if d % p == 0 else (1 if r == 1 else -1)
        val *= s ** e if s != 0 else 0
        if val == 0:
            return 0
    return val


def test_kronecker_examples():
    assert kronecker(5, 3) == -1  # Euler: 5^1 = 2 = -1 mod 3
    assert kronecker(5, 2) == -1  # 5 mod 8 rule
    for d in (-11, -4, 1, 5, 8, 977):
        assert kronecker(d, 1) == 1
    assert kronecker(1, 0) == 1 and kronecker(-1, 0) == 1 and kronecker(5, 0) == 0


def test_kronecker_matches_oracle_exhaustive():
    for d in range(-120, 121):
        for n in range(0, 121):
            assert kronecker(d, n) == kronecker_oracle(d, n), (d, n)


def test_kronecker_fast_agrees():
    rng = np.random.default_rng(7)
    for _ in range(2000):
        d = int(rng.integers(-10**12, 10**12))
        n = int(rng.integers(0, 10**12))
        assert kronecker(d, n) == kronecker_fast(d, n)


@settings(max_examples=300)
@given(
    d=st.integers(-300, 300).filter(lambda d: d != 0 and d % 4 in (0, 1)),
    m=st.integers(1, 300),
    n=st.integers(1, 300),
)
def test_kronecker_completely_multiplicative(d, m, n):
    assert kronecker(d, m * n) == kronecker(d, m) * kronecker(d, n)


def test_kronecker_conductor_periodicity():
    for d in (5, 13, 17, 21, 33, 57, 73, 97):
        assert is_squarefree(d)
        for n in range(0, 3 * d):
            assert kronecker(d, n) == kronecker(d, n + d)


# --- roots and powers ---------------------------------------------------------

def test_iroot_and_perfect_powers():
    assert is_perfect_power(1548889, 2) is None
    assert is_perfect_power(27, 3) == 3
    assert is_perfect_power(1, 2) == 1
    big = (10**40 + 7) ** 3
    assert is_perfect_power(big, 3) == 10**40 + 7
    assert is_perfect_power(big + 2, 3) is None


@settings(max_examples=200)
@given(n=st.integers(0, 10**30), k=st.integers(1, 5))
def test_iroot_is_floor_root(n, k):
    r = iroot(n, k)
    assert r**k <= n < (r + 1) ** k


# --- sieving -------------------------------------------------------------------

def test_sieve_examples():
    assert sieve_segment(0, 10).primes.tolist() == [2, 3, 5, 7]
    assert sieve_segment(90, 100).primes.tolist() == [97]
    got = sieve_segment(10**9, 10**9 + 100).primes.tolist()
    want = [n for n in range(10**9, 10**9 + 100) if is_probable_prime(n)]
    assert want == [
        1000000007, 1000000009, 1000000021, 1000000033,
        1000000087, 1000000093, 1000000097,
    ]
    assert got == want


def test_sieve_stitching_matches_one_shot():
    whole = sieve_segment(0, 10**6).primes
    parts = np.concatenate([s.primes for s in iter_primes(0, 10**6, span=37_123)])
    assert np.array_equal(whole, parts)


def test_sieve_budget():
    with pytest.raises(BudgetError):
        sieve_segment(0, 1 << 40)


# --- factoring helpers ----------------------------------------------------------

def test_trial_divide():
    assert trial_divide(12, 10) == ([(2, 2), (3, 1)], 1)
    assert trial_divide(2**10, 2) == ([(2, 10)], 1)
    # 1548889 = 23 * 67343 with 67343 prime: the factor 23 must be extracted
    assert trial_divide(1548889, 100) == ([(23, 1)], 67343)
    assert trial_divide(1, 100) == ([], 1)


def test_pollard_pm1():
    f = pollard_pm1(299, 12)
    assert f in (13, 23)
    n = 1548889 * 10007
    f = pollard_pm1(n, 10006)
    assert f is not None and 1 < f < n and n % f == 0
    assert pollard_pm1(10**9 + 7, 1000) is None  # prime input: inconclusive
    # both cofactors need a large stage-1 prime: inconclusive, not an error
    assert pollard_pm1(10007 * 10009, 3) is None


# --- fundamental discriminants ---------------------------------------------------

def is_fundamental_oracle(d):
    if d == 0:
        return False
    if d % 4 == 1:
        return is_squarefree(abs(d))
    if d % 4 == 0:
        m = d // 4
        return m % 4 in (2, 3) and is_squarefree(abs(m))
    return False


def test_fundamental_examples():
    assert is_fundamental_discriminant(5)
    assert not is_fundamental_discriminant(9)
    assert is_fundamental_discriminant(1)
    assert is_fundamental_discriminant(1548889)


def test_fundamental_agrees_with_squarefree_for_odd():
    for d in range(-2000, 2001):
        if d % 2 == 0 or d == 0:
            continue
        want = d % 4 == 1 and is_squarefree(abs(d))
        assert is_fundamental_discriminant(d) == want


def test_enumerate_fundamental_membership():
    got = set(enumerate_fundamental(20))
    want = {d for a in range(3, 21) for d in (a, -a) if is_fundamental_oracle(d)}
    assert got == want
    assert -4 in got and 4 not in got


def test_enumerate_fundamental_ordering_and_filters():
    qs = list(enumerate_fundamental(300))
    assert sorted(map(abs, qs)) == [abs(q) for q in qs]
    for q in enumerate_fundamental(200, coprime_to=15):
        assert math.gcd(abs(q), 15) == 1
    for q in enumerate_fundamental(200, lineup=((3, 1),)):
        assert kronecker(q, 3) == 1
    # lineup filter is the only difference relative to the plain stream
    plain = [q for q in enumerate_fundamental(200) if kronecker(q, 3) == 1]
    assert plain == list(enumerate_fundamental(200, lineup=((3, 1),)))


def test_character_descriptor():
    chi = CharacterDescriptor(-7)
    assert chi.parity == "odd"
    assert CharacterDescriptor(1548889).parity == "even"
    assert chi.chi(3) == kronecker(-7, 3)
    with pytest.raises(ValueError):
        CharacterDescriptor(6)
    with pytest.raises(ValueError):
        CharacterDescriptor(0)
