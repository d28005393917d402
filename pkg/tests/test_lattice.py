import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from sqfree.intcore import CharacterDescriptor, is_fundamental_discriminant
from sqfree.lattice import (
    basis_from_text,
    basis_to_text,
    build_twist_lattice,
    correlation_objective,
    extract_characters,
    lll_is_reduced,
    lll_reduce,
)

RNG = np.random.default_rng(99)


def gram_det(rows):
    """Exact Gram determinant by integer Bareiss elimination."""
    n = len(rows)
    M = [[sum(a * b for a, b in zip(rows[i], rows[j])) for j in range(n)]
         for i in range(n)]
    denom = 1
    sign = 1
    for i in range(n - 1):
        if M[i][i] == 0:
            for r in range(i + 1, n):
                if M[r][i] != 0:
                    M[i], M[r] = M[r], M[i]
                    sign = -sign
                    break
        for r in range(i + 1, n):
            for c in range(i + 1, n):
                M[r][c] = (M[r][c] * M[i][i] - M[r][i] * M[i][c]) // denom
        denom = M[i][i]
    return sign * M[n - 1][n - 1]


def shortest_by_enumeration(rows):
    """Exact shortest nonzero vector norm^2, by bounded coefficient search on
    an LLL-reduced basis (radius from the shortest basis vector)."""
    b = lll_reduce(rows)
    B = np.array(b, dtype=float)
    norms = [sum(x * x for x in r) for r in b]
    radius2 = min(norms)
    # Gram-Schmidt norms bound the coefficient ranges
    Q, R = np.linalg.qr(B.T)
    n = len(b)
    best = radius2

    def rec(level, partial, rem2):
        nonlocal best
        if level < 0:
            n2 = int(round(float(partial @ partial)))
            if 0 < n2 < best:
                best = n2
            return
        rstar = abs(R[level, level])
        span = int(math.floor(math.sqrt(max(rem2, 0.0)) / max(rstar, 1e-12))) + 2
        for c in range(-span, span + 1):
            rec(level - 1, partial + c * B[level], rem2)

    if n <= 4:
        rec(n - 1, np.zeros(B.shape[1]), float(best))
        return best
    # larger dimensions: vectorized box search around the reduced basis
    span = 2
    grid = np.array(list(itertools.product(range(-span, span + 1), repeat=n)),
                    dtype=float)
    vs = grid @ B
    n2 = np.einsum("ij,ij->i", vs, vs)
    n2 = n2[n2 > 0.5]
    return min(best, int(round(float(n2.min()))))


def test_lll_identity_and_worked_example():
    ident = [[1, 0, 0], [0, 1, 0], [0, 0, 1]]
    assert lll_reduce(ident) == ident
    out = lll_reduce([[1, 1, 1], [-1, 0, 2], [3, 5, 6]])
    assert lll_is_reduced(out)
    assert min(sum(x * x for x in r) for r in out) == 1
    assert shortest_by_enumeration([[1, 1, 1], [-1, 0, 2], [3, 5, 6]]) == 1


def test_lll_rejects_dependent_rows():
    with pytest.raises(ValueError):
        lll_reduce([[1, 2], [2, 4]])


def test_lll_validator_and_det_preservation():
    for _ in range(10):
        n = int(RNG.integers(2, 7))
        rows = RNG.integers(-30, 31, size=(n, n)).tolist()
        try:
            red = lll_reduce(rows)
        except ValueError:
            continue
        assert lll_is_reduced(red)
        assert gram_det(rows) == gram_det(red)
        # membership: reduced rows lie in the original lattice (integer coords)
        import numpy.linalg as la
        A = np.array(rows, dtype=float)
        for r in red:
            coef = la.solve(A.T, np.array(r, dtype=float))
            assert np.allclose(coef, np.round(coef), atol=1e-6)


def test_lll_short_vector_quality_8dim():
    for _ in range(10):
        rows = RNG.integers(-9, 10, size=(8, 8)).tolist()
        try:
            red = lll_reduce(rows)
        except ValueError:
            continue
        out_short = min(sum(x * x for x in r) for r in red)
        true_short = shortest_by_enumeration(rows)
        assert out_short <= (2 ** ((8 - 1) / 2)) ** 2 * true_short


def test_lll_custom_delta():
    rows = [[7, 2, 1], [3, -5, 2], [1, 1, 9]]
    red = lll_reduce(rows, delta=Fraction(99, 100))
    assert lll_is_reduced(red, delta=Fraction(99, 100))


def test_build_twist_lattice_worked_dimensions():
    chi = CharacterDescriptor(1548889)
    basis = build_twist_lattice(chi, 5, 5, 8)
    assert basis.n == 3 and basis.m == 5
    assert len(basis.rows) == 9 and len(basis.rows[0]) == 9
    assert set(basis.prime_discs) == {-3, 5, -4, 8, -8}
    w2 = basis.rows[basis.m + 1][0] // 2
    assert w2 == 358  # floor(2^9 sqrt(log 2) / 2^(1/4))
    assert basis.rows[0][-1] == 2 ** 8
    for qs in basis.prime_discs:
        assert qs % 4 in (0, 1)
    # i entries are 0, w or the half-weight w//2 (p | q* overlaps)
    for j, qs in enumerate(basis.prime_discs):
        for k, p in enumerate(basis.primes):
            w = basis.rows[basis.m + 1 + k][k] // 2
            assert basis.rows[1 + j][k] in (0, w, w // 2)


def test_charvector_norm_identity():
    chi = CharacterDescriptor(1548889)
    basis = build_twist_lattice(chi, 7, 7, 10)
    n, m = basis.n, basis.m
    w = [basis.rows[m + 1 + k][k] // 2 for k in range(n)]
    diag = [basis.rows[1 + j][n + j] for j in range(m)]
    y = [1, 0, 1, 0]
    J = [0, 2]
    vec = ([y[k] * w[k] for k in range(n)]
           + [diag[j] if j in J else 0 for j in range(m)] + [2 ** 10])
    norm = sum(x * x for x in vec)
    expect = (sum(y[k] * w[k] ** 2 for k in range(n))
              + sum(diag[j] ** 2 for j in J) + 2 ** 20)
    assert norm == expect


def test_extraction_recovers_planted_character():
    k = 335
    d = -3 * k * k  # the character is chi_{-3} in disguise
    chi = CharacterDescriptor(d, known_square_part=k * k)
    basis = build_twist_lattice(chi, 20, 20, 24)
    red = lll_reduce(basis)
    assert lll_is_reduced(red)
    cands = extract_characters(red, basis, max_results=8)
    assert cands, "no candidates extracted"
    assert cands[0].q == -3
    for c in cands:
        if c.q != 1:
            assert is_fundamental_discriminant(c.q)
    obj1 = correlation_objective(d, 1, 20)
    assert cands[0].objective <= obj1


def test_extraction_empty_selection_is_unit_twist():
    chi = CharacterDescriptor(17)
    basis = build_twist_lattice(chi, 5, 5, 16)
    red = lll_reduce(basis)
    cands = extract_characters(red, basis, max_results=20)
    qs = [c.q for c in cands]
    for c in cands:
        if c.q == 1:
            assert c.selected == ()
    assert all(q == 1 or is_fundamental_discriminant(q) for q in qs)


def test_basis_text_roundtrip():
    chi = CharacterDescriptor(17)
    basis = build_twist_lattice(chi, 5, 5, 8)
    text = basis_to_text(basis)
    back = basis_from_text(text)
    assert back == [list(r) for r in basis.rows]
    with pytest.raises(ValueError):
        basis_from_text("1 2\n3\n")
