import math

import numpy as np
import pytest
from scipy import integrate

from sqfree.exceptions import NumericError
from sqfree.intcore import CharacterDescriptor
from sqfree.testfns import (
    TestFunctionSpec,
    bessel_spec,
    build_quadratic_form,
    eval_g,
    eval_g_many,
    eval_h,
    g_alpha_spec,
    h_prime_bound,
    h_tail_envelope,
    optimize_coefficients,
    sinc_power_spec,
    spherical_bessel_j,
    step_spec,
    triangle_spec,
)

RNG = np.random.default_rng(42)


def sample_specs():
    return [
        triangle_spec(3.5),
        step_spec(3.0, RNG.normal(size=5)),
        step_spec(7.0, RNG.normal(size=11)),
        bessel_spec(4.0, 1.5),
        bessel_spec(6.0, 5.0),
        g_alpha_spec(2.0),
        sinc_power_spec(5.0, 3),
        sinc_power_spec(16.118, 7),
    ]


def h_oracle(spec, t):
    """Independent route: direct quadrature of 2 int g cos."""
    val, _ = integrate.quad(lambda x: eval_g(spec, x) * math.cos(t * x),
                            0.0, spec.X, limit=600, epsabs=1e-11, epsrel=1e-11)
    return 2.0 * val


def test_transform_consistency_all_families():
    for spec in sample_specs():
        for t in np.concatenate([[0.0], RNG.uniform(0, 12, size=4)]):
            assert abs(h_oracle(spec, float(t)) - eval_h(spec, float(t))) < 1e-8, (spec.family, t)


def test_normalization_and_support():
    for spec in sample_specs():
        assert abs(eval_g(spec, 0.0) - 1.0) < 1e-12, spec.family
        assert eval_g(spec, 2 * spec.X) == 0.0
        assert eval_g(spec, spec.X) == 0.0


def test_h_nonnegative_on_grid():
    grid = np.linspace(0, 200, 10_000)
    for spec in sample_specs():
        vals = eval_h(spec, grid)
        assert np.min(vals) >= -1e-12, spec.family


def test_triangle_closed_forms():
    spec = triangle_spec(3.5)
    assert eval_g(spec, 0.0) == 1.0 and eval_g(spec, 3.5) == 0.0
    for t in (0.3, 1.0, 2.7):
        assert abs(eval_h(spec, t) - 8 * math.sin(7 * t / 4) ** 2 / (7 * t * t)) < 1e-14
    assert eval_h(spec, 0.0) == 3.5  # h(0) = X


def test_g_alpha_closed_forms():
    spec = g_alpha_spec(2.0)
    assert abs(eval_g(spec, 1.0) - 0.25) < 1e-14  # (1/2) cos^2(pi/4)
    # floor bound on a grid, several alphas
    for alpha in (0.5, 1.0, 2.0, 5.0):
        s = g_alpha_spec(alpha)
        for t in np.linspace(0.01, 40, 400):
            floor = 2 * alpha / max((alpha * t) ** 2, math.pi**2 / 3)
            assert eval_h(s, float(t)) >= floor - 1e-12
    assert eval_h(g_alpha_spec(1.0), 2.0) >= 0.5


def test_eval_g_many_matches_scalar():
    xs = np.linspace(0, 8, 57)
    for spec in sample_specs():
        many = eval_g_many(spec, xs)
        one = np.array([eval_g(spec, float(x)) for x in xs])
        assert np.allclose(many, one, atol=1e-13)


def test_bessel_family_decay_envelope():
    # fitted-constant stability of the tail envelope shape for nu=5, X=4
    nu, X = 5.0, 4.0
    spec = bessel_spec(X, nu)
    ts = np.linspace(4 * nu / X, 60, 120)  # |Xt/4| >= nu from here up
    shape = (nu ** -0.5 * math.exp(-2 * nu) * X
             * np.abs(4 * nu / (X * ts)) ** (2 * nu + 2))
    ratios = eval_h(spec, ts) / shape
    C = ratios[::2].max()
    assert np.all(eval_h(spec, ts[1::2]) <= 1.5 * C * shape[1::2])
    assert C < 1e4  # single constant, not blowing up across the grid


def test_spec_json_roundtrip_bitstable():
    for spec in sample_specs():
        again = TestFunctionSpec.from_json(spec.to_json())
        assert again == spec
        assert again.to_json() == spec.to_json()


def test_spec_validation():
    with pytest.raises(ValueError):
        TestFunctionSpec("nope", 1.0)
    with pytest.raises(ValueError):
        triangle_spec(-1.0)
    with pytest.raises(ValueError):
        step_spec(2.0, [1.0, 2.0])  # even length


# --- spherical Bessel ---------------------------------------------------------

def j_poisson_oracle(nu, u):
    """j_nu(u) from the Poisson-type integral of (1-x^2)^nu (oscillatory rule)."""
    val, _ = integrate.quad(lambda x: (1 - x * x) ** nu, 0.0, 1.0,
                            weight="cos", wvar=u, limit=400, epsabs=1e-14)
    return u**nu / (2**nu * math.gamma(1 + nu)) * val


def test_spherical_bessel():
    assert abs(spherical_bessel_j(0, math.pi)) < 1e-12
    for u in (0.3, 1.0, 2.0, 10.0):
        assert abs(spherical_bessel_j(0, u) - math.sin(u) / u) < 1e-12
    assert abs(spherical_bessel_j(1.0, 2.0) - j_poisson_oracle(1.0, 2.0)) < 1e-10
    assert abs(spherical_bessel_j(1.0, 2.0) - 0.435398) < 5e-7
    for nu in (0.7, 2.5, 6.0):
        for u in (0.5, 3.0, 25.0):
            assert abs(spherical_bessel_j(nu, u) - j_poisson_oracle(nu, u)) < 1e-10
    # large-u / large-nu grid against an independent arbitrary-precision route
    import mpmath as mp
    for nu in (0.7, 2.5, 6.0, 40.0, 350.0):
        for u in (1.0, 25.0, 300.0, 1e5):
            ref = float(mp.sqrt(mp.pi / (2 * u)) * mp.besselj(nu + 0.5, u))
            got = spherical_bessel_j(nu, u)
            if ref == 0.0 or abs(ref) < 1e-300:
                assert abs(got) < 1e-300
            else:
                assert abs(got - ref) < 1e-10 * abs(ref) + 1e-300, (nu, u)
    # u -> 0 limit of j_nu(u) (2/u)^nu
    for nu in (0.5, 1.5, 4.0):
        lim = math.sqrt(math.pi) / (2 * math.gamma(1.5 + nu))
        got = spherical_bessel_j(nu, 1e-6) * (2 / 1e-6) ** nu
        assert abs(got - lim) < 1e-9 * lim
    with pytest.raises(ValueError):
        spherical_bessel_j(-1.0, 1.0)
    with pytest.raises(ValueError):
        spherical_bessel_j(1.0, 2e6)


def test_bessel_h_matches_mpmath_reference():
    import mpmath as mp
    nu, X = 5.0, 4.0
    spec = bessel_spec(X, nu)
    pref = (2 * X / mp.sqrt(mp.pi) * mp.gamma(1.5 + 2 * nu)
            * mp.gamma(1 + nu) ** 2 / mp.gamma(1 + 2 * nu))
    for t in (0.01, 1.0, 3.7, 5.0, 8.0, 30.0):
        u = X * t / 2
        jt = mp.besselj(nu + 0.5, u) * mp.sqrt(mp.pi / (2 * u)) * (2 / u) ** nu
        ref = float(pref * jt**2)
        assert abs(eval_h(spec, t) - ref) <= 1e-9 * max(1.0, abs(ref)), t


def test_h_tail_envelope_majorizes():
    for spec in sample_specs():
        for T in (1.0, 5.0, 20.0):
            env_T = h_tail_envelope(spec, T)
            ts = np.linspace(T, T + 60, 500)
            assert np.all(eval_h(spec, ts) <= env_T + 1e-12), (spec.family, T)


def test_h_prime_bound():
    spec = triangle_spec(3.0)
    # |h'| <= 2 int x g dx = X^2/3 for the triangle
    assert abs(h_prime_bound(spec) - 3.0) < 1e-9
    ts = np.linspace(0.01, 30, 800)
    hs = eval_h(spec, ts)
    slopes = np.abs(np.diff(hs) / np.diff(ts))
    assert slopes.max() <= h_prime_bound(spec) + 1e-6


# --- quadratic form -----------------------------------------------------------

def test_quadratic_form_m0_reduces_to_triangle():
    from sqfree.bounds import lower_bound
    chi = CharacterDescriptor(1548889)
    form = build_quadratic_form(chi, 1, 3.5, 0)
    assert form.matrix.shape == (1, 1)
    res = optimize_coefficients(form)
    rep = lower_bound(chi, 1, triangle_spec(3.5))
    assert abs(res.bound - rep.lower_bound) < 1e-8
    assert abs(res.a[0] - 1 / math.sqrt(3.5)) < 1e-12


def test_quadratic_form_symmetric_and_consistent():
    from sqfree.bounds import lower_bound
    chi = CharacterDescriptor(-5355403)  # 1 mod 4 negative
    form = build_quadratic_form(chi, 1, 4.0, 3)
    A = form.matrix
    assert np.allclose(A, A.T, rtol=1e-12)
    # a^T A a must equal the direct bound of the corresponding step spec
    for _ in range(4):
        a = RNG.normal(size=7)
        a *= math.sqrt(form.scale / np.dot(a, a))
        spec = step_spec(4.0, a)
        direct = lower_bound(chi, 1, spec).lower_bound
        assert abs(float(a @ A @ a) - direct) < 1e-8


def test_optimizer_small_cases():
    from sqfree.testfns import QuadraticFormMatrix
    A = np.diag([3.0, 1.0, 2.0])
    form = QuadraticFormMatrix(A, 1.0, 3.0, 1, 5, 1)
    res = optimize_coefficients(form)
    assert abs(res.bound - 3.0) < 1e-9
    assert np.allclose(np.abs(res.a), [1, 0, 0], atol=1e-7)
    for _ in range(5):
        B = RNG.normal(size=(5, 5))
        B = (B + B.T) / 2
        form = QuadraticFormMatrix(B, 2.0, 5.0, 2, 5, 1)
        res = optimize_coefficients(form)
        top = np.linalg.eigvalsh(B)[-1]
        assert abs(res.bound - 2.0 * top) < 1e-9


def test_optimizer_reports_nonconvergence():
    from sqfree.testfns import QuadraticFormMatrix
    A = np.diag([1.0, 1.0, 0.5])  # exactly degenerate top pair converges fine
    form = QuadraticFormMatrix(A, 1.0, 3.0, 1, 5, 1)
    res = optimize_coefficients(form)
    assert abs(res.bound - 1.0) < 1e-9
    with pytest.raises(NumericError):
        optimize_coefficients(
            QuadraticFormMatrix(np.diag([1.0, 1.0 - 1e-13, 0.5]), 1.0, 3.0, 1, 5, 1),
            max_iter=3)


def test_optimizer_bound_monotone_along_refinement_chain():
    # step families nest only when 2M+1 divides 2M'+1: M = 0, 1, 4, 13
    chi = CharacterDescriptor(1548889)
    prev = -math.inf
    for M in (0, 1, 4, 13):
        form = build_quadratic_form(chi, 1, 3.5, M)
        bound = optimize_coefficients(form).bound
        assert bound >= prev - 1e-8, (M, bound, prev)
        prev = bound


def test_step_spec_properties_hypothesis():
    from hypothesis import given, settings
    from hypothesis import strategies as st

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(-5, 5).filter(lambda v: abs(v) > 1e-3),
                    min_size=1, max_size=9).filter(lambda a: len(a) % 2 == 1),
           st.floats(0.5, 9.0))
    def inner(a, X):
        spec = step_spec(X, a)
        assert abs(eval_g(spec, 0.0) - 1.0) < 1e-9
        assert eval_g(spec, X) == 0.0
        assert eval_h(spec, 0.3) >= -1e-12
        assert abs(eval_h(spec, 0.7) - eval_h(spec, -0.7)) < 1e-12

    inner()
