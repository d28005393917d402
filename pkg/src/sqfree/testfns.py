"""Admissible test-function pairs (g, h).

Five families of continuous g supported on [0, X] with g(0) = 1 and
non-negative cosine transform h(t) = 2*int_0^inf g(x) cos(tx) dx:

  triangle      g(x) = max(0, 1 - x/X),  h(t) = X sinc^2(Xt/2)
  step_autocorr g = autocorrelation of a (2M+1)-block step function; h = |fhat|^2
  bessel_nuX    g = normalized autocorrelation of (1-x^2)^nu; h via spherical Bessel
  g_alpha       g(x) = max(0, 1-x/a) cos^2(pi x / 2a);  h = three shifted sinc^2 lobes
  sinc_power    h(t) = [sin(Xt/2k)/(Xt/2k)]^{2k} (normalized); g = cardinal B-spline

Also houses the step-coefficient quadratic form whose maximal Rayleigh
quotient optimizes the conductor lower bound over the step family.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.linalg import toeplitz
from scipy.special import gammaln, jv

from .exceptions import BudgetError, NumericError, SquareFactorFound
from .intcore import CharacterDescriptor, iter_primes, kronecker_fast

__all__ = [
    "FAMILIES",
    "TestFunctionSpec",
    "triangle_spec",
    "step_spec",
    "bessel_spec",
    "g_alpha_spec",
    "sinc_power_spec",
    "eval_g",
    "eval_h",
    "h_prime_bound",
    "h_tail_envelope",
    "spherical_bessel_j",
    "QuadraticFormMatrix",
    "build_quadratic_form",
    "OptimizeResult",
    "optimize_coefficients",
    "csch2",
    "sech2",
    "LOG_8PI_EGAMMA",
]

FAMILIES = ("triangle", "step_autocorr", "bessel_nuX", "g_alpha", "sinc_power")

#: log(8 pi e^gamma), the constant archimedean term
LOG_8PI_EGAMMA = math.log(8 * math.pi) + 0.5772156649015329


def sinc(u):
    """sin(u)/u, stable near 0 (works on floats and arrays)."""
    return np.sinc(np.asarray(u) / np.pi)


def csch2(x: float) -> float:
    """1 / (2 sinh(x/2)); three-term series below 1e-3 for the 1/x pole."""
    if x < 1e-3:
        if x == 0.0:
            return math.inf
        return (1.0 - x * x / 24.0 + 7.0 * x**4 / 5760.0) / x
    return 0.5 / math.sinh(0.5 * x)


def sech2(x: float) -> float:
    """1 / (2 cosh(x/2))."""
    return 0.5 / math.cosh(0.5 * x)


# ---------------------------------------------------------------------------
# specs

@dataclass(frozen=True)
class TestFunctionSpec:
    """A (g, h) pair: family name, support bound X, family parameters.

    params is a canonical tuple of (name, value) pairs so specs hash and
    serialize bit-stably.
    """

    family: str
    X: float
    params: tuple = ()

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if not (self.X > 0 and math.isfinite(self.X)):
            raise ValueError("support bound X must be positive and finite")
        _impl(self)  # validates parameters eagerly

    def param(self, name):
        for k, v in self.params:
            if k == name:
                return v
        raise KeyError(name)

    def to_json(self) -> str:
        payload = {"family": self.family, "X": self.X,
                   "params": {k: (list(v) if isinstance(v, tuple) else v)
                              for k, v in self.params}}
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TestFunctionSpec":
        p = json.loads(text)
        params = tuple(sorted(
            (k, tuple(v) if isinstance(v, list) else v)
            for k, v in p["params"].items()
        ))
        return cls(p["family"], p["X"], params)


def triangle_spec(X: float) -> TestFunctionSpec:
    return TestFunctionSpec("triangle", float(X))


def step_spec(X: float, a) -> TestFunctionSpec:
    """Step-autocorrelation spec from raw coefficients a (length 2M+1).

    a is rescaled so |a|^2 = (2M+1)/X, which is exactly g(0) = 1.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 1 or a.size % 2 == 0:
        raise ValueError("need an odd-length coefficient vector")
    norm = float(np.dot(a, a))
    if norm <= 0:
        raise ValueError("coefficients must not be all zero")
    a = a * math.sqrt(a.size / (float(X) * norm))
    M = (a.size - 1) // 2
    return TestFunctionSpec("step_autocorr", float(X),
                            (("M", M), ("a", tuple(a.tolist()))))


def bessel_spec(X: float, nu: float) -> TestFunctionSpec:
    if not nu > 0:
        raise ValueError("need nu > 0")
    return TestFunctionSpec("bessel_nuX", float(X), (("nu", float(nu)),))


def g_alpha_spec(alpha: float) -> TestFunctionSpec:
    return TestFunctionSpec("g_alpha", float(alpha), (("alpha", float(alpha)),))


def sinc_power_spec(X: float, k: int) -> TestFunctionSpec:
    if k < 1:
        raise ValueError("need k >= 1")
    return TestFunctionSpec("sinc_power", float(X), (("k", int(k)),))


# ---------------------------------------------------------------------------
# family implementations

def _bspline(n: int, y: float) -> float:
    """Cardinal B-spline B_n on [0, n] by the (stable) de Boor recurrence."""
    if y <= 0.0 or y >= n:
        return 0.0
    vals = [1.0 if j <= y < j + 1 else 0.0 for j in range(n)]
    for m in range(2, n + 1):
        vals = [((y - j) * vals[j] + (m - (y - j)) * vals[j + 1]) / (m - 1)
                for j in range(n - m + 1)]
    return vals[0]


class _Triangle:
    def __init__(self, spec):
        self.X = spec.X

    def g(self, x):
        return max(0.0, 1.0 - x / self.X)

    def h(self, t):
        u = 0.5 * self.X * np.asarray(t, dtype=float)
        return self.X * np.square(sinc(u))


class _StepAutocorr:
    def __init__(self, spec):
        self.X = spec.X
        self.M = spec.param("M")
        self.a = np.asarray(spec.param("a"), dtype=float)
        if self.a.size != 2 * self.M + 1:
            raise ValueError("coefficient length must be 2M+1")
        if abs(np.dot(self.a, self.a) * self.X / self.a.size - 1.0) > 1e-9:
            raise ValueError("coefficients are not normalized to g(0) = 1")
        self.delta = self.X / (2 * self.M + 1)
        corr = np.correlate(self.a, self.a, mode="full")  # lags -2M .. 2M
        # piecewise-linear ordinates g(j*delta) = delta * corr[lag j], j >= 0
        self.knots = np.concatenate([corr[2 * self.M:] * self.delta, [0.0]])
        self.ns = np.arange(-self.M, self.M + 1, dtype=float)

    def g(self, x):
        if x >= self.X:
            return 0.0
        pos = x / self.delta
        j = min(int(pos), 2 * self.M)
        r = pos - j
        return float(self.knots[j] * (1.0 - r) + self.knots[j + 1] * r)

    def h(self, t):
        t = np.asarray(t, dtype=float)
        phase = np.multiply.outer(t * self.delta, self.ns)
        re = np.cos(phase) @ self.a
        im = np.sin(phase) @ self.a
        base = self.delta * sinc(0.5 * self.delta * t)
        return np.square(base) * (re * re + im * im)


class _GAlpha:
    def __init__(self, spec):
        self.alpha = spec.param("alpha")
        if abs(self.alpha - spec.X) > 1e-12 * max(1.0, spec.X):
            raise ValueError("support bound X must equal alpha")

    def g(self, x):
        a = self.alpha
        if x >= a:
            return 0.0
        return (1.0 - x / a) * math.cos(math.pi * x / (2 * a)) ** 2

    def h(self, t):
        a = self.alpha
        u = a * np.asarray(t, dtype=float)
        return (0.5 * a * np.square(sinc(0.5 * u))
                + 0.25 * a * (np.square(sinc(0.5 * (u - math.pi)))
                              + np.square(sinc(0.5 * (u + math.pi)))))


class _SincPower:
    def __init__(self, spec):
        self.X = spec.X
        self.k = spec.param("k")
        self.a = self.X / (2 * self.k)
        self.central = _bspline(2 * self.k, self.k)

    def g(self, x):
        if x >= self.X:
            return 0.0
        return _bspline(2 * self.k, x / (2 * self.a) + self.k) / self.central

    def h(self, t):
        u = self.a * np.asarray(t, dtype=float)
        return np.power(np.square(sinc(u)), self.k) * (2 * self.a / self.central)


_GL_NODES = np.polynomial.legendre.leggauss(96)


class _BesselNuX:
    def __init__(self, spec):
        self.X = spec.X
        self.nu = spec.param("nu")
        nu = self.nu
        # normalization Gamma(3/2+2nu) / (sqrt(pi) Gamma(1+2nu))
        self.norm = math.exp(gammaln(1.5 + 2 * nu) - gammaln(1 + 2 * nu)) / math.sqrt(math.pi)
        # log prefactor of h: (2X/sqrt(pi)) Gamma(3/2+2nu) Gamma(1+nu)^2 / Gamma(1+2nu)
        self.log_pref = (math.log(2 * self.X / math.sqrt(math.pi))
                         + gammaln(1.5 + 2 * nu) + 2 * gammaln(1 + nu)
                         - gammaln(1 + 2 * nu))

    def g(self, x):
        if x >= self.X:
            return 0.0
        u = 2.0 * x / self.X
        lo, hi = u - 1.0, 1.0
        y = 0.5 * (hi - lo) * _GL_NODES[0] + 0.5 * (hi + lo)
        w = 0.5 * (hi - lo) * _GL_NODES[1]
        nu = self.nu
        vals = np.power(np.clip(1 - y * y, 0, None), nu) \
            * np.power(np.clip(1 - (u - y) ** 2, 0, None), nu)
        return self.norm * float(np.dot(w, vals))

    def _log_jtilde(self, u: float) -> float:
        """log |j_nu(u) (2/u)^nu|; -inf at zeros of the Bessel factor."""
        nu = self.nu
        if u < 1e-8:
            return 0.5 * math.log(math.pi) - math.log(2.0) - math.lgamma(nu + 1.5)
        if u <= 2.0 * math.sqrt(nu + 1.5):
            # monotone-term series: sqrt(pi)/2 * sum (-u^2/4)^k / (k! Gamma(nu+1.5+k))
            term = math.exp(-math.lgamma(nu + 1.5))
            total = term
            k = 0
            while abs(term) > 1e-22 * abs(total) and k < 400:
                term *= -(u * u / 4.0) / ((k + 1) * (nu + 1.5 + k))
                total += term
                k += 1
            if total == 0.0:
                return -math.inf
            return 0.5 * math.log(math.pi) - math.log(2.0) + math.log(abs(total))
        if nu <= 25.0 or u >= nu + 2.0 * max(1.0, nu ** (1.0 / 3.0)) + 2.0:
            j = jv(nu + 0.5, u)
            if j == 0.0:
                return -math.inf
            return (math.log(abs(j)) + 0.5 * math.log(math.pi / (2 * u))
                    + nu * math.log(2.0 / u))
        # large order, pre-oscillatory band: extended precision
        import mpmath as mp
        with mp.workdps(40):
            val = mp.besselj(nu + 0.5, u) * mp.sqrt(mp.pi / (2 * u)) * mp.power(2.0 / u, nu)
            if val == 0:
                return -math.inf
            return float(mp.log(abs(val)))

    def h(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty_like(t)
        for i, ti in enumerate(t.ravel()):
            lj = self._log_jtilde(0.5 * self.X * abs(ti))
            lg = self.log_pref + 2.0 * lj
            out.ravel()[i] = math.exp(lg) if lg > -745 else 0.0
        return out if out.size > 1 else float(out.ravel()[0])


_IMPLS = {
    "triangle": _Triangle,
    "step_autocorr": _StepAutocorr,
    "bessel_nuX": _BesselNuX,
    "g_alpha": _GAlpha,
    "sinc_power": _SincPower,
}


@lru_cache(maxsize=256)
def _impl(spec: TestFunctionSpec):
    return _IMPLS[spec.family](spec)


def eval_g(spec: TestFunctionSpec, x: float) -> float:
    """g(x) for x >= 0; exactly 0 beyond the support bound."""
    if x < 0:
        raise ValueError("need x >= 0")
    if x >= spec.X:
        return 0.0
    return float(_impl(spec).g(float(x)))


def eval_g_many(spec: TestFunctionSpec, xs: np.ndarray) -> np.ndarray:
    """Vectorized g over non-negative xs (fast paths for the piecewise-linear
    families; scalar fallback otherwise)."""
    xs = np.asarray(xs, dtype=float)
    impl = _impl(spec)
    if spec.family == "triangle":
        return np.clip(1.0 - xs / spec.X, 0.0, None)
    if spec.family == "step_autocorr":
        grid = impl.delta * np.arange(impl.knots.size)
        return np.interp(xs, grid, impl.knots, right=0.0)
    return np.array([impl.g(float(x)) if x < spec.X else 0.0 for x in xs.ravel()]
                    ).reshape(xs.shape)


def eval_h(spec: TestFunctionSpec, t):
    """h(t) = 2*int_0^X g(x) cos(tx) dx; accepts scalars or arrays, h(-t) = h(t)."""
    val = _impl(spec).h(np.abs(t))
    if np.isscalar(t) or np.asarray(t).ndim == 0:
        return float(val)
    return np.asarray(val, dtype=float)


def h_prime_bound(spec: TestFunctionSpec) -> float:
    """Global bound on |h'(t)|: 2*int_0^X x |g(x)| dx, by quadrature."""
    impl = _impl(spec)
    val, _ = integrate.quad(lambda x: x * abs(impl.g(x)), 0.0, spec.X, limit=200)
    return 2.0 * val


def h_abs_area(spec: TestFunctionSpec) -> float:
    """2*int_0^X |g|, a uniform bound for |h|."""
    impl = _impl(spec)
    val, _ = integrate.quad(lambda x: abs(impl.g(x)), 0.0, spec.X, limit=200)
    return 2.0 * val


def h_tail_envelope(spec: TestFunctionSpec, t: float) -> float:
    """A nonincreasing majorant of h on [t, inf), from closed-form decay.

    triangle and step_autocorr only decay like 1/t^2 (loose); g_alpha like
    1/t^2; sinc_power like t^(-2k); bessel_nuX like t^(-2nu-2).
    """
    cap = h_abs_area(spec)
    if t <= 0:
        return cap
    fam = spec.family
    if fam == "triangle":
        env = 4.0 / (spec.X * t * t)
    elif fam == "step_autocorr":
        impl = _impl(spec)
        env = (2.0 / t) ** 2 * float(np.abs(impl.a).sum()) ** 2
    elif fam == "g_alpha":
        a = spec.X
        # each lobe: (alpha/2) * (2/(a t -+ pi))^2; keep it simple and sound
        shift = max(t * a - math.pi, 1e-12)
        env = 2.0 * a / (a * t) ** 2 + a * (2.0 / shift) ** 2
    elif fam == "sinc_power":
        impl = _impl(spec)
        env = (1.0 / (impl.a * t)) ** (2 * impl.k) * (2 * impl.a / impl.central)
    else:  # bessel_nuX: |u j_nu(u)| <= ~1.04 for u >= 2 nu; 1.2 covers it
        impl = _impl(spec)
        nu = impl.nu
        u = 0.5 * spec.X * t
        if u <= 2 * nu + 2:
            return cap
        env = 1.2 * math.exp(impl.log_pref + 2 * (nu * math.log(2.0 / u) - math.log(u)))
    return min(cap, env)


def spherical_bessel_j(nu: float, u: float) -> float:
    """Spherical Bessel j_nu(u) = sqrt(pi/(2u)) J_{nu+1/2}(u), real nu >= 0.

    Validated for nu <= 1e4 and u <= 1e6; values below the float64 range
    underflow to 0.
    """
    if not (0 <= nu <= 1e4) or not (0 <= u <= 1e6):
        raise ValueError("outside validated domain: need 0 <= nu <= 1e4, 0 <= u <= 1e6")
    if u == 0.0:
        return 1.0 if nu == 0 else 0.0
    return float(jv(nu + 0.5, u) * math.sqrt(math.pi / (2.0 * u)))


# ---------------------------------------------------------------------------
# step-coefficient quadratic form

@dataclass(frozen=True)
class QuadraticFormMatrix:
    """Symmetric Toeplitz matrix A with a^T A a = conductor lower bound for
    the step-autocorrelation g built from coefficients a (|a|^2 = scale)."""

    matrix: np.ndarray
    scale: float  # (2M+1)/X; |a|^2 = scale is g(0) = 1
    X: float
    M: int
    d: int
    q: int

    def __post_init__(self):
        A = self.matrix
        if A.shape[0] != A.shape[1] or A.shape[0] != 2 * self.M + 1:
            raise ValueError("matrix dimension must be 2M+1")


def build_quadratic_form(
    char: CharacterDescriptor,
    q: int,
    X: float,
    M: int,
    prime_budget: int = 1 << 34,
) -> QuadraticFormMatrix:
    """Assemble the (2M+1)-dim quadratic form over step coefficients.

    Expands the bound into hat-function weights v_k at lag k*delta,
    delta = X/(2M+1): writing the autocorrelation of the coefficient vector
    as c_k, the bound equals sum_k c_k v_k, a Toeplitz quadratic form.

    Caller must have cleared square factors below e^X; a vanishing character
    value at a prime not dividing q with p^2 | d raises SquareFactorFound.
    """
    n_max = int(math.exp(X)) + 1
    if n_max > prime_budget:
        raise BudgetError(f"prime sum to {n_max} exceeds budget {prime_budget}")
    dim = 2 * M + 1
    delta = X / dim
    qd = q * char.d
    v = np.zeros(dim + 1)  # extra slot absorbs k0+1 == dim spill (weight 0 there)

    def add(y: float, w: float):
        pos = y / delta
        k0 = int(pos)
        frac = pos - k0
        if k0 < dim:
            v[k0] += w * delta * (1.0 - frac)
        if k0 + 1 < dim:
            v[k0 + 1] += w * delta * frac

    for seg in iter_primes(2, n_max + 1):
        ps = seg.primes.tolist()
        logs = np.log(seg.primes.astype(float))
        invs = 1.0 / np.sqrt(seg.primes.astype(float))
        for i, p in enumerate(ps):
            chi = kronecker_fast(qd, p)
            if chi == 0:
                if q % p != 0 and char.d % (p * p) == 0:
                    raise SquareFactorFound(p)
                continue
            y = float(logs[i])
            add(y, 2.0 * chi * y * float(invs[i]))
            # higher prime powers p^j <= e^X
            pj, cj, j = p * p, chi * chi, 2
            while pj <= n_max:
                add(j * y, 2.0 * cj * y / math.sqrt(pj))
                pj *= p
                cj *= chi
                j += 1

    # archimedean hat-weights; chi_{qd}(-1) is the sign of qd
    eps = 1.0 if qd > 0 else -1.0

    def hat(x, k):
        return max(0.0, delta - abs(x - k * delta))

    s0_main, _ = integrate.quad(lambda x: x * csch2(x), 0.0, delta, limit=200)
    s0_tail = -delta * math.log(math.tanh(0.25 * delta))
    v[0] -= s0_main + s0_tail
    u0, _ = integrate.quad(lambda x: hat(x, 0) * sech2(x), 0.0, delta, limit=200)
    v[0] += eps * u0
    for k in range(1, dim):
        lo, hi = (k - 1) * delta, (k + 1) * delta
        sk, _ = integrate.quad(lambda x: hat(x, k) * csch2(x), lo, hi,
                               limit=200, points=[k * delta])
        uk, _ = integrate.quad(lambda x: hat(x, k) * sech2(x), lo, hi,
                               limit=200, points=[k * delta])
        v[k] += sk + eps * uk

    v[0] += delta * (LOG_8PI_EGAMMA - math.log(abs(q)))

    col = v[:dim].copy()
    col[1:] *= 0.5
    return QuadraticFormMatrix(toeplitz(col), dim / X, X, M, char.d, q)


@dataclass(frozen=True)
class OptimizeResult:
    a: np.ndarray
    bound: float
    eigenvalue: float
    eigengap: float
    residual: float
    iterations: int


def optimize_coefficients(
    form: QuadraticFormMatrix,
    tol: float = 1e-10,
    max_iter: int = 50_000,
) -> OptimizeResult:
    """Maximize a^T A a over |a|^2 = scale by shifted power iteration.

    Returns the scaled top eigenvector and bound = scale * lambda_1.  The
    iteration converges to residual |Av - lv| <= tol * max(1, |l|); on a
    (near-)degenerate top eigenvalue any maximizer is accepted and the
    estimated eigengap is reported.
    """
    A = form.matrix
    n = A.shape[0]
    if n > 2001:
        raise ValueError("dimension capped at 2001")
    if n == 1:
        lam = float(A[0, 0])
        a = np.array([math.sqrt(form.scale)])
        return OptimizeResult(a, form.scale * lam, lam, math.inf, 0.0, 0)
    diag = np.diag(A)
    radii = np.abs(A).sum(axis=1) - np.abs(diag)
    shift = max(0.0, -float((diag - radii).min())) + 1e-12
    v = np.full(n, 1.0 / math.sqrt(n))
    v += np.linspace(0, 1e-6, n)  # deterministic symmetry breaking
    v /= np.linalg.norm(v)
    lam = float(v @ A @ v)
    res = math.inf
    for it in range(1, max_iter + 1):
        w = A @ v + shift * v
        nw = np.linalg.norm(w)
        if nw == 0:
            raise NumericError("power iteration collapsed to zero vector")
        v = w / nw
        if it % 8 == 0 or it < 8:
            Av = A @ v
            lam = float(v @ Av)
            res = float(np.linalg.norm(Av - lam * v))
            if res <= tol * max(1.0, abs(lam)):
                break
    else:
        raise NumericError(f"no convergence after {max_iter} iterations, residual {res:.3e}")

    # crude second-eigenvalue estimate for the gap report
    u = np.roll(v, 1) - v
    u -= (u @ v) * v
    nrm = np.linalg.norm(u)
    gap = math.inf
    if nrm > 0:
        u /= nrm
        for _ in range(200):
            w = A @ u + shift * u
            w -= (w @ v) * v
            nw = np.linalg.norm(w)
            if nw == 0:
                break
            u = w / nw
        lam2 = float(u @ A @ u)
        gap = lam - lam2

    a = v * math.sqrt(form.scale)
    if a.sum() < 0:
        a = -a
    return OptimizeResult(a, form.scale * lam, lam, gap, res, it)
