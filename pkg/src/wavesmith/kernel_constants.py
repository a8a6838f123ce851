"""Kernel in logarithmic variables, the constant state and its quadrature oracle.

The kernel K(xi, eta) = xi^(1-eps/2) eta^(eps/2) + xi^(eps/2) eta^(1-eps/2)
restricted to eta = 1 and written in y = ln xi is

    K(e^y, 1) = e^{kappa y} + e^{lam y},    kappa = 1 - eps/2,  lam = eps/2.

All downstream modules work with the two exponents ``kappa`` and ``lam``.
"""
from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

# Lanczos coefficients, g = 7, n = 9.
_LANCZOS_G = 7.0
_LANCZOS_P = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class DomainError(ValueError):
    """Raised when an argument lies outside the admissible domain."""


@dataclass(frozen=True)
class Epsilon:
    value: float

    def __post_init__(self):
        v = float(self.value)
        if not (math.isfinite(v) and 0.0 < v < 2.0):
            raise DomainError(f"eps must lie in (0, 2), got {self.value!r}")
        object.__setattr__(self, "value", v)

    @property
    def kappa(self) -> float:
        return 1.0 - 0.5 * self.value

    @property
    def lam(self) -> float:
        return 0.5 * self.value

    def __float__(self):
        return self.value


def as_eps(eps) -> float:
    """Validate and unwrap an eps value (accepts floats or Epsilon)."""
    if isinstance(eps, Epsilon):
        return eps.value
    return Epsilon(eps).value


def kernel_log(y, eps):
    """K(e^y, 1) = e^{(1-eps/2) y} + e^{(eps/2) y}."""
    e = as_eps(eps)
    y = np.asarray(y, dtype=float)
    out = np.exp((1.0 - 0.5 * e) * y) + np.exp(0.5 * e * y)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Gamma family
# ---------------------------------------------------------------------------

def _lanczos_sum(z):
    x = _LANCZOS_P[0]
    for i in range(1, len(_LANCZOS_P)):
        x += _LANCZOS_P[i] / (z + i)
    return x


def loggamma(z):
    """log Gamma(z) for complex or real z (principal branch for real z > 0).

    For complex arguments the imaginary part is continuous on the right
    half-plane but is not normalised to the principal branch of log(Gamma);
    exponentiate before comparing values.
    """
    if isinstance(z, complex) or np.iscomplexobj(z):
        z = complex(z)
        if z.real < 0.5:
            return complex(math.log(math.pi)) - cmath.log(cmath.sin(math.pi * z)) - loggamma(1.0 - z)
        z = z - 1.0
        t = z + _LANCZOS_G + 0.5
        return _HALF_LOG_2PI + (z + 0.5) * cmath.log(t) - t + cmath.log(_lanczos_sum(z))
    z = float(z)
    if z <= 0.0 and z == math.floor(z):
        raise DomainError("loggamma pole at non-positive integer")
    if z < 0.5:
        s = math.sin(math.pi * z)
        return math.log(math.pi / abs(s)) - loggamma(1.0 - z)
    z -= 1.0
    t = z + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (z + 0.5) * math.log(t) - t + math.log(_lanczos_sum(z))


def gamma(z):
    """Gamma(z) for real or complex z via the Lanczos approximation."""
    if isinstance(z, complex) or np.iscomplexobj(z):
        z = complex(z)
        if z.real < 0.5:
            return math.pi / (cmath.sin(math.pi * z) * gamma(1.0 - z))
        return cmath.exp(loggamma(z))
    z = float(z)
    if z < 0.5:
        return math.pi / (math.sin(math.pi * z) * gamma(1.0 - z))
    return math.exp(loggamma(z))


def gamma_array(z):
    """Vectorised complex Gamma for numpy arrays (Lanczos plus reflection)."""
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    left = z.real < 0.5
    zr = np.where(left, 1.0 - z, z) - 1.0
    x = np.full_like(zr, _LANCZOS_P[0])
    for i in range(1, len(_LANCZOS_P)):
        x = x + _LANCZOS_P[i] / (zr + i)
    t = zr + _LANCZOS_G + 0.5
    g = np.exp(_HALF_LOG_2PI + (zr + 0.5) * np.log(t) - t) * x
    out[~left] = g[~left]
    out[left] = math.pi / (np.sin(math.pi * z[left]) * g[left])
    return out


def digamma(z):
    """psi(z) = Gamma'(z)/Gamma(z) by recurrence plus the asymptotic series."""
    cplx = isinstance(z, complex) or np.iscomplexobj(z)
    z = complex(z) if cplx else float(z)
    if (z.real if cplx else z) < 0.5:
        tan = cmath.tan if cplx else math.tan
        return digamma(1.0 - z) - math.pi / tan(math.pi * z)
    acc = 0.0
    while (z.real if cplx else z) < 10.0:
        acc -= 1.0 / z
        z = z + 1.0
    log = cmath.log if cplx else math.log
    w = 1.0 / (z * z)
    # Bernoulli terms B_2k/(2k z^2k)
    series = w * (1.0 / 12 - w * (1.0 / 120 - w * (1.0 / 252 - w * (1.0 / 240 - w * (1.0 / 132)))))
    return acc + log(z) - 0.5 / z - series


# ---------------------------------------------------------------------------
# Constant state
# ---------------------------------------------------------------------------

def g_infinity(eps) -> float:
    """G_inf = kappa*lam / (Gamma(kappa) Gamma(lam))."""
    e = as_eps(eps)
    k, l = 1.0 - 0.5 * e, 0.5 * e
    return math.exp(math.log(k * l) - loggamma(k) - loggamma(l))


def c0_integral(eps, tol: float = 1e-9) -> float:
    """Adaptive double quadrature of the integral whose reciprocal is G_inf.

    int_{-inf}^0 dy int_{ln(1-e^y)}^inf dz K(e^{y-z}, 1).  With eta = e^y and
    zeta = e^z the region becomes 0 < eta < 1, zeta > 1 - eta, and the kernel
    splits into two pieces eta^{c-1} zeta^{-c-1} (c = kappa, lam).  The outer
    endpoint singularities eta^{c-1} (1-eta)^{-c} are carried by the
    algebraic weight of QUADPACK's QAWS rule; the inner integral is done
    numerically.
    """
    e = as_eps(eps)
    if tol <= 0:
        raise ValueError("tol must be positive")
    total = 0.0
    for c in (1.0 - 0.5 * e, 0.5 * e):
        def inner(eta, c=c):
            lo = 1.0 - eta
            if lo <= 0.0:
                return 1.0 / c
            # int_{1-eta}^inf zeta^{-c-1} dzeta, done back in z = ln zeta;
            # the (1-eta)^{-c} growth is moved into the outer weight
            z0 = math.log(lo)
            val, _ = integrate.quad(lambda z: math.exp(-c * (z - z0)), z0, np.inf,
                                    epsabs=1e-14, epsrel=1e-13, limit=200)
            return val

        val, err = integrate.quad(inner, 0.0, 1.0, weight="alg", wvar=(c - 1.0, -c),
                                  epsabs=0.5 * tol, epsrel=1e-13, limit=200)
        if not np.isfinite(val) or err > tol:
            raise RuntimeError(f"c0_integral did not reach tol={tol} (err={err})")
        total += val
    return total


def j_region_constant(eps, tol: float = 1e-10) -> float:
    """int int over {y,z<=0, e^y+e^z>=1} of K(e^{y-z},1) dy dz.

    This is the constant-state value of the memory integral per unit G^2.
    Computed independently of Gamma functions by quadrature in (eta, zeta).
    """
    e = as_eps(eps)
    total = 0.0
    for c in (1.0 - 0.5 * e, 0.5 * e):
        # int_0^1 deta eta^{c-1} int_{1-eta}^1 zeta^{-c-1} dzeta
        #   = int_0^1 eta^{c-1} ((1-eta)^{-c} - 1)/c deta
        def f(eta, c=c):
            lo = 1.0 - eta
            return -math.expm1(c * math.log(lo)) / c if lo > 0 else 1.0 / c

        with warnings.catch_warnings():
            # the integrand is exact to round-off near eta = 1; QUADPACK
            # flags the flat tail as a round-off stall
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, _ = integrate.quad(f, 0.0, 1.0, weight="alg", wvar=(c - 1.0, -c),
                                    epsabs=tol, epsrel=1e-13, limit=200)
        total += val
    return total


@dataclass(frozen=True)
class ConstantState:
    eps: float
    g_inf: float
    a_inf: float
    b_inf: float
    p_inf: float
    q_inf: float


def constant_state(eps) -> ConstantState:
    e = as_eps(eps)
    g = g_infinity(e)
    ab = g / e
    pq = 2.0 * g / (2.0 - e)
    return ConstantState(e, g, ab, ab, pq, pq)
