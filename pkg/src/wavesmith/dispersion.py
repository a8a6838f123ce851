"""Right half-plane roots of the linearised problem around the constant state.

Perturbing G = G_inf + G1 e^{mu x} gives a transcendental equation in mu,

    Gamma(k)Gamma(l)Gamma(1+mu)/(k l)
        = Gamma(k+mu)Gamma(l)(1-mu)/(k(l-mu)) + Gamma(l+mu)Gamma(k)(1-mu)/(l(k-mu)),

with k = 1 - eps/2 and l = eps/2.  Three roots have Re mu >= 0: a conjugate
pair mu_plus, mu_minus close to the imaginary axis (slow oscillation with
growing amplitude) and a real root mu_star close to k (fast instability).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernel_constants import as_eps, gamma, gamma_array


class PoleError(ValueError):
    pass


class RootError(RuntimeError):
    pass


@dataclass(frozen=True)
class DispersionRoots:
    mu_plus: complex
    mu_minus: complex
    mu_star: complex
    residual_norm: float  # max relative residual over the three roots
    eps: float
    count: int


@dataclass(frozen=True)
class ModeCoefficients:
    a1: complex
    b1: complex
    p1: complex
    q1: complex


def dispersion_residual(mu, eps) -> complex:
    """LHS - RHS of the dispersion relation (poles at eps/2 and 1 - eps/2)."""
    e = as_eps(eps)
    k, l = 1.0 - 0.5 * e, 0.5 * e
    mu = complex(mu)
    if abs(mu - l) < 1e-12 or abs(mu - k) < 1e-12:
        raise PoleError(f"mu={mu} within 1e-12 of a pole")
    gk, gl = gamma(k), gamma(l)
    lhs = gk * gl * gamma(1.0 + mu) / (k * l)
    rhs = (gamma(k + mu) * gl * (1.0 - mu) / (k * (l - mu))
           + gamma(l + mu) * gk * (1.0 - mu) / (l * (k - mu)))
    return lhs - rhs


def relative_residual(mu, eps) -> float:
    """|LHS - RHS| divided by the largest of the three terms.

    Near the pole at 1 - eps/2 the terms are O(1/(eps (k - mu))) and the
    absolute residual is floored by round-off at that scale."""
    e = as_eps(eps)
    k, l = 1.0 - 0.5 * e, 0.5 * e
    mu = complex(mu)
    gk, gl = gamma(k), gamma(l)
    t0 = gk * gl * gamma(1.0 + mu) / (k * l)
    t1 = gamma(k + mu) * gl * (1.0 - mu) / (k * (l - mu))
    t2 = gamma(l + mu) * gk * (1.0 - mu) / (l * (k - mu))
    return abs(t0 - t1 - t2) / max(abs(t0), abs(t1), abs(t2))


def cleared_residual(mu, eps):
    """(l - mu)(k - mu) times the residual; analytic for Re mu > -l.

    Accepts scalars or numpy arrays.
    """
    e = as_eps(eps)
    k, l = 1.0 - 0.5 * e, 0.5 * e
    mu = np.asarray(mu, dtype=complex)
    gk, gl = gamma(k), gamma(l)
    g1, gkm, glm = gamma_array(np.stack([1.0 + mu, k + mu, l + mu]))
    out = (gk * gl * g1 * (l - mu) * (k - mu) / (k * l)
           - gkm * gl * (1.0 - mu) * (k - mu) / k
           - glm * gk * (1.0 - mu) * (l - mu) / l)
    return complex(out) if out.ndim == 0 else out


def asymptotic_roots(eps):
    """Leading small-eps approximations (mu_plus, mu_star)."""
    e = as_eps(eps)
    return complex(e * e / 8.0, e / 2.0 + e * e / 8.0), complex(1.0 - e / 2.0)


def _newton(f, z0, tol=1e-14, maxit=60):
    z = complex(z0)
    for _ in range(maxit):
        d = 1e-7 * (1.0 + abs(z))
        fz = f(z)
        dfz = (f(z + d) - f(z - d)) / (2.0 * d)
        if dfz == 0:
            raise RootError("zero derivative in Newton iteration")
        step = fz / dfz
        z -= step
        if abs(step) <= tol * (1.0 + abs(z)):
            return z
    raise RootError(f"Newton did not converge from {z0}")


def _polish(z, e, iters=4):
    """A few Newton steps on the uncleared residual; keeps the best iterate.
    Near the pole at 1 - eps/2 the cleared function hides a large factor."""
    f = lambda w: dispersion_residual(w, e)
    best = z
    try:
        fbest = abs(f(z))
        for _ in range(iters):
            d = 1e-7 * (1.0 + abs(z))
            z = z - f(z) / ((f(z + d) - f(z - d)) / (2.0 * d))
            fz = abs(f(z))
            if fz < fbest:
                best, fbest = z, fz
    except PoleError:
        pass
    return best


def _grid_seeds(eps, n=61):
    re = np.linspace(0.0, 1.5, n)
    im = np.linspace(-1.0, 1.0, n)
    R, I = np.meshgrid(re, im, indexing="ij")
    F = np.abs(cleared_residual(R + 1j * I, eps))
    seeds = []
    for i in range(1, n - 1):
        for j in range(1, n - 1):
            v = F[i, j]
            if v <= F[i - 1:i + 2, j - 1:j + 2].min():
                seeds.append(complex(R[i, j], I[i, j]))
    return seeds


def find_roots(eps, radius: float = 3.0, certify: bool = True) -> DispersionRoots:
    e = as_eps(eps)
    if abs(e - 1.0) < 1e-9:
        # the two poles coincide and clearing introduces a spurious zero
        raise RootError("eps = 1 is degenerate (coincident poles); use eps != 1")
    f = lambda z: complex(cleared_residual(z, e))
    mp0, ms0 = asymptotic_roots(e)
    if e <= 0.5:
        mp = _newton(f, mp0)
        ms = _newton(f, ms0 - 0.25 * e * e)
    else:
        found = []
        for s in _grid_seeds(e):
            try:
                z = _newton(f, s)
            except RootError:
                continue
            if z.real >= -1e-12 and abs(z) < radius and all(abs(z - w) > 1e-8 for w in found):
                found.append(z)
        cplx = [z for z in found if z.imag > 1e-10]
        real = [z for z in found if abs(z.imag) <= 1e-10]
        if not cplx or not real:
            raise RootError(f"grid scan did not locate the three roots at eps={e}")
        mp = min(cplx, key=lambda z: abs(z - mp0))
        ms = min(real, key=lambda z: abs(z - ms0))
    mp, ms = _polish(mp, e), _polish(ms, e)
    if mp.imag < 0:
        mp = mp.conjugate()
    ms = complex(ms.real, 0.0) if abs(ms.imag) < 1e-12 else ms
    if not (mp.real > 0 and mp.imag > 0):
        raise RootError(f"conjugate pair not in the open right half-plane: {mp}")
    res = max(relative_residual(z, e) for z in (mp, mp.conjugate(), ms))
    count = certify_root_count(e, radius) if certify else 3
    if count != 3:
        raise RootError(f"argument principle counted {count} roots, expected 3")
    return DispersionRoots(mp, mp.conjugate(), ms, res, e, count)


def _contour(radius, n):
    # counter-clockwise boundary of {Re mu >= 0, |mu| <= R}: arc then axis
    na = n // 2
    th = np.linspace(-0.5 * np.pi, 0.5 * np.pi, na, endpoint=False)
    arc = radius * np.exp(1j * th)
    ax = 1j * np.linspace(radius, -radius, n - na, endpoint=False)
    return np.concatenate([arc, ax])


def _winding(f, pts, max_depth=30):
    """Total phase change / 2pi along the closed polygon, refining edges
    whose phase jump exceeds pi/4."""
    vals = f(pts)
    z = np.append(pts, pts[0])
    v = np.append(vals, vals[0])
    total = 0.0
    stack = [(z[i], z[i + 1], v[i], v[i + 1], 0) for i in range(len(pts))]
    while stack:
        za, zb, va, vb, depth = stack.pop()
        if va == 0 or vb == 0:
            raise RootError("contour passes through a zero")
        d = np.angle(vb / va)
        if abs(d) > 0.25 * np.pi and depth < max_depth:
            zm = 0.5 * (za + zb)
            vm = complex(f(np.array([zm]))[0])
            stack.append((za, zm, va, vm, depth + 1))
            stack.append((zm, zb, vm, vb, depth + 1))
        else:
            total += d
    return total / (2.0 * np.pi), float(np.min(np.abs(vals)))


def certify_root_count(eps, radius: float = 3.0, n0: int = 4096) -> int:
    """Zeros of the residual in {Re mu >= 0, |mu| < radius} by the argument
    principle applied to the pole-cleared residual."""
    e = as_eps(eps)
    if radius < 3.0:
        raise ValueError("radius must be >= 3")
    f = lambda z: cleared_residual(z, e)
    for attempt in range(4):
        r = radius * (1.0 + 1e-3 * attempt)
        counts = []
        n = n0
        try:
            while True:
                w, vmin = _winding(f, _contour(r, n))
                counts.append(int(round(w)))
                if abs(w - round(w)) > 1e-6:
                    raise RootError("non-integer winding number")
                if len(counts) >= 3 and counts[-1] == counts[-2] == counts[-3]:
                    return counts[-1]
                n *= 2
        except RootError:
            continue
    raise RootError("winding number did not stabilise")


def mode_coefficients(mu, eps) -> ModeCoefficients:
    """Amplitudes of (A, B, P, Q) per unit G1 for the mode e^{mu x}."""
    e = as_eps(eps)
    k, l = 1.0 - 0.5 * e, 0.5 * e
    mu = complex(mu)
    for pole in (-l, l, -k, k):
        if abs(mu - pole) < 1e-12:
            raise PoleError(f"mu={mu} within 1e-12 of coefficient pole {pole}")
    return ModeCoefficients(0.5 / (mu + l), 0.5 / (l - mu), 1.0 / (mu + k), 1.0 / (k - mu))


def omega1(mu, eps):
    """Comparison function for the roots near mu = 0."""
    e = as_eps(eps)
    return -2.0 / e + e / (e * e / 4.0 - mu * mu) + mu / (e / 2.0 - mu)


def omega2(mu, eps):
    """Comparison function for the root near mu = 1."""
    e = as_eps(eps)
    return -2.0 / e + (1.0 - mu) * (e / 2.0 + mu) / (1.0 - e / 2.0 - mu)


def omega_zeros(eps):
    """Closed-form zeros of omega1 (quadratic) and omega2 (quadratic with one
    root near 1 - eps/2 and one of size 2/eps)."""
    e = as_eps(eps)
    z1 = np.roots([2.0 / e + 1.0, e / 2.0, e / 2.0])
    k, l = 1.0 - e / 2.0, e / 2.0
    # (1-mu)(l+mu) = (2/e)(k-mu)  <=>  mu^2 + (l - 1 - 2/e) mu + (2k/e - l) = 0
    z2 = np.roots([1.0, l - 1.0 - 2.0 / e, 2.0 * k / e - l])
    return z1, z2


def fundamental_interval(roots: DispersionRoots) -> tuple[float, float]:
    """[1, e^{2 pi Re mu / Im mu}): translating x by one period multiplies L
    by the upper end."""
    mp = roots.mu_plus
    return 1.0, math.exp(2.0 * math.pi * mp.real / mp.imag)
