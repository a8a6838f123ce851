"""The eps = 0 (additive kernel) problem

    A' = G/2,  B' = -G/2,  P' = -P + G,  Q' = Q - G,   G = 4AB + PQ + J0[G],

with J0 the memory integral for the kernel e^{y-z} + 1.  Its positive
solutions G_rho, rho in (0, 2), have mass rho/(1+rho); G_1 is explicit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special
from scipy.interpolate import CubicSpline

from . import volterra_march as vm
from .volterra_march import MarchParams, TrajectoryHistory

_C1 = 0.5 / math.sqrt(2.0 * math.pi)
SHIFT_RHO1 = math.log(2.0)   # G_1(x) = (series profile at rho=1)(x + ln 2)
RHO1_BAND = 1e-3
EXP_CLIP = 700.0
ROOT_HALF_PI = math.sqrt(0.5 * math.pi)


def g_one(x):
    """(1/2)(2 pi)^{-1/2} e^{x/2} e^{-e^x/2}."""
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):
        out = _C1 * np.exp(0.5 * x - 0.5 * np.exp(x))
    return float(out) if out.ndim == 0 else out


def g_one_parts(x):
    """(A, B, P, Q) for G_1 in closed form (u = e^{x/2}); P by its power
    series for small u where the closed form cancels."""
    u = math.exp(0.5 * x)
    v = u / math.sqrt(2.0)
    A = 0.25 * math.erf(v)
    B = 0.25 * math.erfc(v)
    c2 = 2.0 * _C1
    if u > 0.5:
        P = c2 * math.exp(-x) * (ROOT_HALF_PI * math.erf(v) - u * math.exp(-0.5 * u * u))
    else:
        # int_0^u t^2 e^{-t^2/2} dt as a power series
        tot, term, k = 0.0, u ** 3, 0
        while abs(term) > 1e-18 * tot or k == 0:
            tot += term / (2 * k + 3)
            k += 1
            term *= -0.5 * u * u / k
        P = c2 * math.exp(-x) * tot
    Q = c2 * math.exp(x - 0.5 * u * u) * (1.0 / u - ROOT_HALF_PI * special.erfcx(v))
    return A, B, P, Q


def mass(rho):
    return rho / (1.0 + rho)


def _check_rho(rho):
    if not (0.0 < rho < 2.0):
        raise ValueError(f"rho must lie in (0, 2), got {rho}")


def left_tail_coefficient(rho):
    """Amplitude of e^{rho x/(1+rho)} as x -> -inf."""
    _check_rho(rho)
    s = mass(rho)
    return s * math.sin(math.pi * s) * math.gamma(1.0 / (1.0 + rho)) / (math.pi * (1.0 + rho))


def right_tail_coefficient(rho):
    """Amplitude of e^{-rho x} as x -> +inf (zero at rho = 1)."""
    _check_rho(rho)
    return mass(rho) * math.gamma(1.0 + rho) * math.sin(math.pi * (1.0 - rho)) / math.pi


def _series_terms(rho, kmax=40):
    s = mass(rho)
    ks = np.arange(1, kmax + 1)
    with np.errstate(over="ignore"):
        c = np.array([s / math.pi * (-1) ** (k - 1) / math.factorial(k)
                      * math.gamma(1.0 + k - k * s) * math.sin(k * math.pi * s) for k in ks])
    return s, ks, c


def series_state(rho, x, kmax=40):
    """(G, A, B, P, Q) from the small-e^x expansion of G_rho; accurate where
    e^{rho x/(1+rho)} is small.  Q is the slow (non-growing) branch."""
    s, ks, c = _series_terms(rho, kmax)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    E = np.exp(np.outer(x, ks) * s)
    keep = np.abs(c) > 0
    keep &= np.abs(np.sin(ks * math.pi * s)) > 1e-14
    ks, c, E = ks[keep], c[keep], E[:, keep]
    G = E @ c
    A = E @ (c / (2.0 * ks * s))
    P = E @ (c / (1.0 + ks * s))
    Q = E @ (c / (1.0 - ks * s))
    B = 0.5 * s - A
    return G, A, B, P, Q


@dataclass
class KineticProfile:
    rho: float
    history: TrajectoryHistory
    mass: float
    shift: float = 0.0               # profile is G_rho(x + shift); ln 2 on the G_1 branch
    diagnostics: dict = field(default_factory=dict)

    def spline(self, name="G"):
        x, *_ = self.history.values()
        return CubicSpline(x, getattr(self.history, name)[:self.history.n])


def solve_kinetic(rho, window=(-25.0, None), h=0.01, W=20.0, quad_tol=1e-10) -> KineticProfile:
    """March G_rho at eps = 0 from the left-tail expansion at x0 = window[0].

    The seed is the small-e^x series of G_rho on [x0 - W - 3h, x0], which
    carries the left-tail asymptotics to all orders that matter there.
    |rho - 1| < 1e-3 takes the explicit G_1 branch (profile normalised so the
    marched G equals g_one)."""
    _check_rho(rho)
    explicit = abs(rho - 1.0) < RHO1_BAND
    r = 1.0 if explicit else float(rho)
    shift = SHIFT_RHO1 if explicit else 0.0
    x0, x_end = window
    if x_end is None:
        x_end = 6.0 if explicit else min(max(30.0 / r, 10.0), 80.0)
    params = MarchParams(0.0, step_h=h, window=(x0, x_end), history_truncation=W,
                         quad_tol=quad_tol, control=False)
    tpl = params.template
    nseed = int(math.ceil(params.seed_depth / h)) + 1
    x_first = x0 - (nseed - 1) * h
    n_total = int(math.ceil((x_end - x_first) / h)) + 16
    hist = TrajectoryHistory.empty(0.0, h, x_first, n_total, n_seed=nseed)
    xs = x_first + h * np.arange(nseed)
    for arr, col in zip((hist.G, hist.A, hist.B, hist.P, hist.Q), series_state(r, xs + shift)):
        arr[:nseed] = col
    hist.n = nseed
    hist.regime = ["Kinetic"] * nseed
    hist.events = {"x0": x0}
    if tpl.M.shape[0] > nseed:
        raise vm.SeedError("seed shorter than the J window")
    # the profile decays at the window end, so the fast Q mode is removed by
    # relaxation against the backward Q solve instead of segment control
    sweeps = vm.relax_window(hist, x_end, params, q_end=lambda g: g / (1.0 + r))
    vm.recompute_residual(hist, params)
    vm.record_events(hist)
    n = hist.n
    G = hist.G[:n]
    # mass = 2 A(x_end) plus the exponential right tail beyond the window
    tail = G[-1] / r if (not explicit and G[-1] > 0) else 0.0
    m = 2.0 * hist.A[n - 1] + tail
    prof = KineticProfile(r, hist, m, shift)
    prof.diagnostics = {"right_slope": right_slope(prof), "sweeps": sweeps, "max_residual":
                        float(np.max(hist.residual[nseed:n])) if n > nseed else 0.0}
    from .regime_asymptotics import classify
    hist.regime = list(classify(hist, 0.0))
    return prof


def right_slope(profile: KineticProfile, g_cut=1e-3):
    """Fitted d ln G/dx on the part of the right tail where G < g_cut."""
    x, G = profile.history.x, profile.history.G[:profile.history.n]
    i_max = int(np.argmax(G))
    sel = np.arange(G.size) > i_max
    sel &= (G < g_cut) & (G > 1e-12 * G[i_max])
    if sel.sum() < 10:
        return float("nan")
    return float(np.polyfit(x[sel], np.log(G[sel]), 1)[0])


# ---------------------------------------------------------------------------
# alpha family
# ---------------------------------------------------------------------------

class _Base:
    """Callable G, Q of a base profile (exact for rho = 1)."""

    def __init__(self, profile: KineticProfile | None, rho):
        self.rho = rho
        self.profile = profile
        if profile is None:
            self.x_lo, self.x_hi = -60.0, 8.0
            self.m = 0.5
        else:
            hist = profile.history
            x = hist.x
            lo = hist.n_seed - 1
            self._g = CubicSpline(x[lo:], hist.G[lo:hist.n])
            self._q = CubicSpline(x[lo:], hist.Q[lo:hist.n])
            self.x_lo, self.x_hi = float(x[lo]), float(x[-1])
            self.m = mass(profile.rho)

        self.b_inf = 0.5 * self.m

    def g(self, x):
        if self.profile is None:
            return g_one(x)
        if x < self.x_lo:
            return float(series_state(self.rho, x + self.profile.shift)[0][0])
        return float(self._g(x)) if x <= self.x_hi else 0.0

    def q(self, x):
        if self.profile is None:
            return g_one_parts(x)[3]
        if x < self.x_lo:
            return float(series_state(self.rho, x + self.profile.shift)[4][0])
        return float(self._q(x)) if x <= self.x_hi else 0.0


@dataclass
class AlphaFamily:
    rho: float
    alpha: float
    x: np.ndarray
    G: np.ndarray
    A: np.ndarray
    B: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    b_inf: float
    clipped: bool = False
    base: object = None


def _quad(f, a, b):
    return integrate.quad(f, a, b, epsabs=1e-15, epsrel=1e-12, limit=400)[0]


def alpha_family(base: KineticProfile | None, alpha: float, x=None, rho=1.0) -> AlphaFamily:
    """G^a = G e^{a e^x} and the matching A^a, B^a, P^a, Q^a by quadrature.

    ``base=None`` uses the explicit G_1.  Integrals are taken from -inf
    (via xi = e^x near the left end) with adaptive quadrature so that the
    family is as accurate as its base."""
    bs = _Base(base, rho if base is None else base.rho)
    if x is None:
        x = np.linspace(-8.0, 6.0, 141)
    x = np.asarray(x, dtype=float)
    clipped = False
    if alpha > 0:
        xmax = math.log(EXP_CLIP / alpha)
        if x[-1] > xmax:
            x = x[x <= xmax]
            clipped = True
    w = lambda y: math.exp(alpha * math.exp(y))
    ga = lambda y: bs.g(y) * w(y)
    out = {k: np.empty(x.size) for k in "GABPQ"}
    # running integrals over consecutive grid intervals
    I_g = 0.5 * _quad(ga, -80.0, x[0])
    I_q = _quad(lambda y: w(y) * bs.q(y), -80.0, x[0])
    I_p = _quad(lambda y: ga(y) * math.exp(y - x[0]), -80.0, x[0])
    for i, xi in enumerate(x):
        if i > 0:
            a, b = x[i - 1], xi
            I_g += 0.5 * _quad(ga, a, b)
            I_q += _quad(lambda y: w(y) * bs.q(y), a, b)
            I_p = I_p * math.exp(a - b) + _quad(lambda y: ga(y) * math.exp(y - b), a, b)
        out["G"][i] = ga(xi)
        out["A"][i] = I_g
        out["B"][i] = bs.b_inf - I_g
        out["P"][i] = I_p
        out["Q"][i] = bs.q(xi) * w(xi) + alpha * math.exp(xi) * (1.0 - I_q)
    return AlphaFamily(bs.rho, alpha, x, out["G"], out["A"], out["B"], out["P"], out["Q"],
                       bs.b_inf, clipped, bs)


def j0_integral(g, x, W=60.0):
    """J0[G](x) = int int_R (e^{y-z} + 1) G(x+y) G(x+z) dy dz by nested quadrature."""
    def inner(y):
        zlo = math.log(-math.expm1(y)) if y < -1e-300 else -np.inf
        zlo = max(zlo, -W)
        f = lambda z: (math.exp(y - z) + 1.0) * g(x + z)
        return _quad(f, zlo, 0.0) * g(x + y)

    return integrate.quad(inner, -W, 0.0, epsabs=1e-16, epsrel=1e-11, limit=400,
                          points=[-math.log(2.0)])[0]


def family_residual(fam: AlphaFamily, idx=None):
    """Max over the chosen nodes of the identity defect and the integrated
    ODE defects of A, B, P, Q (between consecutive nodes), each divided by
    max |G^a| on the grid."""
    bs = fam.base
    w = lambda y: math.exp(fam.alpha * math.exp(y))
    ga = lambda y: bs.g(y) * w(y)
    if idx is None:
        idx = range(0, fam.x.size, max(1, fam.x.size // 12))
    scale = float(np.max(np.abs(fam.G)))
    ident = 0.0
    for i in idx:
        xi = fam.x[i]
        jv = j0_integral(ga, xi)
        d = fam.G[i] - 4 * fam.A[i] * fam.B[i] - fam.P[i] * fam.Q[i] - jv
        ident = max(ident, abs(d))
    ode = 0.0
    for i in range(1, fam.x.size):
        a, b = fam.x[i - 1], fam.x[i]
        ig = _quad(ga, a, b)
        ode = max(ode, abs(fam.A[i] - fam.A[i - 1] - 0.5 * ig))
        ode = max(ode, abs(fam.B[i] - fam.B[i - 1] + 0.5 * ig))
        ode = max(ode, abs(fam.P[i] - fam.P[i - 1] * math.exp(a - b)
                           - _quad(lambda y: ga(y) * math.exp(y - b), a, b)))
        ode = max(ode, abs(fam.Q[i] - fam.Q[i - 1] * math.exp(b - a)
                           + _quad(lambda y: ga(y) * math.exp(b - y), a, b)))
    return {"identity": ident / scale, "ode": ode / scale, "scale": scale}


@dataclass(frozen=True)
class SignChange:
    kind: str          # "QVanishes", "BVanishes", "NoCrossing", "GridTooShort"
    x: float | None = None
    other: float | None = None   # crossing of the other function, if any


def _first_zero(x, y, f=None):
    neg = np.nonzero(y < 0)[0]
    if not neg.size:
        return None
    i = int(neg[0])
    if i == 0:
        return float(x[0])
    a, b = x[i - 1], x[i]
    if f is None:
        return float(a + (b - a) * y[i - 1] / (y[i - 1] - y[i]))
    from scipy.optimize import brentq
    return float(brentq(f, a, b, xtol=1e-12))


def _q_alpha(fam: AlphaFamily, x):
    """Q^a at an arbitrary abscissa (for root refinement)."""
    bs = fam.base
    w = lambda y: math.exp(fam.alpha * math.exp(y))
    iq = _quad(lambda y: w(y) * bs.q(y), -80.0, x)
    return bs.q(x) * w(x) + fam.alpha * math.exp(x) * (1.0 - iq)


def _b_alpha(fam: AlphaFamily, x):
    bs = fam.base
    w = lambda y: math.exp(fam.alpha * math.exp(y))
    return fam.b_inf - 0.5 * _quad(lambda y: bs.g(y) * w(y), -80.0, x)


def sign_change_scan(fam: AlphaFamily) -> SignChange:
    """First zero among Q^a, B^a (refined by root bracketing)."""
    xq = _first_zero(fam.x, fam.Q, lambda t: _q_alpha(fam, t))
    xb = _first_zero(fam.x, fam.B, lambda t: _b_alpha(fam, t))
    if xq is None and xb is None:
        if fam.alpha == 0.0:
            return SignChange("NoCrossing")
        # a nonzero alpha must produce a crossing; the grid did not reach it
        return SignChange("GridTooShort", float(fam.x[-1]))
    if xb is None or (xq is not None and xq < xb):
        return SignChange("QVanishes", xq, xb)
    return SignChange("BVanishes", xb, xq)


# ---------------------------------------------------------------------------
# auxiliary operator and matching points
# ---------------------------------------------------------------------------

def intode_operator(F, xi, lam):
    """AF(xi) = lam e^{lam xi} int_0^xi e^{-lam eta} F(eta) d eta + F(xi)
    on the sample grid xi (starting at 0), cumulative Simpson quadrature."""
    F = np.asarray(F, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if lam == 0:
        return F.copy()
    inner = integrate.cumulative_simpson(np.exp(-lam * xi) * F, x=xi, initial=0.0)
    return lam * np.exp(lam * xi) * inner + F


def match_points(M, eps, x_n):
    """(x_hat, x_bar): centre of the kinetic profile G_rho matched to
    A(x_n) = eps/4 from the left tail and the exit point where the right tail
    gives B = eps/4; rho = M/(1-M)."""
    if not (0.0 < M < 1.0):
        raise ValueError("M must lie in (0, 1)")
    eps = float(eps)
    rho = M / (1.0 - M)
    if rho >= 1.0 - RHO1_BAND:
        raise ValueError("matching needs rho < 1 (sin(pi(1-rho)) factor vanishes at rho=1)")
    s = mass(rho)
    c1 = 0.5 * math.sin(math.pi * s) * math.gamma(1.0 / (1.0 + rho)) / (math.pi * (1.0 + rho))
    c2 = 0.5 / (1.0 + rho) * math.gamma(1.0 + rho) * math.sin(math.pi * (1.0 - rho)) / math.pi
    target = 0.25 * eps
    if c1 <= 0 or c2 <= 0:
        raise ValueError("degenerate matching constant")
    x_hat = x_n - math.log(target / c1) / s
    x_bar = x_hat + math.log(c2 / target) / rho
    return x_hat, x_bar
