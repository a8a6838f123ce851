"""Closed-form regime predictions along one oscillation cycle, the mass
recursion M -> -ln(1-M), the large-x tail, and a node classifier for
marched trajectories.

Cycle bookkeeping: x_n is an upward crossing of A through A_inf with B of
order one, M_n = 2B(x_n); x_bar_n is the downward crossing of B through
B_inf that closes the kinetic stretch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .kernel_constants import constant_state

# classification thresholds (one place; orders of magnitude only)
THRESHOLDS = {
    "kinetic_g": 0.1,          # G above this: kinetic
    "kinetic_g_eps0": 1e-3,    # eps = 0: kinetic above this (absolute), tail beyond the peak
    "ode_factor": 3.0,         # Ode1: a > 3, b < 3; Ode2 mirrored
    "lv_max": 10.0,            # LV core / matching while max(a, b) < 10
    "lv_min": 0.1,             # LvMatching when min(a, b) < 0.1
    "transition_factor": 2.0,  # Transition: a, b < 1 and within a factor 2
    "b_order_one": 1.0,        # crossing x_n counted when B >= this * B_inf
}

LABELS = ("LotkaVolterraCore", "Kinetic", "Ode1", "LvMatching", "Transition", "Ode2", "Tail")


class RegimeDomainError(ValueError):
    pass


# ---------------------------------------------------------------------------
# mass recursion
# ---------------------------------------------------------------------------

def mass_map(M: float) -> float:
    if not (0.0 <= M < 1.0):
        raise RegimeDomainError(f"mass map needs M in [0, 1), got {M}")
    return -math.log1p(-M)


@dataclass
class MassSequence:
    values: list
    x_n: list = field(default_factory=list)
    x_bar: list = field(default_factory=list)

    @property
    def first_above_half(self):
        for i, m in enumerate(self.values):
            if m > 0.5:
                return i
        return None

    def is_increasing(self):
        return all(b > a for a, b in zip(self.values, self.values[1:]))

    def as_dict(self):
        return {"values": list(self.values), "x_n": list(self.x_n), "x_bar": list(self.x_bar),
                "first_above_half": self.first_above_half}


def iterate_mass(M0: float, n: int) -> MassSequence:
    """M0 and up to n further iterates (stops once an iterate reaches 1)."""
    if not (0.0 < M0 < 1.0):
        raise RegimeDomainError("M0 must lie in (0, 1)")
    vals = [float(M0)]
    for _ in range(n):
        if vals[-1] >= 1.0:
            break
        vals.append(mass_map(vals[-1]))
    return MassSequence(vals)


def steps_to_exceed(M0: float, level: float = 0.5, cap: int = 100000) -> int:
    m, k = M0, 0
    while m <= level:
        m = mass_map(m)
        k += 1
        if k > cap:
            raise RuntimeError("iteration cap reached")
    return k


# ---------------------------------------------------------------------------
# ODE regime 1 (A order one, decaying slowly; B small)
# ---------------------------------------------------------------------------

def _check_m(M, hi=0.5):
    if not (0.0 < M < hi):
        raise RegimeDomainError(f"M must lie in (0, {hi}), got {M}")


def ode1_profiles(M, eps, x):
    """(A, B, G) with origin at x_bar_n, where 2B(0)/(1-2A(0)) = eps/2."""
    _check_m(M)
    e = float(eps)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise RegimeDomainError("ode1 profiles are defined for x >= 0")
    em = np.exp(-0.5 * e * x)
    A = 0.5 * M * em
    # B = (eps/4)(1-M)^{1+2/eps} / (1 - M e^{-eps x/2})^{2/eps}, in logs
    lb = math.log(0.25 * e) + (1.0 + 2.0 / e) * math.log1p(-M) - (2.0 / e) * np.log1p(-M * em)
    B = np.exp(lb)
    G = 4.0 * A * B / (1.0 - 2.0 * A)
    if x.ndim == 0:
        return float(A), float(B), float(G)
    return A, B, G


def ode1_rhs(A, B, eps):
    return -0.5 * eps * A, -2.0 * A * B / (1.0 - 2.0 * A)


# ---------------------------------------------------------------------------
# matching with the Lotka-Volterra core and the transition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LvMatching:
    M: float
    eps: float
    E_match: float
    x_tilde: float      # x where a = 1 (origin x_bar_n = 0); t = eps (x - x_tilde)

    def a_asym(self, t):
        return np.exp(-0.5 * np.asarray(t, dtype=float))

    def b_asym(self, t):
        t = np.asarray(t, dtype=float)
        return 0.5 * np.exp((2.0 / self.eps + 1.0) * math.log1p(-self.M) + np.exp(-0.5 * t))

    def log_b_asym(self, t):
        return (math.log(0.5) + (2.0 / self.eps + 1.0) * math.log1p(-self.M)
                + np.exp(-0.5 * np.asarray(t, dtype=float)))


def lv_matching(M, eps) -> LvMatching:
    _check_m(M)
    e = float(eps)
    g_inf = constant_state(e).g_inf
    # (M/2) e^{-eps x~/2} = 2 G_inf/eps
    x_t = -(2.0 / e) * math.log(4.0 * g_inf / (e * M))
    return LvMatching(M, e, -(2.0 / e) * math.log1p(-M), x_t)


def transition_time(M, eps) -> float:
    """Rescaled time from the matching region to the line {a = b}."""
    if not (0.0 < M < 1.0):
        raise RegimeDomainError("M must lie in (0, 1)")
    return -(2.0 / float(eps)) * math.log1p(-M)


def diagonal_value(M, eps) -> float:
    """a = b on the diagonal: (1-M)^{1/eps}."""
    return math.exp(math.log1p(-M) / float(eps))


# ---------------------------------------------------------------------------
# ODE regime 2 (A small, B growing)
# ---------------------------------------------------------------------------

def ode2_profiles(M, eps, x_rel):
    """(A, B) with x_rel = x - x_star >= 0; G is close to 4AB here."""
    if not (0.0 < M < 1.0):
        raise RegimeDomainError("M must lie in (0, 1)")
    e = float(eps)
    x_rel = np.asarray(x_rel, dtype=float)
    if np.any(x_rel < 0):
        raise RegimeDomainError("ode2 profiles are defined for x_rel >= 0")
    B = 0.5 * e * np.exp(0.5 * e * x_rel)
    la = math.log(0.5 * e) + (2.0 / e) * math.log1p(-M) + (2.0 / e) * B
    if np.any(la > 700.0):
        raise OverflowError("double exponential in ode2 profile overflows")
    A = np.exp(la)
    if x_rel.ndim == 0:
        return float(A), float(B)
    return A, B


def ode2_rhs(A, B, eps):
    return A * B, 0.5 * eps * B


def ode2_exit(M, eps):
    """(x_rel, B) where A reaches eps/2; B there equals -ln(1-M)."""
    e = float(eps)
    b_end = -math.log1p(-M)
    return (2.0 / e) * math.log(b_end / (0.5 * e)), b_end


# ---------------------------------------------------------------------------
# tail
# ---------------------------------------------------------------------------

TAIL_C = 1.0 / (2.0 * math.sqrt(2.0 * math.pi))


def tail_profile(x, x_hat, eps):
    """G ~ (c e^{s/2} + (eps/4) e^{s}) e^{-e^s/2}, s = x - x_hat, c = 1/(2 sqrt(2 pi))."""
    s = np.asarray(x, dtype=float) - x_hat
    if np.any(s <= 0):
        raise RegimeDomainError("tail profile needs x > x_hat")
    with np.errstate(over="ignore"):
        out = (TAIL_C * np.exp(0.5 * s) + 0.25 * float(eps) * np.exp(s)) * np.exp(-0.5 * np.exp(s))
    return float(out) if out.ndim == 0 else out


def tail_crossover(eps) -> float:
    """s = x - x_hat where the two tail terms are equal."""
    return 2.0 * math.log(TAIL_C * 4.0 / float(eps))


def tail_r(xi, eps):
    """Algebraic factor r(xi) of h = r e^{-xi/2}: c xi^{-3/2} + eps/(4 xi)."""
    xi = np.asarray(xi, dtype=float)
    return TAIL_C * xi ** -1.5 + 0.25 * float(eps) / xi


def _phi(z):
    """(1 - e^{-z/2})/z, continued to 1/2 at z = 0."""
    return -math.expm1(-0.5 * z) / z if z > 0 else 0.5


def tail_constant_integral() -> float:
    """int_0^inf (1 - e^{-z/2}) z^{-3/2} dz (equals sqrt(2 pi))."""
    a, _ = integrate.quad(_phi, 0.0, 1.0, weight="alg", wvar=(-0.5, 0.0), epsabs=1e-14, epsrel=1e-13)
    b, _ = integrate.quad(lambda z: -math.expm1(-0.5 * z) * z ** -1.5, 1.0, np.inf,
                          epsabs=1e-14, epsrel=1e-13, limit=200)
    return a + b


def voltapp4_defect(xi, eps, delta=0.1):
    """Relative defect (rhs - r)/r of the truncated tail equation
    r(xi) = 2 xi^{-eps/2} int_0^{delta xi} r(z) r(xi - z)(1 - e^{-z/2}) z^{eps/2} dz
    for the composite r."""
    e = float(eps)
    r = lambda z: float(tail_r(z, e))
    f = lambda z: r(xi - z) * (-math.expm1(-0.5 * z)) * z ** (0.5 * e) * (TAIL_C * z ** -1.5 + 0.25 * e / z)
    # integrable z^{-1/2} singularity at 0 from the first term; QAWS also
    # samples the endpoint, so the regular factor is written without 1/z
    g = lambda z: r(xi - z) * z ** (0.5 * e) * _phi(z) * (TAIL_C + 0.25 * e * math.sqrt(z))
    v1, _ = integrate.quad(g, 0.0, min(1.0, delta * xi),
                           weight="alg", wvar=(-0.5, 0.0), epsabs=1e-14, epsrel=1e-12, limit=200)
    v2 = 0.0
    if delta * xi > 1.0:
        v2, _ = integrate.quad(f, 1.0, delta * xi, epsabs=1e-14, epsrel=1e-12, limit=400)
    rhs = 2.0 * xi ** (-0.5 * e) * (v1 + v2)
    return (rhs - r(xi)) / r(xi)


# ---------------------------------------------------------------------------
# classifier
# ---------------------------------------------------------------------------

def _crossings_up(y, level):
    """Indices i with y[i-1] < level <= y[i]."""
    y = np.asarray(y)
    return np.nonzero((y[:-1] < level) & (y[1:] >= level))[0] + 1


def _crossings_down(y, level):
    y = np.asarray(y)
    return np.nonzero((y[:-1] > level) & (y[1:] <= level))[0] + 1


def _interp_at(x, y, level, i):
    """Linear interpolation of the crossing of y through level in [i-1, i]."""
    t = (level - y[i - 1]) / (y[i] - y[i - 1])
    return x[i - 1] + t * (x[i] - x[i - 1]), t


def cycle_crossings(history, eps, start=None, b_order_one=None):
    """(x_n list, M_n list, x_bar list) on nodes from ``start`` (default:
    end of the seed)."""
    e = float(eps)
    n = history.n
    x = history.x
    A, B = history.A[:n], history.B[:n]
    s = history.n_seed if start is None else start
    if e > 0:
        cs = constant_state(e)
        a_inf, b_inf = cs.a_inf, cs.b_inf
    else:
        a_inf = b_inf = 0.0
    bo = THRESHOLDS["b_order_one"] if b_order_one is None else b_order_one
    xn, ms, xb = [], [], []
    for i in _crossings_up(A[s:], a_inf) + s:
        if i <= s:
            continue
        xc, t = _interp_at(x, A, a_inf, i)
        b = B[i - 1] + t * (B[i] - B[i - 1])
        if b >= bo * b_inf and b > 0:
            xn.append(float(xc))
            ms.append(float(2.0 * b))
    for i in _crossings_down(B[s:], b_inf) + s:
        if i <= s:
            continue
        xc, t = _interp_at(x, B, b_inf, i)
        a = A[i - 1] + t * (A[i] - A[i - 1])
        if a >= bo * a_inf:
            xb.append(float(xc))
    return xn, ms, xb


def mass_sequence(history, eps, start=None, b_order_one=None) -> MassSequence:
    xn, ms, xb = cycle_crossings(history, eps, start, b_order_one)
    return MassSequence(ms, xn, xb)


def classify(history, eps):
    """Per-node regime labels from (G, A, B); pure function of node values."""
    e = float(eps)
    n = history.n
    G, A, B = history.G[:n], history.A[:n], history.B[:n]
    T = THRESHOLDS
    labels = np.empty(n, dtype=object)
    if e == 0.0:
        i_peak = int(np.argmax(G)) if n else 0
        idx = np.arange(n)
        kin = (G >= T["kinetic_g_eps0"]) | (idx <= i_peak)
        labels[:] = "Tail"
        labels[kin] = "Kinetic"
        return labels.tolist()
    cs = constant_state(e)
    a, b = A / cs.a_inf, B / cs.b_inf
    dG = np.gradient(G) if n > 1 else np.zeros(n)
    f = T["ode_factor"]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.maximum(a / b, b / a)
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    labels[:] = "Tail"
    rules = [
        ("LotkaVolterraCore", hi < T["lv_max"]),
        ("LvMatching", (hi < T["lv_max"]) & (lo < T["lv_min"])),
        ("Transition", (hi < 1.0) & (lo > 0) & (ratio < T["transition_factor"])),
        ("Ode2", (b > f) & (a < f) & (dG >= 0)),
        ("Ode1", (a > f) & (b < f) & (dG <= 0)),
        ("Kinetic", G > T["kinetic_g"]),
    ]
    # later rules take precedence
    for name, mask in rules:
        labels[mask] = name
    bad = ~np.isfinite(G) | (B < 0) | (A < 0)
    labels[bad] = "Tail"
    return labels.tolist()


# ---------------------------------------------------------------------------
# composite predictor
# ---------------------------------------------------------------------------

@dataclass
class PredictedProfile:
    x: np.ndarray
    G: np.ndarray
    A: np.ndarray
    B: np.ndarray
    regime: list
    masses: list


def predict(eps, M0, n_cycles=3, h=0.05, kinetic_h=0.02):
    """Piecewise profile for cycles starting at x_0 = 0 with mass M0:
    kinetic G_rho on [x_n, x_bar_n], ODE regime 1 up to half the LV transit,
    ODE regime 2 up to x_{n+1}.  Stops before a cycle with M >= 1/2."""
    from .kinetic_additive import match_points, solve_kinetic

    e = float(eps)
    M = float(M0)
    _check_m(M)
    xs, Gs, As, Bs, regs = [], [], [], [], []
    masses = [M]
    x_n = 0.0
    cache = {}
    for _ in range(n_cycles):
        rho = M / (1.0 - M)
        x_hat, x_bar = match_points(M, e, x_n)
        key = round(rho, 12)
        if key not in cache:
            cache[key] = solve_kinetic(rho, h=kinetic_h)
        prof = cache[key]
        px, pG, pA, pB = prof.history.x, prof.history.G, prof.history.A, prof.history.B
        k = prof.history.n
        xx = np.arange(x_n, x_bar, h)
        s = xx - x_hat + prof.shift
        xs.append(xx)
        Gs.append(np.interp(s, px, pG[:k]))
        As.append(np.interp(s, px, pA[:k]))
        Bs.append(np.interp(s, px, pB[:k]))
        regs += ["Kinetic"] * xx.size
        lvm = lv_matching(M, e)
        t_hat = transition_time(M, e)
        x_mid = lvm.x_tilde + t_hat / e                 # relative to x_bar
        x_star = lvm.x_tilde + 2.0 * t_hat / e
        x_exit, b_end = ode2_exit(M, e)
        xx = np.arange(0.0, x_mid, h)
        A1, B1, G1 = ode1_profiles(M, e, xx)
        xs.append(x_bar + xx)
        Gs.append(G1)
        As.append(A1)
        Bs.append(B1)
        regs += ["Ode1"] * xx.size
        xx = np.arange(x_mid, x_star + x_exit, h)
        # the ode2 formulas continue back to the diagonal (x_rel < 0)
        B2 = 0.5 * e * np.exp(0.5 * e * (xx - x_star))
        A2 = np.exp(math.log(0.5 * e) + (2.0 / e) * math.log1p(-M) + (2.0 / e) * B2)
        xs.append(x_bar + xx)
        Gs.append(4.0 * A2 * B2)
        As.append(A2)
        Bs.append(B2)
        regs += ["Ode2"] * xx.size
        x_n = x_bar + x_star + x_exit
        M = mass_map(M)
        masses.append(M)
        if M >= 0.5:
            break
    return PredictedProfile(np.concatenate(xs), np.concatenate(Gs), np.concatenate(As),
                            np.concatenate(Bs), regs, masses)
