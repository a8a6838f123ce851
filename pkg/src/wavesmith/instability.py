"""Fast-mode (dormant instability) toolbox.

Once Q separates from G as G(x*)(1 +/- e^{k(x - x*)}), k = 1 - eps/2, the
minus branch drives Q through zero at x*, and the plus branch makes Q of
order one at x1 = x* - ln G(x*).  Beyond x1, with t = x - x1:

    Q = e^t,  p_hat = e^{Q - t}(1 - e^{-Q}),  p_hat Q = e^{e^t} - 1,

and a_hat, b_hat respond to the source p_hat Q until b_hat hits zero at
t_eps, where e^{e^t} e^{-t} = 1/(2 A1).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special
from scipy.optimize import newton

from .kernel_constants import as_eps, constant_state

EXP_GUARD = 300.0        # beyond e^t = this, integrals are carried in log space


@dataclass(frozen=True)
class TriggerSpec:
    x_star: float
    sign: str            # "plus" or "minus"
    G_star: float
    A1: float
    B1: float

    def __post_init__(self):
        if self.sign not in ("plus", "minus"):
            raise ValueError("sign must be 'plus' or 'minus'")
        if not self.G_star > 0:
            raise ValueError("G_star must be positive")
        if not (self.A1 > 0 and self.B1 > 0):
            raise ValueError("A1, B1 must be positive")

    @property
    def P1(self):
        return 4.0 * self.A1 * self.B1

    @property
    def x1(self):
        """Abscissa where G_star e^{x - x_star} = 1."""
        return self.x_star - math.log(self.G_star)


def q_template(x, spec: TriggerSpec, eps):
    k = 1.0 - 0.5 * as_eps(eps)
    s = 1.0 if spec.sign == "plus" else -1.0
    x = np.asarray(x, dtype=float)
    out = spec.G_star * (1.0 + s * np.exp(k * (x - spec.x_star)))
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# t_eps and the fast system
# ---------------------------------------------------------------------------

def t_eps(A1: float) -> float:
    """Larger root of e^t - t = ln(1/(2 A1)), by Newton from ln ln(1/(2 A1))."""
    if not 0 < A1 < 0.5 / math.e:
        raise ValueError("t_eps needs 0 < A1 < 1/(2e)")
    L = math.log(0.5 / A1)
    f = lambda t: math.exp(t) - t - L
    df = lambda t: math.exp(t) - 1.0
    t0 = max(math.log(L), 0.5)
    return float(newton(f, t0, fprime=df, tol=1e-14, maxiter=100))


def t_eps_iterated_log(A1: float) -> float:
    return math.log(math.log(0.5 / A1))


def _ein(z):
    """int_0^z (e^u - 1)/u du."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = z < 1.0
    zs = z[small]
    term = zs.copy()
    acc = zs.copy()
    for k in range(2, 30):
        term = term * zs / k
        acc = acc + term / k
    out[small] = acc
    zl = z[~small]
    out[~small] = special.expi(zl) - np.euler_gamma - np.log(zl)
    return out


def _source_integral(t0, t1, c):
    """int_{t0}^{t1} e^{c s} (e^{e^s} - 1) ds for t1 with e^{t1} <= EXP_GUARD."""
    f = lambda s: math.exp(c * s) * math.expm1(math.exp(s))
    return integrate.quad(f, t0, t1, epsabs=0.0, epsrel=1e-12, limit=200)[0]


def _log_source_tail(t, c):
    """ln int_0^t e^{c s}(e^{e^s}-1) ds for large e^t (asymptotic, two terms)."""
    U = math.exp(t)
    # int^U u^{c-1} e^u du ~ U^{c-1} e^U (1 - (c-1)/U)
    return (c - 1.0) * t + U + math.log1p(-(c - 1.0) / U)


@dataclass
class FastProfiles:
    t: np.ndarray
    a_hat: np.ndarray
    b_hat: np.ndarray
    p_hat: np.ndarray
    Q: np.ndarray
    log_p_hat: np.ndarray
    pq: np.ndarray           # p_hat * Q = e^{e^t} - 1
    spec: TriggerSpec
    eps: float

    def b_zero(self):
        """First zero of b_hat on the grid (linear interpolation), or None."""
        b = self.b_hat
        idx = np.nonzero(b <= 0)[0]
        if not idx.size:
            return None
        i = int(idx[0])
        if i == 0:
            return float(self.t[0])
        return float(self.t[i - 1] + (self.t[i] - self.t[i - 1]) * b[i - 1] / (b[i - 1] - b[i]))

    def G(self):
        """Synthetic G = P1 (a_hat b_hat + p_hat Q) (nonlocal term dropped)."""
        return self.spec.P1 * (self.a_hat * self.b_hat + self.pq)


def fast_system(t_grid, spec: TriggerSpec, eps) -> FastProfiles:
    """Reduced fast dynamics on t = x - x1.

    t <= 0: a_hat, b_hat stay at 1 up to the accumulated source; t > 0 adds
    the eps/2 relaxation terms, started from the t = 0 values."""
    e = as_eps(eps)
    t = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t) <= 0):
        raise ValueError("t grid must be increasing")
    et = np.exp(np.minimum(t, 700.0))
    Q = et
    with np.errstate(over="ignore"):
        pq = np.expm1(np.minimum(et, 709.0))
        pq[et > 709.0] = np.inf
    # log p_hat = Q - t + log(1 - e^{-Q})
    log_p = et - t + np.log(-np.expm1(-et))
    with np.errstate(over="ignore"):
        p_hat = np.exp(log_p)
    A1, B1 = spec.A1, spec.B1
    a = np.empty_like(t)
    b = np.empty_like(t)
    neg = t <= 0
    S = _ein(et[neg])                      # int_{-inf}^t (e^{e^s} - 1) ds
    a[neg] = 1.0 + 2.0 * B1 * S
    b[neg] = 1.0 - 2.0 * A1 * S
    a0 = 1.0 + 2.0 * B1 * float(_ein(np.array([1.0]))[0])
    b0 = 1.0 - 2.0 * A1 * float(_ein(np.array([1.0]))[0])
    pos = np.nonzero(~neg)[0]
    Ip = Im = 0.0
    prev = 0.0
    h = 0.5 * e
    for i in pos:
        ti = t[i]
        if math.exp(ti) <= EXP_GUARD:
            Ip += _source_integral(prev, ti, h)
            Im += _source_integral(prev, ti, -h)
            prev = ti
            a[i] = math.exp(-h * ti) * (a0 + 2.0 * B1 * Ip)
            b[i] = math.exp(h * ti) * (b0 - 2.0 * A1 * Im)
        else:
            la = _log_source_tail(ti, h)
            lb = _log_source_tail(ti, -h)
            a[i] = math.exp(min(-h * ti + math.log(2.0 * B1) + la, 709.0))
            b[i] = -math.exp(min(h * ti + math.log(2.0 * A1) + lb, 709.0))
    return FastProfiles(t, a, b, p_hat, Q, log_p, pq, spec, e)


def a_hat_bound_constant(prof: FastProfiles, t_max=None):
    """Smallest C with a_hat <= 1 + C B1 p_hat on t in [0, t_max]."""
    t_max = t_eps(prof.spec.A1) if t_max is None else t_max
    sel = (prof.t >= 0) & (prof.t <= t_max)
    excess = prof.a_hat[sel] - 1.0
    return float(np.max(excess / (prof.spec.B1 * prof.p_hat[sel])))


# ---------------------------------------------------------------------------
# mollifier
# ---------------------------------------------------------------------------

def mollifier_delta(A1: float) -> float:
    return math.exp(-t_eps(A1))


def mollifier_profile(t, A1: float):
    """(1/d) e^{(t - t_eps)/d}, d = e^{-t_eps}."""
    if not 0 < A1 < 0.5:
        raise ValueError("A1 must lie in (0, 1/2)")
    te = t_eps(A1)
    d = math.exp(-te)
    t = np.asarray(t, dtype=float)
    with np.errstate(over="ignore"):
        out = np.exp((t - te) / d) / d
    return float(out) if out.ndim == 0 else out


def mollifier_mass(A1: float, t_lo=-np.inf) -> float:
    """Closed-form integral of the mollifier over [t_lo, t_eps]."""
    if t_lo == -np.inf:
        return 1.0
    te = t_eps(A1)
    return float(-math.expm1((t_lo - te) / math.exp(-te)))


def mollifier_gap(A1: float, width: float = 1.0) -> float:
    """Relative gap between the masses of 2 A1 p_hat Q and the mollifier on
    [t_eps - width, t_eps]; pointwise the two differ by large factors away
    from t_eps, only their integrals are comparable."""
    te = t_eps(A1)
    src = 2.0 * A1 * _source_integral(te - width, te, 0.0)
    mol = mollifier_mass(A1, te - width)
    return abs(src - mol) / mol


# ---------------------------------------------------------------------------
# nonlocal term bookkeeping
# ---------------------------------------------------------------------------

def synthetic_history(spec: TriggerSpec, eps, h: float = 0.01, T: float = 30.0, W: float = 20.0):
    """TrajectoryHistory built from the fast profiles on [x1 - T - W, x1 + t_eps]."""
    from .volterra_march import TrajectoryHistory
    te = t_eps(spec.A1)
    t = np.arange(-T - W, te + h, h)
    prof = fast_system(t, spec, eps)
    hist = TrajectoryHistory.empty(as_eps(eps), h, spec.x1 + t[0], t.size)
    hist.G[:t.size] = prof.G()
    hist.A[:t.size] = spec.A1 * prof.a_hat
    hist.B[:t.size] = spec.B1 * prof.b_hat
    hist.P[:t.size] = spec.P1 * prof.p_hat
    hist.Q[:t.size] = prof.Q
    hist.n = t.size
    return hist, prof


@dataclass
class NonlocalReport:
    ratio_a: float       # (J/A1) / (B1 p_hat Q)
    ratio_b: float       # (J/B1) / (A1 p_hat Q)
    ratio_p: float       # (J/P1) / (p_hat Q)
    bound_constant: float   # max J / [B1 (A1 + mollifier * indicator)]
    x: np.ndarray
    J: np.ndarray

    def as_dict(self):
        return {"ratio_a": self.ratio_a, "ratio_b": self.ratio_b, "ratio_p": self.ratio_p,
                "bound_constant": self.bound_constant}


def nonlocal_bound_check(history, spec: TriggerSpec, eps, n_nodes: int = 12, R: float = 4.0,
                         quad_tol: float = 1e-6) -> NonlocalReport:
    """J[G] by quadrature on [x1, x1 + t_eps] against the non-local
    inequalities; ratios are maxima over the sampled nodes."""
    from .volterra_march import j_integral
    e = as_eps(eps)
    te = t_eps(spec.A1)
    xs = np.linspace(spec.x1, spec.x1 + te, n_nodes)
    if not np.any(history.G[:history.n]):
        z = np.zeros_like(xs)
        return NonlocalReport(0.0, 0.0, 0.0, 0.0, xs, z)
    with warnings.catch_warnings():
        # the steep e^{e^t} growth trips quad's roundoff detector; values agree
        # across tolerances 1e-6 .. 1e-8 to six digits
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        J = np.array([j_integral(history, float(x), e, quad_tol) for x in xs])
    t = xs - spec.x1
    pq = np.expm1(np.exp(t))
    A1, B1, P1 = spec.A1, spec.B1, spec.P1
    ra = np.max(J / A1 / (B1 * pq))
    rb = np.max(J / B1 / (A1 * pq))
    rp = np.max(J / P1 / pq)
    ind = (t >= te - R) & (t <= te)
    moll = mollifier_profile(t, A1)
    bound = B1 * (A1 + moll * ind)
    return NonlocalReport(float(ra), float(rb), float(rp), float(np.max(J / bound)), xs, J)


def constant_state_ratio(eps, quad_tol: float = 1e-12) -> float:
    """J/(4AB) at the constant state: O(eps)."""
    cs = constant_state(eps)
    j = cs.g_inf - 4 * cs.a_inf * cs.b_inf - cs.p_inf * cs.q_inf
    return j / (4 * cs.a_inf * cs.b_inf)


# ---------------------------------------------------------------------------
# amplitude transmission through a kinetic stretch, LV confinement
# ---------------------------------------------------------------------------

def amplitude_out(alpha: float, M: float) -> float:
    """Coefficient of e^t in Q - G after the kinetic stretch."""
    return alpha * (1.0 - M)


def one_cycle_confinement(E: float, eps, n_phase: int = 12):
    """Along the leading LV background, follow (a, b) from x* to x1 with
    G(x*) = G_inf a b; returns (min a(x1)/a(x*), max b(x1)/b(x*)) over
    starting phases on the contour of energy E."""
    from scipy.integrate import solve_ivp
    from .lotka_volterra import trace_cycle

    e = as_eps(eps)
    cs = constant_state(e)
    orbit = trace_cycle(E)
    idx = np.linspace(0, orbit.contour.shape[0] - 1, n_phase, endpoint=False).astype(int)
    ra, rb = np.inf, 0.0
    rhs = lambda u, y: [0.5 * (math.exp(y[1]) - 1.0), 0.5 * (1.0 - math.exp(y[0]))]
    for i in idx:
        a, b = orbit.contour[i]
        g_star = cs.g_inf * a * b
        du = -e * math.log(g_star)          # u = eps x
        sol = solve_ivp(rhs, (0.0, du), [math.log(a), math.log(b)], method="DOP853",
                        rtol=1e-10, atol=1e-12)
        a1, b1 = np.exp(sol.y[:, -1])
        ra = min(ra, a1 / a)
        rb = max(rb, b1 / b)
    return float(ra), float(rb)


# ---------------------------------------------------------------------------
# trigger monitor (used on marched trajectories)
# ---------------------------------------------------------------------------

def trigger_monitor(history, eps, threshold: float = 0.1):
    """Locate where the dormant amplitude d = Q - G/(1 - eps/2) first exceeds
    ``threshold`` * G; report its sign branch and the instability type from
    the regime there (Type I in a kinetic stretch, Type II otherwise)."""
    e = float(eps)
    k = 1.0 - 0.5 * e
    n0, n = history.n_seed, history.n
    G, Q = history.G[n0:n], history.Q[n0:n]
    d = Q - G / k
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.abs(d) / np.abs(G)
    idx = np.nonzero(rel > threshold)[0]
    if not idx.size:
        return None
    i = n0 + int(idx[0])
    regime = history.regime[i] if len(history.regime) > i else ""
    return {"x": float(history.x[i]), "sign": "plus" if d[idx[0]] > 0 else "minus",
            "type": "I" if regime == "Kinetic" else "II", "regime": regime}
