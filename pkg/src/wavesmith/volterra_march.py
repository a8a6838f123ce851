"""Forward march of the Volterra-like system

    A' = -lam A + G/2,   B' = lam B - G/2,   P' = -kap P + G,   Q' = kap Q - G,
    G  = 4AB + PQ + J[G],

with kap = 1 - eps/2, lam = eps/2.  A, B, P, Q advance by the exact
integrating factor with a piecewise-linear source; G at the new node solves
the identity, which is quadratic in G once the J template is fixed.

The Q equation carries a fast growing mode (rate close to kap).  Round-off
and seeding errors excite it, so long marches keep Q on the slow manifold by
adjusting Q at the start of overlapping look-ahead segments (a continuous
form of tuning the fast amplitude C*; see ``advance_to``).
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .jquad import LN2, build_template, discrete_g_inf
from .kernel_constants import ConstantState, as_eps, g_infinity

if os.environ.get("WAVESMITH_PURE_PYTHON") == "1":
    from . import _march_py as _core
else:
    try:
        from . import _march_core as _core
    except ImportError:  # extension not built
        from . import _march_py as _core

BACKEND = "compiled" if _core.__name__.endswith("_march_core") else "python"

OK, GUARD, PICARD_FAIL, NONFINITE = 0, 1, 2, 3
MAX_PICARD = 50
OVERFLOW_GUARD = 1e6


class MarchError(RuntimeError):
    """Picard non-convergence or a non-finite value inside the march."""


class SeedError(ValueError):
    pass


@dataclass(frozen=True)
class MarchParams:
    eps: float
    step_h: float = 0.05
    window: tuple = (0.0, 10.0)
    seed_depth: float | None = None
    quad_tol: float = 1e-10
    picard_tol: float = 1e-13
    history_truncation: float = 20.0
    control: bool = True          # keep Q on the slow manifold
    stop_on_sign: bool = False

    def __post_init__(self):
        e = float(self.eps)
        if not (0.0 <= e < 2.0):
            raise ValueError("eps must lie in [0, 2) (0 is the additive kernel)")
        object.__setattr__(self, "eps", e)
        if not self.step_h > 0:
            raise ValueError("step_h must be positive")
        if not (0 < self.quad_tol <= 1e-6 and 0 < self.picard_tol <= 1e-6):
            raise ValueError("quad_tol and picard_tol must lie in (0, 1e-6]")
        if self.history_truncation < 20:
            raise ValueError("history_truncation W must be >= 20")
        x0, x1 = self.window
        if not x1 > x0:
            raise ValueError("window must be increasing")
        object.__setattr__(self, "window", (float(x0), float(x1)))
        depth = self.seed_depth
        if depth is None:
            depth = self.history_truncation + 3 * self.step_h
        if depth < self.history_truncation + 2 * self.step_h:
            raise ValueError("seed_depth must cover the J window (>= W + 2h)")
        object.__setattr__(self, "seed_depth", float(depth))

    @property
    def template(self):
        return build_template(self.eps, self.step_h, self.history_truncation, _ng(self.quad_tol))


def _ng(quad_tol):
    return 4 if quad_tol >= 1e-11 else 6


@dataclass(frozen=True)
class SeedSpec:
    L: float
    c_star: float = 0.0
    x0: float | None = None   # None: deepest point allowed by the amplitude bound
    phi: float = 0.0

    def __post_init__(self):
        if self.phi != 0.0:
            raise ValueError("phi is fixed to 0 (absorbed by translation)")


@dataclass
class TrajectoryHistory:
    eps: float
    h: float
    x_first: float
    G: np.ndarray
    A: np.ndarray
    B: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    residual: np.ndarray
    n: int                       # number of valid nodes
    n_seed: int                  # nodes [0, n_seed) come from the seed formula
    regime: list = field(default_factory=list)
    events: dict = field(default_factory=dict)
    control_log: list = field(default_factory=list)

    @classmethod
    def empty(cls, eps, h, x_first, capacity, n_seed=0):
        z = lambda: np.zeros(capacity)
        return cls(eps, h, x_first, z(), z(), z(), z(), z(), z(), 0, n_seed)

    @property
    def x(self):
        return self.x_first + self.h * np.arange(self.n)

    @property
    def x_head(self):
        return self.x_first + self.h * (self.n - 1)

    def values(self):
        """(x, G, A, B, P, Q, residual) trimmed to the valid nodes."""
        n = self.n
        return (self.x, self.G[:n], self.A[:n], self.B[:n], self.P[:n], self.Q[:n],
                self.residual[:n])

    def index_of(self, x):
        return int(round((x - self.x_first) / self.h))

    def reserve(self, capacity):
        if capacity <= self.G.size:
            return
        cap = max(capacity, 2 * self.G.size)
        for name in ("G", "A", "B", "P", "Q", "residual"):
            old = getattr(self, name)
            new = np.zeros(cap)
            new[:old.size] = old
            setattr(self, name, new)

    def truncate(self, n):
        self.n = min(self.n, n)
        del self.regime[self.n:]


# ---------------------------------------------------------------------------
# integrator weights
# ---------------------------------------------------------------------------

def _phi12(z):
    """phi1 = (1-e^-z)/z and phi2 = (1-e^-z(1+z))/z^2, series near 0."""
    if abs(z) < 0.1:
        p1 = p2 = 0.0
        t = 1.0
        for k in range(18):
            # t = (-z)^k / k!
            p1 += t / (k + 1)
            p2 += t * (k + 1) / ((k + 1) * (k + 2))
            t *= -z / (k + 1)
        return p1, p2
    em = math.exp(-z)
    return (1.0 - em) / z, (1.0 - em * (1.0 + z)) / (z * z)


def integrator_weights(r, c, h):
    """X_n = e X_{n-1} + w0 G_{n-1} + w1 G_n for X' = -r X + c G, G linear."""
    z = r * h
    p1, p2 = _phi12(z)
    w0 = h * p2
    w1 = h * p1 - w0
    return math.exp(-z), c * w0, c * w1


def step_coefficients(eps, h):
    k, l = 1.0 - 0.5 * eps, 0.5 * eps
    out = []
    for r, c in ((l, 0.5), (-l, -0.5), (k, 1.0), (-k, -1.0)):
        out.extend(integrator_weights(r, c, h))
    return np.array(out)


# ---------------------------------------------------------------------------
# seeding
# ---------------------------------------------------------------------------

def seed_amplitude(spec: SeedSpec, roots, x0):
    return abs(spec.L) * math.exp(roots.mu_plus.real * x0)


def default_x0(spec: SeedSpec, roots, state: ConstantState, frac=1e-4):
    """Deepest-needed seeding abscissa: L e^{Re(mu+) x0} = frac * G_inf."""
    if spec.L == 0:
        return 0.0
    return math.log(frac * state.g_inf / abs(spec.L)) / roots.mu_plus.real


def seed_tail(spec: SeedSpec, roots, state: ConstantState, params: MarchParams | None = None,
              extra_capacity: int = 0) -> TrajectoryHistory:
    """Linear-mode seed on [x0 - seed_depth, x0] around the discrete constant
    state (which the discrete scheme preserves exactly)."""
    from .dispersion import mode_coefficients

    eps = as_eps(state.eps)
    if params is None:
        params = MarchParams(eps)
    x0 = spec.x0 if spec.x0 is not None else default_x0(spec, roots, state)
    amp = seed_amplitude(spec, roots, x0)
    if amp > 1e-4 * state.g_inf * (1 + 1e-12):
        raise SeedError(f"seed amplitude {amp:.3e} exceeds 1e-4 G_inf; move x0 deeper")
    h = params.step_h
    tpl = params.template
    nseed = int(math.ceil(params.seed_depth / h)) + 1
    x_first = x0 - (nseed - 1) * h
    hist = TrajectoryHistory.empty(eps, h, x_first, nseed + extra_capacity, n_seed=nseed)
    k, l = 1.0 - 0.5 * eps, 0.5 * eps
    gd = discrete_g_inf(eps, h, tpl.W, tpl.ng)
    base = (gd, gd / (2 * l), gd / (2 * l), gd / k, gd / k)

    def fill(xs):
        cols = [np.full(xs.size, b) for b in base]
        mp = roots.mu_plus
        mc = mode_coefficients(mp, eps)
        lin = spec.L * np.exp(mp * xs)
        for i, c in enumerate((1.0, mc.a1, mc.b1, mc.p1, mc.q1)):
            cols[i] = cols[i] + (lin * c).real
        if spec.c_star:
            ms = roots.mu_star.real
            mf = mode_coefficients(ms, eps)
            # fast amplitude is referred to x0: e^{mu* x0} underflows for deep seeds
            fast = spec.c_star * np.exp(ms * (xs - x0))
            for i, c in enumerate((1.0, mf.a1, mf.b1, mf.p1, mf.q1)):
                cols[i] = cols[i] + fast * c.real
        return cols

    xs = hist.x_first + h * np.arange(nseed)
    for arr, col in zip((hist.G, hist.A, hist.B, hist.P, hist.Q), fill(xs)):
        arr[:nseed] = col
    hist.n = nseed
    # identity defect of the seed, using the seed formula for the history
    # below the first stored node
    pad = tpl.M.shape[0] + tpl.m
    xe = x_first + h * np.arange(-pad, nseed)
    ext = fill(xe)
    res = _core.identity_defect(*[np.ascontiguousarray(c) for c in ext], pad, pad + nseed,
                                np.ascontiguousarray(tpl.M), tpl.tail, tpl.m, _gfloor(eps))
    hist.residual[:nseed] = res
    hist.regime = ["LotkaVolterraCore"] * nseed
    hist.events = {"x0": x0, "seed_amplitude": amp, "g_inf_discrete": gd}
    return hist


def _gfloor(eps):
    return g_infinity(eps) if eps > 0 else 1e-300


# ---------------------------------------------------------------------------
# marching
# ---------------------------------------------------------------------------

def _run(hist, n0, n1, params, tpl, coef, guard):
    hist.reserve(n1)
    return _core.advance(hist.G, hist.A, hist.B, hist.P, hist.Q, hist.residual, n0, n1,
                         np.ascontiguousarray(tpl.M), tpl.ncols, tpl.tail, tpl.m, coef,
                         params.picard_tol, MAX_PICARD, _gfloor(params.eps), guard)


def _check_depth(hist, tpl):
    if hist.n < tpl.M.shape[0] + 1 or hist.n <= tpl.m + 1:
        raise MarchError("history shorter than the J window")


def step(hist: TrajectoryHistory, params: MarchParams) -> TrajectoryHistory:
    """Append one node (no fast-mode control)."""
    tpl = params.template
    _check_depth(hist, tpl)
    coef = step_coefficients(params.eps, params.step_h)
    n = hist.n
    nxt, status, _ = _run(hist, n, n + 1, params, tpl, coef, OVERFLOW_GUARD)
    if status in (PICARD_FAIL, NONFINITE):
        raise MarchError(f"step failed at x={hist.x_first + n * hist.h:.6g} (status {status})")
    hist.n = n + 1
    hist.regime.append("")
    if status == GUARD:
        hist.events.setdefault("overflow", hist.x_head)
    return hist


def _slow_q(G, n, h, kap):
    """Slow-manifold value of Q at node n from local behaviour of G."""
    return float(_slow_q_range(G, n, n + 1, h, kap)[0])


def _slow_q_range(G, n0, n1, h, kap):
    """Vectorised slow value of Q at nodes n0 .. n1-1 (needs G from n0 - 2).

    Q = int_0^inf e^{-kap s} G(x+s) ds; for a locally exponential G this is
    G/(kap - s) with s the log-slope, otherwise the Taylor series in G'."""
    g = G[n0:n1]
    g1 = G[n0 - 1:n1 - 1]
    g2 = G[n0 - 2:n1 - 2]
    d1 = (3 * g - 4 * g1 + g2) / (2 * h)
    d2 = (g - 2 * g1 + g2) / (h * h)
    with np.errstate(divide="ignore", invalid="ignore"):
        rate = np.where(g != 0, d1 / np.where(g != 0, g, 1.0), 0.0)
        expo = g / (kap - rate)
    taylor = g / kap + d1 / kap ** 2 + d2 / kap ** 3
    return np.where(np.abs(rate) > 0.5 * kap, expo, taylor)


def advance_to(hist: TrajectoryHistory, x_end: float, params: MarchParams,
               keep: float | None = None, margin: float | None = None) -> TrajectoryHistory:
    """March the history up to x_end.

    With ``params.control`` the march proceeds in overlapping segments.  Q at
    the anchor node of a segment is shifted by c so that the fast mode is
    absent from the look-ahead (see ``_control``); the first ``keep`` units
    are accepted provided the look-ahead stayed on the slow manifold for a
    further ``margin`` units.  Once B or Q has changed sign the trajectory is
    no longer admissible and the rest is marched without control.
    """
    if abs(params.eps - hist.eps) > 0 or abs(params.step_h - hist.h) > 1e-15:
        raise ValueError("params do not match the history grid")
    tpl = params.template
    _check_depth(hist, tpl)
    coef = step_coefficients(params.eps, params.step_h)
    h = hist.h
    kap = 1.0 - 0.5 * params.eps
    n_target = hist.index_of(x_end) + 1
    if n_target <= hist.n:
        return hist
    keep = 8.0 / kap if keep is None else keep
    margin = 12.0 / kap if margin is None else margin
    gf = _gfloor(params.eps)
    nk = max(int(round(keep / h)), 4)
    nm = max(int(round(margin / h)), 4)
    while hist.n < n_target:
        ns = hist.n - 1                     # accepted anchor node
        if not params.control or _first_sign(hist, hist.n_seed, hist.n) is not None:
            nxt, status, _ = _run(hist, hist.n, n_target, params, tpl, coef, OVERFLOW_GUARD)
            _finish(hist, nxt, status)
            return hist
        n_end = ns + 1 + nk + nm
        c, n_t, runs = _control(hist, ns, n_end, params, tpl, coef, h, kap, gf)
        hist.control_log.append((hist.x_first + ns * h, c, runs))
        if n_t - ns > nk + nm // 2:
            n_acc = ns + 1 + nk
        elif n_t - ns > nm:
            n_acc = n_t + 1 - nm
        else:
            # the slow value is lost within a margin (sign change or steep
            # peak ahead): tune c to delay the fast divergence as long as
            # possible, then accept up to the point where the bracketing runs
            # separate or through the sign change they share
            c, n_sep, n_ev = _bisect_fast(hist, ns, n_end, c, params, tpl, coef, h, kap, gf)
            hist.control_log.append((hist.x_first + ns * h, c, -1))
            if n_ev is not None and n_ev < n_sep:
                n_acc = n_ev + 1
            else:
                n_acc = max(min(ns + 1 + nk, n_sep - nm // 2), ns + 2)
        n_acc = min(n_acc, n_target)
        # the look-ahead may have stopped early; recompute accepted nodes if
        # the final run did not reach them
        bad = ~np.isfinite(hist.G[ns + 1:n_acc])
        bad |= (np.abs(hist.B[ns + 1:n_acc]) > OVERFLOW_GUARD)
        bad |= (np.abs(hist.Q[ns + 1:n_acc]) > OVERFLOW_GUARD)
        if bad.any():
            _finish(hist, ns + 1 + int(np.argmax(bad)), GUARD)
            return hist
        hist.n = n_acc
        if params.stop_on_sign and _first_sign(hist, ns + 1, n_acc) is not None:
            break
    _finish(hist, hist.n, OK)
    return hist


def relax_window(hist: TrajectoryHistory, x_end: float, params: MarchParams,
                 q_end=None, tol: float = 1e-15, maxit: int = 80) -> int:
    """March to x_end with Q taken from the stable backward solve.

    For profiles that decay at the window end the fast mode can be removed
    globally: march G, A, B, P forward with Q prescribed, recompute Q from
    Q' = kap Q - G backwards (the stable direction) starting from
    ``q_end(G_end)`` (default G/kap), and repeat until G stops changing.
    Returns the number of sweeps."""
    tpl = params.template
    _check_depth(hist, tpl)
    coef = step_coefficients(params.eps, params.step_h)
    kap = 1.0 - 0.5 * params.eps
    n0 = hist.n
    N = hist.index_of(x_end) + 1
    if N <= n0:
        return 0
    hist.reserve(N)
    if q_end is None:
        q_end = lambda g: g / kap
    e, w0, w1 = integrator_weights(kap, 1.0, hist.h)
    G, Q = hist.G, hist.Q
    Q[n0:N] = Q[n0 - 1]
    g_old = None
    for sweep in range(1, maxit + 1):
        nxt, status, _ = _core.advance(G, hist.A, hist.B, hist.P, Q, hist.residual, n0, N,
                                       np.ascontiguousarray(tpl.M), tpl.ncols, tpl.tail, tpl.m,
                                       coef, params.picard_tol, MAX_PICARD, _gfloor(params.eps),
                                       np.inf, 1)
        if status != OK:
            hist.n = nxt
            _finish(hist, nxt, status)
            raise MarchError(f"relaxation sweep failed at x={hist.x_first + nxt * hist.h:.6g}")
        q_last = q_end(G[N - 1])
        src = (w0 * G[n0 + 1:N] + w1 * G[n0:N - 1])[::-1]
        Q[N - 1] = q_last
        Q[n0:N - 1] = lfilter([1.0], [1.0, -e], src, zi=[e * q_last])[0][::-1]
        g = G[n0:N]
        done = g_old is not None and np.max(np.abs(g - g_old)) <= tol * max(np.max(np.abs(g)), 1e-300)
        g_old = g.copy()
        if done:
            break
    else:
        raise MarchError("fast-mode relaxation did not converge")
    # A, B, P and G are consistent with the final Q after one more sweep
    _core.advance(G, hist.A, hist.B, hist.P, Q, hist.residual, n0, N,
                  np.ascontiguousarray(tpl.M), tpl.ncols, tpl.tail, tpl.m, coef,
                  params.picard_tol, MAX_PICARD, _gfloor(params.eps), np.inf, 1)
    _finish(hist, N, OK)
    return sweep


CONTROL_GUARD = 1e3


def _control(hist, ns, n_end, params, tpl, coef, h, kap, gf, tol=1e-4, maxit=8):
    """Shift Q at the anchor ns to remove the fast mode from the look-ahead.

    K(n) = dQ_n/dc is measured by a paired run with a tiny shift.  The
    horizon n_t is the furthest node at which the run is still linear in c,
    Q is within 30% of its local slow value T and no sign change has
    occurred; the Newton step c -= (Q - T)/K at n_t leaves a fast amplitude
    (T - Q_slow)/K(n_t), so the horizon moves out as the fast content drops.
    Returns (c, n_t, runs) with the history holding the run for c.
    """
    q_anchor = hist.Q[ns]
    scale = max(abs(q_anchor), gf)
    delta = 1e-12 * scale
    runs = 0

    def run(c):
        nonlocal runs
        runs += 1
        hist.Q[ns] = q_anchor + c
        nxt, status, _ = _run(hist, ns + 1, n_end, params, tpl, coef, CONTROL_GUARD)
        return n_end if status == OK else nxt

    c = 0.0
    n_t = ns + 1
    for _ in range(maxit):
        stop2 = run(c + delta)
        Q2 = hist.Q[ns + 1:stop2].copy()
        stop = run(c)
        m = min(stop, stop2) - (ns + 1)
        if m < 3:
            break
        Q = hist.Q[ns + 1:ns + 1 + m]
        T = _slow_q_range(hist.G, ns + 1, ns + 1 + m, h, kap)
        dQ = Q2[:m] - Q
        with np.errstate(invalid="ignore"):
            ok = (np.abs(dQ) <= 1e-3 * np.abs(Q)) & (np.abs(Q - T) <= 0.3 * np.abs(T))
            ok &= (hist.B[ns + 1:ns + 1 + m] > 0) & (Q > 0) & np.isfinite(T)
        j = int(np.argmin(ok)) - 1 if not ok.all() else m - 1
        if j < 1:
            break
        n_t = ns + 1 + j
        err = Q[j] - T[j]
        if j == m - 1 and stop == n_end and abs(err) <= tol * abs(T[j]):
            return c, n_t, runs
        dc = -err * delta / dQ[j]
        if not math.isfinite(dc) or abs(dc) <= 4e-16 * scale:
            break
        c += dc
    if hist.Q[ns] != q_anchor + c:
        run(c)
    return c, n_t, runs


def _bisect_fast(hist, ns, n_end, c0, params, tpl, coef, h, kap, gf, maxit=64):
    """Bisection on the anchor shift by the direction of the fast divergence.

    A run is 'low' when Q turns negative first and 'high' when B turns
    negative first or Q escapes upwards.  A sign change of B that belongs to
    the slow trajectory is shared by the whole final bracket.  Returns
    (c, n_sep, n_ev): n_sep is the first node where the bracketing runs
    differ by more than 1e-8 relative, n_ev the shared sign-change node of B
    (None if the bracket does not share one).  The history holds the run
    for c on return."""
    q_anchor = hist.Q[ns]
    scale = max(abs(q_anchor), gf)

    def classify(c):
        hist.Q[ns] = q_anchor + c
        nxt, status, _ = _run(hist, ns + 1, n_end, params, tpl, coef, CONTROL_GUARD)
        stop = n_end if status == OK else nxt
        Q = hist.Q[ns + 1:stop]
        B = hist.B[ns + 1:stop]
        iq = np.nonzero(Q < 0)[0]
        ib = np.nonzero(B < 0)[0]
        iq = int(iq[0]) if iq.size else None
        ib = int(ib[0]) if ib.size else None
        if iq is not None and (ib is None or iq < ib):
            side, ev = -1, None
        elif ib is not None:
            side, ev = 1, ns + 1 + ib
        else:
            k = stop - 1
            if stop == n_end:
                t = _slow_q_range(hist.G, k, k + 1, h, kap)[0]
                side = 1 if hist.Q[k] >= t else -1
            else:
                side = 1 if hist.Q[min(stop, n_end - 1)] > 0 else -1
            ev = None
        return side, ev, hist.Q[ns + 1:stop].copy()

    side0, ev0, q0 = classify(c0)
    lo = hi = None
    if side0 < 0:
        lo = (c0, ev0, q0)
    else:
        hi = (c0, ev0, q0)
    step = 1e-14 * scale
    for _ in range(80):
        c = c0 + (step if side0 < 0 else -step)
        side, ev, q = classify(c)
        if side != side0:
            if side < 0:
                lo = (c, ev, q)
            else:
                hi = (c, ev, q)
            break
        if side0 < 0:
            lo = (c, ev, q)
        else:
            hi = (c, ev, q)
        step *= 4.0
    if lo is None or hi is None:
        # no divergence of either sign within reach: keep c0
        classify(c0)
        return c0, ns + 2, ev0
    for _ in range(maxit):
        if hi[0] - lo[0] <= 4e-16 * scale:
            break
        c = 0.5 * (lo[0] + hi[0])
        if c <= lo[0] or c >= hi[0]:
            break
        side, ev, q = classify(c)
        if side < 0:
            lo = (c, ev, q)
        else:
            hi = (c, ev, q)
    m = min(lo[2].size, hi[2].size)
    with np.errstate(invalid="ignore"):
        sep = np.abs(lo[2][:m] - hi[2][:m]) > 1e-8 * np.abs(hi[2][:m])
    n_sep = ns + 1 + (int(np.argmax(sep)) if sep.any() else m)
    c = 0.5 * (lo[0] + hi[0])
    classify(c)
    # a B sign change shared by the high side before the separation point is
    # part of the slow trajectory
    ev = hi[1] if hi[1] is not None and hi[1] <= n_sep else None
    return c, n_sep, ev


def _first_sign(hist, n0, n1):
    for name in ("B", "Q"):
        arr = getattr(hist, name)[n0:n1]
        neg = np.nonzero(arr < 0)[0]
        if neg.size:
            return name, n0 + int(neg[0])
    return None


def _finish(hist, nxt, status):
    n_old = len(hist.regime)
    if status == OK:
        hist.n = nxt
    elif status == GUARD:
        hist.n = nxt                            # keep nodes before the guard trip
        hist.events.setdefault("overflow", hist.x_first + nxt * hist.h)
    else:
        hist.n = nxt
        hist.events.setdefault("failure", (hist.x_first + nxt * hist.h, status))
    hist.regime.extend([""] * (hist.n - n_old))
    del hist.regime[hist.n:]


def record_events(hist: TrajectoryHistory):
    """First sign changes of B and Q after the seed (abscissae, interpolated)."""
    x = hist.x
    for name in ("B", "Q", "G"):
        arr = getattr(hist, name)[:hist.n]
        idx = np.nonzero((arr[hist.n_seed:] < 0))[0]
        key = f"{name.lower()}_sign"
        if idx.size:
            i = hist.n_seed + int(idx[0])
            if i > 0 and arr[i - 1] > 0:
                t = arr[i - 1] / (arr[i - 1] - arr[i])
                hist.events[key] = float(x[i - 1] + t * hist.h)
            else:
                hist.events[key] = float(x[i])
        else:
            hist.events.pop(key, None)
    return hist.events


def recompute_residual(hist: TrajectoryHistory, params: MarchParams, start=None):
    """Identity defect |G - 4AB - PQ - J|/max(|G|, floor) at marched nodes."""
    tpl = params.template
    n0 = hist.n_seed if start is None else start
    n0 = max(n0, tpl.M.shape[0] - 1, tpl.m)
    if n0 >= hist.n:
        return hist.residual[:0]
    res = _core.identity_defect(hist.G, hist.A, hist.B, hist.P, hist.Q, n0, hist.n,
                                np.ascontiguousarray(tpl.M), tpl.tail, tpl.m, _gfloor(hist.eps))
    hist.residual[n0:hist.n] = res
    return res


def march(spec: SeedSpec, params: MarchParams, roots=None, state=None,
          classify: bool = True) -> TrajectoryHistory:
    """Seed at x0 (default: deepest allowed point) and march to the window end."""
    from .dispersion import find_roots
    from .kernel_constants import constant_state

    eps = params.eps
    if eps <= 0:
        raise ValueError("march needs eps > 0; use kinetic_additive for eps = 0")
    roots = roots if roots is not None else find_roots(eps, certify=False)
    state = state if state is not None else constant_state(eps)
    x_start, x_end = params.window
    if spec.x0 is None:
        x0 = min(default_x0(spec, roots, state), x_start)
        spec = SeedSpec(spec.L, spec.c_star, x0)
    if spec.x0 > x_start:
        raise SeedError("seed abscissa lies above the window start")
    n_total = int(math.ceil((x_end - spec.x0) / params.step_h)) + 8
    hist = seed_tail(spec, roots, state, params, extra_capacity=n_total + 2048)
    advance_to(hist, x_end, params)
    recompute_residual(hist, params)
    record_events(hist)
    if classify:
        from .regime_asymptotics import classify as _classify
        hist.regime = list(_classify(hist, eps))
    return hist


# ---------------------------------------------------------------------------
# independent J evaluation and diagnostics
# ---------------------------------------------------------------------------

def j_integral(hist: TrajectoryHistory, x: float, eps: float, quad_tol: float = 1e-10,
               W: float | None = None) -> float:
    """J[G](x) by nested adaptive quadrature over the truncated region
    {-W <= y, z <= 0, e^y + e^z >= 1} with the unsymmetrised kernel and a
    cubic spline through the stored nodes, plus the tail strip
    G(x) e^{-lam W} 2A(x - W)."""
    from scipy import integrate
    from scipy.interpolate import CubicSpline

    e = float(eps)
    if not (0.0 <= e < 2.0):
        raise ValueError("eps must lie in [0, 2)")
    W = 20.0 if W is None else float(W)
    xs, G, A = hist.x, hist.G[:hist.n], hist.A[:hist.n]
    if x > xs[-1] + 1e-12:
        raise ValueError(f"x={x} beyond the history head {xs[-1]}")
    if x - W < xs[0] - 1e-12:
        raise ValueError("history does not cover [x - W, x]")
    lo_i = max(hist.index_of(x - W) - 3, 0)
    hi_i = min(hist.index_of(x) + 3, hist.n - 1)
    spl = CubicSpline(xs[lo_i:hi_i + 1], G[lo_i:hi_i + 1])
    k, l = 1.0 - 0.5 * e, 0.5 * e
    gx = float(spl(x))
    scale = max(g_infinity(e) ** 2 if e > 0 else 0.0, gx * gx, 1e-300)
    tol = quad_tol * scale

    def inner(y):
        zlo = max(math.log(-math.expm1(y)), -W) if y < 0 else -W
        f = lambda z: (math.exp(k * (y - z)) + math.exp(l * (y - z))) * float(spl(x + z))
        v, _ = integrate.quad(f, zlo, 0.0, epsabs=0.1 * tol, epsrel=1e-12, limit=200)
        return v * float(spl(x + y))

    pts = [-LN2] + [-float(j) for j in range(1, int(W))]
    v, _ = integrate.quad(inner, -W, 0.0, epsabs=tol, epsrel=1e-12, limit=400,
                          points=[p for p in pts if -W < p < 0])
    a_w = float(np.interp(x - W, xs, A))
    return v + gx * math.exp(-l * W) * 2.0 * a_w


def validity_monitor(hist: TrajectoryHistory, eps: float, delta: float = 0.05):
    """Per-node flags for the pointwise (ODE-reduction) regime.

    k1: sup over y in [-6, -1] of the log-slope of |G| behind the node
    (G(x+y) <= e^{k1 y}... read as the decay rate of G looking back), k3: local
    log-slope.  A node is trusted when k1 <= 1 - 2 delta, |k3| <= 2 and
    |P|, |Q| <= 2|G|.  Returns a dict of arrays (flag, k1, k3)."""
    n = hist.n
    G = hist.G[:n]
    h = hist.h
    with np.errstate(divide="ignore", invalid="ignore"):
        lg = np.log(np.abs(G))
        slope = np.gradient(lg, h)
    lag = int(round(1.0 / h))
    span = int(round(5.0 / h))
    k1 = np.zeros(n)
    # k1(x) = max over s in [1, 6] of (ln G(x) - ln G(x - s)) / s
    for s_idx in range(lag, lag + span + 1, max(1, lag // 4)):
        d = np.full(n, -np.inf)
        d[s_idx:] = (lg[s_idx:] - lg[:-s_idx]) / (s_idx * h)
        k1 = np.maximum(k1, d)
    k3 = np.nan_to_num(slope, nan=np.inf, posinf=np.inf, neginf=-np.inf)
    P, Q = hist.P[:n], hist.Q[:n]
    flag = ((k1 <= 1.0 - 2.0 * delta) & (np.abs(k3) <= 2.0)
            & (np.abs(P) <= 2.0 * np.abs(G)) & (np.abs(Q) <= 2.0 * np.abs(G)))
    return {"flag": flag, "k1": k1, "k3": k3}
