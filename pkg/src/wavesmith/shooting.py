"""Outer shooting loop: outcome classification, bisection on the slow-mode
amplitude L, and secant tuning of the fast-mode amplitude C*.

The outcome of one march is read off at a fixed cycle: counting upward
A-crossings (B of order one) before the first sign event gives N(L).  Over
the fundamental L interval N takes two adjacent values, and L* is the flip.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import volterra_march as vm
from .dispersion import find_roots, fundamental_interval
from .kernel_constants import as_eps, constant_state
from .parallel import worker_count
from .regime_asymptotics import cycle_crossings, mass_map, tail_profile

OUTCOMES = ("BSignChange", "QSignChange", "CycleContinues", "TailConverged", "Inconclusive")
SIGN_SIGNIFICANCE = 1e-6     # a crossing must dip below -this * max|f| to count
TAIL_TOL = 0.10


class ShootError(RuntimeError):
    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report


@dataclass(frozen=True)
class ShootOutcome:
    kind: str
    x: float | None = None          # abscissa of the sign change / crossing / tail anchor
    m_next: float | None = None     # for CycleContinues
    detail: float | None = None     # tail fit residual, when fitted

    def __post_init__(self):
        if self.kind not in OUTCOMES:
            raise ValueError(f"unknown outcome {self.kind}")


@dataclass(frozen=True)
class ShootConfig:
    eps: float
    L_low: float | None = None
    L_high: float | None = None
    c_star: float = 0.0
    bisection_tol: float = 1e-6
    step_h: float = 0.05
    window_end: float | None = None   # default: 30 slow periods past the seed
    grid: int = 16
    workers: int | None = None
    tune_span: float = 12.0
    control: bool = True
    quad_tol: float = 1e-10

    def __post_init__(self):
        e = as_eps(self.eps)
        if e <= 0:
            raise ValueError("shooting needs eps > 0")
        object.__setattr__(self, "eps", e)
        if self.bisection_tol < 1e-6:
            raise ValueError("bisection_tol must be >= 1e-6")
        if self.grid < 2:
            raise ValueError("grid needs at least 2 points")

    def bracket(self, roots):
        lo, hi = fundamental_interval(roots)
        a = lo if self.L_low is None else float(self.L_low)
        b = hi * (1 - 1e-9) if self.L_high is None else float(self.L_high)
        if not (lo <= a < b < hi * (1 + 1e-12)):
            raise ValueError(f"L bracket ({a}, {b}) must lie inside [{lo}, {hi})")
        return a, b


@dataclass(frozen=True)
class RunReport:
    eps: float
    l_star: float | None = None
    c_star: float = 0.0
    bracket: tuple = ()
    iterations: int = 0
    outcomes: tuple = ()           # (L, kind, cycles, x_event, last M) per grid point
    flips: int = 0
    inconclusive: int = 0
    m_sequence: tuple = ()
    x_sequence: tuple = ()
    terminal_m: float | None = None
    mass_map_errors: tuple = ()
    oscillation_count: int = 0
    residual_max: float | None = None
    min_g_ratio: float | None = None
    final_outcome: ShootOutcome | None = None
    growth_rate: float | None = None
    mu_star: float | None = None
    d_rel_end: float | None = None
    blowups: tuple = ()
    notes: tuple = ()
    trajectory: object = field(default=None, compare=False, repr=False)

    def as_dict(self):
        d = asdict(self)
        d.pop("trajectory")
        if self.final_outcome is not None:
            d["final_outcome"] = asdict(self.final_outcome)
        return d


# ---------------------------------------------------------------------------
# outcome classification
# ---------------------------------------------------------------------------

def _significant_sign(hist, name):
    n0, n = hist.n_seed, hist.n
    arr = getattr(hist, name)[:n]
    neg = np.nonzero(arr[n0:] < 0)[0]
    if not neg.size:
        return None
    i = n0 + int(neg[0])
    scale = float(np.max(np.abs(arr[n0:])))
    # a march stopped on the sign lands the last node at ~0; that counts
    if arr[i:].min() >= -SIGN_SIGNIFICANCE * scale and i < n - 1:
        return None
    x = hist.x
    if i > 0 and arr[i - 1] > 0:
        return float(x[i - 1] + hist.h * arr[i - 1] / (arr[i - 1] - arr[i]))
    return float(x[i])


def fit_tail(hist, eps, decade=None):
    """Fit x_hat of the tail form to the last resolved decade of G.

    Returns (x_hat, max relative residual) or None when G has not decayed
    by two decades past its peak."""
    n0, n = hist.n_seed, hist.n
    x, G = hist.x, hist.G[:n]
    ip = n0 + int(np.argmax(G[n0:]))
    gmax = G[ip]
    after = G[ip:]
    pos = np.nonzero(after > 0)[0]
    stop = ip + (int(np.nonzero(after <= 0)[0][0]) if (after <= 0).any() else after.size)
    g_end = G[stop - 1]
    if not g_end < 1e-2 * gmax:
        return None
    # below ~1e-3 of the peak marched profiles carry absolute errors that
    # dominate a relative fit
    lo = max(g_end, 1e-3 * gmax) if decade is None else decade[0] * gmax
    hi = 10.0 * lo if decade is None else decade[1] * gmax
    sel = np.arange(ip, stop)
    sel = sel[(G[sel] >= lo) & (G[sel] <= hi)]
    if sel.size < 5 or not pos.size:
        return None
    xs, gs = x[sel], G[sel]

    def cost(xh):
        with np.errstate(divide="ignore"):
            d = np.log(tail_profile(xs, xh, eps)) - np.log(gs)
        return float(np.sum(d * d)) if np.all(np.isfinite(d)) else 1e300

    r = minimize_scalar(cost, bounds=(xs[0] - 20.0, xs[0] - 1e-6), method="bounded",
                        options={"xatol": 1e-10})
    res = float(np.max(np.abs(tail_profile(xs, r.x, eps) / gs - 1.0)))
    return float(r.x), res


def classify_outcome(history, eps) -> ShootOutcome:
    e = float(eps)
    signs = [(x, k) for k, x in (("BSignChange", _significant_sign(history, "B")),
                                 ("QSignChange", _significant_sign(history, "Q")))
             if x is not None]
    if signs:
        x, k = min(signs)
        return ShootOutcome(k, x)
    fit = fit_tail(history, e)
    if fit is not None and fit[1] <= TAIL_TOL:
        return ShootOutcome("TailConverged", fit[0], detail=fit[1])
    if e > 0:
        xn, ms, _ = cycle_crossings(history, e)
        if xn:
            return ShootOutcome("CycleContinues", xn[-1], ms[-1])
    return ShootOutcome("Inconclusive", float(history.x_head))


# ---------------------------------------------------------------------------
# marches at given L
# ---------------------------------------------------------------------------

@dataclass
class _Ctx:
    cfg: ShootConfig
    roots: object
    state: object
    window_end: float


def _context(cfg: ShootConfig, roots=None, state=None):
    roots = roots if roots is not None else find_roots(cfg.eps, certify=False)
    state = state if state is not None else constant_state(cfg.eps)
    end = cfg.window_end
    if end is None:
        lo, _ = cfg.bracket(roots)
        x0 = vm.default_x0(vm.SeedSpec(lo), roots, state)
        end = x0 + 30.0 * 2.0 * math.pi / roots.mu_plus.imag
    return _Ctx(cfg, roots, state, float(end))


def _march_at(ctx: _Ctx, L: float, c_star=None):
    cfg = ctx.cfg
    spec = vm.SeedSpec(float(L), cfg.c_star if c_star is None else c_star)
    x0 = vm.default_x0(spec, ctx.roots, ctx.state)
    params = vm.MarchParams(cfg.eps, cfg.step_h, (x0, ctx.window_end), quad_tol=cfg.quad_tol,
                            control=cfg.control, stop_on_sign=True)
    hist = vm.march(spec, params, ctx.roots, ctx.state, classify=False)
    out = classify_outcome(hist, cfg.eps)
    xn, ms, _ = cycle_crossings(hist, cfg.eps)
    stop = out.x if out.kind in ("BSignChange", "QSignChange") else math.inf
    keep = [i for i, xx in enumerate(xn) if xx < stop]
    return hist, out, [xn[i] for i in keep], [ms[i] for i in keep]


def _sweep(ctx, Ls, workers):
    f = lambda L: _march_at(ctx, L)
    if workers <= 1:
        return [f(L) for L in Ls]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(f, Ls))


def _reference(runs, period):
    """Abscissa half a period before a crossing that every seed resolves;
    cycles are counted from here so that seed depth does not enter N(L)."""
    x_raw = max(r[0].events["x0"] for r in runs) + period
    xn = runs[0][2]
    later = [x for x in xn if x > x_raw]
    return (later[0] if later else x_raw) - 0.5 * period


def _count(run, x_ref):
    return sum(1 for x in run[2] if x >= x_ref)


def _summary(L, run, x_ref):
    hist, out, xn, ms = run
    return (float(L), out.kind, _count(run, x_ref), out.x, ms[-1] if ms else None)


def trajectory_report(hist, eps, xn, ms, stop_x=None):
    """Cycle statistics of an accepted trajectory (up to the first sign event)."""
    n0 = hist.n_seed
    n = hist.n if stop_x is None else min(hist.n, max(n0 + 1, hist.index_of(stop_x)))
    G = hist.G[n0:n]
    res = hist.residual[n0:n]
    errs = tuple((ms[i + 1] - mass_map(ms[i])) / mass_map(ms[i])
                 for i in range(len(ms) - 1) if ms[i] < 1.0)
    return dict(m_sequence=tuple(ms), x_sequence=tuple(xn),
                terminal_m=ms[-1] if ms else None, mass_map_errors=errs,
                oscillation_count=len(ms),
                residual_max=float(np.max(res)) if res.size else None,
                min_g_ratio=float(G.min() / G.max()) if G.size else None)


def bisect_L(config: ShootConfig, roots=None, state=None):
    """Bisect the cycle-count flip of N(L) over the bracket.

    Returns (L_star, RunReport).  L_star is the bracket end on the
    sign-change side (one cycle fewer); its march is attached."""
    ctx = _context(config, roots, state)
    lo, hi = config.bracket(ctx.roots)
    Ls = np.geomspace(lo, hi, config.grid)
    runs = _sweep(ctx, Ls, worker_count(config.workers))
    period = 2.0 * math.pi / ctx.roots.mu_plus.imag
    x_ref = _reference(runs, period)
    table = [_summary(L, r, x_ref) for L, r in zip(Ls, runs)]
    counts = [t[2] for t in table]
    n_ref = min(counts)
    side = [c > n_ref for c in counts]          # True: completes the extra cycle
    flips = sum(side[i] != side[i + 1] for i in range(len(side) - 1))
    incon = sum(t[1] == "Inconclusive" for t in table)
    base = dict(eps=config.eps, c_star=config.c_star, outcomes=tuple(table), flips=flips,
                inconclusive=incon)
    if flips == 0:
        raise ShootError("same outcome over the whole L grid", RunReport(**base))
    k = next(i for i in range(len(side) - 1) if side[i] != side[i + 1])
    a, b = float(Ls[k]), float(Ls[k + 1])
    cont_low = side[k]
    it = 0
    while b - a > config.bisection_tol:
        m = 0.5 * (a + b)
        if (_count(_march_at(ctx, m), x_ref) > n_ref) == cont_low:
            a = m
        else:
            b = m
        it += 1
        if it > 200:
            break
    L_star = b if cont_low else a
    hist, out, xn, ms = _march_at(ctx, L_star)
    stop = out.x if out.kind in ("BSignChange", "QSignChange") else None
    stats = trajectory_report(hist, config.eps, xn, ms, stop)
    rep = RunReport(l_star=L_star, bracket=(a, b), iterations=it, final_outcome=out,
                    trajectory=hist, notes=(f"x_ref={x_ref!r}",), **base, **stats)
    return L_star, rep


# ---------------------------------------------------------------------------
# C* tuning
# ---------------------------------------------------------------------------

def _dormant(hist, kap):
    n0, n = hist.n_seed - 1, hist.n
    x = hist.x[n0:n]
    return x, hist.Q[n0:n] - hist.G[n0:n] / kap, hist.G[n0:n]


def tune_c_star(config: ShootConfig, L: float, roots=None, state=None, tol: float = 1e-3,
                maxit: int = 20):
    """Secant on c_star (control off, short window) so that the dormant
    amplitude d = Q - G/(1 - eps/2) vanishes at the window end relative to G.

    c_star is the fast-mode amplitude at the seed abscissa."""
    ctx = _context(config, roots, state)
    e = config.eps
    kap = 1.0 - 0.5 * e
    spec0 = vm.SeedSpec(float(L))
    x0 = vm.default_x0(spec0, ctx.roots, ctx.state)
    x_end = x0 + config.tune_span
    params = vm.MarchParams(e, config.step_h, (x0, x_end), quad_tol=config.quad_tol,
                            control=False)
    runs = {}

    def probe(c):
        h = vm.march(vm.SeedSpec(float(L), c, x0), params, ctx.roots, ctx.state, classify=False)
        runs[c] = h
        if h.x_head < x_end - 0.5 * config.step_h or "failure" in h.events:
            return None, h.x_head
        _, d, g = _dormant(h, kap)
        return float(d[-1] / g[-1]), h.x_head

    c0 = config.c_star
    c1 = c0 + 1e-8 * ctx.state.g_inf
    f0, x0h = probe(c0)
    f1, x1h = probe(c1)
    base = dict(eps=e, l_star=float(L), mu_star=float(ctx.roots.mu_star.real))
    if f0 is None and f1 is None:
        raise ShootError("both secant probes blew up",
                         RunReport(blowups=(x0h, x1h), **base))
    # growth rate of the fast response: difference of the two probes
    growth = None
    if f0 is not None and f1 is not None:
        xa, da, _ = _dormant(runs[c0], kap)
        _, db, _ = _dormant(runs[c1], kap)
        dd = np.abs(db - da)
        sel = (xa >= x0 + 0.5 * config.tune_span) & (dd > 0)
        if sel.sum() > 4:
            growth = float(np.polyfit(xa[sel], np.log(dd[sel]), 1)[0])
    it = 0
    blow = []
    while True:
        if f1 is not None and abs(f1) <= tol:
            c, f = c1, f1
            break
        if f0 is None or f1 is None or f1 == f0 or it >= maxit:
            if f0 is not None and abs(f0) <= tol:
                c, f = c0, f0
                break
            raise ShootError("secant on c_star did not converge",
                             RunReport(blowups=tuple(blow), growth_rate=growth, **base))
        c2 = c1 - f1 * (c1 - c0) / (f1 - f0)
        c0, f0 = c1, f1
        c1 = c2
        f1, xh = probe(c1)
        if f1 is None:
            blow.append(xh)
        it += 1
    rep = RunReport(c_star=c, iterations=it, growth_rate=growth, d_rel_end=f,
                    blowups=tuple(blow), trajectory=runs[c], **base)
    return c, rep


def shoot(config: ShootConfig, tune: bool = False, rounds: int = 3, roots=None, state=None):
    """bisect_L at the current c_star; with ``tune``, alternate with
    tune_c_star until L* settles (at most ``rounds`` passes)."""
    cfg = config
    roots = roots if roots is not None else find_roots(cfg.eps, certify=False)
    state = state if state is not None else constant_state(cfg.eps)
    L, rep = bisect_L(cfg, roots, state)
    if not tune:
        return L, rep
    for _ in range(rounds - 1):
        c, _ = tune_c_star(cfg, L, roots, state)
        cfg = ShootConfig(**{**asdict(cfg), "c_star": c})
        L_new, rep = bisect_L(cfg, roots, state)
        done = abs(L_new - L) <= cfg.bisection_tol
        L = L_new
        if done:
            break
    return L, rep
