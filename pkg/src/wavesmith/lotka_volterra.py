"""Rescaled small-G dynamics: a, b, p, q with u = eps * x.

The leading-order pair conserves E = a + b - ln(ab) - 2; the eps
correction pumps energy at rate (eps/4)(b - a)(1 - a), so one cycle adds
(eps/4) D(E).  Cycles are traced in (ln a, ln b), where b_min ~ e^{-E-1}
stays representable.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import newton

from .kernel_constants import DomainError, as_eps
from .parallel import worker_count

E_CEILING = 200.0
VALIDITY = 0.5          # adiabatic map trusted while eps * E <= this


class TraceError(RuntimeError):
    pass


@dataclass
class LvState:
    a: float
    b: float
    p: float = 1.0
    q: float = 1.0
    u: float = 0.0

    def as_array(self):
        return np.array([self.a, self.b, self.p, self.q])


@dataclass
class LvOrbit:
    energy: float
    period: float
    contour: np.ndarray          # (k, 2) samples of (a, b) along one period
    d_of_e: float
    drift: float                 # max |E(u) - E| along the trace
    diagonal_phases: tuple = ()  # u at the two crossings of a = b


def lv_rhs(state: LvState, eps, leading_only: bool = False) -> LvState:
    """Derivatives (da, db, dp, dq)/du packed in an LvState (u left at 0)."""
    a, b, p, q = state.a, state.b, state.p, state.q
    if a <= 0 or b <= 0:
        raise DomainError("lv_rhs needs a, b > 0")
    e = as_eps(eps)
    corr = 0.0 if leading_only else 0.5 * e * a * b * (1.0 - a)
    src = a * b - corr
    fast = 1.0 / e - 0.5 if e > 0 else math.inf
    return LvState(0.5 * (src - a), 0.5 * (b - src), fast * (src - p), fast * (q - src), 0.0)


def jacobian(eps, at=(1.0, 1.0, 1.0, 1.0), h: float = 1e-7):
    """Central-difference Jacobian of the full system."""
    x0 = np.asarray(at, float)
    J = np.empty((4, 4))
    for k in range(4):
        d = np.zeros(4)
        d[k] = h
        fp = lv_rhs(LvState(*(x0 + d)), eps).as_array()
        fm = lv_rhs(LvState(*(x0 - d)), eps).as_array()
        J[:, k] = (fp - fm) / (2 * h)
    return J


def energy(a, b):
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    if np.any(a <= 0) or np.any(b <= 0):
        raise DomainError("energy needs a, b > 0")
    out = a + b - np.log(a * b) - 2.0
    return float(out) if out.ndim == 0 else out


def energy_log(al, be):
    """Energy in log coordinates, free of underflow in b."""
    return np.expm1(al) - al + np.expm1(be) - be


def energy_rate(state: LvState, eps) -> float:
    """dE/du along the full (a, b) flow, from lv_rhs."""
    d = lv_rhs(state, eps)
    return (1 - 1 / state.a) * d.a + (1 - 1 / state.b) * d.b


def b_max(E: float) -> float:
    """Larger root of b - ln b - 1 = E (a = 1 on the contour)."""
    if E <= 0:
        raise DomainError("b_max needs E > 0")
    # in s = b - 1 to keep the small-E cancellation out of f
    f = lambda s: s - math.log1p(s) - E
    df = lambda s: s / (1.0 + s)
    # convex f, start right of the root: Newton decreases monotonically
    s0 = E + 1.0 + math.log(E + 2.0) + math.sqrt(2.0 * E)
    return 1.0 + float(newton(f, s0, fprime=df, tol=1e-15, rtol=1e-14, maxiter=200))


def _log_rhs(u, y):
    al, be = y[0], y[1]
    # trial stages can overshoot far out; clipping only affects rejected steps
    a, b = math.exp(min(al, 300.0)), math.exp(min(be, 300.0))
    return [0.5 * (b - 1.0), 0.5 * (1.0 - a), (b - a) * (1.0 - a)]


def trace_cycle(E: float, tol: float = 1e-9, samples: int = 400) -> LvOrbit:
    """Follow the leading-order flow once around from the b maximum."""
    if E <= 0:
        raise DomainError("trace_cycle needs E > 0")
    if E > E_CEILING:
        raise TraceError(f"E = {E} beyond the traced range (E <= {E_CEILING})")
    y0 = [0.0, math.log(b_max(E)), 0.0]

    def diag(u, y):
        return y[0] - y[1]

    # two legs: alpha = 0 is crossed downward half way round, upward at the end
    rtol = max(1e-2 * tol, 1e-13)
    span = 40.0 * (2.0 * math.pi + E + 1.0)
    legs, y, u0, crossings = [], y0, 0.0, []
    for direction in (-1.0, 1.0):
        def back(u, y):
            return y[0] + 0.0 * u
        back.direction, back.terminal = direction, True
        sol = solve_ivp(_log_rhs, (u0, u0 + span), y, method="DOP853", rtol=rtol,
                        atol=1e-12, events=(back, diag), dense_output=True)
        if sol.status != 1 or not sol.t_events[0].size:
            raise TraceError(f"cycle at E = {E} did not close ({sol.message})")
        legs.append(sol)
        crossings.extend(float(t) for t in sol.t_events[1])
        u0, y = float(sol.t_events[0][0]), sol.y_events[0][0].copy()
        y[0] = 0.0
    T, yT = u0, y
    half = legs[0].t_events[0][0]
    uu = np.linspace(0.0, T, samples)
    al, be = np.empty(samples), np.empty(samples)
    first = uu <= half
    al[first], be[first], _ = legs[0].sol(uu[first])
    al[~first], be[~first], _ = legs[1].sol(uu[~first])
    drift = float(np.max(np.abs(energy_log(al, be) - E)))
    closure = abs(yT[1] - y0[1])
    if drift > tol * max(1.0, E) * 10 or closure > 1e3 * tol * max(1.0, E):
        raise TraceError(f"energy drift {drift:.3e} / closure {closure:.3e} at E = {E}")
    phases = tuple(t for t in crossings if 0.0 < t < T)
    return LvOrbit(E, T, np.column_stack([np.exp(al), np.exp(be)]), float(yT[2]), drift, phases)


def d_of_e(E: float, tol: float = 1e-9) -> float:
    d = trace_cycle(E, tol).d_of_e
    if not d > 0:
        raise TraceError(f"D({E}) = {d} not positive")
    return d


def d_table(E_values, tol: float = 1e-9, workers: int | None = 1):
    """Orbits for several energies; independent, so optionally threaded."""
    E_values = list(E_values)
    workers = worker_count(workers)
    if workers <= 1:
        return [trace_cycle(E, tol) for E in E_values]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(lambda E: trace_cycle(E, tol), E_values))


@dataclass(frozen=True)
class AdiabaticStep:
    value: float
    valid: bool


def adiabatic_map(E: float, eps, tol: float = 1e-9) -> AdiabaticStep:
    """E -> E + (eps/4) D(E); valid is False once eps*E exceeds 0.5."""
    e = as_eps(eps)
    if E <= 0:
        raise DomainError("adiabatic_map needs E > 0")
    return AdiabaticStep(E + 0.25 * e * d_of_e(E, tol), e * E <= VALIDITY)


def cycles_to_validity_edge(E0: float, eps, max_cycles: int = 100000) -> int:
    """Number of adiabatic steps from E0 until eps*E reaches 0.5."""
    e = as_eps(eps)
    E, n = E0, 0
    while e * E < VALIDITY:
        E = adiabatic_map(E, e).value
        n += 1
        if n > max_cycles:
            raise TraceError("energy iteration did not reach the validity edge")
    return n


def mass_consistency(M: float, eps) -> float:
    """Ratio of the adiabatic increment to the mass-map increment, both in
    energy units via E = (2/eps) M.  Tends to one as E grows with M small."""
    from .regime_asymptotics import mass_map
    e = as_eps(eps)
    E = 2.0 * M / e
    lv = 0.25 * e * d_of_e(E)
    mm = 2.0 / e * (mass_map(M) - M)
    return lv / mm
