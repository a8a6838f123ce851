"""Regenerate oracle_values.json.

Every value here is computed without importing wavesmith: mpmath for the
special-function and root problems, direct scipy quadrature or integration
for the rest.  The tests read the frozen JSON; run this script only to
re-derive it (takes about a minute).

    python tests/oracles/generate.py
"""
import json
import math
from pathlib import Path

import mpmath as mp
import numpy as np
from scipy import integrate, optimize

mp.mp.dps = 30
OUT = Path(__file__).with_name("oracle_values.json")


def c0(eps):
    # inner z integral is elementary: e^{c(y - z0)}/c with z0 = ln(1 - e^y);
    # the outer one in eta = e^y, split at 1/2; eta = u^{1/c} and
    # 1 - eta = v^{1/(1-c)} turn the two endpoint powers into constants
    e = mp.mpf(eps)
    half = mp.mpf("0.5")
    tot = 0
    for c in (1 - e / 2, e / 2):
        left = mp.quad(lambda u: (1 - u ** (1 / c)) ** (-c), [0, half ** c]) / c
        right = mp.quad(lambda v: (1 - v ** (1 / (1 - c))) ** (c - 1), [0, half ** (1 - c)]) / (1 - c)
        tot += (left + right) / c
    return tot


def dispersion(mu, eps):
    k, l = 1 - eps / 2, eps / 2
    G = mp.gamma
    return (G(k) * G(l) * G(1 + mu) / (k * l) - G(k + mu) * G(l) * (1 - mu) / (k * (l - mu))
            - G(l + mu) * G(k) * (1 - mu) / (l * (k - mu)))


def roots(eps):
    e = mp.mpf(eps)
    mp_ = mp.findroot(lambda m: dispersion(m, e), e ** 2 / 8 + 1j * (e / 2 + e ** 2 / 8))
    # cleared form near the pole at 1 - eps/2
    cl = lambda m: dispersion(m, e) * (e / 2 - m) * (1 - e / 2 - m)
    ms = mp.findroot(cl, 1 - e / 2 - e ** 2 / 4)
    return complex(mp_), float(mp.re(ms))


def g1(x):
    c = 1 / (2 * math.sqrt(2 * math.pi))
    return c * math.exp(x / 2 - math.exp(x) / 2)


def j_g1(x):
    """eps = 0 memory integral of G_1, kernel e^{y-z} + 1, nested quad."""
    def inner(y):
        lo = math.log(-math.expm1(y))
        return integrate.quad(lambda z: (math.exp(y - z) + 1.0) * g1(x + z), lo, 0.0,
                              epsabs=1e-15, epsrel=1e-12)[0] * g1(x + y)
    return integrate.quad(inner, -60.0, -1e-14, limit=400, points=[-math.log(2.0)],
                          epsabs=1e-15, epsrel=1e-11)[0]


def lv_area(E):
    """D(E) as the area enclosed by the contour in the (ln b, a) plane."""
    g = lambda s: math.expm1(s) - s
    tmax = optimize.brentq(lambda t: g(t) - E, 0, E + 5, xtol=1e-15)
    tmin = optimize.brentq(lambda t: g(t) - E, -E - 5, 0, xtol=1e-15)

    def w(t):
        r = E - g(t)
        if r <= 0:
            return 0.0
        ap = optimize.brentq(lambda s: g(s) - r, 0, r + 5, xtol=1e-15)
        am = optimize.brentq(lambda s: g(s) - r, -r - 5, 0, xtol=1e-15)
        return math.exp(ap) - math.exp(am)
    return 2 * integrate.quad(w, tmin, tmax, limit=500, epsabs=1e-13, epsrel=1e-13)[0]


def lv_period(E):
    """Period by the standard quadrature in the log plane (time = 2 ds / (e^t - 1))."""
    b = optimize.brentq(lambda t: math.expm1(t) - t - E, 0, E + 5, xtol=1e-15)

    def rhs(u, y):
        return [0.5 * (math.exp(y[1]) - 1), 0.5 * (1 - math.exp(y[0]))]
    ev = lambda u, y: y[0]
    ev.direction, ev.terminal = 1.0, True
    s1 = integrate.solve_ivp(rhs, (0, 1e-3), [0.0, b], method="DOP853", rtol=1e-13, atol=1e-14)
    s2 = integrate.solve_ivp(rhs, (1e-3, 1e5), s1.y[:, -1], method="DOP853", rtol=1e-12,
                             atol=1e-13, events=ev)
    return float(s2.t_events[0][0])


def voltapp4(xi, eps, delta=0.1):
    c = 1 / (2 * math.sqrt(2 * math.pi))
    r = lambda x: c / x ** 1.5 + eps / (4 * x)
    f = lambda z: r(z) * r(xi - z) * -math.expm1(-z / 2) * z ** (eps / 2)
    I = integrate.quad(f, 0, delta * xi, limit=400, points=[1.0])[0]
    return (2 * xi ** (-eps / 2) * I - r(xi)) / r(xi)


def main():
    out = {}
    out["g_inf"] = {str(e): float(1 / c0(e)) for e in (0.1, 0.5, 1.0)}
    out["roots"] = {}
    for e in (0.05, 0.1, 0.2, 0.3, 0.4):
        mpl, ms = roots(e)
        out["roots"][str(e)] = {"mu_plus": [mpl.real, mpl.imag], "mu_star": ms}
    mpl = complex(*out["roots"]["0.1"]["mu_plus"])
    k, l = 0.95, 0.05
    out["mode_eps0.1"] = {"a1": [(0.5 / (mpl + l)).real, (0.5 / (mpl + l)).imag],
                          "q1": [(1 / (k - mpl)).real, (1 / (k - mpl)).imag]}
    out["j_g1"] = {str(x): j_g1(x) for x in (-1.0, 0.0, 1.0)}
    out["lv_D"] = {str(E): lv_area(E) for E in (1e-3, 1.0, 10.0, 100.0)}
    out["lv_T"] = {str(E): lv_period(E) for E in (1e-3, 1.0, 10.0)}
    E, n = 0.01, 0
    while 0.05 * E < 0.5:
        E += 0.05 / 4 * lv_area(E)
        n += 1
    out["cycles_to_edge_E0.01_eps0.05"] = n
    m, k = mp.mpf("0.1"), 0
    while m <= 0.5:
        m = -mp.log(1 - m)
        k += 1
    out["steps_to_exceed_0.1"] = k
    out["voltapp4_eps0.1"] = {str(xi): voltapp4(xi, 0.1) for xi in (10.0, 100.0)}
    out["tail_integral"] = float(mp.quad(lambda z: (1 - mp.exp(-z / 2)) * z ** mp.mpf(-1.5),
                                         [0, 1, mp.inf]))
    out["t_eps"] = {str(a): float(mp.findroot(lambda t: mp.exp(t) - t - mp.log(1 / (2 * mp.mpf(a))),
                                              2.0)) for a in ("1e-3", "1e-4", "1e-5")}
    OUT.write_text(json.dumps(out, indent=1, sort_keys=True) + "\n")
    print(OUT.read_text())


if __name__ == "__main__":
    main()
