import math

import numpy as np
import pytest

from wavesmith import kinetic_additive as ka

# first zero of Q^alpha for alpha = -0.05 on the rho = 1/2 profile (root
# bracketing on the constructed Q^alpha, frozen)
Q_ZERO_RHO05 = -0.15622984466688353


@pytest.fixture(scope="module")
def g1():
    return ka.solve_kinetic(1.0)


@pytest.fixture(scope="module")
def g_half():
    return ka.solve_kinetic(0.5)


def test_g_one_values():
    assert ka.g_one(0.0) == pytest.approx(math.exp(-0.5) / (2 * math.sqrt(2 * math.pi)), rel=1e-15)
    assert ka.g_one(0.0) == pytest.approx(0.12099, abs=1e-5)
    A, B, P, Q = ka.g_one_parts(0.0)
    assert A + B == pytest.approx(0.25, rel=1e-15)


def test_g_one_parts_branches_agree():
    # the series and closed form for P meet at u = 1/2
    x = 2 * math.log(0.5)
    lo = ka.g_one_parts(x - 1e-9)[2]
    hi = ka.g_one_parts(x + 1e-9)[2]
    assert lo == pytest.approx(hi, rel=1e-7)


def test_masses_and_tail_coefficients():
    assert ka.mass(1.0) == 0.5 and ka.mass(0.5) == pytest.approx(1 / 3)
    assert ka.right_tail_coefficient(1.0) == pytest.approx(0.0, abs=1e-16)
    assert ka.left_tail_coefficient(0.5) > 0
    with pytest.raises(ValueError):
        ka.left_tail_coefficient(2.5)


def test_g1_benchmark(g1):
    x, G, *_ = g1.history.values()
    sel = (x >= -10) & (x <= 5)
    err = np.max(np.abs(G[sel] - ka.g_one(x[sel]))) / np.max(ka.g_one(x[sel]))
    assert err <= 1e-3
    assert g1.mass == pytest.approx(0.5, abs=1e-4)
    assert g1.shift == pytest.approx(math.log(2))


def test_half_mass(g_half):
    assert g_half.mass == pytest.approx(1 / 3, abs=1e-4)
    # right tail decays like e^{-rho x}
    assert g_half.diagnostics["right_slope"] == pytest.approx(-0.5, abs=1e-3)


def test_identity_residual_small(g1, g_half):
    assert g1.diagnostics["max_residual"] < 1e-10
    assert g_half.diagnostics["max_residual"] < 1e-10


def test_regimes_eps0(g1):
    reg = g1.history.regime
    assert reg[g1.history.index_of(0.0)] == "Kinetic"
    assert reg[-1] == "Tail"


def test_alpha_zero_is_base():
    fam = ka.alpha_family(None, 0.0)
    assert np.allclose(fam.G, ka.g_one(fam.x), rtol=1e-14)
    assert ka.sign_change_scan(fam).kind == "NoCrossing"


@pytest.mark.parametrize("alpha", [0.1, -0.1])
def test_alpha_family_residual(alpha):
    fam = ka.alpha_family(None, alpha)
    r = ka.family_residual(fam)
    assert r["identity"] <= 1e-6 and r["ode"] <= 1e-6


def test_alpha_sign_changes_rho1():
    plus = ka.sign_change_scan(ka.alpha_family(None, 0.1))
    minus = ka.sign_change_scan(ka.alpha_family(None, -0.1))
    assert plus.kind == "BVanishes" and plus.x == pytest.approx(1.186, abs=2e-3)
    assert minus.kind == "QVanishes" and minus.x == pytest.approx(0.170, abs=2e-3)


def test_alpha_sign_changes_rho_half(g_half):
    grid = np.linspace(-8, 12, 201)
    minus = ka.alpha_family(g_half, -0.05, grid)
    sc = ka.sign_change_scan(minus)
    assert sc.kind == "QVanishes"
    assert sc.x == pytest.approx(Q_ZERO_RHO05, abs=1e-6)
    i = np.searchsorted(minus.x, sc.x)
    assert minus.Q[i - 1] > 0 > minus.Q[i]
    plus = ka.sign_change_scan(ka.alpha_family(g_half, 0.05, grid))
    assert plus.kind == "BVanishes"
    assert plus.other is None or plus.other > plus.x


def test_intode_operator():
    xi = np.linspace(0, 2, 2001)
    F = 1 + 0.3 * xi - 0.7 * xi ** 2 + 0.2 * xi ** 3
    assert np.array_equal(ka.intode_operator(F, xi, 0.0), F)
    assert np.allclose(ka.intode_operator(np.ones_like(xi), xi, 1.0), np.exp(xi), rtol=1e-10)
    # W = AF solves W - lam int_0^xi W = F
    lam = -0.7
    W = ka.intode_operator(F, xi, lam)
    from scipy.integrate import cumulative_simpson
    back = W - lam * cumulative_simpson(W, x=xi, initial=0.0)
    assert np.max(np.abs(back - F)) < 1e-8


def test_match_points_closed_form():
    M, eps = 1 / 3, 0.1
    x_hat, x_bar = ka.match_points(M, eps, 0.0)
    rho = 0.5
    s = 1 / 3
    c1 = 0.5 * math.sin(math.pi * s) * math.gamma(1 / (1 + rho)) / (math.pi * (1 + rho))
    c2 = 0.5 / (1 + rho) * math.gamma(1 + rho) * math.sin(math.pi * (1 - rho)) / math.pi
    # left tail gives A(x_n) = eps/4, right tail B(x_bar) = eps/4
    assert c1 * math.exp(s * (0.0 - x_hat)) == pytest.approx(eps / 4, rel=1e-12)
    assert c2 * math.exp(-rho * (x_bar - x_hat)) == pytest.approx(eps / 4, rel=1e-12)
    far = ka.match_points(1e-3, eps, 0.0)[0]
    assert -far > -x_hat
    with pytest.raises(ValueError):
        ka.match_points(0.5, eps, 0.0)
