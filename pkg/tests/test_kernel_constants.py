import math

import numpy as np
import pytest
from scipy import special

from wavesmith.kernel_constants import (DomainError, Epsilon, as_eps, c0_integral, constant_state,
                                        digamma, g_infinity, gamma, gamma_array, j_region_constant,
                                        kernel_log, loggamma)


def test_kernel_log_values():
    assert kernel_log(0.0, 0.3) == 2.0
    assert kernel_log(0.7, 1.0) == pytest.approx(2 * math.exp(0.35), rel=1e-15)
    assert kernel_log(-1.0, 0.1) == pytest.approx(math.exp(-0.95) + math.exp(-0.05), rel=1e-15)


@pytest.mark.parametrize("bad", [0.0, 2.0, -0.1, float("nan"), float("inf")])
def test_eps_domain(bad):
    with pytest.raises(DomainError):
        as_eps(bad)


def test_epsilon_wrapper():
    e = Epsilon(0.4)
    assert (e.kappa, e.lam) == pytest.approx((0.8, 0.2))
    assert as_eps(e) == 0.4


@pytest.mark.parametrize("z", [0.3, 1.7, 5.5, 0.2 + 0.7j, 1.5 - 2.0j, 10 + 3j])
def test_gamma_against_scipy(z):
    assert abs(gamma(z) - special.gamma(z)) <= 1e-13 * abs(special.gamma(z))
    assert abs(loggamma(z) - special.loggamma(z)) <= 1e-12 * max(1.0, abs(special.loggamma(z)))


def test_gamma_array_and_digamma():
    z = np.array([0.5, 1.0, 2.5 + 1j])
    assert np.allclose(gamma_array(z), special.gamma(z), rtol=1e-13)
    assert digamma(1.3) == pytest.approx(special.digamma(1.3), rel=1e-10)


def test_g_inf_closed_form_eps1():
    assert g_infinity(1.0) == pytest.approx(1 / (4 * math.pi), abs=1e-15)
    assert c0_integral(1.0) == pytest.approx(4 * math.pi, rel=1e-9)


@pytest.mark.parametrize("eps", ["0.1", "0.5", "1.0"])
def test_g_inf_against_quadrature_oracle(oracle, eps):
    assert g_infinity(float(eps)) == pytest.approx(oracle["g_inf"][eps], rel=1e-12)


def test_g_inf_small_eps():
    e = 1e-3
    assert g_infinity(e) / (e * e / 4 * (1 - e / 2)) == pytest.approx(1.0, abs=1e-3)


def test_constant_state_limits():
    for e in (1e-3, 1e-4):
        cs = constant_state(e)
        assert cs.a_inf / (e / 4) == pytest.approx(1.0, abs=5 * e)
        assert cs.p_inf / (e * e / 4) == pytest.approx(1.0, abs=5 * e)
        assert cs.a_inf == cs.b_inf and cs.p_inf == cs.q_inf


@pytest.mark.parametrize("eps", [0.1, 0.3, 0.7])
def test_constant_state_identity(eps):
    # G = 4AB + PQ + J at the constant state
    cs = constant_state(eps)
    j = cs.g_inf ** 2 * j_region_constant(eps)
    lhs = 4 * cs.a_inf * cs.b_inf + cs.p_inf * cs.q_inf + j
    assert lhs == pytest.approx(cs.g_inf, rel=1e-9)


def test_c0_rejects_bad_tol():
    with pytest.raises(ValueError):
        c0_integral(0.3, tol=0.0)
