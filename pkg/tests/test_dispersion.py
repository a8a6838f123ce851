import math

import numpy as np
import pytest

from wavesmith.dispersion import (PoleError, RootError, asymptotic_roots, certify_root_count,
                                  dispersion_residual, find_roots, fundamental_interval,
                                  mode_coefficients, omega1, omega2, omega_zeros,
                                  relative_residual)


@pytest.mark.parametrize("eps", ["0.05", "0.1", "0.2", "0.3", "0.4"])
def test_roots_against_mpmath(oracle, eps):
    r = find_roots(float(eps), certify=False)
    ref = oracle["roots"][eps]
    assert abs(r.mu_plus - complex(*ref["mu_plus"])) < 1e-12
    assert r.mu_minus == r.mu_plus.conjugate()
    assert r.mu_star.real == pytest.approx(ref["mu_star"], abs=1e-12)
    assert r.residual_norm < 1e-10


@pytest.mark.parametrize("eps", [0.1, 0.3])
def test_certified_count(eps):
    assert certify_root_count(eps, 3.0) == 3


def test_eps1_is_rejected():
    with pytest.raises(RootError):
        find_roots(1.0)


def test_residual_sign_change_across_mu_star():
    e = 0.2
    ms = find_roots(e, certify=False).mu_star.real
    lo = dispersion_residual(ms - 1e-4, e).real
    hi = dispersion_residual(ms + 1e-4, e).real
    assert lo * hi < 0


def test_pole_raises():
    with pytest.raises(PoleError):
        dispersion_residual(0.05, 0.1)


def test_asymptotics_small_eps():
    e = 0.1
    r = find_roots(e, certify=False)
    mp0, ms0 = asymptotic_roots(e)
    assert abs(r.mu_plus - mp0) < 5e-3
    assert relative_residual(r.mu_plus, e) < 1e-12


def test_mode_coefficients_pinned(oracle):
    r = find_roots(0.1, certify=False)
    m = mode_coefficients(r.mu_plus, 0.1)
    ref = oracle["mode_eps0.1"]
    assert abs(m.a1 - complex(*ref["a1"])) < 1e-9
    assert abs(m.q1 - complex(*ref["q1"])) < 1e-9


def test_mode_coefficients_pole():
    with pytest.raises(PoleError):
        mode_coefficients(0.95, 0.1)


def test_comparison_function_zeros():
    e = 0.1
    z1, z2 = omega_zeros(e)
    # the pair sits O(eps^2) from mu+ and its conjugate (just left of the axis)
    mp_ = find_roots(e, certify=False).mu_plus
    assert min(abs(z1 - mp_)) < e * e and min(abs(z1 - mp_.conjugate())) < e * e
    near = z2[np.argmin(np.abs(z2 - 1))]
    assert abs(near - (1 - e / 2)) < e
    for z in z1:
        assert abs(omega1(z, e)) < 1e-9
    assert abs(omega2(near, e)) < 1e-9


def test_fundamental_interval_eps04():
    lo, hi = fundamental_interval(find_roots(0.4, certify=False))
    assert lo == 1.0
    assert hi == pytest.approx(2.1154, abs=1e-4)
