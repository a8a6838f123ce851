import math

import numpy as np
import pytest
from scipy.integrate import quad

from wavesmith import instability as ins

EPS = 0.1


def spec(A1=1e-3, sign="plus"):
    return ins.TriggerSpec(0.0, sign, 1e-4, A1, 1e-2)


def test_spec_validation():
    with pytest.raises(ValueError):
        ins.TriggerSpec(0.0, "up", 1e-4, 1e-3, 1e-2)
    with pytest.raises(ValueError):
        ins.TriggerSpec(0.0, "plus", -1.0, 1e-3, 1e-2)
    with pytest.raises(ValueError):
        ins.TriggerSpec(0.0, "plus", 1e-4, 0.0, 1e-2)
    s = spec()
    assert s.P1 == pytest.approx(4e-5)
    assert s.x1 == pytest.approx(-math.log(1e-4))


def test_q_template_branches():
    s = ins.TriggerSpec(2.0, "minus", 1e-4, 1e-3, 1e-2)
    assert ins.q_template(2.0, s, EPS) == 0.0
    for sign in ("plus", "minus"):
        t = ins.TriggerSpec(2.0, sign, 1e-4, 1e-3, 1e-2)
        assert ins.q_template(-60.0, t, EPS) == pytest.approx(1e-4, rel=1e-15)
    assert ins.q_template(0.0, spec(), EPS) == pytest.approx(2e-4)


@pytest.mark.parametrize("A1", ["1e-3", "1e-4", "1e-5"])
def test_t_eps_against_oracle(oracle, A1):
    assert ins.t_eps(float(A1)) == pytest.approx(oracle["t_eps"][A1], rel=1e-12)


def test_t_eps_iterated_log():
    assert ins.t_eps_iterated_log(1e-3) == pytest.approx(math.log(math.log(500)), rel=1e-12)
    assert ins.t_eps_iterated_log(1e-3) == pytest.approx(1.826, abs=1e-3)


def test_fast_system_closed_parts():
    t = np.linspace(-12, 2, 1401)
    pr = ins.fast_system(t, spec(), EPS)
    assert np.allclose(pr.Q, np.exp(t), rtol=1e-14)
    assert np.allclose(pr.pq, np.expm1(np.exp(t)), rtol=1e-10)
    assert pr.p_hat[0] == pytest.approx(1.0, abs=1e-4)
    assert np.all(pr.G() > 0)


@pytest.mark.parametrize("A1", [1e-3, 1e-5])
def test_b_hat_zero_near_t_eps(A1):
    t = np.linspace(-10, 4, 2801)
    pr = ins.fast_system(t, spec(A1), EPS)
    assert pr.b_zero() == pytest.approx(ins.t_eps(A1), rel=0.10)


def test_a_hat_bound():
    t = np.linspace(-10, 4, 2801)
    pr = ins.fast_system(t, spec(), EPS)
    c = ins.a_hat_bound_constant(pr)
    assert 0 < c < 5


def test_mollifier():
    A1 = 1e-4
    d = ins.mollifier_delta(A1)
    assert d == pytest.approx(math.exp(-ins.t_eps(A1)))
    te = ins.t_eps(A1)
    num = quad(lambda t: ins.mollifier_profile(t, A1), te - 1, te, epsabs=1e-13)[0]
    assert num == pytest.approx(ins.mollifier_mass(A1, te - 1), rel=1e-8)
    assert ins.mollifier_mass(A1) == 1.0
    assert ins.mollifier_gap(A1) <= 0.25
    # concentration sharpens as A1 decreases
    assert ins.mollifier_delta(1e-8) < ins.mollifier_delta(1e-4) < ins.mollifier_delta(1e-2)
    with pytest.raises(ValueError):
        ins.mollifier_profile(0.0, 0.7)


def test_constant_state_ratio_is_order_eps():
    for e in (0.05, 0.1, 0.2):
        assert 0.3 < ins.constant_state_ratio(e) / e < 0.8


def test_amplitude_out_matches_alpha_family():
    from wavesmith.kinetic_additive import alpha_family
    fam = alpha_family(None, 1e-3)
    i = int(np.argmin(np.abs(fam.x - 5.0)))
    measured = (fam.Q[i] - fam.G[i]) * math.exp(-fam.x[i])
    assert measured == pytest.approx(ins.amplitude_out(1e-3, 0.5), rel=1e-2)


def test_one_cycle_confinement():
    ra, rb = ins.one_cycle_confinement(1.0, EPS)
    assert 0.5 < ra <= 1.0 <= rb < 2.0


def test_synthetic_history_layout():
    s = spec()
    hist, prof = ins.synthetic_history(s, EPS, h=0.02)
    assert hist.n == prof.t.size
    assert hist.x[0] == pytest.approx(s.x1 + prof.t[0])
    assert np.allclose(hist.A[:hist.n], s.A1 * prof.a_hat)


def test_trigger_monitor():
    from wavesmith.volterra_march import TrajectoryHistory
    e = 0.3
    k = 1 - e / 2
    x = np.linspace(0, 10, 1001)
    h = TrajectoryHistory.empty(e, x[1] - x[0], 0.0, x.size)
    h.G[:] = 1.0
    h.Q[:] = (1.0 - 1e-3 * np.exp(x)) / k
    h.n = x.size
    h.regime = ["Kinetic"] * x.size
    out = ins.trigger_monitor(h, e, threshold=0.1)
    assert out["sign"] == "minus" and out["type"] == "I"
    # |d|/G = 1e-3 e^x / k crosses 0.1 at x = ln(100 k)
    assert out["x"] == pytest.approx(math.log(100 * k), abs=0.02)
    h.Q[:] = 1.0 / k
    assert ins.trigger_monitor(h, e) is None
