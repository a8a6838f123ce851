import math

import numpy as np
import pytest

from wavesmith import shooting as sh
from wavesmith.dispersion import find_roots
from wavesmith.kernel_constants import constant_state
from wavesmith.kinetic_additive import solve_kinetic
from wavesmith.volterra_march import TrajectoryHistory


def test_outcome_kinds():
    assert sh.ShootOutcome("QSignChange", 1.0).kind == "QSignChange"
    with pytest.raises(ValueError):
        sh.ShootOutcome("Exploded")


def test_config_validation():
    with pytest.raises(ValueError):
        sh.ShootConfig(0.0)
    with pytest.raises(ValueError):
        sh.ShootConfig(0.4, bisection_tol=1e-8)
    with pytest.raises(ValueError):
        sh.ShootConfig(0.4, grid=1)
    roots = find_roots(0.4, certify=False)
    lo, hi = sh.ShootConfig(0.4).bracket(roots)
    assert lo == 1.0 and hi == pytest.approx(2.1154, abs=1e-4)
    with pytest.raises(ValueError):
        sh.ShootConfig(0.4, L_low=0.5).bracket(roots)
    with pytest.raises(ValueError):
        sh.ShootConfig(0.4, L_low=1.5, L_high=1.2).bracket(roots)


def _cycles(eps=0.3, length=40.0, dip=None):
    cs = constant_state(eps)
    x = np.linspace(0, length, int(length * 100) + 1)
    h = TrajectoryHistory.empty(eps, x[1] - x[0], 0.0, x.size)
    h.A[:] = cs.a_inf * (1 + 0.5 * np.sin(x))
    h.B[:] = cs.b_inf * (1 + 0.5 * np.cos(x))
    h.G[:] = cs.g_inf * (1 + 0.1 * np.sin(x))
    h.Q[:] = h.G / (1 - eps / 2)
    h.n = x.size
    return h


def test_cycle_continues_on_synthetic_cycles():
    out = sh.classify_outcome(_cycles(), 0.3)
    assert out.kind == "CycleContinues"
    assert out.m_next == pytest.approx(3 * constant_state(0.3).b_inf, rel=1e-4)


def test_sign_change_detected():
    h = _cycles()
    h.Q[2000:] = -1e-3 * h.Q[2000:]
    out = sh.classify_outcome(h, 0.3)
    assert out.kind == "QSignChange"
    assert out.x == pytest.approx(h.x[2000] - h.h, abs=h.h)


def test_round_off_dip_is_not_a_sign_change():
    h = _cycles()
    h.B[1500] = -1e-12 * h.B.max()
    assert sh.classify_outcome(h, 0.3).kind == "CycleContinues"


def test_first_of_two_sign_events_wins():
    h = _cycles()
    h.Q[3000:] *= -1
    h.B[2500:] *= -1
    assert sh.classify_outcome(h, 0.3).kind == "BSignChange"


def test_inconclusive_without_structure():
    cs = constant_state(0.3)
    h = TrajectoryHistory.empty(0.3, 0.1, 0.0, 50)
    h.G[:], h.A[:], h.B[:], h.Q[:] = cs.g_inf, cs.a_inf, cs.b_inf, cs.q_inf
    h.n = 50
    assert sh.classify_outcome(h, 0.3).kind == "Inconclusive"


def test_kinetic_profile_tail_converges():
    prof = solve_kinetic(1.0)
    out = sh.classify_outcome(prof.history, 0.0)
    assert out.kind == "TailConverged"
    assert out.detail < sh.TAIL_TOL
    assert abs(out.x) < 0.05


def test_supercritical_mass_changes_sign():
    # rho = 1.5 carries mass 0.6 > 1/2
    prof = solve_kinetic(1.5, window=(-25.0, 30.0))
    assert sh.classify_outcome(prof.history, 0.0).kind == "BSignChange"


def test_fit_tail_needs_decay():
    assert sh.fit_tail(_cycles(), 0.3) is None


def test_trajectory_report_statistics():
    h = _cycles()
    xn, ms = [1.0, 2.0, 3.0], [0.1, -math.log(0.9) * 1.05, 0.2]
    rep = sh.trajectory_report(h, 0.3, xn, ms)
    assert rep["oscillation_count"] == 3 and rep["terminal_m"] == 0.2
    assert rep["mass_map_errors"][0] == pytest.approx(0.05)
    assert rep["min_g_ratio"] == pytest.approx(0.9 / 1.1, rel=1e-4)


def test_tune_c_star_growth_rate():
    # the fast response to a c_star perturbation grows at mu*
    cfg = sh.ShootConfig(0.3)
    roots = find_roots(0.3, certify=False)
    c, rep = sh.tune_c_star(cfg, 1.5, roots)
    assert abs(rep.d_rel_end) <= 1e-3
    assert rep.growth_rate == pytest.approx(roots.mu_star.real, rel=0.10)
    assert rep.as_dict()["l_star"] == 1.5
    assert "trajectory" not in rep.as_dict()
