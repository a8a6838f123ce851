import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from wavesmith import regime_asymptotics as ra
from wavesmith.lotka_volterra import energy


def test_mass_map_closed_forms():
    assert ra.mass_map(0.0) == 0.0
    assert ra.mass_map(0.5) == pytest.approx(math.log(2), rel=1e-15)
    with pytest.raises(ra.RegimeDomainError):
        ra.mass_map(1.0)


@pytest.mark.parametrize("M", [1e-4, 1e-3, 0.01, 0.05, 0.1])
def test_small_mass_defect(M):
    assert abs(ra.mass_map(M) - M - M * M / 2) <= M ** 3


def test_iteration(oracle):
    seq = ra.iterate_mass(0.1, 20)
    assert seq.is_increasing()
    k = oracle["steps_to_exceed_0.1"]
    assert ra.steps_to_exceed(0.1) == k
    assert seq.first_above_half == k
    assert seq.values[k - 1] <= 0.5 < seq.values[k]
    with pytest.raises(ra.RegimeDomainError):
        ra.iterate_mass(0.0, 3)


def test_iteration_stops_at_one():
    seq = ra.iterate_mass(0.7, 10)
    assert seq.values[-1] >= 1.0 and len(seq.values) < 11


def test_ode1_against_integration():
    M, eps = 1 / 3, 0.1
    A0, B0, _ = ra.ode1_profiles(M, eps, 0.0)
    assert 2 * B0 / (1 - 2 * A0) == pytest.approx(eps / 2, rel=1e-12)
    sol = solve_ivp(lambda x, y: ra.ode1_rhs(y[0], y[1], eps), (0, 10), [A0, B0],
                    method="DOP853", rtol=1e-12, atol=1e-15)
    A, B, G = ra.ode1_profiles(M, eps, 10.0)
    assert A == pytest.approx(sol.y[0, -1], rel=1e-9)
    assert B == pytest.approx(sol.y[1, -1], rel=1e-9)
    assert G == pytest.approx(4 * A * B / (1 - 2 * A), rel=1e-14)


def test_ode1_slope_below_one():
    M, eps = 0.4, 0.05
    x = np.linspace(0, 0.01, 3)
    *_, G = ra.ode1_profiles(M, eps, x)
    slope = np.diff(np.log(G))[0] / (x[1] - x[0])
    assert abs(slope) <= M / (1 - M) + eps < 1


def test_ode1_domain():
    with pytest.raises(ra.RegimeDomainError):
        ra.ode1_profiles(0.5, 0.1, 1.0)
    with pytest.raises(ra.RegimeDomainError):
        ra.ode1_profiles(0.3, 0.1, -1.0)


def test_lv_matching_energy():
    assert ra.lv_matching(0.1, 0.1).E_match == pytest.approx(2.1072, abs=1e-4)
    # the b form is the eps -> 0 limit; at t = -10 it needs e^{e^5} << (1-M)^{-2/eps}
    m = ra.lv_matching(0.3, 1e-3)
    assert energy(m.a_asym(-10.0), m.b_asym(-10.0)) / m.E_match == pytest.approx(1.0, abs=0.01)
    assert m.a_asym(0.0) == 1.0
    assert float(np.log(m.b_asym(-2.0))) == pytest.approx(float(m.log_b_asym(-2.0)), rel=1e-12)


def test_transition_time():
    assert ra.transition_time(1 - 1 / math.e, 0.3) == pytest.approx(2 / 0.3, rel=1e-14)
    assert ra.diagonal_value(0.3, 0.05) == pytest.approx(0.7 ** 20, rel=1e-12)


def test_transition_time_against_lv_flow():
    M, eps = 0.3, 0.05
    m = ra.lv_matching(M, eps)
    # start where a is a few units and b ~ 1e-4; the b form omits the
    # t/2 drift of ln b, so a start deep in the past biases the crossing
    t0 = -3.0
    rhs = lambda t, y: [0.5 * (math.exp(y[1]) - 1), 0.5 * (1 - math.exp(y[0]))]
    ev = lambda t, y: y[0] - y[1]
    ev.terminal = True
    sol = solve_ivp(rhs, (t0, 100), [math.log(m.a_asym(t0)), m.log_b_asym(t0)],
                    method="DOP853", rtol=1e-11, atol=1e-12, events=ev)
    assert sol.t_events[0][0] == pytest.approx(ra.transition_time(M, eps), rel=0.05)


def test_ode2_profiles():
    M, eps = 0.3, 0.1
    A, B = ra.ode2_profiles(M, eps, 0.0)
    assert B == pytest.approx(eps / 2)
    x_exit, b_end = ra.ode2_exit(M, eps)
    assert b_end == pytest.approx(-math.log(1 - M))
    A, B = ra.ode2_profiles(M, eps, x_exit)
    assert A == pytest.approx(eps / 2, rel=1e-10)
    assert B == pytest.approx(b_end, rel=1e-12)
    with pytest.raises(OverflowError):
        ra.ode2_profiles(M, eps, 200.0)
    with pytest.raises(ra.RegimeDomainError):
        ra.ode2_profiles(M, eps, -1.0)


def test_ode2_rhs_consistent():
    M, eps = 0.3, 0.1
    sol = solve_ivp(lambda x, y: ra.ode2_rhs(y[0], y[1], eps), (0, 20),
                    list(ra.ode2_profiles(M, eps, 0.0)), method="DOP853", rtol=1e-12, atol=1e-15)
    assert sol.y[1, -1] == pytest.approx(ra.ode2_profiles(M, eps, 20.0)[1], rel=1e-9)


def test_tail_profile_reduces_to_g_one():
    from wavesmith.kinetic_additive import g_one
    s = np.linspace(0.5, 4, 8)
    assert np.allclose(ra.tail_profile(s + 1.0, 1.0, 0.0), g_one(s), rtol=1e-14)
    with pytest.raises(ra.RegimeDomainError):
        ra.tail_profile(0.0, 1.0, 0.1)
    s0 = ra.tail_crossover(0.1)
    assert ra.TAIL_C * math.exp(0.5 * s0) == pytest.approx(0.025 * math.exp(s0), rel=1e-12)


def test_tail_constant(oracle):
    assert ra.tail_constant_integral() == pytest.approx(math.sqrt(2 * math.pi), abs=1e-6)
    assert oracle["tail_integral"] == pytest.approx(math.sqrt(2 * math.pi), abs=1e-12)


@pytest.mark.parametrize("xi", ["10.0", "100.0"])
def test_voltapp4_defect_matches_oracle(oracle, xi):
    assert ra.voltapp4_defect(float(xi), 0.1) == pytest.approx(oracle["voltapp4_eps0.1"][xi],
                                                              rel=1e-6)


def test_classify_labels_constant_state():
    from wavesmith.kernel_constants import constant_state
    from wavesmith.volterra_march import TrajectoryHistory
    cs = constant_state(0.3)
    h = TrajectoryHistory.empty(0.3, 0.1, 0.0, 10)
    h.G[:], h.A[:], h.B[:] = cs.g_inf, cs.a_inf, cs.b_inf
    h.n = 10
    assert set(ra.classify(h, 0.3)) == {"LotkaVolterraCore"}
    h.B[5:] = -1.0
    assert ra.classify(h, 0.3)[7] == "Tail"


def test_mass_sequence_on_synthetic_cycles():
    from wavesmith.kernel_constants import constant_state
    from wavesmith.volterra_march import TrajectoryHistory
    e = 0.3
    cs = constant_state(e)
    x = np.linspace(0, 40, 4001)
    h = TrajectoryHistory.empty(e, x[1] - x[0], 0.0, x.size)
    h.A[:] = cs.a_inf * (1 + 0.5 * np.sin(x))
    h.B[:] = cs.b_inf * (1 + 0.5 * np.cos(x))
    h.G[:] = cs.g_inf
    h.n = x.size
    seq = ra.mass_sequence(h, e, start=0, b_order_one=1.0)
    # A crosses A_inf upward at x = 2 pi k, where B = 1.5 B_inf
    assert seq.x_n == pytest.approx([2 * math.pi * k for k in range(1, 7)], abs=1e-3)
    assert seq.values == pytest.approx([3 * cs.b_inf] * 6, rel=1e-5)


def test_predict_profile():
    pp = ra.predict(0.1, 0.2, n_cycles=2)
    assert pp.masses[1] == pytest.approx(ra.mass_map(0.2))
    assert np.all(np.diff(pp.x) > 0)
    assert pp.regime[0] == "Kinetic" and "Ode1" in pp.regime and "Ode2" in pp.regime
    assert np.all(pp.G > 0)
    with pytest.raises(ra.RegimeDomainError):
        ra.predict(0.1, 0.6)
