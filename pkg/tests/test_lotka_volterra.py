import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from wavesmith import lotka_volterra as lv
from wavesmith.kernel_constants import DomainError


def test_rhs_equilibrium_and_substitution():
    d = lv.lv_rhs(lv.LvState(1.0, 1.0), 0.1, leading_only=True)
    assert (d.a, d.b) == (0.0, 0.0)
    d = lv.lv_rhs(lv.LvState(1.0, 2.0), 0.1, leading_only=True)
    assert d.a == pytest.approx(0.5) and d.b == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(DomainError):
        lv.lv_rhs(lv.LvState(0.0, 1.0), 0.1)


def test_energy_values():
    assert lv.energy(1.0, 1.0) == 0.0
    assert lv.energy(math.e, 1.0) == pytest.approx(math.e - 2)
    assert lv.energy(0.3, 2.5) == lv.energy(2.5, 0.3)
    with pytest.raises(DomainError):
        lv.energy(-1.0, 1.0)
    al, be = math.log(0.4), math.log(3.0)
    assert lv.energy_log(al, be) == pytest.approx(lv.energy(0.4, 3.0), rel=1e-14)


def test_energy_rate_matches_pump():
    s = lv.LvState(0.7, 1.6)
    e = 0.05
    # (eps/4)(b - a)(1 - a) plus O(eps^2)
    assert lv.energy_rate(s, e) == pytest.approx(0.25 * e * (1.6 - 0.7) * 0.3, rel=0.1)


def test_jacobian_at_equilibrium():
    # eigenvalues: a fast pair near -/+ (1/eps) and a slow oscillation with
    # real part eps/8 and frequency 1/2 + O(eps)
    e = 0.1
    ev = np.linalg.eigvals(lv.jacobian(e))
    slow = ev[np.abs(ev) < 1.0]
    assert slow.size == 2
    assert np.allclose(slow.real, e / 8, rtol=1e-3)
    assert np.allclose(np.abs(slow.imag), 0.5 + 0.12 * e, atol=2 * e * e)
    fast = np.sort(ev[np.abs(ev) >= 1.0].real)
    assert fast == pytest.approx([-(1 / e - 0.5), 1 / e - 0.5], rel=1e-6)


def test_b_max_solves_contour():
    for E in (1e-6, 1e-3, 1.0, 50.0):
        b = lv.b_max(E)
        assert b - math.log(b) - 1 == pytest.approx(E, rel=1e-10)
        assert b > 1
    with pytest.raises(DomainError):
        lv.b_max(0.0)


@pytest.mark.parametrize("E", ["0.001", "1.0", "10.0", "100.0"])
def test_d_of_e_against_area_oracle(oracle, E):
    assert lv.d_of_e(float(E)) == pytest.approx(oracle["lv_D"][E], rel=1e-8)


@pytest.mark.parametrize("E", ["0.001", "1.0", "10.0"])
def test_period_against_oracle(oracle, E):
    assert lv.trace_cycle(float(E)).period == pytest.approx(oracle["lv_T"][E], rel=1e-8)


def test_small_energy_limit():
    E = 1e-3
    assert lv.d_of_e(E) / (4 * math.pi * E) == pytest.approx(1.0, abs=0.02)
    assert lv.trace_cycle(E).period == pytest.approx(4 * math.pi, rel=1e-3)


def test_trace_invariants():
    o = lv.trace_cycle(5.0, samples=200)
    assert o.contour.shape == (200, 2)
    assert o.drift < 1e-7
    E = lv.energy(o.contour[:, 0], o.contour[:, 1])
    assert np.max(np.abs(E - 5.0)) < 1e-7
    # time reversal: the two diagonal crossings are half a period apart
    assert len(o.diagonal_phases) == 2
    assert o.diagonal_phases[1] - o.diagonal_phases[0] == pytest.approx(0.5 * o.period, rel=1e-6)


def test_trace_limits():
    with pytest.raises(lv.TraceError):
        lv.trace_cycle(lv.E_CEILING * 2)
    with pytest.raises(DomainError):
        lv.trace_cycle(-1.0)


def test_d_table_threaded_equals_serial(monkeypatch):
    Es = [0.1, 1.0, 3.0]
    a = lv.d_table(Es, workers=1)
    monkeypatch.setenv("WAVESMITH_THREADS", "2")
    b = lv.d_table(Es, workers=4)
    assert [o.d_of_e for o in a] == [o.d_of_e for o in b]


def test_thread_env_validation(monkeypatch):
    from wavesmith.parallel import worker_count
    monkeypatch.setenv("WAVESMITH_THREADS", "3")
    assert worker_count(8) == 3
    monkeypatch.setenv("WAVESMITH_THREADS", "many")
    with pytest.raises(ValueError):
        worker_count()


def test_adiabatic_map_small_energy():
    E, e = 1e-3, 0.1
    step = lv.adiabatic_map(E, e)
    assert step.valid
    assert (step.value - E) / (0.1 * math.pi * E) == pytest.approx(1.0, abs=0.02)
    assert not lv.adiabatic_map(10.0, 0.1).valid


def test_cycles_to_validity_edge(oracle):
    assert lv.cycles_to_validity_edge(0.01, 0.05) == oracle["cycles_to_edge_E0.01_eps0.05"]


def test_adiabatic_map_tracks_corrected_flow():
    # one cycle of the eps-corrected (a, b) flow changes E by about
    # (eps/4) D(E); p and q do not feed back into (a, b)
    e, E0 = 0.02, 0.5

    def rhs(u, y):
        d = lv.lv_rhs(lv.LvState(y[0], y[1]), e)
        return [d.a, d.b]
    ev = lambda u, y: y[0] - 1.0
    ev.direction = 1.0
    sol = solve_ivp(rhs, (0.0, 60.0), [1.0, lv.b_max(E0)], method="DOP853", rtol=1e-11,
                    atol=1e-13, events=ev)
    k = int(np.argmax(sol.t_events[0] > 1.0))      # skip the start on a = 1
    a1, b1 = sol.y_events[0][k]
    dE = lv.energy(a1, b1) - E0
    assert dE == pytest.approx(0.25 * e * lv.d_of_e(E0), rel=0.15)
    assert sol.t_events[0][k] == pytest.approx(lv.trace_cycle(E0).period, rel=0.05)


def test_mass_consistency_small_mass():
    r = lv.mass_consistency(0.01, 2e-4)
    assert 1.0 < r < 1.3
