import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from vshp.core import PenstockMode
from vshp.waterway import (RESONANCE, DelayLine, InsufficientHistoryError, WaterwayState,
                           exact_penstock_response, headrace_derivative,
                           lumped_penstock_response, penstock_delay_head,
                           penstock_lumped_derivatives, steady_head,
                           surge_tank_derivative, tanh_realization, waterway_derivatives)


@pytest.fixture
def w(params):
    return params.waterway


def test_headrace_examples(w):
    assert headrace_derivative(1.0, 1 - 0.02, w) == pytest.approx(0.0, abs=1e-15)
    assert headrace_derivative(0.0, 0.0, w) == pytest.approx(1 / 4.34)
    assert round(headrace_derivative(0.0, 0.0, w), 4) == 0.2304
    lossless = type(w)(**{**w.__dict__, "f_p2": 0.0})
    assert headrace_derivative(0.8, 1.0, lossless) == 0.0


def test_surge_tank_examples(w):
    assert surge_tank_derivative(0.7, 0.7, w) == 0.0
    assert surge_tank_derivative(0.599, 0.5, w) == pytest.approx(1.0)
    # constant mismatch 0.1 for 1 s ramps the level by 0.1/C_s
    sol = solve_ivp(lambda t, h: [surge_tank_derivative(0.6, 0.5, w)], (0, 1), [0.0],
                    rtol=1e-12, atol=1e-12)
    assert sol.y[0, -1] == pytest.approx(0.1 / w.C_s, rel=1e-10)


def test_delay_zero_input(w):
    line = DelayLine(2 * w.T_e, 1e-3)
    line.prefill(0.0, 0.0, 1e-3)
    head, wave = penstock_delay_head(0.0, 0.0, line, w)
    assert head == 0.0 and wave == 0.0


def test_delay_step_is_surge_impedance(w):
    lossless = type(w)(**{**w.__dict__, "f_p1": 0.0})
    dt = 1e-3
    q0, dq = 0.5, 0.1
    line = DelayLine(2 * w.T_e, dt)
    line.prefill(0.0, w.Z_0 * q0, dt)  # steady wave for flow q0
    heads = []
    for k in range(1, int(2 * w.T_e / dt)):
        head, wave = penstock_delay_head(q0 + dq, k * dt, line, lossless)
        line.push(k * dt, wave)
        heads.append(head)
    assert np.allclose(heads, -w.Z_0 * dq, atol=1e-12)
    # after one round trip the reflection arrives
    head, _ = penstock_delay_head(q0 + dq, 2 * w.T_e + 2 * dt, line, lossless)
    assert abs(head + w.Z_0 * dq) > 1e-3


def test_delay_requires_history(w):
    line = DelayLine(2 * w.T_e, 1e-3)
    with pytest.raises(InsufficientHistoryError, match="prefill"):
        penstock_delay_head(0.1, 0.0, line, w)
    line.prefill(0.0, 0.0, 1e-3)
    with pytest.raises(InsufficientHistoryError, match="warm-up"):
        line.value_at(-1.0)


@pytest.mark.parametrize("f", [0.1, 0.5, 1.3])
def test_delay_sinusoid_matches_exact(w, f):
    lossless = type(w)(**{**w.__dict__, "f_p1": 0.0})
    dt = 1e-3
    line = DelayLine(2 * w.T_e, dt)
    line.prefill(0.0, 0.0, dt)
    n = int(round(max(6 / f, 20.0) / dt))
    t = np.arange(1, n + 1) * dt
    head = np.empty(n)
    for k, tk in enumerate(t):
        head[k], wave = penstock_delay_head(math.sin(2 * math.pi * f * tk), tk, line, lossless)
        line.push(tk, wave)
    # a lossless line keeps its start-up transient forever as odd harmonics of
    # 1/(4 T_e); fit them alongside the forced response
    cols = [np.sin(2 * np.pi * f * t), np.cos(2 * np.pi * f * t)]
    f0 = 1 / (4 * w.T_e)
    for m in range(1, int(0.45 / (dt * f0)), 2):
        cols += [np.sin(2 * np.pi * m * f0 * t), np.cos(2 * np.pi * m * f0 * t)]
    coef, *_ = np.linalg.lstsq(np.column_stack(cols), head, rcond=None)
    ratio = math.hypot(coef[0], coef[1])
    exact = abs(exact_penstock_response(f, lossless))
    assert ratio == pytest.approx(exact, rel=1e-2)


def test_lumped_equilibrium_has_no_dc_head(w):
    A, B, C = tanh_realization(w, (1, 2))
    x = np.linalg.solve(A, -B * 0.8)
    d, head = penstock_lumped_derivatives(0.8, x, w, (1, 2))
    assert np.allclose(d, 0, atol=1e-12)
    assert head == pytest.approx(-0.049 * 0.64, abs=1e-12)


def test_zero_order_truncation_is_rigid_column(w):
    _, head = penstock_lumped_derivatives(0.0, [], w, (0, 0), dq_dt=0.3)
    assert head == pytest.approx(-w.T_w * 0.3, rel=2e-3)
    assert head == pytest.approx(-w.Z_0 * w.T_e * 0.3, rel=1e-12)
    with pytest.raises(ValueError, match="dq_dt"):
        penstock_lumped_derivatives(0.0, [], w, (0, 0))


def test_realization_matches_rational_form(w):
    A, B, C = tanh_realization(w, (1, 2))
    assert A.shape == (4, 4)
    for f in np.linspace(0.01, 3, 10):
        s = 2j * np.pi * f
        ss = C @ np.linalg.solve(s * np.eye(4) - A, B)
        assert ss == pytest.approx(lumped_penstock_response(f, w, (1, 2)), rel=1e-10)


def test_improper_truncation_rejected(w):
    with pytest.raises(ValueError, match="strictly proper"):
        tanh_realization(w, (1, 1))


def test_low_order_accuracy_at_half_second_wave_time(w):
    slow = type(w)(**{**w.__dict__, "T_e": 0.5, "T_w": w.Z_0 * 0.5})
    exact = abs(exact_penstock_response(0.05, slow))
    approx = abs(lumped_penstock_response(0.05, slow, (0, 1)))
    assert approx == pytest.approx(exact, rel=0.05)


def test_exact_response_examples(w):
    assert exact_penstock_response(0.0, w) == 0
    assert exact_penstock_response(1 / (4 * w.T_e), w) == RESONANCE
    val = exact_penstock_response(0.1, w)
    assert abs(val) == pytest.approx(w.Z_0 * abs(math.tan(2 * math.pi * 0.1 * w.T_e)), rel=1e-12)
    assert exact_penstock_response(0.0, w, lossy=True) == pytest.approx(-w.f_p1)
    assert exact_penstock_response(1e-7, w, lossy=True) == pytest.approx(-w.f_p1, rel=1e-3)
    assert abs(exact_penstock_response(1e-7, w)) < 1e-5


def test_composed_steady_state(w):
    x = np.linalg.solve(*(lambda A, B: (A, -B))(*tanh_realization(w, (1, 2))[:2]))
    st = WaterwayState(h_st=1 - 0.02, q_hr=1.0, penstock_lumped=x)
    out = waterway_derivatives(st, 1.0, w)
    assert out.h == pytest.approx(0.931, abs=1e-12)
    assert out.dh_st == 0 and abs(out.dq_hr) < 1e-15
    assert np.allclose(out.dpen, 0, atol=1e-12)
    assert steady_head(1.0, w) == pytest.approx(0.931)


def test_no_flow_equilibrium(w):
    st = WaterwayState(h_st=1.0, q_hr=0.0, penstock_lumped=np.zeros(4))
    out = waterway_derivatives(st, 0.0, w)
    assert out.h == 1.0 and out.dh_st == 0 and out.dq_hr == 0
    assert np.all(out.dpen == 0)
    out = waterway_derivatives(WaterwayState(1.0, 0.0), 0.0, w, PenstockMode.INELASTIC, dq_dt=0.0)
    assert out.h == 1.0


def test_steady_head_independent_of_dynamics(w):
    other = type(w)(**{**w.__dict__, "T_e": 0.3, "T_w": 0.3 * w.Z_0, "C_s": 0.5, "T_w2": 9.0})
    for q in (0.2, 0.6, 1.0):
        assert steady_head(q, other) == steady_head(q, w)
