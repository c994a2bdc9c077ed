"""Headrace tunnel, surge tank and penstock dynamics.

Read-off of the waterway block diagram as equations (plant per unit)::

    q_net  = q_hr - q                         flow into the surge tank
    h_node = h_st - f_p0 q_net |q_net|        head at the tank junction
    T_w2 dq_hr/dt = 1 - h_node - f_p2 q_hr |q_hr|
    C_s  dh_st/dt = q_net
    h = h_node + penstock(q) - f_p1 q |q|     head at the turbine

The penstock term is ``-Z_0 tanh(s T_e)`` acting on q. In travelling-wave
form it is a delay loop on the wave variable ``x = 2 Z_0 q - x(t - 2 T_e)``
with output ``x(t - 2 T_e) - Z_0 q``; in lumped form it is a rational
truncation of the product expansion of tanh.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import polynomial as npoly

from .core import PenstockMode, WaterwayParams, friction_head_loss


class InsufficientHistoryError(RuntimeError):
    pass


RESONANCE = "resonance"


def headrace_derivative(q_hr, h_st, w: WaterwayParams):
    """dq_hr/dt for the tunnel between the reservoir (head 1) and the tank."""
    return (1.0 - h_st - friction_head_loss(w.f_p2, q_hr)) / w.T_w2


def surge_tank_derivative(q_hr, q_pen, w: WaterwayParams):
    return (q_hr - q_pen) / w.C_s


def surge_node_head(h_st, q_hr, q_pen, w: WaterwayParams):
    """Head seen by the tunnel and penstock; the tank loss acts on its net inflow."""
    return h_st - friction_head_loss(w.f_p0, q_hr - q_pen)


# --- travelling-wave penstock ----------------------------------------------

class DelayLine:
    """Ring buffer of timestamped samples with linear interpolation.

    Samples must be pushed with increasing timestamps. ``value_at`` refuses
    times older than the oldest retained sample.
    """

    def __init__(self, span: float, dt: float):
        if span <= 0 or dt <= 0:
            raise ValueError("span and dt must be > 0")
        self.size = int(math.ceil(span / dt)) + 3
        self.times = np.full(self.size, np.nan)
        self.values = np.full(self.size, np.nan)
        self.head = -1
        self.count = 0

    def push(self, t: float, value: float) -> None:
        if self.count and t <= self.times[self.head]:
            raise ValueError("delay-line timestamps must increase")
        self.head = (self.head + 1) % self.size
        self.times[self.head] = t
        self.values[self.head] = value
        self.count = min(self.count + 1, self.size)

    def prefill(self, t0: float, value: float, dt: float) -> None:
        """Fill the whole buffer with ``value`` at times up to and including t0."""
        for i in range(self.size - 1, -1, -1):
            self.push(t0 - i * dt, value)

    def _ordered(self):
        idx = (self.head - np.arange(self.count)[::-1]) % self.size
        return self.times[idx], self.values[idx]

    def value_at(self, t: float) -> float:
        if not self.count:
            raise InsufficientHistoryError(
                "delay line is empty; prefill it with the trim value before stepping")
        times, values = self._ordered()
        if t < times[0] - 1e-12 or t > times[-1] + 1e-12:
            raise InsufficientHistoryError(
                f"delay line covers [{times[0]:.6g}, {times[-1]:.6g}] s but "
                f"t = {t:.6g} s was requested; pad the history (warm-up) first")
        return float(np.interp(t, times, values))


def penstock_delay_head(q, t, line: DelayLine, w: WaterwayParams):
    """Penstock head contribution at time t in travelling-wave form.

    Returns ``(head, wave)``: head includes the friction loss, ``wave`` is the
    sample the caller pushes into ``line`` at time t.
    """
    y = line.value_at(t - 2.0 * w.T_e)
    head = y - w.Z_0 * q - friction_head_loss(w.f_p1, q)
    return head, 2.0 * w.Z_0 * q - y


# --- lumped tanh approximation ---------------------------------------------

def tanh_polynomials(T_e: float, order: tuple[int, int]):
    """Numerator and denominator of the truncated tanh(s T_e) product (ascending powers)."""
    n_num, n_den = order
    num = np.array([0.0, T_e])
    for n in range(1, n_num + 1):
        num = npoly.polymul(num, [1.0, 0.0, (T_e / (n * math.pi)) ** 2])
    den = np.array([1.0])
    for n in range(1, n_den + 1):
        den = npoly.polymul(den, [1.0, 0.0, (2.0 * T_e / ((2 * n - 1) * math.pi)) ** 2])
    return num, den


@lru_cache(maxsize=64)
def _realize(T_e: float, Z_0: float, order: tuple[int, int]):
    num, den = tanh_polynomials(T_e, order)
    num = -Z_0 * num
    n = len(den) - 1
    if len(num) > n:
        raise ValueError(
            f"tanh truncation {order} is not strictly proper; use the inelastic "
            "penstock mode for the (0, 0) case or raise n_den")
    lead = den[-1]
    den = den / lead
    num = num / lead
    A = np.zeros((n, n))
    A[:-1, 1:] = np.eye(n - 1)
    A[-1, :] = -den[:-1]
    B = np.zeros(n)
    B[-1] = 1.0
    C = np.zeros(n)
    C[: len(num)] = num
    # the raw companion form spans ~10 decades; rescale each state by powers of
    # the mean pole radius, then split the gain evenly between B and C
    r = abs(den[0]) ** (1.0 / n)
    d = r ** (np.arange(n) - n + 1.0)
    A = A * d[None, :] / d[:, None]
    B = B / d
    C = C * d
    k = math.sqrt(np.linalg.norm(B) / np.linalg.norm(C))
    B = B / k
    C = C * k
    for arr in (A, B, C):
        arr.setflags(write=False)
    return A, B, C


def tanh_realization(w: WaterwayParams, order: tuple[int, int]):
    """Scaled companion-form (A, B, C) of ``-Z_0 tanh(s T_e)`` truncated per ``order``."""
    return _realize(float(w.T_e), float(w.Z_0), tuple(order))


def penstock_lumped_derivatives(q, states, w: WaterwayParams, order=(1, 2), dq_dt=None):
    """State derivatives and head contribution of the lumped penstock.

    The (0, 0) truncation has no states and needs the flow derivative:
    its head is ``-T_w dq/dt``.
    """
    states = np.asarray(states, dtype=float)
    loss = friction_head_loss(w.f_p1, q)
    if tuple(order) == (0, 0):
        if dq_dt is None:
            raise ValueError("the (0, 0) truncation needs dq_dt")
        return np.zeros(0), -w.Z_0 * w.T_e * dq_dt - loss
    A, B, C = tanh_realization(w, order)
    if states.shape != B.shape:
        raise ValueError(f"expected {B.size} penstock states, got {states.size}")
    return A @ states + B * q, float(C @ states) - loss


def lumped_penstock_response(f, w: WaterwayParams, order=(1, 2)):
    """h/q of the truncated approximation at frequency f [Hz] (any order)."""
    num, den = tanh_polynomials(w.T_e, order)
    s = 2j * np.pi * np.asarray(f, dtype=float)
    return -w.Z_0 * npoly.polyval(s, num) / npoly.polyval(s, den)


def exact_penstock_response(f, w: WaterwayParams, lossy: bool = False):
    """h/q of the distributed penstock at frequency f [Hz].

    Lossless: ``-Z_0 tanh(s T_e)``. Lossy: the friction enters as
    ``F = f_p1 / T_w`` in ``-Z_0 sqrt(1 + F/s) tanh(sqrt(s^2 + F s) T_e)``,
    whose f -> 0 limit is the resistive loss ``-f_p1``. Returns ``RESONANCE``
    where the lossless response has a pole.
    """
    if f < 0:
        raise ValueError("frequency must be >= 0")
    if not lossy:
        if abs(math.cos(2 * math.pi * f * w.T_e)) < 1e-12:
            return RESONANCE
        return complex(-w.Z_0 * np.tanh(2j * np.pi * f * w.T_e))
    F = w.f_p1 / w.T_w
    if f == 0:
        return complex(-w.f_p1)
    s = 2j * np.pi * f
    gamma = np.sqrt(s * s + F * s)
    return complex(-w.Z_0 * np.sqrt(1 + F / s) * np.tanh(gamma * w.T_e))


# --- composed waterway ------------------------------------------------------

@dataclass
class WaterwayState:
    h_st: float
    q_hr: float
    penstock_lumped: np.ndarray = field(default_factory=lambda: np.zeros(0))
    delay_line: DelayLine | None = None


@dataclass
class WaterwayOutput:
    h: float
    dh_st: float
    dq_hr: float
    dpen: np.ndarray
    wave: float = float("nan")


def waterway_derivatives(state: WaterwayState, q_turbine, w: WaterwayParams,
                         mode=PenstockMode.LUMPED, order=(1, 2), t=0.0, dq_dt=None):
    """Turbine head and waterway derivatives for a given turbine flow.

    ``t`` is the current time for the travelling-wave mode; ``dq_dt`` is
    needed only by the inelastic mode.
    """
    mode = PenstockMode.parse(mode)
    q = q_turbine
    h_node = surge_node_head(state.h_st, state.q_hr, q, w)
    wave = float("nan")
    if mode is PenstockMode.DELAY:
        if state.delay_line is None:
            raise InsufficientHistoryError("travelling-wave mode needs a delay line")
        pen, wave = penstock_delay_head(q, t, state.delay_line, w)
        dpen = np.zeros(0)
    elif mode is PenstockMode.INELASTIC:
        dpen, pen = penstock_lumped_derivatives(q, [], w, (0, 0), dq_dt=dq_dt)
    else:
        dpen, pen = penstock_lumped_derivatives(q, state.penstock_lumped, w, order)
    return WaterwayOutput(
        h=h_node + pen,
        dh_st=surge_tank_derivative(state.q_hr, q, w),
        dq_hr=headrace_derivative(state.q_hr, h_node, w),
        dpen=dpen,
        wave=wave,
    )


def steady_head(q, w: WaterwayParams):
    """Turbine head at hydraulic equilibrium with flow q: only losses remain."""
    return 1.0 - friction_head_loss(w.f_p2, q) - friction_head_loss(w.f_p1, q)
