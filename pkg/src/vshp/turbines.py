"""Hydraulic machine models: Euler, IEEE, Hygov and the linearised model.

Euler quantities are in turbine per unit (bases ``Q_Rt``, ``H_Rt``); the other
models work directly in plant per unit. Speed deviation in the loss terms is
taken from rated speed, ``dw = w - 1``.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import _kernels as K
from .core import TurbineParams, WaterwayParams

logger = logging.getLogger(__name__)


class ModelKind(str, enum.Enum):
    EULER = "euler"
    IEEE = "ieee"
    HYGOV = "hygov"
    LINEARISED = "linearised"

    @classmethod
    def parse(cls, value) -> "ModelKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        if key == "linearized":
            key = "linearised"
        try:
            return cls(key)
        except ValueError:
            raise ValueError(
                f"unknown model kind {value!r}; expected one of "
                f"{', '.join(k.value for k in cls)}") from None

    @property
    def code(self) -> int:
        return {"euler": K.EULER, "ieee": K.IEEE, "hygov": K.HYGOV,
                "linearised": K.LINEARISED}[self.value]


class TurbineDomainError(ValueError):
    """Operating point outside a turbine model's domain."""


class KinematicLimitError(TurbineDomainError):
    pass


class SingularOpeningError(TurbineDomainError):
    pass


class HeadCollapseError(TurbineDomainError):
    pass


class EfficiencyUndefinedError(TurbineDomainError):
    pass


_ERRORS = {
    K.KINEMATIC_LIMIT: KinematicLimitError,
    K.SINGULAR_OPENING: SingularOpeningError,
    K.HEAD_COLLAPSE: HeadCollapseError,
}


def raise_for_code(code: int, context: str = "") -> None:
    if code == K.OK:
        return
    cls = _ERRORS.get(code, FloatingPointError)
    msg = K.ERROR_MESSAGES.get(code, f"error code {code}")
    raise cls(f"{msg}{' (' + context + ')' if context else ''}")


@dataclass(frozen=True)
class TurbineOutputs:
    P_m: float
    T_m: float
    q: float
    h: float
    eta_h: float = float("nan")
    m_s: float = float("nan")
    kappa: float = float("nan")
    alpha_1: float = float("nan")

    def __post_init__(self):
        if math.isfinite(self.eta_h) and not 0.0 <= self.eta_h <= 1.05:
            logger.warning("hydraulic efficiency %.4f outside [0, 1.05]", self.eta_h)


def euler_kinematics(g, p: TurbineParams, w: WaterwayParams):
    """Opening degree ``kappa = (Q_R/Q_Rt) g`` and flow angle ``alpha_1``."""
    if g < 0:
        raise KinematicLimitError("guide-vane opening must be >= 0")
    kappa, a1, code = K.euler_kinematics(float(g), p.Q_Rt / w.Q_R, p.alpha_1R)
    raise_for_code(code, f"g = {g}, kappa*sin(alpha_1R) = {kappa * math.sin(p.alpha_1R):.6g}")
    return kappa, a1


def euler_step_quantities(q_t, omega, h_t, g, p: TurbineParams, w: WaterwayParams):
    """Momentum derivative and outputs of the Euler turbine.

    Returns ``(dq_t/dt, TurbineOutputs)``; the outputs carry plant per-unit
    flow and head.
    """
    rq = p.Q_Rt / w.Q_R
    if g < 0:
        raise KinematicLimitError("guide-vane opening must be >= 0")
    dqt, tm, pm, eta, ms, kappa, a1, code = K.euler_turbine(
        float(q_t), float(omega), float(h_t), float(g), rq,
        p.psi, p.xi, p.sigma, p.alpha_1R, w.T_w)
    raise_for_code(code, f"q_t = {q_t}, h_t = {h_t}, g = {g}")
    out = TurbineOutputs(P_m=pm, T_m=tm, q=q_t * rq, h=h_t * p.H_Rt / w.H_R,
                         eta_h=eta, m_s=ms, kappa=kappa, alpha_1=a1)
    return dqt, out


def ieee_outputs(g, omega, d_omega, h, p: TurbineParams):
    """Flow ``g sqrt(h)`` and power with the no-load and damping losses."""
    q, pm, code = K.ieee_turbine(float(g), float(d_omega), float(h), p.A_t, p.q_nl, p.D_t)
    raise_for_code(code, f"h = {h}")
    return q, pm


def hygov_step_quantities(q, g, d_omega, p: TurbineParams, T_w: float):
    """Returns ``(dq/dt, h, P_m)`` for the rigid water column."""
    dq, h, pm, code = K.hygov_turbine(float(q), float(g), float(d_omega),
                                      p.A_t, p.q_nl, p.D_t, T_w)
    raise_for_code(code, f"g = {g}")
    return dq, h, pm


def linearised_step_quantities(x, g, T_w: float):
    """Returns ``(dx/dt, P_m)``."""
    return K.linearised_turbine(float(x), float(g), T_w)


def linearised_transfer(s, T_w: float):
    """Reference transfer function P_m/g of the linearised model."""
    s = np.asarray(s)
    return (1 - T_w * s) / (1 + 0.5 * T_w * s)


# --- efficiency -----------------------------------------------------------

def efficiency(kind, *, g, omega=1.0, h=1.0, q_t=None, p: TurbineParams,
               w: WaterwayParams):
    """Hydraulic efficiency at an operating point.

    Euler: from the torque term at (q_t, omega, h_t = h). When q_t is omitted
    the momentum equation's steady flow is used. IEEE/Hygov: ``P_m/(h q)``
    with q = g sqrt(h).
    """
    kind = ModelKind.parse(kind)
    if kind is ModelKind.LINEARISED:
        raise EfficiencyUndefinedError("efficiency not defined for the linearised model")
    if kind is ModelKind.EULER:
        if q_t is None:
            q_t = euler_steady_flow(g, omega, h, p, w)
        _, out = euler_step_quantities(q_t, omega, h, g, p, w)
        if not math.isfinite(out.eta_h):
            raise EfficiencyUndefinedError("efficiency undefined at zero flow")
        return out.eta_h
    q, pm = ieee_outputs(g, omega, omega - 1.0, h, p)
    if h * q == 0:
        raise EfficiencyUndefinedError("efficiency undefined: h*q = 0")
    return pm / (h * q)


def euler_steady_flow(g, omega, h_t, p: TurbineParams, w: WaterwayParams):
    """Turbine flow where the Euler momentum derivative vanishes."""
    kappa, _ = euler_kinematics(g, p, w)
    rhs = h_t - p.sigma * (omega * omega - 1.0)
    if rhs < 0:
        raise HeadCollapseError("head too low to drive flow at this speed")
    return kappa * math.sqrt(rhs)


def euler_steady_head(q_t, kappa, omega, p: TurbineParams):
    """Turbine head for steady flow q_t at opening kappa.

    The sign of the sigma term follows ``p.head_sign`` (+1 is the momentum
    equation's fixed point).
    """
    return (q_t / kappa) ** 2 + p.head_sign * p.sigma * (omega * omega - 1.0)


def euler_efficiency_at_power(power, omega, p: TurbineParams, w: WaterwayParams,
                              h_t: float = 1.0):
    """Euler efficiency at fixed turbine head and power, solving for the opening.

    Returns ``(eta_h, g)``; the lowest opening reaching the power is used.
    """
    rq = p.Q_Rt / w.Q_R
    g_hi = rq / math.sin(p.alpha_1R)

    def pm(g):
        q_t = euler_steady_flow(g, omega, h_t, p, w)
        _, out = euler_step_quantities(q_t, omega, h_t, g, p, w)
        return out.P_m, out.eta_h

    grid = np.linspace(1e-3, g_hi, 200)
    vals = np.array([pm(g)[0] for g in grid])
    above = np.nonzero(vals >= power)[0]
    if not above.size or above[0] == 0:
        raise TurbineDomainError(f"power {power} not reachable at omega = {omega}")
    i = above[0]
    g = brentq(lambda g: pm(g)[0] - power, grid[i - 1], grid[i], xtol=1e-14, rtol=1e-14)
    return pm(g)[1], g


def ieee_efficiency_at_power(power, omega, p: TurbineParams, h: float = 1.0):
    """IEEE/Hygov efficiency at fixed head and power (closed form in g)."""
    sh = math.sqrt(h)
    denom = p.A_t * h * sh - p.D_t * (omega - 1.0)
    if denom <= 0:
        raise TurbineDomainError(f"power {power} not reachable at omega = {omega}")
    g = (power + p.A_t * h * p.q_nl) / denom
    return power / (h * g * sh), g


def efficiency_vs_speed(kind, omegas, power, p: TurbineParams, w: WaterwayParams,
                        h: float = 1.0) -> np.ndarray:
    """Efficiency over speed at fixed power and turbine head; NaN where unreachable."""
    kind = ModelKind.parse(kind)
    if kind is ModelKind.LINEARISED:
        raise EfficiencyUndefinedError("efficiency not defined for the linearised model")
    etas = []
    for om in omegas:
        try:
            if kind is ModelKind.EULER:
                etas.append(euler_efficiency_at_power(power, om, p, w, h)[0])
            else:
                etas.append(ieee_efficiency_at_power(power, om, p, h)[0])
        except TurbineDomainError:
            etas.append(float("nan"))
    return np.array(etas)
