"""PID speed governor without droop.

Signal chain: speed error -> PID (derivative through a first-order filter)
-> clamp to [g_min, g_max] -> slew limit -> servo lag 1/(1 + T_G s) -> g.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .core import GovernorParams


@dataclass(frozen=True)
class GovernorState:
    integ: float
    dfilt: float
    g_servo: float
    g_cmd_prev: float

    @classmethod
    def at_rest(cls, g: float) -> "GovernorState":
        """Equilibrium holding opening g with zero speed error."""
        return cls(integ=g, dfilt=0.0, g_servo=g, g_cmd_prev=g)


def governor_derivatives(state: GovernorState, d_omega, tau, p: GovernorParams,
                         limited: bool = True):
    """Derivatives of (integ, dfilt, g) a time ``tau`` into the current step."""
    dint, dz, dg, gcmd, _ = K.governor_rhs(
        d_omega, state.integ, state.dfilt, state.g_servo, state.g_cmd_prev, tau,
        limited, p.k_gp, p.k_gi, p.k_gd, p.T_f, p.T_G, p.g_min, p.g_max, p.rate_limit)
    return np.array([dint, dz, dg]), gcmd


def governor_step(state: GovernorState, omega_star, omega, dt, p: GovernorParams):
    """Advance the governor one RK4 step with the speed held over the step.

    Returns ``(new_state, g)``. The slew limit is referenced to the command
    at the start of the step, so consecutive commands differ by at most
    ``rate_limit * dt``.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    dw = omega_star - omega
    x = np.array([state.integ, state.dfilt, state.g_servo])

    def f(xs, tau):
        s = GovernorState(xs[0], xs[1], xs[2], state.g_cmd_prev)
        return governor_derivatives(s, dw, tau, p)[0]

    k1 = f(x, 0.0)
    k2 = f(x + 0.5 * dt * k1, 0.5 * dt)
    k3 = f(x + 0.5 * dt * k2, 0.5 * dt)
    k4 = f(x + dt * k3, dt)
    x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    end = GovernorState(x[0], x[1], x[2], state.g_cmd_prev)
    _, gcmd = governor_derivatives(end, dw, dt, p)
    new = GovernorState(float(x[0]), float(x[1]), float(x[2]), float(gcmd))
    return new, new.g_servo


def governor_linear_matrices(p: GovernorParams):
    """(A, B, C, D) from speed error to opening with all limits inactive.

    States: integrator, derivative filter, servo output.
    """
    Tf, TG = p.T_f, p.T_G
    A = np.array([
        [0.0, 0.0, 0.0],
        [0.0, -1.0 / Tf, 0.0],
        [1.0 / TG, -p.k_gd / (Tf * TG), -1.0 / TG],
    ])
    B = np.array([[p.k_gi], [1.0 / Tf], [(p.k_gp + p.k_gd / Tf) / TG]])
    C = np.array([[0.0, 0.0, 1.0]])
    D = np.zeros((1, 1))
    return A, B, C, D


def governor_transfer(s, p: GovernorParams):
    """Closed-form g/dw: PID with filtered derivative, then the servo lag."""
    s = np.asarray(s, dtype=complex)
    pid = p.k_gp + p.k_gi / s + p.k_gd * s / (1 + p.T_f * s)
    return pid / (1 + p.T_G * s)
