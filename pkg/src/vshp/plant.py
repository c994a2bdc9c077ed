"""Plant assembly: turbine model + waterway + governor + rotor, and trim.

State layout (absent blocks are skipped)::

    omega | turbine state | h_st, q_hr, pen1..penN | gov_int, gov_dfilt, g | P_g

The turbine state is q_t (Euler), q (Hygov, and IEEE with an inelastic
penstock) or x (linearised). IEEE otherwise has no turbine state: its flow
follows from the head each evaluation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import _kernels as K
from .core import PenstockMode, PlantParams
from .turbines import ModelKind, raise_for_code
from .waterway import tanh_realization

logger = logging.getLogger(__name__)

ROTOR_CODES = {"torque": K.ROTOR_TORQUE, "power": K.ROTOR_POWER, "unscaled": K.ROTOR_UNSCALED}
MODE_CODES = {PenstockMode.DELAY: K.DELAY, PenstockMode.LUMPED: K.LUMPED,
              PenstockMode.INELASTIC: K.INELASTIC}

P_STAR_RANGE = (0.0, 1.2)


class TrimError(RuntimeError):
    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class TrimInfeasibleError(TrimError):
    """No equilibrium exists for the requested setpoints."""


@dataclass(frozen=True)
class PlantInputs:
    P_star: float
    omega_star: float

    def __post_init__(self):
        if not (math.isfinite(self.P_star) and math.isfinite(self.omega_star)):
            raise ValueError("plant inputs must be finite")
        lo, hi = P_STAR_RANGE
        if not lo <= self.P_star <= hi:
            raise ValueError(f"P_star must lie in [{lo}, {hi}]")
        if self.omega_star <= 0:
            raise ValueError("omega_star must be > 0")


def _param_vector(params: PlantParams) -> np.ndarray:
    w, t, g = params.waterway, params.turbine, params.governor
    P = np.zeros(K.NPAR)
    P[K.TW], P[K.TE], P[K.Z0] = w.T_w, w.T_e, w.Z_0
    P[K.FP1], P[K.FP0], P[K.CS] = w.f_p1, w.f_p0, w.C_s
    P[K.TW2], P[K.FP2] = w.T_w2, w.f_p2
    P[K.RQ] = t.Q_Rt / w.Q_R
    P[K.RH] = w.H_R / t.H_Rt
    P[K.AT], P[K.QNL], P[K.DT] = t.A_t, t.q_nl, t.D_t
    P[K.PSI], P[K.XI], P[K.SIG], P[K.A1R] = t.psi, t.xi, t.sigma, t.alpha_1R
    P[K.TA] = t.T_a
    P[K.KP], P[K.KI], P[K.KD] = g.k_gp, g.k_gi, g.k_gd
    P[K.TG], P[K.TF] = g.T_G, g.T_f
    P[K.GMIN], P[K.GMAX], P[K.RATE] = g.g_min, g.g_max, g.rate_limit
    P[K.TCONV] = params.T_conv
    P[K.ROTOR] = ROTOR_CODES[t.rotor_law]
    P.setflags(write=False)
    return P


@dataclass(frozen=True, eq=False)
class Plant:
    kind: ModelKind
    params: PlantParams
    labels: tuple[str, ...]
    index: dict = field(repr=False)
    P: np.ndarray = field(repr=False)
    L: np.ndarray = field(repr=False)
    Ap: np.ndarray = field(repr=False)
    Bp: np.ndarray = field(repr=False)
    Cp: np.ndarray = field(repr=False)

    @property
    def nx(self) -> int:
        return len(self.labels)

    @property
    def mode(self) -> PenstockMode:
        return self.params.penstock_mode

    @property
    def has_waterway(self) -> bool:
        return self.kind in (ModelKind.EULER, ModelKind.IEEE)

    @property
    def uses_delay(self) -> bool:
        return self.has_waterway and self.mode is PenstockMode.DELAY

    def evaluate(self, x, inputs: PlantInputs, *, g_cmd_prev=None, tau=0.0,
                 limited=False, y_delay=float("nan")):
        """Derivative vector and output vector (see ``_kernels.OUTPUT_NAMES``).

        With ``limited=False`` the slew limit is inactive (trim, linearization);
        a NaN ``y_delay`` puts the travelling-wave penstock at steady state.
        """
        x = np.ascontiguousarray(x, dtype=float)
        if x.shape != (self.nx,):
            raise ValueError(f"state has shape {x.shape}, plant expects ({self.nx},)")
        dx = np.zeros(self.nx)
        out = np.empty(K.NOUT)
        gprev = x[self.index["g"]] if g_cmd_prev is None else g_cmd_prev
        code = K.evaluate(x, float(inputs.P_star), float(inputs.omega_star), float(gprev),
                          float(tau), bool(limited), float(y_delay), self.P, self.L,
                          self.Ap, self.Bp, self.Cp, dx, out)
        if code != K.OK:
            ctx = ", ".join(f"{n}={v:.6g}" for n, v in zip(self.labels, x))
            raise_for_code(code, f"{self.kind.value} plant at {ctx}")
        return dx, out

    def derivatives(self, x, inputs: PlantInputs, **kw) -> np.ndarray:
        return self.evaluate(x, inputs, **kw)[0]

    def outputs(self, x, inputs: PlantInputs, **kw) -> dict[str, float]:
        out = self.evaluate(x, inputs, **kw)[1]
        return dict(zip(K.OUTPUT_NAMES, out.tolist()))


def assemble(kind, params: PlantParams) -> Plant:
    kind = ModelKind.parse(kind)
    mode = params.penstock_mode
    labels = ["omega"]
    L = np.full(K.NLAYOUT, -1, dtype=np.int64)
    L[K.KIND] = kind.code
    L[K.MODE] = MODE_CODES[mode]
    L[K.I_W] = 0
    L[K.N_PEN] = 0
    Ap = np.zeros((0, 0))
    Bp = np.zeros(0)
    Cp = np.zeros(0)

    if kind is ModelKind.EULER:
        L[K.I_TURB] = len(labels)
        labels.append("q_t")
    elif kind is ModelKind.IEEE and mode is PenstockMode.INELASTIC:
        L[K.I_TURB] = len(labels)
        labels.append("q")
    elif kind is ModelKind.HYGOV:
        L[K.I_TURB] = len(labels)
        labels.append("q")
    elif kind is ModelKind.LINEARISED:
        L[K.I_TURB] = len(labels)
        labels.append("x")

    if kind in (ModelKind.EULER, ModelKind.IEEE):
        L[K.I_HST] = len(labels)
        L[K.I_QHR] = len(labels) + 1
        labels += ["h_st", "q_hr"]
        if mode is PenstockMode.LUMPED:
            A, B, C = tanh_realization(params.waterway, params.tanh_order)
            Ap, Bp, Cp = (np.ascontiguousarray(a) for a in (A, B, C))
            L[K.I_PEN] = len(labels)
            L[K.N_PEN] = len(B)
            labels += [f"pen{i + 1}" for i in range(len(B))]

    L[K.I_GINT] = len(labels)
    L[K.I_GZ] = len(labels) + 1
    L[K.I_G] = len(labels) + 2
    labels += ["gov_int", "gov_dfilt", "g"]
    if params.T_conv > 0:
        L[K.I_PG] = len(labels)
        labels.append("P_g")
    L[K.NX] = len(labels)
    L.setflags(write=False)
    return Plant(kind=kind, params=params, labels=tuple(labels),
                 index={n: i for i, n in enumerate(labels)},
                 P=_param_vector(params), L=L, Ap=Ap, Bp=Bp, Cp=Cp)


# --- trim -------------------------------------------------------------------

@dataclass(frozen=True)
class TrimResult:
    plant: Plant
    inputs: PlantInputs
    state: np.ndarray
    residual: float
    iterations: int
    outputs: dict

    @property
    def g(self) -> float:
        return float(self.state[self.plant.index["g"]])

    @property
    def h(self) -> float:
        return self.outputs["h"]

    @property
    def q(self) -> float:
        return self.outputs["q"]

    @property
    def eta_h(self) -> float:
        return self.outputs["eta_h"]

    @property
    def P_m(self) -> float:
        return self.outputs["P_m"]

    def named(self) -> dict[str, float]:
        return dict(zip(self.plant.labels, self.state.tolist()))


def _steady_hydraulics(plant: Plant, g: float, w: float):
    """Steady (q, turbine state, P_m) at opening g and speed w, or None if infeasible."""
    P = plant.P
    F = P[K.FP1] + P[K.FP2]
    dw = w - 1.0
    kind = plant.kind
    if kind is ModelKind.EULER:
        rq, rh = P[K.RQ], P[K.RH]
        kappa, _, code = K.euler_kinematics(g, rq, P[K.A1R])
        if code != K.OK or kappa <= 0:
            return None
        num = rh - P[K.SIG] * (w * w - 1.0)
        if num <= 0:
            return None
        qt = math.sqrt(num / (1.0 / kappa**2 + rh * F * rq * rq))
        q = rq * qt
        h = 1.0 - F * q * q
        _, _, pm, _, _, _, _, code = K.euler_turbine(
            qt, w, h * rh, g, rq, P[K.PSI], P[K.XI], P[K.SIG], P[K.A1R], P[K.TW])
        if code != K.OK:
            return None
        return q, qt, pm
    if kind is ModelKind.IEEE:
        h = 1.0 / (1.0 + F * g * g)
        q = g * math.sqrt(h)
        return q, q, P[K.AT] * h * (q - P[K.QNL]) - P[K.DT] * g * dw
    if kind is ModelKind.HYGOV:
        return g, g, P[K.AT] * (g - P[K.QNL]) - P[K.DT] * g * dw
    return g, g, g


def _initial_guess(plant: Plant, inputs: PlantInputs) -> np.ndarray:
    """Deterministic analytic guess: solve the steady power balance for g."""
    P = plant.P
    w = inputs.omega_star
    target = inputs.P_star * (w if plant.params.turbine.rotor_law == "unscaled" else 1.0)
    g_lo = max(plant.params.governor.g_min, 1e-6)
    g_hi = plant.params.governor.g_max
    if plant.kind is ModelKind.EULER:
        g_hi = min(g_hi, P[K.RQ] / math.sin(P[K.A1R]))

    def power(g):
        r = _steady_hydraulics(plant, g, w)
        return -math.inf if r is None else r[2]

    grid = np.linspace(g_lo, g_hi, 401)
    vals = np.array([power(g) for g in grid])
    hit = np.nonzero(vals >= target)[0]
    if not hit.size:
        best = float(np.max(vals))
        raise TrimInfeasibleError(
            f"{plant.kind.value}: P_star = {inputs.P_star} is not reachable at "
            f"omega_star = {w}; the steady power within g in [{g_lo:.3g}, {g_hi:.4g}] "
            f"peaks at {best:.4f}")
    i = hit[0]
    if i == 0:
        raise TrimInfeasibleError(
            f"{plant.kind.value}: P_star = {inputs.P_star} needs an opening below "
            f"{g_lo:.3g}")
    g = brentq(lambda g: power(g) - target, grid[i - 1], grid[i], xtol=1e-15, rtol=1e-15)

    q, turb, _ = _steady_hydraulics(plant, g, w)
    x = np.zeros(plant.nx)
    idx = plant.index
    x[idx["omega"]] = w
    if plant.L[K.I_TURB] >= 0:
        x[plant.L[K.I_TURB]] = turb
    if plant.has_waterway:
        x[idx["h_st"]] = 1.0 - P[K.FP2] * q * abs(q)
        x[idx["q_hr"]] = q
        n = plant.L[K.N_PEN]
        if n:
            ip = plant.L[K.I_PEN]
            x[ip:ip + n] = np.linalg.solve(plant.Ap, -plant.Bp * q)
    x[idx["gov_int"]] = g
    x[idx["g"]] = g
    if "P_g" in idx:
        x[idx["P_g"]] = inputs.P_star
    return x


def jacobian(plant: Plant, x, inputs: PlantInputs, rel_step=1e-6, abs_step=1e-6):
    """Central-difference d(dx/dt)/dx with step max(abs_step, rel_step*|x_i|)."""
    x = np.asarray(x, dtype=float)
    J = np.empty((plant.nx, plant.nx))
    for j in range(plant.nx):
        h = max(abs_step, rel_step * abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        J[:, j] = (plant.derivatives(xp, inputs) - plant.derivatives(xm, inputs)) / (2 * h)
    return J


def trim(plant: Plant, P_star: float, omega_star: float, tol: float = 1e-10,
         maxit: int = 100) -> TrimResult:
    """Equilibrium for constant setpoints by damped Newton from an analytic guess."""
    inputs = PlantInputs(float(P_star), float(omega_star))
    x = _initial_guess(plant, inputs)
    r = plant.derivatives(x, inputs)
    norm = float(np.max(np.abs(r)))
    it = 0
    while norm >= tol:
        if it >= maxit:
            raise TrimError(f"trim did not converge in {maxit} iterations; "
                            f"residual {norm:.3e}", norm)
        it += 1
        J = jacobian(plant, x, inputs)
        try:
            dx = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError as exc:
            raise TrimError(f"singular trim Jacobian: {exc}", norm) from exc
        lam = 1.0
        while True:
            xn = x + lam * dx
            try:
                rn = plant.derivatives(xn, inputs)
                nn = float(np.max(np.abs(rn)))
            except ValueError:
                nn = math.inf
            if nn < norm or lam < 1e-4:
                break
            lam *= 0.5
        if not math.isfinite(nn):
            raise TrimError("trim left the model's domain", norm)
        if nn >= norm and norm < 1e3 * tol:
            # at the floating-point floor; accept if within tolerance later
            break
        x, r, norm = xn, rn, nn
    if norm >= tol:
        raise TrimError(f"trim stalled at residual {norm:.3e}", norm)
    outputs = plant.outputs(x, inputs)
    g = x[plant.index["g"]]
    gov = plant.params.governor
    if not gov.g_min <= g <= gov.g_max:
        raise TrimInfeasibleError(f"trim opening g = {g:.6g} outside [{gov.g_min}, {gov.g_max}]")
    x.setflags(write=False)
    return TrimResult(plant=plant, inputs=inputs, state=x, residual=norm,
                      iterations=it, outputs=outputs)


def efficiency_vs_power(kind, params: PlantParams, powers, omega_star: float = 1.0):
    """Trimmed-plant efficiencies over power at fixed speed.

    Returns rows ``(P_star, g, h, eta_h, eta_total)`` where ``eta_total``
    also charges the waterway losses (head relative to the reservoir head 1).
    Unreachable points give NaN entries.
    """
    kind = ModelKind.parse(kind)
    if kind is ModelKind.LINEARISED:
        from .turbines import EfficiencyUndefinedError
        raise EfficiencyUndefinedError("efficiency not defined for the linearised model")
    plant = assemble(kind, params)
    rows = []
    for P in powers:
        try:
            tr = trim(plant, P, omega_star)
            rows.append((P, tr.g, tr.h, tr.eta_h, tr.eta_h * tr.h))
        except (TrimError, ValueError):
            rows.append((P,) + (float("nan"),) * 4)
    return rows
