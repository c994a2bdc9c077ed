"""Compiled plant equations.

Every model equation lives here once, as scalar ``njit`` functions. The public
modules (waterway, turbines, governor, plant) wrap them with Python-level
validation and exceptions; the plant derivative and the RK4 loop compose them
without leaving compiled code.

Errors are reported as integer codes instead of exceptions so the integrator
can stop cleanly and hand back the trace prefix.
"""

import math

import numpy as np
from numba import njit

OK = 0
KINEMATIC_LIMIT = 1
SINGULAR_OPENING = 2
HEAD_COLLAPSE = 3
LOOP_FAILED = 4
NONFINITE = 5
ROTOR_STALL = 6
DELAY_HISTORY = 7

ERROR_MESSAGES = {
    KINEMATIC_LIMIT: "guide-vane opening beyond kinematic limit",
    SINGULAR_OPENING: "singular opening: gate closed against flow",
    HEAD_COLLAPSE: "head collapse: turbine head is not positive",
    LOOP_FAILED: "head/flow algebraic loop did not converge",
    NONFINITE: "non-finite state derivative",
    ROTOR_STALL: "rotor speed is not positive",
    DELAY_HISTORY: "insufficient delay-line history",
}

EULER, IEEE, HYGOV, LINEARISED = 0, 1, 2, 3
DELAY, LUMPED, INELASTIC = 0, 1, 2
ROTOR_TORQUE, ROTOR_POWER, ROTOR_UNSCALED = 0, 1, 2

# parameter vector slots
(TW, TE, Z0, FP1, FP0, CS, TW2, FP2, RQ, RH, AT, QNL, DT, PSI, XI, SIG, A1R,
 TA, KP, KI, KD, TG, TF, GMIN, GMAX, RATE, TCONV, ROTOR) = range(28)
NPAR = 28

# layout slots (state indices, -1 when absent)
(KIND, MODE, I_W, I_TURB, I_HST, I_QHR, I_PEN, N_PEN,
 I_GINT, I_GZ, I_G, I_PG, NX) = range(13)
NLAYOUT = 13

# output slots
(O_PM, O_TM, O_H, O_Q, O_ETA, O_GCMD, O_PG, O_WAVE, O_KAPPA, O_MS, O_QT,
 O_GSTAR) = range(12)
NOUT = 12
OUTPUT_NAMES = ("P_m", "T_m", "h", "q", "eta_h", "g_cmd", "P_g", "wave",
                "kappa", "m_s", "q_t", "g_star")

LOOP_TOL = 1e-13
LOOP_MAXIT = 50


@njit(cache=True)
def sqloss(f, q):
    return f * q * abs(q)


@njit(cache=True)
def euler_kinematics(g, rq, a1R):
    """Opening degree and flow angle; code KINEMATIC_LIMIT past asin's domain."""
    kappa = g / rq
    s = kappa * math.sin(a1R)
    if kappa < 0.0 or s > 1.0 + 1e-12:
        return kappa, np.nan, KINEMATIC_LIMIT
    if s > 1.0:
        s = 1.0
    return kappa, math.asin(s), OK


@njit(cache=True)
def euler_turbine(qt, w, ht, g, rq, psi, xi, sig, a1R, Tw):
    """Returns (dqt, T_m, P_m, eta, m_s, kappa, alpha_1, code)."""
    kappa, a1, code = euler_kinematics(g, rq, a1R)
    nan = np.nan
    if code != OK:
        return nan, nan, nan, nan, nan, kappa, a1, code
    if kappa == 0.0:
        if qt != 0.0:
            return nan, nan, nan, nan, nan, kappa, a1, SINGULAR_OPENING
        ms = 0.0
        flow = 0.0
    else:
        ms = xi * qt / kappa * (math.cos(a1) + math.tan(a1R) * math.sin(a1))
        flow = qt * abs(qt) / (kappa * kappa)
    if not ht > 0.0:
        return nan, nan, nan, nan, ms, kappa, a1, HEAD_COLLAPSE
    dqt = (ht - flow - sig * (w * w - 1.0)) / Tw
    tm = qt * (ms - psi * w) / ht
    pm = tm * w
    eta = (ms - psi * w) * w / ht if qt != 0.0 else nan
    return dqt, tm, pm, eta, ms, kappa, a1, OK


@njit(cache=True)
def ieee_turbine(g, dw, h, At, qnl, Dt):
    """Returns (q, P_m, code) for q = g*sqrt(h)."""
    if h < 0.0:
        return np.nan, np.nan, HEAD_COLLAPSE
    q = g * math.sqrt(h)
    return q, At * h * (q - qnl) - Dt * g * dw, OK


@njit(cache=True)
def hygov_turbine(q, g, dw, At, qnl, Dt, Tw):
    """Returns (dq, h, P_m, code) for the rigid-column model."""
    if g <= 0.0:
        return np.nan, np.nan, np.nan, SINGULAR_OPENING
    r = q / g
    h = r * r
    return (1.0 - h) / Tw, h, At * h * (q - qnl) - Dt * g * dw, OK


@njit(cache=True)
def linearised_turbine(x, g, Tw):
    """(1 - Tw s)/(1 + Tw s/2) split as -2 + 3/(1 + Tw s/2)."""
    return (g - x) / (0.5 * Tw), 3.0 * x - 2.0 * g


@njit(cache=True)
def governor_rhs(dw, integ, z, g, gprev, tau, limited,
                 kp, ki, kd, Tf, TG, gmin, gmax, rate):
    """PID with filtered derivative, clamp, slew limit and servo lag.

    With ``limited`` the command may move at most ``rate*tau`` away from
    ``gprev`` (the command at the start of the current step). The integrator
    is frozen while the held command opposes the error.
    Returns (dinteg, dz, dg, g_cmd, g_star).
    """
    deriv = (dw - z) / Tf
    gstar = kp * dw + integ + kd * deriv
    gcmd = min(max(gstar, gmin), gmax)
    if limited:
        lo = gprev - rate * tau
        hi = gprev + rate * tau
        gcmd = min(max(gcmd, lo), hi)
    dint = ki * dw
    if (gstar - gcmd) * dw > 0.0:
        dint = 0.0
    return dint, deriv, (gcmd - g) / TG, gcmd, gstar


@njit(cache=True)
def evaluate(x, Ps, ws, gprev, tau, limited, ydel, P, L, Ap, Bp, Cp, dx, out):
    """Fill ``dx`` and ``out`` for state ``x``; returns an error code.

    ``ydel`` is the delayed wave for the travelling-wave penstock; NaN selects
    the static (steady-state) value, used by trim.
    """
    nan = np.nan
    for i in range(out.shape[0]):
        out[i] = nan
    kind = L[KIND]
    mode = L[MODE]
    w = x[L[I_W]]

    dint, dz, dg, gcmd, gstar = governor_rhs(
        ws - w, x[L[I_GINT]], x[L[I_GZ]], x[L[I_G]], gprev, tau, limited,
        P[KP], P[KI], P[KD], P[TF], P[TG], P[GMIN], P[GMAX], P[RATE])
    dx[L[I_GINT]] = dint
    dx[L[I_GZ]] = dz
    dx[L[I_G]] = dg
    g = x[L[I_G]]
    out[O_GCMD] = gcmd
    out[O_GSTAR] = gstar

    if L[I_PG] >= 0:
        pg = x[L[I_PG]]
        dx[L[I_PG]] = (Ps - pg) / P[TCONV]
    else:
        pg = Ps
    out[O_PG] = pg

    dws = w - 1.0
    tm = nan
    pm = nan
    q = nan

    if kind == EULER or kind == IEEE:
        hst = x[L[I_HST]]
        qhr = x[L[I_QHR]]
        ip = L[I_PEN]
        npen = L[N_PEN]
        pen_out = 0.0
        if mode == LUMPED:
            for i in range(npen):
                pen_out += Cp[i] * x[ip + i]
        static = mode == DELAY and not math.isfinite(ydel)

        if kind == EULER:
            qt = x[L[I_TURB]]
            q = qt * P[RQ]
            qn = qhr - q
            hnode = hst - sqloss(P[FP0], qn)
            if mode == INELASTIC:
                kappa, a1, code = euler_kinematics(g, P[RQ], P[A1R])
                if code != OK:
                    return code
                if kappa == 0.0:
                    if qt != 0.0:
                        return SINGULAR_OPENING
                    b = P[SIG] * (w * w - 1.0)
                else:
                    b = qt * abs(qt) / (kappa * kappa) + P[SIG] * (w * w - 1.0)
                a = hnode - sqloss(P[FP1], q)
                h = (a + P[RQ] * b) / (1.0 + P[RQ] * P[RH])
            elif mode == DELAY:
                y = P[Z0] * q if static else ydel
                out[O_WAVE] = 2.0 * P[Z0] * q - y
                h = y - P[Z0] * q + hnode - sqloss(P[FP1], q)
            else:
                h = pen_out + hnode - sqloss(P[FP1], q)
            dqt, tm, pm, eta, ms, kappa, a1, code = euler_turbine(
                qt, w, h * P[RH], g, P[RQ], P[PSI], P[XI], P[SIG], P[A1R], P[TW])
            if code != OK:
                return code
            dx[L[I_TURB]] = dqt
            out[O_ETA] = eta
            out[O_MS] = ms
            out[O_KAPPA] = kappa
            out[O_QT] = qt
        else:
            if mode == INELASTIC:
                q = x[L[I_TURB]]
                if g <= 0.0:
                    return SINGULAR_OPENING
                r = q / g
                h = r * r
                qn = qhr - q
                hnode = hst - sqloss(P[FP0], qn)
                dx[L[I_TURB]] = (hnode - sqloss(P[FP1], q) - h) / P[TW]
            else:
                # solve s = sqrt(h) from s^2 = W(g s) by Newton
                zd = 0.0
                c0 = hst + pen_out
                if mode == DELAY and not static:
                    zd = P[Z0]
                    c0 = hst + ydel
                s = 1.0
                converged = False
                for _ in range(LOOP_MAXIT):
                    q = g * s
                    qn = qhr - q
                    W = c0 - sqloss(P[FP0], qn) - sqloss(P[FP1], q) - zd * q
                    F = s * s - W
                    dWdq = 2.0 * P[FP0] * abs(qn) - 2.0 * P[FP1] * abs(q) - zd
                    dF = 2.0 * s - g * dWdq
                    if dF == 0.0:
                        break
                    step = F / dF
                    s_new = s - step
                    if s_new < 0.0:
                        s_new = 0.5 * s
                    if abs(s_new - s) <= LOOP_TOL * (1.0 + s):
                        s = s_new
                        converged = True
                        break
                    s = s_new
                q = g * s
                qn = qhr - q
                W = c0 - sqloss(P[FP0], qn) - sqloss(P[FP1], q) - zd * q
                if not converged:
                    return HEAD_COLLAPSE if W <= 0.0 else LOOP_FAILED
                if abs(s * s - W) > 1e-10:
                    return HEAD_COLLAPSE
                h = s * s
                hnode = hst - sqloss(P[FP0], qn)
                if mode == DELAY:
                    y = P[Z0] * q if static else ydel
                    out[O_WAVE] = 2.0 * P[Z0] * q - y
            q2, pm, code = ieee_turbine(g, dws, h, P[AT], P[QNL], P[DT])
            if code != OK:
                return code
            out[O_ETA] = pm / (h * q) if h * q != 0.0 else nan
        if mode == LUMPED:
            for i in range(npen):
                acc = Bp[i] * q
                for j in range(npen):
                    acc += Ap[i, j] * x[ip + j]
                dx[ip + i] = acc
        dx[L[I_HST]] = (qhr - q) / P[CS]
        dx[L[I_QHR]] = (1.0 - hnode - sqloss(P[FP2], qhr)) / P[TW2]
    elif kind == HYGOV:
        q = x[L[I_TURB]]
        dq, h, pm, code = hygov_turbine(q, g, dws, P[AT], P[QNL], P[DT], P[TW])
        if code != OK:
            return code
        dx[L[I_TURB]] = dq
        out[O_ETA] = pm / (h * q) if h * q != 0.0 else nan
    else:
        xl = x[L[I_TURB]]
        dxl, pm = linearised_turbine(xl, g, P[TW])
        dx[L[I_TURB]] = dxl
        h = nan

    if not w > 0.0:
        return ROTOR_STALL
    if kind != EULER:
        tm = pm / w
    law = int(P[ROTOR])
    if law == ROTOR_TORQUE:
        dx[L[I_W]] = (pm - pg) / (w * P[TA])
    elif law == ROTOR_POWER:
        dx[L[I_W]] = (pm - pg) / P[TA]
    else:
        dx[L[I_W]] = (tm - pg) / P[TA]

    out[O_PM] = pm
    out[O_TM] = tm
    out[O_H] = h
    out[O_Q] = q
    for i in range(L[NX]):
        if not math.isfinite(dx[i]):
            return NONFINITE
    return OK


@njit(cache=True)
def _delayed(hist, n_pre, t, delay, dt):
    """Linear interpolation of the wave history at time t - delay."""
    pos = (t - delay) / dt + n_pre
    j0 = int(math.floor(pos))
    frac = pos - j0
    if j0 < 0:
        return np.nan
    if frac <= 1e-12:
        return hist[j0]
    return hist[j0] * (1.0 - frac) + hist[j0 + 1] * frac


@njit(cache=True)
def integrate(x0, gprev0, Ps_arr, ws_arr, dt, rec_every, P, L, Ap, Bp, Cp,
              hist, n_pre, X, Y):
    """Fixed-step RK4 over ``len(Ps_arr)`` steps.

    Inputs are held over each step; records state/output rows every
    ``rec_every`` steps into X and Y (row 0 is the initial point). In delay
    mode ``hist`` carries the wave samples, ``hist[n_pre]`` being t = 0.
    Returns (code, failed_step, rows_written).
    """
    nx = x0.shape[0]
    nsteps = Ps_arr.shape[0]
    delay_mode = L[MODE] == DELAY and (L[KIND] == EULER or L[KIND] == IEEE)
    delay = 2.0 * P[TE]
    x = x0.copy()
    xs = np.empty(nx)
    k1 = np.empty(nx)
    k2 = np.empty(nx)
    k3 = np.empty(nx)
    k4 = np.empty(nx)
    out = np.empty(NOUT)
    gprev = gprev0
    ydel = np.nan

    # initial record, with the first step's inputs
    if delay_mode:
        ydel = _delayed(hist, n_pre, 0.0, delay, dt)
    code = evaluate(x, Ps_arr[0], ws_arr[0], gprev, 0.0, True, ydel,
                    P, L, Ap, Bp, Cp, k1, out)
    if code != OK:
        return code, 0, 0
    X[0, :] = x
    Y[0, :] = out
    row = 1
    half = 0.5 * dt

    for k in range(nsteps):
        t = k * dt
        Ps = Ps_arr[k]
        ws = ws_arr[k]
        if delay_mode:
            ydel = _delayed(hist, n_pre, t, delay, dt)
        code = evaluate(x, Ps, ws, gprev, 0.0, True, ydel, P, L, Ap, Bp, Cp, k1, out)
        if code != OK:
            return code, k, row
        for i in range(nx):
            xs[i] = x[i] + half * k1[i]
        if delay_mode:
            ydel = _delayed(hist, n_pre, t + half, delay, dt)
        code = evaluate(xs, Ps, ws, gprev, half, True, ydel, P, L, Ap, Bp, Cp, k2, out)
        if code != OK:
            return code, k, row
        for i in range(nx):
            xs[i] = x[i] + half * k2[i]
        code = evaluate(xs, Ps, ws, gprev, half, True, ydel, P, L, Ap, Bp, Cp, k3, out)
        if code != OK:
            return code, k, row
        for i in range(nx):
            xs[i] = x[i] + dt * k3[i]
        if delay_mode:
            ydel = _delayed(hist, n_pre, t + dt, delay, dt)
        code = evaluate(xs, Ps, ws, gprev, dt, True, ydel, P, L, Ap, Bp, Cp, k4, out)
        if code != OK:
            return code, k, row
        for i in range(nx):
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])

        # end-of-step command becomes the slew reference for the next step
        code = evaluate(x, Ps, ws, gprev, dt, True, ydel, P, L, Ap, Bp, Cp, k1, out)
        if code != OK:
            return code, k + 1, row
        gprev = out[O_GCMD]
        if delay_mode:
            hist[n_pre + k + 1] = out[O_WAVE]

        if (k + 1) % rec_every == 0:
            if k + 1 < nsteps:
                Ps = Ps_arr[k + 1]
                ws = ws_arr[k + 1]
            code = evaluate(x, Ps, ws, gprev, 0.0, True, ydel, P, L, Ap, Bp, Cp, k1, out)
            if code != OK:
                return code, k + 1, row
            X[row, :] = x
            Y[row, :] = out
            row += 1
    return OK, nsteps, row
