"""Pure-Python simulation kernels (fallback backend).

Mirrors the compiled extension step for step: classic fourth-order
Runge-Kutta with the watermark sampled on the half-step grid, held
per-step noise, per-step zero-order-hold of the received measurement, and
the three-phase replay attack.  Works for any dynamics kind, including
arbitrary Python callables.
"""

from __future__ import annotations

import numpy as np

from .replay import record_replay_feed

BACKEND_NAME = "python"

STATUS_OK = 0
STATUS_DIVERGED = 1


def _f_of(dyn):
    return dyn.f


def run_closed_loop(
    dyn,
    b,
    c,
    d,
    k_gain,
    l_gain,
    g_gain,
    x0,
    xhat0,
    steps,
    dt,
    omega,
    nu,
    xi_half,
    attack_on,
    onset_idx,
    replay_len,
    matched_mode,
    match_tol,
    deadline_idx,
    contam_kind,
    contam_a,
    divergence_limit=1e6,
):
    f = _f_of(dyn)
    n = b.shape[0]
    m = b.shape[1]
    p = c.shape[0]
    x_out = np.zeros((steps + 1, n))
    xh_out = np.zeros((steps + 1, n))
    y_out = np.zeros((steps + 1, p))
    yr_out = np.zeros((steps + 1, p))
    us_out = np.zeros((steps + 1, m))
    ua_out = np.zeros((steps + 1, m))
    innov_out = np.zeros((steps + 1, p))

    x = np.asarray(x0, dtype=float).copy()
    xh = np.asarray(xhat0, dtype=float).copy()
    started = False
    fallback = 0
    onset_actual = -1
    end_actual = -1
    status = STATUS_OK
    valid = steps + 1

    def contamination(t_abs, onset_time):
        if contam_kind == 1:
            return contam_a
        if contam_kind == 2:
            return contam_a * (t_abs - onset_time)
        return 0.0

    for kk in range(steps + 1):
        t = kk * dt
        xi_k = xi_half[2 * kk]
        us = -(k_gain @ xh) + g_gain @ xi_k
        yhat = c @ xh + d @ us

        if attack_on and not started and kk >= onset_idx:
            if matched_mode == 1:
                if np.linalg.norm(yhat - y_out[0]) <= match_tol:
                    started = True
                elif kk >= deadline_idx:
                    started = True
                    fallback = 1
            else:
                started = True
            if started:
                onset_actual = kk
                end_actual = min(kk + replay_len, steps + 1)

        in_window = started and onset_actual <= kk < end_actual
        uc_now = contamination(t, onset_actual * dt) if in_window else 0.0
        ua = us + uc_now
        y = c @ x + d @ ua + nu[kk]
        y_out[kk] = y
        yr = record_replay_feed(y_out, y, kk, onset_actual if started else -1, end_actual)
        x_out[kk] = x
        xh_out[kk] = xh
        yr_out[kk] = yr
        us_out[kk] = us
        ua_out[kk] = ua
        innov_out[kk] = yr - yhat

        if kk == steps:
            break

        om = omega[kk]
        nu_k = nu[kk]

        def deriv(xs, xhs, xi_s, uc_s):
            us_s = -(k_gain @ xhs) + g_gain @ xi_s
            ua_s = us_s + uc_s
            dx = f(xs) + b @ ua_s + om
            if in_window:
                # the attacker replays recorded samples, held over the step
                fb = yr - (c @ xhs + d @ us_s)
            else:
                # live loop: continuous measurement (control input cancels)
                fb = c @ (xs - xhs) + nu_k
            dxh = f(xhs) + b @ us_s + l_gain @ fb
            return dx, dxh

        uc0 = uc_now
        uc1 = contamination(t + 0.5 * dt, onset_actual * dt) if in_window else 0.0
        uc2 = contamination(t + dt, onset_actual * dt) if in_window else 0.0
        xi0 = xi_half[2 * kk]
        xi1 = xi_half[2 * kk + 1]
        xi2 = xi_half[2 * kk + 2]

        k1x, k1h = deriv(x, xh, xi0, uc0)
        k2x, k2h = deriv(x + 0.5 * dt * k1x, xh + 0.5 * dt * k1h, xi1, uc1)
        k3x, k3h = deriv(x + 0.5 * dt * k2x, xh + 0.5 * dt * k2h, xi1, uc1)
        k4x, k4h = deriv(x + dt * k3x, xh + dt * k3h, xi2, uc2)
        x = x + (dt / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        xh = xh + (dt / 6.0) * (k1h + 2.0 * k2h + 2.0 * k3h + k4h)

        if np.max(np.abs(x)) > divergence_limit or np.max(np.abs(xh)) > divergence_limit:
            status = STATUS_DIVERGED
            valid = kk + 1
            break

    return {
        "status": status,
        "x": x_out,
        "xhat": xh_out,
        "y": y_out,
        "y_received": yr_out,
        "u_sent": us_out,
        "u_applied": ua_out,
        "innovation": innov_out,
        "onset": onset_actual,
        "end": end_actual,
        "fallback": fallback,
        "valid": valid,
    }


def run_channel(dyn, a_extra, b_in, c_out, d_out, x0, u_half, dt, steps, divergence_limit=1e6):
    """RK4 of dx = f(x) + A_extra x + B u(t), y = C x + D u on the grid."""
    f = _f_of(dyn)
    n = b_in.shape[0]
    q = c_out.shape[0]
    x_out = np.zeros((steps + 1, n))
    y_out = np.zeros((steps + 1, q))
    x = np.asarray(x0, dtype=float).copy()

    def deriv(xs, u):
        return f(xs) + a_extra @ xs + b_in @ u

    for kk in range(steps + 1):
        x_out[kk] = x
        y_out[kk] = c_out @ x + d_out @ u_half[2 * kk]
        if kk == steps:
            break
        u0 = u_half[2 * kk]
        u1 = u_half[2 * kk + 1]
        u2 = u_half[2 * kk + 2]
        k1 = deriv(x, u0)
        k2 = deriv(x + 0.5 * dt * k1, u1)
        k3 = deriv(x + 0.5 * dt * k2, u1)
        k4 = deriv(x + dt * k3, u2)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if np.max(np.abs(x)) > divergence_limit:
            raise FloatingPointError("channel state diverged")
    return x_out, y_out
