# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled closed-loop and channel simulation kernels.

Same stepping scheme as the pure-Python backend (see _loop_py.py); built
with -ffp-contract=off so both backends perform the same IEEE operations.
Only closed-form dynamics kinds are supported here (1 = linear,
2 = flexible joint); callables stay on the Python backend.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, fabs, sqrt

cnp.import_array()

BACKEND_NAME = "compiled"

STATUS_OK = 0
STATUS_DIVERGED = 1

KIND_LINEAR = 1
KIND_FLEXJOINT = 2
KIND_PROTOTYPE4 = 3


cdef inline void eval_f(int kind, double[::1] params, double* x, double* out, int n) noexcept:
    cdef int i, j
    if kind == KIND_LINEAR:
        for i in range(n):
            out[i] = 0.0
            for j in range(n):
                out[i] += params[i * n + j] * x[j]
    elif kind == KIND_FLEXJOINT:  # n == 4
        out[0] = x[1]
        out[1] = params[0] * x[0] + params[1] * cos(x[0]) + params[2] * x[1] + params[3] * x[2]
        out[2] = x[3]
        out[3] = params[4] * x[0] + params[5] * x[2] + params[6] * x[3]
    else:  # prototype-4 oscillator nonlinearity, n == 3
        out[0] = 0.0
        out[1] = 0.0
        out[2] = -0.5 * x[1] * x[1]


cdef inline void matvec(double[:, ::1] mat, double* vec, double* out, int rows, int cols) noexcept:
    cdef int i, j
    for i in range(rows):
        out[i] = 0.0
        for j in range(cols):
            out[i] += mat[i, j] * vec[j]


def run_closed_loop(
    dyn,
    cnp.ndarray[double, ndim=2] b,
    cnp.ndarray[double, ndim=2] c,
    cnp.ndarray[double, ndim=2] d,
    cnp.ndarray[double, ndim=2] k_gain,
    cnp.ndarray[double, ndim=2] l_gain,
    cnp.ndarray[double, ndim=2] g_gain,
    cnp.ndarray[double, ndim=1] x0,
    cnp.ndarray[double, ndim=1] xhat0,
    int steps,
    double dt,
    cnp.ndarray[double, ndim=2] omega,
    cnp.ndarray[double, ndim=2] nu,
    cnp.ndarray[double, ndim=2] xi_half,
    int attack_on,
    int onset_idx,
    int replay_len,
    int matched_mode,
    double match_tol,
    int deadline_idx,
    int contam_kind,
    double contam_a,
    double divergence_limit=1e6,
):
    cdef int kind = dyn.kind_id
    cdef double[::1] params = np.ascontiguousarray(dyn.param_vector(), dtype=np.float64)
    cdef int n = b.shape[0]
    cdef int m = b.shape[1]
    cdef int p = c.shape[0]

    x_out_arr = np.zeros((steps + 1, n))
    xh_out_arr = np.zeros((steps + 1, n))
    y_out_arr = np.zeros((steps + 1, p))
    yr_out_arr = np.zeros((steps + 1, p))
    us_out_arr = np.zeros((steps + 1, m))
    ua_out_arr = np.zeros((steps + 1, m))
    innov_out_arr = np.zeros((steps + 1, p))
    cdef double[:, ::1] x_out = x_out_arr
    cdef double[:, ::1] xh_out = xh_out_arr
    cdef double[:, ::1] y_out = y_out_arr
    cdef double[:, ::1] yr_out = yr_out_arr
    cdef double[:, ::1] us_out = us_out_arr
    cdef double[:, ::1] ua_out = ua_out_arr
    cdef double[:, ::1] innov_out = innov_out_arr

    cdef double[:, ::1] bv = np.ascontiguousarray(b)
    cdef double[:, ::1] cv = np.ascontiguousarray(c)
    cdef double[:, ::1] dv = np.ascontiguousarray(d)
    cdef double[:, ::1] kv = np.ascontiguousarray(k_gain)
    cdef double[:, ::1] lv = np.ascontiguousarray(l_gain)
    cdef double[:, ::1] gv = np.ascontiguousarray(g_gain)
    cdef double[:, ::1] om_v = np.ascontiguousarray(omega) if omega.size else np.zeros((1, n))
    cdef double[:, ::1] nu_v = np.ascontiguousarray(nu)
    cdef double[:, ::1] xi_v = np.ascontiguousarray(xi_half)

    # work buffers (fixed small sizes)
    work_arr = np.zeros(14 * n + 8 * m + 4 * p)
    cdef double[::1] w = work_arr
    cdef double* xcur = &w[0]
    cdef double* xhcur = &w[n]
    cdef double* fx = &w[2 * n]
    cdef double* fxh = &w[3 * n]
    cdef double* dx1 = &w[4 * n]
    cdef double* dh1 = &w[5 * n]
    cdef double* dx2 = &w[6 * n]
    cdef double* dh2 = &w[7 * n]
    cdef double* dx3 = &w[8 * n]
    cdef double* dh3 = &w[9 * n]
    cdef double* dx4 = &w[10 * n]
    cdef double* dh4 = &w[11 * n]
    cdef double* xs = &w[12 * n]
    cdef double* xhs = &w[13 * n]
    cdef double* us = &w[14 * n]
    cdef double* ua = &w[14 * n + m]
    cdef double* tmpm = &w[14 * n + 2 * m]
    cdef double* tmpm2 = &w[14 * n + 3 * m]
    cdef double* us_s = &w[14 * n + 4 * m]
    cdef double* ua_s = &w[14 * n + 5 * m]
    cdef double* gxi = &w[14 * n + 6 * m]
    cdef double* kxh = &w[14 * n + 7 * m]
    cdef double* ybar = &w[14 * n + 8 * m]
    cdef double* yhat = &w[14 * n + 8 * m + p]
    cdef double* ycur = &w[14 * n + 8 * m + 2 * p]
    cdef double* tmpp = &w[14 * n + 8 * m + 3 * p]

    cdef int kk, i, j, started = 0, fallback = 0
    cdef int onset_actual = -1, end_actual = -1, in_window = 0
    cdef int status = STATUS_OK, valid = steps + 1
    cdef double t, uc0, uc1, uc2, acc, onset_time = 0.0
    cdef double big

    for i in range(n):
        xcur[i] = x0[i]
        xhcur[i] = xhat0[i]

    for kk in range(steps + 1):
        t = kk * dt
        # u_sent at the grid point
        matvec(kv, xhcur, kxh, m, n)
        for i in range(m):
            acc = 0.0
            for j in range(m):
                acc += gv[i, j] * xi_v[2 * kk, j]
            us[i] = -kxh[i] + acc
        # predicted output for matching / innovation
        matvec(cv, xhcur, yhat, p, n)
        for i in range(p):
            for j in range(m):
                yhat[i] += dv[i, j] * us[j]

        if attack_on and started == 0 and kk >= onset_idx:
            if matched_mode == 1:
                acc = 0.0
                for i in range(p):
                    acc += (yhat[i] - y_out[0, i]) * (yhat[i] - y_out[0, i])
                if sqrt(acc) <= match_tol:
                    started = 1
                elif kk >= deadline_idx:
                    started = 1
                    fallback = 1
            else:
                started = 1
            if started:
                onset_actual = kk
                onset_time = kk * dt
                end_actual = kk + replay_len
                if end_actual > steps + 1:
                    end_actual = steps + 1

        in_window = 1 if (started and kk >= onset_actual and kk < end_actual) else 0
        uc0 = 0.0
        if in_window:
            if contam_kind == 1:
                uc0 = contam_a
            elif contam_kind == 2:
                uc0 = contam_a * (t - onset_time)
        for i in range(m):
            ua[i] = us[i] + uc0
        # plant output with applied input
        matvec(cv, xcur, ycur, p, n)
        for i in range(p):
            for j in range(m):
                ycur[i] += dv[i, j] * ua[j]
            ycur[i] += nu_v[kk, i]
            y_out[kk, i] = ycur[i]
        for i in range(p):
            ybar[i] = y_out[kk - onset_actual, i] if in_window else ycur[i]
            yr_out[kk, i] = ybar[i]
            innov_out[kk, i] = ybar[i] - yhat[i]
        for i in range(n):
            x_out[kk, i] = xcur[i]
            xh_out[kk, i] = xhcur[i]
        for i in range(m):
            us_out[kk, i] = us[i]
            ua_out[kk, i] = ua[i]

        if kk == steps:
            break

        uc1 = 0.0
        uc2 = 0.0
        if in_window:
            if contam_kind == 1:
                uc1 = contam_a
                uc2 = contam_a
            elif contam_kind == 2:
                uc1 = contam_a * (t + 0.5 * dt - onset_time)
                uc2 = contam_a * (t + dt - onset_time)

        _substep(kind, params, xcur, xhcur, xi_v, 2 * kk, uc0, om_v, nu_v, kk, ybar, in_window,
                 bv, cv, dv, kv, lv, gv, dx1, dh1, fx, fxh, us_s, ua_s, gxi, kxh, tmpp, n, m, p)
        for i in range(n):
            xs[i] = xcur[i] + 0.5 * dt * dx1[i]
            xhs[i] = xhcur[i] + 0.5 * dt * dh1[i]
        _substep(kind, params, xs, xhs, xi_v, 2 * kk + 1, uc1, om_v, nu_v, kk, ybar, in_window,
                 bv, cv, dv, kv, lv, gv, dx2, dh2, fx, fxh, us_s, ua_s, gxi, kxh, tmpp, n, m, p)
        for i in range(n):
            xs[i] = xcur[i] + 0.5 * dt * dx2[i]
            xhs[i] = xhcur[i] + 0.5 * dt * dh2[i]
        _substep(kind, params, xs, xhs, xi_v, 2 * kk + 1, uc1, om_v, nu_v, kk, ybar, in_window,
                 bv, cv, dv, kv, lv, gv, dx3, dh3, fx, fxh, us_s, ua_s, gxi, kxh, tmpp, n, m, p)
        for i in range(n):
            xs[i] = xcur[i] + dt * dx3[i]
            xhs[i] = xhcur[i] + dt * dh3[i]
        _substep(kind, params, xs, xhs, xi_v, 2 * kk + 2, uc2, om_v, nu_v, kk, ybar, in_window,
                 bv, cv, dv, kv, lv, gv, dx4, dh4, fx, fxh, us_s, ua_s, gxi, kxh, tmpp, n, m, p)

        big = 0.0
        for i in range(n):
            xcur[i] = xcur[i] + (dt / 6.0) * (dx1[i] + 2.0 * dx2[i] + 2.0 * dx3[i] + dx4[i])
            xhcur[i] = xhcur[i] + (dt / 6.0) * (dh1[i] + 2.0 * dh2[i] + 2.0 * dh3[i] + dh4[i])
            if fabs(xcur[i]) > big:
                big = fabs(xcur[i])
            if fabs(xhcur[i]) > big:
                big = fabs(xhcur[i])
        if big > divergence_limit:
            status = STATUS_DIVERGED
            valid = kk + 1
            break

    return {
        "status": status,
        "x": x_out_arr,
        "xhat": xh_out_arr,
        "y": y_out_arr,
        "y_received": yr_out_arr,
        "u_sent": us_out_arr,
        "u_applied": ua_out_arr,
        "innovation": innov_out_arr,
        "onset": onset_actual,
        "end": end_actual,
        "fallback": fallback,
        "valid": valid,
    }


cdef inline void _substep(int kind, double[::1] params, double* xs, double* xhs,
                          double[:, ::1] xi_v, int xi_idx, double uc,
                          double[:, ::1] om_v, double[:, ::1] nu_v, int om_idx,
                          double* ybar, int in_window,
                          double[:, ::1] bv, double[:, ::1] cv, double[:, ::1] dv,
                          double[:, ::1] kv, double[:, ::1] lv, double[:, ::1] gv,
                          double* dx, double* dxh, double* fx, double* fxh,
                          double* us_s, double* ua_s, double* gxi, double* kxh,
                          double* tmpp, int n, int m, int p) noexcept:
    cdef int i, j
    cdef double acc
    matvec(kv, xhs, kxh, m, n)
    for i in range(m):
        acc = 0.0
        for j in range(m):
            acc += gv[i, j] * xi_v[xi_idx, j]
        gxi[i] = acc
        us_s[i] = -kxh[i] + acc
        ua_s[i] = us_s[i] + uc
    eval_f(kind, params, xs, fx, n)
    eval_f(kind, params, xhs, fxh, n)
    if in_window:
        # replayed samples held over the step: ybar - (C xhs + D us)
        matvec(cv, xhs, tmpp, p, n)
        for i in range(p):
            for j in range(m):
                tmpp[i] += dv[i, j] * us_s[j]
            tmpp[i] = ybar[i] - tmpp[i]
    else:
        # live continuous measurement: C (xs - xhs) + nu (control cancels)
        for i in range(p):
            acc = nu_v[om_idx, i]
            for j in range(n):
                acc += cv[i, j] * (xs[j] - xhs[j])
            tmpp[i] = acc
    for i in range(n):
        acc = fx[i] + om_v[om_idx, i]
        for j in range(m):
            acc += bv[i, j] * ua_s[j]
        dx[i] = acc
        acc = fxh[i]
        for j in range(m):
            acc += bv[i, j] * us_s[j]
        for j in range(p):
            acc += lv[i, j] * tmpp[j]
        dxh[i] = acc


def run_channel(
    dyn,
    cnp.ndarray[double, ndim=2] a_extra,
    cnp.ndarray[double, ndim=2] b_in,
    cnp.ndarray[double, ndim=2] c_out,
    cnp.ndarray[double, ndim=2] d_out,
    cnp.ndarray[double, ndim=1] x0,
    cnp.ndarray[double, ndim=2] u_half,
    double dt,
    int steps,
    double divergence_limit=1e6,
):
    cdef int kind = dyn.kind_id
    cdef double[::1] params = np.ascontiguousarray(dyn.param_vector(), dtype=np.float64)
    cdef int n = b_in.shape[0]
    cdef int m = b_in.shape[1]
    cdef int q = c_out.shape[0]

    x_out_arr = np.zeros((steps + 1, n))
    y_out_arr = np.zeros((steps + 1, q))
    cdef double[:, ::1] x_out = x_out_arr
    cdef double[:, ::1] y_out = y_out_arr
    cdef double[:, ::1] av = np.ascontiguousarray(a_extra)
    cdef double[:, ::1] bv = np.ascontiguousarray(b_in)
    cdef double[:, ::1] cv = np.ascontiguousarray(c_out)
    cdef double[:, ::1] dv = np.ascontiguousarray(d_out)
    cdef double[:, ::1] uv = np.ascontiguousarray(u_half)

    work_arr = np.zeros(8 * n)
    cdef double[::1] w = work_arr
    cdef double* x = &w[0]
    cdef double* fx = &w[n]
    cdef double* k1 = &w[2 * n]
    cdef double* k2 = &w[3 * n]
    cdef double* k3 = &w[4 * n]
    cdef double* k4 = &w[5 * n]
    cdef double* xs = &w[6 * n]

    cdef int kk, i, j
    cdef double acc, big
    for i in range(n):
        x[i] = x0[i]

    for kk in range(steps + 1):
        for i in range(n):
            x_out[kk, i] = x[i]
        for i in range(q):
            acc = 0.0
            for j in range(n):
                acc += cv[i, j] * x[j]
            for j in range(m):
                acc += dv[i, j] * uv[2 * kk, j]
            y_out[kk, i] = acc
        if kk == steps:
            break
        _chan_deriv(kind, params, av, bv, x, uv, 2 * kk, fx, k1, n, m)
        for i in range(n):
            xs[i] = x[i] + 0.5 * dt * k1[i]
        _chan_deriv(kind, params, av, bv, xs, uv, 2 * kk + 1, fx, k2, n, m)
        for i in range(n):
            xs[i] = x[i] + 0.5 * dt * k2[i]
        _chan_deriv(kind, params, av, bv, xs, uv, 2 * kk + 1, fx, k3, n, m)
        for i in range(n):
            xs[i] = x[i] + dt * k3[i]
        _chan_deriv(kind, params, av, bv, xs, uv, 2 * kk + 2, fx, k4, n, m)
        big = 0.0
        for i in range(n):
            x[i] = x[i] + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            if fabs(x[i]) > big:
                big = fabs(x[i])
        if big > divergence_limit:
            raise FloatingPointError("channel state diverged")
    return x_out_arr, y_out_arr


cdef inline void _chan_deriv(int kind, double[::1] params, double[:, ::1] av,
                             double[:, ::1] bv, double* x, double[:, ::1] uv,
                             int u_idx, double* fx, double* out, int n, int m) noexcept:
    cdef int i, j
    cdef double acc
    eval_f(kind, params, x, fx, n)
    for i in range(n):
        acc = fx[i]
        for j in range(n):
            acc += av[i, j] * x[j]
        for j in range(m):
            acc += bv[i, j] * uv[u_idx, j]
        out[i] = acc
