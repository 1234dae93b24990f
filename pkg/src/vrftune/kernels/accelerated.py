"""Numba-compiled twins of the reference kernels.

Same signatures and math as `reference`, with the time loops lowered to
machine code. Readout dot products accumulate left to right so the certified
output bounds hold sample-wise in floating point, not just in exact
arithmetic (abs-sums in the certificates use the same accumulation order).
"""

import math

import numpy as np
from numba import njit

BACKEND = "numba"


@njit(cache=True)
def _sig(v):
    if v >= 0.0:
        return 1.0 / (1.0 + math.exp(-v))
    ev = math.exp(v)
    return ev / (1.0 + ev)


@njit(cache=True)
def esn_teacher_features(w_u, w_x, w_y, e_tilde, u_teacher_tilde, x0, u_prev0):
    n = w_x.shape[0]
    steps = e_tilde.shape[0]
    rows = np.empty((steps, n))
    x = x0.copy()
    u_prev = u_prev0
    for k in range(steps):
        et = e_tilde[k]
        z = np.dot(w_x, x)
        for i in range(n):
            x[i] = math.tanh(z[i] + w_u[i] * et + w_y[i] * u_prev)
            rows[k, i] = x[i]
        u_prev = u_teacher_tilde[k]
    return rows


@njit(cache=True)
def esn_run(w_u, w_x, w_y, w_out1, w_out2, e_tilde, x0, u_prev0):
    n = w_x.shape[0]
    steps = e_tilde.shape[0]
    out = np.empty(steps)
    x = x0.copy()
    u_prev = u_prev0
    for k in range(steps):
        et = e_tilde[k]
        z = np.dot(w_x, x)
        for i in range(n):
            x[i] = math.tanh(z[i] + w_u[i] * et + w_y[i] * u_prev)
        acc = 0.0
        for j in range(n):
            acc += w_out1[j] * x[j]
        u_prev = acc + w_out2 * et
        out[k] = u_prev
    return out


@njit(cache=True)
def lstm_run(w_f, u_f, b_f, w_i, u_i, b_i, w_o, u_o, b_o, w_c, u_c, b_c,
             w_out, b_out, e_tilde, x0, xi0):
    n = w_f.shape[0]
    steps = e_tilde.shape[0]
    out = np.empty(steps)
    x = x0.copy()
    xi = xi0.copy()
    for k in range(steps):
        et = e_tilde[k]
        zf = np.dot(u_f, xi)
        zi = np.dot(u_i, xi)
        zo = np.dot(u_o, xi)
        za = np.dot(u_c, xi)
        for j in range(n):
            f = _sig(zf[j] + w_f[j] * et + b_f[j])
            i = _sig(zi[j] + w_i[j] * et + b_i[j])
            o = _sig(zo[j] + w_o[j] * et + b_o[j])
            a = math.tanh(za[j] + w_c[j] * et + b_c[j])
            x[j] = f * x[j] + i * a
            xi[j] = o * math.tanh(x[j])
        acc = 0.0
        for j in range(n):
            acc += w_out[j] * xi[j]
        out[k] = acc + b_out
    return out


@njit(cache=True)
def lstm_simplified_run(w_f, u_f, b_f, w_c, u_c, b_c, e_tilde, x0):
    n = w_f.shape[0]
    steps = e_tilde.shape[0]
    out = np.empty(steps)
    x = x0.copy()
    h = np.empty(n)
    for k in range(steps):
        et = e_tilde[k]
        for j in range(n):
            h[j] = math.tanh(x[j])
        zf = np.dot(u_f, h)
        za = np.dot(u_c, h)
        for j in range(n):
            f = _sig(zf[j] + w_f[j] * et + b_f[j])
            a = math.tanh(za[j] + w_c[j] * et + b_c[j])
            x[j] = f * x[j] + a
        out[k] = math.tanh(x[0])
    return out


@njit(cache=True)
def lstm_simplified_loss_grads(w_f, u_f, b_f, w_c, u_c, b_c, e_tilde, target, washout):
    n = w_f.shape[0]
    steps = e_tilde.shape[0]
    x_hist = np.zeros((steps, n))
    h_hist = np.empty((steps, n))
    f_hist = np.empty((steps, n))
    a_hist = np.empty((steps, n))
    u_til = np.empty(steps)

    x = np.zeros(n)
    h = np.empty(n)
    for k in range(steps):
        et = e_tilde[k]
        for j in range(n):
            x_hist[k, j] = x[j]
            h[j] = math.tanh(x[j])
            h_hist[k, j] = h[j]
        zf = np.dot(u_f, h)
        za = np.dot(u_c, h)
        for j in range(n):
            f = _sig(zf[j] + w_f[j] * et + b_f[j])
            a = math.tanh(za[j] + w_c[j] * et + b_c[j])
            f_hist[k, j] = f
            a_hist[k, j] = a
            x[j] = f * x[j] + a
        u_til[k] = math.tanh(x[0])

    loss = 0.0
    g_wf = np.zeros(n)
    g_uf = np.zeros((n, n))
    g_bf = np.zeros(n)
    g_wc = np.zeros(n)
    g_uc = np.zeros((n, n))
    g_bc = np.zeros(n)
    lam = np.zeros(n)
    dzf = np.empty(n)
    dza = np.empty(n)
    new_lam = np.empty(n)
    for k in range(steps - 1, -1, -1):
        if k >= washout:
            r = u_til[k] - target[k]
            loss += r * r
            lam[0] += 2.0 * r * (1.0 - u_til[k] * u_til[k])
        et = e_tilde[k]
        for i in range(n):
            f = f_hist[k, i]
            a = a_hist[k, i]
            dzf[i] = lam[i] * x_hist[k, i] * f * (1.0 - f)
            dza[i] = lam[i] * (1.0 - a * a)
            g_wf[i] += dzf[i] * et
            g_bf[i] += dzf[i]
            g_wc[i] += dza[i] * et
            g_bc[i] += dza[i]
        for i in range(n):
            di = dzf[i]
            da = dza[i]
            for j in range(n):
                hj = h_hist[k, j]
                g_uf[i, j] += di * hj
                g_uc[i, j] += da * hj
        for j in range(n):
            s = 0.0
            for i in range(n):
                s += u_f[i, j] * dzf[i] + u_c[i, j] * dza[i]
            hj = h_hist[k, j]
            new_lam[j] = lam[j] * f_hist[k, j] + s * (1.0 - hj * hj)
        for j in range(n):
            lam[j] = new_lam[j]
    return loss, g_wf, g_uf, g_bf, g_wc, g_uc, g_bc


@njit(cache=True)
def plant_run(u, dt, pos0, vel0, torque_gain, damping, spring_open, spring_closed,
              limp_home, coulomb, fric_eps, sat_lo, sat_hi):
    steps = u.shape[0]
    y = np.empty(steps)
    pos = pos0
    vel = vel0
    for k in range(steps):
        y[k] = pos
        uc = min(max(u[k], sat_lo), sat_hi)
        if pos >= limp_home:
            spring = spring_open * (pos - limp_home)
        else:
            spring = spring_closed * (pos - limp_home)
        acc = (torque_gain * uc - damping * vel - spring
               - coulomb * math.tanh(vel / fric_eps))
        vel = vel + dt * acc
        pos = pos + dt * vel
        if pos <= 0.0:
            pos = 0.0
            vel = 0.0
        elif pos >= 1.0:
            pos = 1.0
            vel = 0.0
    return y, pos, vel


@njit(cache=True)
def integrator_replay(e, rho, lo, hi, state0):
    steps = e.shape[0]
    out = np.empty(steps)
    s = state0
    for k in range(steps):
        s = min(max(s + rho * e[k], lo), hi)
        out[k] = s
    return out
