"""Pure-numpy sequence kernels: the fallback backend and behavioural reference.

Every function here has an accelerated twin in `accelerated` with an identical
signature and semantics. Inputs are 1-D/2-D contiguous float64 arrays; no
kernel mutates its arguments. The per-step recursions cannot be vectorised
across time, so this backend loops in Python and leans on numpy for the inner
linear algebra.
"""

import numpy as np

BACKEND = "numpy"


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # branch on sign to avoid overflow in exp for large negative arguments
    out = np.empty_like(z)
    pos = z >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def esn_teacher_features(w_u, w_x, w_y, e_tilde, u_teacher_tilde, x0, u_prev0):
    """Teacher-forced reservoir sweep; row k holds the activation vector of step k.

    The output-feedback path is fed the measured normalised output of the
    previous step instead of the network's own readout, which keeps the
    readout regression linear in its parameters.
    """
    n = w_x.shape[0]
    steps = e_tilde.shape[0]
    rows = np.empty((steps, n))
    x = x0.copy()
    u_prev = float(u_prev0)
    for k in range(steps):
        x = np.tanh(w_u * e_tilde[k] + w_x @ x + w_y * u_prev)
        rows[k] = x
        u_prev = float(u_teacher_tilde[k])
    return rows


def esn_run(w_u, w_x, w_y, w_out1, w_out2, e_tilde, x0, u_prev0):
    """Free-run the reservoir with its own readout closed over the feedback path.

    Returns the normalised output sequence.
    """
    steps = e_tilde.shape[0]
    out = np.empty(steps)
    x = x0.copy()
    u_prev = float(u_prev0)
    for k in range(steps):
        x = np.tanh(w_u * e_tilde[k] + w_x @ x + w_y * u_prev)
        u_prev = float(w_out1 @ x) + w_out2 * e_tilde[k]
        out[k] = u_prev
    return out


def lstm_run(w_f, u_f, b_f, w_i, u_i, b_i, w_o, u_o, b_o, w_c, u_c, b_c,
             w_out, b_out, e_tilde, x0, xi0):
    """Full gated recurrence; returns the normalised output sequence."""
    steps = e_tilde.shape[0]
    out = np.empty(steps)
    x = x0.copy()
    xi = xi0.copy()
    for k in range(steps):
        et = e_tilde[k]
        f = _sigmoid(w_f * et + u_f @ xi + b_f)
        i = _sigmoid(w_i * et + u_i @ xi + b_i)
        o = _sigmoid(w_o * et + u_o @ xi + b_o)
        a = np.tanh(w_c * et + u_c @ xi + b_c)
        x = f * x + i * a
        xi = o * np.tanh(x)
        out[k] = float(w_out @ xi) + b_out
    return out


def lstm_simplified_run(w_f, u_f, b_f, w_c, u_c, b_c, e_tilde, x0):
    """Simplified recurrence (input and output gates pinned to one).

    The hidden state is reconstructed as tanh of the cell state and the output
    is the tanh of the first cell component, so it lives in (-1, 1) by
    construction.
    """
    steps = e_tilde.shape[0]
    out = np.empty(steps)
    x = x0.copy()
    for k in range(steps):
        et = e_tilde[k]
        h = np.tanh(x)
        f = _sigmoid(w_f * et + u_f @ h + b_f)
        a = np.tanh(w_c * et + u_c @ h + b_c)
        x = f * x + a
        out[k] = np.tanh(x[0])
    return out


def lstm_simplified_loss_grads(w_f, u_f, b_f, w_c, u_c, b_c, e_tilde, target, washout):
    """Squared-error loss over the post-washout horizon and its exact gradients.

    Reverse accumulation through the simplified recurrence from zero initial
    state. Returns (loss, d_wf, d_uf, d_bf, d_wc, d_uc, d_bc).
    """
    n = w_f.shape[0]
    steps = e_tilde.shape[0]
    x_hist = np.zeros((steps, n))
    h_hist = np.empty((steps, n))
    f_hist = np.empty((steps, n))
    a_hist = np.empty((steps, n))
    u_til = np.empty(steps)

    x = np.zeros(n)
    for k in range(steps):
        x_hist[k] = x
        et = e_tilde[k]
        h = np.tanh(x)
        f = _sigmoid(w_f * et + u_f @ h + b_f)
        a = np.tanh(w_c * et + u_c @ h + b_c)
        x = f * x + a
        h_hist[k] = h
        f_hist[k] = f
        a_hist[k] = a
        u_til[k] = np.tanh(x[0])

    loss = 0.0
    g_wf = np.zeros(n)
    g_uf = np.zeros((n, n))
    g_bf = np.zeros(n)
    g_wc = np.zeros(n)
    g_uc = np.zeros((n, n))
    g_bc = np.zeros(n)
    lam = np.zeros(n)  # dJ/d(cell state entering step k+1)
    for k in range(steps - 1, -1, -1):
        if k >= washout:
            r = u_til[k] - target[k]
            loss += r * r
            lam[0] += 2.0 * r * (1.0 - u_til[k] * u_til[k])
        et = e_tilde[k]
        f = f_hist[k]
        dzf = lam * x_hist[k] * f * (1.0 - f)
        dza = lam * (1.0 - a_hist[k] ** 2)
        g_wf += dzf * et
        g_bf += dzf
        g_wc += dza * et
        g_bc += dza
        g_uf += np.outer(dzf, h_hist[k])
        g_uc += np.outer(dza, h_hist[k])
        lam = lam * f + (u_f.T @ dzf + u_c.T @ dza) * (1.0 - h_hist[k] ** 2)
    return loss, g_wf, g_uf, g_bf, g_wc, g_uc, g_bc


def plant_run(u, dt, pos0, vel0, torque_gain, damping, spring_open, spring_closed,
              limp_home, coulomb, fric_eps, sat_lo, sat_hi):
    """Forward-Euler roll of the throttle surrogate.

    y[k] is the position measured before u[k] is applied; the final state is
    returned so a caller can continue the roll.
    """
    steps = u.shape[0]
    y = np.empty(steps)
    pos = float(pos0)
    vel = float(vel0)
    for k in range(steps):
        y[k] = pos
        uc = min(max(u[k], sat_lo), sat_hi)
        if pos >= limp_home:
            spring = spring_open * (pos - limp_home)
        else:
            spring = spring_closed * (pos - limp_home)
        acc = (torque_gain * uc - damping * vel - spring
               - coulomb * np.tanh(vel / fric_eps))
        vel = vel + dt * acc
        pos = pos + dt * vel
        if pos <= 0.0:
            pos = 0.0
            vel = 0.0
        elif pos >= 1.0:
            pos = 1.0
            vel = 0.0
    return y, pos, vel


def integrator_replay(e, rho, lo, hi, state0):
    """Saturated-integrator recursion over an error sequence.

    The stored state is the saturated value, so recovery from a clamp is
    immediate once the error reverses.
    """
    steps = e.shape[0]
    out = np.empty(steps)
    s = float(state0)
    for k in range(steps):
        s = min(max(s + rho * e[k], lo), hi)
        out[k] = s
    return out
