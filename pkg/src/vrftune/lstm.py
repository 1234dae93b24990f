"""Gated recurrent regulator: full non-strictly-proper dynamics, the reduced
trainable variant (input and output gates pinned to one), exact reverse-mode
gradients and adaptive-moment training."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .signals import (Bounds, IDENTITY_SCALING, ScalingPair, Signal, descale,
                      descale_array, scale, scale_array)
from .esn import readout_norm


def _sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _frozen_array(obj, name, value, shape):
    arr = np.ascontiguousarray(np.asarray(value, dtype=np.float64).reshape(shape))
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} holds non-finite entries")
    arr.flags.writeable = False
    object.__setattr__(obj, name, arr)


# ── full form ───────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class LstmParams:
    """Full gate parameterisation with linear readout of the hidden state."""

    w_f: np.ndarray
    w_i: np.ndarray
    w_o: np.ndarray
    w_c: np.ndarray
    u_f: np.ndarray
    u_i: np.ndarray
    u_o: np.ndarray
    u_c: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_o: np.ndarray
    b_c: np.ndarray
    w_out: np.ndarray
    b_out: float
    input_scaling: ScalingPair = IDENTITY_SCALING
    output_scaling: ScalingPair = IDENTITY_SCALING
    constrained: bool = False

    def __post_init__(self) -> None:
        n = int(np.asarray(self.w_f).size)
        for name in ("w_f", "w_i", "w_o", "w_c", "b_f", "b_i", "b_o", "b_c", "w_out"):
            _frozen_array(self, name, getattr(self, name), (n,))
        for name in ("u_f", "u_i", "u_o", "u_c"):
            _frozen_array(self, name, getattr(self, name), (n, n))
        object.__setattr__(self, "b_out", float(self.b_out))
        if not np.isfinite(self.b_out):
            raise ValueError("b_out must be finite")
        if self.output_scaling.gain <= 0.0:
            raise ValueError("output scaling gain must be positive")
        if self.constrained:
            if self.b_out != 0.0:
                raise ValueError("constrained mode requires zero output bias")
            if readout_norm(self.w_out) > 1.0:
                raise ValueError("constrained mode requires readout norm <= 1")

    @property
    def n_x(self) -> int:
        return int(self.w_f.size)


@dataclass(frozen=True)
class LstmState:
    """Cell state x and hidden state xi."""

    x: np.ndarray
    xi: np.ndarray

    def __post_init__(self) -> None:
        n = int(np.asarray(self.x).size)
        _frozen_array(self, "x", self.x, (n,))
        _frozen_array(self, "xi", self.xi, (n,))


def initial_lstm_state(n_x: int) -> LstmState:
    return LstmState(np.zeros(n_x), np.zeros(n_x))


def lstm_step(p: LstmParams, s: LstmState, e: float) -> tuple[LstmState, float]:
    """One full-gate update; the output reads the freshly computed hidden
    state, avoiding a one-sample delay."""
    et = scale(e, p.input_scaling)
    f = _sigmoid(p.w_f * et + p.u_f @ s.xi + p.b_f)
    i = _sigmoid(p.w_i * et + p.u_i @ s.xi + p.b_i)
    o = _sigmoid(p.w_o * et + p.u_o @ s.xi + p.b_o)
    a = np.tanh(p.w_c * et + p.u_c @ s.xi + p.b_c)
    x = f * s.x + i * a
    xi = o * np.tanh(x)
    u_tilde = float(p.w_out @ xi) + p.b_out
    return LstmState(x, xi), descale(u_tilde, p.output_scaling)


def run_lstm(p: LstmParams, e: Signal, state: LstmState | None = None) -> Signal:
    if state is None:
        state = initial_lstm_state(p.n_x)
    et = np.ascontiguousarray(scale_array(e.samples, p.input_scaling))
    u_tilde = kernels.lstm_run(
        p.w_f, p.u_f, p.b_f, p.w_i, p.u_i, p.b_i, p.w_o, p.u_o, p.b_o,
        p.w_c, p.u_c, p.b_c, p.w_out, p.b_out, et, state.x, state.xi)
    return Signal(descale_array(u_tilde, p.output_scaling), e.sample_time)


def lstm_output_bound(p) -> Bounds:
    """Certified output range; holds for any input sequence because the
    hidden state lives in (-1, 1) component-wise.

    Accepts either parameter flavour; the simplified variant has a unit
    selector readout, so its normalised output is bounded by one.
    """
    if isinstance(p, SimplifiedLstmParams):
        b = 1.0
    else:
        b = readout_norm(p.w_out) + abs(p.b_out)
    return Bounds(descale(-b, p.output_scaling), descale(b, p.output_scaling))


# ── simplified trainable form ───────────────────────────────────────────────

@dataclass(frozen=True)
class SimplifiedLstmParams:
    """Reduced variant: input and output gates pinned to one, hidden state
    reconstructed as tanh of the cell state, readout fixed to the first
    component (norm one, zero bias, so the output bound holds structurally).
    """

    w_f: np.ndarray
    w_c: np.ndarray
    u_f: np.ndarray
    u_c: np.ndarray
    b_f: np.ndarray
    b_c: np.ndarray
    input_scaling: ScalingPair = IDENTITY_SCALING
    output_scaling: ScalingPair = IDENTITY_SCALING

    def __post_init__(self) -> None:
        n = int(np.asarray(self.w_f).size)
        for name in ("w_f", "w_c", "b_f", "b_c"):
            _frozen_array(self, name, getattr(self, name), (n,))
        for name in ("u_f", "u_c"):
            _frozen_array(self, name, getattr(self, name), (n, n))
        if self.output_scaling.gain <= 0.0:
            raise ValueError("output scaling gain must be positive")

    @property
    def n_x(self) -> int:
        return int(self.w_f.size)


def simplified_lstm_step(p: SimplifiedLstmParams, x: np.ndarray,
                         e: float) -> tuple[np.ndarray, float]:
    et = scale(e, p.input_scaling)
    h = np.tanh(x)
    f = _sigmoid(p.w_f * et + p.u_f @ h + p.b_f)
    a = np.tanh(p.w_c * et + p.u_c @ h + p.b_c)
    x_next = f * x + a
    return x_next, descale(float(np.tanh(x_next[0])), p.output_scaling)


def run_simplified(p: SimplifiedLstmParams, e: Signal,
                   x0: np.ndarray | None = None) -> Signal:
    if x0 is None:
        x0 = np.zeros(p.n_x)
    et = np.ascontiguousarray(scale_array(e.samples, p.input_scaling))
    u_tilde = kernels.lstm_simplified_run(p.w_f, p.u_f, p.b_f, p.w_c, p.u_c,
                                          p.b_c, et, np.asarray(x0, dtype=np.float64))
    return Signal(descale_array(u_tilde, p.output_scaling), e.sample_time)


def simplified_state_map(p: SimplifiedLstmParams, e: float):
    """Cell-state update map at constant input, for equilibrium analysis."""
    et = scale(e, p.input_scaling)

    def step(x: np.ndarray) -> np.ndarray:
        h = np.tanh(x)
        f = _sigmoid(p.w_f * et + p.u_f @ h + p.b_f)
        a = np.tanh(p.w_c * et + p.u_c @ h + p.b_c)
        return f * x + a

    return step


# ── gradients and training ──────────────────────────────────────────────────

@dataclass(frozen=True)
class SimplifiedLstmGrads:
    w_f: np.ndarray
    u_f: np.ndarray
    b_f: np.ndarray
    w_c: np.ndarray
    u_c: np.ndarray
    b_c: np.ndarray


def bptt_gradient(p: SimplifiedLstmParams, e: Signal, target_u_tilde: Signal,
                  washout: int = 0) -> tuple[float, SimplifiedLstmGrads]:
    """Loss J = sum_{k >= washout} (u_tilde(k) - target(k))^2 from zero
    initial state, with its exact gradient by reverse accumulation through
    the whole horizon."""
    if len(e) != len(target_u_tilde):
        raise ValueError("input and target must share one length")
    if not 0 <= washout < len(e):
        raise ValueError("washout must be shorter than the dataset")
    et = np.ascontiguousarray(scale_array(e.samples, p.input_scaling))
    tgt = np.ascontiguousarray(target_u_tilde.samples)
    out = kernels.lstm_simplified_loss_grads(
        p.w_f, p.u_f, p.b_f, p.w_c, p.u_c, p.b_c, et, tgt, washout)
    loss = float(out[0])
    if not np.isfinite(loss):
        raise FloatingPointError("non-finite loss in gradient evaluation")
    return loss, SimplifiedLstmGrads(out[1], out[2], out[3], out[4], out[5], out[6])


@dataclass(frozen=True)
class LstmTrainingConfig:
    n_x: int = 25
    washout: int = 50
    learning_rate: float = 1e-3
    max_iters: int = 10_000
    seed: int = 0
    init_scale: float = 0.1
    forget_bias: float = 1.0
    rel_tol: float = 1e-9
    patience: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    input_scaling: ScalingPair = IDENTITY_SCALING
    output_scaling: ScalingPair = IDENTITY_SCALING

    def __post_init__(self) -> None:
        if self.n_x < 1:
            raise ValueError("n_x must be at least one")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least one")


def init_simplified(cfg: LstmTrainingConfig) -> SimplifiedLstmParams:
    """Small symmetric uniform weights; forget bias warm-started positive so
    early cell states persist."""
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_x
    s = cfg.init_scale
    return SimplifiedLstmParams(
        w_f=rng.uniform(-s, s, n),
        w_c=rng.uniform(-s, s, n),
        u_f=rng.uniform(-s, s, (n, n)),
        u_c=rng.uniform(-s, s, (n, n)),
        b_f=np.full(n, cfg.forget_bias),
        b_c=np.zeros(n),
        input_scaling=cfg.input_scaling,
        output_scaling=cfg.output_scaling,
    )


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; carries the loss trace up to the failure."""

    def __init__(self, message: str, trace: np.ndarray):
        super().__init__(message)
        self.trace = trace


_BLOCKS = ("w_f", "u_f", "b_f", "w_c", "u_c", "b_c")


def train_lstm(dataset, cfg: LstmTrainingConfig):
    """Fit the simplified variant to a virtual dataset by adaptive-moment
    gradient descent on the exact BPTT gradient.

    The readout is fixed by the structure, so the bounded-output constraints
    hold for every iterate. Returns (best parameters, loss trace); the raw
    per-iteration losses may oscillate, the best-so-far envelope does not.
    """
    e = dataset.virtual_error
    if len(e) - cfg.washout < 1:
        raise ValueError("dataset is empty after the washout")
    s = cfg.output_scaling
    target = Signal(s.gain * dataset.residual_control.samples + s.shift,
                    e.sample_time)
    params = init_simplified(cfg)
    values = {name: np.array(getattr(params, name)) for name in _BLOCKS}
    m = {name: np.zeros_like(v) for name, v in values.items()}
    v = {name: np.zeros_like(val) for name, val in values.items()}

    trace = np.empty(cfg.max_iters)
    best_loss = np.inf
    best_values = {k: val.copy() for k, val in values.items()}
    last_improvement = 0
    iters_run = 0
    for it in range(cfg.max_iters):
        current = replace(params, **values)
        loss, grads = _loss_grads_or_diverge(current, e, target, cfg, trace[:it])
        trace[it] = loss
        iters_run = it + 1
        if loss < best_loss:
            improved = (not np.isfinite(best_loss)
                        or best_loss - loss > cfg.rel_tol * max(best_loss, 1e-300))
            if improved:
                last_improvement = it
            best_loss = loss
            best_values = {k: val.copy() for k, val in values.items()}
        if it - last_improvement >= cfg.patience:
            break
        t = it + 1
        bias1 = 1.0 - cfg.beta1 ** t
        bias2 = 1.0 - cfg.beta2 ** t
        for name in _BLOCKS:
            g = getattr(grads, name)
            m[name] = cfg.beta1 * m[name] + (1.0 - cfg.beta1) * g
            v[name] = cfg.beta2 * v[name] + (1.0 - cfg.beta2) * g * g
            step = cfg.learning_rate * (m[name] / bias1) / (np.sqrt(v[name] / bias2) + cfg.adam_eps)
            values[name] = values[name] - step
    best = replace(params, **best_values)
    return best, trace[:iters_run]


def _loss_grads_or_diverge(params, e, target, cfg, trace_so_far):
    try:
        return bptt_gradient(params, e, target, cfg.washout)
    except FloatingPointError as exc:
        raise TrainingDiverged(str(exc), np.array(trace_so_far)) from exc


# ── regulator ports ─────────────────────────────────────────────────────────

class LstmRegulator:
    """Port adapter for the full form; clamps at the certificate only when
    flagged constrained (the clamp is inactive in exact arithmetic)."""

    def __init__(self, params: LstmParams):
        self.params = params
        self._bounds = lstm_output_bound(params)
        self._state = initial_lstm_state(params.n_x)

    @property
    def state(self) -> LstmState:
        return self._state

    def reset(self) -> None:
        self._state = initial_lstm_state(self.params.n_x)

    def step(self, e: float) -> float:
        self._state, u = lstm_step(self.params, self._state, e)
        if self.params.constrained:
            u = self._bounds.clamp(u)
        return u

    def declared_bounds(self) -> Bounds:
        return self._bounds


class SimplifiedLstmRegulator:
    """Port adapter for the trainable variant; structurally bound-respecting."""

    def __init__(self, params: SimplifiedLstmParams):
        self.params = params
        self._bounds = lstm_output_bound(params)
        self._x = np.zeros(params.n_x)

    @property
    def x(self) -> np.ndarray:
        return self._x.copy()

    def reset(self) -> None:
        self._x = np.zeros(self.params.n_x)

    def step(self, e: float) -> float:
        self._x, u = simplified_lstm_step(self.params, self._x, e)
        return self._bounds.clamp(u)

    def declared_bounds(self) -> Bounds:
        return self._bounds


# ── serialization ───────────────────────────────────────────────────────────

def save_params(p, path) -> None:
    """Write either parameter flavour as structured JSON (row-major matrices);
    floats round-trip bit-exactly."""
    if isinstance(p, SimplifiedLstmParams):
        payload = {"type": "lstm_simplified", "n_x": p.n_x}
        blocks = _BLOCKS
    elif isinstance(p, LstmParams):
        payload = {"type": "lstm", "n_x": p.n_x,
                   "constrained": bool(p.constrained), "b_out": p.b_out}
        blocks = ("w_f", "w_i", "w_o", "w_c", "u_f", "u_i", "u_o", "u_c",
                  "b_f", "b_i", "b_o", "b_c", "w_out")
    else:
        raise TypeError(f"cannot serialise {type(p).__name__}")
    payload["input_scaling"] = {"gain": p.input_scaling.gain, "shift": p.input_scaling.shift}
    payload["output_scaling"] = {"gain": p.output_scaling.gain, "shift": p.output_scaling.shift}
    for name in blocks:
        payload[name] = np.asarray(getattr(p, name)).tolist()
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_params(path):
    with open(path) as fh:
        payload = json.load(fh)
    kind = payload.get("type")
    common = {
        "input_scaling": ScalingPair(**payload["input_scaling"]),
        "output_scaling": ScalingPair(**payload["output_scaling"]),
    }
    if kind == "lstm_simplified":
        return SimplifiedLstmParams(
            **{name: np.array(payload[name], dtype=np.float64) for name in _BLOCKS},
            **common)
    if kind == "lstm":
        blocks = ("w_f", "w_i", "w_o", "w_c", "u_f", "u_i", "u_o", "u_c",
                  "b_f", "b_i", "b_o", "b_c", "w_out")
        return LstmParams(
            **{name: np.array(payload[name], dtype=np.float64) for name in blocks},
            b_out=float(payload["b_out"]),
            constrained=bool(payload["constrained"]),
            **common)
    raise ValueError(f"{path} does not hold LSTM parameters")
