"""Echo state network regulator: reservoir generation, non-strictly-proper
forward dynamics, constrained readout regression, output-bound certificates
and the incremental-stability sufficient check."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .signals import (Bounds, IDENTITY_SCALING, ScalingPair, Signal, descale,
                      descale_array, scale, scale_array)


# ── reservoir generation ────────────────────────────────────────────────────

@dataclass(frozen=True)
class ReservoirConfig:
    """Recipe for the fixed random recurrent core.

    Defaults follow common reservoir-computing practice: spectral radius just
    below one, sparse recurrence, unit input range and a mild output-feedback
    range.
    """

    n: int = 300
    spectral_radius: float = 0.9
    density: float = 0.05
    input_weight_range: float = 1.0
    feedback_weight_range: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("reservoir size must be at least one")
        if not 0.0 < self.spectral_radius < 1.0:
            raise ValueError("spectral radius must lie in (0, 1)")
        if not 0.0 < self.density <= 1.0:
            raise ValueError("density must lie in (0, 1]")
        if self.input_weight_range <= 0.0:
            raise ValueError("input weight range must be positive")
        if self.feedback_weight_range < 0.0:
            raise ValueError("feedback weight range must be nonnegative")


_RESCALE_ATTEMPTS = 8


def generate_reservoir(cfg: ReservoirConfig):
    """Draw (W_u, W_x, W_y) deterministically from the config seed.

    W_x is sampled sparse with symmetric uniform entries and rescaled to the
    requested spectral radius. A draw whose spectral radius is numerically
    zero (e.g. a nilpotent sparsity pattern) is retried with an incremented
    seed a bounded number of times.
    """
    n = cfg.n
    for attempt in range(_RESCALE_ATTEMPTS):
        rng = np.random.default_rng(cfg.seed + attempt)
        mask = rng.random((n, n)) < cfg.density
        w_x = np.where(mask, rng.uniform(-1.0, 1.0, (n, n)), 0.0)
        radius = float(np.max(np.abs(np.linalg.eigvals(w_x))))
        if radius > 1e-12:
            w_x *= cfg.spectral_radius / radius
            w_u = rng.uniform(-cfg.input_weight_range, cfg.input_weight_range, n)
            if cfg.feedback_weight_range > 0.0:
                w_y = rng.uniform(-cfg.feedback_weight_range,
                                  cfg.feedback_weight_range, n)
            else:
                w_y = np.zeros(n)
            return w_u, np.ascontiguousarray(w_x), w_y
    raise RuntimeError(
        f"reservoir draw is numerically nilpotent after {_RESCALE_ATTEMPTS} "
        f"attempts (n={n}, density={cfg.density}); raise the density")


# ── parameters and state ────────────────────────────────────────────────────

def readout_norm(w) -> float:
    """Infinity norm of the 1-row readout (= l1 norm of its coefficients).

    Accumulated strictly left to right so that the certificate and the
    kernels' readout loops agree in floating point, which makes the output
    bounds hold sample-wise with zero tolerance.
    """
    total = 0.0
    for x in np.asarray(w, dtype=np.float64).ravel():
        total += abs(float(x))
    return total


@dataclass(frozen=True)
class EsnParams:
    """Trained regulator: fixed reservoir plus linear readout and scalings.

    constrained=True asserts the bounded-output structure: readout l1 norm at
    most one and no direct feedthrough.
    """

    w_u: np.ndarray
    w_x: np.ndarray
    w_y: np.ndarray
    w_out1: np.ndarray
    w_out2: float
    input_scaling: ScalingPair = IDENTITY_SCALING
    output_scaling: ScalingPair = IDENTITY_SCALING
    constrained: bool = False
    seed: int | None = None

    def __post_init__(self) -> None:
        n = int(np.asarray(self.w_x).shape[0])
        conv = {
            "w_u": np.ascontiguousarray(np.asarray(self.w_u, dtype=np.float64).reshape(n)),
            "w_x": np.ascontiguousarray(np.asarray(self.w_x, dtype=np.float64).reshape(n, n)),
            "w_y": np.ascontiguousarray(np.asarray(self.w_y, dtype=np.float64).reshape(n)),
            "w_out1": np.ascontiguousarray(np.asarray(self.w_out1, dtype=np.float64).reshape(n)),
        }
        for name, arr in conv.items():
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} holds non-finite entries")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "w_out2", float(self.w_out2))
        if not np.isfinite(self.w_out2):
            raise ValueError("w_out2 must be finite")
        if self.output_scaling.gain <= 0.0:
            raise ValueError("output scaling gain must be positive")
        if self.constrained:
            if self.w_out2 != 0.0:
                raise ValueError("constrained mode requires zero feedthrough")
            if readout_norm(self.w_out1) > 1.0:
                raise ValueError("constrained mode requires readout norm <= 1")

    @property
    def n(self) -> int:
        return int(self.w_x.shape[0])


@dataclass(frozen=True)
class EsnState:
    """Reservoir activation plus the previous normalised output."""

    x: np.ndarray
    u_tilde_prev: float = 0.0

    def __post_init__(self) -> None:
        x = np.ascontiguousarray(np.asarray(self.x, dtype=np.float64).ravel())
        x.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "u_tilde_prev", float(self.u_tilde_prev))


def initial_state(n: int) -> EsnState:
    return EsnState(np.zeros(n), 0.0)


# ── forward dynamics ────────────────────────────────────────────────────────

def esn_step(p: EsnParams, s: EsnState, e: float) -> tuple[EsnState, float]:
    """One non-strictly-proper update: the output uses the activation just
    computed from the current (scaled) input."""
    et = scale(e, p.input_scaling)
    g = np.tanh(p.w_u * et + p.w_x @ s.x + p.w_y * s.u_tilde_prev)
    u_tilde = float(p.w_out1 @ g) + p.w_out2 * et
    return EsnState(g, u_tilde), descale(u_tilde, p.output_scaling)


def run_esn(p: EsnParams, e: Signal, state: EsnState | None = None) -> Signal:
    """Free-run over a whole input signal (kernel-backed); returns the
    descaled output sequence."""
    if state is None:
        state = initial_state(p.n)
    et = np.ascontiguousarray(scale_array(e.samples, p.input_scaling))
    u_tilde = kernels.esn_run(p.w_u, p.w_x, p.w_y, p.w_out1, p.w_out2,
                              et, state.x, state.u_tilde_prev)
    return Signal(descale_array(u_tilde, p.output_scaling), e.sample_time)


def collect_states(p: EsnParams, e: Signal, u_teacher: Signal,
                   washout: int = 50):
    """Teacher-forced regression data.

    Runs the reservoir feeding the measured normalised output into the
    feedback path, and returns (features, targets): one row [g(k), e_tilde(k)]
    per retained step k >= washout, aligned with target u_tilde(k).
    """
    if len(e) != len(u_teacher):
        raise ValueError("input and teacher signals must share one length")
    if not 0 <= washout < len(e):
        raise ValueError("washout must be shorter than the dataset")
    et = np.ascontiguousarray(scale_array(e.samples, p.input_scaling))
    s = p.output_scaling
    ut = np.ascontiguousarray(s.gain * u_teacher.samples + s.shift)
    rows = kernels.esn_teacher_features(p.w_u, p.w_x, p.w_y, et, ut,
                                        np.zeros(p.n), 0.0)
    features = np.hstack([rows, et[:, None]])
    return features[washout:], ut[washout:]


def teacher_forced_prediction(p: EsnParams, e: Signal, u_teacher: Signal,
                              washout: int = 50):
    """Readout applied to the teacher-forced features; returns (u_tilde_hat,
    u_tilde_target) on the retained horizon."""
    features, targets = collect_states(p, e, u_teacher, washout)
    pred = features[:, :-1] @ p.w_out1 + p.w_out2 * features[:, -1]
    return pred, targets


# ── readout training ────────────────────────────────────────────────────────

def project_l1_ball(v: np.ndarray, radius: float = 1.0) -> np.ndarray:
    """Euclidean projection onto the l1 ball via the sort-based exact rule."""
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    v = np.asarray(v, dtype=np.float64)
    mag = np.abs(v)
    if mag.sum() <= radius:
        return v.copy()
    u = np.sort(mag)[::-1]
    css = np.cumsum(u)
    idx = np.nonzero(u * np.arange(1, v.size + 1) > (css - radius))[0][-1]
    theta = (css[idx] - radius) / (idx + 1.0)
    return np.sign(v) * np.maximum(mag - theta, 0.0)


def shrink_onto_ball(w: np.ndarray, radius: float = 1.0) -> np.ndarray:
    """Nudge away ulp-level feasibility violations left by the projection,
    measured with the same sequential sum the certificates use."""
    w = np.asarray(w, dtype=np.float64).copy()
    s = readout_norm(w)
    while s > radius:
        w *= np.nextafter(radius / s, 0.0)
        s = readout_norm(w)
    return w


@dataclass(frozen=True)
class ReadoutFit:
    """Result of the readout regression."""

    w_out1: np.ndarray
    w_out2: float
    mode: str
    residual: float
    iterations: int
    kkt_residual: float
    converged: bool


def train_readout(features: np.ndarray, targets: np.ndarray,
                  mode: str = "constrained", *, ridge: float = 1e-8,
                  tol: float = 1e-8, max_iters: int = 100_000) -> ReadoutFit:
    """Least-squares readout fit.

    features rows are [g(k), e_tilde(k)] as produced by collect_states.
    Unconstrained mode solves the ridge-regularised normal equations over
    both the activation block and the feedthrough column. Constrained mode
    forces zero feedthrough and minimises over the l1 ball (the row
    infinity-norm constraint) by projected gradient with fixed step 1/L,
    L the largest eigenvalue of the feature Gram matrix; it stops when the
    gradient-mapping norm falls below tol or at the iteration cap, reporting
    the final KKT residual either way.
    """
    features = np.ascontiguousarray(features, dtype=np.float64)
    targets = np.ascontiguousarray(targets, dtype=np.float64).ravel()
    if features.ndim != 2 or features.shape[0] != targets.size:
        raise ValueError("features and targets are misaligned")
    if not (np.all(np.isfinite(features)) and np.all(np.isfinite(targets))):
        raise ValueError("features and targets must be finite")
    rows, cols = features.shape
    if rows < cols:
        warnings.warn(
            f"{rows} samples for {cols} readout parameters; the regression "
            "is underdetermined", stacklevel=2)
    if mode == "unconstrained":
        gram = features.T @ features + ridge * np.eye(cols)
        theta = np.linalg.solve(gram, features.T @ targets)
        resid = targets - features @ theta
        return ReadoutFit(theta[:-1], float(theta[-1]), mode,
                          float(resid @ resid), 0, 0.0, True)
    if mode != "constrained":
        raise ValueError(f"unknown training mode {mode!r}")

    g = features[:, :-1]
    n = cols - 1
    gram = g.T @ g
    gy = g.T @ targets
    lip = float(np.linalg.eigvalsh(gram)[-1])
    if lip <= 0.0:
        resid = float(targets @ targets)
        return ReadoutFit(np.zeros(n), 0.0, mode, resid, 0, 0.0, True)
    w = project_l1_ball(np.linalg.solve(gram + ridge * np.eye(n), gy))
    step = 1.0 / lip
    kkt = np.inf
    iterations = 0
    for iterations in range(1, max_iters + 1):
        grad = gram @ w - gy
        w_next = project_l1_ball(w - step * grad)
        kkt = lip * float(np.linalg.norm(w_next - w))
        w = w_next
        if kkt <= tol:
            break
    converged = kkt <= tol
    if not converged:
        warnings.warn(
            f"projected gradient hit the {max_iters}-iteration cap with KKT "
            f"residual {kkt:.3e}", stacklevel=2)
    w = shrink_onto_ball(w, 1.0)
    resid = targets - g @ w
    return ReadoutFit(w, 0.0, mode, float(resid @ resid), iterations, kkt,
                      converged)


# ── certificates ────────────────────────────────────────────────────────────

def esn_output_bound(p: EsnParams) -> Bounds:
    """Certified output range.

    With zero feedthrough the bound is the readout norm alone and holds for
    any input sequence. With feedthrough it additionally charges the
    worst-case scaled input over |e| <= 1, i.e. |e_tilde| <= |k_e| + |s_e|.
    """
    b = readout_norm(p.w_out1)
    if p.w_out2 != 0.0:
        reach = abs(p.input_scaling.gain) + abs(p.input_scaling.shift)
        b = b + abs(p.w_out2) * reach
    return Bounds(descale(-b, p.output_scaling), descale(b, p.output_scaling))


def check_delta_iss(p: EsnParams, norm: str = "spectral") -> tuple[bool, float]:
    """Sufficient incremental-stability test: ||W_x + W_y w_out1|| < 1.

    The matrix norm is selectable because the condition is norm-dependent;
    'spectral' (largest singular value) is the default, 'infinity' the
    max-row-sum alternative.
    """
    m = p.w_x + np.outer(p.w_y, p.w_out1)
    if norm == "spectral":
        value = float(np.linalg.norm(m, 2))
    elif norm == "infinity":
        value = float(np.linalg.norm(m, np.inf))
    else:
        raise ValueError(f"unknown norm {norm!r}")
    return value < 1.0, value


def esn_state_map(p: EsnParams, e: float):
    """Reduced state-update map at constant input.

    After the first step the fed-back output is determined by the state, so
    the recursion closes over x alone:
    x -> tanh(W_u e~ + W_x x + W_y (w_out1 x + w_out2 e~)).
    """
    et = scale(e, p.input_scaling)

    def step(x: np.ndarray) -> np.ndarray:
        u_tilde = float(p.w_out1 @ x) + p.w_out2 * et
        return np.tanh(p.w_u * et + p.w_x @ x + p.w_y * u_tilde)

    return step


# ── regulator port ──────────────────────────────────────────────────────────

class EsnRegulator:
    """Stateful port adapter around immutable parameters.

    In constrained mode the emitted value is clamped at the certified bounds;
    the clamp is inactive in exact arithmetic and only guards against
    last-ulp rounding of the readout sum.
    """

    def __init__(self, params: EsnParams):
        self.params = params
        self._bounds = esn_output_bound(params)
        self._state = initial_state(params.n)

    @property
    def state(self) -> EsnState:
        return self._state

    def reset(self) -> None:
        self._state = initial_state(self.params.n)

    def step(self, e: float) -> float:
        self._state, u = esn_step(self.params, self._state, e)
        if self.params.constrained:
            u = self._bounds.clamp(u)
        return u

    def declared_bounds(self) -> Bounds:
        return self._bounds


# ── serialization ───────────────────────────────────────────────────────────

def save_params(p: EsnParams, path) -> None:
    """Write parameters as structured JSON; floats round-trip bit-exactly.

    The reservoir matrix is stored as coordinate triplets (row-major order of
    its nonzeros).
    """
    ii, jj = np.nonzero(p.w_x)
    payload = {
        "type": "esn",
        "n": p.n,
        "constrained": bool(p.constrained),
        "seed": p.seed,
        "input_scaling": {"gain": p.input_scaling.gain, "shift": p.input_scaling.shift},
        "output_scaling": {"gain": p.output_scaling.gain, "shift": p.output_scaling.shift},
        "w_u": p.w_u.tolist(),
        "w_y": p.w_y.tolist(),
        "w_out1": p.w_out1.tolist(),
        "w_out2": p.w_out2,
        "w_x": {
            "shape": [p.n, p.n],
            "entries": [[int(i), int(j), float(p.w_x[i, j])] for i, j in zip(ii, jj)],
        },
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_params(path) -> EsnParams:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("type") != "esn":
        raise ValueError(f"{path} does not hold ESN parameters")
    n = int(payload["n"])
    w_x = np.zeros((n, n))
    for i, j, v in payload["w_x"]["entries"]:
        w_x[int(i), int(j)] = v
    return EsnParams(
        w_u=np.array(payload["w_u"], dtype=np.float64),
        w_x=w_x,
        w_y=np.array(payload["w_y"], dtype=np.float64),
        w_out1=np.array(payload["w_out1"], dtype=np.float64),
        w_out2=float(payload["w_out2"]),
        input_scaling=ScalingPair(**payload["input_scaling"]),
        output_scaling=ScalingPair(**payload["output_scaling"]),
        constrained=bool(payload["constrained"]),
        seed=payload.get("seed"),
    )
