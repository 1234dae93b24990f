"""Fit metric, static characteristic curves, a-posteriori equilibrium
stability and tracking-quality metrics."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .signals import Signal, write_csv


def fit_percent(u: Signal, u_sim: Signal) -> float:
    """Normalised fit percentage: 100 * (1 - ||u - u_sim|| / ||u - mean(u)||).

    100 means a perfect reproduction, 0 matches the mean predictor. Undefined
    for a constant record (zero denominator), which is rejected.
    """
    if len(u) != len(u_sim):
        raise ValueError("fit requires sequences of equal length")
    ref = u.samples
    denom = float(np.linalg.norm(ref - ref.mean()))
    if denom == 0.0:
        raise ValueError("fit is undefined for a constant reference record")
    num = float(np.linalg.norm(ref - u_sim.samples))
    return 100.0 * (1.0 - num / denom)


@dataclass(frozen=True)
class StaticCurve:
    """Settled regulator output per constant input error."""

    error_grid: np.ndarray
    steady_output: np.ndarray
    stable_flags: np.ndarray

    def to_csv(self, path) -> None:
        write_csv(path, ("error", "steady_output", "stable"),
                  (self.error_grid, self.steady_output,
                   self.stable_flags.astype(np.float64)))


def static_characteristic(regulator, error_grid, settle_steps: int = 400,
                          tol: float = 1e-6) -> StaticCurve:
    """Free-run the regulator from zero state at each constant error.

    A point is flagged converged when the outputs over the last tenth of the
    run vary by less than tol.
    """
    if settle_steps < 1:
        raise ValueError("settle_steps must be at least one")
    grid = np.asarray(error_grid, dtype=np.float64).ravel()
    outputs = np.empty(grid.size)
    flags = np.empty(grid.size, dtype=bool)
    tail = max(1, settle_steps // 10)
    for idx, e in enumerate(grid):
        regulator.reset()
        out = np.empty(settle_steps)
        for k in range(settle_steps):
            out[k] = regulator.step(float(e))
        outputs[idx] = out[-1]
        window = out[-tail:]
        flags[idx] = float(window.max() - window.min()) < tol
    return StaticCurve(grid, outputs, flags)


class EquilibriumNotFound(RuntimeError):
    """The supplied state is not a fixed point of the map to tolerance."""


def equilibrium_stability(state_map, x_eq, *, fixed_point_tol: float = 1e-8,
                          fd_step: float = 1e-6,
                          stability_margin: float = 1e-9):
    """Numerical local stability of a settled equilibrium.

    Verifies the fixed-point residual, builds the Jacobian of the state-update
    map by central differences and declares the equilibrium asymptotically
    stable when the spectral radius is below 1 - stability_margin. Returns
    (stable, spectral_radius).
    """
    x_eq = np.asarray(x_eq, dtype=np.float64).ravel()
    residual = float(np.max(np.abs(np.asarray(state_map(x_eq)) - x_eq)))
    if residual > fixed_point_tol:
        raise EquilibriumNotFound(
            f"no equilibrium found: fixed-point residual {residual:.3e} "
            f"exceeds {fixed_point_tol:.1e}")
    n = x_eq.size
    jac = np.empty((n, n))
    for j in range(n):
        dx = np.zeros(n)
        dx[j] = fd_step
        jac[:, j] = (np.asarray(state_map(x_eq + dx))
                     - np.asarray(state_map(x_eq - dx))) / (2.0 * fd_step)
    radius = float(np.max(np.abs(np.linalg.eigvals(jac))))
    return radius < 1.0 - stability_margin, radius


@dataclass(frozen=True)
class SegmentMetrics:
    """Per constant-reference segment of a staircase trace.

    settling_samples counts until |e| stays below 2% of the reference step;
    tolerance_settle_samples until |e| stays below an absolute threshold
    (captures the slow final transient driven by the integral action). Both
    are None when the segment never settles.
    """

    start: int
    length: int
    reference: float
    step_size: float
    steady_state_error: float
    overshoot: float | None
    settling_samples: int | None
    tolerance_settle_samples: int | None


@dataclass(frozen=True)
class TrackingMetrics:
    segments: tuple[SegmentMetrics, ...]
    rms_error: float


def _stay_below(abs_err: np.ndarray, threshold: float) -> int | None:
    above = np.nonzero(abs_err >= threshold)[0]
    if above.size == 0:
        return 0
    k = int(above[-1]) + 1
    return k if k < abs_err.size else None


def tracking_metrics(trace, *, settle_fraction: float = 0.02,
                     error_tolerance: float = 1e-3,
                     min_segment: int = 10) -> TrackingMetrics:
    """Segment a staircase trace along its reference and score each step.

    Steady-state error is the mean |e| over the last tenth of the segment;
    overshoot is measured relative to the step size. Segments shorter than
    min_segment samples are skipped with a warning.
    """
    r = trace.r.samples
    y = trace.y.samples
    e = trace.e.samples
    boundaries = [0] + [k for k in range(1, r.size) if r[k] != r[k - 1]] + [r.size]
    segments = []
    prev_level = float(y[0])
    for start, end in zip(boundaries[:-1], boundaries[1:]):
        length = end - start
        ref = float(r[start])
        step_size = ref - prev_level
        prev_level = ref
        if length < min_segment:
            warnings.warn(
                f"skipping {length}-sample reference segment at {start}",
                stacklevel=2)
            continue
        seg_err = np.abs(e[start:end])
        tail = max(1, length // 10)
        sse = float(seg_err[-tail:].mean())
        if step_size != 0.0:
            direction = 1.0 if step_size > 0 else -1.0
            overshoot = float(max(0.0, np.max(
                (y[start:end] - ref) * direction) / abs(step_size)))
            settling = _stay_below(seg_err, settle_fraction * abs(step_size))
        else:
            overshoot = None
            settling = None
        tol_settle = _stay_below(seg_err, error_tolerance)
        segments.append(SegmentMetrics(
            start=start, length=length, reference=ref, step_size=step_size,
            steady_state_error=sse, overshoot=overshoot,
            settling_samples=settling, tolerance_settle_samples=tol_settle))
    rms = float(np.sqrt(np.mean(e ** 2)))
    return TrackingMetrics(tuple(segments), rms)
