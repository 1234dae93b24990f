"""Parallel anti-windup integrator plus RNN regulator: bound splitting and
closed-loop simulation against a plant port."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from . import kernels
from .signals import Bounds, Signal, write_csv, read_csv


@runtime_checkable
class PlantPort(Protocol):
    """Single-input single-output plant driven one sample at a time."""

    def reset(self) -> None: ...

    def measure(self) -> float: ...

    def step(self, u: float) -> float: ...


@runtime_checkable
class RegulatorPort(Protocol):
    """Common face of the trained regulators.

    A constrained-mode implementation must keep step outputs inside
    declared_bounds().
    """

    def reset(self) -> None: ...

    def step(self, e: float) -> float: ...

    def declared_bounds(self) -> Bounds: ...


class AntiWindupIntegrator:
    """Discrete integrator whose stored state is the saturated output.

    u*(k) = state + rho * e(k); state <- clamp(u*, bounds). Storing the
    clamped value (conditional integration) makes recovery from saturation
    immediate: the state never winds up past the limits. bounds=None leaves
    the integrator unbounded.
    """

    def __init__(self, rho: float, bounds: Bounds | None, state: float = 0.0):
        if not np.isfinite(rho) or rho < 0.0:
            raise ValueError("integrator gain must be a finite nonnegative real")
        self.rho = float(rho)
        self.bounds = bounds
        self.state = float(state)

    def _clamp(self, value: float) -> float:
        if self.bounds is None:
            return value
        return self.bounds.clamp(value)

    def step(self, e: float) -> float:
        self.state = self._clamp(self.state + self.rho * e)
        return self.state

    def reset(self, state: float = 0.0) -> None:
        self.state = float(state)

    def replay(self, e: np.ndarray, state0: float = 0.0) -> np.ndarray:
        """Run the recursion over a whole error sequence without touching
        the live state; used when reconstructing training targets."""
        lo = -np.inf if self.bounds is None else self.bounds.lower
        hi = np.inf if self.bounds is None else self.bounds.upper
        e = np.ascontiguousarray(e, dtype=np.float64)
        return kernels.integrator_replay(e, self.rho, lo, hi, float(state0))


@dataclass(frozen=True)
class BoundSplit:
    """Total actuation range split additively between the integrator (alpha)
    and the RNN (beta) channels."""

    total: Bounds
    alpha: Bounds
    beta: Bounds

    def __post_init__(self) -> None:
        if self.alpha.lower + self.beta.lower != self.total.lower:
            raise ValueError("lower bounds do not sum exactly to the total")
        if self.alpha.upper + self.beta.upper != self.total.upper:
            raise ValueError("upper bounds do not sum exactly to the total")


def split_bounds(total: Bounds, alpha: Bounds) -> BoundSplit:
    """Allocate the remainder of the total range to the RNN channel."""
    if alpha.lower < total.lower or alpha.upper > total.upper:
        raise ValueError("integrator bounds exceed the total actuation range")
    beta = Bounds(total.lower - alpha.lower, total.upper - alpha.upper)
    return BoundSplit(total, alpha, beta)


@dataclass(frozen=True)
class LoopTrace:
    """Synchronized closed-loop record: y(k) is the measurement used at step k."""

    r: Signal
    y: Signal
    e: Signal
    u: Signal
    u_alpha: Signal
    u_beta: Signal

    def __len__(self) -> int:
        return len(self.r)

    def to_csv(self, path) -> None:
        write_csv(
            path,
            ("time", "r", "y", "e", "u", "u_alpha", "u_beta"),
            (self.r.times, self.r.samples, self.y.samples, self.e.samples,
             self.u.samples, self.u_alpha.samples, self.u_beta.samples),
        )

    @classmethod
    def from_csv(cls, path, sample_time: float | None = None) -> "LoopTrace":
        t, r, y, e, u, ua, ub = read_csv(
            path, ("time", "r", "y", "e", "u", "u_alpha", "u_beta"))
        if sample_time is None:
            sample_time = float(t[1] - t[0]) if t.size >= 2 else 0.005
        mk = lambda v: Signal(v, sample_time)
        return cls(mk(r), mk(y), mk(e), mk(u), mk(ua), mk(ub))


class SimulationAborted(RuntimeError):
    """Plant produced a non-finite output; carries the finite prefix."""

    def __init__(self, message: str, partial_trace: LoopTrace | None):
        super().__init__(message)
        self.partial_trace = partial_trace


def simulate_closed_loop(plant: PlantPort, regulator: RegulatorPort | None,
                         integrator: AntiWindupIntegrator | None,
                         r: Signal) -> LoopTrace:
    """Run the parallel scheme u = u_alpha + u_beta over a reference signal.

    Per step: e(k) = r(k) - y(k) with y(k) measured before actuation, then
    the plant advances one sample under u(k). Either channel may be absent.
    """
    steps = len(r)
    refs = r.samples
    y = np.empty(steps)
    e = np.empty(steps)
    u = np.empty(steps)
    u_alpha = np.empty(steps)
    u_beta = np.empty(steps)
    for k in range(steps):
        yk = plant.measure()
        if not np.isfinite(yk):
            partial = _partial_trace(r, y, e, u, u_alpha, u_beta, k)
            raise SimulationAborted(f"non-finite plant output at step {k}", partial)
        y[k] = yk
        e[k] = refs[k] - yk
        u_alpha[k] = integrator.step(e[k]) if integrator is not None else 0.0
        u_beta[k] = regulator.step(e[k]) if regulator is not None else 0.0
        u[k] = u_alpha[k] + u_beta[k]
        plant.step(u[k])
    st = r.sample_time
    return LoopTrace(r, Signal(y, st), Signal(e, st), Signal(u, st),
                     Signal(u_alpha, st), Signal(u_beta, st))


def _partial_trace(r, y, e, u, u_alpha, u_beta, k) -> LoopTrace | None:
    if k == 0:
        return None
    st = r.sample_time
    return LoopTrace(
        Signal(r.samples[:k], st), Signal(y[:k], st), Signal(e[:k], st),
        Signal(u[:k], st), Signal(u_alpha[:k], st), Signal(u_beta[:k], st))
