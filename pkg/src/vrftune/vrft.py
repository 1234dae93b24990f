"""Reference-model simulation/inversion and construction of the virtual
training set (virtual error in, residual control action out)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .loop import AntiWindupIntegrator
from .signals import Signal, read_csv, write_csv


@dataclass(frozen=True)
class ReferenceModel:
    """Target closed-loop map y(k) = -a*y(k-1) + b*r(k-1).

    Asymptotically stable (|a| < 1) and invertible (b != 0). When unit_gain
    is requested the static gain b / (1 + a) must equal one to 1e-9.
    """

    a: float
    b: float
    unit_gain: bool = False

    def __post_init__(self) -> None:
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise ValueError("reference model coefficients must be finite")
        if self.b == 0.0:
            raise ValueError("b = 0 makes the reference model non-invertible")
        if abs(self.a) >= 1.0:
            raise ValueError("|a| must be below one for a stable target loop")
        if self.unit_gain and abs(self.static_gain - 1.0) > 1e-9:
            raise ValueError(
                f"static gain {self.static_gain} is not unitary within 1e-9")

    @property
    def static_gain(self) -> float:
        return self.b / (1.0 + self.a)


@dataclass(frozen=True)
class VirtualDataset:
    """Aligned signals for regulator regression: e in, u_beta = u - u_alpha out."""

    virtual_error: Signal
    residual_control: Signal
    raw_control: Signal
    integrator_contribution: Signal

    def __post_init__(self) -> None:
        signals = (self.virtual_error, self.residual_control,
                   self.raw_control, self.integrator_contribution)
        lengths = {len(s) for s in signals}
        if len(lengths) != 1:
            raise ValueError("virtual dataset signals must share one length")
        times = {s.sample_time for s in signals}
        if len(times) != 1:
            raise ValueError("virtual dataset signals must share one sample time")
        recomposed = self.raw_control.samples - self.integrator_contribution.samples
        if not np.array_equal(recomposed, self.residual_control.samples):
            raise ValueError("residual_control must equal raw - integrator exactly")

    def __len__(self) -> int:
        return len(self.virtual_error)

    def to_csv(self, path) -> None:
        write_csv(
            path,
            ("time", "e", "u", "u_alpha", "u_beta"),
            (self.virtual_error.times, self.virtual_error.samples,
             self.raw_control.samples, self.integrator_contribution.samples,
             self.residual_control.samples),
        )

    @classmethod
    def from_csv(cls, path, sample_time: float | None = None) -> "VirtualDataset":
        t, e, u, ua, ub = read_csv(path, ("time", "e", "u", "u_alpha", "u_beta"))
        if sample_time is None:
            sample_time = float(t[1] - t[0]) if t.size >= 2 else 0.005
        mk = lambda v: Signal(v, sample_time)
        return cls(mk(e), mk(ub), mk(u), mk(ua))


def simulate_reference(m: ReferenceModel, r: Signal, y0: float) -> Signal:
    """Forward-run the target loop: y(0) = y0, y(k) = -a*y(k-1) + b*r(k-1)."""
    refs = r.samples
    y = np.empty(len(r))
    y[0] = y0
    for k in range(1, len(r)):
        y[k] = -m.a * y[k - 1] + m.b * refs[k - 1]
    return Signal(y, r.sample_time)


def invert_reference(m: ReferenceModel, y: Signal) -> Signal:
    """Virtual reference consistent with an output record.

    r(k) = (y(k+1) + a*y(k)) / b for k = 0..N-2; the last output sample has
    no successor, so the result carries one sample fewer than y.
    """
    if len(y) < 2:
        raise ValueError("inversion needs at least two output samples")
    v = y.samples
    r = (v[1:] + m.a * v[:-1]) / m.b
    return Signal(r, y.sample_time)


def virtual_error(r: Signal, y: Signal) -> Signal:
    """Pointwise r - y after truncating y to the length of r."""
    excess = len(y) - len(r)
    if excess not in (0, 1):
        raise ValueError(
            f"length mismatch: r has {len(r)} samples, y has {len(y)}")
    return Signal(r.samples - y.samples[:len(r)], r.sample_time)


def vrft_cost(u_pred: Signal, u_data: Signal,
              filt: Callable[[np.ndarray], np.ndarray] | None = None) -> float:
    """Squared Euclidean distance between predicted and recorded actuation.

    An optional linear filter is applied to both sequences first; the default
    is the identity.
    """
    if len(u_pred) != len(u_data):
        raise ValueError("cost requires sequences of equal length")
    a = u_pred.samples
    b = u_data.samples
    if filt is not None:
        a = np.asarray(filt(a), dtype=np.float64)
        b = np.asarray(filt(b), dtype=np.float64)
        if a.shape != b.shape:
            raise ValueError("filter must preserve sequence length")
    d = a - b
    return float(d @ d)


def build_training_set(u: Signal, y: Signal, m: ReferenceModel,
                       integrator: AntiWindupIntegrator | None,
                       integrator_initial: float = 0.0) -> VirtualDataset:
    """Assemble the regression dataset from an open-loop record (u, y).

    Inverts the reference model, forms the virtual error, replays the
    saturated integrator over it (the anti-windup block acts in training
    exactly as it will in the loop), and leaves the residual u_beta =
    u - u_alpha as the regulator's target. All signals are truncated to the
    N-1 horizon imposed by the inversion.
    """
    if len(u) != len(y):
        raise ValueError("u and y must share one length")
    if u.sample_time != y.sample_time:
        raise ValueError("u and y must share one sample time")
    r = invert_reference(m, y)
    e = virtual_error(r, y)
    horizon = len(e)
    if integrator is not None:
        u_alpha = integrator.replay(e.samples, state0=integrator_initial)
    else:
        u_alpha = np.zeros(horizon)
    raw = u.samples[:horizon]
    st = u.sample_time
    return VirtualDataset(
        virtual_error=e,
        residual_control=Signal(raw - u_alpha, st),
        raw_control=Signal(raw, st),
        integrator_contribution=Signal(u_alpha, st),
    )


def read_dataset_csv(path, sample_time: float | None = None) -> tuple[Signal, Signal]:
    """Load an open-loop record written as time,u,y columns."""
    t, u, y = read_csv(path, ("time", "u", "y"))
    if sample_time is None:
        sample_time = float(t[1] - t[0]) if t.size >= 2 else 0.005
    return Signal(u, sample_time), Signal(y, sample_time)


def write_dataset_csv(path, u: Signal, y: Signal) -> None:
    if len(u) != len(y):
        raise ValueError("u and y must share one length")
    write_csv(path, ("time", "u", "y"), (u.times, u.samples, y.samples))
