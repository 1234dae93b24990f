"""Scalar sampled signals plus the affine scaling maps shared by all regulators."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_SAMPLE_TIME = 0.005


def format_float(x: float) -> str:
    """Render a float with 17 significant digits (lossless for float64)."""
    return format(float(x), ".17g")


def write_csv(path, header, columns) -> None:
    """Write equal-length float columns under a comma-separated header.

    Uses '\\n' line endings and 17-digit floats so repeated runs are
    byte-identical and diffable.
    """
    columns = [np.asarray(c, dtype=np.float64) for c in columns]
    length = columns[0].size
    if any(c.size != length for c in columns):
        raise ValueError("csv columns must share one length")
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*columns):
            fh.write(",".join(format_float(x) for x in row) + "\n")


def read_csv(path, expected_header):
    """Read float columns previously written by write_csv; header is checked."""
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != tuple(expected_header):
            raise ValueError(
                f"unexpected csv header {header!r} in {Path(path).name}, "
                f"expected {list(expected_header)!r}"
            )
        rows = [[float(cell) for cell in row] for row in reader if row]
    if not rows:
        raise ValueError(f"{Path(path).name} holds no data rows")
    data = np.array(rows, dtype=np.float64)
    return tuple(data[:, j] for j in range(data.shape[1]))


@dataclass(frozen=True)
class Signal:
    """Uniformly sampled scalar time series.

    Samples are stored as a read-only float64 array; sample_time in seconds.
    """

    samples: np.ndarray
    sample_time: float = DEFAULT_SAMPLE_TIME

    def __post_init__(self) -> None:
        samples = np.array(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("signal samples must be one-dimensional")
        if samples.size < 1:
            raise ValueError("signal must hold at least one sample")
        if not np.all(np.isfinite(samples)):
            raise ValueError("signal samples must all be finite")
        st = float(self.sample_time)
        if not np.isfinite(st) or st <= 0.0:
            raise ValueError("sample_time must be a positive real")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_time", st)

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self)) * self.sample_time

    def to_csv(self, path) -> None:
        write_csv(path, ("time", "value"), (self.times, self.samples))

    @classmethod
    def from_csv(cls, path, sample_time: float | None = None) -> "Signal":
        t, v = read_csv(path, ("time", "value"))
        if sample_time is None:
            sample_time = float(t[1] - t[0]) if t.size >= 2 else DEFAULT_SAMPLE_TIME
        return cls(v, sample_time)


@dataclass(frozen=True)
class ScalingPair:
    """Affine normalisation u_tilde = gain * u + shift."""

    gain: float
    shift: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.gain) and np.isfinite(self.shift)):
            raise ValueError("scaling parameters must be finite")
        if self.gain == 0.0:
            raise ValueError("scaling gain must be nonzero")


IDENTITY_SCALING = ScalingPair(1.0, 0.0)


@dataclass(frozen=True)
class Bounds:
    """Closed interval [lower, upper]; degenerate single-point intervals allowed."""

    lower: float
    upper: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)):
            raise ValueError("bounds must be finite")
        if self.lower > self.upper:
            raise ValueError(f"lower bound {self.lower} exceeds upper {self.upper}")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, x: float) -> bool:
        return self.lower <= x <= self.upper

    def clamp(self, x: float) -> float:
        return min(max(x, self.lower), self.upper)


def scale(e: float, s: ScalingPair) -> float:
    """Map a raw value into normalised units: gain * e + shift."""
    return s.gain * e + s.shift


def scale_array(e: np.ndarray, s: ScalingPair) -> np.ndarray:
    return s.gain * np.asarray(e, dtype=np.float64) + s.shift


def descale(u_tilde: float, s: ScalingPair) -> float:
    """Inverse of scale: (u_tilde - shift) / gain. Requires gain > 0."""
    if s.gain <= 0.0:
        raise ValueError("descaling requires a positive gain")
    return (u_tilde - s.shift) / s.gain


def descale_array(u_tilde: np.ndarray, s: ScalingPair) -> np.ndarray:
    if s.gain <= 0.0:
        raise ValueError("descaling requires a positive gain")
    return (np.asarray(u_tilde, dtype=np.float64) - s.shift) / s.gain


def bounds_to_scaling(b: Bounds) -> ScalingPair:
    """Output scaling that maps the normalised range [-1, 1] exactly onto b.

    shift = -(upper + lower) / (upper - lower), gain = 2 / (upper - lower).
    """
    span = b.upper - b.lower
    if span <= 0.0:
        raise ValueError("cannot derive a scaling from degenerate bounds")
    return ScalingPair(2.0 / span, -(b.upper + b.lower) / span)
