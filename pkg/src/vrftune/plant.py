"""Desk-scale throttle-valve surrogate and the multilevel pseudo-random
excitation used to collect identification data.

The plant is a second-order nonlinear model: motor torque proportional to the
saturated drive voltage, viscous damping, smoothed Coulomb friction and an
asymmetric return spring pulling toward the limp-home position (stiffer slope
below it). Position is hard-clamped to [0, 1] with the velocity zeroed at the
stops. It is a qualitative benchmark, not an identification of any physical
valve; the default coefficients live in a versioned config file so results
stay stable.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from importlib import resources

import numpy as np

from . import kernels
from .signals import Bounds, Signal

DEFAULT_PARAMS_RESOURCE = "etb_surrogate.json"


@dataclass(frozen=True)
class PlantParams:
    torque_gain: float = 80.0          # acceleration per volt
    damping: float = 40.0              # 1/s
    spring_rate_open: float = 180.0    # acceleration per unit opening above limp-home
    spring_rate_closed: float = 540.0  # stiffer return below limp-home
    limp_home: float = 0.15
    coulomb_level: float = 0.4         # acceleration magnitude of dry friction
    friction_smoothing: float = 1e-3   # velocity scale of the smooth signum
    input_saturation: Bounds = Bounds(-12.0, 12.0)
    sample_time: float = 0.005

    def __post_init__(self) -> None:
        if not 0.0 < self.limp_home < 1.0:
            raise ValueError("limp-home position must lie strictly inside (0, 1)")
        for name in ("torque_gain", "damping", "spring_rate_open",
                     "spring_rate_closed", "friction_smoothing", "sample_time"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.coulomb_level < 0.0:
            raise ValueError("coulomb_level must be nonnegative")


def load_plant_params(path) -> PlantParams:
    with open(path) as fh:
        payload = json.load(fh)
    return _params_from_dict(payload)


def _params_from_dict(payload: dict) -> PlantParams:
    payload = dict(payload)
    sat = payload.pop("input_saturation", None)
    if sat is not None:
        payload["input_saturation"] = Bounds(float(sat[0]), float(sat[1]))
    return PlantParams(**payload)


def save_plant_params(params: PlantParams, path) -> None:
    payload = asdict(params)
    payload["input_saturation"] = [params.input_saturation.lower,
                                   params.input_saturation.upper]
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def default_plant_params() -> PlantParams:
    text = (resources.files("vrftune") / "data" / DEFAULT_PARAMS_RESOURCE).read_text()
    return _params_from_dict(json.loads(text))


class EtbSurrogatePlant:
    """Stateful plant instance; one instance per simulation.

    measure() reads the position, step(u) advances one forward-Euler sample
    and returns the new position. Trajectories are deterministic functions of
    the initial state and input sequence.
    """

    def __init__(self, params: PlantParams | None = None,
                 position: float | None = None, velocity: float = 0.0):
        self.params = params if params is not None else default_plant_params()
        self._initial_position = (self.params.limp_home if position is None
                                  else float(position))
        self._initial_velocity = float(velocity)
        self.reset()

    def reset(self, position: float | None = None,
              velocity: float | None = None) -> None:
        if position is not None:
            self._initial_position = float(position)
        if velocity is not None:
            self._initial_velocity = float(velocity)
        if not 0.0 <= self._initial_position <= 1.0:
            raise ValueError("initial position must lie in [0, 1]")
        self.position = self._initial_position
        self.velocity = self._initial_velocity

    def measure(self) -> float:
        return self.position

    def step(self, u: float) -> float:
        y, pos, vel = self._run(np.array([u], dtype=np.float64))
        self.position = pos
        self.velocity = vel
        return pos

    def run(self, u: np.ndarray) -> np.ndarray:
        """Roll a whole input sequence (kernel-backed); advances the state and
        returns the pre-step position per sample."""
        y, pos, vel = self._run(np.ascontiguousarray(u, dtype=np.float64))
        self.position = pos
        self.velocity = vel
        return y

    def _run(self, u: np.ndarray):
        p = self.params
        return kernels.plant_run(
            u, p.sample_time, self.position, self.velocity, p.torque_gain,
            p.damping, p.spring_rate_open, p.spring_rate_closed, p.limp_home,
            p.coulomb_level, p.friction_smoothing,
            p.input_saturation.lower, p.input_saturation.upper)


# ── excitation ──────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class MprsConfig:
    """Multilevel pseudo-random signal: a level drawn uniformly among
    equispaced values in `amplitude`, redrawn every switching_period samples."""

    length: int
    switching_period: int
    amplitude: Bounds = Bounds(-1.8, 6.6)
    levels: int = 16
    seed: int = 0

    def __post_init__(self) -> None:
        if self.length < 1:
            raise ValueError("signal length must be positive")
        if self.switching_period < 1:
            raise ValueError("switching period must be at least one sample")
        if self.levels < 2:
            raise ValueError("at least two amplitude levels are required")


def generate_mprs(cfg: MprsConfig, sample_time: float = 0.005) -> Signal:
    rng = np.random.default_rng(cfg.seed)
    values = np.linspace(cfg.amplitude.lower, cfg.amplitude.upper, cfg.levels)
    segments = -(-cfg.length // cfg.switching_period)
    draws = values[rng.integers(0, cfg.levels, size=segments)]
    samples = np.repeat(draws, cfg.switching_period)[:cfg.length]
    return Signal(samples, sample_time)


def acquire_dataset(plant: EtbSurrogatePlant, excitation: Signal,
                    noise_std: float = 0.0, noise_seed: int = 0):
    """Open-loop record (u, y) from the plant's current state; y(k) is read
    before u(k) is applied, matching the closed-loop timing.

    noise_std > 0 adds seeded Gaussian measurement noise to the recorded
    positions (the plant state itself evolves noise-free). A fraction of a
    percent mimics a position sensor; the default records the exact state.
    """
    y = plant.run(excitation.samples)
    if noise_std > 0.0:
        rng = np.random.default_rng(noise_seed)
        y = y + noise_std * rng.standard_normal(y.size)
    return excitation, Signal(y, excitation.sample_time)


def acquire_mprs_dataset(plant: EtbSurrogatePlant, fast: MprsConfig,
                         slow: MprsConfig, noise_std: float = 0.0,
                         noise_seed: int = 0):
    """Concatenate a fast-switching and a slow-switching excitation segment
    and roll them through the plant in one pass."""
    st = plant.params.sample_time
    u_fast = generate_mprs(fast, st)
    u_slow = generate_mprs(slow, st)
    u = Signal(np.concatenate([u_fast.samples, u_slow.samples]), st)
    return acquire_dataset(plant, u, noise_std=noise_std, noise_seed=noise_seed)
