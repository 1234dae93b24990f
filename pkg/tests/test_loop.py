import numpy as np
import pytest

from vrftune.esn import EsnParams, EsnRegulator
from vrftune.loop import (AntiWindupIntegrator, BoundSplit, LoopTrace,
                          SimulationAborted, simulate_closed_loop,
                          split_bounds)
from vrftune.signals import Bounds, ScalingPair, Signal


class FirstOrderPlant:
    """y(k+1) = alpha*y(k) + beta*u(k); the simplest stable plant port."""

    def __init__(self, alpha=0.6, beta=0.5, y0=0.0):
        self.alpha = alpha
        self.beta = beta
        self.y0 = y0
        self.y = y0

    def reset(self):
        self.y = self.y0

    def measure(self):
        return self.y

    def step(self, u):
        self.y = self.alpha * self.y + self.beta * u
        return self.y


class ExplodingPlant(FirstOrderPlant):
    def __init__(self, blow_at):
        super().__init__()
        self.blow_at = blow_at
        self.count = 0

    def measure(self):
        self.count += 1
        return np.nan if self.count > self.blow_at else self.y


# ── integrator law ──────────────────────────────────────────────────────────

def test_integrator_interior_step():
    integ = AntiWindupIntegrator(60.0, Bounds(-3.6, 3.6))
    assert integ.step(0.01) == pytest.approx(0.6, abs=1e-15)
    assert integ.state == pytest.approx(0.6, abs=1e-15)


def test_integrator_clamps_high_and_low():
    integ = AntiWindupIntegrator(60.0, Bounds(-3.6, 3.6))
    assert integ.step(0.1) == 3.6
    integ.reset()
    assert integ.step(-0.1) == -3.6


def test_integrator_immediate_recovery_from_clamp():
    integ = AntiWindupIntegrator(60.0, Bounds(-3.6, 3.6), state=3.6)
    # stored state is the saturated value, so one reversal swings freely
    assert integ.step(-0.2) == -3.6


def test_integrator_unbounded():
    integ = AntiWindupIntegrator(2.0, None)
    for _ in range(100):
        integ.step(1.0)
    assert integ.state == pytest.approx(200.0)


def test_integrator_state_stays_inside_bounds():
    rng = np.random.default_rng(0)
    integ = AntiWindupIntegrator(60.0, Bounds(-3.6, 3.6))
    for _ in range(1000):
        integ.step(float(rng.uniform(-1, 1)))
        assert -3.6 <= integ.state <= 3.6


def test_integrator_replay_matches_stepping():
    rng = np.random.default_rng(1)
    e = rng.uniform(-0.2, 0.2, 500)
    integ = AntiWindupIntegrator(60.0, Bounds(-3.6, 3.6))
    replay = integ.replay(e, state0=0.5)
    assert integ.state == 0.0  # replay leaves the live state alone
    integ.reset(0.5)
    stepped = np.array([integ.step(v) for v in e])
    np.testing.assert_array_equal(replay, stepped)


def test_integrator_rejects_bad_gain():
    with pytest.raises(ValueError):
        AntiWindupIntegrator(-1.0, None)


# ── bound splitting ─────────────────────────────────────────────────────────

def test_split_bounds_reference_configuration():
    split = split_bounds(Bounds(-12.0, 12.0), Bounds(-3.6, 3.6))
    assert split.beta.lower == pytest.approx(-8.4, rel=1e-15)
    assert split.beta.upper == pytest.approx(8.4, rel=1e-15)
    assert split.alpha.lower + split.beta.lower == split.total.lower
    assert split.alpha.upper + split.beta.upper == split.total.upper


def test_split_bounds_degenerate_cases():
    total = Bounds(-12.0, 12.0)
    split = split_bounds(total, total)
    assert split.beta.lower == 0.0 and split.beta.upper == 0.0
    split = split_bounds(total, Bounds(0.0, 0.0))
    assert split.beta.lower == total.lower
    assert split.beta.upper == total.upper


def test_split_bounds_rejects_alpha_exceeding_total():
    with pytest.raises(ValueError):
        split_bounds(Bounds(-1.0, 1.0), Bounds(-2.0, 1.0))


def test_bound_split_validates_exact_sum():
    with pytest.raises(ValueError):
        BoundSplit(Bounds(-12.0, 12.0), Bounds(-3.6, 3.6), Bounds(-8.0, 8.4))


# ── closed loop ─────────────────────────────────────────────────────────────

def _static_regulator(gain=0.0):
    class Static:
        def reset(self):
            pass

        def step(self, e):
            return gain * e

        def declared_bounds(self):
            return Bounds(-100.0, 100.0)

    return Static()


def test_closed_loop_equilibrium_hold():
    plant = FirstOrderPlant(alpha=0.5, beta=1.0, y0=0.0)
    r = Signal(np.zeros(50))
    trace = simulate_closed_loop(plant, _static_regulator(0.0),
                                 AntiWindupIntegrator(1.0, Bounds(-1, 1)), r)
    np.testing.assert_array_equal(trace.e.samples, 0.0)
    np.testing.assert_array_equal(trace.u.samples, 0.0)
    np.testing.assert_array_equal(trace.y.samples, 0.0)


def test_closed_loop_timing_is_causal():
    # constant reference 1, pure unit-gain proportional regulator
    plant = FirstOrderPlant(alpha=0.0, beta=1.0, y0=0.0)
    r = Signal(np.ones(4))
    trace = simulate_closed_loop(plant, _static_regulator(1.0), None, r)
    # e(0) = 1 before any actuation; y(1) responds to u(0) only
    np.testing.assert_allclose(trace.e.samples, [1.0, 0.0, 1.0, 0.0])
    np.testing.assert_allclose(trace.y.samples, [0.0, 1.0, 0.0, 1.0])


def test_closed_loop_channel_sum():
    plant = FirstOrderPlant()
    rng = np.random.default_rng(2)
    r = Signal(rng.uniform(-1, 1, 100))
    integ = AntiWindupIntegrator(2.0, Bounds(-0.5, 0.5))
    trace = simulate_closed_loop(plant, _static_regulator(0.7), integ, r)
    np.testing.assert_array_equal(
        trace.u.samples, trace.u_alpha.samples + trace.u_beta.samples)
    assert np.all(np.abs(trace.u_alpha.samples) <= 0.5)


def test_closed_loop_without_regulator_or_integrator():
    plant = FirstOrderPlant()
    r = Signal(np.ones(10))
    trace = simulate_closed_loop(plant, None, None, r)
    np.testing.assert_array_equal(trace.u.samples, 0.0)


def test_closed_loop_integrator_removes_offset():
    # plant with non-unit dc gain under pure integral action settles at e = 0
    plant = FirstOrderPlant(alpha=0.5, beta=0.25, y0=0.0)
    r = Signal(np.full(400, 0.8))
    integ = AntiWindupIntegrator(0.2, Bounds(-10.0, 10.0))
    trace = simulate_closed_loop(plant, None, integ, r)
    assert abs(trace.e.samples[-1]) < 1e-6


def test_closed_loop_aborts_on_nonfinite_plant():
    plant = ExplodingPlant(blow_at=5)
    r = Signal(np.ones(10))
    with pytest.raises(SimulationAborted) as err:
        simulate_closed_loop(plant, _static_regulator(1.0), None, r)
    assert err.value.partial_trace is not None
    assert len(err.value.partial_trace) == 5


def test_constrained_regulator_bounds_in_loop():
    # saturated integrator plus constrained network: channel bounds hold
    # sample-wise with zero tolerance
    rng = np.random.default_rng(3)
    n = 8
    w1 = rng.uniform(-1, 1, n)
    w1 /= np.abs(w1).sum() * (1.0 + 1e-12)
    params = EsnParams(
        w_u=rng.uniform(-1, 1, n), w_x=rng.uniform(-0.2, 0.2, (n, n)),
        w_y=rng.uniform(-0.1, 0.1, n), w_out1=w1, w_out2=0.0,
        output_scaling=ScalingPair(2.0 / 16.8, 0.0), constrained=True)
    regulator = EsnRegulator(params)
    plant = FirstOrderPlant(alpha=0.9, beta=0.05)
    integ = AntiWindupIntegrator(60.0, Bounds(-3.6, 3.6))
    r = Signal(rng.uniform(0.0, 1.0, 2000))
    trace = simulate_closed_loop(plant, regulator, integ, r)
    assert np.all(trace.u_alpha.samples >= -3.6)
    assert np.all(trace.u_alpha.samples <= 3.6)
    assert np.all(trace.u_beta.samples >= -8.4)
    assert np.all(trace.u_beta.samples <= 8.4)
    assert np.all(trace.u.samples >= -12.0)
    assert np.all(trace.u.samples <= 12.0)


def test_trace_csv_round_trip(tmp_path):
    plant = FirstOrderPlant()
    r = Signal(np.linspace(0, 1, 20))
    trace = simulate_closed_loop(plant, _static_regulator(0.5), None, r)
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    back = LoopTrace.from_csv(path)
    np.testing.assert_array_equal(back.y.samples, trace.y.samples)
    np.testing.assert_array_equal(back.u_beta.samples, trace.u_beta.samples)


def test_closed_loop_abort_on_first_sample_has_no_trace():
    plant = ExplodingPlant(blow_at=0)
    with pytest.raises(SimulationAborted) as err:
        simulate_closed_loop(plant, _static_regulator(1.0), None,
                             Signal(np.ones(5)))
    assert err.value.partial_trace is None
