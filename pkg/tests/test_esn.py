import math
import warnings

import numpy as np
import pytest

from vrftune.esn import (EsnParams, EsnRegulator, EsnState, ReservoirConfig,
                         check_delta_iss, collect_states, esn_output_bound,
                         esn_state_map, esn_step, generate_reservoir,
                         initial_state, load_params, project_l1_ball,
                         readout_norm, run_esn, save_params, shrink_onto_ball,
                         teacher_forced_prediction, train_readout)
from vrftune.signals import ScalingPair, Signal
from vrftune.vrft import vrft_cost


def _power_iteration_radius(m, iters=2000, seed=0):
    # independent spectral-radius estimate for the generation check
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(m.shape[0],)) + 1j * rng.normal(size=m.shape[0])
    lam = 0.0
    for _ in range(iters):
        w = m @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        lam = nw
    return abs(lam)


def _small_params(n=4, seed=0, constrained=False, **kw):
    cfg = ReservoirConfig(n=n, density=0.8, seed=seed,
                          spectral_radius=kw.pop("spectral_radius", 0.7),
                          feedback_weight_range=kw.pop("feedback_weight_range", 0.2))
    w_u, w_x, w_y = generate_reservoir(cfg)
    rng = np.random.default_rng(seed + 100)
    w1 = rng.uniform(-1, 1, n)
    if constrained:
        w1 = shrink_onto_ball(project_l1_ball(w1))
        w2 = 0.0
    else:
        w2 = float(rng.uniform(-0.5, 0.5))
    return EsnParams(w_u=w_u, w_x=w_x, w_y=w_y, w_out1=w1, w_out2=w2,
                     constrained=constrained, **kw)


# ── reservoir generation ────────────────────────────────────────────────────

def test_generate_reservoir_deterministic():
    cfg = ReservoirConfig(n=40, seed=123)
    a = generate_reservoir(cfg)
    b = generate_reservoir(cfg)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)


def test_generate_reservoir_spectral_radius():
    cfg = ReservoirConfig(n=60, spectral_radius=0.9, density=0.2, seed=5)
    _, w_x, _ = generate_reservoir(cfg)
    assert _power_iteration_radius(w_x) == pytest.approx(0.9, abs=1e-9)


def test_generate_reservoir_zero_feedback():
    cfg = ReservoirConfig(n=10, feedback_weight_range=0.0, density=0.5, seed=2)
    _, _, w_y = generate_reservoir(cfg)
    np.testing.assert_array_equal(w_y, 0.0)


def test_generate_reservoir_retries_exhausted():
    # density so low the draw is empty for n=1 until the retry budget runs out
    cfg = ReservoirConfig(n=1, density=1e-12, seed=0)
    with pytest.raises(RuntimeError):
        generate_reservoir(cfg)


def test_reservoir_config_validation():
    with pytest.raises(ValueError):
        ReservoirConfig(n=0)
    with pytest.raises(ValueError):
        ReservoirConfig(spectral_radius=1.0)
    with pytest.raises(ValueError):
        ReservoirConfig(density=0.0)


# ── forward dynamics ────────────────────────────────────────────────────────

def test_esn_step_zero_weights():
    p = EsnParams(w_u=[0.0], w_x=[[0.0]], w_y=[0.0], w_out1=[0.0], w_out2=0.0)
    state, u = esn_step(p, initial_state(1), 1.7)
    assert u == 0.0
    np.testing.assert_array_equal(state.x, 0.0)


def test_esn_step_scalar_example():
    p = EsnParams(w_u=[1.0], w_x=[[0.0]], w_y=[0.0], w_out1=[0.5], w_out2=0.0)
    state, u = esn_step(p, initial_state(1), 1.0)
    assert state.x[0] == pytest.approx(math.tanh(1.0), abs=1e-15)
    assert u == pytest.approx(0.5 * math.tanh(1.0), abs=1e-15)
    assert state.u_tilde_prev == pytest.approx(u, abs=1e-15)


def test_esn_step_strict_interior_output():
    # moderate weights keep activations unsaturated, so |u_tilde| < 1 strictly
    rng = np.random.default_rng(9)
    for seed in range(5):
        p = _small_params(n=5, seed=seed, constrained=True)
        state = initial_state(5)
        for _ in range(200):
            state, u = esn_step(p, state, float(rng.uniform(-5, 5)))
            assert abs(u) < 1.0


def test_run_esn_matches_step_iteration():
    p = _small_params(n=6, seed=3, output_scaling=ScalingPair(2.0, -0.5))
    e = Signal(np.random.default_rng(0).uniform(-1, 1, 100))
    fast = run_esn(p, e)
    state = initial_state(6)
    slow = []
    for v in e.samples:
        state, u = esn_step(p, state, float(v))
        slow.append(u)
    np.testing.assert_allclose(fast.samples, slow, rtol=1e-12, atol=1e-12)


def test_collect_states_shapes_and_range():
    p = _small_params(n=8, seed=1)
    e = Signal(np.random.default_rng(1).uniform(-1, 1, 50))
    u_t = Signal(np.random.default_rng(2).uniform(-1, 1, 50))
    features, targets = collect_states(p, e, u_t, washout=0)
    assert features.shape == (50, 9)
    assert targets.shape == (50,)
    assert np.all(np.abs(features[:, :-1]) < 1.0)
    features, _ = collect_states(p, e, u_t, washout=10)
    assert features.shape == (40, 9)
    with pytest.raises(ValueError):
        collect_states(p, e, u_t, washout=50)


def test_collect_states_zero_reservoir_passes_input_through():
    p = EsnParams(w_u=np.zeros(3), w_x=np.zeros((3, 3)), w_y=np.zeros(3),
                  w_out1=np.zeros(3), w_out2=0.0)
    e = Signal(np.linspace(-1, 1, 20))
    features, _ = collect_states(p, e, e, washout=0)
    np.testing.assert_array_equal(features[:, :3], 0.0)
    np.testing.assert_array_equal(features[:, 3], e.samples)


# ── readout training ────────────────────────────────────────────────────────

def test_project_l1_ball_inside_is_identity():
    v = np.array([0.2, -0.3, 0.1])
    np.testing.assert_array_equal(project_l1_ball(v), v)


def test_project_l1_ball_scalar_saturation():
    np.testing.assert_array_equal(project_l1_ball(np.array([2.5])), [1.0])
    np.testing.assert_array_equal(project_l1_ball(np.array([-7.0])), [-1.0])


def test_project_l1_ball_matches_quadratic_kkt():
    rng = np.random.default_rng(6)
    for _ in range(100):
        v = rng.normal(size=rng.integers(1, 8)) * 3.0
        w = project_l1_ball(v)
        assert np.abs(w).sum() <= 1.0 + 1e-12
        # projection property: w is the closest point, so moving toward any
        # feasible vertex cannot decrease the distance
        for _ in range(10):
            z = rng.normal(size=v.size)
            z = z / np.abs(z).sum()
            assert np.linalg.norm(v - z) >= np.linalg.norm(v - w) - 1e-12


def test_train_readout_scalar_interior():
    rng = np.random.default_rng(7)
    s = rng.normal(size=200)
    w_true = 0.6
    targets = w_true * s
    features = np.column_stack([s, np.zeros_like(s)])
    fit = train_readout(features, targets, "constrained")
    assert fit.w_out1[0] == pytest.approx(w_true, abs=1e-8)
    assert fit.w_out2 == 0.0
    assert fit.converged


def test_train_readout_scalar_saturated_exact():
    rng = np.random.default_rng(8)
    s = rng.normal(size=200)
    targets = 2.5 * s
    features = np.column_stack([s, np.zeros_like(s)])
    fit = train_readout(features, targets, "constrained")
    assert fit.w_out1[0] == 1.0
    fit = train_readout(features, -targets, "constrained")
    assert fit.w_out1[0] == -1.0


def _grid_oracle(gram, gy, resolution=1e-3):
    # brute-force search over the l1 ball for the 2-feature problem
    w1 = np.arange(-1.0, 1.0 + resolution, resolution)
    best = None
    best_val = np.inf
    for x in w1:
        rest = 1.0 - abs(x)
        y = np.arange(-rest, rest + resolution, resolution)
        vals = (gram[0, 0] * x * x + 2 * gram[0, 1] * x * y
                + gram[1, 1] * y * y - 2 * (gy[0] * x + gy[1] * y))
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val = vals[i]
            best = (x, y[i])
    return np.array(best)


def test_train_readout_two_feature_matches_grid_oracle():
    rng = np.random.default_rng(9)
    for trial in range(5):
        g = rng.normal(size=(120, 2))
        targets = g @ rng.uniform(-2.0, 2.0, 2) + 0.05 * rng.normal(size=120)
        features = np.column_stack([g, np.zeros(120)])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fit = train_readout(features, targets, "constrained")
        oracle = _grid_oracle(g.T @ g, g.T @ targets)
        np.testing.assert_allclose(fit.w_out1, oracle, atol=2e-3)


def test_train_readout_unconstrained_solves_normal_equations():
    rng = np.random.default_rng(10)
    features = rng.normal(size=(300, 5))
    theta_true = rng.normal(size=5)
    targets = features @ theta_true
    fit = train_readout(features, targets, "unconstrained")
    np.testing.assert_allclose(
        np.concatenate([fit.w_out1, [fit.w_out2]]), theta_true, atol=1e-5)


def test_train_readout_constrained_never_violates_ball():
    rng = np.random.default_rng(11)
    for trial in range(10):
        features = rng.normal(size=(50, 4))
        targets = rng.normal(size=50) * 10.0
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fit = train_readout(features, targets, "constrained")
        assert readout_norm(fit.w_out1) <= 1.0
        assert fit.w_out2 == 0.0


def test_train_readout_warns_when_underdetermined():
    rng = np.random.default_rng(12)
    features = rng.normal(size=(3, 5))
    with pytest.warns(UserWarning):
        train_readout(features, rng.normal(size=3), "unconstrained")


def test_train_readout_rejects_nonfinite():
    with pytest.raises(ValueError):
        train_readout(np.array([[np.inf, 0.0]]), np.array([1.0]))


def test_teacher_forced_residual_matches_vrft_cost():
    p = _small_params(n=10, seed=4)
    rng = np.random.default_rng(13)
    e = Signal(rng.uniform(-1, 1, 300))
    u_t = Signal(rng.uniform(-0.8, 0.8, 300))
    features, targets = collect_states(p, e, u_t, washout=20)
    fit = train_readout(features, targets, "unconstrained")
    trained = EsnParams(w_u=p.w_u, w_x=p.w_x, w_y=p.w_y, w_out1=fit.w_out1,
                        w_out2=fit.w_out2)
    pred, tgt = teacher_forced_prediction(trained, e, u_t, washout=20)
    st = e.sample_time
    cost = vrft_cost(Signal(pred, st), Signal(tgt, st))
    assert cost == pytest.approx(fit.residual, rel=1e-9, abs=1e-9)


# ── certificates ────────────────────────────────────────────────────────────

def test_esn_output_bound_constrained_symmetric():
    p = _small_params(n=4, seed=5, constrained=True,
                      output_scaling=ScalingPair(2.0 / 16.8, 0.0))
    w1 = np.array([0.5, 0.3, 0.15, 0.05])
    p = EsnParams(w_u=p.w_u, w_x=p.w_x, w_y=p.w_y, w_out1=w1, w_out2=0.0,
                  output_scaling=ScalingPair(2.0 / 16.8, 0.0), constrained=True)
    b = esn_output_bound(p)
    assert b.upper == pytest.approx(8.4, rel=1e-12)
    assert b.lower == pytest.approx(-8.4, rel=1e-12)


def test_esn_output_bound_zero_readout():
    p = EsnParams(w_u=[0.0], w_x=[[0.0]], w_y=[0.0], w_out1=[0.0], w_out2=0.0)
    b = esn_output_bound(p)
    assert b.lower == 0.0 and b.upper == 0.0


def test_esn_output_bound_with_feedthrough():
    p = EsnParams(w_u=[1.0], w_x=[[0.0]], w_y=[0.0], w_out1=[2.0], w_out2=0.5,
                  input_scaling=ScalingPair(2.0, 0.0),
                  output_scaling=ScalingPair(2.0 / 16.8, 0.0))
    b = esn_output_bound(p)
    assert b.upper == pytest.approx(25.2, rel=1e-12)
    assert b.lower == pytest.approx(-25.2, rel=1e-12)


def test_property1_bound_random_nets():
    rng = np.random.default_rng(14)
    for trial in range(20):
        n = int(rng.integers(1, 20))
        p = _small_params(n=n, seed=trial, constrained=True,
                          output_scaling=ScalingPair(
                              float(10 ** rng.uniform(-1, 0.5)),
                              float(rng.uniform(-0.5, 0.5))))
        e = Signal(rng.uniform(-10, 10, 500))
        u = run_esn(p, e)
        b = esn_output_bound(p)
        assert np.all(u.samples >= b.lower)
        assert np.all(u.samples <= b.upper)


def test_check_delta_iss_examples():
    mk = lambda wx, wy, w1: EsnParams(w_u=[1.0], w_x=[[wx]], w_y=[wy],
                                      w_out1=[w1], w_out2=0.0)
    ok, value = check_delta_iss(mk(0.5, 0.0, 0.9))
    assert ok and value == pytest.approx(0.5)
    ok, value = check_delta_iss(mk(1.2, 0.0, 0.9))
    assert not ok and value == pytest.approx(1.2)
    ok, value = check_delta_iss(mk(0.9, 0.3, 0.5))
    assert not ok and value == pytest.approx(1.05)
    with pytest.raises(ValueError):
        check_delta_iss(mk(0.5, 0.0, 0.9), norm="fro")


def test_delta_iss_implies_contraction():
    # scale a reservoir so the certified matrix norm is below one, then check
    # paired trajectories under identical inputs approach each other
    cfg = ReservoirConfig(n=12, spectral_radius=0.5, density=0.6, seed=8)
    w_u, w_x, w_y = generate_reservoir(cfg)
    w1 = shrink_onto_ball(project_l1_ball(np.random.default_rng(7).uniform(-1, 1, 12)))
    p = EsnParams(w_u=w_u, w_x=w_x, w_y=w_y * 0.1, w_out1=w1, w_out2=0.0,
                  constrained=True)
    ok, value = check_delta_iss(p, norm="spectral")
    assert ok, f"test setup should certify contraction, got {value}"
    rng = np.random.default_rng(15)
    x1 = EsnState(rng.uniform(-0.9, 0.9, 12), 0.0)
    x2 = EsnState(rng.uniform(-0.9, 0.9, 12), 0.0)
    gap0 = np.linalg.norm(x1.x - x2.x)
    for _ in range(100):
        e = float(rng.uniform(-1, 1))
        x1, _ = esn_step(p, x1, e)
        x2, _ = esn_step(p, x2, e)
    assert np.linalg.norm(x1.x - x2.x) < gap0


def test_esn_state_map_fixed_point_consistency():
    p = _small_params(n=5, seed=6, constrained=True)
    step = esn_state_map(p, 0.3)
    x = np.zeros(5)
    for _ in range(400):
        x = step(x)
    # the reduced map's fixed point reproduces the full regulator equilibrium
    reg = EsnRegulator(p)
    for _ in range(400):
        reg.step(0.3)
    np.testing.assert_allclose(reg.state.x, x, atol=1e-8)


# ── regulator port and serialization ────────────────────────────────────────

def test_regulator_port_respects_declared_bounds():
    p = _small_params(n=6, seed=9, constrained=True,
                      output_scaling=ScalingPair(2.0 / 16.8, 0.0))
    reg = EsnRegulator(p)
    b = reg.declared_bounds()
    rng = np.random.default_rng(16)
    for _ in range(300):
        u = reg.step(float(rng.uniform(-10, 10)))
        assert b.lower <= u <= b.upper
    reg.reset()
    np.testing.assert_array_equal(reg.state.x, 0.0)


def test_params_round_trip_bit_exact(tmp_path):
    p = _small_params(n=7, seed=10, constrained=True,
                      input_scaling=ScalingPair(16.0, 0.0),
                      output_scaling=ScalingPair(2.0 / 16.8, 0.0))
    path = tmp_path / "esn.json"
    save_params(p, path)
    q = load_params(path)
    np.testing.assert_array_equal(p.w_u, q.w_u)
    np.testing.assert_array_equal(p.w_x, q.w_x)
    np.testing.assert_array_equal(p.w_y, q.w_y)
    np.testing.assert_array_equal(p.w_out1, q.w_out1)
    assert p.w_out2 == q.w_out2
    assert p.input_scaling == q.input_scaling
    assert p.output_scaling == q.output_scaling
    assert p.constrained == q.constrained


def test_constrained_params_validation():
    with pytest.raises(ValueError):
        EsnParams(w_u=[1.0], w_x=[[0.5]], w_y=[0.0], w_out1=[0.5], w_out2=0.1,
                  constrained=True)
    with pytest.raises(ValueError):
        EsnParams(w_u=[1.0], w_x=[[0.5]], w_y=[0.0], w_out1=[1.5], w_out2=0.0,
                  constrained=True)
