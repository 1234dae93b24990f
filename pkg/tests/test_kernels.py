import subprocess
import sys

import numpy as np
import pytest

from vrftune import kernels
from vrftune.kernels import reference

accelerated = kernels.accelerated
needs_numba = pytest.mark.skipif(accelerated is None,
                                 reason="numba backend unavailable")


def _esn_args(n=12, steps=200, seed=0):
    rng = np.random.default_rng(seed)
    w_x = rng.uniform(-0.2, 0.2, (n, n))
    return dict(
        w_u=rng.uniform(-1, 1, n), w_x=np.ascontiguousarray(w_x),
        w_y=rng.uniform(-0.1, 0.1, n),
        w_out1=rng.uniform(-0.3, 0.3, n), w_out2=0.1,
        e_tilde=rng.uniform(-2, 2, steps), x0=np.zeros(n), u_prev0=0.0)


def _lstm_args(n=5, steps=150, seed=1):
    rng = np.random.default_rng(seed)
    v = lambda: rng.uniform(-0.5, 0.5, n)
    m = lambda: rng.uniform(-0.5, 0.5, (n, n))
    return dict(w_f=v(), u_f=m(), b_f=v(), w_i=v(), u_i=m(), b_i=v(),
                w_o=v(), u_o=m(), b_o=v(), w_c=v(), u_c=m(), b_c=v(),
                w_out=v(), b_out=0.2, e_tilde=rng.uniform(-2, 2, steps),
                x0=np.zeros(n), xi0=np.zeros(n))


def _plant_args(steps=400, seed=2):
    rng = np.random.default_rng(seed)
    return dict(u=rng.uniform(-12, 12, steps), dt=0.005, pos0=0.15, vel0=0.0,
                torque_gain=300.0, damping=210.0, spring_open=300.0,
                spring_closed=900.0, limp_home=0.15, coulomb=0.4,
                fric_eps=1e-3, sat_lo=-12.0, sat_hi=12.0)


@needs_numba
def test_esn_run_backends_agree():
    args = _esn_args()
    a = reference.esn_run(**args)
    b = accelerated.esn_run(**args)
    np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)


@needs_numba
def test_esn_teacher_features_backends_agree():
    args = _esn_args()
    teacher = np.random.default_rng(3).uniform(-1, 1, args["e_tilde"].size)
    common = dict(w_u=args["w_u"], w_x=args["w_x"], w_y=args["w_y"],
                  e_tilde=args["e_tilde"], u_teacher_tilde=teacher,
                  x0=args["x0"], u_prev0=0.0)
    a = reference.esn_teacher_features(**common)
    b = accelerated.esn_teacher_features(**common)
    np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)


@needs_numba
def test_lstm_run_backends_agree():
    args = _lstm_args()
    a = reference.lstm_run(**args)
    b = accelerated.lstm_run(**args)
    np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)


@needs_numba
def test_lstm_simplified_run_backends_agree():
    args = _lstm_args()
    common = dict(w_f=args["w_f"], u_f=args["u_f"], b_f=args["b_f"],
                  w_c=args["w_c"], u_c=args["u_c"], b_c=args["b_c"],
                  e_tilde=args["e_tilde"], x0=args["x0"])
    a = reference.lstm_simplified_run(**common)
    b = accelerated.lstm_simplified_run(**common)
    np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)


@needs_numba
def test_lstm_simplified_grads_backends_agree():
    args = _lstm_args()
    rng = np.random.default_rng(4)
    common = dict(w_f=args["w_f"], u_f=args["u_f"], b_f=args["b_f"],
                  w_c=args["w_c"], u_c=args["u_c"], b_c=args["b_c"],
                  e_tilde=args["e_tilde"],
                  target=rng.uniform(-0.8, 0.8, args["e_tilde"].size),
                  washout=10)
    a = reference.lstm_simplified_loss_grads(**common)
    b = accelerated.lstm_simplified_loss_grads(**common)
    assert a[0] == pytest.approx(b[0], rel=1e-10)
    for ga, gb in zip(a[1:], b[1:]):
        np.testing.assert_allclose(ga, gb, rtol=1e-9, atol=1e-12)


@needs_numba
def test_plant_run_backends_agree():
    args = _plant_args()
    ya, pa, va = reference.plant_run(**args)
    yb, pb, vb = accelerated.plant_run(**args)
    np.testing.assert_allclose(ya, yb, rtol=1e-10, atol=1e-12)
    assert pa == pytest.approx(pb, rel=1e-10)
    assert va == pytest.approx(vb, rel=1e-8, abs=1e-10)


@needs_numba
def test_integrator_replay_backends_agree():
    rng = np.random.default_rng(5)
    e = rng.uniform(-0.3, 0.3, 1000)
    a = reference.integrator_replay(e, 60.0, -3.6, 3.6, 0.0)
    b = accelerated.integrator_replay(e, 60.0, -3.6, 3.6, 0.0)
    np.testing.assert_array_equal(a, b)


def test_env_flag_selects_numpy_backend():
    code = ("import vrftune.kernels as k; "
            "print(k.BACKEND); print(k.accelerated is None)")
    out = subprocess.run(
        [sys.executable, "-c", code], capture_output=True, text=True,
        env={"PATH": "/usr/bin:/bin", "VRFTUNE_BACKEND": "numpy",
             "PYTHONPATH": str(__import__("pathlib").Path(__file__).resolve().parents[1] / "src")},
        check=True)
    assert out.stdout.split() == ["numpy", "True"]


def test_env_flag_rejects_unknown_backend():
    code = "import vrftune.kernels"
    out = subprocess.run(
        [sys.executable, "-c", code], capture_output=True, text=True,
        env={"PATH": "/usr/bin:/bin", "VRFTUNE_BACKEND": "cuda",
             "PYTHONPATH": str(__import__("pathlib").Path(__file__).resolve().parents[1] / "src")})
    assert out.returncode != 0
    assert "VRFTUNE_BACKEND" in out.stderr


def test_active_backend_exports_all_kernels():
    for name in ("esn_teacher_features", "esn_run", "lstm_run",
                 "lstm_simplified_run", "lstm_simplified_loss_grads",
                 "plant_run", "integrator_replay"):
        assert callable(getattr(kernels, name))
