"""Experiment configuration and the end-to-end tuning pipeline: data
generation, virtual-dataset construction, regulator training, closed-loop
evaluation and the canned comparison scenarios."""

from __future__ import annotations

import copy
from dataclasses import dataclass, replace

import numpy as np

from .analysis import TrackingMetrics, fit_percent, tracking_metrics
from .esn import (EsnParams, EsnRegulator, ReservoirConfig, check_delta_iss,
                  collect_states, esn_output_bound, generate_reservoir,
                  run_esn, train_readout)
from .loop import (AntiWindupIntegrator, LoopTrace, simulate_closed_loop,
                   split_bounds)
from .lstm import (LstmTrainingConfig, SimplifiedLstmParams,
                   SimplifiedLstmRegulator, lstm_output_bound, run_simplified,
                   train_lstm)
from .plant import (EtbSurrogatePlant, MprsConfig, PlantParams,
                    acquire_mprs_dataset, default_plant_params,
                    load_plant_params, _params_from_dict)
from .signals import Bounds, ScalingPair, Signal, bounds_to_scaling
from .vrft import ReferenceModel, VirtualDataset, build_training_set


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


DEFAULT_CONFIG = {
    "seed": 2024,
    "plant": None,
    "reference_model": {"a": -0.79, "b": 0.21, "unit_gain": True},
    "bounds": {"total": [-12.0, 12.0], "alpha": [-3.6, 3.6]},
    "integrator": {"rho": 60.0, "enabled": True, "bounded": True},
    "input_scaling": {"gain": 1.0, "shift": 0.0},
    "regulator": {
        "kind": "esn",
        "mode": "constrained",
        "esn": {
            "n": 300,
            "spectral_radius": 0.9,
            "density": 0.05,
            "input_weight_range": 1.0,
            "feedback_weight_range": 0.1,
            "washout": 50,
            "ridge": 1e-8,
            "tol": 1e-8,
            "max_iters": 100_000,
            "input_gain": None,
            "input_shift": None,
        },
        "lstm": {
            "n_x": 25,
            "washout": 50,
            "learning_rate": 1e-3,
            "max_iters": 10_000,
            "init_scale": 0.1,
            "forget_bias": 1.0,
            "patience": 100,
            "rel_tol": 1e-9,
            "input_gain": None,
            "input_shift": None,
        },
    },
    "dataset": {
        "length": 20_000,
        "levels": 16,
        "amplitude": [-1.8, 6.6],
        "fast_period": 4,
        "slow_period": 40,
        "noise_std": 0.0,
    },
    "validation_fraction": 0.3,
    "staircase": [[0.3, 300], [0.8, 300], [0.5, 300], [0.95, 300],
                  [0.2, 300], [0.05, 300]],
}

# desk-scale sizes and scalings used by the canned scenarios when no config
# is supplied; calibrated against the packaged surrogate plant
REPRODUCE_OVERRIDES = {
    "seed": 7,
    "dataset": {"length": 8000},
    "regulator": {
        "esn": {"input_gain": 16.0},
        "lstm": {"n_x": 15, "max_iters": 3000, "learning_rate": 5e-3,
                 "input_gain": 8.0},
    },
}

SCENARIOS = {
    "S1": {"description": "baseline: constrained regulator, bounded integrator rho=60",
           "overrides": [("", {})]},
    "S2": {"description": "slower reference model (a=-0.91, b=0.09)",
           "overrides": [("", {"reference_model": {"a": -0.91, "b": 0.09}})],
           "baseline": "S1"},
    "S3": {"description": "weaker integral action (rho=10)",
           "overrides": [("", {"integrator": {"rho": 10.0}})],
           "baseline": "S1"},
    "S4": {"description": "constrained regulator, no integrator",
           "overrides": [("", {"integrator": {"enabled": False},
                               "bounds": {"alpha": [0.0, 0.0]}})]},
    "S5": {"description": "unconstrained tuning with an unbounded integrator",
           "overrides": [
               ("rho60", {"regulator": {"mode": "unconstrained"},
                          "integrator": {"rho": 60.0, "bounded": False}}),
               ("rho1", {"regulator": {"mode": "unconstrained"},
                         "integrator": {"rho": 1.0, "bounded": False}}),
           ]},
    "S6": {"description": "unconstrained tuning, no integrator",
           "overrides": [("", {"regulator": {"mode": "unconstrained"},
                               "integrator": {"enabled": False},
                               "bounds": {"alpha": [0.0, 0.0]}})]},
}


def deep_merge(base: dict, override: dict) -> dict:
    """Recursive dict merge; override values win, nested dicts merge."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment settings; see DEFAULT_CONFIG for the schema."""

    seed: int
    plant: PlantParams
    reference: ReferenceModel
    total_bounds: Bounds
    alpha_bounds: Bounds
    integrator_rho: float
    integrator_enabled: bool
    integrator_bounded: bool
    input_scaling: ScalingPair
    regulator_kind: str
    mode: str
    esn_settings: dict
    lstm_settings: dict
    dataset_length: int
    mprs_levels: int
    mprs_amplitude: Bounds
    fast_period: int
    slow_period: int
    noise_std: float
    validation_fraction: float
    staircase: tuple[tuple[float, int], ...]
    raw: dict

    @property
    def regulator_bounds(self) -> Bounds:
        """Range allotted to the RNN channel: the remainder of the split when
        a bounded integrator is in the loop, the whole range otherwise."""
        if self.integrator_enabled and self.integrator_bounded:
            return split_bounds(self.total_bounds, self.alpha_bounds).beta
        return self.total_bounds

    @property
    def output_scaling(self) -> ScalingPair:
        return bounds_to_scaling(self.regulator_bounds)


def _section(raw: dict, key: str, allowed: set[str]) -> dict:
    section = raw.get(key, {})
    if not isinstance(section, dict):
        raise ConfigError(f"config section {key!r} must be a mapping")
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)} in config section {key!r}")
    return section


def resolve_config(raw: dict | None = None) -> ExperimentConfig:
    """Merge a partial config over the defaults and validate every field."""
    raw = deep_merge(DEFAULT_CONFIG, raw or {})
    unknown = set(raw) - set(DEFAULT_CONFIG)
    if unknown:
        raise ConfigError(f"unknown top-level config keys {sorted(unknown)}")
    try:
        plant_raw = raw.get("plant")
        if plant_raw is None:
            plant = default_plant_params()
        elif isinstance(plant_raw, dict) and "file" in plant_raw:
            plant = load_plant_params(plant_raw["file"])
        elif isinstance(plant_raw, dict):
            plant = _params_from_dict(plant_raw)
        else:
            raise ConfigError("plant must be null, a mapping, or {'file': path}")

        ref = _section(raw, "reference_model", {"a", "b", "unit_gain"})
        reference = ReferenceModel(float(ref["a"]), float(ref["b"]),
                                   bool(ref.get("unit_gain", True)))

        bounds = _section(raw, "bounds", {"total", "alpha"})
        total = Bounds(*map(float, bounds["total"]))
        alpha = Bounds(*map(float, bounds["alpha"]))

        integ = _section(raw, "integrator", {"rho", "enabled", "bounded"})
        scaling = _section(raw, "input_scaling", {"gain", "shift"})
        reg = _section(raw, "regulator", {"kind", "mode", "esn", "lstm"})
        kind = reg["kind"]
        if kind not in ("esn", "lstm"):
            raise ConfigError(f"regulator kind must be 'esn' or 'lstm', got {kind!r}")
        mode = reg["mode"]
        if mode not in ("constrained", "unconstrained"):
            raise ConfigError(f"mode must be 'constrained' or 'unconstrained', got {mode!r}")
        esn_settings = dict(reg["esn"])
        lstm_settings = dict(reg["lstm"])

        ds = _section(raw, "dataset", {"length", "levels", "amplitude",
                                       "fast_period", "slow_period",
                                       "noise_std"})
        length = int(ds["length"])
        if length < 2:
            raise ConfigError("dataset length must be at least two samples")

        frac = float(raw["validation_fraction"])
        if not 0.0 < frac < 1.0:
            raise ConfigError("validation_fraction must lie in (0, 1)")

        stairs = tuple((float(level), int(samples))
                       for level, samples in raw["staircase"])
        if not stairs or any(samples < 1 for _, samples in stairs):
            raise ConfigError("staircase needs positive-length segments")

        cfg = ExperimentConfig(
            seed=int(raw["seed"]),
            plant=plant,
            reference=reference,
            total_bounds=total,
            alpha_bounds=alpha,
            integrator_rho=float(integ["rho"]),
            integrator_enabled=bool(integ["enabled"]),
            integrator_bounded=bool(integ["bounded"]),
            input_scaling=ScalingPair(float(scaling["gain"]), float(scaling["shift"])),
            regulator_kind=kind,
            mode=mode,
            esn_settings=esn_settings,
            lstm_settings=lstm_settings,
            dataset_length=length,
            mprs_levels=int(ds["levels"]),
            mprs_amplitude=Bounds(*map(float, ds["amplitude"])),
            fast_period=int(ds["fast_period"]),
            slow_period=int(ds["slow_period"]),
            noise_std=float(ds["noise_std"]),
            validation_fraction=frac,
            staircase=stairs,
            raw=raw,
        )
        cfg.regulator_bounds  # validates the split
        return cfg
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid experiment config: {exc}") from exc


def make_integrator(cfg: ExperimentConfig) -> AntiWindupIntegrator | None:
    if not cfg.integrator_enabled:
        return None
    bounds = cfg.alpha_bounds if cfg.integrator_bounded else None
    return AntiWindupIntegrator(cfg.integrator_rho, bounds)


def generate_dataset(cfg: ExperimentConfig) -> tuple[Signal, Signal]:
    """Open-loop identification record: fast-switching MPRS over the first
    half, slow-switching over the second, from the limp-home rest state."""
    plant = EtbSurrogatePlant(cfg.plant)
    n_fast = cfg.dataset_length // 2
    n_slow = cfg.dataset_length - n_fast
    fast = MprsConfig(length=n_fast, switching_period=cfg.fast_period,
                      amplitude=cfg.mprs_amplitude, levels=cfg.mprs_levels,
                      seed=cfg.seed)
    slow = MprsConfig(length=n_slow, switching_period=cfg.slow_period,
                      amplitude=cfg.mprs_amplitude, levels=cfg.mprs_levels,
                      seed=cfg.seed + 1)
    return acquire_mprs_dataset(plant, fast, slow, noise_std=cfg.noise_std,
                                noise_seed=cfg.seed + 4)


def _slice_dataset(vd: VirtualDataset, start: int, stop: int) -> VirtualDataset:
    st = vd.virtual_error.sample_time
    cut = lambda s: Signal(s.samples[start:stop], st)
    return VirtualDataset(cut(vd.virtual_error), cut(vd.residual_control),
                          cut(vd.raw_control), cut(vd.integrator_contribution))


def _fit_after_washout(u_true: Signal, u_sim: Signal, washout: int) -> float:
    st = u_true.sample_time
    return fit_percent(Signal(u_true.samples[washout:], st),
                       Signal(u_sim.samples[washout:], st))


@dataclass
class TuneResult:
    kind: str
    params: object
    dataset: VirtualDataset
    train_end: int
    report: dict


def tune_regulator(cfg: ExperimentConfig, u: Signal, y: Signal) -> TuneResult:
    """Full tuning pass: virtual dataset, contiguous train/validation split,
    regression or gradient training, fit scores and bound certificate."""
    integ = make_integrator(cfg)
    vd = build_training_set(u, y, cfg.reference, integ)
    horizon = len(vd)
    n_val = int(round(cfg.validation_fraction * horizon))
    n_train = horizon - n_val
    washout = int(cfg.esn_settings["washout"] if cfg.regulator_kind == "esn"
                  else cfg.lstm_settings["washout"])
    if n_train < washout + 10 or n_val < washout + 10:
        raise ConfigError(
            f"dataset too short to split: {n_train} train / {n_val} validation "
            f"samples against washout {washout}")
    train = _slice_dataset(vd, 0, n_train)
    val = _slice_dataset(vd, n_train, horizon)
    out_scaling = cfg.output_scaling
    settings = (cfg.esn_settings if cfg.regulator_kind == "esn"
                else cfg.lstm_settings)
    in_scaling = ScalingPair(
        float(settings.get("input_gain") or cfg.input_scaling.gain),
        cfg.input_scaling.shift if settings.get("input_shift") is None
        else float(settings["input_shift"]))

    if cfg.regulator_kind == "esn":
        s = cfg.esn_settings
        rcfg = ReservoirConfig(
            n=int(s["n"]), spectral_radius=float(s["spectral_radius"]),
            density=float(s["density"]),
            input_weight_range=float(s["input_weight_range"]),
            feedback_weight_range=float(s["feedback_weight_range"]),
            seed=cfg.seed + 2)
        w_u, w_x, w_y = generate_reservoir(rcfg)
        base = EsnParams(w_u=w_u, w_x=w_x, w_y=w_y, w_out1=np.zeros(rcfg.n),
                         w_out2=0.0, input_scaling=in_scaling,
                         output_scaling=out_scaling, constrained=False,
                         seed=rcfg.seed)
        features, targets = collect_states(base, train.virtual_error,
                                           train.residual_control, washout)
        fit = train_readout(features, targets, cfg.mode,
                            ridge=float(s["ridge"]), tol=float(s["tol"]),
                            max_iters=int(s["max_iters"]))
        params = replace(base, w_out1=fit.w_out1, w_out2=fit.w_out2,
                         constrained=(cfg.mode == "constrained"))
        ok, iss_value = check_delta_iss(params)
        bound = esn_output_bound(params)
        fit_train = _fit_after_washout(
            train.residual_control, run_esn(params, train.virtual_error), washout)
        fit_val = _fit_after_washout(
            val.residual_control, run_esn(params, val.virtual_error), washout)
        report = {
            "kind": "esn", "mode": cfg.mode, "n": rcfg.n,
            "fit_train_percent": fit_train,
            "fit_validation_percent": fit_val,
            "output_bound": [bound.lower, bound.upper],
            "delta_iss_value": iss_value,
            "delta_iss_ok": bool(ok),
            "readout_iterations": fit.iterations,
            "readout_kkt_residual": fit.kkt_residual,
            "readout_converged": bool(fit.converged),
            "regression_residual": fit.residual,
        }
        return TuneResult("esn", params, vd, n_train, report)

    s = cfg.lstm_settings
    tcfg = LstmTrainingConfig(
        n_x=int(s["n_x"]), washout=washout,
        learning_rate=float(s["learning_rate"]),
        max_iters=int(s["max_iters"]), seed=cfg.seed + 3,
        init_scale=float(s["init_scale"]), forget_bias=float(s["forget_bias"]),
        patience=int(s["patience"]), rel_tol=float(s["rel_tol"]),
        input_scaling=in_scaling, output_scaling=out_scaling)
    params, trace = train_lstm(train, tcfg)
    bound = lstm_output_bound(params)
    fit_train = _fit_after_washout(
        train.residual_control, run_simplified(params, train.virtual_error), washout)
    fit_val = _fit_after_washout(
        val.residual_control, run_simplified(params, val.virtual_error), washout)
    report = {
        "kind": "lstm", "mode": cfg.mode, "n_x": tcfg.n_x,
        "fit_train_percent": fit_train,
        "fit_validation_percent": fit_val,
        "output_bound": [bound.lower, bound.upper],
        "training_iterations": int(trace.size),
        "final_loss": float(trace[-1]),
        "best_loss": float(np.min(trace)),
    }
    return TuneResult("lstm", params, vd, n_train, report)


def make_regulator(params):
    if isinstance(params, EsnParams):
        return EsnRegulator(params)
    if isinstance(params, SimplifiedLstmParams):
        return SimplifiedLstmRegulator(params)
    raise TypeError(f"no regulator adapter for {type(params).__name__}")


def staircase_reference(cfg: ExperimentConfig) -> Signal:
    parts = [np.full(samples, level) for level, samples in cfg.staircase]
    return Signal(np.concatenate(parts), cfg.plant.sample_time)


def simulate_tracking(cfg: ExperimentConfig, params) -> tuple[LoopTrace, TrackingMetrics]:
    """Closed-loop staircase run from the limp-home rest state."""
    plant = EtbSurrogatePlant(cfg.plant)
    regulator = make_regulator(params)
    integrator = make_integrator(cfg)
    trace = simulate_closed_loop(plant, regulator, integrator,
                                 staircase_reference(cfg))
    return trace, tracking_metrics(trace)


def metrics_to_dict(metrics: TrackingMetrics) -> dict:
    return {
        "rms_error": metrics.rms_error,
        "segments": [
            {
                "start": seg.start,
                "length": seg.length,
                "reference": seg.reference,
                "step_size": seg.step_size,
                "steady_state_error": seg.steady_state_error,
                "overshoot": seg.overshoot,
                "settling_samples": seg.settling_samples,
                "tolerance_settle_samples": seg.tolerance_settle_samples,
            }
            for seg in metrics.segments
        ],
    }


@dataclass
class RegulatorRun:
    kind: str
    variant: str
    config: ExperimentConfig
    tune: TuneResult
    trace: LoopTrace
    metrics: TrackingMetrics

    @property
    def label(self) -> str:
        return f"{self.kind}_{self.variant}" if self.variant else self.kind


@dataclass
class ScenarioResult:
    scenario: str
    description: str
    runs: list[RegulatorRun]

    def run_for(self, kind: str, variant: str = "") -> RegulatorRun:
        for run in self.runs:
            if run.kind == kind and run.variant == variant:
                return run
        raise KeyError(f"no run {kind!r}/{variant!r} in scenario {self.scenario}")


def run_scenario(scenario: str, base_config: dict | None = None,
                 kinds=("esn", "lstm")) -> ScenarioResult:
    """Tune and evaluate one canned scenario for each regulator kind."""
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; choose one of "
                          f"{sorted(SCENARIOS)}")
    spec = SCENARIOS[scenario]
    base = deep_merge(REPRODUCE_OVERRIDES, base_config or {})
    runs = []
    for variant, override in spec["overrides"]:
        for kind in kinds:
            merged = deep_merge(base, override)
            merged = deep_merge(merged, {"regulator": {"kind": kind}})
            cfg = resolve_config(merged)
            u, y = generate_dataset(cfg)
            tune = tune_regulator(cfg, u, y)
            trace, metrics = simulate_tracking(cfg, tune.params)
            runs.append(RegulatorRun(kind, variant, cfg, tune, trace, metrics))
    return ScenarioResult(scenario, spec["description"], runs)


def _slower_per_step(baseline: TrackingMetrics, other: TrackingMetrics,
                     attr: str) -> bool:
    """True when `other` is strictly slower than `baseline` on every matched
    step where the baseline settles (a step the other never settles counts
    as slower)."""
    pairs = list(zip(baseline.segments, other.segments))
    if not pairs:
        return False
    for b, o in pairs:
        vb = getattr(b, attr)
        vo = getattr(o, attr)
        if vb is None:
            continue
        if vo is not None and vo <= vb:
            return False
    return True


def compare_to_baseline(scenario: ScenarioResult,
                        baseline: ScenarioResult) -> dict:
    """Boolean per-kind assertions used by the S2/S3 ablation reports."""
    out = {}
    for run in scenario.runs:
        try:
            base_run = baseline.run_for(run.kind, run.variant)
        except KeyError:
            base_run = baseline.run_for(run.kind)
        entry = {}
        if scenario.scenario == "S2":
            entry["settling_strictly_slower_than_baseline"] = _slower_per_step(
                base_run.metrics, run.metrics, "settling_samples")
        if scenario.scenario == "S3":
            entry["final_transient_slower_than_baseline"] = _slower_per_step(
                base_run.metrics, run.metrics, "tolerance_settle_samples")
        out[run.label] = entry
    return out
