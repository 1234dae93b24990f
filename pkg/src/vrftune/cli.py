"""Command-line entry point: data generation, tuning, closed-loop simulation,
regulator analysis and the canned comparison scenarios."""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .analysis import (EquilibriumNotFound, equilibrium_stability,
                       static_characteristic)
from .esn import EsnParams, esn_state_map
from .esn import load_params as load_esn_params
from .esn import save_params as save_esn_params
from .experiments import (ConfigError, SCENARIOS, ExperimentConfig,
                          RegulatorRun, ScenarioResult, compare_to_baseline,
                          deep_merge, generate_dataset, make_regulator,
                          metrics_to_dict, resolve_config, run_scenario,
                          simulate_tracking, tune_regulator)
from .loop import SimulationAborted
from .lstm import TrainingDiverged, simplified_state_map
from .lstm import load_params as load_lstm_params
from .lstm import save_params as save_lstm_params
from .signals import write_csv
from .vrft import read_dataset_csv, write_dataset_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _load_config(path: str | None, seed: int | None) -> ExperimentConfig:
    raw = {}
    if path is not None:
        with open(path) as fh:
            raw = json.load(fh)
    if seed is not None:
        raw = deep_merge(raw, {"seed": seed})
    return resolve_config(raw)


def _write_manifest(out: Path, command: str, cfg: ExperimentConfig,
                    extra: dict | None = None) -> None:
    blob = json.dumps(cfg.raw, sort_keys=True).encode()
    manifest = {
        "command": command,
        "config": cfg.raw,
        "config_sha256": hashlib.sha256(blob).hexdigest(),
        "package_version": __version__,
        "kernel_backend": kernels.BACKEND,
    }
    if extra:
        manifest.update(extra)
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")


def _save_params(params, path) -> None:
    if isinstance(params, EsnParams):
        save_esn_params(params, path)
    else:
        save_lstm_params(params, path)


def load_any_params(path):
    """Read a parameter file of either regulator flavour."""
    with open(path) as fh:
        kind = json.load(fh).get("type")
    if kind == "esn":
        return load_esn_params(path)
    if kind in ("lstm", "lstm_simplified"):
        return load_lstm_params(path)
    raise ConfigError(f"{path} holds no known regulator parameters")


def _emit_plot_data(out: Path, trace) -> None:
    series = {"r": trace.r, "y": trace.y, "e": trace.e, "u": trace.u,
              "u_alpha": trace.u_alpha, "u_beta": trace.u_beta}
    with open(out / "trace_long.csv", "w", newline="") as fh:
        fh.write("time,series,value\n")
        for name, sig in series.items():
            for t, v in zip(sig.times, sig.samples):
                fh.write(f"{t:.17g},{name},{v:.17g}\n")


def cmd_generate_data(args) -> int:
    cfg = _load_config(args.config, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    u, y = generate_dataset(cfg)
    write_dataset_csv(out / "dataset.csv", u, y)
    _write_manifest(out, "generate-data", cfg,
                    {"samples": len(u), "output": "dataset.csv"})
    print(f"wrote {out / 'dataset.csv'} ({len(u)} samples)")
    return EXIT_OK


def cmd_tune(args) -> int:
    cfg = _load_config(args.config, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.dataset is not None:
        u, y = read_dataset_csv(args.dataset)
    else:
        u, y = generate_dataset(cfg)
    result = tune_regulator(cfg, u, y)
    params_file = out / f"params_{result.kind}.json"
    _save_params(result.params, params_file)
    result.dataset.to_csv(out / "virtual_dataset.csv")
    with open(out / "report.json", "w") as fh:
        json.dump(result.report, fh, indent=1)
        fh.write("\n")
    _write_manifest(out, "tune", cfg, {"params_file": params_file.name})
    print(f"tuned {result.kind}: validation fit "
          f"{result.report['fit_validation_percent']:.1f}%, params in {params_file}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params = load_any_params(args.params)
    trace, metrics = simulate_tracking(cfg, params)
    trace.to_csv(out / "trace.csv")
    with open(out / "metrics.json", "w") as fh:
        json.dump(metrics_to_dict(metrics), fh, indent=1)
        fh.write("\n")
    if args.emit_plot_data:
        _emit_plot_data(out, trace)
    _write_manifest(out, "simulate", cfg, {"params": str(args.params)})
    print(f"simulated {len(trace)} samples; rms error {metrics.rms_error:.4g}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    cfg = _load_config(args.config, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params = load_any_params(args.params)
    regulator = make_regulator(params)
    grid = np.linspace(-1.0, 1.0, args.grid)
    curve = static_characteristic(regulator, grid,
                                  settle_steps=args.settle_steps)
    radii = np.full(grid.size, np.nan)
    verified = np.zeros(grid.size)
    for idx, e in enumerate(grid):
        regulator.reset()
        for _ in range(args.settle_steps):
            regulator.step(float(e))
        if isinstance(params, EsnParams):
            state = regulator.state.x
            state_map = esn_state_map(params, float(e))
        else:
            state = regulator.x
            state_map = simplified_state_map(params, float(e))
        try:
            stable, radius = equilibrium_stability(state_map, state)
        except EquilibriumNotFound:
            continue
        radii[idx] = radius
        verified[idx] = 1.0 if stable else 0.0
    write_csv(out / "static_characteristic.csv",
              ("error", "steady_output", "converged", "jacobian_radius",
               "stable"),
              (grid, curve.steady_output, curve.stable_flags.astype(float),
               radii, verified))
    bounds = regulator.declared_bounds()
    summary = {
        "output_bound": [bounds.lower, bounds.upper],
        "grid_points": int(grid.size),
        "all_converged": bool(curve.stable_flags.all()),
        "all_verified_stable": bool(np.all(verified == 1.0)),
    }
    with open(out / "analysis.json", "w") as fh:
        json.dump(summary, fh, indent=1)
        fh.write("\n")
    _write_manifest(out, "analyze", cfg, {"params": str(args.params)})
    print(f"analyzed {grid.size} grid points; bound "
          f"[{bounds.lower:.3f}, {bounds.upper:.3f}]")
    return EXIT_OK


def _write_run(out: Path, run: RegulatorRun, emit_plot_data: bool) -> dict:
    run_dir = out / run.label
    run_dir.mkdir(parents=True, exist_ok=True)
    params_file = run_dir / f"params_{run.kind}.json"
    _save_params(run.tune.params, params_file)
    run.trace.to_csv(run_dir / "trace.csv")
    run.tune.dataset.to_csv(run_dir / "virtual_dataset.csv")
    if emit_plot_data:
        _emit_plot_data(run_dir, run.trace)
    entry = {
        "label": run.label,
        "tuning": run.tune.report,
        "tracking": metrics_to_dict(run.metrics),
    }
    with open(run_dir / "report.json", "w") as fh:
        json.dump(entry, fh, indent=1)
        fh.write("\n")
    return entry


def _scenario_summary(result: ScenarioResult, comparisons: dict | None) -> str:
    lines = [f"scenario {result.scenario}: {result.description}"]
    for run in result.runs:
        rep = run.tune.report
        worst = max((s.steady_state_error for s in run.metrics.segments),
                    default=float("nan"))
        lines.append(
            f"  {run.label:12s} fit_val={rep['fit_validation_percent']:6.1f}%  "
            f"bound=[{rep['output_bound'][0]:.2f}, {rep['output_bound'][1]:.2f}]  "
            f"worst_sse={worst:.3g}")
    if comparisons:
        for label, entry in comparisons.items():
            for key, value in entry.items():
                lines.append(f"  {label:12s} {key} = {value}")
    return "\n".join(lines) + "\n"


def cmd_reproduce(args) -> int:
    base = {}
    if args.config is not None:
        with open(args.config) as fh:
            base = json.load(fh)
    if args.seed is not None:
        base = deep_merge(base, {"seed": args.seed})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = run_scenario(args.scenario, base)
    comparisons = None
    if SCENARIOS[args.scenario].get("baseline"):
        baseline = run_scenario(SCENARIOS[args.scenario]["baseline"], base)
        comparisons = compare_to_baseline(result, baseline)
        for run in baseline.runs:
            _write_run(out / "baseline", run, args.emit_plot_data)
    entries = [_write_run(out, run, args.emit_plot_data) for run in result.runs]
    report = {
        "scenario": result.scenario,
        "description": result.description,
        "runs": entries,
        "comparisons": comparisons,
    }
    with open(out / "report.json", "w") as fh:
        json.dump(report, fh, indent=1)
        fh.write("\n")
    summary = _scenario_summary(result, comparisons)
    (out / "report.txt").write_text(summary)
    cfg = resolve_config(base)
    _write_manifest(out, f"reproduce {args.scenario}", cfg)
    print(summary, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vrftune",
        description="Tune input-constrained recurrent-network regulators "
                    "from open-loop data and evaluate them on the surrogate "
                    "throttle bench.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config JSON (partial; "
                                         "merged over the defaults)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", default="out", help="output directory")

    p = sub.add_parser("generate-data", parents=[common],
                       help="collect an open-loop identification record")
    p.set_defaults(func=cmd_generate_data)

    p = sub.add_parser("tune", parents=[common],
                       help="build the virtual dataset and train a regulator")
    p.add_argument("--dataset", help="existing dataset CSV (default: generate)")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("simulate", parents=[common],
                       help="closed-loop staircase run with trained parameters")
    p.add_argument("--params", required=True, help="regulator parameter file")
    p.add_argument("--emit-plot-data", action="store_true",
                   help="write a long-format trace CSV for plotting tools")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", parents=[common],
                       help="static characteristic and equilibrium stability")
    p.add_argument("--params", required=True, help="regulator parameter file")
    p.add_argument("--grid", type=int, default=41,
                   help="points on the error grid over [-1, 1]")
    p.add_argument("--settle-steps", type=int, default=1000,
                   help="free-run length per grid point")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("reproduce", parents=[common],
                       help="run a canned comparison scenario end to end")
    p.add_argument("--scenario", required=True, choices=sorted(SCENARIOS),
                   help="scenario id")
    p.add_argument("--emit-plot-data", action="store_true")
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingDiverged, SimulationAborted, FloatingPointError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
