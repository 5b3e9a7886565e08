"""Command-line benchmark harness.

Subcommands:

  run              Monte Carlo experiment, CSV output
  crlb             bound-only computation over an SNR grid, CSV output
  validate-config  parse and validate a configuration file

Exit codes: 0 success, 1 configuration/validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_config
from .experiments import (
    BASELINE_METHODS,
    EXPERIMENT_KINDS,
    ExperimentSpec,
    run_experiment,
)

__all__ = ["main", "build_parser"]


def _grid(text: str):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="risten",
                                     description="Active-RIS tensor channel-estimation benchmarks")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="experiment configuration file")
        p.add_argument("--seed", type=int, default=1, help="master seed")
        p.add_argument("--snr-grid", type=_grid, default=(10.0, 15.0, 20.0, 25.0, 30.0),
                       help="comma list of SNR points in dB")
        p.add_argument("--out", default=None, help="CSV output path")

    run_p = sub.add_parser("run", help="run a Monte Carlo experiment")
    common(run_p)
    run_p.add_argument("--experiment", choices=EXPERIMENT_KINDS, default="snr-sweep")
    run_p.add_argument("--trials", type=int, default=200)
    run_p.add_argument("--k-grid", type=_grid, default=(16.0, 24.0, 32.0),
                       help="subcarrier grid for k-sweep")
    run_p.add_argument("--stages", default="all",
                       help="I|II|III|all or comma list, e.g. I,II")
    run_p.add_argument("--baselines", default="none",
                       help=f"comma list of {', '.join(BASELINE_METHODS)}, or none")
    run_p.add_argument("--per-trial", action="store_true",
                       help="emit per-trial rows in addition to aggregates")
    run_p.add_argument("--with-runtime", action="store_true",
                       help="emit wall-clock rows (breaks byte reproducibility)")

    crlb_p = sub.add_parser("crlb", help="compute bound rows only")
    common(crlb_p)

    val_p = sub.add_parser("validate-config", help="check a configuration file")
    val_p.add_argument("--config", required=True)
    return parser


def _parse_stages(text: str):
    text = text.strip()
    if text.lower() == "all":
        return ("I", "II", "III")
    stages = tuple(s.strip().upper() for s in text.split(",") if s.strip())
    for s in stages:
        if s not in ("I", "II", "III"):
            raise ConfigError(f"unknown stage {s!r}")
    return stages


def _parse_baselines(text: str):
    text = text.strip().lower()
    if text in ("", "none"):
        return ()
    names = tuple(b.strip() for b in text.split(",") if b.strip())
    for b in names:
        if b not in BASELINE_METHODS:
            raise ConfigError(f"unknown baseline {b!r}")
    return names


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        bundle = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    if args.command == "validate-config":
        print(f"ok: {args.config} is a valid configuration "
              f"(R = {bundle.R}, K = {bundle.system.K}, G = {bundle.system.G})")
        return 0

    try:
        if args.command == "crlb":
            spec = ExperimentSpec(kind="crlb-only", sweep_grid=args.snr_grid,
                                  trials=1, seed=args.seed, stages=(),
                                  baselines=(), out_path=args.out)
        else:
            grid = args.k_grid if args.experiment == "k-sweep" else args.snr_grid
            spec = ExperimentSpec(
                kind=args.experiment, sweep_grid=grid, trials=args.trials,
                seed=args.seed, stages=_parse_stages(args.stages),
                baselines=_parse_baselines(args.baselines), out_path=args.out,
                per_trial=args.per_trial, with_runtime=args.with_runtime,
            )
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    try:
        rows, summary = run_experiment(spec, bundle)
    except Exception as exc:  # noqa: BLE001 - report and signal failure
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    for point in summary["points"]:
        bits = [f"sweep={point['sweep']}"]
        if "mode" in point:
            bits.append(f"mode={point['mode']}")
            bits.append(f"amp_coef={point['amp_coef']:.4g}")
            bits.append(f"power_ratio={point['power_ratio']:.4g}")
        for name, (ok, total) in point["success"].items():
            if total:
                bits.append(f"{name}={ok}/{total}")
        for method, val in point["nmse"].items():
            bits.append(f"nmse[{method}]={val:.3e}")
        print("  ".join(bits))
    if spec.out_path:
        print(f"wrote {len(rows)} rows to {spec.out_path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
