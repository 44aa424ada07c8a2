"""Command-line entry point: ``rotsync <experiment> [options]``.

Exit status: 0 on success, 2 on a configuration error, 3 when at least one
solver cell did not converge (its rows are still written).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .admm import SolverOptions
from .experiments import (
    EXPERIMENTS,
    ExperimentConfig,
    default_grid,
    heatmap,
    report_rows,
    run_experiment,
    summarize,
    write_records,
    write_rows,
)

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED = 0, 2, 3


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _words(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


# flag -> (dest, parser)
OPTIONS = {
    "d": ("d", int),
    "d-list": ("d_list", _ints),
    "n": ("n", _ints),
    "p": ("p_list", _floats),
    "p1": ("p1_list", _floats),
    "kappa": ("kappa_list", _floats),
    "methods": ("methods", _words),
    "trials": ("trials", int),
    "seed": ("seed", int),
    "out": ("out", str),
    "heatmap-out": ("heatmap_out", str),
    "workers": ("workers", int),
    "mc-samples": ("mc_samples", int),
    "solver-tol": ("tol", float),
    "max-iter": ("max_iter", int),
    "gamma": ("gamma", float),
    "mu": ("mu", float),
    "theta-rule": ("theta_rule", str),
    "grid-step": ("grid_step", float),
}


class ConfigError(ValueError):
    pass


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines (``#`` comments allowed); keys mirror the flags."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, val = line.split("=", 1)
        else:
            parts = line.split(None, 1)
            if len(parts) != 2:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, val = parts
        key = key.strip().lstrip("-").replace("_", "-")
        if key not in OPTIONS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        dest, conv = OPTIONS[key]
        try:
            values[dest] = conv(val.strip())
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from exc
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rotsync", description=__doc__.splitlines()[0])
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", help="key = value file; command-line flags take precedence")
    for flag, (dest, conv) in OPTIONS.items():
        parser.add_argument(f"--{flag}", dest=dest, type=conv, default=None)
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def make_config(args: argparse.Namespace) -> tuple[ExperimentConfig, dict]:
    values = read_config_file(args.config) if args.config else {}
    for dest, _ in OPTIONS.values():
        v = getattr(args, dest)
        if v is not None:
            values[dest] = v
    extra = {k: values.pop(k) for k in ("heatmap_out", "grid_step") if k in values}
    if args.experiment in ("e3", "e4"):
        # unspecified heatmap axes fall back to a regular grid
        try:
            grid = default_grid(extra.get("grid_step", 0.05))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        values.setdefault("p_list", grid)
        values.setdefault("p1_list", grid)
    solver_keys = {"tol", "max_iter", "gamma", "mu", "theta_rule"}
    solver = {k: values.pop(k) for k in list(values) if k in solver_keys}
    try:
        config = ExperimentConfig(experiment=args.experiment, solver=SolverOptions(**solver),
                                  **values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return config, extra


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config, extra = make_config(args)
        result = run_experiment(config)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"rotsync: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    exp = config.experiment
    if exp in ("semicircle", "constants"):
        rows = report_rows(result) if exp == "semicircle" else result
        if config.out:
            write_rows(rows, config.out)
        for row in rows:
            print(", ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
                            for k, v in row.items()))
        return EXIT_OK

    if config.out:
        write_records(result, config.out)
    for s in summarize(result):
        kappa = "" if s["kappa"] is None else f" kappa={s['kappa']:g}"
        print(f"n={s['n']} p={s['p']:g} p1={s['p1']:g}{kappa} {s['method']}: "
              f"mean RE={s['re']:.4g} mean MSE={s['mse']:.4g} iters={s['iterations']:.0f}")
    if exp in ("e3", "e4"):
        hm = heatmap(result, config.d)
        target = extra.get("heatmap_out") or (
            str(Path(config.out).with_suffix("")) + ".heatmap.csv" if config.out else None)
        if target:
            write_rows(hm, target)
    if any(not r.converged for r in result):
        print("rotsync: some solver cells did not converge", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
