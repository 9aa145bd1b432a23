"""Command-line front end: config parsing, experiment dispatch, persistence.

Config files are strict TOML: unknown keys are errors and every validation
message names the offending field.  A file either describes one run
(top-level keys including `experiment`) or several (one table per run, with
top-level scalars as shared defaults).  Every output file except run.json,
which records wall-clock duration, is a deterministic byte stream for a
fixed (config, seed, artifact version).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import tempfile
import time
from typing import Callable, NamedTuple, Optional, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from . import __version__
from .constants import PrecisionError, rho_integral, sigma_squared
from .sampling import SeedSpec, TimeGrid, as_hurst, complex_fbm
from .stats import MCReport
from .experiments import (
    ExperimentConfig,
    run_circle_average,
    run_clt_winding,
    run_ergodic_angular,
    run_ergodic_clock,
    run_ergodic_radial,
    run_ito_checks,
    run_mixing_check,
    run_reciprocal_drift,
    run_shifted_radial,
    run_symmetry_check,
    run_uniform_angle,
    run_variation,
    run_winding_cf,
)


class ConfigError(ValueError):
    """Rejected configuration; the message names the field at fault."""


# ---------------------------------------------------------------------------
# Experiment registry.  Each entry: runner(config, extras, path_records)
# returning a list of reports, the extra config keys it accepts, and the
# default start point (experiments built on the origin-start law need 0).


def _run_ito(config, extras, records):
    return [r for r in run_ito_checks(config)
            if not r.name.startswith("skew_")]


def _run_skew(config, extras, records):
    return [r for r in run_ito_checks(config) if r.name.startswith("skew_")]


def _run_radial(config, extras, records):
    return [run_ergodic_radial(config, path_records=records)]


def _run_angular(config, extras, records):
    return [run_ergodic_angular(config, path_records=records)]


def _run_clock(config, extras, records):
    return [run_ergodic_clock(config, path_records=records)]


_CIRCLE_CASES = (
    ("circle_const", lambda u: np.ones_like(u, dtype=float)),
    ("circle_cos", lambda u: np.real(u)),
    ("circle_cos_sq", lambda u: np.real(u) ** 2),
)


def _run_circle(config, extras, records):
    return [run_circle_average(config, f, name=name, path_records=records)
            for name, f in _CIRCLE_CASES]


_DRIFT_CASES = (
    ("drift_identity", lambda w: w, 1.0),
    ("drift_affine_square", lambda w: w + w * w, 1.0),
    ("drift_square", lambda w: w * w, 0.0),
)


def _run_drift(config, extras, records):
    return [run_reciprocal_drift(config, f, fp0, name=name,
                                 path_records=records)
            for name, f, fp0 in _DRIFT_CASES]


def _run_shifted(config, extras, records):
    shift = extras.get("shift", 1.0 + 1.0j)
    return list(run_shifted_radial(config, shift, path_records=records))


def _run_variation(config, extras, records):
    return [run_variation(config, path_records=records)]


def _run_winding_cf(config, extras, records):
    return list(run_winding_cf(config, path_records=records))


def _run_clt(config, extras, records):
    return [run_clt_winding(config, path_records=records)]


def _run_uniform_angle(config, extras, records):
    return [run_uniform_angle(config, t=extras.get("t", 1.0),
                              path_records=records)]


def _run_mixing(config, extras, records):
    return [run_mixing_check(config, k=extras.get("k", 2.0),
                             n_max=extras.get("n_max", 30))]


def _run_symmetry(config, extras, records):
    return list(run_symmetry_check(config))


class _Entry(NamedTuple):
    runner: Callable
    extras: frozenset
    default_z0: complex


_EXPERIMENTS = {
    "ito-check": _Entry(_run_ito, frozenset(), 1.0 + 0.0j),
    "skew-check": _Entry(_run_skew, frozenset(), 1.0 + 0.0j),
    "ergodic-radial": _Entry(_run_radial, frozenset(), 1.0 + 0.0j),
    "ergodic-angular": _Entry(_run_angular, frozenset(), 1.0 + 0.0j),
    "ergodic-clock": _Entry(_run_clock, frozenset(), 1.0 + 0.0j),
    "ergodic-circle": _Entry(_run_circle, frozenset(), 0.0j),
    "reciprocal-drift": _Entry(_run_drift, frozenset(), 1.0 + 0.0j),
    "shifted-radial": _Entry(_run_shifted, frozenset({"shift"}), 0.0j),
    "variation": _Entry(_run_variation, frozenset(), 1.0 + 0.0j),
    "winding-cf": _Entry(_run_winding_cf, frozenset(), 1.0 + 0.0j),
    "clt": _Entry(_run_clt, frozenset(), 1.0 + 0.0j),
    "uniform-angle": _Entry(_run_uniform_angle, frozenset({"t"}), 0.0j),
    "mixing": _Entry(_run_mixing, frozenset({"k", "n_max"}), 1.0 + 0.0j),
    "symmetry": _Entry(_run_symmetry, frozenset(), 1.0 + 0.0j),
}

_COMMON_KEYS = frozenset({
    "experiment", "h", "z0", "n_paths", "seed", "workers",
    "guard_eps", "grid", "checkpoints", "tolerance",
})


class RunSpec(NamedTuple):
    """One configured experiment run, plus its raw mapping for the manifest."""

    name: str
    experiment: str
    config: ExperimentConfig
    extras: dict
    raw: dict


# ---------------------------------------------------------------------------
# Config parsing.


def _parse_complex(value, field: str) -> complex:
    if isinstance(value, bool):
        raise ConfigError(f"{field}: expected a number or complex string")
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, str):
        try:
            return complex(value.replace(" ", ""))
        except ValueError:
            raise ConfigError(f"{field}: not a complex number: {value!r}")
    if (isinstance(value, (list, tuple)) and len(value) == 2
            and all(isinstance(v, (int, float)) and not isinstance(v, bool)
                    for v in value)):
        return complex(value[0], value[1])
    raise ConfigError(f"{field}: expected a number, 'a+bj' string, or"
                      " [re, im] pair")


def parse_grid(text: str, field: str = "grid") -> Optional[TimeGrid]:
    """Grid descriptor: 'uniform:n=1024,dt=0.001[,zero]' or
    'geometric:start=0.01,ratio=1.05,count=283[,zero]' or 'default'."""
    text = text.strip()
    if text == "default":
        return None
    kind, _, rest = text.partition(":")
    kind = kind.strip()
    opts, flags = {}, set()
    for tok in rest.split(",") if rest else []:
        tok = tok.strip()
        if not tok:
            continue
        if "=" in tok:
            k, _, v = tok.partition("=")
            opts[k.strip()] = v.strip()
        else:
            flags.add(tok)
    if not flags <= {"zero"}:
        raise ConfigError(f"{field}: unknown flag in {sorted(flags)!r}")

    def need(key, conv):
        if key not in opts:
            raise ConfigError(f"{field}: {kind} grid needs {key}=")
        try:
            return conv(opts.pop(key))
        except ValueError:
            raise ConfigError(f"{field}: bad value for {key}")

    try:
        if kind == "uniform":
            n = need("n", int)
            dt = need("dt", float)
            if opts:
                raise ConfigError(f"{field}: unknown keys {sorted(opts)!r}")
            return TimeGrid.uniform(n, dt, include_zero="zero" in flags)
        if kind == "geometric":
            start = need("start", float)
            ratio = need("ratio", float)
            count = need("count", int)
            if opts:
                raise ConfigError(f"{field}: unknown keys {sorted(opts)!r}")
            return TimeGrid.geometric(start, ratio, count,
                                      include_zero="zero" in flags)
    except ValueError as exc:
        raise ConfigError(f"{field}: {exc}")
    raise ConfigError(f"{field}: unknown grid kind {kind!r}")


def _coerce_int(value, field: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{field}: expected an integer")
    return value


def _coerce_num(value, field: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{field}: expected a number")
    return float(value)


def _build_run(name: str, mapping: dict) -> RunSpec:
    experiment = mapping.get("experiment", name)
    if experiment not in _EXPERIMENTS:
        known = ", ".join(sorted(_EXPERIMENTS))
        raise ConfigError(f"{name}.experiment: unknown experiment"
                          f" {experiment!r} (known: {known})")
    entry = _EXPERIMENTS[experiment]
    allowed = _COMMON_KEYS | entry.extras
    for key in mapping:
        if key not in allowed:
            raise ConfigError(f"{name}.{key}: unknown key for {experiment}")
    if "h" not in mapping:
        raise ConfigError(f"{name}.h: required")

    kwargs = {"h": _coerce_num(mapping["h"], f"{name}.h")}
    if not 0.0 < kwargs["h"] < 1.0:
        raise ConfigError(f"{name}.h: must lie in (0, 1)")
    kwargs["z0"] = (_parse_complex(mapping["z0"], f"{name}.z0")
                    if "z0" in mapping else entry.default_z0)
    if "n_paths" in mapping:
        kwargs["n_paths"] = _coerce_int(mapping["n_paths"], f"{name}.n_paths")
    if "seed" in mapping:
        kwargs["seed"] = SeedSpec(_coerce_int(mapping["seed"], f"{name}.seed"))
    if "workers" in mapping:
        kwargs["workers"] = _coerce_int(mapping["workers"], f"{name}.workers")
    if "guard_eps" in mapping:
        kwargs["guard_eps"] = _coerce_num(mapping["guard_eps"],
                                          f"{name}.guard_eps")
    if "grid" in mapping:
        if not isinstance(mapping["grid"], str):
            raise ConfigError(f"{name}.grid: expected a descriptor string")
        kwargs["grid"] = parse_grid(mapping["grid"], f"{name}.grid")
    if "checkpoints" in mapping:
        cps = mapping["checkpoints"]
        if not isinstance(cps, (list, tuple)) or not cps:
            raise ConfigError(f"{name}.checkpoints: expected a nonempty list")
        kwargs["checkpoints"] = [
            _coerce_num(c, f"{name}.checkpoints") for c in cps]
    if "tolerance" in mapping:
        kwargs["tolerance"] = _coerce_num(mapping["tolerance"],
                                          f"{name}.tolerance")

    extras = {}
    for key in entry.extras:
        if key in mapping:
            if key == "shift":
                extras[key] = _parse_complex(mapping[key], f"{name}.{key}")
            elif key == "n_max":
                extras[key] = _coerce_int(mapping[key], f"{name}.{key}")
            else:
                extras[key] = _coerce_num(mapping[key], f"{name}.{key}")

    try:
        config = ExperimentConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}")
    raw = dict(mapping)
    raw["experiment"] = experiment
    return RunSpec(name, experiment, config, extras, raw)


def parse_config(path) -> list[RunSpec]:
    """Validated run specs from a strict TOML config file.

    Parse errors keep tomllib's line/column message; validation errors name
    the section and field.  Top-level scalars are shared defaults when
    tables are present, otherwise they form a single anonymous run.
    """
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}")
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}")

    sections = {k: v for k, v in doc.items() if isinstance(v, dict)}
    defaults = {k: v for k, v in doc.items() if not isinstance(v, dict)}
    if not sections:
        return [_build_run("run", defaults)]
    if "experiment" in defaults:
        raise ConfigError("experiment: move this key into a [section]"
                          " when the file defines several runs")
    return [_build_run(name, {**defaults, **section})
            for name, section in sections.items()]


# ---------------------------------------------------------------------------
# Output writers.  summary.json, reports.csv, checkpoints.csv and the
# optional paths.jsonl are pure functions of the reports; run.json carries
# wall-clock duration and is written last, atomically.


def _fmt(x) -> str:
    return repr(float(x))


def _write_text(path: str, data: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(data)


def _write_summary(path: str, reports: Sequence[MCReport]) -> None:
    doc = {"artifact_version": __version__,
           "reports": [r.to_json_dict() for r in reports]}
    _write_text(path, json.dumps(doc, indent=2, sort_keys=False) + "\n")


def _write_reports_csv(path: str, reports: Sequence[MCReport]) -> None:
    lines = [MCReport.csv_header()]
    lines.extend(r.to_csv_row() for r in reports)
    _write_text(path, "\r\n".join(lines) + "\r\n")


def _write_checkpoints_csv(path: str, reports: Sequence[MCReport]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(["report", "t", "estimate", "stderr"])
        for r in reports:
            for row in r.detail.get("checkpoints", []):
                writer.writerow([r.name, _fmt(row[0]), _fmt(row[1]),
                                 _fmt(row[2])])


def _write_jsonl(path: str, records: Sequence[dict]) -> None:
    lines = [json.dumps(rec, sort_keys=False) for rec in records]
    _write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def _atomic_write_json(path: str, doc: dict) -> None:
    target_dir = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=target_dir, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(json.dumps(doc, indent=2, sort_keys=False) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _grid_snapshot(grid: Optional[TimeGrid]):
    if grid is None:
        return None
    return {"kind": grid.kind, "points": int(grid.n),
            "includes_zero": bool(grid.has_zero),
            "t_last": float(grid.times[-1])}


def _config_snapshot(spec: RunSpec) -> dict:
    config = spec.config
    return {
        "experiment": spec.experiment,
        "h": config.h.value,
        "z0": [config.z0.real, config.z0.imag],
        "n_paths": config.n_paths,
        "seed": {"master_seed": config.seed.master_seed,
                 "stream_index": config.seed.stream_index},
        "workers": config.workers,
        "guard_eps": config.guard_eps,
        "grid": _grid_snapshot(config.grid),
        "checkpoints": (list(config.checkpoints)
                        if config.checkpoints is not None else None),
        "tolerance": config.tolerance,
        "extras": {k: ([v.real, v.imag] if isinstance(v, complex) else v)
                   for k, v in sorted(spec.extras.items())},
    }


def _exit_code(reports: Sequence[MCReport]) -> int:
    verdicts = {r.verdict for r in reports}
    if "fail" in verdicts:
        return 1
    if "inconclusive" in verdicts:
        return 2
    return 0


def dispatch(subcommand: str, runs: Sequence[RunSpec], out_dir,
             json_lines: bool = False, quiet: bool = False) -> int:
    """Run the configured experiments and persist their reports.

    Exit status 0 iff every verdict is pass, 2 if any is inconclusive,
    1 if any fails.  Report names gain a 'section:' prefix when the config
    file defines named sections, so repeated experiments stay distinct.
    """
    out_dir = str(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    started = time.time()
    reports: list[MCReport] = []
    records: Optional[list] = [] if json_lines else None
    for spec in runs:
        entry = _EXPERIMENTS[spec.experiment]
        local = [] if json_lines else None
        out = entry.runner(spec.config, spec.extras, local)
        if spec.name != "run":
            out = [r.with_name(f"{spec.name}:{r.name}") for r in out]
        reports.extend(out)
        if json_lines:
            records.extend({"run": spec.name, **rec} for rec in local)
        if not quiet:
            for r in out:
                total = r.n_samples + r.n_rejected
                print(f"{r.name}: {r.verdict} (estimate {r.estimate:.6g},"
                      f" target {r.target:.6g}, tolerance {r.tolerance:.3g},"
                      f" stderr {r.stderr:.3g},"
                      f" rejected {r.n_rejected}/{total})")

    outputs = {"summary": os.path.join(out_dir, "summary.json"),
               "reports_csv": os.path.join(out_dir, "reports.csv"),
               "checkpoints_csv": os.path.join(out_dir, "checkpoints.csv")}
    _write_summary(outputs["summary"], reports)
    _write_reports_csv(outputs["reports_csv"], reports)
    _write_checkpoints_csv(outputs["checkpoints_csv"], reports)
    if json_lines:
        outputs["paths_jsonl"] = os.path.join(out_dir, "paths.jsonl")
        _write_jsonl(outputs["paths_jsonl"], records)

    manifest = {
        "artifact_version": __version__,
        "subcommand": subcommand,
        "runs": [{"name": spec.name, "config": _config_snapshot(spec)}
                 for spec in runs],
        "verdicts": {r.name: r.verdict for r in reports},
        "outputs": {k: os.path.basename(v) for k, v in outputs.items()},
        "duration_seconds": time.time() - started,
    }
    _atomic_write_json(os.path.join(out_dir, "run.json"), manifest)

    code = _exit_code(reports)
    if not quiet:
        word = {0: "pass", 1: "fail", 2: "inconclusive"}[code]
        print(f"overall: {word}; outputs in {out_dir}")
    return code


# ---------------------------------------------------------------------------
# Commands.


def _flag_overrides(args) -> dict:
    raw = {}
    if args.hurst is not None:
        raw["h"] = args.hurst
    if args.z0 is not None:
        raw["z0"] = args.z0
    if args.paths is not None:
        raw["n_paths"] = args.paths
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.workers is not None:
        raw["workers"] = args.workers
    if args.grid is not None:
        raw["grid"] = args.grid
    return raw


def _runs_for(args, experiment: Optional[str]) -> list[RunSpec]:
    overrides = _flag_overrides(args)
    if args.config:
        specs = parse_config(args.config)
        if experiment is not None:
            specs = [s for s in specs if s.experiment == experiment]
            if not specs:
                raise ConfigError(
                    f"{args.config}: no section runs {experiment}")
        if overrides:
            specs = [_build_run(s.name, {**s.raw, **overrides})
                     for s in specs]
        return specs
    if experiment is None:
        raise ConfigError("config: the `all` command needs --config")
    if "workers" not in overrides:
        overrides["workers"] = os.cpu_count() or 1
    return [_build_run("run", {"experiment": experiment, **overrides})]


def _cmd_experiment(args) -> int:
    runs = _runs_for(args, args.experiment_name)
    return dispatch(args.experiment_name or "all", runs, args.out,
                    json_lines=args.json, quiet=args.quiet)


def _cmd_generate(args) -> int:
    grid = TimeGrid.uniform(args.n, args.dt)
    z0 = _parse_complex(args.z0, "z0") if args.z0 is not None else 0.0j
    path = complex_fbm(grid, as_hurst(args.hurst),
                       z0=z0, seed=SeedSpec(args.seed))
    lines = ["t,re,im"]
    lines.extend(f"{_fmt(t)},{_fmt(v.real)},{_fmt(v.imag)}"
                 for t, v in zip(grid.times, path.values))
    _write_text(args.out, "\r\n".join(lines) + "\r\n")
    if not args.quiet:
        print(f"wrote {grid.n} samples to {args.out}")
    return 0


def _cmd_sigma2(args) -> int:
    hv = as_hurst(args.hurst).value
    coeff = 4.0 * hv * (2.0 * hv - 1.0)
    adaptive = coeff * rho_integral(float("inf"), hv, scheme="adaptive")
    panels = coeff * rho_integral(float("inf"), hv, scheme="panels")
    value = sigma_squared(hv)
    rel = abs(adaptive - panels) / max(abs(adaptive), abs(panels))
    print(f"sigma^2({hv:g}) = {value!r}")
    print(f"scheme agreement: adaptive {adaptive!r}, panels {panels!r},"
          f" relative gap {rel:.3e} (bar 1e-06)")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fbm2d",
        description="Monte Carlo laboratory for planar fractional Brownian"
                    " motion with Hurst exponent above one half.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file")
    common.add_argument("--out", default="runs", help="output directory")
    common.add_argument("--seed", type=int, help="master seed override")
    common.add_argument("--workers", type=int,
                        help="worker threads (default: all cores)")
    common.add_argument("--paths", type=int, help="Monte Carlo path count")
    common.add_argument("--h", dest="hurst", type=float,
                        help="Hurst exponent in (0, 1)")
    common.add_argument("--z0", help="start point, e.g. 1+1j")
    common.add_argument("--grid",
                        help="uniform:n=..,dt=..[,zero] or"
                             " geometric:start=..,ratio=..,count=..[,zero]")
    common.add_argument("--json", action="store_true",
                        help="also write per-path JSON lines")
    common.add_argument("--quiet", action="store_true")

    for name in sorted(_EXPERIMENTS):
        if name.startswith("ergodic-"):
            continue
        p = sub.add_parser(name, parents=[common],
                           help=f"run the {name} experiment")
        p.set_defaults(func=_cmd_experiment, experiment_name=name)

    p = sub.add_parser("ergodic", parents=[common],
                       help="long-time ergodic limits")
    p.add_argument("mode", choices=("radial", "angular", "clock", "circle"))
    p.set_defaults(func=_cmd_experiment_ergodic)

    p = sub.add_parser("all", parents=[common],
                       help="run every experiment in the config file")
    p.set_defaults(func=_cmd_experiment, experiment_name=None)

    p = sub.add_parser("generate", help="sample one path to CSV")
    p.add_argument("--h", dest="hurst", type=float, required=True)
    p.add_argument("--n", type=int, required=True, help="number of samples")
    p.add_argument("--dt", type=float, required=True, help="time step")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--z0", help="start point (default 0)")
    p.add_argument("--out", default="path.csv", help="output CSV file")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("sigma2",
                       help="print the winding limit variance at --h")
    p.add_argument("--h", dest="hurst", type=float, required=True)
    p.set_defaults(func=_cmd_sigma2)
    return parser


def _cmd_experiment_ergodic(args) -> int:
    args.experiment_name = f"ergodic-{args.mode}"
    return _cmd_experiment(args)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, ArithmeticError, PrecisionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
