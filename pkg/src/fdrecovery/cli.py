"""Command-line entry point: ``fdrecovery <subcommand> [--config FILE] [flags]``.

Exit codes: 0 success, 1 validation error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .covariates import CovariateTable
from .fosr import DesignError, ModelSpec, fit_additive
from .grid import read_dataset, write_dataset
from .io import load_series
from .modelsel import SweepTable, sweep
from .pipeline import (
    PipelineConfig,
    StageError,
    decompose_stage,
    fit_stage,
    fpca_stage,
    ingest,
    parse_groups,
    run_pipeline,
    write_synthetic,
)
from .synth import SyntheticConfig, generate_synthetic

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2

# flag -> config field
_OVERRIDES = {
    "out": "output",
    "series": "series",
    "events": "events",
    "covariates": "covariates",
    "seed": "seed",
    "jobs": "jobs",
    "threshold": "sweep_threshold",
    "n_basis_t": "n_basis_t",
    "n_basis_x": "n_basis_x",
    "components": "fpca_components",
    "multiplier": "fpca_multiplier",
    "log_file": "log_file",
    "years_post": "years_post",
    "years_pre_min": "years_pre_min",
    "points_per_year": "points_per_year",
}


def _config(args) -> PipelineConfig:
    cfg = PipelineConfig.read(args.config) if args.config else PipelineConfig()
    changes = {}
    for flag, name in _OVERRIDES.items():
        v = getattr(args, flag, None)
        if v is not None:
            changes[name] = v
    if getattr(args, "categorical", None):
        changes["categorical"] = args.categorical.split(",")
    if getattr(args, "groups", None):
        changes["groups"] = json.loads(args.groups)
    return replace(cfg, **changes)


def _out(cfg: PipelineConfig) -> Path:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(args) -> None:
    cfg = _config(args)
    syn = SyntheticConfig(**(cfg.synthetic or {}))
    if args.n_units is not None:
        syn = replace(syn, n_units=args.n_units)
    if args.noise_sd is not None:
        syn = replace(syn, noise_sd=args.noise_sd)
    series, cov, truth = generate_synthetic(syn, cfg.seed)
    write_synthetic(_out(cfg), series, cov, truth)


def _inputs(cfg):
    series = load_series(cfg.series, cfg.events)
    if cfg.covariates:
        cov = CovariateTable.read_csv(cfg.covariates, cfg.categorical, cfg.reference)
        series, _, _ = ingest(series, cov, cfg)
    return series


def cmd_decompose(args) -> None:
    cfg = _config(args)
    out = _out(cfg)
    ds = decompose_stage(_inputs(cfg), cfg, out)
    write_dataset(ds, out / "dataset.csv")


def cmd_align(args) -> None:
    """Cut post-event trends out of per-unit decomposition files."""
    cfg = _config(args)
    out = _out(cfg)
    from .io import read_events_csv
    events = read_events_csv(cfg.events)
    n_points = cfg.years_post * cfg.points_per_year
    trends = []
    for path in sorted(Path(args.decompositions).glob("*.csv")):
        with path.open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        uid = path.stem
        if uid not in events:
            raise ValueError(f"{path}: no event_index for unit {uid!r}")
        cal = np.array([int(r["calendar_index"]) for r in rows])
        trend = np.array([float(r["trend"]) for r in rows])
        start = int(np.searchsorted(cal, events[uid]))
        trends.append((uid, trend[start : start + n_points]))
    from .decompose import align_trends
    write_dataset(align_trends(trends, cfg.grid), out / "dataset.csv")


def cmd_fpca(args) -> None:
    cfg = _config(args)
    fpca_stage(read_dataset(args.dataset), cfg, _out(cfg))


def _dataset_and_covariates(args, cfg):
    ds = read_dataset(args.dataset)
    if not cfg.covariates:
        raise ValueError("--covariates is required")
    cov = CovariateTable.read_csv(cfg.covariates, cfg.categorical, cfg.reference).align(ds.unit_ids)
    return ds, cov


def cmd_sweep(args) -> None:
    cfg = _config(args)
    ds, cov = _dataset_and_covariates(args, cfg)
    table = sweep(ds, cov, parse_groups(cfg, cov), cfg.n_basis_t, cfg.n_basis_x, cfg.sweep_threshold, cfg.jobs)
    table.write_csv(_out(cfg) / "sweep.csv")


def cmd_fit(args) -> None:
    cfg = _config(args)
    ds, cov = _dataset_and_covariates(args, cfg)
    out = _out(cfg)
    if args.spec:
        spec = ModelSpec.read(args.spec)
        X = cov.standardize([c for c in spec.covariates if cov.is_numeric(c)])
        model = fit_additive(ds, X, spec)
        (out / "fit.json").write_text(json.dumps(model.to_dict(), indent=2, sort_keys=True,
                                                 default=lambda o: o.tolist()) + "\n")
        return
    if not args.sweep:
        raise ValueError("fit needs --sweep (a sweep table) or --spec (a model spec)")
    fit_stage(ds, cov, SweepTable.read_csv(args.sweep), cfg, out)


def cmd_run(args) -> None:
    run_pipeline(_config(args))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fdrecovery", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON pipeline configuration")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--jobs", type=int)
        p.add_argument("--log-file", dest="log_file")
        p.set_defaults(func=fn)
        return p

    p = add("synth", cmd_synth, "generate synthetic series, events, covariates and truth")
    p.add_argument("--n-units", dest="n_units", type=int)
    p.add_argument("--noise-sd", dest="noise_sd", type=float)

    for name, fn, help_text in (("decompose", cmd_decompose, "STL-decompose every unit's series"),
                                ("run", cmd_run, "run every stage")):
        p = add(name, fn, help_text)
        p.add_argument("--series")
        p.add_argument("--events")
        p.add_argument("--covariates")
        p.add_argument("--categorical", help="comma-separated categorical columns")
        p.add_argument("--groups", help="JSON list of covariate groups")
        p.add_argument("--threshold", type=float)
        p.add_argument("--years-post", dest="years_post", type=int)
        p.add_argument("--years-pre-min", dest="years_pre_min", type=int)
        p.add_argument("--points-per-year", dest="points_per_year", type=int)

    p = add("align", cmd_align, "align post-event trends into a functional dataset")
    p.add_argument("--decompositions", required=True, help="directory of per-unit decomposition CSVs")
    p.add_argument("--events", required=True)

    p = add("fpca", cmd_fpca, "functional principal components of a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--components", type=int)
    p.add_argument("--multiplier", type=float)

    for name, fn, help_text in (("sweep", cmd_sweep, "fit the five term types per covariate group"),
                                ("fit", cmd_fit, "fit the full additive model")):
        p = add(name, fn, help_text)
        p.add_argument("--dataset", required=True)
        p.add_argument("--covariates")
        p.add_argument("--categorical")
        p.add_argument("--groups")
        p.add_argument("--threshold", type=float)
        p.add_argument("--n-basis-t", dest="n_basis_t", type=int)
        p.add_argument("--n-basis-x", dest="n_basis_x", type=int)
        if name == "fit":
            p.add_argument("--sweep", help="sweep.csv with selected term types")
            p.add_argument("--spec", help="model spec JSON (overrides --sweep)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL if exc.numerical else EXIT_VALIDATION
    except (DesignError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
