"""End-to-end pipeline: ingest, decompose, align, describe, FPCA, sweep, fit.

Every stage writes into the run's output directory and is a pure function of
the configuration and its inputs, so identical configs reproduce identical
artifact directories. Timings go to a log file kept outside that directory.
"""

from __future__ import annotations

import hashlib
import json
import logging
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import scipy
import sklearn

from . import __version__
from .covariates import CovariateTable
from .decompose import MAX_MISSING_FRACTION, RawSeries, align_trends, stl_decompose
from .fosr import fit_additive, term_summary
from .fpca import fpca, mode_envelopes
from .grid import FunctionalDataset, TimeGrid, deepest_curve, mean_function, write_dataset
from .io import load_series, write_decomposition_csv, write_events_csv, write_rows_csv, write_series_csv
from .modelsel import CovariateGroup, SweepTable, build_full_spec, sweep
from .svg import Chart, Line, render
from .synth import SyntheticConfig, generate_synthetic

log = logging.getLogger("fdrecovery")


class StageError(RuntimeError):
    """A pipeline stage failed; ``numerical`` selects exit code 2 over 1."""

    def __init__(self, stage: str, message: str, numerical: bool = False):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.numerical = numerical


def ndvi(red, nir):
    """Normalized difference vegetation index ``(nir - red) / (nir + red)``."""
    red = np.asarray(red, dtype=float)
    nir = np.asarray(nir, dtype=float)
    if np.any(red < 0) or np.any(nir < 0):
        raise ValueError("reflectances must be nonnegative")
    total = red + nir
    if np.any(total <= 0):
        raise ValueError("red + nir must be positive")
    out = (nir - red) / total
    return float(out) if out.ndim == 0 else out


@dataclass
class PipelineConfig:
    output: str = "fdrecovery-run"
    series: str | None = None
    events: str | None = None
    covariates: str | None = None
    categorical: list = field(default_factory=list)
    reference: dict = field(default_factory=dict)
    points_per_year: int = 26
    years_post: int = 7
    years_pre_min: int = 5
    seasonal_span: float = 0.4
    trend_span: float | None = None
    inner_iters: int = 2
    robust_iters: int = 1
    trend_window: str = "post"
    n_basis_t: int = 10
    n_basis_x: int = 10
    groups: list | None = None
    sweep_threshold: float = 1.0
    fpca_components: int = 4
    fpca_multiplier: float | None = None
    seed: int = 42
    jobs: int = 1
    synthetic: dict | None = None
    log_file: str | None = None

    def __post_init__(self):
        if self.years_post < 1 or self.points_per_year < 2:
            raise ValueError("years_post >= 1 and points_per_year >= 2 are required")

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid.from_years(self.years_post, self.points_per_year)

    @property
    def stl_kwargs(self) -> dict:
        return {"seasonal_span": self.seasonal_span, "trend_span": self.trend_span,
                "inner_iters": self.inner_iters, "robust_iters": self.robust_iters}

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def read(cls, path) -> "PipelineConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    def digest(self) -> str:
        d = asdict(self)
        for k in ("log_file", "jobs", "output"):
            d.pop(k)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


# ---------------------------------------------------------------------------
# stages


def ingest(series: list[RawSeries], covariates: CovariateTable, config: PipelineConfig):
    """Apply inclusion criteria; returns (kept series, aligned covariates, drop reasons)."""
    ppy = config.points_per_year
    missing_cov = [s.unit_id for s in series if s.unit_id not in set(covariates.unit_ids)]
    if missing_cov:
        raise ValueError(f"units in the series file but not in the covariates: {missing_cov[:5]}")
    seen = set()
    kept, dropped = [], {}
    for s in series:
        if s.unit_id in seen:
            raise ValueError(f"duplicate unit_id {s.unit_id!r}")
        seen.add(s.unit_id)
        if s.n_pre() < config.years_pre_min * ppy:
            dropped[s.unit_id] = "insufficient pre-event window"
        elif s.n_post() < config.years_post * ppy:
            dropped[s.unit_id] = "insufficient post-event window"
        elif s.missing_fraction() > MAX_MISSING_FRACTION:
            dropped[s.unit_id] = "too many missing observations"
        else:
            kept.append(s)
    for uid, why in dropped.items():
        log.info("dropped unit %s: %s", uid, why)
    if not kept:
        raise ValueError("no unit satisfies the inclusion criteria")
    return kept, covariates.align([s.unit_id for s in kept]), dropped


def load_inputs(config: PipelineConfig, out: Path):
    """Read the configured inputs, or generate synthetic ones into ``out/inputs``."""
    if config.series:
        if not (config.events and config.covariates):
            raise ValueError("series input needs events and covariates files too")
        series = load_series(config.series, config.events)
        cov = CovariateTable.read_csv(config.covariates, config.categorical, config.reference)
        return series, cov
    syn = SyntheticConfig(**(config.synthetic or {}))
    series, cov, truth = generate_synthetic(syn, config.seed)
    write_synthetic(out / "inputs", series, cov, truth)
    return series, cov


def write_synthetic(directory: Path, series, cov: CovariateTable, truth) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    write_series_csv(series, directory / "series.csv")
    write_events_csv(series, directory / "events.csv")
    cov.write_csv(directory / "covariates.csv")
    (directory / "truth.json").write_text(truth.to_json())


def decompose_stage(series: list[RawSeries], config: PipelineConfig, out: Path) -> FunctionalDataset:
    ddir = out / "decompositions"
    ddir.mkdir(parents=True, exist_ok=True)
    n_points = config.years_post * config.points_per_year

    def one(s: RawSeries):
        try:
            cal, y = s.regular()
            start = s.event_position if config.trend_window == "post" else 0
            dec = stl_decompose(y[start:], config.points_per_year, **config.stl_kwargs)
            write_decomposition_csv(dec, cal[start:], ddir / f"{_safe(s.unit_id)}.csv")
            offset = s.event_position - start
            return s.unit_id, dec.trend[offset : offset + n_points]
        except Exception as exc:
            raise StageError("decompose", f"unit {s.unit_id}: {exc}") from exc

    if config.jobs > 1:
        with ThreadPoolExecutor(config.jobs) as pool:
            trends = list(pool.map(one, series))
    else:
        trends = [one(s) for s in series]
    return align_trends(trends, config.grid)


def _safe(uid: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in str(uid))


def mean_report(ds: FunctionalDataset) -> dict:
    m = mean_function(ds).values
    report = {
        "n_units": ds.n,
        "n_points": ds.grid.n_points,
        "t_start": ds.grid.start,
        "t_end": ds.grid.end,
        "value_start": float(m[0]),
        "value_end": float(m[-1]),
        "global_mean": float(m.mean()),
        "total_recovery": float(m[-1] - m[0]),
    }
    if ds.n >= 2:
        report["modal_median_unit"] = ds.unit_ids[deepest_curve(ds)]
    return report


def dataset_svg(ds: FunctionalDataset, highlight: str | None = None) -> str:
    t = ds.grid.values
    lines = [Line(t, row, color="#8fbf9f", width=0.6, opacity=0.5) for row in ds.curves]
    if highlight is not None:
        lines.append(Line(t, ds.curves[ds.unit_ids.index(highlight)], color="#1b6f3a", width=1.6, label=highlight))
    lines.append(Line(t, mean_function(ds).values, color="#c0392b", width=2.0, label="mean"))
    return render([Chart(lines, "Aligned recovery trends", "years since event", "effect (NDVI)")], width=640, height=360)


def fpca_stage(ds: FunctionalDataset, config: PipelineConfig, out: Path):
    q = min(config.fpca_components, ds.n - 1, ds.grid.n_points)
    r = fpca(ds, q)
    report = r.to_dict()
    report["multiplier"] = "2*sqrt(eigenvalue)" if config.fpca_multiplier is None else config.fpca_multiplier
    (out / "fpca.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    t = ds.grid.values
    charts = [Chart([Line(t, g, label=f"PC{j + 1}") for j, g in enumerate(r.components)],
                    "Principal functions", "years since event", "")]
    for j, (hi, lo) in enumerate(mode_envelopes(r, config.fpca_multiplier)):
        charts.append(Chart([Line(t, r.mean, color="#000000", width=1.6),
                             Line(t, hi, color="#2c7fb8", dash="4 2", label="+"),
                             Line(t, lo, color="#c0392b", dash="1 2", label="-")],
                            f"PC{j + 1} ({100 * r.variance_share[j]:.1f}%)", "years since event", ""))
    (out / "fpca.svg").write_text(render(charts, ncols=2))
    return r


def default_groups(cov: CovariateTable) -> list[CovariateGroup]:
    return [CovariateGroup(c, (c,)) for c in cov.columns]


def parse_groups(config: PipelineConfig, cov: CovariateTable) -> list[CovariateGroup]:
    if not config.groups:
        return default_groups(cov)
    out = []
    for g in config.groups:
        if isinstance(g, dict):
            out.append(CovariateGroup(g.get("name", "+".join(g["members"])), tuple(g["members"])))
        else:
            members = (g,) if isinstance(g, str) else tuple(g)
            out.append(CovariateGroup("+".join(members), members))
    return out


def fit_stage(ds: FunctionalDataset, cov: CovariateTable, table: SweepTable, config: PipelineConfig, out: Path):
    spec = build_full_spec(table, cov, config.n_basis_t, config.n_basis_x)
    X = cov.standardize([c for c in spec.covariates if cov.is_numeric(c)])
    try:
        model = fit_additive(ds, X, spec)
    except np.linalg.LinAlgError as exc:
        raise StageError("fit", str(exc), numerical=True) from exc
    (out / "model_spec.json").write_text(spec.to_json() + "\n")
    summary = term_summary(model)
    report = model.to_dict()
    report["summary"] = summary
    report["standardization"] = {k: list(v) for k, v in sorted(X.standardization.items())}
    (out / "fit.json").write_text(json.dumps(report, indent=2, sort_keys=True, default=_jsonable) + "\n")
    write_rows_csv(summary["parametric"], out / "terms_parametric.csv", ["term", "estimate", "std_error", "t_value"])
    write_rows_csv(summary["smooth"], out / "terms_smooth.csv", ["term", "edf", "ref_df", "F"])
    t = ds.grid.values
    curves = [Chart([Line(t, c["curve"])], label, "years since event", "")
              for label, c in model.coefficients.items() if c["kind"] in ("intercept", "varying")]
    smooths = [Chart([Line(c["x"], c["values"])], label, f"{c['covariate']} (standardized)", "")
               for label, c in model.coefficients.items() if c["kind"] == "smooth"]
    (out / "coefficient_curves.svg").write_text(render(curves, ncols=2))
    (out / "smooth_terms.svg").write_text(render(smooths or [Chart(title="no smooth terms")], ncols=3))
    return model


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o))


ARTIFACTS = (
    "decompositions",
    "dataset.csv",
    "mean_function.json",
    "fpca.json",
    "sweep.csv",
    "fit.json",
    "figures",
)


def run_pipeline(config: PipelineConfig) -> Path:
    """Run every stage; returns the output directory."""
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    _attach_log(config)
    timings = {}

    def stage(name, fn, *args, numerical=(np.linalg.LinAlgError, FloatingPointError)):
        t0 = time.perf_counter()
        try:
            result = fn(*args)
        except StageError:
            raise
        except numerical as exc:
            raise StageError(name, str(exc), numerical=True) from exc
        except (ValueError, KeyError, OSError) as exc:
            raise StageError(name, str(exc)) from exc
        timings[name] = time.perf_counter() - t0
        log.info("stage %s finished in %.3fs", name, timings[name])
        return result

    series, cov = stage("ingest", load_inputs, config, out)
    kept, cov, dropped = stage("ingest", ingest, series, cov, config)
    ds = stage("decompose", decompose_stage, kept, config, out)
    stage("align", write_dataset, ds, out / "dataset.csv")
    report = stage("describe", mean_report, ds)
    report["dropped_units"] = dict(sorted(dropped.items()))
    (out / "mean_function.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    figdir = out / "figures"
    figdir.mkdir(exist_ok=True)
    (figdir / "dataset.svg").write_text(dataset_svg(ds, report.get("modal_median_unit")))
    if ds.n >= 2:
        stage("fpca", fpca_stage, ds, config, out)
    groups = parse_groups(config, cov)
    table = stage("sweep", sweep, ds, cov, groups, config.n_basis_t, config.n_basis_x,
                  config.sweep_threshold, config.jobs)
    table.write_csv(out / "sweep.csv")
    stage("fit", fit_stage, ds, cov, table, config, out)
    for name in ("fpca.svg", "coefficient_curves.svg", "smooth_terms.svg"):
        if (out / name).exists():
            (out / name).replace(figdir / name)
    write_manifest(out, config)
    return out


def write_manifest(out: Path, config: PipelineConfig) -> None:
    files = {}
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            files[p.relative_to(out).as_posix()] = hashlib.sha256(p.read_bytes()).hexdigest()
    manifest = {
        "config_sha256": config.digest(),
        "config": json.loads(config.to_json()),
        "seed": config.seed,
        "artifacts": list(ARTIFACTS),
        "files": files,
        "versions": {
            "fdrecovery": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "scikit-learn": sklearn.__version__,
        },
    }
    for k in ("log_file", "jobs", "output"):
        manifest["config"].pop(k, None)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _attach_log(config: PipelineConfig) -> None:
    path = Path(config.log_file) if config.log_file else Path(str(Path(config.output).resolve()) + ".log")
    for h in list(log.handlers):
        if getattr(h, "_fdrecovery", False):
            log.removeHandler(h)
            h.close()
    handler = logging.FileHandler(path, mode="w")
    handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    handler._fdrecovery = True
    log.addHandler(handler)
    log.setLevel(logging.INFO)

