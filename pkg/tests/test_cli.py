import csv
import json
import logging

import numpy as np
import pytest

from fdrecovery.cli import main
from fdrecovery.covariates import CovariateTable
from fdrecovery.decompose import RawSeries, extract_trend
from fdrecovery.grid import read_dataset
from fdrecovery.io import load_series
from fdrecovery.pipeline import ARTIFACTS, PipelineConfig, ingest, mean_report, ndvi
from fdrecovery.synth import SyntheticConfig, generate_functional, generate_synthetic

KINDS = ["linear", "smooth", "varying", "varying+smooth", "bivariate"]


# --- ndvi -----------------------------------------------------------------


@pytest.mark.parametrize("red,nir,expected", [(100, 100, 0.0), (50, 150, 0.5), (150, 50, -0.5), (0, 7, 1.0)])
def test_ndvi_examples(red, nir, expected):
    assert ndvi(red, nir) == pytest.approx(expected, abs=1e-15)


def test_ndvi_errors_and_range():
    with pytest.raises(ValueError):
        ndvi(0, 0)
    with pytest.raises(ValueError):
        ndvi(-1, 3)
    rng = np.random.default_rng(0)
    v = ndvi(rng.uniform(0, 1, 500), rng.uniform(0, 1, 500))
    assert v.shape == (500,) and np.all(np.abs(v) <= 1)


# --- ingest ---------------------------------------------------------------


def _unit(uid, n_pre_years, n_post_years, missing=0.0, ppy=26):
    n_pre, n_post = n_pre_years * ppy, n_post_years * ppy
    y = np.zeros(n_pre + n_post)
    y[: int(round(missing * y.size))] = np.nan
    return RawSeries(uid, np.arange(y.size), y, n_pre)


def _cov(ids):
    return CovariateTable.from_mapping({"x": np.arange(len(ids), dtype=float)}, tuple(ids))


def test_ingest_drop_reasons(caplog):
    series = [_unit("ok", 5, 7), _unit("short_pre", 4, 7), _unit("short_post", 5, 6), _unit("gappy", 5, 7, 0.25)]
    with caplog.at_level(logging.INFO, logger="fdrecovery"):
        kept, cov, dropped = ingest(series, _cov([s.unit_id for s in series]), PipelineConfig())
    assert [s.unit_id for s in kept] == ["ok"] and cov.unit_ids == ("ok",)
    assert dropped == {"short_pre": "insufficient pre-event window",
                       "short_post": "insufficient post-event window",
                       "gappy": "too many missing observations"}
    assert "short_pre: insufficient pre-event window" in caplog.text


def test_ingest_contract_errors():
    with pytest.raises(ValueError, match="duplicate"):
        ingest([_unit("a", 5, 7), _unit("a", 5, 7)], _cov(["a"]), PipelineConfig())
    with pytest.raises(ValueError, match="not in the covariates"):
        ingest([_unit("a", 5, 7), _unit("b", 5, 7)], _cov(["a"]), PipelineConfig())
    with pytest.raises(ValueError):
        ingest([_unit("a", 4, 7)], _cov(["a"]), PipelineConfig())


def test_ingest_keeps_full_scale_input():
    series, cov, _ = generate_synthetic(SyntheticConfig(n_units=243), 3)
    kept, cov2, dropped = ingest(series, cov, PipelineConfig())
    assert len(kept) == 243 and not dropped


def test_malformed_csv_reports_line(tmp_path):
    s = tmp_path / "series.csv"
    s.write_text("unit_id,calendar_index,value\na,0,0.1\na,one,0.2\n")
    e = tmp_path / "events.csv"
    e.write_text("unit_id,event_index\na,0\n")
    with pytest.raises(ValueError, match=":3:"):
        load_series(s, e)


# --- synthetic generator --------------------------------------------------


def test_generator_noise_free_trend_recovery():
    cfg = SyntheticConfig(n_units=12, noise_sd=0.0, seasonal_amplitude=(0.0, 0.0))
    series, _, truth = generate_synthetic(cfg, 5)
    curves = truth.curves()
    for s, c in zip(series, curves):
        err = np.sqrt(np.mean((extract_trend(s) - c) ** 2))
        assert err <= 1e-3 * np.ptp(c)


def test_generator_is_deterministic(tmp_path):
    for d in ("a", "b"):
        assert main(["synth", "--out", str(tmp_path / d), "--seed", "9", "--n-units", "15"]) == 0
    for name in ("series.csv", "events.csv", "covariates.csv", "truth.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert main(["synth", "--out", str(tmp_path / "c"), "--seed", "10", "--n-units", "15"]) == 0
    assert (tmp_path / "c" / "series.csv").read_bytes() != (tmp_path / "a" / "series.csv").read_bytes()


def test_generator_shapes_match_default_grid():
    ds, raw, truth = generate_functional(SyntheticConfig(), 1)
    assert ds.n == 243 and ds.grid.n_points == 182 and raw.n == 243
    assert truth.oracle_r2() > 0


# --- reports and run ------------------------------------------------------


def test_mean_report_fields():
    ds, _, truth = generate_functional(SyntheticConfig(n_units=50, noise_sd=0.0), 2)
    r = mean_report(ds)
    m = truth.curves().mean(axis=0)
    assert r["value_start"] == pytest.approx(m[0], abs=1e-12)
    assert r["value_end"] == pytest.approx(m[-1], abs=1e-12)
    assert r["global_mean"] == pytest.approx(m.mean(), abs=1e-12)
    assert r["total_recovery"] == pytest.approx(m[-1] - m[0], abs=1e-12)
    assert r["t_start"] == 0 and r["t_end"] == pytest.approx(181 / 26)


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    cfg = root / "config.json"
    cfg.write_text(json.dumps({"synthetic": {"n_units": 40}, "n_basis_t": 6, "n_basis_x": 6,
                               "groups": [["elevation"], ["ndvi_pre"], ["landcover"]]}))
    out = root / "out"
    code = main(["run", "--config", str(cfg), "--out", str(out), "--seed", "42",
                 "--log-file", str(root / "run.log")])
    return code, out, root


def test_run_smoke(small_run):
    code, out, root = small_run
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(ARTIFACTS) == 7 and manifest["artifacts"] == list(ARTIFACTS)
    for name in ARTIFACTS:
        assert (out / name).exists(), name
    assert manifest["seed"] == 42 and len(manifest["config_sha256"]) == 64
    assert {"numpy", "scipy", "fdrecovery"} <= set(manifest["versions"])
    for rel, digest in manifest["files"].items():
        assert (out / rel).is_file()
    assert "stage fit finished" in (root / "run.log").read_text()


def test_run_sweep_csv_layout(small_run):
    _, out, _ = small_run
    with (out / "sweep.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["group", "members"] + KINDS + ["selected"]
    assert [r[0] for r in rows[1:]] == ["elevation", "ndvi_pre", "landcover"]


def test_stage_subcommands_reproduce_run(small_run, tmp_path):
    _, out, _ = small_run
    inputs = out / "inputs"
    common = ["--covariates", str(inputs / "covariates.csv"), "--categorical", "landcover"]
    assert main(["decompose", "--series", str(inputs / "series.csv"), "--events", str(inputs / "events.csv"),
                 "--out", str(tmp_path / "dec")] + common) == 0
    assert (tmp_path / "dec" / "dataset.csv").read_bytes() == (out / "dataset.csv").read_bytes()
    assert main(["align", "--decompositions", str(out / "decompositions"), "--events", str(inputs / "events.csv"),
                 "--out", str(tmp_path / "al")]) == 0
    np.testing.assert_array_equal(read_dataset(tmp_path / "al" / "dataset.csv").curves,
                                  read_dataset(out / "dataset.csv").curves)
    assert main(["fpca", "--dataset", str(out / "dataset.csv"), "--out", str(tmp_path / "fp")]) == 0
    assert (tmp_path / "fp" / "fpca.json").read_bytes() == (out / "fpca.json").read_bytes()
    groups = json.dumps([["elevation"], ["ndvi_pre"], ["landcover"]])
    fit_args = ["--dataset", str(out / "dataset.csv"), "--groups", groups,
                "--n-basis-t", "6", "--n-basis-x", "6"] + common
    assert main(["sweep", "--out", str(tmp_path / "sw")] + fit_args) == 0
    assert (tmp_path / "sw" / "sweep.csv").read_bytes() == (out / "sweep.csv").read_bytes()
    assert main(["fit", "--sweep", str(out / "sweep.csv"), "--out", str(tmp_path / "fit")] + fit_args) == 0
    assert (tmp_path / "fit" / "fit.json").read_bytes() == (out / "fit.json").read_bytes()


def test_fit_with_spec_file(small_run, tmp_path):
    _, out, _ = small_run
    inputs = out / "inputs"
    code = main(["fit", "--dataset", str(out / "dataset.csv"), "--covariates", str(inputs / "covariates.csv"),
                 "--categorical", "landcover", "--spec", str(out / "model_spec.json"), "--out", str(tmp_path)])
    assert code == 0
    assert "explained_variability" in json.loads((tmp_path / "fit.json").read_text())


# --- exit codes -----------------------------------------------------------


def test_exit_code_validation(tmp_path):
    assert main(["run", "--series", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "o"),
                 "--log-file", str(tmp_path / "l.log")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text('{"no_such_key": 1}')
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == 1
    bad.write_text("{not json")
    assert main(["synth", "--config", str(bad), "--out", str(tmp_path / "o")]) == 1


def test_exit_code_numerical(small_run, tmp_path):
    _, out, _ = small_run
    ds = read_dataset(out / "dataset.csv")
    x = np.random.default_rng(0).normal(size=ds.n)
    cov = CovariateTable.from_mapping({"a": x, "b": 2 * x}, ds.unit_ids)
    cov.write_csv(tmp_path / "cov.csv")
    spec = {"terms": [{"covariate": "intercept", "kind": "intercept"},
                      {"covariate": "a", "kind": "linear"}, {"covariate": "b", "kind": "linear"}]}
    (tmp_path / "spec.json").write_text(json.dumps(spec))
    assert main(["fit", "--dataset", str(out / "dataset.csv"), "--covariates", str(tmp_path / "cov.csv"),
                 "--spec", str(tmp_path / "spec.json"), "--out", str(tmp_path / "f")]) == 2


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--help"])
    assert info.value.code == 0
    text = capsys.readouterr().out
    for name in ("synth", "decompose", "align", "fpca", "sweep", "fit", "run"):
        assert name in text
