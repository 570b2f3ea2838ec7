import numpy as np
import pytest

from fdrecovery.decompose import (
    InsufficientDataError,
    RawSeries,
    STLTrendExtractor,
    align_trends,
    extract_trend,
    loess_smooth,
    stl_decompose,
    stl_windows,
)
from fdrecovery.grid import TimeGrid

P = 26


def rmse(a, b):
    return float(np.sqrt(np.mean((np.asarray(a) - np.asarray(b)) ** 2)))


# --- loess ---------------------------------------------------------------


@pytest.mark.parametrize("span", [0.1, 0.3, 0.75, 1.0])
def test_loess_reproduces_linear(span):
    x = np.sort(np.random.default_rng(0).uniform(0, 10, 80))
    y = 0.3 - 1.7 * x
    np.testing.assert_allclose(loess_smooth(x, y, span, degree=1), y, atol=1e-10)


def test_loess_degree_two_reproduces_quadratic():
    x = np.linspace(-2, 3, 60)
    y = 1 + x - 0.5 * x**2
    np.testing.assert_allclose(loess_smooth(x, y, 0.3, degree=2), y, atol=1e-10)


def test_loess_constant_degree_zero():
    x = np.arange(30.0)
    np.testing.assert_allclose(loess_smooth(x, np.full(30, 5.0), 0.2, degree=0), 5.0, atol=1e-12)


def test_loess_robust_to_outlier():
    x = np.linspace(0, 1, 101)
    y = 1.0 + 2 * x**2 - x
    k = 50
    clean = loess_smooth(np.delete(x, k), np.delete(y, k), 0.3, degree=1, robust_iters=2)
    dirty_y = y.copy()
    dirty_y[k] += 5.0
    dirty = loess_smooth(x, dirty_y, 0.3, degree=1, robust_iters=2)
    ref = np.interp(x[k], np.delete(x, k), clean)
    assert abs(dirty[k] - ref) <= 0.05 * abs(ref)


def test_loess_input_errors():
    x = np.arange(10.0)
    with pytest.raises(ValueError):
        loess_smooth(x, np.r_[np.zeros(9), np.nan])
    with pytest.raises(ValueError):
        loess_smooth(x[::-1], np.zeros(10))
    with pytest.raises(ValueError):
        loess_smooth(x, np.zeros(10), span=0.1, degree=2)
    with pytest.raises(ValueError):
        loess_smooth(x, np.zeros(9))


# --- stl -----------------------------------------------------------------


def test_window_defaults():
    ns, nt, nl = stl_windows(312, P)
    assert ns % 2 == 1 and nt % 2 == 1 and nl % 2 == 1
    assert nt > 1.5 * P / (1 - 1.5 / ns)
    assert nt - 2 <= 1.5 * P / (1 - 1.5 / ns)
    assert nl >= P


def test_stl_pure_ramp():
    y = np.linspace(-0.2, 0.4, 312)
    dec = stl_decompose(y, P)
    rng_ = np.ptp(y)
    assert np.max(np.abs(dec.trend - y)) <= 1e-6 * rng_
    assert np.max(np.abs(dec.seasonal)) <= 1e-6 * rng_


def test_stl_pure_sinusoid():
    A = 0.1
    j = np.arange(312)
    s = A * np.sin(2 * np.pi * j / P)
    dec = stl_decompose(s, P)
    inner = slice(P, -P)
    assert rmse(dec.seasonal[inner], s[inner]) <= 0.01 * A
    assert rmse(dec.trend[inner], 0.0) <= 0.01 * A


def test_stl_additivity_and_recovery_with_noise():
    rng = np.random.default_rng(7)
    j = np.arange(312)
    ramp = -0.08 + 0.0002 * j
    y = ramp + 0.05 * np.sin(2 * np.pi * j / P + 0.4) + rng.normal(0, 0.01, 312)
    dec = stl_decompose(y, P)
    assert np.max(np.abs(y - (dec.trend + dec.seasonal + dec.remainder))) <= 1e-10
    assert rmse(dec.trend, ramp) <= 3 * 0.01


def test_stl_complete_cycles_balance():
    rng = np.random.default_rng(8)
    j = np.arange(300)
    y = 0.001 * j + 0.05 * np.sin(2 * np.pi * j / P) + rng.normal(0, 0.02, j.size)
    s = stl_decompose(y, P).seasonal
    cycles = s[: (s.size // P) * P].reshape(-1, P)
    assert np.max(np.abs(cycles.mean(axis=1))) <= 1e-8


def test_stl_phase_shift():
    A, k = 0.1, 9
    j = np.arange(312)
    y = A * np.sin(2 * np.pi * j / P)
    base = stl_decompose(y, P).seasonal
    shifted = stl_decompose(np.roll(y, k), P).seasonal
    assert rmse(shifted, np.roll(base, k)) <= 0.02 * A


def test_stl_missing_values():
    rng = np.random.default_rng(9)
    j = np.arange(312)
    truth = 0.0005 * j + 0.05 * np.sin(2 * np.pi * j / P)
    y = truth + rng.normal(0, 0.005, 312)
    miss = rng.choice(312, size=40, replace=False)
    y[miss] = np.nan
    dec = stl_decompose(y, P)
    ok = np.isfinite(y)
    assert np.all(np.isfinite(dec.trend)) and np.all(np.isfinite(dec.seasonal))
    assert np.max(np.abs(y[ok] - (dec.trend + dec.seasonal + dec.remainder)[ok])) <= 1e-10
    assert rmse(dec.trend, 0.0005 * j) <= 0.015


def test_stl_rejects_short_and_sparse_series():
    with pytest.raises(InsufficientDataError):
        stl_decompose(np.zeros(2 * P - 1), P)
    y = np.zeros(4 * P)
    y[::3] = np.nan
    with pytest.raises(ValueError):
        stl_decompose(y, P)


def test_stl_matches_statsmodels_without_balance():
    sm = pytest.importorskip("statsmodels.tsa.seasonal")
    rng = np.random.default_rng(10)
    j = np.arange(312)
    y = 0.0003 * j + 0.04 * np.sin(2 * np.pi * j / P + 1.0) + rng.normal(0, 0.01, 312)
    ns, nt, nl = stl_windows(y.size, P)
    ours = stl_decompose(y, P, seasonal_span=ns, trend_span=nt, robust_iters=0, balance=False)
    ref = sm.STL(y, period=P, seasonal=ns, trend=nt, low_pass=nl, seasonal_deg=1, trend_deg=1,
                 low_pass_deg=1, robust=False).fit(inner_iter=2, outer_iter=0)
    assert np.max(np.abs(ours.trend - ref.trend)) <= 1e-4
    assert np.max(np.abs(ours.seasonal - ref.seasonal)) <= 1e-4


# --- series, trends, alignment ------------------------------------------


def _series(values, event_pos, uid="u"):
    return RawSeries(uid, np.arange(len(values)) + 100, values, 100 + event_pos)


def test_raw_series_validation():
    with pytest.raises(ValueError):
        RawSeries("u", [3, 2, 1], [0, 0, 0], 2)
    with pytest.raises(ValueError):
        RawSeries("u", [1, 2, 3], [0, 0, 0], 9)
    s = RawSeries("u", [1, 2, 4, 5], [1.0, 2.0, 4.0, np.nan], 2)
    cal, y = s.regular()
    np.testing.assert_array_equal(cal, [1, 2, 3, 4, 5])
    assert np.isnan(y[2]) and np.isnan(y[4])
    assert s.missing_fraction() == pytest.approx(0.4)
    assert s.n_pre() == 1 and s.n_post() == 4


def test_extract_trend_linear_series():
    n_pre, n = 5 * P, 12 * P
    j = np.arange(n)
    y = np.where(j >= n_pre, 0.001 * (j - n_pre) - 0.05, 0.0)
    trend = extract_trend(_series(y, n_pre))
    assert trend.shape == (182,)
    np.testing.assert_allclose(trend, y[n_pre : n_pre + 182], atol=1e-8)


def test_extract_trend_seasonal_only():
    A = 0.06
    j = np.arange(12 * P)
    trend = extract_trend(_series(A * np.sin(2 * np.pi * j / P + 0.3), 5 * P))
    assert np.max(np.abs(trend)) <= 0.02 * A


def test_extract_trend_full_window_length():
    j = np.arange(12 * P)
    trend = extract_trend(_series(0.01 * np.sin(2 * np.pi * j / P), 5 * P), window="full")
    assert trend.shape == (182,)


def test_extract_trend_needs_seven_post_years():
    with pytest.raises(InsufficientDataError):
        extract_trend(_series(np.zeros(10 * P), 5 * P))


def test_align_trends():
    rng = np.random.default_rng(11)
    ds = align_trends([(f"u{i}", rng.normal(size=182)) for i in range(243)])
    assert ds.n == 243 and ds.grid == TimeGrid.from_years(7, 26)
    assert align_trends([("a", np.zeros(182))]).n == 1
    with pytest.raises(ValueError, match="b"):
        align_trends([("a", np.zeros(182)), ("b", np.zeros(181))])
    with pytest.raises(ValueError):
        align_trends([("a", np.zeros(182)), ("a", np.zeros(182))])


def test_trend_extractor_transformer():
    j = np.arange(8 * P)
    X = np.vstack([0.001 * j + 0.03 * np.sin(2 * np.pi * j / P + p) for p in (0.0, 1.0, 2.0)])
    est = STLTrendExtractor(years=7)
    out = est.fit_transform(X)
    assert out.shape == (3, 182)
    np.testing.assert_allclose(out, np.tile(0.001 * j[:182], (3, 1)), atol=2e-3)
    assert est.get_params()["window"] == "post"
