"""Seeded synthetic recovery data with a known generating model.

The generator draws raw covariates, standardizes them on the sample, and
builds each unit's post-event effect curve as

    beta0(t) + s_smooth(z1) + beta(t) z2 + s_vps(z2) + landcover effect

Raw effect series add a per-unit seasonal sinusoid, Gaussian noise and a
pre-event segment that is zero plus noise.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .covariates import CovariateTable
from .decompose import RawSeries
from .grid import FunctionalDataset, TimeGrid

LANDCOVER_EFFECTS = {
    "Evergreen Forest": 0.0,
    "Shrub/Scrub": 0.012,
    "Grassland/Herbaceous": -0.015,
    "Other": 0.02,
}
LANDCOVER_PROBS = (0.45, 0.3, 0.17, 0.08)


@dataclass(frozen=True)
class SyntheticConfig:
    n_units: int = 243
    years_pre: int = 5
    years_post: int = 7
    points_per_year: int = 26
    noise_sd: float = 0.01
    seasonal_amplitude: tuple = (0.02, 0.08)
    intercept: tuple = (-0.08, 0.005)  # beta0(t) = a + b t
    smooth_scale: float = 0.05  # s(z1) = c tanh(z1)
    varying_slope: float = 0.02  # beta(t) = c t / years_post
    vps_scale: float = 0.03  # s(z2) = c sin(z2)
    landcover: bool = True
    missing_fraction: float = 0.0

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid.from_years(self.years_post, self.points_per_year)


@dataclass(frozen=True, eq=False)
class SyntheticTruth:
    """Everything needed to evaluate the generating model for one draw."""

    config: SyntheticConfig
    seed: int
    z_smooth: np.ndarray
    z_vps: np.ndarray
    landcover: np.ndarray
    amplitude: np.ndarray
    phase: np.ndarray
    noise: np.ndarray = field(repr=False)

    def beta0(self, t):
        a, b = self.config.intercept
        return a + b * np.asarray(t, dtype=float)

    def s_smooth(self, z):
        return self.config.smooth_scale * np.tanh(np.asarray(z, dtype=float))

    def beta_varying(self, t):
        return self.config.varying_slope * np.asarray(t, dtype=float) / self.config.years_post

    def s_vps(self, z):
        return self.config.vps_scale * np.sin(np.asarray(z, dtype=float))

    def factor_effects(self) -> np.ndarray:
        if not self.config.landcover:
            return np.zeros(self.z_smooth.size)
        return np.array([LANDCOVER_EFFECTS[v] for v in self.landcover])

    def curves(self) -> np.ndarray:
        """Noise-free post-event curves, one row per unit."""
        t = self.config.grid.values
        return (
            self.beta0(t)[None, :]
            + self.s_smooth(self.z_smooth)[:, None]
            + self.z_vps[:, None] * self.beta_varying(t)[None, :]
            + self.s_vps(self.z_vps)[:, None]
            + self.factor_effects()[:, None]
        )

    def identified(self) -> dict:
        """Generating components under the fitted model's constraints.

        Smooths sum to zero over the sample, the varying coefficient sums to
        zero over the grid (its mean moves into ``s_vps`` as a linear part),
        and the intercept absorbs the removed constants.
        """
        t = self.config.grid.values
        beta = self.beta_varying(t)
        beta_mean = float(beta.mean())
        s1_mean = float(self.s_smooth(self.z_smooth).mean())
        s2_mean = float((self.s_vps(self.z_vps) + beta_mean * self.z_vps).mean())
        return {
            "beta0": lambda tt: self.beta0(tt) + s1_mean + s2_mean
            + float(self.z_vps.mean()) * (self.beta_varying(tt) - beta_mean),
            "s_smooth": lambda z: self.s_smooth(z) - s1_mean,
            "beta_varying": lambda tt: self.beta_varying(tt) - beta_mean,
            "s_vps": lambda z: self.s_vps(z) + beta_mean * np.asarray(z) - s2_mean,
            "factor": {k: v for k, v in LANDCOVER_EFFECTS.items() if k != "Evergreen Forest"},
        }

    def oracle_r2(self) -> float:
        """Percent of response variance explained by the true curves (realized noise)."""
        y = self.curves() + self.noise
        return 100.0 * (1.0 - float(np.sum(self.noise**2)) / float(np.sum((y - y.mean()) ** 2)))

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "config": asdict(self.config),
            "model": {
                "beta0": "intercept[0] + intercept[1] * t",
                "s_smooth": "smooth_scale * tanh(z_elevation)",
                "beta_varying": "varying_slope * t / years_post",
                "s_vps": "vps_scale * sin(z_ndvi_pre)",
                "landcover": LANDCOVER_EFFECTS if self.config.landcover else {},
                "seasonal": "amplitude_i * sin(2 pi j / points_per_year + phase_i)",
            },
            "amplitude": self.amplitude.tolist(),
            "phase": self.phase.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _draw(config: SyntheticConfig, rng: np.random.Generator):
    n = config.n_units
    ids = tuple(f"U{i:04d}" for i in range(n))
    elevation = rng.normal(1500.0, 450.0, n)
    ndvi_pre = rng.uniform(0.15, 0.75, n)
    rain = rng.gamma(4.0, 0.5, n)  # unrelated to the response
    numeric = {"elevation": elevation, "ndvi_pre": ndvi_pre, "rain": rain}
    categorical = {}
    landcover = np.array(["Evergreen Forest"] * n, dtype=object)
    if config.landcover:
        landcover = rng.choice(np.array(list(LANDCOVER_EFFECTS), dtype=object), size=n, p=LANDCOVER_PROBS)
        categorical["landcover"] = landcover
    raw = CovariateTable(ids, numeric, categorical,
                         {"landcover": "Evergreen Forest"} if config.landcover else {})
    z = raw.standardize()
    amplitude = rng.uniform(*config.seasonal_amplitude, n)
    phase = rng.uniform(0.0, 2.0 * np.pi, n)
    return raw, z, landcover, amplitude, phase


def generate_functional(config: SyntheticConfig = SyntheticConfig(), seed: int = 42):
    """Post-event curves with i.i.d. noise (no seasonal, no pre-event segment).

    Returns ``(dataset, raw covariates, truth)``.
    """
    rng = np.random.default_rng(seed)
    raw, z, landcover, amplitude, phase = _draw(config, rng)
    grid = config.grid
    noise = rng.normal(0.0, config.noise_sd, (config.n_units, grid.n_points))
    truth = SyntheticTruth(config, seed, z.numeric["elevation"], z.numeric["ndvi_pre"],
                           landcover, amplitude, phase, noise)
    ds = FunctionalDataset(grid, truth.curves() + noise, raw.unit_ids)
    return ds, raw, truth


def generate_synthetic(config: SyntheticConfig = SyntheticConfig(), seed: int = 42):
    """Raw effect series with seasonality, noise and a pre-event segment.

    Returns ``(series list, raw covariates, truth)``; ``truth.noise`` holds
    the post-event noise draws.
    """
    rng = np.random.default_rng(seed)
    raw, z, landcover, amplitude, phase = _draw(config, rng)
    ppy = config.points_per_year
    n_pre = config.years_pre * ppy
    n_post = config.years_post * ppy
    length = n_pre + n_post
    noise = rng.normal(0.0, config.noise_sd, (config.n_units, length))
    miss = rng.uniform(size=(config.n_units, length)) < config.missing_fraction
    # Event calendar indices vary so seasonal phases differ after alignment.
    offsets = rng.integers(0, ppy, config.n_units)
    truth = SyntheticTruth(config, seed, z.numeric["elevation"], z.numeric["ndvi_pre"],
                           landcover, amplitude, phase, noise[:, n_pre:])
    post = truth.curves()
    series = []
    for i, uid in enumerate(raw.unit_ids):
        cal = offsets[i] + np.arange(length)
        effect = np.concatenate([np.zeros(n_pre), post[i]])
        seasonal = amplitude[i] * np.sin(2.0 * np.pi * cal / ppy + phase[i])
        y = effect + seasonal + noise[i]
        keep = ~miss[i]
        keep[n_pre] = True
        series.append(RawSeries(uid, cal[keep], y[keep], int(cal[n_pre])))
    return series, raw, truth
