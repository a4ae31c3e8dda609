"""Synthetic city generator for end-to-end pipeline testing.

Produces parcels, census block groups, service lines and water tests whose
headline statistics (nondetect share, share under 5 ppb, upper percentiles,
repeat-test correlation, vacancy and submission rates) are calibrated to
configurable targets. Alongside the CSVs it keeps a GroundTruth object with
the latent risk and true submission propensity of every parcel, so estimators
can be checked against the actual generating process.

Outcome model: a test at parcel i reads 0 with probability pi_i, otherwise
floor(exp(lambda_i + season_m + noise)), where lambda_i is a risk-shifted
log-location with a per-parcel random effect and the noise is a two-scale
normal mixture (the heavy component supplies the far tail). The free
parameters (location intercept, zero-inflation intercept, heavy-tail share
and scale) are solved by least squares so the pooled test-weighted CDF
passes through the five configured quantile targets, subject to the
within-test variance budget implied by the requested repeat-test
correlation of log values. A share of the zero mass is frozen at the parcel
level (homes with no lead source at all), which keeps repeat readings of
the same home in agreement; corr 1 means zero per-test noise, in which case
every draw is frozen at its parcel value and repeat tests agree exactly.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares
from scipy.special import expit, logit
from scipy.stats import norm

from .records import CensusBlockRecord, ParcelRecord, ServiceLineRecord, WaterTestRecord

DEFAULT_MONTHS = [f"2016-{m:02d}" for m in range(1, 13)]
FULL_CITY_PARCELS = 55857

# generator shape constants, frozen after calibrating against the default targets
_UNDER5_TARGET = 0.80
_PARCEL_EFFECT_SD = 0.65   # unobservable per-parcel log effect
_RISK_SLOPE = 1.15         # log-location shift per unit of latent risk
_ZERO_RISK_SLOPE = 0.9     # zero-inflation drops with latent risk
_ZERO_PARCEL_SHARE = 0.40  # share of each parcel's zero mass frozen at the parcel level
_VALUE_PROPENSITY = 0.4    # higher-value parcels submit more tests
_AGE_PROPENSITY = 0.15     # older parcels submit slightly fewer
_RISK_W_VALUE = 0.55
_RISK_W_LINE = 0.50
_RISK_W_IDIO = 0.35

_CENSUS_FIELDS = [
    "population", "households", "median_age", "white_population",
    "black_population", "married_family_households", "single_parent_households",
    "english_only_households", "median_household_income", "median_rent",
    "owner_occupied_households",
]

_SUFFIX_LONG = {
    "ST": "STREET", "AVE": "AVENUE", "RD": "ROAD", "DR": "DRIVE",
    "BLVD": "BOULEVARD", "CT": "COURT", "LN": "LANE", "PL": "PLACE",
}
_DIR_LONG = {"N": "NORTH", "S": "SOUTH", "E": "EAST", "W": "WEST"}

_STREET_NAMES = [
    "ELM", "OAK", "MAPLE", "CEDAR", "WALNUT", "CHERRY", "ASH", "BIRCH",
    "SPRUCE", "HICKORY", "WILLOW", "SYCAMORE", "CHESTNUT", "POPLAR",
    "MAGNOLIA", "DOGWOOD", "JUNIPER", "LAUREL", "HAWTHORN", "ALDER",
    "MAIN", "PARK", "LAKE", "HILL", "RIVER", "RIDGE", "VALLEY", "FOREST",
    "MEADOW", "GARDEN", "SUNSET", "HIGHLAND", "UNION", "LIBERTY",
    "WASHINGTON", "JEFFERSON", "MADISON", "MONROE", "JACKSON", "LINCOLN",
    "GRANT", "HARRISON", "CLEVELAND", "FRANKLIN", "KENNEDY", "SAGINAW",
    "DETROIT", "GENESEE", "FLUSHING", "CORUNNA", "DUPONT", "CLIO",
    "FENTON", "BALLENGER", "DORT", "CENTER", "AVERILL", "CAMDEN",
    "BENNETT", "NEWALL",
]
_SUFFIX_CYCLE = ["ST", "AVE", "RD", "DR", "BLVD", "CT", "LN", "PL"]
_DIR_CYCLE = [None, "N", "S", None, "E", None, "W", None]


@dataclass
class SynthConfig:
    n_parcels: int = 5000
    vacancy_rate: float = 0.42
    submit_base_rate: float = 0.336
    nondetect_rate: float = 0.50
    p95_target: float = 28.0
    p99_target: float = 180.0
    p999_target: float = 2100.0
    repeat_test_log_correlation: float = 0.465
    year_built_effect: float = 0.8
    seed: int = 0
    sentinel_rate: float = 0.01
    extra_tests_mean: float = 2.0
    season_amplitude: float = 0.15
    sentinel_noise_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.n_parcels < 1:
            raise ValueError(f"n_parcels must be positive, got {self.n_parcels}")
        for name in ("vacancy_rate", "submit_base_rate", "nondetect_rate", "sentinel_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if not 0.0 < self.p95_target < self.p99_target < self.p999_target:
            raise ValueError(
                "infeasible percentile targets: need 0 < p95 < p99 < p999, got "
                f"{self.p95_target}, {self.p99_target}, {self.p999_target}"
            )
        if not 0.0 < self.repeat_test_log_correlation <= 1.0:
            raise ValueError("repeat_test_log_correlation must be in (0, 1]")
        if self.year_built_effect < 0:
            raise ValueError("year_built_effect must be nonnegative")
        if self.extra_tests_mean < 0 or self.sentinel_noise_scale < 0:
            raise ValueError("rate knobs must be nonnegative")


@dataclass
class GroundTruth:
    """Per-parcel generating quantities, kept for oracle tests only."""

    parcel_ids: list[str]
    latent_risk: np.ndarray
    true_propensity: np.ndarray      # annual P(>=1 voluntary submission); 0 when vacant
    occupied: np.ndarray
    year_built: np.ndarray           # float with NaN where the record is missing
    log_location: np.ndarray         # lambda_i, includes the parcel random effect
    zero_prob: np.ndarray
    test_sigma: float                # light per-test noise sd
    heavy_share: float
    heavy_sigma: float               # heavy per-test noise sd
    season: dict[str, float] = field(default_factory=dict)
    true_p90: dict[str, int] = field(default_factory=dict)

    def zero_split(self) -> tuple[np.ndarray, np.ndarray]:
        """Decompose zero_prob into (parcel-level, per-test) components.

        A parcel is source-free with probability a; otherwise each test still
        reads zero with probability c, chosen so a + (1-a)c equals zero_prob.
        """
        a = _ZERO_PARCEL_SHARE * self.zero_prob
        with np.errstate(invalid="ignore"):
            c = self.zero_prob * (1.0 - _ZERO_PARCEL_SHARE) / (1.0 - a)
        return a, c


@dataclass
class SynthCity:
    config: SynthConfig
    parcels: list[ParcelRecord]
    census: list[CensusBlockRecord]
    lines: list[ServiceLineRecord]
    truth: GroundTruth


@dataclass
class TestDraw:
    records: list[WaterTestRecord]
    sample_parcels: dict[str, str]   # sample_id -> generating parcel_id


def _standardize(x: np.ndarray) -> np.ndarray:
    sd = float(np.std(x))
    if sd < 1e-12:
        return np.zeros_like(x, dtype=float)
    return (x - float(np.mean(x))) / sd


def _render_address(rng: np.random.Generator, house: int, direction: str | None,
                    name: str, suffix: str) -> str:
    """One of many cosmetic spellings that normalize to the same key."""
    u = rng.random(5)
    suf = _SUFFIX_LONG[suffix] if u[0] < 0.35 else suffix + ("." if u[1] < 0.25 else "")
    d = ""
    if direction is not None:
        d = _DIR_LONG[direction] if u[2] < 0.30 else direction + ("." if u[2] > 0.85 else "")
    parts = [str(house)] + ([d] if d else []) + [name, suf]
    text = " ".join(parts)
    if u[3] < 0.30:
        text = text.lower()
    elif u[3] < 0.55:
        text = text.title()
    if u[4] < 0.06:
        text += f" APT {1 + int(u[4] * 100)}"
    return text


def _street_parts(i: int) -> tuple[int, str | None, str, str]:
    k = i % len(_STREET_NAMES)
    house = 100 + 2 * (i // len(_STREET_NAMES))
    return house, _DIR_CYCLE[k % len(_DIR_CYCLE)], _STREET_NAMES[k], _SUFFIX_CYCLE[k % len(_SUFFIX_CYCLE)]


def canonical_address(i: int) -> str:
    house, direction, name, suffix = _street_parts(i)
    d = f"{direction} " if direction else ""
    return f"{house} {d}{name} {suffix}"


def _solve_propensity_intercept(offsets: np.ndarray, target: float) -> float:
    """Bisection for c with mean(expit(c + offsets)) == target."""
    lo, hi = -20.0, 20.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if float(np.mean(expit(mid + offsets))) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _pooled_cdf(thresholds: np.ndarray, mu: np.ndarray, pi: np.ndarray,
                weights: np.ndarray, sigma_light: float, sigma_heavy: float,
                heavy_share: float) -> np.ndarray:
    """Test-weighted population CDF of the continuous outcome at thresholds."""
    log_t = np.log(thresholds)[:, None]
    s1 = max(sigma_light, 1e-12)
    s2 = max(sigma_heavy, 1e-12)
    body = (1.0 - heavy_share) * norm.cdf((log_t - mu) / s1) \
        + heavy_share * norm.cdf((log_t - mu) / s2)
    per_parcel = pi + (1.0 - pi) * body
    return per_parcel @ weights / float(weights.sum())


def _solve_outcome(risk: np.ndarray, weights: np.ndarray, config: SynthConfig
                   ) -> tuple[np.ndarray, np.ndarray, float, float, float]:
    """Quantile-match the outcome parameters to the five configured targets.

    Free parameters: location intercept, zero-inflation intercept, heavy
    share, heavy noise sd. The light noise sd is not free: the repeat-test
    correlation fixes the total within-test variance at
    between * (1/corr - 1), and the light component gets whatever the heavy
    component leaves. Returns per-parcel (mu, pi) plus
    (sigma_light, heavy_share, sigma_heavy). The parcel random effect is
    folded into the CDF analytically here and drawn by the caller afterwards.
    """
    rho = config.repeat_test_log_correlation
    between = _RISK_SLOPE ** 2 + _PARCEL_EFFECT_SD ** 2
    within_budget = between * (1.0 / rho - 1.0)
    thresholds = np.array([1.0, 5.0, config.p95_target, config.p99_target, config.p999_target])
    targets = np.array([config.nondetect_rate, _UNDER5_TARGET, 0.95, 0.99, 0.999])
    res_weights = np.array([1.5, 2.0, 2.0, 1.5, 1.0])

    def locs(m0, z0):
        mu = m0 + _RISK_SLOPE * risk
        pi = np.clip(expit(z0 - _ZERO_RISK_SLOPE * risk), 0.005, 0.995)
        return mu, pi

    if within_budget <= 1e-12:
        # degenerate zero-noise config: only the body targets are solvable
        def residual0(x):
            mu, pi = locs(*x)
            f = _pooled_cdf(thresholds[:2], mu, pi, weights, _PARCEL_EFFECT_SD,
                            _PARCEL_EFFECT_SD, 0.0)
            return f - targets[:2]

        fit = least_squares(residual0, np.array([0.8, 0.0]),
                            bounds=([-4.0, -8.0], [4.0, 4.0]), xtol=1e-12, ftol=1e-12)
        mu, pi = locs(*fit.x)
        return mu, pi, 0.0, 0.0, 0.0

    def unpack(x):
        m0, z0, hs, sigma_h = x
        light_var = (within_budget - hs * sigma_h ** 2) / max(1.0 - hs, 1e-9)
        sigma_e = math.sqrt(max(light_var, 1e-12))
        mu, pi = locs(m0, z0)
        s1 = math.hypot(_PARCEL_EFFECT_SD, sigma_e)
        s2 = math.hypot(_PARCEL_EFFECT_SD, sigma_h)
        return mu, pi, sigma_e, hs, sigma_h, s1, s2, max(-light_var, 0.0)

    def residual(x):
        mu, pi, _, hs, _, s1, s2, overdraw = unpack(x)
        f = _pooled_cdf(thresholds, mu, pi, weights, s1, s2, hs)
        return np.append((f - targets) * res_weights, 10.0 * overdraw)

    x0 = np.array([0.5, logit(np.clip(config.nondetect_rate * 0.6, 0.01, 0.95)), 0.12, 2.8])
    fit = least_squares(
        residual, x0,
        bounds=([-4.0, -8.0, 0.001, 0.3], [4.0, 4.0, 0.45, 6.0]),
        xtol=1e-12, ftol=1e-12,
    )
    mu, pi, sigma_e, hs, sigma_h, _, _, _ = unpack(fit.x)
    return mu, pi, sigma_e, hs, sigma_h


def generate_city(config: SynthConfig) -> SynthCity:
    """Draw the full parcel/census/service-line universe plus ground truth."""
    n = config.n_parcels
    root = np.random.SeedSequence(config.seed)
    city_ss, _tests_ss = root.spawn(2)
    rng = np.random.default_rng(city_ss)

    # neighborhoods: contiguous runs of parcels share a block group
    n_bg = max(1, n // 55)
    bg_of = np.minimum(np.arange(n) // 55, n_bg - 1)
    bg_quality = rng.standard_normal(n_bg)
    quality = bg_quality[bg_of]

    # construction year: old-skewed mixture
    u = rng.random(n)
    year = np.empty(n, dtype=int)
    year[u < 0.35] = rng.integers(1885, 1930, size=int((u < 0.35).sum()))
    band = (u >= 0.35) & (u < 0.75)
    year[band] = rng.integers(1930, 1960, size=int(band.sum()))
    band = (u >= 0.75) & (u < 0.95)
    year[band] = rng.integers(1960, 1986, size=int(band.sum()))
    band = u >= 0.95
    year[band] = rng.integers(1986, 2016, size=int(band.sum()))
    year_missing = rng.random(n) < 0.04
    year_f = year.astype(float)

    # assessed values; newer and better-neighborhood parcels are worth more
    newness = (year - 1950) / 35.0
    ln_building = 10.0 + 0.45 * quality + 0.30 * newness + 0.38 * rng.standard_normal(n)
    building = np.round(np.exp(ln_building))
    land = np.round(np.exp(8.3 + 0.30 * quality + 0.50 * rng.standard_normal(n)))
    sev = np.round(0.5 * (building + land) * np.exp(0.08 * rng.standard_normal(n)))
    improvements = np.where(
        rng.random(n) < 0.35, 0.0,
        np.round(np.exp(7.5 + 0.70 * rng.standard_normal(n))),
    )
    acres = np.round(np.exp(-1.75 + 0.35 * rng.standard_normal(n)), 4)

    grid = int(math.ceil(math.sqrt(n)))
    lat = np.round(42.96 + 0.0015 * (np.arange(n) // grid) + 1e-4 * rng.random(n), 6)
    lon = np.round(-83.75 + 0.0018 * (np.arange(n) % grid) + 1e-4 * rng.random(n), 6)

    # occupancy: tilted so cheap parcels sit vacant more often, mean preserved
    value_pct = np.argsort(np.argsort(ln_building)) / max(n - 1, 1)
    p_vacant = np.clip(config.vacancy_rate * (1.5 - value_pct), 0.0, 1.0)
    vacant = rng.random(n) < p_vacant
    occupied = ~vacant

    u_usps = rng.random(n)
    u_cond = rng.random(n)
    cond_pick = rng.random(n)
    usps: list[bool | None] = [None] * n
    condition: list[str | None] = [None] * n
    for i in range(n):
        if occupied[i]:
            if u_usps[i] < 0.88:
                usps[i] = True
                if u_cond[i] < 0.75:
                    condition[i] = "good" if cond_pick[i] < 0.45 else ("fair" if cond_pick[i] < 0.80 else "poor")
            else:
                # no postal signal, so the survey grade carries occupancy
                condition[i] = "good" if cond_pick[i] < 0.45 else ("fair" if cond_pick[i] < 0.80 else "poor")
        else:
            if u_usps[i] < 0.70:
                usps[i] = False
            if u_cond[i] < 0.55:
                condition[i] = "vacant"

    u_class = rng.random(n)
    prop_class = [
        ("residential_improved" if u_class[i] < 0.93 else ("commercial" if u_class[i] < 0.98 else "industrial"))
        if occupied[i] else
        ("residential_vacant_lot" if u_class[i] < 0.50 else ("residential_improved" if u_class[i] < 0.90 else "commercial"))
        for i in range(n)
    ]

    # service lines: older parcels more likely to have lead on either segment
    oldness = np.clip((1945.0 - year_f) / 30.0, -1.5, 2.5)
    has_line = rng.random(n) < 0.92
    pub_lead = rng.random(n) < expit(-1.1 + 1.1 * oldness)
    priv_lead = rng.random(n) < expit(-1.3 + 1.0 * oldness)
    alt_pick = rng.random(n)
    conf_pick = rng.random(n)

    def _alt_material(u: float) -> str:
        if u < 0.60:
            return "copper"
        if u < 0.85:
            return "galvanized"
        return "plastic" if u < 0.95 else "other"

    lines: list[ServiceLineRecord] = []
    line_lead = np.zeros(n)
    for i in range(n):
        if not has_line[i]:
            continue
        pub = "lead" if pub_lead[i] else _alt_material(alt_pick[i])
        priv = "lead" if priv_lead[i] else _alt_material(1.0 - alt_pick[i])
        conf = "recorded" if conf_pick[i] < 0.55 else ("inferred" if conf_pick[i] < 0.85 else "unknown")
        lines.append(ServiceLineRecord(f"P{i:06d}", pub, priv, conf))
        line_lead[i] = 1.0 if (pub == "lead" or priv == "lead") else 0.0

    # census aggregates per block group
    gnoise = rng.standard_normal((n_bg, 8))
    census: list[CensusBlockRecord] = []
    for b in range(n_bg):
        q = bg_quality[b]
        pop = max(40.0, round(137.0 * math.exp(0.18 * gnoise[b, 0])))
        hh = max(20.0, round(pop / 2.6 * math.exp(0.10 * gnoise[b, 1])))
        white_share = expit(0.2 + 0.8 * q + 0.3 * gnoise[b, 2])
        agg = {
            "population": pop,
            "households": hh,
            "median_age": round(33.0 + 4.0 * gnoise[b, 3], 1),
            "white_population": round(pop * white_share),
            "black_population": round(pop * (1.0 - white_share) * 0.85),
            "married_family_households": round(hh * expit(-0.1 + 0.5 * q)),
            "single_parent_households": round(hh * expit(-1.2 - 0.4 * q)),
            "english_only_households": round(hh * 0.92),
            "median_household_income": round(math.exp(10.35 + 0.42 * q + 0.08 * gnoise[b, 4])),
            "median_rent": max(150.0, round(280.0 * math.exp(0.25 * q) + 40.0 * gnoise[b, 5])),
            "owner_occupied_households": round(hh * expit(0.3 + 0.6 * q)),
        }
        census.append(CensusBlockRecord(f"G{b:05d}", {k: float(agg[k]) for k in _CENSUS_FIELDS}))

    # latent risk: old, cheap, lead-connected parcels run hot
    age_raw = (1945.0 - year_f) / 25.0
    age_raw[year_missing] = float(np.mean(age_raw[~year_missing])) if (~year_missing).any() else 0.0
    age_std = _standardize(age_raw)
    val_std = _standardize(ln_building)
    line_std = _standardize(line_lead)
    risk_raw = (
        config.year_built_effect * age_std
        - _RISK_W_VALUE * val_std
        + _RISK_W_LINE * line_std
        + _RISK_W_IDIO * rng.standard_normal(n)
    )
    risk = _standardize(risk_raw)

    # annual submission propensity over occupied parcels
    prop_offsets = _VALUE_PROPENSITY * val_std - _AGE_PROPENSITY * age_std
    propensity = np.zeros(n)
    if occupied.any():
        if config.submit_base_rate >= 1.0:
            propensity[occupied] = 1.0
        elif config.submit_base_rate > 0.0:
            c0 = _solve_propensity_intercept(prop_offsets[occupied], config.submit_base_rate)
            propensity[occupied] = np.clip(expit(c0 + prop_offsets[occupied]), 1e-4, 0.999)

    # outcome calibration on the occupied, test-weighted population
    weights = propensity[occupied] * (1.0 + config.extra_tests_mean) \
        + config.sentinel_rate * len(DEFAULT_MONTHS)
    if not occupied.any() or weights.sum() <= 0:
        weights = np.ones(max(int(occupied.sum()), 1))
    mu_occ, pi_occ, sigma_e, heavy_share, heavy_sigma = _solve_outcome(
        risk[occupied] if occupied.any() else risk[:1], weights, config)
    mu = np.empty(n)
    pi = np.empty(n)
    mu[:] = np.nan
    pi[:] = np.nan
    if occupied.any():
        mu[occupied] = mu_occ
        pi[occupied] = pi_occ
    log_location = mu + _PARCEL_EFFECT_SD * rng.standard_normal(n)

    addr_rng = np.random.default_rng(city_ss.spawn(1)[0])
    parcels: list[ParcelRecord] = []
    miss = rng.random((n, 5))
    for i in range(n):
        house, direction, name, suffix = _street_parts(i)
        parcels.append(ParcelRecord(
            parcel_id=f"P{i:06d}",
            address_raw=_render_address(addr_rng, house, direction, name, suffix),
            year_built=None if year_missing[i] else int(year[i]),
            land_value=None if miss[i, 0] < 0.03 else float(land[i]),
            building_value=None if miss[i, 1] < 0.03 else float(building[i]),
            home_sev=None if miss[i, 2] < 0.02 else float(sev[i]),
            land_improvements_value=float(improvements[i]),
            parcel_acres=None if miss[i, 3] < 0.04 else float(acres[i]),
            latitude=float(lat[i]),
            longitude=float(lon[i]),
            census_tract=f"T{bg_of[i] // 3:04d}",
            block_group=f"G{bg_of[i]:05d}",
            block=f"G{bg_of[i]:05d}B{i % 4}",
            usps_active=usps[i],
            housing_condition_2014=condition[i],
            property_class=prop_class[i],
        ))

    truth = GroundTruth(
        parcel_ids=[p.parcel_id for p in parcels],
        latent_risk=risk,
        true_propensity=propensity,
        occupied=occupied,
        year_built=np.where(year_missing, np.nan, year_f),
        log_location=log_location,
        zero_prob=pi,
        test_sigma=sigma_e,
        heavy_share=heavy_share,
        heavy_sigma=heavy_sigma,
    )
    return SynthCity(config=config, parcels=parcels, census=census, lines=lines, truth=truth)


def _season_shift(month: str, amplitude: float) -> float:
    m = int(month[5:7])
    return amplitude * math.cos(2.0 * math.pi * (m - 8) / 12.0)


def _true_p90(truth: GroundTruth, shift: float) -> int:
    """Smallest integer k whose floor-rounded population CDF reaches 0.9."""
    occ = truth.occupied
    mu = truth.log_location[occ] + shift
    pi = truth.zero_prob[occ]
    s1 = max(truth.test_sigma, 1e-12)
    s2 = max(truth.heavy_sigma, 1e-12)

    def cdf_at(k: int) -> float:
        t = math.log(k + 1.0)
        body = (1.0 - truth.heavy_share) * norm.cdf((t - mu) / s1) \
            + truth.heavy_share * norm.cdf((t - mu) / s2)
        return float(np.mean(pi + (1.0 - pi) * body))

    hi = 1
    while cdf_at(hi) < 0.9:
        hi *= 2
        if hi > 10 ** 7:
            raise RuntimeError("population p90 search exceeded 1e7 ppb")
    lo = 0
    while lo < hi:
        mid = (lo + hi) // 2
        if cdf_at(mid) >= 0.9:
            hi = mid
        else:
            lo = mid + 1
    return lo


def generate_tests(city: SynthCity, months: list[str] | None = None) -> TestDraw:
    """Draw voluntary submissions plus the sentinel panel for the given months.

    Submitting parcels are a Bernoulli draw on true propensity; each submitter
    contributes 1 + Poisson(extra_tests_mean) tests at uniform months, so a
    parcel's chance of appearing in any given month is proportional to its
    propensity. Sentinel sites are a uniform subsample of occupied parcels
    tested every month. Fills in the season shifts and true monthly p90.
    """
    config = city.config
    months = sorted(months if months is not None else DEFAULT_MONTHS)
    truth = city.truth
    n = len(truth.parcel_ids)
    frozen = config.repeat_test_log_correlation >= 1.0

    root = np.random.SeedSequence(config.seed)
    _city_ss, tests_ss = root.spawn(2)
    rng = np.random.default_rng(tests_ss)

    truth.season = {m: 0.0 if frozen else _season_shift(m, config.season_amplitude)
                    for m in months}
    truth.true_p90 = {m: _true_p90(truth, truth.season[m]) for m in months}

    submit = rng.random(n) < truth.true_propensity
    extra = rng.poisson(config.extra_tests_mean, size=n)
    occ_idx = np.flatnonzero(truth.occupied)
    n_sent = int(round(config.sentinel_rate * len(occ_idx)))
    sentinel_idx = set()
    if n_sent > 0:
        sentinel_idx = set(int(j) for j in rng.choice(occ_idx, size=n_sent, replace=False))

    events: list[tuple[int, str, str]] = []  # (parcel index, month, source)
    for i in range(n):
        if submit[i]:
            for _ in range(1 + int(extra[i])):
                events.append((i, months[int(rng.integers(0, len(months)))], "residential"))
        if i in sentinel_idx:
            for m in months:
                events.append((i, m, "sentinel"))

    zero_a, zero_c = truth.zero_split()
    with np.errstate(invalid="ignore"):
        parcel_zero = rng.random(n) < zero_a
    frozen_u = rng.random(n) if frozen else None

    records: list[WaterTestRecord] = []
    sample_parcels: dict[str, str] = {}
    for seq, (i, month, source) in enumerate(events):
        day = int(rng.integers(1, 29))
        u_zero = frozen_u[i] if frozen else rng.random()
        heavy = rng.random() < truth.heavy_share
        eps = rng.standard_normal()
        if parcel_zero[i] or u_zero < zero_c[i]:
            lead = 0
        else:
            scale = truth.heavy_sigma if heavy else truth.test_sigma
            if source == "sentinel":
                scale *= config.sentinel_noise_scale
            lead = int(math.exp(truth.log_location[i] + truth.season[month] + scale * eps))
        u_cu = rng.random()
        copper = None if u_cu < 0.08 else int(math.exp(1.0 + 0.9 * rng.standard_normal()))
        house, direction, name, suffix = _street_parts(i)
        sid = f"S{seq:06d}"
        records.append(WaterTestRecord(
            sample_id=sid,
            address_raw=_render_address(rng, house, direction, name, suffix),
            sample_date=dt.date(int(month[:4]), int(month[5:7]), day),
            lead_ppb=lead,
            copper_ppb=copper,
            source=source,
        ))
        sample_parcels[sid] = truth.parcel_ids[i]

    records.sort(key=lambda r: (r.sample_date, r.sample_id))
    return TestDraw(records=records, sample_parcels=sample_parcels)


def inject_selection_bias(city: SynthCity, strength: float) -> SynthCity:
    """Scale down submission propensity for pre-1930 parcels by strength.

    strength 1 leaves the city untouched; 0 silences pre-1930 parcels
    entirely. Parcels with unknown construction year are unaffected. The
    recorded true monthly p90 does not move: it describes the outcome
    distribution, which selection cannot change.
    """
    if not 0.0 <= strength <= 1.0:
        raise ValueError(f"bias strength must be in [0, 1], got {strength}")
    truth = city.truth
    old = ~np.isnan(truth.year_built) & (truth.year_built < 1930)
    truth.true_propensity = np.where(old, truth.true_propensity * strength,
                                     truth.true_propensity)
    return city


# ---------------------------------------------------------------------------
# CSV output


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return str(int(v)) if v == int(v) and abs(v) < 1e15 else repr(v)
    return str(v)


def write_city(city: SynthCity, tests: TestDraw | None, out_dir: str | Path) -> dict[str, Path]:
    """Write the four ingest CSVs plus the ground-truth sidecars.

    Row order and number formatting are fixed, so a given city is
    byte-identical across runs.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    def _write(name: str, header: list[str], rows) -> None:
        path = out / name
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([_cell(v) for v in row])
        paths[name] = path

    _write("parcels.csv", [
        "parcel_id", "address", "year_built", "land_value", "building_value",
        "home_sev", "land_improvements", "parcel_acres", "latitude", "longitude",
        "census_tract", "block_group", "block", "usps_active", "housing_condition",
        "property_class",
    ], (
        [p.parcel_id, p.address_raw, p.year_built, p.land_value, p.building_value,
         p.home_sev, p.land_improvements_value, p.parcel_acres, p.latitude,
         p.longitude, p.census_tract, p.block_group, p.block, p.usps_active,
         p.housing_condition_2014, p.property_class]
        for p in city.parcels
    ))

    _write("census.csv", ["block_group_id"] + _CENSUS_FIELDS, (
        [c.block_group_id] + [c.aggregates.get(f) for f in _CENSUS_FIELDS]
        for c in city.census
    ))

    _write("service_lines.csv", ["parcel_id", "public_material", "private_material", "confidence"], (
        [l.parcel_id, l.public_material, l.private_material, l.record_confidence]
        for l in city.lines
    ))

    if tests is not None:
        _write("tests.csv", ["sample_id", "address", "sample_date", "lead_ppb", "copper_ppb", "source"], (
            [t.sample_id, t.address_raw, t.sample_date.isoformat(), t.lead_ppb,
             t.copper_ppb, t.source]
            for t in tests.records
        ))

    truth = city.truth
    _write("ground_truth.csv", ["parcel_id", "latent_risk", "true_propensity"], (
        [pid, repr(float(truth.latent_risk[i])), repr(float(truth.true_propensity[i]))]
        for i, pid in enumerate(truth.parcel_ids)
    ))

    if truth.true_p90:
        _write("truth_series.csv", ["month", "true_p90"], (
            [m, truth.true_p90[m]] for m in sorted(truth.true_p90)
        ))

    return paths
