"""Synthetic censored-demand data with a known latent linear model.

Latent demand for row i is

    y*_i = c + beta_price * z_i + sum_f beta_f x_if + level effects
           + sum_(a,b) g_ab x_ia x_ib + eps_i,     eps_i ~ N(0, noise_sd^2)

where ``z`` is log-price standardized over the generated sample and
``weight`` enters standardized the same way. Observed sales are
``min(cap, round(max(0, y*)))``. The intercept ``c`` is solved so that the
share of zero sales hits ``target_zero_fraction``.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, NamedTuple

import numpy as np
import pandas as pd
from scipy.optimize import brentq

from .datamodel import CATEGORICAL, PRICE_COLUMN, Dataset, EncodingPlan, add_calendar_columns

ZERO_FRACTION_TOL = 0.03
WEIGHT_VALUES = (150, 200, 250, 300, 350, 400, 450, 500, 600, 700, 800, 900, 1000)
# fixed-date public holidays (month, day)
HOLIDAYS = frozenset([(1, d) for d in range(1, 9)] + [(2, 23), (3, 8), (5, 1), (5, 9),
                                                      (6, 12), (11, 4)])
LATENT_FEATURES = ("price", "weight", "promotion", "holiday")


class InfeasibleConfigError(ValueError):
    """The intercept search cannot reach the requested zero fraction."""


def _default_vocab_sizes():
    return {"brand": 38, "country": 6, "colour": 5, "form": 22, "flour": 8,
            "package_type": 2, "store_type": 5}


def _default_beta_other():
    return {"promotion": 1.0, "holiday": 0.4, "weight": -0.3}


def _default_level_sd():
    return {"brand": 0.5, "colour": 0.1, "form": 0.3, "flour": 0.2, "package_type": 0.2,
            "store_type": 0.4, "month": 0.1, "day_of_week": 0.15, "year": 0.1}


def _default_interactions():
    return (("promotion", "holiday", 1.0), ("weight", "promotion", 0.6))


@dataclass(frozen=True)
class DgpConfig:
    """Generator settings.

    ``noise_sd=None`` sets the noise so that the latent model's R^2 equals
    ``latent_r2``; ``intercept=None`` solves for ``target_zero_fraction``.
    ``beta_other`` holds coefficients of the standardized weight and the
    promotion/holiday indicators; categorical level effects are drawn as
    N(0, sd^2) per level from ``effects_seed`` (fixed across data seeds).
    ``nonlinear_terms`` are (feature, feature, coefficient) products over
    ``price``, ``weight``, ``promotion`` and ``holiday``.
    """

    n: int = 20000
    beta_price: float = -1.0
    beta_other: Mapping[str, float] = field(default_factory=_default_beta_other)
    level_effect_sd: Mapping[str, float] = field(default_factory=_default_level_sd)
    noise_sd: float | None = None
    latent_r2: float = 0.85
    target_zero_fraction: float = 0.6
    intercept: float | None = None
    nonlinear_terms: tuple = field(default_factory=_default_interactions)
    n_skus: int = 300
    n_stores: int = 40
    vocab_sizes: Mapping[str, int] = field(default_factory=_default_vocab_sizes)
    start_date: str = "2010-01-01"
    end_date: str = "2014-12-31"
    promotion_rate: float = 0.12
    sales_cap: int = 1000
    seed: int = 0
    effects_seed: int = 20240101

    def __post_init__(self):
        if int(self.n) < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.noise_sd is not None and not self.noise_sd > 0:
            raise ValueError("noise_sd must be > 0")
        if not 0 < self.latent_r2 < 1:
            raise ValueError("latent_r2 must lie in (0, 1)")
        if not 0 < self.target_zero_fraction < 1:
            raise ValueError("target_zero_fraction must lie in (0, 1)")
        if self.n_skus < 1 or self.n_stores < 1:
            raise ValueError("n_skus and n_stores must be >= 1")
        unknown = set(self.beta_other) - {"weight", "promotion", "holiday"}
        if unknown:
            raise ValueError(f"beta_other has unknown features {sorted(unknown)}")
        for term in self.nonlinear_terms:
            a, b, _ = term
            if a not in LATENT_FEATURES or b not in LATENT_FEATURES:
                raise ValueError(f"interaction {term!r}: features must be in {LATENT_FEATURES}")
        missing = set(CATEGORICAL) - set(self.vocab_sizes)
        if missing:
            raise ValueError(f"vocab_sizes lacks {sorted(missing)}")
        if pd.Timestamp(self.end_date) < pd.Timestamp(self.start_date):
            raise ValueError("end_date precedes start_date")
        object.__setattr__(self, "nonlinear_terms",
                           tuple((str(a), str(b), float(c)) for a, b, c in self.nonlinear_terms))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["beta_other"] = dict(self.beta_other)
        d["level_effect_sd"] = dict(self.level_effect_sd)
        d["vocab_sizes"] = dict(self.vocab_sizes)
        d["nonlinear_terms"] = [list(t) for t in self.nonlinear_terms]
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "DgpConfig":
        d = dict(d)
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown dgp settings {sorted(unknown)}")
        if "nonlinear_terms" in d:
            d["nonlinear_terms"] = tuple(tuple(t) for t in d["nonlinear_terms"])
        return cls(**d)


@dataclass(frozen=True)
class GroundTruth:
    """Everything needed to recompute the latent mean of any row."""

    config: DgpConfig
    intercept: float
    noise_sd: float
    level_effects: Mapping[str, Mapping[str, float]]
    log_price_mean: float
    log_price_std: float
    weight_mean: float
    weight_std: float
    achieved_zero_fraction: float
    achieved_latent_r2: float

    @property
    def beta_price(self) -> float:
        return float(self.config.beta_price)

    def to_dict(self) -> dict:
        return {
            "beta_price": self.beta_price,
            "beta_other": dict(self.config.beta_other),
            "nonlinear_terms": [list(t) for t in self.config.nonlinear_terms],
            "intercept": self.intercept,
            "noise_sd": self.noise_sd,
            "achieved_zero_fraction": self.achieved_zero_fraction,
            "achieved_latent_r2": self.achieved_latent_r2,
            "log_price_mean": self.log_price_mean,
            "log_price_std": self.log_price_std,
            "weight_mean": self.weight_mean,
            "weight_std": self.weight_std,
            "level_effects": {k: dict(v) for k, v in self.level_effects.items()},
            "config": self.config.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "GroundTruth":
        return cls(
            config=DgpConfig.from_dict(d["config"]),
            intercept=float(d["intercept"]),
            noise_sd=float(d["noise_sd"]),
            level_effects={k: {lv: float(e) for lv, e in v.items()}
                           for k, v in d["level_effects"].items()},
            log_price_mean=float(d["log_price_mean"]),
            log_price_std=float(d["log_price_std"]),
            weight_mean=float(d["weight_mean"]),
            weight_std=float(d["weight_std"]),
            achieved_zero_fraction=float(d["achieved_zero_fraction"]),
            achieved_latent_r2=float(d["achieved_latent_r2"]),
        )

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n",
                        encoding="utf-8")
        return path

    @classmethod
    def load(cls, path) -> "GroundTruth":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def vocabularies(config: DgpConfig) -> dict[str, tuple[str, ...]]:
    """Level names depend only on the configured sizes, never on the seed."""
    prefix = {"brand": "B", "country": "C", "colour": "COL", "form": "F", "flour": "FL",
              "package_type": "PK", "store_type": "ST"}
    vocab = {var: tuple(f"{prefix[var]}{i + 1:02d}" for i in range(int(config.vocab_sizes[var])))
             for var in CATEGORICAL}
    y0, y1 = pd.Timestamp(config.start_date).year, pd.Timestamp(config.end_date).year
    vocab["year"] = tuple(str(y) for y in range(y0, y1 + 1))
    return vocab


def _features(frame: pd.DataFrame, truth_stats) -> dict[str, np.ndarray]:
    lp_mean, lp_std, w_mean, w_std = truth_stats
    return {
        "price": (np.log(frame["price"].to_numpy(dtype=np.float64)) - lp_mean) / lp_std,
        "weight": (frame["weight"].to_numpy(dtype=np.float64) - w_mean) / w_std,
        "promotion": frame["promotion"].to_numpy(dtype=np.float64),
        "holiday": frame["holiday"].to_numpy(dtype=np.float64),
    }


def _signal(config, level_effects, frame, stats) -> np.ndarray:
    feats = _features(frame, stats)
    s = config.beta_price * feats["price"]
    for name, coef in config.beta_other.items():
        s = s + coef * feats[name]
    for var, effects in level_effects.items():
        s = s + frame[var].astype(str).map(effects).fillna(0.0).to_numpy(dtype=np.float64)
    for a, b, coef in config.nonlinear_terms:
        s = s + coef * feats[a] * feats[b]
    return s


def _zero_fraction(latent_without_c, c):
    return float(np.mean(np.round(np.maximum(0.0, latent_without_c + c)) == 0))


def generate(config: DgpConfig) -> tuple[Dataset, GroundTruth]:
    """Draw a dataset; deterministic given ``config``."""
    rng = np.random.default_rng(config.seed)
    eff_rng = np.random.default_rng(config.effects_seed)
    vocab = vocabularies(config)
    n = int(config.n)

    # world structure shared by every data seed
    level_effects = {}
    for var in CATEGORICAL + ("year", "month", "day_of_week"):
        sd = float(config.level_effect_sd.get(var, 0.0))
        levels = vocab.get(var) or (tuple(str(m) for m in range(1, 13)) if var == "month"
                                    else tuple(str(d) for d in range(7)))
        draws = eff_rng.normal(0.0, 1.0, len(levels)) * sd
        if sd > 0:
            level_effects[var] = {lv: float(e) for lv, e in zip(levels, draws)}
    brand_country = eff_rng.integers(0, len(vocab["country"]), len(vocab["brand"]))

    # catalogue: SKUs and stores
    k = config.n_skus
    sku_brand = rng.integers(0, len(vocab["brand"]), k)
    sku_attr = {
        "brand": np.asarray(vocab["brand"])[sku_brand],
        "country": np.asarray(vocab["country"])[brand_country[sku_brand]],
    }
    for var in ("colour", "form", "flour", "package_type"):
        sku_attr[var] = np.asarray(vocab[var])[rng.integers(0, len(vocab[var]), k)]
    sku_weight = np.asarray(WEIGHT_VALUES, dtype=np.float64)[rng.integers(0, len(WEIGHT_VALUES), k)]
    sku_price_dev = rng.normal(0.0, 0.3, k)
    store_type = np.asarray(vocab["store_type"])[rng.integers(0, len(vocab["store_type"]),
                                                              config.n_stores)]
    store_price_dev = rng.normal(0.0, 0.05, config.n_stores)

    # rows
    sku = rng.integers(0, k, n)
    store = rng.integers(0, config.n_stores, n)
    start = pd.Timestamp(config.start_date)
    span = (pd.Timestamp(config.end_date) - start).days + 1
    dates = start + pd.to_timedelta(rng.integers(0, span, n), unit="D")
    promotion = (rng.random(n) < config.promotion_rate).astype(np.int64)
    holiday = np.fromiter(((d.month, d.day) in HOLIDAYS for d in dates), dtype=bool,
                          count=n).astype(np.int64)
    weight = sku_weight[sku]
    log_price = (np.log(40.0) + 0.6 * np.log(weight / 400.0) + sku_price_dev[sku]
                 + store_price_dev[store] + rng.normal(0.0, 0.1, n) - 0.2 * promotion)
    price = np.round(np.exp(log_price), 2)
    price = np.maximum(price, 0.01)

    frame = pd.DataFrame({
        "sku_id": np.char.add("SKU", np.char.zfill((sku + 1).astype(str), 4)),
        "store_id": np.char.add("S", np.char.zfill((store + 1).astype(str), 3)),
        "date": dates,
        "sales": np.zeros(n, dtype=np.int64),
        "price": price,
        "weight": weight,
        "promotion": promotion,
        **{var: sku_attr[var][sku] for var in ("brand", "country", "colour", "form", "flour",
                                              "package_type")},
        "store_type": store_type[store],
        "holiday": holiday,
    })
    frame = add_calendar_columns(frame)

    lp = np.log(price)
    stats = (float(lp.mean()), float(lp.std()), float(weight.mean()), float(weight.std()))
    if not stats[1] > 0:
        stats = (stats[0], 1.0, stats[2], stats[3])
    if not stats[3] > 0:
        stats = (stats[0], stats[1], stats[2], 1.0)
    signal = _signal(config, level_effects, frame, stats)
    sig_sd = float(signal.std())
    if config.noise_sd is not None:
        noise_sd = float(config.noise_sd)
    else:
        if not sig_sd > 0:
            raise InfeasibleConfigError("signal is constant; set noise_sd explicitly")
        noise_sd = sig_sd * np.sqrt((1.0 - config.latent_r2) / config.latent_r2)
    eps = rng.normal(0.0, noise_sd, n)
    base = signal + eps

    if config.intercept is not None:
        intercept = float(config.intercept)
    else:
        target = config.target_zero_fraction
        lo = 0.5 - base.max() - 1.0   # every row rounds to zero
        hi = 0.5 - base.min() + 1.0   # no row rounds to zero
        g = lambda c: _zero_fraction(base, c) - target
        if not (g(lo) > 0 > g(hi)):
            raise InfeasibleConfigError("cannot bracket the target zero fraction")
        intercept = float(brentq(g, lo, hi, xtol=1e-12, maxiter=500))
        achieved = _zero_fraction(base, intercept)
        if abs(achieved - target) > ZERO_FRACTION_TOL:
            raise InfeasibleConfigError(
                f"closest achievable zero fraction {achieved:.4f} is more than "
                f"{ZERO_FRACTION_TOL} from the target {target}")

    latent = intercept + base
    sales = np.minimum(config.sales_cap, np.round(np.maximum(0.0, latent))).astype(np.int64)
    frame["sales"] = sales
    r2 = 1.0 - noise_sd ** 2 / (sig_sd ** 2 + noise_sd ** 2) if sig_sd > 0 else 0.0
    truth = GroundTruth(
        config=config, intercept=intercept, noise_sd=noise_sd, level_effects=level_effects,
        log_price_mean=stats[0], log_price_std=stats[1], weight_mean=stats[2],
        weight_std=stats[3], achieved_zero_fraction=float(np.mean(sales == 0)),
        achieved_latent_r2=float(r2),
    )
    return Dataset(frame, vocab), truth


def latent_mean(truth: GroundTruth, frame: pd.DataFrame) -> np.ndarray:
    """Noise-free latent demand of each row."""
    stats = (truth.log_price_mean, truth.log_price_std, truth.weight_mean, truth.weight_std)
    return truth.intercept + _signal(truth.config, truth.level_effects, frame, stats)


def latent_price_slope(truth: GroundTruth, frame: pd.DataFrame) -> np.ndarray:
    """d(latent mean)/d(standardized log-price) per row, including interaction terms."""
    stats = (truth.log_price_mean, truth.log_price_std, truth.weight_mean, truth.weight_std)
    feats = _features(frame, stats)
    slope = np.full(len(frame), truth.beta_price)
    for a, b, coef in truth.config.nonlinear_terms:
        if a == "price":
            slope = slope + coef * feats[b]
        if b == "price":
            slope = slope + coef * feats[a]
    return slope


class OracleEffect(NamedTuple):
    effect: float
    standard_error: float


def price_scale(truth: GroundTruth, plan: EncodingPlan | None) -> float:
    """Generator-standardized log-price units per design log-price unit."""
    if plan is None:
        return 1.0
    j = plan.columns.index(PRICE_COLUMN)
    return plan.stds[j] / truth.log_price_std


def true_marginal_effect(truth: GroundTruth, at, *, plan: EncodingPlan | None = None,
                         n_draws: int = 400, seed: int = 0) -> OracleEffect:
    """Monte Carlo average of dE[max(0, y*)]/d(log-price) over the rows ``at``.

    ``at`` is a :class:`Dataset` or a frame of raw rows. The derivative of
    ``E[max(0, y*)]`` with respect to a regressor is the latent slope times
    ``P(y* > 0)``; each draw averages ``slope_i * 1{y*_i > 0}`` over rows.
    Units are the generator's standardized log-price, or the design's
    standardized log-price when ``plan`` is given.
    """
    frame = at.frame if isinstance(at, Dataset) else at
    mu = latent_mean(truth, frame)
    slope = latent_price_slope(truth, frame) * price_scale(truth, plan)
    rng = np.random.default_rng(seed)
    draws = np.empty(n_draws)
    for b in range(n_draws):
        positive = mu + rng.normal(0.0, truth.noise_sd, mu.size) > 0
        draws[b] = float(np.mean(slope * positive))
    se = float(draws.std(ddof=1) / np.sqrt(n_draws)) if n_draws > 1 else float("nan")
    return OracleEffect(float(draws.mean()), se)
