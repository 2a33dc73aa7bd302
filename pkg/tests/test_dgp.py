import dataclasses

import numpy as np
import pytest
from scipy import integrate, stats

from censored_demand.datamodel import write_dataset
from censored_demand.dgp import (
    DgpConfig,
    GroundTruth,
    InfeasibleConfigError,
    generate,
    latent_mean,
    latent_price_slope,
    true_marginal_effect,
)

ZERO_SD = {k: 0.0 for k in ("brand", "colour", "form", "flour", "package_type", "store_type",
                            "month", "day_of_week", "year")}


def flat_config(**over):
    """No signal apart from what ``over`` adds."""
    base = dict(n=2000, beta_price=0.0, beta_other={"weight": 0.0, "promotion": 0.0,
                                                     "holiday": 0.0},
                level_effect_sd=ZERO_SD, nonlinear_terms=(), seed=3)
    base.update(over)
    return DgpConfig(**base)


def expected_censored_mean(mu, sigma):
    """E[max(0, mu + sigma Z)] by quadrature."""
    f = lambda y: y * stats.norm.pdf(y, mu, sigma)
    return integrate.quad(f, 0.0, mu + 12 * sigma, epsabs=1e-12, epsrel=1e-12)[0]


def test_degenerate_noise_gives_rounded_intercept():
    ds, truth = generate(flat_config(noise_sd=1e-9, intercept=3.3))
    assert np.all(ds.sales == 3)
    assert truth.achieved_zero_fraction == 0.0


def test_zero_share_near_target():
    ds, truth = generate(DgpConfig(n=20000, seed=11))
    share = float(np.mean(ds.sales == 0))
    assert 0.57 <= share <= 0.63
    assert truth.achieved_zero_fraction == share


def test_byte_identical_output(tmp_path):
    cfg = DgpConfig(n=1500, seed=4)
    a, _ = write_dataset(generate(cfg)[0], tmp_path / "a" / "d.csv")
    b, _ = write_dataset(generate(cfg)[0], tmp_path / "b" / "d.csv")
    assert a.read_bytes() == b.read_bytes()


def test_seed_isolation_of_vocabularies():
    a, _ = generate(DgpConfig(n=500, seed=1))
    b, _ = generate(DgpConfig(n=500, seed=2))
    assert a.vocabularies == b.vocabularies
    assert not a.frame["sales"].equals(b.frame["sales"])


def test_invalid_and_infeasible_configs():
    with pytest.raises(ValueError):
        DgpConfig(n=0)
    with pytest.raises(ValueError):
        DgpConfig(target_zero_fraction=1.2)
    with pytest.raises(ValueError):
        DgpConfig.from_dict({"n": 10, "bogus": 1})
    # no signal, so the noise level cannot be derived from a target R^2
    with pytest.raises(InfeasibleConfigError):
        generate(flat_config(n=200))


def test_ground_truth_round_trip(tmp_path):
    _, truth = generate(DgpConfig(n=800, seed=5))
    path = truth.save(tmp_path / "truth.json")
    again = GroundTruth.load(path)
    assert again.to_dict() == truth.to_dict()
    assert again.config == truth.config


class TestOracle:
    def test_zero_coefficient(self):
        ds, truth = generate(DgpConfig(n=2000, seed=2, beta_price=0.0))
        o = true_marginal_effect(truth, ds, n_draws=50)
        assert o.effect == 0.0

    def test_uncensored_region_recovers_slope(self):
        cfg = flat_config(beta_price=-1.0, noise_sd=0.5, intercept=50.0)
        ds, truth = generate(cfg)
        o = true_marginal_effect(truth, ds, n_draws=100)
        assert abs(o.effect - (-1.0)) <= max(2 * o.standard_error, 1e-12)

    def test_censored_case_matches_tobit_quadrature(self):
        ds, truth = generate(DgpConfig(n=3000, seed=8, nonlinear_terms=()))
        rows = ds.frame.iloc[:150]
        mu = latent_mean(truth, rows)
        slope = latent_price_slope(truth, rows)
        sigma, h = truth.noise_sd, 1e-4
        # d/dx E[max(0, y*)] by central differences of the quadrature mean
        deriv = [(expected_censored_mean(m + s * h, sigma) - expected_censored_mean(m - s * h, sigma))
                 / (2 * h) for m, s in zip(mu, slope)]
        reference = float(np.mean(deriv))
        o = true_marginal_effect(truth, rows, n_draws=4000, seed=1)
        assert abs(o.effect - reference) <= 4 * o.standard_error
        assert truth.beta_price < o.effect < 0.0

    def test_monotone_in_coefficient(self):
        effects = []
        for beta in (-0.25, -0.5, -1.0, -2.0):
            cfg = DgpConfig(n=3000, seed=6, beta_price=beta, noise_sd=1.0, intercept=-0.2)
            ds, truth = generate(cfg)
            effects.append(abs(true_marginal_effect(truth, ds, n_draws=200, seed=0).effect))
        assert all(b >= a for a, b in zip(effects, effects[1:]))
        assert effects[-1] <= 2.0

    def test_attenuation_bound(self, small_fixture):
        truth = small_fixture.truth
        o = true_marginal_effect(truth, small_fixture.dataset, n_draws=100)
        assert abs(o.effect) <= abs(truth.beta_price)

    def test_plan_rescales_units(self, small_fixture):
        t, ds, plan = small_fixture.truth, small_fixture.dataset, small_fixture.plan
        raw = true_marginal_effect(t, ds, n_draws=30)
        scaled = true_marginal_effect(t, ds, plan=plan, n_draws=30)
        j = plan.columns.index("log_price")
        assert scaled.effect == pytest.approx(raw.effect * plan.stds[j] / t.log_price_std)


def test_config_dict_round_trip():
    cfg = DgpConfig(n=123, nonlinear_terms=(("price", "promotion", 0.2),))
    assert DgpConfig.from_dict(cfg.to_dict()) == cfg
    assert dataclasses.replace(cfg, seed=9).seed == 9
