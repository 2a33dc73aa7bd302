"""Helpers shared by the test modules: small fixtures and the seeded replication runner."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from censored_demand.censored import fit_censored, fit_uncensored
from censored_demand.datamodel import PRICE_COLUMN, build_design, make_split
from censored_demand.dgp import DgpConfig, generate, true_marginal_effect
from censored_demand.ensemble import fit_ensemble
from censored_demand.evaluation import bootstrap_rmse_diff, marginal_effect, rmse
from censored_demand.learners import FAMILIES

# Lighter than the library defaults so 20 full-size replications fit in test time.
ACCEPTANCE_PARAMS = {"n_lambdas": 20, "n_folds": 5, "n_trees": 50, "mtry": 33, "nodesize": 5}
ACCEPTANCE_ALPHAS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
N_REPLICATIONS = 20
N_BOOTSTRAP_SEEDS = 10

RESULT_LINES: list[str] = []


def report(criterion: str, passed: bool, detail: str) -> None:
    line = f"{criterion}: {'PASS' if passed else 'FAIL'} - {detail}"
    RESULT_LINES.append(line)
    print(line)


@dataclass
class Prepared:
    dataset: object
    truth: object
    split: object
    plan: object
    design: object

    def part(self, name):
        return self.design.select_rows(getattr(self.split, name))


def prepare(seed: int, **dgp) -> Prepared:
    dataset, truth = generate(DgpConfig(seed=seed, **dgp))
    split = make_split(len(dataset), seed=seed)
    design, plan = build_design(dataset, "fit-on-train", split)
    return Prepared(dataset, truth, split, plan, design)


def run_replication(seed: int, *, bootstrap_reps: int | None, me_reps: int,
                    oracle: bool = False) -> dict:
    """One full seeded pipeline on the n = 20000 fixture; returns only summary numbers."""
    data = prepare(seed)
    train, val, test = data.part("train"), data.part("validation"), data.part("test")
    j = data.plan.columns.index(PRICE_COLUMN)
    out = {"seed": seed, "families": {}}
    models = {"censored": [], "uncensored": []}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for i, fam in enumerate(FAMILIES):
            rs = 1000 * seed + i
            cen = fit_censored(train, val, fam, ACCEPTANCE_ALPHAS, ACCEPTANCE_PARAMS, random_state=rs)
            unc = fit_uncensored(train, fam, ACCEPTANCE_PARAMS, random_state=rs)
            models["censored"].append(cen)
            models["uncensored"].append(unc)
            out["families"][fam] = {
                "alpha": cen.alpha,
                "test_rmse_censored": rmse(cen.predict(test.X), test.y),
                "test_rmse_uncensored": rmse(unc.predict(test.X), test.y),
                "val_rmse_censored": rmse(cen.predict(val.X), val.y),
                "val_rmse_uncensored": rmse(unc.predict(val.X), val.y),
            }
            if fam == "ols":
                out["coef_censored"] = float(cen.regressor.coef_[j])
                out["coef_uncensored"] = float(unc.regressor.coef_[j])
    out["beta_true"] = data.truth.beta_price * data.plan.stds[j] / data.truth.log_price_std

    ens = {}
    for variant in ("censored", "uncensored"):
        e = fit_ensemble(models[variant], val.X, val.y, FAMILIES)
        ens[variant] = e
        member_val = [e.validation_rmse[f] for f in FAMILIES]
        out[f"ensemble_{variant}"] = {
            "weights": e.weights.tolist(),
            "val_rmse": rmse(e.predict(val.X), val.y),
            "member_val_rmse": member_val,
            "test_rmse": rmse(e.predict(test.X), test.y),
        }
    if bootstrap_reps:
        res = bootstrap_rmse_diff(ens["uncensored"], ens["censored"], test, bootstrap_reps, seed)
        out["bootstrap"] = {"point": res.point, "se": res.standard_error, "t": res.t_statistic}
    for variant in ("censored", "uncensored"):
        me = marginal_effect(ens[variant], test, PRICE_COLUMN, me_reps, seed)
        out[f"me_{variant}"] = {"mean": me.mean_effect, "se": me.standard_error}
    if oracle:
        o = true_marginal_effect(data.truth, data.dataset.take(data.split.test), plan=data.plan)
        out["oracle"] = {"effect": o.effect, "se": o.standard_error}
    return out


def write_run_config(directory, *, n=500, families=("ols", "ridge", "lasso", "random_forest"),
                     ensemble=True, replications=20, **extra):
    """A fast YAML run configuration; returns its path."""
    import yaml

    cfg = {
        "out": str(directory / "run"),
        "seed": 17,
        "threads": 1,
        "data": {"dgp": {"n": n}},
        "families": list(families),
        "learners": {
            "ridge": {"n_lambdas": 6, "n_folds": 3},
            "lasso": {"n_lambdas": 6, "n_folds": 3},
            "random_forest": {"n_trees": 8, "mtry": 10, "nodesize": 5},
        },
        "alpha_grid": [0.3, 0.5, 0.7, 1.0],
        "ensemble": ensemble,
        "evaluation": {"replications": replications, "perturbation_range": [0.01, 1.0],
                       "coefficient_replications": replications},
    }
    cfg.update(extra)
    path = directory / "config.yaml"
    path.write_text(yaml.safe_dump(cfg), encoding="utf-8")
    return path
