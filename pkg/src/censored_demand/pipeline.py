"""Run configuration and the generate / fit / evaluate / report stages.

A run directory looks like::

    <out>/config.yaml            resolved configuration of the last stage run
    <out>/manifest.json          seeds and library versions
    <out>/data/dataset.csv       (+ dataset.vocab.json, ground_truth.json when generated)
    <out>/split.json, encoding_plan.json
    <out>/models/<family>_censored.npz, <family>_uncensored.npz
    <out>/models/ensemble_censored.json, ensemble_uncensored.json
    <out>/fit_summary.json
    <out>/evaluation.json
    <out>/report.json, report.txt
"""
from __future__ import annotations

import copy
import json
import logging
import math
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

from . import __version__
from ._validation import child_seed, resolve_threads
from .censored import fit_censored, fit_uncensored
from .datamodel import (
    DEFAULT_FRACTIONS,
    PRICE_COLUMN,
    EncodingPlan,
    SplitIndices,
    build_design,
    load_dataset,
    make_split,
    write_dataset,
)
from .dgp import DgpConfig, GroundTruth, generate, true_marginal_effect
from .ensemble import fit_ensemble
from .evaluation import (
    bootstrap_rmse_diff,
    marginal_effect,
    ols_coefficient_bootstrap,
    rmse,
)
from .learners import FAMILIES
from .serialization import load_ensemble, load_model, save_ensemble, save_model

log = logging.getLogger("censored_demand")

VARIANTS = ("censored", "uncensored")
_SEED_SLOT = {"split": 1, "models": 2, "evaluation": 3}


class ConfigError(ValueError):
    """Invalid run configuration or missing inputs."""


def _default_learners():
    return {
        "ridge": {"n_lambdas": 100, "lambda_ratio": 1e-4, "n_folds": 10},
        "lasso": {"n_lambdas": 100, "lambda_ratio": 1e-4, "n_folds": 10},
        "random_forest": {"n_trees": 50, "mtry": "cv", "nodesize": 5, "cv_folds": 5},
    }


def _default_evaluation():
    return {"replications": 1000, "perturbation_range": [0.01, 1.0],
            "coefficient_replications": 1000}


@dataclass
class RunConfig:
    """Everything a run depends on; ``to_dict`` round-trips through YAML.

    ``data_path`` points to an existing CSV; when absent the generator
    settings in ``dgp`` are used and ``generate`` writes the data into the run
    directory. ``seed`` is the root of all randomness (split, learners,
    bootstrap) unless ``split_seed`` overrides the split.
    """

    out: str = "run"
    seed: int = 0
    threads: int = 0
    data_path: str | None = None
    dgp: dict = field(default_factory=dict)
    split_fractions: tuple = DEFAULT_FRACTIONS
    split_seed: int | None = None
    families: tuple = FAMILIES
    learners: dict = field(default_factory=_default_learners)
    alpha_grid: list | None = None
    ensemble: bool = True
    evaluation: dict = field(default_factory=_default_evaluation)

    def __post_init__(self):
        self.families = tuple(self.families)
        bad = [f for f in self.families if f not in FAMILIES]
        if bad or not self.families:
            raise ConfigError(f"families must be a nonempty subset of {FAMILIES}, got {bad or '[]'}")
        if len(set(self.families)) != len(self.families):
            raise ConfigError("families contains duplicates")
        unknown = set(self.learners) - set(FAMILIES)
        if unknown:
            raise ConfigError(f"learner settings for unknown families {sorted(unknown)}")
        self.split_fractions = tuple(float(f) for f in self.split_fractions)
        ev = _default_evaluation()
        ev.update(self.evaluation or {})
        unknown = set(ev) - set(_default_evaluation())
        if unknown:
            raise ConfigError(f"unknown evaluation settings {sorted(unknown)}")
        if int(ev["replications"]) < 2 or int(ev["coefficient_replications"]) < 2:
            raise ConfigError("replications must be >= 2")
        self.evaluation = ev
        try:
            self.dgp_config()
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"dgp: {exc}") from exc

    def dgp_config(self) -> DgpConfig:
        return DgpConfig.from_dict({"seed": self.seed, **(self.dgp or {})})

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    def to_dict(self) -> dict:
        return {
            "out": str(self.out), "seed": int(self.seed), "threads": int(self.threads),
            "data": {"path": self.data_path, "dgp": dict(self.dgp or {})},
            "split": {"fractions": list(self.split_fractions), "seed": self.split_seed},
            "families": list(self.families),
            "learners": copy.deepcopy(self.learners),
            "alpha_grid": self.alpha_grid,
            "ensemble": bool(self.ensemble),
            "evaluation": dict(self.evaluation),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RunConfig":
        d = dict(d or {})
        known = {"out", "seed", "threads", "data", "split", "families", "learners",
                 "alpha_grid", "ensemble", "evaluation"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        data = d.get("data") or {}
        split = d.get("split") or {}
        learners = _default_learners()
        for fam, params in (d.get("learners") or {}).items():
            learners.setdefault(fam, {}).update(params or {})
        kwargs = dict(
            out=d.get("out", "run"), seed=int(d.get("seed", 0)),
            threads=int(d.get("threads", 0)), data_path=data.get("path"),
            dgp=dict(data.get("dgp") or {}),
            split_fractions=tuple(split.get("fractions", DEFAULT_FRACTIONS)),
            split_seed=split.get("seed"), families=tuple(d.get("families", FAMILIES)),
            learners=learners, alpha_grid=d.get("alpha_grid"),
            ensemble=bool(d.get("ensemble", True)), evaluation=dict(d.get("evaluation") or {}),
        )
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = yaml.safe_load(path.read_text(encoding="utf-8"))
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML ({exc})") from exc
        if raw is not None and not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        return cls.from_dict(raw or {})

    def dump(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(yaml.safe_dump(self.to_dict(), sort_keys=True), encoding="utf-8")
        return path


# ---------------------------------------------------------------- helpers

def _write_json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n",
                    encoding="utf-8")
    return path


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _read_json(path: Path, what: str):
    if not path.exists():
        raise ConfigError(f"missing {what}: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: corrupt {what} ({exc})") from exc


def _dataset_path(cfg: RunConfig) -> Path:
    return Path(cfg.data_path) if cfg.data_path else cfg.out_dir / "data" / "dataset.csv"


def _truth_path(cfg: RunConfig) -> Path:
    return _dataset_path(cfg).with_name("ground_truth.json")


def _family_seed(cfg: RunConfig, family: str) -> int:
    # keyed by the family's fixed index so subsets of families keep their seeds
    return child_seed(cfg.seed, _SEED_SLOT["models"], FAMILIES.index(family))


def _split_seed(cfg: RunConfig) -> int:
    if cfg.split_seed is not None:
        return int(cfg.split_seed)
    return child_seed(cfg.seed, _SEED_SLOT["split"])


def _write_manifest(cfg: RunConfig, stage: str):
    import numba
    import pandas
    import scipy
    import sklearn
    path = cfg.out_dir / "manifest.json"
    manifest = json.loads(path.read_text(encoding="utf-8")) if path.exists() else {}
    manifest.update({
        "package_version": __version__,
        "python": platform.python_version(),
        "versions": {"numpy": np.__version__, "scipy": scipy.__version__,
                     "pandas": pandas.__version__, "scikit-learn": sklearn.__version__,
                     "numba": numba.__version__, "pyyaml": yaml.__version__},
        "seeds": {"root": cfg.seed, "split": _split_seed(cfg),
                  "models": {f: _family_seed(cfg, f) for f in cfg.families},
                  "evaluation": child_seed(cfg.seed, _SEED_SLOT["evaluation"])},
    })
    manifest.setdefault("stages", [])
    if stage not in manifest["stages"]:
        manifest["stages"].append(stage)
    _write_json(path, manifest)
    cfg.dump(cfg.out_dir / "config.yaml")


class _Timer:
    def __init__(self, label):
        self.label = label

    def __enter__(self):
        self.t0 = time.perf_counter()
        log.info("%s ...", self.label)
        return self

    def __exit__(self, *exc):
        if exc[0] is None:
            log.info("%s done in %.1fs", self.label, time.perf_counter() - self.t0)


# ---------------------------------------------------------------- stages

def run_generate(cfg: RunConfig) -> dict[str, Path]:
    """Write the synthetic dataset, its vocabulary and the ground truth."""
    dgp_cfg = cfg.dgp_config()
    target = _dataset_path(cfg)
    with _Timer(f"generating {dgp_cfg.n} rows"):
        dataset, truth = generate(dgp_cfg)
    csv, vocab = write_dataset(dataset, target)
    truth_file = truth.save(_truth_path(cfg))
    _write_manifest(cfg, "generate")
    log.info("zero fraction %.4f, latent R^2 %.3f", truth.achieved_zero_fraction,
             truth.achieved_latent_r2)
    return {"dataset": csv, "vocabulary": vocab, "ground_truth": truth_file}


@dataclass
class PreparedData:
    dataset: Any
    split: SplitIndices
    plan: EncodingPlan
    design: Any

    def part(self, name: str):
        return self.design.select_rows(getattr(self.split, name))


def prepare_data(cfg: RunConfig, plan: EncodingPlan | None = None,
                 split: SplitIndices | None = None) -> PreparedData:
    path = _dataset_path(cfg)
    if not path.exists():
        hint = "" if cfg.data_path else " (run the generate command first)"
        raise ConfigError(f"dataset not found: {path}{hint}")
    dataset = load_dataset(path)
    if split is None:
        split = make_split(len(dataset), cfg.split_fractions, _split_seed(cfg))
    design, plan = build_design(dataset, plan if plan is not None else "fit-on-train", split)
    return PreparedData(dataset, split, plan, design)


def _model_path(cfg, family, variant) -> Path:
    return cfg.out_dir / "models" / f"{family}_{variant}.npz"


def _ensemble_path(cfg, variant) -> Path:
    return cfg.out_dir / "models" / f"ensemble_{variant}.json"


def _learner_params(cfg: RunConfig, family: str) -> dict:
    params = dict(cfg.learners.get(family, {}))
    if family == "random_forest":
        params.setdefault("n_threads", resolve_threads(cfg.threads))
    return params


def run_fit(cfg: RunConfig) -> dict:
    """Fit censored and uncensored models per family plus both ensembles."""
    data = prepare_data(cfg)
    _write_json(cfg.out_dir / "split.json", data.split.to_dict())
    _write_json(cfg.out_dir / "encoding_plan.json", data.plan.to_dict())
    train, val = data.part("train"), data.part("validation")
    threads = resolve_threads(cfg.threads)
    names = data.plan.columns
    models: dict[str, dict] = {v: {} for v in VARIANTS}
    summary: dict[str, Any] = {"columns": list(names), "dropped_columns": data.plan.dropped,
                               "rows": {"train": len(train), "validation": len(val),
                                        "test": len(data.split.test)},
                               "models": {}}
    for fam in cfg.families:
        seed = _family_seed(cfg, fam)
        params = _learner_params(cfg, fam)
        with _Timer(f"{fam}: censored fit"):
            models["censored"][fam] = fit_censored(train, val, fam, cfg.alpha_grid, params,
                                                   random_state=seed, n_threads=threads)
        with _Timer(f"{fam}: uncensored fit"):
            models["uncensored"][fam] = fit_uncensored(train, fam, params, random_state=seed)
        for variant in VARIANTS:
            m = models[variant][fam]
            save_model(m, _model_path(cfg, fam, variant), names, seed)
            summary["models"][f"{fam}_{variant}"] = {
                "alpha": m.alpha, "alpha_profile": [list(p) for p in m.alpha_profile],
                "skipped_alphas": list(m.skipped_alphas), "regressor_rows": m.regressor_rows,
                "validation_rmse": rmse(m.predict(val.X), val.y),
            }
    if cfg.ensemble:
        summary["ensembles"] = {}
        for variant in VARIANTS:
            fams = list(cfg.families)
            ens = fit_ensemble([models[variant][f] for f in fams], val.X, val.y, fams, threads)
            save_ensemble(ens, _ensemble_path(cfg, variant),
                          [_model_path(cfg, f, variant) for f in fams])
            summary["ensembles"][variant] = {
                "weights": dict(zip(fams, ens.weights.tolist())),
                "member_validation_rmse": dict(ens.validation_rmse),
                "validation_rmse": rmse(ens.predict(val.X), val.y),
                "degenerate": ens.degenerate,
            }
    _write_json(cfg.out_dir / "fit_summary.json", summary)
    _write_manifest(cfg, "fit")
    return summary


def load_fitted(cfg: RunConfig) -> dict[str, Any]:
    """Models of a fitted run keyed by ``<family>_<variant>`` / ``ensemble_<variant>``."""
    out = {}
    for fam in cfg.families:
        for variant in VARIANTS:
            out[f"{fam}_{variant}"] = load_model(_model_path(cfg, fam, variant))[0]
    if cfg.ensemble:
        for variant in VARIANTS:
            out[f"ensemble_{variant}"] = load_ensemble(_ensemble_path(cfg, variant))
    return out


def run_evaluate(cfg: RunConfig) -> dict:
    """RMSE per split, bootstrap RMSE-difference tests, marginal effects, price coefficients."""
    split = SplitIndices.from_dict(_read_json(cfg.out_dir / "split.json", "split"))
    plan = EncodingPlan.from_dict(_read_json(cfg.out_dir / "encoding_plan.json", "encoding plan"))
    data = prepare_data(cfg, plan, split)
    models = load_fitted(cfg)
    parts = {name: data.part(name) for name in ("train", "validation", "test")}
    test = parts["test"]
    ev = cfg.evaluation
    reps = int(ev["replications"])
    rng_root = child_seed(cfg.seed, _SEED_SLOT["evaluation"])
    threads = resolve_threads(cfg.threads)
    price_j = plan.columns.index(PRICE_COLUMN) if PRICE_COLUMN in plan.columns else None

    result: dict[str, Any] = {"rmse": {}, "alpha": {}, "bootstrap": {}, "marginal_effect": {},
                              "coefficients": {}, "weights": {}}
    for key, model in models.items():
        result["rmse"][key] = {name: rmse(model.predict(p.X), p.y) for name, p in parts.items()}
        if hasattr(model, "alpha"):
            result["alpha"][key] = model.alpha
    for variant in VARIANTS:
        ens = models.get(f"ensemble_{variant}")
        if ens is not None:
            result["weights"][variant] = dict(zip(ens.names, ens.weights.tolist()))

    rows = [f for f in cfg.families] + (["ensemble"] if cfg.ensemble else [])
    for i, row in enumerate(rows):
        with _Timer(f"{row}: bootstrap RMSE difference"):
            res = bootstrap_rmse_diff(models[f"{row}_uncensored"], models[f"{row}_censored"], test,
                                      reps, child_seed(rng_root, 0, i), threads)
        result["bootstrap"][row] = res.to_dict()

    if price_j is None:
        log.warning("log-price column was dropped from the design; no marginal effects")
    else:
        lo, hi = ev["perturbation_range"]
        for i, row in enumerate(rows):
            for v, variant in enumerate(VARIANTS):
                key = f"{row}_{variant}"
                with _Timer(f"{key}: marginal effect"):
                    me = marginal_effect(models[key], test, PRICE_COLUMN, reps,
                                         child_seed(rng_root, 1, i, v), (lo, hi),
                                         n_threads=threads)
                result["marginal_effect"][key] = me.to_dict()
        if "ols" in cfg.families:
            train = parts["train"]
            for v, variant in enumerate(VARIANTS):
                m = models[f"ols_{variant}"]
                keep = m.classifier.predict_proba(train.X)[:, 1] <= m.alpha
                coef = ols_coefficient_bootstrap(
                    train.X[keep], train.y[keep], train.groups[keep], price_j,
                    int(ev["coefficient_replications"]), child_seed(rng_root, 2, v), threads)
                d = coef.to_dict()
                d["estimate"] = float(m.regressor.coef_[price_j])
                result["coefficients"][f"ols_{variant}"] = d

    truth_file = _truth_path(cfg)
    if truth_file.exists() and price_j is not None:
        truth = GroundTruth.load(truth_file)
        oracle = true_marginal_effect(truth, data.dataset.take(split.test), plan=plan,
                                      seed=child_seed(rng_root, 3))
        result["oracle"] = {
            "beta_price": truth.beta_price * plan.stds[price_j] / truth.log_price_std,
            "marginal_effect": oracle.effect, "marginal_effect_se": oracle.standard_error,
        }
    _write_json(cfg.out_dir / "evaluation.json", result)
    _write_manifest(cfg, "evaluate")
    return result


# ---------------------------------------------------------------- report

def _fmt(x, digits=4):
    return "NA" if x is None or (isinstance(x, float) and not math.isfinite(x)) else f"{x:.{digits}f}"


def _table(header, rows) -> str:
    cells = [header] + rows
    widths = [max(len(str(r[j])) for r in cells) for j in range(len(header))]
    line = lambda r: "  ".join(str(c).ljust(w) if j == 0 else str(c).rjust(w)
                               for j, (c, w) in enumerate(zip(r, widths)))
    return "\n".join([line(header), "  ".join("-" * w for w in widths)] + [line(r) for r in rows])


def build_report(cfg: RunConfig, evaluation: dict) -> tuple[dict, str]:
    rows = list(cfg.families) + (["ensemble"] if cfg.ensemble else [])
    rm = evaluation["rmse"]
    report = {"rmse_test": {}, "rmse_validation": {}, "alpha": {}, "weights": evaluation["weights"],
              "bootstrap": evaluation["bootstrap"], "marginal_effect": evaluation["marginal_effect"],
              "coefficients": evaluation["coefficients"], "oracle": evaluation.get("oracle")}
    for r in rows:
        report["rmse_test"][r] = {v: rm[f"{r}_{v}"]["test"] for v in VARIANTS}
        report["rmse_validation"][r] = {v: rm[f"{r}_{v}"]["validation"] for v in VARIANTS}
        if r != "ensemble":
            report["alpha"][r] = evaluation["alpha"][f"{r}_censored"]

    text = []
    coefs = evaluation["coefficients"]
    if coefs:
        t2 = [["log-price coefficient"] + [
            f"{_fmt(coefs[f'ols_{v}']['estimate'], 3)} ({_fmt(coefs[f'ols_{v}']['standard_error'], 3)})"
            for v in ("uncensored", "censored")]]
        if evaluation.get("oracle"):
            t2.append(["true coefficient", _fmt(evaluation["oracle"]["beta_price"], 3), ""])
        text += ["Linear regression, price coefficient (bootstrap se)",
                 _table(["", "Uncensored", "Censored"], t2), ""]

    t3 = []
    for r in rows:
        b = evaluation["bootstrap"][r]
        weights = [evaluation["weights"].get(v, {}).get(r) if r != "ensemble" else None
                   for v in ("censored", "uncensored")]
        t3.append([r, _fmt(report["rmse_test"][r]["censored"]),
                   _fmt(report["rmse_test"][r]["uncensored"]),
                   _fmt(report["alpha"].get(r), 2) if r != "ensemble" else "",
                   *("" if w is None else _fmt(w) for w in weights),
                   _fmt(b["t_statistic"], 2), _fmt(b["p_value"], 3)])
    text += ["Test RMSE with and without censorship accounting",
             _table(["Model", "Censored", "Uncensored", "alpha", "Weight (cen)", "Weight (unc)",
                     "t-stat", "p-value"], t3), ""]

    me = evaluation["marginal_effect"]
    if me:
        t4 = [[r] + [f"{_fmt(me[f'{r}_{v}']['mean_effect'], 3)} "
                     f"({_fmt(me[f'{r}_{v}']['standard_error'], 3)})" for v in VARIANTS]
              for r in rows]
        if evaluation.get("oracle"):
            t4.append(["true (oracle)", _fmt(evaluation["oracle"]["marginal_effect"], 3), ""])
        text += ["Mean marginal effect of standardized log-price (bootstrap se)",
                 _table(["Model", "Censored", "Uncensored"], t4), ""]
    return _clean(report), "\n".join(text)


def run_report(cfg: RunConfig) -> dict[str, Path]:
    """Write report.json and report.txt, evaluating first if needed."""
    ev_path = cfg.out_dir / "evaluation.json"
    evaluation = _read_json(ev_path, "evaluation") if ev_path.exists() else run_evaluate(cfg)
    evaluation = _clean(evaluation)
    report, text = build_report(cfg, evaluation)
    paths = {"json": _write_json(cfg.out_dir / "report.json", report),
             "text": cfg.out_dir / "report.txt"}
    paths["text"].write_text(text + "\n", encoding="utf-8")
    _write_manifest(cfg, "report")
    return paths
