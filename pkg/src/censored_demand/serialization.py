"""On-disk containers for fitted models.

A censored model is one ``.npz`` archive: numeric arrays as members plus a
``__meta__`` member holding UTF-8 JSON (format tag, library version, family,
threshold, threshold profile, column layout and each learner's class,
hyperparameters and scalar state). An ensemble is a JSON file that points to
its member archives by relative path and stores the weights and the
validation RMSE table.
"""
from __future__ import annotations

import json
import zipfile
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .censored import CensoredModel
from .ensemble import EnsembleModel
from .learners import (
    ConstantProbabilityClassifier,
    LassoRegressor,
    LogisticClassifier,
    OLSRegressor,
    RandomForestClassifier,
    RandomForestRegressor,
    RidgeRegressor,
)

MODEL_FORMAT = "censored-demand/model"
ENSEMBLE_FORMAT = "censored-demand/ensemble"
_META = "__meta__"
_ESTIMATORS = {cls.__name__: cls for cls in (
    OLSRegressor, RidgeRegressor, LassoRegressor, LogisticClassifier,
    ConstantProbabilityClassifier, RandomForestRegressor, RandomForestClassifier)}


class ModelFileError(ValueError):
    """A model file is missing, truncated or not in the expected format."""

    def __init__(self, path, reason):
        self.path = Path(path)
        super().__init__(f"{path}: {reason}")


def _encode_value(value, key, arrays):
    if isinstance(value, np.ndarray):
        arrays[key] = value
        return {"__array__": key}
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, dict):
        return {"__pairs__": [[_encode_value(k, f"{key}.k{i}", arrays),
                               _encode_value(v, f"{key}.v{i}", arrays)]
                              for i, (k, v) in enumerate(value.items())]}
    if isinstance(value, (list, tuple)):
        return [_encode_value(v, f"{key}.{i}", arrays) for i, v in enumerate(value)]
    if value is None or isinstance(value, (bool, int, float, str)):
        return value
    raise TypeError(f"cannot serialize {type(value).__name__} at {key}")


def _decode_value(value, arrays):
    if isinstance(value, dict):
        if "__array__" in value:
            return arrays[value["__array__"]]
        if "__pairs__" in value:
            return {_decode_value(k, arrays): _decode_value(v, arrays)
                    for k, v in value["__pairs__"]}
        return {k: _decode_value(v, arrays) for k, v in value.items()}
    if isinstance(value, list):
        return [_decode_value(v, arrays) for v in value]
    return value


def encode_estimator(est, prefix: str, arrays: dict) -> dict:
    name = type(est).__name__
    if name not in _ESTIMATORS:
        raise TypeError(f"unsupported estimator {name}")
    fitted = {k: v for k, v in vars(est).items() if k.endswith("_") and not k.startswith("_")}
    return {
        "class": name,
        "params": _encode_value(est.get_params(deep=False), f"{prefix}.params", arrays),
        "state": _encode_value(fitted, f"{prefix}.state", arrays),
    }


def decode_estimator(meta: dict, arrays) -> Any:
    cls = _ESTIMATORS.get(meta.get("class"))
    if cls is None:
        raise ValueError(f"unknown estimator class {meta.get('class')!r}")
    est = cls(**_decode_value(meta["params"], arrays))
    for k, v in _decode_value(meta["state"], arrays).items():
        setattr(est, k, v)
    return est


def save_model(model: CensoredModel, path, column_names: Sequence[str] = (),
               seed=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays: dict[str, np.ndarray] = {}
    meta = {
        "format": MODEL_FORMAT,
        "version": __version__,
        "family": model.family,
        "censored": model.censored,
        "alpha": model.alpha,
        "alpha_profile": [list(p) for p in model.alpha_profile],
        "skipped_alphas": list(model.skipped_alphas),
        "regressor_rows": model.regressor_rows,
        "info": _encode_value(dict(model.info), "info", arrays),
        "column_names": list(column_names),
        "seed": seed,
        "classifier": encode_estimator(model.classifier, "classifier", arrays),
        "regressor": encode_estimator(model.regressor, "regressor", arrays),
    }
    blob = np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **{_META: blob}, **arrays)
    return path


def load_model(path) -> tuple[CensoredModel, dict]:
    """Returns the model and its metadata (column layout, version, seed)."""
    path = Path(path)
    if not path.exists():
        raise ModelFileError(path, "file not found")
    try:
        with np.load(path, allow_pickle=False) as npz:
            arrays = {k: npz[k] for k in npz.files}
        meta = json.loads(arrays.pop(_META).tobytes().decode("utf-8"))
        if meta.get("format") != MODEL_FORMAT:
            raise ValueError(f"format tag {meta.get('format')!r}")
        model = CensoredModel(
            family=meta["family"],
            classifier=decode_estimator(meta["classifier"], arrays),
            regressor=decode_estimator(meta["regressor"], arrays),
            alpha=float(meta["alpha"]),
            alpha_profile=tuple((float(a), float(r)) for a, r in meta["alpha_profile"]),
            skipped_alphas=tuple(float(a) for a in meta["skipped_alphas"]),
            censored=bool(meta["censored"]),
            regressor_rows=int(meta["regressor_rows"]),
            info=_decode_value(meta["info"], arrays),
        )
    except ModelFileError:
        raise
    except (OSError, KeyError, ValueError, TypeError, zipfile.BadZipFile,
            json.JSONDecodeError, UnicodeDecodeError, EOFError) as exc:
        raise ModelFileError(path, f"unreadable model file ({type(exc).__name__}: {exc})") from exc
    return model, meta


def save_ensemble(model: EnsembleModel, path, member_paths: Sequence) -> Path:
    path = Path(path)
    rel = [Path(p).resolve().relative_to(path.parent.resolve()).as_posix() for p in member_paths]
    doc = {
        "format": ENSEMBLE_FORMAT,
        "version": __version__,
        "members": [{"name": n, "path": p} for n, p in zip(model.names, rel)],
        "weights": [float(w) for w in model.weights],
        "validation_rmse": {k: float(v) for k, v in model.validation_rmse.items()},
        "degenerate": bool(model.degenerate),
    }
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return path


def load_ensemble(path) -> EnsembleModel:
    path = Path(path)
    if not path.exists():
        raise ModelFileError(path, "file not found")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        if doc.get("format") != ENSEMBLE_FORMAT:
            raise ValueError(f"format tag {doc.get('format')!r}")
        names = [m["name"] for m in doc["members"]]
        paths = [path.parent / m["path"] for m in doc["members"]]
        weights = np.asarray(doc["weights"], dtype=np.float64)
    except (OSError, KeyError, ValueError, TypeError, json.JSONDecodeError) as exc:
        raise ModelFileError(path, f"unreadable ensemble file ({type(exc).__name__}: {exc})") from exc
    members = [load_model(p)[0] for p in paths]
    return EnsembleModel(tuple(members), weights, tuple(names),
                         doc.get("validation_rmse", {}), bool(doc.get("degenerate", False)))
