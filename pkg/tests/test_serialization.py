import json
import warnings

import numpy as np
import pytest

from censored_demand.censored import fit_censored, fit_uncensored
from censored_demand.ensemble import fit_ensemble
from censored_demand.serialization import (
    ModelFileError,
    load_ensemble,
    load_model,
    save_ensemble,
    save_model,
)

FAST = {"n_lambdas": 6, "n_folds": 3, "n_trees": 8, "mtry": 10, "nodesize": 5}
FAMILIES = ("ols", "ridge", "lasso", "random_forest")


@pytest.fixture(scope="module")
def fitted(small_fixture):
    train, val = small_fixture.part("train"), small_fixture.part("validation")
    out = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for fam in FAMILIES:
            out[fam] = (fit_censored(train, val, fam, [0.4, 0.7, 1.0], FAST, random_state=1),
                        fit_uncensored(train, fam, FAST, random_state=1))
    return out


@pytest.mark.parametrize("family", FAMILIES)
def test_model_round_trip(tmp_path, small_fixture, fitted, family):
    test = small_fixture.part("test")
    for model in fitted[family]:
        path = save_model(model, tmp_path / f"{family}.npz", small_fixture.plan.columns, seed=3)
        loaded, meta = load_model(path)
        np.testing.assert_array_equal(loaded.predict(test.X), model.predict(test.X))
        assert loaded.alpha == model.alpha
        assert loaded.alpha_profile == model.alpha_profile
        assert loaded.family == family and loaded.censored == model.censored
        assert meta["seed"] == 3
        assert tuple(meta["column_names"]) == small_fixture.plan.columns


def test_ensemble_round_trip(tmp_path, small_fixture, fitted):
    val, test = small_fixture.part("validation"), small_fixture.part("test")
    members = [fitted[f][0] for f in FAMILIES]
    paths = [save_model(m, tmp_path / "models" / f"{f}.npz") for f, m in zip(FAMILIES, members)]
    ens = fit_ensemble(members, val.X, val.y, FAMILIES)
    path = save_ensemble(ens, tmp_path / "models" / "ensemble.json", paths)
    loaded = load_ensemble(path)
    np.testing.assert_array_equal(loaded.weights, ens.weights)
    np.testing.assert_array_equal(loaded.predict(test.X), ens.predict(test.X))
    assert loaded.names == FAMILIES


def test_corrupt_model_names_the_file(tmp_path):
    bad = tmp_path / "broken_model.npz"
    bad.write_bytes(b"definitely not a zip archive")
    with pytest.raises(ModelFileError, match="broken_model.npz"):
        load_model(bad)


def test_missing_model(tmp_path):
    with pytest.raises(ModelFileError, match="absent.npz"):
        load_model(tmp_path / "absent.npz")


def test_corrupt_ensemble_names_the_file(tmp_path):
    bad = tmp_path / "ens.json"
    bad.write_text(json.dumps({"format": "something-else"}))
    with pytest.raises(ModelFileError, match="ens.json"):
        load_ensemble(bad)
