import json
import math
import warnings

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from censored_demand.datamodel import (
    CSV_COLUMNS,
    DataValidationError,
    DesignEncoder,
    EncodingPlan,
    SplitIndices,
    build_design,
    load_dataset,
    make_split,
    write_dataset,
)

VOCAB = {"brand": ["A", "B"], "country": ["RU"], "colour": ["white"], "form": ["loaf"],
         "flour": ["wheat"], "package_type": ["bag"], "store_type": ["S1", "S2"]}


def row(**over):
    base = {"sku_id": "sku1", "store_id": "m1", "date": "2012-03-05", "sales": "2",
            "price": "40.00", "weight": "400", "promotion": "0", "brand": "A", "country": "RU",
            "colour": "white", "form": "loaf", "flour": "wheat", "package_type": "bag",
            "store_type": "S1", "holiday": "0"}
    base.update({k: str(v) for k, v in over.items()})
    return base


def write_csv(tmp_path, rows, vocab=VOCAB, name="data.csv"):
    path = tmp_path / name
    pd.DataFrame(rows, columns=list(CSV_COLUMNS)).to_csv(path, index=False)
    (tmp_path / (path.stem + ".vocab.json")).write_text(json.dumps(vocab))
    return path


def build_all_train(dataset):
    n = len(dataset)
    split = SplitIndices(np.arange(n), np.array([], dtype=int), np.array([], dtype=int))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return build_design(dataset, "fit-on-train", split)


class TestLoad:
    def test_three_valid_rows(self, tmp_path):
        path = write_csv(tmp_path, [row(), row(sales=0, brand="B"), row(date="2013-12-31")])
        ds = load_dataset(path)
        assert len(ds) == 3
        assert ds.sales.tolist() == [2, 0, 2]
        assert ds.frame["year"].tolist() == ["2012", "2012", "2013"]
        assert ds.frame["day_of_week"].iloc[0] == "0"  # 2012-03-05 was a Monday

    def test_negative_sales_names_line_and_column(self, tmp_path):
        path = write_csv(tmp_path, [row(), row(sales=-1)])
        with pytest.raises(DataValidationError) as err:
            load_dataset(path)
        assert (3, "sales") in [(p[0], p[1]) for p in err.value.problems]
        assert "line 3" in str(err.value) and "sales" in str(err.value)

    def test_unknown_level_is_listed(self, tmp_path):
        path = write_csv(tmp_path, [row(brand="Zeta")])
        with pytest.raises(DataValidationError, match="Zeta"):
            load_dataset(path)

    @pytest.mark.parametrize("col,value", [("price", "abc"), ("weight", "0"), ("price", "-3"),
                                           ("promotion", "2"), ("date", "05/03/2012"),
                                           ("sales", "1.5"), ("store_id", "")])
    def test_bad_cells(self, tmp_path, col, value):
        path = write_csv(tmp_path, [row(**{col: value})])
        with pytest.raises(DataValidationError) as err:
            load_dataset(path)
        assert err.value.problems[0][:2] == (2, col)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_dataset(tmp_path / "nope.csv")

    def test_wrong_header(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("sku_id,store_id\n1,2\n")
        (tmp_path / "data.vocab.json").write_text(json.dumps(VOCAB))
        with pytest.raises(DataValidationError, match="header"):
            load_dataset(path)

    def test_write_then_load_round_trip(self, tmp_path):
        ds = load_dataset(write_csv(tmp_path, [row(), row(sales=5, price="12.50")]))
        csv, _ = write_dataset(ds, tmp_path / "out" / "copy.csv")
        again = load_dataset(csv)
        pd.testing.assert_frame_equal(ds.frame, again.frame)


class TestSplit:
    def test_exact_sizes(self):
        s = make_split(100, seed=1)
        assert (len(s.train), len(s.validation), len(s.test)) == (60, 15, 25)

    def test_rounding(self):
        s = make_split(101, seed=1)
        for got, target in zip((len(s.train), len(s.validation), len(s.test)),
                               (60.6, 15.15, 25.25)):
            assert abs(got - round(target)) <= 1

    def test_deterministic(self):
        a, b = make_split(500, seed=9), make_split(500, seed=9)
        for name in ("train", "validation", "test"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
        assert not np.array_equal(a.train, make_split(500, seed=10).train)

    @pytest.mark.parametrize("kwargs", [{"n": 9}, {"n": 100, "fractions": (0.6, 0.2, 0.25)},
                                        {"n": 100, "fractions": (0.5, 0.5)}])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            make_split(**kwargs)

    def test_serialization(self):
        s = make_split(50, seed=2)
        t = SplitIndices.from_dict(json.loads(json.dumps(s.to_dict())))
        np.testing.assert_array_equal(s.test, t.test)


@settings(max_examples=50, deadline=None)
@given(st.integers(10, 5000), st.integers(0, 2**32 - 1))
def test_split_partitions_rows(n, seed):
    s = make_split(n, seed=seed)
    parts = np.concatenate([s.train, s.validation, s.test])
    assert np.array_equal(np.sort(parts), np.arange(n))
    for size, frac in zip((len(s.train), len(s.validation), len(s.test)), (0.6, 0.15, 0.25)):
        assert abs(size - round(frac * n)) <= 1


class TestDesign:
    def test_log_price_standardization(self, tmp_path):
        e = math.e
        rows = [row(price=f"{p:.10f}") for p in (e, e, e * e)]
        ds = load_dataset(write_csv(tmp_path, rows))
        design, plan = build_all_train(ds)
        assert plan.columns == ("log_price",)
        np.testing.assert_allclose(design.X[:, 0], [-1 / math.sqrt(2), -1 / math.sqrt(2),
                                                    math.sqrt(2)], atol=1e-8)

    def test_two_level_categorical_gives_one_dummy(self, tmp_path):
        rows = [row(brand=b, price=p) for b, p in (("A", 10), ("B", 20), ("B", 30), ("A", 25))]
        ds = load_dataset(write_csv(tmp_path, rows))
        _, plan = build_all_train(ds)
        assert [c for c in plan.candidates if c.startswith("brand=")] == ["brand=B"]
        assert plan.reference_levels["brand"] == "A"
        assert "brand=B" in plan.columns

    def test_duplicate_dummies_are_dropped(self, tmp_path):
        # store_type S2 occurs exactly on brand B rows, so the two dummies coincide
        rows = [row(brand=b, store_type=s, price=p)
                for b, s, p in (("A", "S1", 10), ("B", "S2", 20), ("B", "S2", 30), ("A", "S1", 25),
                                ("A", "S1", 40))]
        ds = load_dataset(write_csv(tmp_path, rows))
        design, plan = build_all_train(ds)
        assert ("store_type=S2", "collinear") in plan.dropped
        assert np.linalg.matrix_rank(design.X) == design.X.shape[1]

    def test_constant_numeric_warns(self, tmp_path):
        rows = [row(price=p) for p in (10, 20, 30)]
        ds = load_dataset(write_csv(tmp_path, rows))
        with pytest.warns(UserWarning) as record:
            DesignEncoder().fit(ds)
        assert any("'weight'" in str(w.message) for w in record)

    def test_fit_on_train_requires_split(self, small_fixture):
        with pytest.raises(ValueError):
            build_design(small_fixture.dataset, "fit-on-train", None)

    def test_full_fixture_invariants(self, small_fixture):
        train = small_fixture.part("train")
        np.testing.assert_allclose(train.X.mean(axis=0), 0.0, atol=1e-8)
        np.testing.assert_allclose(train.X.std(axis=0), 1.0, atol=1e-8)
        np.testing.assert_array_equal(small_fixture.design.d, small_fixture.design.y == 0)
        assert np.linalg.matrix_rank(train.X) == train.X.shape[1]
        plan = small_fixture.plan
        for var, levels in plan.levels.items():
            assert sum(c.startswith(var + "=") for c in plan.candidates) == len(levels) - 1
        assert all(s > 0 for s in plan.stds)

    def test_plan_round_trip(self, small_fixture):
        plan = EncodingPlan.from_dict(json.loads(json.dumps(small_fixture.plan.to_dict())))
        X = plan.transform(small_fixture.dataset.frame)
        np.testing.assert_array_equal(X, small_fixture.design.X)

    def test_design_is_read_only(self, small_fixture):
        with pytest.raises(ValueError):
            small_fixture.design.X[0, 0] = 1.0
