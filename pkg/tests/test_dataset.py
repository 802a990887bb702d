import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surveyperm import (
    CsvSchema,
    DatasetError,
    RowError,
    SchemaError,
    SurveyDataset,
    center_weighted,
    load_csv,
    validate,
    write_csv,
)


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadCsv:
    def test_minimal_file(self, tmp_path):
        path = write(tmp_path, "y,g,w,cluster\n1,0,1,a\n2,1,1,a\n3,1,1,b\n")
        d = load_csv(path)
        assert d.n == 3
        assert d.n_clusters == 2
        np.testing.assert_array_equal(d.x, np.ones((3, 1)))
        np.testing.assert_array_equal(d.y, [1.0, 2.0, 3.0])
        np.testing.assert_array_equal(d.cluster_codes, [0, 0, 1])

    def test_zero_weight_names_row(self, tmp_path):
        path = write(tmp_path, "y,g,w,cluster\n1,0,1,a\n2,1,0,a\n3,1,1,b\n")
        with pytest.raises(RowError, match="rows 2") as err:
            load_csv(path)
        assert err.value.rows == [1]

    def test_covariates_add_intercept(self, tmp_path):
        rng = np.random.default_rng(3)
        lines = ["y,g,w,cluster,a,b,c,d,e"]
        for i in range(8):
            vals = ",".join(f"{v:.3f}" for v in rng.normal(size=5))
            lines.append(f"{i},{i % 2},1.5,k{i // 2},{vals}")
        path = write(tmp_path, "\n".join(lines) + "\n")
        d = load_csv(path, CsvSchema(covariates=("a", "b", "c", "d", "e")))
        assert d.x.shape == (8, 6)
        np.testing.assert_array_equal(d.x[:, 0], 1.0)
        assert d.covariate_names == ("a", "b", "c", "d", "e")

    def test_missing_column(self, tmp_path):
        path = write(tmp_path, "y,g,cluster\n1,0,a\n2,1,b\n")
        with pytest.raises(SchemaError, match="'w'"):
            load_csv(path)

    @pytest.mark.parametrize(
        "body, rows",
        [
            ("1,0,1,a\nx,1,1,a\n3,1,1,b\n", [1]),
            ("1,0,1,a\n2,2,1,a\n3,1,1,b\n", [1]),
            ("1,0,1,a\n2,1,-1,a\n3,1,nan,b\n", [1, 2]),
            ("1,0,1,a\n2,1,1,\n3,1,1,b\n", [1]),
        ],
        ids=["nonnumeric-y", "label-2", "bad-weights", "empty-cluster"],
    )
    def test_row_errors(self, tmp_path, body, rows):
        path = write(tmp_path, "y,g,w,cluster\n" + body)
        with pytest.raises(RowError) as err:
            load_csv(path)
        assert err.value.rows == rows

    def test_degenerate_group_rejected(self, tmp_path):
        path = write(tmp_path, "y,g,w,cluster\n1,0,1,a\n2,0,1,b\n")
        with pytest.raises(DatasetError, match="degenerate group"):
            load_csv(path)

    def test_custom_column_names_and_order(self, tmp_path):
        path = write(tmp_path, "psu,wt,inc,college\n9,2.5,10,1\n9,2.5,20,0\n4,1,30,1\n")
        d = load_csv(path, CsvSchema(y="inc", g="college", w="wt", cluster="psu"))
        np.testing.assert_array_equal(d.y, [10, 20, 30])
        assert list(d.cluster_labels) == ["9", "4"]


class TestRoundTrip:
    def test_write_then_load_is_exact(self, tmp_path, dataset):
        path = write_csv(dataset, tmp_path / "out.csv")
        back = load_csv(path, CsvSchema(covariates=dataset.covariate_names))
        np.testing.assert_array_equal(back.y, dataset.y)
        np.testing.assert_array_equal(back.w, dataset.w)
        np.testing.assert_array_equal(back.g, dataset.g)
        np.testing.assert_array_equal(back.x, dataset.x)
        assert list(back.cluster) == [str(c) for c in dataset.cluster]

    def test_round_trip_with_covariates_and_strata(self, tmp_path):
        from conftest import make_dataset

        d = make_dataset(p=3, seed=5)
        d = SurveyDataset(
            y=d.y, g=d.g, w=d.w, cluster=d.cluster, x=d.x, stratum=np.arange(d.n) % 3
        )
        schema = CsvSchema(covariates=d.covariate_names, stratum="stratum")
        back = load_csv(write_csv(d, tmp_path / "s.csv", schema), schema)
        np.testing.assert_array_equal(back.x, d.x)
        assert list(back.stratum) == [str(s) for s in d.stratum]


class TestValidate:
    def test_valid(self, dataset):
        report = validate(dataset)
        assert report.ok
        assert report.issues == []

    def test_all_zero_labels(self):
        d = SurveyDataset(y=[1, 2, 3], g=[0, 0, 0], w=[1, 1, 1], cluster=["a", "a", "b"])
        report = validate(d)
        assert not report.ok
        assert report.codes() == {"degenerate_group"}
        assert "degenerate group" in report.issues[0].message

    def test_singleton_cluster_is_only_a_warning(self):
        d = SurveyDataset(y=[1, 2, 3], g=[0, 1, 1], w=[1, 1, 1], cluster=["a", "a", "b"])
        report = validate(d)
        assert report.ok
        assert "singleton_cluster" in report.warning_codes()
        assert "singleton cluster" in report.warnings[0].message
        assert report.warnings[0].rows == (2,)

    def test_single_label_cluster_warning(self):
        d = SurveyDataset(y=[1, 2, 3, 4], g=[0, 0, 1, 0], w=[1] * 4, cluster=["a", "a", "b", "b"])
        report = validate(d)
        assert report.ok
        assert "single_label_cluster" in report.warning_codes()

    def test_missing_intercept(self):
        d = SurveyDataset(
            y=[1, 2, 3], g=[0, 1, 1], w=[1, 1, 1], cluster=[1, 1, 2], x=[[1.0], [2.0], [1.0]]
        )
        report = validate(d)
        assert report.codes() == {"no_intercept"}
        assert report.issues[0].rows == (1,)

    def test_length_mismatch(self):
        d = SurveyDataset(y=[1, 2, 3], g=[0, 1], w=[1, 1, 1], cluster=[1, 1, 2])
        assert validate(d).codes() == {"length_mismatch"}

    @settings(max_examples=60, deadline=None)
    @given(
        n=st.integers(4, 40),
        data=st.data(),
    )
    def test_flags_exactly_the_injected_rows(self, n, data):
        rng = np.random.default_rng(n)
        y = rng.normal(size=n)
        w = rng.uniform(0.5, 2.0, n)
        g = np.arange(n) % 2
        rows = st.lists(st.integers(0, n - 1), unique=True, max_size=n)
        bad_y = sorted(data.draw(rows, label="bad_y"))
        bad_w = sorted(data.draw(rows, label="bad_w"))
        y[bad_y] = data.draw(st.sampled_from([np.nan, np.inf, -np.inf]))
        w[bad_w] = data.draw(st.sampled_from([0.0, -1.0, np.nan]))
        report = validate(SurveyDataset(y=y, g=g, w=w, cluster=np.arange(n) // 2))
        found = {i.code: set(i.rows) for i in report.issues}
        assert found.get("nonfinite_y", set()) == set(bad_y)
        assert found.get("nonpositive_weight", set()) == set(bad_w)
        assert report.ok == (not bad_y and not bad_w)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.integers(0, 29), unique=True, min_size=1, max_size=10))
    def test_flags_bad_labels(self, bad):
        g = (np.arange(30) % 2).astype(object)
        for i in bad:
            g[i] = 7
        report = validate(SurveyDataset(y=np.zeros(30), g=g, w=np.ones(30), cluster=np.arange(30)))
        assert {i.code: set(i.rows) for i in report.issues}["bad_label"] == set(bad)


class TestCenterWeighted:
    @pytest.mark.parametrize(
        "y, w, expected",
        [
            ([1, 3], [1, 1], [-1, 1]),
            # (3*1 + 1*3) / 4 = 1.5
            ([1, 3], [3, 1], [-0.5, 1.5]),
            ([4.2, 4.2, 4.2], [1, 7, 0.1], [0, 0, 0]),
        ],
    )
    def test_examples(self, y, w, expected):
        d = SurveyDataset(y=y, g=[0, 1] + [1] * (len(y) - 2), w=w, cluster=range(len(y)))
        np.testing.assert_allclose(center_weighted(d).y, expected, atol=1e-15)

    def test_other_columns_untouched(self, dataset):
        c = center_weighted(dataset)
        for name in ("g", "w", "x", "cluster"):
            np.testing.assert_array_equal(getattr(c, name), getattr(dataset, name))
        assert c is not dataset

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 10**6), st.integers(2, 60), st.floats(1e-3, 1e6))
    def test_weighted_sum_vanishes(self, seed, n, scale):
        rng = np.random.default_rng(seed)
        y = rng.normal(size=n) * scale + scale
        w = rng.lognormal(sigma=2, size=n)
        d = SurveyDataset(y=y, g=np.arange(n) % 2, w=w, cluster=np.arange(n))
        c = center_weighted(d)
        assert abs(np.sum(w * c.y)) <= 1e-10 * w.sum() * np.abs(y).max()


def test_dataset_is_immutable(dataset):
    with pytest.raises(ValueError):
        dataset.y[0] = 1.0
