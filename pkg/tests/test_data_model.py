import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spatial_fh.data_model import (FunctionalCovariateSet, RawOutcomePair, SurveyDataset,
                                   load_functional_csv, load_raw_outcome_csv, load_survey_csv,
                                   relative_change, save_functional_csv, save_survey_csv,
                                   standardize_curves)
from spatial_fh.errors import InputError


def test_relative_change_examples():
    assert relative_change(RawOutcomePair(10.0, 10.0)) == 0.0
    assert relative_change(RawOutcomePair(10.0, 12.0)) == pytest.approx(0.2, abs=1e-15)
    with pytest.raises(InputError, match="WI"):
        relative_change(RawOutcomePair(0.0, 1.0, "WI"))


@given(st.floats(0.01, 100), st.floats(0, 100), st.floats(0.01, 100))
def test_relative_change_scale_invariant(a, b, c):
    lhs = relative_change(RawOutcomePair(c * a, c * b))
    assert lhs == pytest.approx(relative_change(RawOutcomePair(a, b)), abs=1e-12, rel=1e-12)


def _set(cols):
    cols = np.asarray(cols, float)
    return FunctionalCovariateSet(("y",), (cols,), np.arange(cols.shape[0]),
                                  tuple(f"a{i}" for i in range(cols.shape[1])))


def test_standardize_simple_column():
    out = standardize_curves(_set([[1.0, 4.0], [2.0, 6.0], [3.0, 8.0]]))
    np.testing.assert_allclose(out.series[0][:, 0], [-1, 0, 1], atol=1e-15)
    np.testing.assert_allclose(out.series[0][:, 1], [-1, 0, 1], atol=1e-15)


def test_standardize_constant_column_names_area_and_covariate():
    with pytest.raises(InputError, match=r"'y'.*a1"):
        standardize_curves(_set([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]))


def test_standardize_returns_new_set():
    s = _set([[1.0, 4.0], [2.0, 6.0], [3.0, 9.0]])
    before = s.series[0].copy()
    standardize_curves(s)
    np.testing.assert_array_equal(s.series[0], before)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (12, 4), elements=st.floats(-1e3, 1e3)))
def test_standardize_idempotent(a):
    a = a + np.linspace(0, 1, 12)[:, None]  # no constant columns
    once = standardize_curves(_set(a))
    twice = standardize_curves(once)
    np.testing.assert_allclose(twice.series[0], once.series[0], atol=1e-10)
    np.testing.assert_allclose(once.series[0].mean(axis=0), 0, atol=1e-10)
    np.testing.assert_allclose(once.series[0].std(axis=0, ddof=1), 1, atol=1e-10)


def test_survey_validation():
    with pytest.raises(InputError):
        SurveyDataset(("a",), [1.0], [1.0])
    with pytest.raises(InputError, match="duplicate"):
        SurveyDataset(("a", "a"), [1.0, 2.0], [1.0, 1.0])
    with pytest.raises(InputError, match="sigma2"):
        SurveyDataset(("a", "b"), [1.0, 2.0], [1.0, 0.0])


def test_dataset_arrays_are_read_only():
    ds = SurveyDataset(("a", "b"), [1.0, 2.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        ds.y[0] = 3.0


def test_shipped_fixture_has_21_areas(fixture_dir):
    ds = load_survey_csv(fixture_dir / "areas.csv")
    assert ds.n == 21


def _write(path, rows):
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(rows)


def test_load_errors(tmp_path):
    p = tmp_path / "areas.csv"
    p.write_text("")
    with pytest.raises(InputError, match="empty"):
        load_survey_csv(p)
    _write(p, [["area_id", "y", "sigma2"], ["a", "0.1", "x"], ["b", "0.2", "1"]])
    with pytest.raises(InputError, match="non-numeric"):
        load_survey_csv(p)
    _write(p, [["area_id", "y", "sigma2"], ["a", "0.1", "1"], ["a", "0.2", "1"]])
    with pytest.raises(InputError, match="duplicate"):
        load_survey_csv(p)
    _write(p, [["area_id", "y", "sigma2"], ["a", "nan", "1"], ["b", "0.2", "1"]])
    with pytest.raises(InputError, match="missing"):
        load_survey_csv(p)


def test_missing_area_in_covariate_file(tmp_path):
    p = tmp_path / "covariate_y.csv"
    _write(p, [["t", "a", "b"], ["1", "1", "2"], ["2", "3", "4"]])
    with pytest.raises(InputError, match="missing areas c"):
        load_functional_csv([p], ("a", "b", "c"))


def test_covariate_columns_reordered_to_survey_order(tmp_path, rng):
    ids = tuple(f"s{i}" for i in range(6))
    z = rng.standard_normal((8, 6))
    fs = FunctionalCovariateSet(("y",), (z,), np.arange(8.0), ids)
    save_functional_csv(fs, tmp_path)
    perm = rng.permutation(6)
    with open(tmp_path / "covariate_y.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [[r[0]] + [r[1 + k] for k in perm] for r in rows]
    _write(tmp_path / "covariate_y.csv", rows)
    back = load_functional_csv([tmp_path / "covariate_y.csv"], ids)
    np.testing.assert_array_equal(back["y"], z)


def test_survey_round_trip_lossless(tmp_path, rng):
    ds = SurveyDataset(("a", "b", "c"), rng.standard_normal(3), rng.uniform(0.1, 1, 3),
                       rng.standard_normal((3, 2)), ("inc", "age"))
    save_survey_csv(ds, tmp_path / "areas.csv")
    back = load_survey_csv(tmp_path / "areas.csv")
    np.testing.assert_array_equal(back.y, ds.y)
    np.testing.assert_array_equal(back.sigma2, ds.sigma2)
    np.testing.assert_array_equal(back.scalar_covariates, ds.scalar_covariates)
    assert back.covariate_names == ("inc", "age")


def test_raw_outcome_file(tmp_path):
    p = tmp_path / "raw_outcome.csv"
    _write(p, [["area_id", "value_start", "value_end"], ["AL", "4.0", "5.0"], ["FL", "20", "19"]])
    pairs = load_raw_outcome_csv(p)
    assert [relative_change(q) for q in pairs] == pytest.approx([0.25, -0.05])
