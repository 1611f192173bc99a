import datetime as dt
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairtopk.cohort import write_predictions
from fairtopk.errors import BindingError, ConfigError
from fairtopk.temporal import SplitConfig, bind_cohorts, cohort_path, generate_splits, splits_to_json

from conftest import make_set

D = dt.date


def test_two_yearly_splits():
    splits = generate_splits(SplitConfig(D(2016, 1, 1), 12, 12, 2))
    triples = [(s.train_as_of, s.validation_as_of, s.test_as_of) for s in splits]
    assert triples == [
        (D(2014, 1, 1), D(2015, 1, 1), D(2016, 1, 1)),
        (D(2015, 1, 1), D(2016, 1, 1), D(2017, 1, 1)),
    ]
    for s in splits:
        assert s.label_end(s.train_as_of) <= s.validation_as_of
        assert s.label_end(s.validation_as_of) <= s.test_as_of


def test_single_split():
    (s,) = generate_splits(SplitConfig(D(2016, 1, 1), 12, 12, 1))
    assert s.split_id == 0 and s.test_as_of == D(2016, 1, 1)


def test_cadence_shorter_than_window_rejected():
    with pytest.raises(ConfigError, match="leak"):
        generate_splits(SplitConfig(D(2016, 1, 1), 12, 6, 2))


@pytest.mark.parametrize("kwargs", [dict(n_splits=0), dict(label_window=0), dict(cadence=-1)])
def test_config_invariants(kwargs):
    base = dict(first_as_of_date=D(2016, 1, 1), label_window=12, cadence=12, n_splits=1)
    with pytest.raises(ConfigError):
        SplitConfig(**{**base, **kwargs})


def test_from_dict_and_json():
    cfg = SplitConfig.from_dict({"first_as_of_date": "2016-01-31", "label_window": 1, "cadence": 1, "n_splits": 2})
    data = json.loads(splits_to_json(generate_splits(cfg)))
    # month-end clamping: Jan 31 -> Feb 29 (leap year)
    assert data[1]["test_as_of"] == "2016-02-29"
    assert data[0]["test_labels"] == ["2016-01-31", "2016-02-29"]
    with pytest.raises(ConfigError):
        SplitConfig.from_dict({"first_as_of_date": "2016-13-01", "label_window": 1, "cadence": 1})


@settings(max_examples=200, deadline=None)
@given(
    st.dates(min_value=D(1990, 1, 1), max_value=D(2090, 12, 31)),
    st.integers(1, 36),
    st.integers(0, 36),
    st.integers(1, 8),
)
def test_no_leakage_property(first, window, extra, n):
    splits = generate_splits(SplitConfig(first, window, window + extra, n))
    assert len(splits) == n
    tests = [s.test_as_of for s in splits]
    assert all(a < b for a, b in zip(tests, tests[1:]))
    for s in splits:
        assert s.train_as_of < s.validation_as_of < s.test_as_of
        assert s.label_end(s.train_as_of) <= s.validation_as_of
        assert s.label_end(s.validation_as_of) <= s.test_as_of


def _write(tmp_path, dates):
    for d in dates:
        write_predictions(make_set([("a", 0.5, 1, "A")], date=d), cohort_path(tmp_path, d))


def test_bind_all_present(tmp_path):
    splits = generate_splits(SplitConfig(D(2016, 1, 1), 12, 12, 2))
    _write(tmp_path, [D(2015, 1, 1), D(2016, 1, 1), D(2017, 1, 1)])
    bound = bind_cohorts(splits, tmp_path, "group")
    assert len(bound) == 2
    assert bound[1].val.cohort_date == D(2016, 1, 1)
    assert bound[1].test.cohort_date == D(2017, 1, 1)


def test_bind_missing_names_date(tmp_path):
    splits = generate_splits(SplitConfig(D(2016, 1, 1), 12, 12, 2))
    _write(tmp_path, [D(2015, 1, 1), D(2016, 1, 1)])
    with pytest.raises(BindingError, match="2017-01-01") as exc:
        bind_cohorts(splits, tmp_path, "group")
    assert exc.value.missing == [D(2017, 1, 1)]


def test_bind_empty(tmp_path):
    assert bind_cohorts([], tmp_path, "group") == []
