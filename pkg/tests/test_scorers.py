import dataclasses
import hashlib

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairtopk.errors import ConfigError, UnknownKeyError
from fairtopk.metrics import evaluate_selection, rank, top_k_ids
from fairtopk.scorers import (
    FeatureTypeError,
    PercentileRankOneFeature,
    SimpleThresholder,
    SynthConfig,
    derive_rng,
    generate_cohort,
    percentile_rank_one_feature,
    simple_thresholder,
    write_synthetic,
)


@pytest.mark.parametrize(
    "values, expected",
    [([10, 20, 30], [0.0, 0.5, 1.0]), ([5, 5, 9], [0.0, 0.0, 1.0]), ([7], [0.5])],
)
def test_percentile_examples(values, expected):
    out = percentile_rank_one_feature(pd.DataFrame({"x": values}), "x")
    assert out.tolist() == expected


def test_percentile_descending():
    out = percentile_rank_one_feature(pd.DataFrame({"x": [10, 20, 30]}), "x", descending=True)
    assert out.tolist() == [1.0, 0.5, 0.0]


def test_percentile_errors():
    with pytest.raises(UnknownKeyError):
        percentile_rank_one_feature(pd.DataFrame({"x": [1]}), "y")
    with pytest.raises(FeatureTypeError):
        percentile_rank_one_feature(pd.DataFrame({"x": ["a", "b"]}), "x")
    with pytest.raises(TypeError):
        percentile_rank_one_feature(pd.DataFrame({"x": ["a", "b"]}), "x")


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-5, 5), min_size=1, max_size=40))
def test_percentile_properties(values):
    x = np.array(values)
    s = percentile_rank_one_feature(pd.DataFrame({"x": x}), "x").to_numpy()
    assert ((0 <= s) & (s <= 1)).all()
    # monotone transform: order of scores follows order of values, ties stay tied
    for i in range(len(x)):
        for j in range(len(x)):
            assert (x[i] < x[j]) == (s[i] < s[j])
    if len(x) > 1:
        smaller = np.array([(x < v).sum() for v in x])
        np.testing.assert_allclose(s, smaller / (len(x) - 1), rtol=0, atol=1e-15)


def test_thresholder_examples():
    df = pd.DataFrame({"history": [1, 0], "age": [20, 40]})
    assert simple_thresholder(df, [("history", ">=", 1)]).tolist() == [1.0, 0.0]
    assert simple_thresholder(df, [("history", ">=", 1), ("age", ">", 30)]).tolist() == [0.0, 0.0]
    with pytest.warns(UserWarning):
        assert simple_thresholder(df, []).tolist() == [1.0, 1.0]


def test_thresholder_errors():
    df = pd.DataFrame({"x": [1]})
    with pytest.raises(ConfigError):
        simple_thresholder(df, [("x", "=>", 1)])
    with pytest.raises(ConfigError):
        simple_thresholder(df, [("x", ">", 1)], logical_operator="or")
    with pytest.raises(UnknownKeyError):
        simple_thresholder(df, [("y", ">", 1)])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.booleans()), min_size=1, max_size=30), st.randoms())
def test_thresholder_permutation_invariant(rows, rnd):
    df = pd.DataFrame(rows, columns=["n", "flag"])
    rules = [("n", ">=", 2), ("flag", "==", True)]
    base = simple_thresholder(df, rules)
    perm = list(df.index)
    rnd.shuffle(perm)
    pd.testing.assert_series_equal(simple_thresholder(df.loc[perm], rules).sort_index(), base)


def test_estimators():
    df = pd.DataFrame({"x": [10, 20, 30], "h": [1, 0, 1]})
    p = PercentileRankOneFeature(feature="x").fit(df).predict_proba(df)
    np.testing.assert_array_equal(p[:, 1], [0, 0.5, 1])
    np.testing.assert_array_equal(p.sum(axis=1), 1)
    t = SimpleThresholder(rules=[("h", ">=", 1)]).fit(df).predict_proba(df)
    np.testing.assert_array_equal(t[:, 1], [1, 0, 1])
    assert SimpleThresholder().get_params() == {"rules": (), "logical_operator": "and"}


def _symmetric(**kw):
    base = dict(
        n_entities=20000,
        groups={"A": {"fraction": 0.6, "prevalence": 0.2}, "B": {"fraction": 0.4, "prevalence": 0.2}},
        score_model={"*": {"positive": [4, 3], "negative": [2, 5]}},
        n_models=1,
        seed=0,
        cohort_dates=["2015-01-01"],
    )
    return SynthConfig(**{**base, **kw})


def test_fraction_sum_rejected():
    with pytest.raises(ConfigError, match="sum"):
        _symmetric(groups={"A": {"fraction": 0.6, "prevalence": 0.2}, "B": {"fraction": 0.3, "prevalence": 0.2}})


@pytest.mark.parametrize(
    "kw",
    [
        dict(score_model={"*": {"positive": [0, 3], "negative": [2, 5]}}),
        dict(disparity_knob=-0.1),
        dict(disadvantaged_groups=["C"]),
        dict(n_models=0),
        dict(cohort_dates=[]),
    ],
)
def test_config_invariants(kw):
    with pytest.raises(ConfigError):
        _symmetric(**kw)


def test_from_dict_dates_and_bad_keys():
    cfg = SynthConfig.from_dict(
        {
            "n_entities": 10,
            "groups": {"A": {"fraction": 1.0, "prevalence": 0.5}},
            "score_model": {"*": {"positive": [2, 2], "negative": [2, 2]}},
            "first_as_of_date": "2015-01-01",
            "cadence_months": 12,
            "n_cohorts": 3,
        }
    )
    assert [d.isoformat() for d in cfg.cohort_dates] == ["2015-01-01", "2016-01-01", "2017-01-01"]
    with pytest.raises(ConfigError):
        SynthConfig.from_dict({"n_entities": 10, "bogus": 1})


def test_generation_fractions_and_prevalence(synth_config):
    cfg = synth_config
    preds = generate_cohort(cfg, cfg.cohort_dates[0])
    ents = preds.frame.drop_duplicates("entity_id")
    n = len(ents)
    assert n == cfg.n_entities
    assert preds.model_ids == tuple(cfg.model_ids)
    for g, spec in cfg.groups.items():
        in_g = ents[ents["group"] == g]
        assert abs(len(in_g) / n - spec["fraction"]) <= 2 / np.sqrt(n)
        assert abs(in_g["label"].mean() - spec["prevalence"]) <= 3 / np.sqrt(len(in_g))
    assert preds.frame["score"].between(0, 1).all()


def _top_k_disparity(preds, k, ref):
    ranked = rank(preds, preds.model_ids[0], 0)
    return evaluate_selection(preds, top_k_ids(ranked, k), ref).disparity


def test_knob_zero_is_symmetric():
    cfg = _symmetric()
    d = _top_k_disparity(generate_cohort(cfg, cfg.cohort_dates[0]), 500, "A")
    assert abs(d["B"] - 1) < 0.1


def test_knob_creates_disparity(synth_config):
    cfg = dataclasses.replace(synth_config, n_models=1)
    d = _top_k_disparity(generate_cohort(cfg, cfg.cohort_dates[0]), 500, "white")
    assert d["black"] > 1.4 and d["hispanic"] > 1.4


def test_determinism_and_byte_identical_files(tmp_path, synth_config):
    cfg = dataclasses.replace(synth_config, n_entities=500)
    a = write_synthetic(cfg, tmp_path / "a")
    b = write_synthetic(cfg, tmp_path / "b")
    assert [p.name for p in a] == [p.name for p in b] == [
        "predictions_2015-01-01.csv",
        "predictions_2016-01-01.csv",
        "predictions_2017-01-01.csv",
    ]
    for x, y in zip(a, b):
        assert hashlib.sha256(x.read_bytes()).digest() == hashlib.sha256(y.read_bytes()).digest()
    other = write_synthetic(cfg, tmp_path / "c", seed=1)
    assert a[0].read_bytes() != other[0].read_bytes()


def test_derive_rng_streams():
    assert derive_rng(1, "x").random() == derive_rng(1, "x").random()
    assert derive_rng(1, "x").random() != derive_rng(1, "y").random()
