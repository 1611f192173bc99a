import datetime as dt
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from fairtopk.cohort import PredictionSet
from fairtopk.scorers import SynthConfig

FIXTURES = Path(__file__).parent / "fixtures"
DATE = dt.date(2020, 1, 1)


def make_set(rows, model_id="m", date=DATE, attribute="group"):
    """PredictionSet from ``(entity_id, score, label, group)`` tuples (or with a model id first)."""
    records = []
    for r in rows:
        if len(r) == 4:
            eid, score, label, group = r
            mid = model_id
        else:
            mid, eid, score, label, group = r
        records.append(dict(entity_id=eid, as_of_date=date, model_id=mid, score=score, label=label, group=group))
    return PredictionSet.from_frame(pd.DataFrame.from_records(records), attribute)


def ranked_group_set(group_labels: dict, model_id="m"):
    """Cohort whose within-group score order reproduces the given label sequences."""
    rows = []
    for g, labels in group_labels.items():
        n = len(labels)
        for i, y in enumerate(labels):
            rows.append((f"{g}{i + 1}", round(0.95 - 0.9 * i / max(n, 1), 6), y, g))
    return make_set(rows, model_id)


def random_frame(rng, n_max=30, n_groups_max=3, n_models=1, score_decimals=None, date=DATE):
    n = int(rng.integers(1, n_max + 1))
    n_groups = int(rng.integers(1, n_groups_max + 1))
    groups = np.array([f"g{i}" for i in rng.integers(0, n_groups, size=n)], dtype=object)
    labels = rng.integers(0, 2, size=n)
    frames = []
    for m in range(n_models):
        scores = rng.random(n)
        if score_decimals is not None:
            scores = np.round(scores, score_decimals)
        frames.append(
            pd.DataFrame(
                dict(
                    entity_id=[f"e{i}" for i in range(n)],
                    as_of_date=date,
                    model_id=f"m{m}",
                    score=scores,
                    label=labels,
                    group=groups,
                )
            )
        )
    return pd.concat(frames, ignore_index=True)


@pytest.fixture(scope="session")
def synth_config():
    return SynthConfig.from_json(FIXTURES / "synth_fixture.json")


SMALL_SYNTH = {
    "n_entities": 600,
    "attribute": "race",
    "groups": {
        "white": {"fraction": 0.55, "prevalence": 0.2},
        "black": {"fraction": 0.34, "prevalence": 0.2},
        "hispanic": {"fraction": 0.11, "prevalence": 0.2},
    },
    "score_model": {"*": {"positive": [4, 3], "negative": [2, 5]}},
    "disparity_knob": 0.12,
    "disadvantaged_groups": ["black", "hispanic"],
    "n_models": 2,
    "model_noise": 0.6,
    "seed": 0,
    "cohort_dates": ["2015-01-01", "2016-01-01", "2017-01-01", "2018-01-01"],
}


@pytest.fixture(scope="session")
def small_synth_dir(tmp_path_factory):
    """Four yearly synthetic cohorts (600 entities, 2 models) on disk."""
    from fairtopk.scorers import write_synthetic

    out = tmp_path_factory.mktemp("synth")
    write_synthetic(SynthConfig.from_dict(SMALL_SYNTH), out)
    return out


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, detail) in ACCEPTANCE_LINES.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
