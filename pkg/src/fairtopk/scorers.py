"""Baseline scorers and a synthetic scored-cohort generator."""
from __future__ import annotations

import datetime as dt
import hashlib
import json
import operator
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from dateutil.relativedelta import relativedelta
from scipy.stats import rankdata
from sklearn.base import BaseEstimator

from .cohort import PredictionSet, write_predictions
from .errors import ConfigError, InputError, UnknownKeyError
from .temporal import cohort_path


class FeatureTypeError(InputError, TypeError):
    pass


def _numeric_column(features: pd.DataFrame, column: str) -> np.ndarray:
    if column not in features.columns:
        raise UnknownKeyError(f"unknown feature column {column!r}")
    values = features[column]
    if not (pd.api.types.is_numeric_dtype(values) or pd.api.types.is_bool_dtype(values)):
        raise FeatureTypeError(f"column {column!r} is not numeric (dtype {values.dtype})")
    return values.to_numpy(dtype=float)


def percentile_rank_one_feature(features: pd.DataFrame, column: str, descending: bool = False) -> pd.Series:
    """Score each row by the share of other rows with a strictly smaller value.

    ``score = (# strictly smaller) / (n - 1)``, so scores span [0, 1] and tied
    values share a score. A single row scores 0.5. ``descending`` ranks the
    negated column (small raw values score high).
    """
    values = _numeric_column(features, column)
    if descending:
        values = -values
    n = len(values)
    if n == 1:
        scores = np.array([0.5])
    else:
        scores = (rankdata(values, method="min") - 1) / (n - 1)
    return pd.Series(scores, index=features.index, name="score")


COMPARATORS = {
    ">": operator.gt,
    ">=": operator.ge,
    "<": operator.lt,
    "<=": operator.le,
    "==": operator.eq,
    "!=": operator.ne,
}


def simple_thresholder(features: pd.DataFrame, rules, logical_operator: str = "and") -> pd.Series:
    """1 where every ``(column, comparator, constant)`` rule holds, else 0."""
    if logical_operator.lower() != "and":
        raise ConfigError(f"unsupported logical operator {logical_operator!r}")
    rules = list(rules)
    for _, comp, _ in rules:
        if comp not in COMPARATORS:
            raise ConfigError(f"unknown comparator {comp!r}")
    if not rules:
        warnings.warn("no threshold rules; every row scores 1", UserWarning)
    hit = np.ones(len(features), dtype=bool)
    for column, comp, constant in rules:
        hit &= COMPARATORS[comp](_numeric_column(features, column), constant)
    return pd.Series(hit.astype(float), index=features.index, name="score")


class PercentileRankOneFeature(BaseEstimator):
    """Rank-one-feature baseline; scores are percentiles within the scored table."""

    def __init__(self, feature=None, descending=False):
        self.feature = feature
        self.descending = descending

    def fit(self, X, y=None):
        _numeric_column(X, self.feature)
        self.feature_names_in_ = np.asarray(X.columns, dtype=object)
        return self

    def predict_proba(self, X):
        s = percentile_rank_one_feature(X, self.feature, self.descending).to_numpy()
        return np.column_stack([1 - s, s])


class SimpleThresholder(BaseEstimator):
    """Conjunction-of-rules baseline producing 0/1 scores."""

    def __init__(self, rules=(), logical_operator="and"):
        self.rules = rules
        self.logical_operator = logical_operator

    def fit(self, X, y=None):
        for column, _, _ in self.rules:
            _numeric_column(X, column)
        self.feature_names_in_ = np.asarray(X.columns, dtype=object)
        return self

    def predict_proba(self, X):
        s = simple_thresholder(X, self.rules, self.logical_operator).to_numpy()
        return np.column_stack([1 - s, s])


def derive_rng(*parts) -> np.random.Generator:
    """Independent RNG stream keyed by a hash of ``parts``."""
    digest = hashlib.blake2b("\x1f".join(map(str, parts)).encode("utf-8"), digest_size=16).digest()
    return np.random.default_rng(np.frombuffer(digest, dtype=np.uint32))


@dataclass
class SynthConfig:
    """Synthetic cohort recipe.

    ``groups`` maps each group to ``{"fraction": f, "prevalence": p}``.
    ``score_model`` maps a group (or ``"*"`` for the default) to
    ``{"positive": [a, b], "negative": [a, b]}`` Beta parameters of the
    latent score. ``disparity_knob`` is subtracted from the latent score of
    positives in ``disadvantaged_groups``. Each model adds Gaussian noise of
    scale ``model_noise`` to the latent score on the logit scale.
    """

    n_entities: int
    groups: dict
    score_model: dict
    disparity_knob: float = 0.0
    disadvantaged_groups: list = field(default_factory=list)
    n_models: int = 3
    model_noise: float = 0.5
    seed: int = 0
    attribute: str = "group"
    cohort_dates: list = field(default_factory=list)

    def __post_init__(self):
        self.cohort_dates = [d if isinstance(d, dt.date) else dt.date.fromisoformat(str(d)) for d in self.cohort_dates]
        self.validate()

    def validate(self):
        if self.n_entities < 1:
            raise ConfigError("n_entities must be positive")
        if not self.groups:
            raise ConfigError("no groups configured")
        total = sum(float(g["fraction"]) for g in self.groups.values())
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"group fractions sum to {total}, expected 1")
        for name, g in self.groups.items():
            if not 0.0 <= float(g["prevalence"]) <= 1.0:
                raise ConfigError(f"prevalence of {name!r} outside [0, 1]")
            for label in ("positive", "negative"):
                a, b = self.beta_params(name, label)
                if not (a > 0 and b > 0):
                    raise ConfigError(f"Beta parameters for ({name!r}, {label}) must be positive")
        if self.disparity_knob < 0:
            raise ConfigError("disparity_knob must be >= 0")
        unknown = set(self.disadvantaged_groups) - set(self.groups)
        if unknown:
            raise ConfigError(f"unknown disadvantaged groups {sorted(unknown)}")
        if self.n_models < 1:
            raise ConfigError("n_models must be >= 1")
        if not self.cohort_dates:
            raise ConfigError("no cohort dates configured")

    def beta_params(self, group: str, label: str) -> tuple:
        spec = self.score_model.get(group, self.score_model.get("*"))
        if spec is None or label not in spec:
            raise ConfigError(f"no score model for ({group!r}, {label})")
        a, b = spec[label]
        return float(a), float(b)

    @property
    def model_ids(self) -> list:
        return [f"model_{i}" for i in range(self.n_models)]

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        if "cohort_dates" not in d and "first_as_of_date" in d:
            first = dt.date.fromisoformat(d.pop("first_as_of_date"))
            step = int(d.pop("cadence_months", 12))
            n = int(d.pop("n_cohorts", 1))
            d["cohort_dates"] = [first + relativedelta(months=i * step) for i in range(n)]
        try:
            return cls(**d)
        except (TypeError, KeyError, ValueError) as exc:
            raise ConfigError(f"bad synthetic config: {exc}") from None

    @classmethod
    def from_json(cls, path) -> "SynthConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read synthetic config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("synthetic config must be a JSON object")
        return cls.from_dict(data)


def _logit(p):
    p = np.clip(p, 1e-6, 1 - 1e-6)
    return np.log(p) - np.log1p(-p)


def generate_cohort(config: SynthConfig, cohort_date: dt.date, seed: int | None = None) -> PredictionSet:
    """One synthetic scored cohort with every model's predictions."""
    seed = config.seed if seed is None else seed
    rng = derive_rng(seed, cohort_date.isoformat(), "entities")
    names = list(config.groups)
    fractions = np.array([float(config.groups[g]["fraction"]) for g in names])
    n = config.n_entities
    group_idx = rng.choice(len(names), size=n, p=fractions / fractions.sum())
    groups = np.array(names, dtype=object)[group_idx]
    prevalence = np.array([float(config.groups[g]["prevalence"]) for g in names])[group_idx]
    labels = (rng.random(n) < prevalence).astype(np.int64)

    latent = np.empty(n)
    for gi, g in enumerate(names):
        for label, key in ((1, "positive"), (0, "negative")):
            mask = (group_idx == gi) & (labels == label)
            a, b = config.beta_params(g, key)
            latent[mask] = rng.beta(a, b, size=int(mask.sum()))
    shifted = np.isin(groups, list(config.disadvantaged_groups)) & (labels == 1)
    latent[shifted] = np.maximum(latent[shifted] - config.disparity_knob, 0.0)
    base = _logit(latent)

    entity_ids = np.array([f"e{i:06d}" for i in range(n)], dtype=object)
    frames = []
    for model_id in config.model_ids:
        noise = derive_rng(seed, cohort_date.isoformat(), model_id).standard_normal(n)
        scores = np.round(1.0 / (1.0 + np.exp(-(base + config.model_noise * noise))), 6)
        frames.append(
            pd.DataFrame(
                {
                    "entity_id": entity_ids,
                    "as_of_date": cohort_date,
                    "model_id": model_id,
                    "score": scores,
                    "label": labels,
                    "group": groups,
                }
            )
        )
    return PredictionSet.from_frame(pd.concat(frames, ignore_index=True), config.attribute)


def generate_synthetic(config: SynthConfig, seed: int | None = None) -> dict:
    """Cohorts keyed by as-of date, deterministic in ``(config, seed)``."""
    return {d: generate_cohort(config, d, seed) for d in config.cohort_dates}


def write_synthetic(config: SynthConfig, out_dir, seed: int | None = None) -> list[Path]:
    """Write one ``predictions_<date>.csv`` per cohort date; return the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for d, preds in generate_synthetic(config, seed).items():
        path = cohort_path(out_dir, d)
        write_predictions(preds, path)
        paths.append(path)
    return paths
