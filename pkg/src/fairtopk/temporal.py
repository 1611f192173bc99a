"""Inter-temporal validation splits: (train, validation, test) as-of dates."""
from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass
from pathlib import Path

from dateutil.relativedelta import relativedelta

from .cohort import PredictionSet, parse_predictions
from .errors import BindingError, ConfigError


@dataclass(frozen=True)
class SplitConfig:
    first_as_of_date: dt.date
    label_window: int  # months
    cadence: int  # months
    n_splits: int = 1

    def __post_init__(self):
        if self.n_splits < 1:
            raise ConfigError(f"n_splits must be >= 1, got {self.n_splits}")
        if self.label_window <= 0 or self.cadence <= 0:
            raise ConfigError("label_window and cadence must be positive month counts")

    @classmethod
    def from_dict(cls, d: dict) -> "SplitConfig":
        try:
            return cls(
                first_as_of_date=dt.date.fromisoformat(str(d["first_as_of_date"])),
                label_window=int(d["label_window"]),
                cadence=int(d["cadence"]),
                n_splits=int(d.get("n_splits", 1)),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"bad split config: {exc}") from None


@dataclass(frozen=True)
class TemporalSplit:
    split_id: int
    train_as_of: dt.date
    validation_as_of: dt.date
    test_as_of: dt.date
    label_window: int

    def label_end(self, as_of: dt.date) -> dt.date:
        """Exclusive end of the label window opened at ``as_of``."""
        return as_of + relativedelta(months=self.label_window)

    def is_leak_free(self) -> bool:
        return (
            self.label_end(self.train_as_of) <= self.validation_as_of
            and self.label_end(self.validation_as_of) <= self.test_as_of
        )

    def to_dict(self) -> dict:
        w = self.label_window
        return {
            "split_id": self.split_id,
            "train_as_of": self.train_as_of.isoformat(),
            "validation_as_of": self.validation_as_of.isoformat(),
            "test_as_of": self.test_as_of.isoformat(),
            "label_window_months": w,
            "train_labels": [self.train_as_of.isoformat(), self.label_end(self.train_as_of).isoformat()],
            "validation_labels": [self.validation_as_of.isoformat(), self.label_end(self.validation_as_of).isoformat()],
            "test_labels": [self.test_as_of.isoformat(), self.label_end(self.test_as_of).isoformat()],
        }


def generate_splits(config: SplitConfig) -> list[TemporalSplit]:
    """Rolling splits, one per cadence step starting at ``first_as_of_date``.

    Month arithmetic clamps to the end of the month (Jan 31 + 1 month is
    the last day of February).
    """
    if config.cadence < config.label_window:
        raise ConfigError(
            f"cadence ({config.cadence} months) shorter than label window "
            f"({config.label_window} months) would leak labels across cohorts"
        )
    first = config.first_as_of_date
    splits = []
    for i in range(config.n_splits):
        test = first + relativedelta(months=i * config.cadence)
        split = TemporalSplit(
            split_id=i,
            train_as_of=first + relativedelta(months=(i - 2) * config.cadence),
            validation_as_of=first + relativedelta(months=(i - 1) * config.cadence),
            test_as_of=test,
            label_window=config.label_window,
        )
        if not split.is_leak_free():
            raise ConfigError(f"split {i} violates the no-leakage ordering: {split}")
        splits.append(split)
    return splits


def splits_to_json(splits, **kwargs) -> str:
    return json.dumps([s.to_dict() for s in splits], **kwargs)


def cohort_path(data_dir, as_of: dt.date) -> Path:
    return Path(data_dir) / f"predictions_{as_of.isoformat()}.csv"


@dataclass(frozen=True)
class BoundSplit:
    split: TemporalSplit
    val: PredictionSet
    test: PredictionSet


def bind_cohorts(splits, data_dir, attribute_name: str, loader=parse_predictions) -> list[BoundSplit]:
    """Load the validation and test cohorts of every split.

    All missing files are reported together.
    """
    needed = sorted({d for s in splits for d in (s.validation_as_of, s.test_as_of)})
    missing = [d for d in needed if not cohort_path(data_dir, d).is_file()]
    if missing:
        raise BindingError(missing)
    cache = {d: loader(cohort_path(data_dir, d), attribute_name) for d in needed}
    return [BoundSplit(s, cache[s.validation_as_of], cache[s.test_as_of]) for s in splits]
