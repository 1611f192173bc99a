"""Scored prediction cohorts: data model, CSV ingestion and group statistics."""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np
import pandas as pd

from .errors import (
    EmptyInputError,
    RowValidationError,
    SchemaError,
    UniquenessError,
    UnknownKeyError,
)

BASE_COLUMNS = ("entity_id", "as_of_date", "model_id", "score", "label")
KEY_COLUMNS = ["entity_id", "as_of_date", "model_id"]


@dataclass(frozen=True)
class PredictionRecord:
    entity_id: str
    as_of_date: dt.date
    model_id: str
    score: float
    label: int
    group: str


@dataclass(frozen=True, eq=False)
class PredictionSet:
    """Validated cohort of scored entities for one as-of date.

    The underlying frame has columns ``entity_id, as_of_date, model_id,
    score, label, group`` (the protected attribute is always stored under
    ``group``; its original column name is kept in ``attribute_name``).
    Treat it as read-only.
    """

    frame: pd.DataFrame
    attribute_name: str
    cohort_date: dt.date

    @property
    def model_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self.frame["model_id"].unique()))

    @property
    def groups(self) -> tuple[str, ...]:
        return tuple(sorted(self.frame["group"].unique()))

    def __len__(self) -> int:
        return len(self.frame)

    def __iter__(self) -> Iterator[PredictionRecord]:
        for row in self.frame.itertuples(index=False):
            yield PredictionRecord(
                row.entity_id, row.as_of_date, row.model_id, float(row.score), int(row.label), row.group
            )

    def __eq__(self, other) -> bool:
        if not isinstance(other, PredictionSet):
            return NotImplemented
        if (self.attribute_name, self.cohort_date) != (other.attribute_name, other.cohort_date):
            return False
        a = self.frame.sort_values(KEY_COLUMNS).reset_index(drop=True)
        b = other.frame.sort_values(KEY_COLUMNS).reset_index(drop=True)
        return a.equals(b)

    def for_model(self, model_id: str) -> pd.DataFrame:
        """Rows scored by ``model_id`` (one row per entity)."""
        rows = self.frame[self.frame["model_id"] == model_id]
        if rows.empty:
            raise UnknownKeyError(f"unknown model_id {model_id!r}")
        return rows

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, attribute_name: str = "group") -> "PredictionSet":
        """Build from an already-typed frame, checking every invariant.

        ``frame`` may carry the protected attribute either as ``group`` or
        under ``attribute_name``.
        """
        frame = frame.copy()
        if "group" not in frame.columns and attribute_name in frame.columns:
            frame = frame.rename(columns={attribute_name: "group"})
        for col in (*BASE_COLUMNS, "group"):
            if col not in frame.columns:
                raise SchemaError(attribute_name if col == "group" else col)
        frame = frame[[*BASE_COLUMNS, "group"]].reset_index(drop=True)
        frame["entity_id"] = frame["entity_id"].astype(str)
        frame["model_id"] = frame["model_id"].astype(str)
        frame["group"] = frame["group"].astype(str)
        frame["score"] = frame["score"].astype(float)
        _check_rows(frame)
        frame["label"] = frame["label"].astype(np.int64)
        return cls._finish(frame, attribute_name)

    @classmethod
    def _finish(cls, frame: pd.DataFrame, attribute_name: str) -> "PredictionSet":
        if frame.empty:
            raise EmptyInputError("prediction set has no records")
        dates = frame["as_of_date"].unique()
        if len(dates) != 1:
            raise RowValidationError(
                _first_line_where(frame["as_of_date"] != frame["as_of_date"].iloc[0]),
                f"records span several as-of dates: {sorted(map(str, dates))}",
            )
        dup = frame.duplicated(KEY_COLUMNS, keep="first")
        if dup.any():
            line = _first_line_where(dup)
            key = tuple(frame.loc[line - 2, KEY_COLUMNS])
            raise UniquenessError(f"line {line}: duplicate (entity_id, as_of_date, model_id) {key}")
        return cls(frame=frame, attribute_name=attribute_name, cohort_date=frame["as_of_date"].iloc[0])


def _first_line_where(mask) -> int:
    return int(np.flatnonzero(np.asarray(mask))[0]) + 2


def _check_rows(frame: pd.DataFrame) -> None:
    checks = [
        (frame["entity_id"] == "", lambda r: "empty entity_id"),
        (~np.isfinite(frame["score"]) | (frame["score"] < 0.0) | (frame["score"] > 1.0),
         lambda r: f"score {r.score!r} outside [0, 1]"),
        (~frame["label"].isin([0, 1]), lambda r: f"label {r.label!r} not in {{0, 1}}"),
        (frame["group"] == "", lambda r: "missing group value"),
    ]
    failures = [(_first_line_where(mask), describe) for mask, describe in checks if mask.any()]
    if failures:
        line, describe = min(failures, key=lambda f: f[0])
        raise RowValidationError(line, describe(frame.iloc[line - 2]))


def parse_predictions(file_path, attribute_name: str) -> PredictionSet:
    """Read and validate a cohort CSV.

    The header must contain ``entity_id, as_of_date, model_id, score, label``
    and the column named by ``attribute_name``. Line numbers in errors count
    the header as line 1.
    """
    path = Path(file_path)
    raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    for col in (*BASE_COLUMNS, attribute_name):
        if col not in raw.columns:
            raise SchemaError(col, path)

    n = len(raw)
    entity_ids = raw["entity_id"].tolist()
    dates = [None] * n
    scores = np.empty(n)
    labels = np.empty(n, dtype=np.int64)
    for i in range(n):
        line = i + 2
        text = raw.at[i, "as_of_date"]
        try:
            dates[i] = dt.date.fromisoformat(text)
        except ValueError:
            raise RowValidationError(line, f"as_of_date {text!r} is not an ISO-8601 date") from None
        text = raw.at[i, "score"]
        try:
            scores[i] = float(text)
        except ValueError:
            raise RowValidationError(line, f"score {text!r} is not a number") from None
        text = raw.at[i, "label"].strip()
        if text not in ("0", "1"):
            raise RowValidationError(line, f"label {text!r} not in {{0, 1}}")
        labels[i] = int(text)

    frame = pd.DataFrame(
        {
            "entity_id": entity_ids,
            "as_of_date": dates,
            "model_id": raw["model_id"].tolist(),
            "score": scores,
            "label": labels,
            "group": raw[attribute_name].tolist(),
        }
    )
    _check_rows(frame)
    return PredictionSet._finish(frame, attribute_name)


def write_predictions(preds: PredictionSet, file_path) -> None:
    """Write ``preds`` in the cohort CSV schema (round-trips exactly)."""
    out = preds.frame.rename(columns={"group": preds.attribute_name}).copy()
    out["as_of_date"] = out["as_of_date"].map(dt.date.isoformat)
    out["score"] = out["score"].map(repr)
    out.to_csv(file_path, index=False, encoding="utf-8", lineterminator="\n")


@dataclass(frozen=True)
class GroupStats:
    """Per-group counts over entities (one model's rows).

    ``pi[g]`` is the joint rate P[G=g, Y=1]; ``prevalence[g]`` is P[Y=1 | G=g].
    """

    n: dict
    positives: dict
    n_total: int

    @property
    def pi(self) -> dict:
        return {g: p / self.n_total for g, p in self.positives.items()}

    @property
    def prevalence(self) -> dict:
        return {g: self.positives[g] / self.n[g] for g in self.n}

    @property
    def overall_prevalence(self) -> float:
        return sum(self.positives.values()) / self.n_total

    @property
    def groups(self) -> tuple[str, ...]:
        return tuple(sorted(self.n))


def compute_group_stats(preds: PredictionSet) -> GroupStats:
    """Group sizes, positive counts and joint positive rates.

    Counts are per entity: with several models in the set, each entity is
    counted once (labels do not depend on the model).
    """
    if len(preds) == 0:
        raise EmptyInputError("cannot compute group stats of an empty set")
    entities = preds.frame.drop_duplicates("entity_id")
    grouped = entities.groupby("group", sort=True)["label"]
    n = {g: int(v) for g, v in grouped.size().items()}
    positives = {g: int(v) for g, v in grouped.sum().items()}
    return GroupStats(n=n, positives=positives, n_total=len(entities))
