"""Recall-equalizing top-k allocation.

Per-group list sizes are fit on a validation cohort by merging every group's
within-group recall curve and keeping the k records with the smallest
recall values; the sizes are then carried to a later cohort. The same
selection can be expressed as a group-specific rescaling of the score
around a fixed 0.5 threshold, which ``lambda_from_thresholds`` and
``scaled_scores`` implement.
"""
from __future__ import annotations

import datetime as dt
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_consistent_length, check_is_fitted, column_or_1d

from .cohort import GroupStats, PredictionSet
from .errors import DomainError, ShortfallError, UnknownKeyError
from .metrics import rank, recall_values

THRESHOLD_SENTINEL = 1.0


@dataclass(frozen=True)
class GroupAllocation:
    k: int
    threshold: float
    model_id: str


@dataclass
class EqualizedAllocation:
    k_total: int
    seed: int
    source_cohort_date: dt.date | None
    groups: dict = field(default_factory=dict)

    @property
    def counts(self) -> dict:
        return {g: a.k for g, a in self.groups.items()}

    @property
    def thresholds(self) -> dict:
        return {g: a.threshold for g, a in self.groups.items()}

    @property
    def model_ids(self) -> dict:
        return {g: a.model_id for g, a in self.groups.items()}

    def to_dict(self) -> dict:
        return {
            "k_total": self.k_total,
            "seed": self.seed,
            "source_cohort_date": None if self.source_cohort_date is None else self.source_cohort_date.isoformat(),
            "groups": {
                g: {"k": a.k, "threshold": a.threshold, "model_id": a.model_id}
                for g, a in sorted(self.groups.items())
            },
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kwargs)

    @classmethod
    def from_dict(cls, d: dict) -> "EqualizedAllocation":
        date = d.get("source_cohort_date")
        groups = {
            str(g): GroupAllocation(int(v["k"]), float(v["threshold"]), str(v["model_id"]))
            for g, v in d["groups"].items()
        }
        alloc = cls(
            k_total=int(d["k_total"]),
            seed=int(d["seed"]),
            source_cohort_date=None if date is None else dt.date.fromisoformat(date),
            groups=groups,
        )
        if sum(alloc.counts.values()) != alloc.k_total:
            raise DomainError(f"group sizes sum to {sum(alloc.counts.values())}, expected k_total={alloc.k_total}")
        return alloc


def merge_order(rankings: dict) -> pd.DataFrame:
    """Annotated records of every group in merge order.

    ``rankings`` maps each group to a ranked list holding that group's
    records (different groups may be ranked by different models). Each
    record is annotated with the group's recall at its within-group depth;
    the result is sorted by (recall, within-group rank, tie hash).
    """
    parts = []
    for g, ranked in sorted(rankings.items()):
        pos = ranked.group_positions(g)
        parts.append(
            pd.DataFrame(
                {
                    "entity_id": ranked.entity_ids[pos],
                    "group": g,
                    "recall": recall_values(ranked.labels[pos]),
                    "depth": np.arange(1, pos.size + 1),
                    "tie": ranked.tie_keys[pos],
                    "score": ranked.scores[pos],
                    "label": ranked.labels[pos],
                }
            )
        )
    merged = pd.concat(parts, ignore_index=True)
    order = np.lexsort((merged["tie"].to_numpy(), merged["depth"].to_numpy(), merged["recall"].to_numpy()))
    return merged.iloc[order].reset_index(drop=True)


def _allocate(rankings: dict, k: int, seed: int, cohort_date) -> EqualizedAllocation:
    order = merge_order(rankings)
    if not 1 <= k <= len(order):
        raise DomainError(f"k={k} outside [1, {len(order)}]")
    counts = order["group"].iloc[:k].value_counts()
    groups = {}
    for g, ranked in sorted(rankings.items()):
        k_g = int(counts.get(g, 0))
        pos = ranked.group_positions(g)
        threshold = float(ranked.scores[pos[k_g - 1]]) if k_g > 0 else THRESHOLD_SENTINEL
        groups[g] = GroupAllocation(k_g, threshold, ranked.model_id)
    return EqualizedAllocation(k_total=k, seed=seed, source_cohort_date=cohort_date, groups=groups)


def equalize_allocation(val: PredictionSet, model_id: str, k: int, seed: int) -> EqualizedAllocation:
    """Per-group list sizes that balance recall on a validation cohort."""
    ranked = rank(val, model_id, seed)
    if not 1 <= k <= len(ranked):
        raise DomainError(f"k={k} outside [1, {len(ranked)}]")
    return _allocate({g: ranked for g in set(ranked.groups)}, k, seed, val.cohort_date)


def equalize_allocation_multi(val: PredictionSet, group_models: dict, k: int, seed: int) -> EqualizedAllocation:
    """Like ``equalize_allocation`` but each group is ranked by its own model."""
    ranked = {m: rank(val, m, seed) for m in set(group_models.values())}
    missing = set(val.groups) - set(group_models)
    if missing:
        raise UnknownKeyError(f"no model assigned to groups {sorted(missing)}")
    return _allocate({g: ranked[m] for g, m in group_models.items()}, k, seed, val.cohort_date)


def apply_allocation(test: PredictionSet, alloc: EqualizedAllocation, seed: int) -> list:
    """Top ``k_g`` entities of each group in ``test``, ranked by that group's model.

    Groups in ``test`` that the allocation does not mention get no slots;
    allocation groups missing from ``test`` are an error.
    """
    unknown = sorted(set(alloc.groups) - set(test.groups))
    if unknown:
        raise UnknownKeyError(f"allocation groups {unknown} are absent from the test cohort")
    extra = sorted(set(test.groups) - set(alloc.groups))
    if extra:
        warnings.warn(f"groups {extra} absent from allocation receive no slots", RuntimeWarning)
    rankings = {}
    selected = []
    for g, a in sorted(alloc.groups.items()):
        if a.k == 0:
            continue
        if a.model_id not in rankings:
            rankings[a.model_id] = rank(test, a.model_id, seed)
        ranked = rankings[a.model_id]
        pos = np.flatnonzero(ranked.groups == g)
        if pos.size < a.k:
            raise ShortfallError(g, a.k, int(pos.size))
        selected.extend(ranked.entity_ids[pos[: a.k]])
    return selected


@dataclass(frozen=True)
class ScaledScoreParams:
    """Group-specific multipliers ``1 + lambda_g / pi_g`` applied to the score."""

    lambdas: dict
    pi: dict

    @property
    def multipliers(self) -> dict:
        return {g: 1.0 + self.lambdas[g] / self.pi[g] for g in self.lambdas}


def lambda_from_thresholds(stats: GroupStats, thresholds: dict) -> ScaledScoreParams:
    """Lagrange weights that turn group thresholds into a common cut at 0.

    With ``lambda_g = pi_g * (0.5 / t_g - 1)`` the scaled score
    ``(1 + lambda_g / pi_g) * score - 0.5`` is nonnegative exactly when
    ``score >= t_g``.
    """
    lambdas, pi = {}, {}
    all_pi = stats.pi
    for g, t in thresholds.items():
        if g not in all_pi:
            raise UnknownKeyError(f"unknown group {g!r}")
        if not t > 0:
            raise DomainError(f"threshold for {g!r} must be positive, got {t}")
        if all_pi[g] <= 0:
            raise DomainError(f"group {g!r} has no positives; its scaling is undefined")
        pi[g] = all_pi[g]
        lambdas[g] = pi[g] * (0.5 / t - 1.0)
    return ScaledScoreParams(lambdas=lambdas, pi=pi)


def params_from_allocation(stats: GroupStats, alloc: EqualizedAllocation) -> ScaledScoreParams:
    """Scaling for every group that holds slots and has positives."""
    pi = stats.pi
    thresholds = {g: a.threshold for g, a in alloc.groups.items() if a.k > 0 and pi.get(g, 0) > 0}
    return lambda_from_thresholds(stats, thresholds)


def scaled_scores(preds: PredictionSet, params: ScaledScoreParams, model_id: str | None = None) -> pd.DataFrame:
    """Per-record rescaled scores ``multiplier_g * score - 0.5``.

    Returns the (optionally model-filtered) rows with an extra ``scaled``
    column.
    """
    rows = preds.frame if model_id is None else preds.for_model(model_id)
    missing = sorted(set(rows["group"]) - set(params.lambdas))
    if missing:
        raise UnknownKeyError(f"no scaling parameters for groups {missing}")
    mult = params.multipliers
    out = rows.copy()
    out["scaled"] = out["group"].map(mult).to_numpy(dtype=float) * out["score"].to_numpy() - 0.5
    return out


# Scaled scores at a group's own threshold can land a few ulps below zero.
SCALED_TOL = 1e-12


def select_by_scaled_scores(scaled: pd.DataFrame, tol: float = SCALED_TOL) -> list:
    return list(scaled.loc[scaled["scaled"] >= -tol, "entity_id"])


class RecallEqualizer(BaseEstimator):
    """Estimator wrapper around the recall-balancing allocation.

    ``fit`` learns per-group list sizes (and the matching score thresholds)
    from validation scores, labels and groups; ``predict`` returns a boolean
    mask selecting the top ``k_g`` of each group in new data, and
    ``decision_function`` gives the rescaled scores whose sign reproduces
    the group thresholds.

    Parameters
    ----------
    k : int
        Total list size.
    seed : int
        Tie-break seed.
    """

    def __init__(self, k=100, seed=0):
        self.k = k
        self.seed = seed

    @staticmethod
    def _frame(scores, y, groups, entity_ids):
        scores = column_or_1d(scores).astype(float)
        groups = column_or_1d(groups).astype(str)
        if entity_ids is None:
            entity_ids = np.arange(len(scores)).astype(str)
        entity_ids = column_or_1d(entity_ids).astype(str)
        y = np.zeros(len(scores), dtype=np.int64) if y is None else column_or_1d(y).astype(np.int64)
        check_consistent_length(scores, y, groups, entity_ids)
        return pd.DataFrame(
            {
                "entity_id": entity_ids,
                "as_of_date": dt.date.min,
                "model_id": "m",
                "score": scores,
                "label": y,
                "group": groups,
            }
        )

    def fit(self, scores, y, groups, entity_ids=None):
        frame = self._frame(scores, y, groups, entity_ids)
        val = PredictionSet.from_frame(frame)
        alloc = equalize_allocation(val, "m", self.k, self.seed)
        stats = _stats(frame)
        self.allocation_ = alloc
        self.k_ = alloc.counts
        self.thresholds_ = alloc.thresholds
        self.scaling_ = params_from_allocation(stats, alloc)
        return self

    def predict(self, scores, groups, entity_ids=None):
        check_is_fitted(self, "allocation_")
        frame = self._frame(scores, None, groups, entity_ids)
        test = PredictionSet.from_frame(frame)
        chosen = set(apply_allocation(test, self.allocation_, self.seed))
        return frame["entity_id"].isin(chosen).to_numpy()

    def decision_function(self, scores, groups):
        check_is_fitted(self, "scaling_")
        scores = column_or_1d(scores).astype(float)
        groups = column_or_1d(groups).astype(str)
        check_consistent_length(scores, groups)
        mult = self.scaling_.multipliers
        missing = sorted(set(groups) - set(mult))
        if missing:
            raise UnknownKeyError(f"no scaling parameters for groups {missing}")
        return np.array([mult[g] for g in groups]) * scores - 0.5


def _stats(frame: pd.DataFrame) -> GroupStats:
    grouped = frame.groupby("group")["label"]
    return GroupStats(
        n={g: int(v) for g, v in grouped.size().items()},
        positives={g: int(v) for g, v in grouped.sum().items()},
        n_total=len(frame),
    )
