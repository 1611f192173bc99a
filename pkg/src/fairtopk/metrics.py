"""Ranking with seeded tie-breaking and top-k evaluation metrics."""
from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .cohort import PredictionSet
from .errors import DomainError, UnknownKeyError


def tie_hash(seed: int, entity_ids) -> np.ndarray:
    """Keyed 64-bit hash of each entity id; the tie-break key for ranking.

    Depends only on ``(seed, entity_id)``, so the order of tied records never
    depends on input row order.
    """
    key = int(seed).to_bytes(8, "little", signed=True)
    out = np.empty(len(entity_ids), dtype=np.uint64)
    for i, eid in enumerate(entity_ids):
        digest = hashlib.blake2b(str(eid).encode("utf-8"), digest_size=8, key=key).digest()
        out[i] = int.from_bytes(digest, "little")
    return out


@dataclass(frozen=True, eq=False)
class RankedList:
    """One model's records in rank order (best first)."""

    entity_ids: np.ndarray
    scores: np.ndarray
    labels: np.ndarray
    groups: np.ndarray
    tie_keys: np.ndarray
    seed: int
    model_id: str = ""

    def __len__(self) -> int:
        return len(self.entity_ids)

    def group_positions(self, group: str) -> np.ndarray:
        pos = np.flatnonzero(self.groups == group)
        if pos.size == 0:
            raise UnknownKeyError(f"unknown group {group!r}")
        return pos


def rank_frame(rows: pd.DataFrame, seed: int, model_id: str = "") -> RankedList:
    """Rank a frame of single-model rows by score desc, then tie hash, then id."""
    ids = rows["entity_id"].to_numpy(dtype=object)
    scores = rows["score"].to_numpy(dtype=float)
    keys = tie_hash(seed, ids)
    # lexsort sorts by the last key first; entity id only matters on a 64-bit hash collision
    order = np.lexsort((ids.astype(str), keys, -scores))
    return RankedList(
        entity_ids=ids[order],
        scores=scores[order],
        labels=rows["label"].to_numpy(dtype=np.int64)[order],
        groups=rows["group"].to_numpy(dtype=object)[order],
        tie_keys=keys[order],
        seed=seed,
        model_id=model_id,
    )


def rank(preds: PredictionSet, model_id: str, seed: int) -> RankedList:
    """Rank one model's predictions; ties broken by the seeded entity hash."""
    # prediction sets are read-only, so rankings can be memoized on the instance
    cache = preds.__dict__.setdefault("_rank_cache", {})
    key = (model_id, int(seed))
    if key not in cache:
        cache[key] = rank_frame(preds.for_model(model_id), seed, model_id)
    return cache[key]


def precision_at_k(ranked: RankedList, k: int) -> float:
    if not 1 <= k <= len(ranked):
        raise DomainError(f"k={k} outside [1, {len(ranked)}]")
    return float(ranked.labels[:k].sum()) / k


def recall_values(labels: np.ndarray) -> np.ndarray:
    """Within-group recall after each depth for labels given in rank order.

    A group with no positives has recall 1 at every depth.
    """
    labels = np.asarray(labels, dtype=np.int64)
    positives = int(labels.sum())
    if positives == 0:
        return np.ones(len(labels))
    return np.cumsum(labels) / positives


@dataclass(frozen=True)
class RecallCurve:
    group: str
    values: np.ndarray
    positives: int

    def at(self, depth: int) -> float:
        """Recall after the top ``depth`` members (depth 0 gives 0, or 1 without positives)."""
        if depth == 0:
            return 1.0 if self.positives == 0 else 0.0
        return float(self.values[depth - 1])


def recall_curve(ranked: RankedList, group: str) -> RecallCurve:
    labels = ranked.labels[ranked.group_positions(group)]
    return RecallCurve(group=group, values=recall_values(labels), positives=int(labels.sum()))


def disparity_ratios(recalls: dict, reference: str) -> dict:
    """Reference-over-group recall ratios; values above 1 favour the reference.

    A group with zero recall gets ``inf`` (with a warning).
    """
    if reference not in recalls:
        raise UnknownKeyError(f"unknown reference group {reference!r}")
    ref = recalls[reference]
    if ref <= 0:
        raise DomainError(f"reference group {reference!r} has zero recall")
    out = {}
    for g, r in recalls.items():
        if g == reference:
            out[g] = 1.0
        elif r == 0:
            warnings.warn(f"group {g!r} has zero recall; disparity is infinite", RuntimeWarning)
            out[g] = math.inf
        else:
            out[g] = ref / r
    return out


def default_reference_group(sizes: dict) -> str:
    """Largest group, lexicographically smallest among equals."""
    return min(sizes, key=lambda g: (-sizes[g], g))


@dataclass
class EvaluationReport:
    k: int
    precision_at_k: float
    recall: dict
    selected: dict
    disparity: dict
    reference_group: str
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "precision_at_k": self.precision_at_k,
            "recall": dict(self.recall),
            "selected": dict(self.selected),
            "disparity": dict(self.disparity),
            "reference_group": self.reference_group,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kwargs)

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationReport":
        return cls(
            k=int(d["k"]),
            precision_at_k=float(d["precision_at_k"]),
            recall={g: float(v) for g, v in d["recall"].items()},
            selected={g: int(v) for g, v in d.get("selected", {}).items()},
            disparity={g: float(v) for g, v in d["disparity"].items()},
            reference_group=d["reference_group"],
        )


def evaluate_selection(preds: PredictionSet, selected_ids, reference_group: str | None = None) -> EvaluationReport:
    """Precision, per-group recall and disparity for a selected set of entities.

    Recall is measured against each group's positives in the whole cohort.
    """
    entities = preds.frame.drop_duplicates("entity_id")
    chosen = entities["entity_id"].isin(set(selected_ids)).to_numpy()
    k = int(chosen.sum())
    if k == 0:
        raise DomainError("empty selection")
    labels = entities["label"].to_numpy()
    groups = entities["group"].to_numpy(dtype=object)
    recall, selected, sizes = {}, {}, {}
    for g in sorted(set(groups)):
        in_g = groups == g
        pos = int(labels[in_g].sum())
        hit = int(labels[in_g & chosen].sum())
        recall[g] = 1.0 if pos == 0 else hit / pos
        selected[g] = int((in_g & chosen).sum())
        sizes[g] = int(in_g.sum())
    ref = reference_group if reference_group is not None else default_reference_group(sizes)
    return EvaluationReport(
        k=k,
        precision_at_k=float(labels[chosen].sum()) / k,
        recall=recall,
        selected=selected,
        disparity=disparity_ratios(recall, ref),
        reference_group=ref,
    )


def top_k_ids(ranked: RankedList, k: int) -> list:
    if not 1 <= k <= len(ranked):
        raise DomainError(f"k={k} outside [1, {len(ranked)}]")
    return list(ranked.entity_ids[:k])
