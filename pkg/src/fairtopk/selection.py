"""Model selection strategies with and without recall equalization."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .cohort import PredictionSet, compute_group_stats
from .errors import DomainError, InputError
from .metrics import (
    EvaluationReport,
    default_reference_group,
    evaluate_selection,
    rank,
    recall_values,
    top_k_ids,
)
from .mitigation import EqualizedAllocation, apply_allocation, equalize_allocation, equalize_allocation_multi

UNMITIGATED = "unmitigated"
MITIGATED_SINGLE = "mitigated_single"
MITIGATED_UNADJUSTED = "mitigated_unadjusted_selection"
MITIGATED_COMPOSITE = "mitigated_composite"
STRATEGIES = (UNMITIGATED, MITIGATED_SINGLE, MITIGATED_UNADJUSTED, MITIGATED_COMPOSITE)


@dataclass(frozen=True)
class PlainTopK:
    k: int
    model_id: str

    def to_dict(self) -> dict:
        return {"type": "top_k", "k": self.k, "model_id": self.model_id}


@dataclass
class StrategyOutcome:
    strategy: str
    chosen: str | dict
    allocation: EqualizedAllocation | PlainTopK
    validation_report: EvaluationReport
    test_report: EvaluationReport
    candidates: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        alloc = self.allocation.to_dict()
        if isinstance(self.allocation, EqualizedAllocation):
            alloc = {"type": "equalized", **alloc}
        return {
            "strategy": self.strategy,
            "chosen": self.chosen,
            "allocation": alloc,
            "validation_report": self.validation_report.to_dict(),
            "test_report": self.test_report.to_dict(),
            "candidates": self.candidates,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kwargs)


def candidate_models(val: PredictionSet, test: PredictionSet, models=None) -> list:
    common = sorted(set(val.model_ids) & set(test.model_ids))
    if models is not None:
        missing = sorted(set(models) - set(common))
        if missing:
            raise InputError(f"models {missing} are not scored in both cohorts")
        common = sorted(models)
    if not common:
        raise InputError("validation and test cohorts share no model_id")
    return common


def _argmax(values: dict) -> str:
    # exact ties go to the lexicographically smallest model id
    return min(values, key=lambda m: (-values[m], m))


def _reference(val: PredictionSet, reference_group):
    if reference_group is not None:
        return reference_group
    return default_reference_group(compute_group_stats(val).n)


def select_unmitigated(val, test, k, seed, models=None, reference_group=None) -> StrategyOutcome:
    models = candidate_models(val, test, models)
    ref = _reference(val, reference_group)
    ranked = {m: rank(val, m, seed) for m in models}
    _check_k(k, len(ranked[models[0]]))
    precision = {m: float(ranked[m].labels[:k].sum()) / k for m in models}
    best = _argmax(precision)
    return StrategyOutcome(
        strategy=UNMITIGATED,
        chosen=best,
        allocation=PlainTopK(k, best),
        validation_report=evaluate_selection(val, top_k_ids(ranked[best], k), ref),
        test_report=evaluate_selection(test, top_k_ids(rank(test, best, seed), k), ref),
        candidates={"val_precision": precision},
    )


def _check_k(k, n):
    if not 1 <= k <= n:
        raise DomainError(f"k={k} outside [1, {n}]")


def _mitigated(strategy, val, test, k, seed, best, alloc, ref, candidates) -> StrategyOutcome:
    return StrategyOutcome(
        strategy=strategy,
        chosen=best,
        allocation=alloc,
        validation_report=evaluate_selection(val, apply_allocation(val, alloc, seed), ref),
        test_report=evaluate_selection(test, apply_allocation(test, alloc, seed), ref),
        candidates=candidates,
    )


def select_mitigated_single(val, test, k, seed, models=None, reference_group=None) -> StrategyOutcome:
    """Equalize every model on validation, then keep the most precise one."""
    models = candidate_models(val, test, models)
    ref = _reference(val, reference_group)
    allocs = {m: equalize_allocation(val, m, k, seed) for m in models}
    precision = {m: _val_precision(val, allocs[m], seed) for m in models}
    best = _argmax(precision)
    return _mitigated(
        MITIGATED_SINGLE, val, test, k, seed, best, allocs[best], ref, {"val_precision_adjusted": precision}
    )


def select_mitigated_unadjusted(val, test, k, seed, models=None, reference_group=None) -> StrategyOutcome:
    """Pick the most precise unadjusted model, then equalize it."""
    models = candidate_models(val, test, models)
    ref = _reference(val, reference_group)
    precision = {}
    for m in models:
        ranked = rank(val, m, seed)
        _check_k(k, len(ranked))
        precision[m] = float(ranked.labels[:k].sum()) / k
    best = _argmax(precision)
    alloc = equalize_allocation(val, best, k, seed)
    return _mitigated(MITIGATED_UNADJUSTED, val, test, k, seed, best, alloc, ref, {"val_precision": precision})


def _val_precision(val, alloc, seed) -> float:
    chosen = set(apply_allocation(val, alloc, seed))
    entities = val.frame.drop_duplicates("entity_id")
    return float(entities.loc[entities["entity_id"].isin(chosen), "label"].sum()) / alloc.k_total


@dataclass
class CompositeSearch:
    """Trace of the recall-level sweep used to pick per-group models."""

    levels: np.ndarray
    totals: np.ndarray
    balancing_level: float
    sweep_counts: dict
    group_models: dict


def composite_search(val: PredictionSet, models, k: int, seed: int) -> CompositeSearch:
    """Choose one model per group for the composite strategy.

    For each achievable recall level r and group g, the shallowest depth
    reaching r over all models gives k_g(r) (the shallowest model is also
    the most precise there, since the positive count at that depth is
    fixed). The largest r with sum_g k_g(r) <= k is the balancing level;
    leftover slots go one at a time to the group whose next recall value is
    smallest. Each group then takes the model with the best within-group
    precision at its resulting depth.
    """
    models = sorted(models)
    ranked = {m: rank(val, m, seed) for m in models}
    groups = sorted(set(ranked[models[0]].groups))
    _check_k(k, len(ranked[models[0]]))

    # positive_depths[g][m][j-1] = depth of the j-th positive of g under m
    positive_depths, positives, sizes = {}, {}, {}
    for g in groups:
        positive_depths[g] = {}
        for m in models:
            labels = ranked[m].labels[ranked[m].group_positions(g)]
            positive_depths[g][m] = np.flatnonzero(labels) + 1
            positives[g] = int(labels.sum())
            sizes[g] = labels.size

    steps = {g: np.arange(positives[g] + 1) / positives[g] for g in groups if positives[g] > 0}
    levels = np.unique(np.concatenate([np.zeros(1), *steps.values()]))

    def counts_at(r):
        out, chosen = {}, {}
        for g in groups:
            if positives[g] == 0:
                out[g], chosen[g] = 0, models[0]
                continue
            j = int(np.searchsorted(steps[g], r, side="left"))
            if j == 0:
                out[g], chosen[g] = 0, models[0]
                continue
            depth = {m: int(positive_depths[g][m][j - 1]) for m in models}
            chosen[g] = min(models, key=lambda m: (depth[m], m))
            out[g] = depth[chosen[g]]
        return out, chosen

    totals = np.empty(levels.size, dtype=np.int64)
    per_level = []
    for i, r in enumerate(levels):
        c, ch = counts_at(r)
        totals[i] = sum(c.values())
        per_level.append((c, ch))
    best = int(np.flatnonzero(totals <= k)[-1])
    counts, sweep_models = dict(per_level[best][0]), per_level[best][1]

    remaining = k - sum(counts.values())
    curves, ties = {}, {}
    for g in groups:
        rl = ranked[sweep_models[g]]
        pos = rl.group_positions(g)
        # curves[g][d] = recall after the top d members
        curves[g] = np.concatenate([[0.0], recall_values(rl.labels[pos])])
        if positives[g] == 0:
            curves[g][0] = 1.0
        ties[g] = rl.tie_keys[pos]
    while remaining > 0:
        open_groups = [g for g in groups if counts[g] < sizes[g]]
        g = min(open_groups, key=lambda h: (curves[h][counts[h] + 1], counts[h] + 1, int(ties[h][counts[h]])))
        counts[g] += 1
        remaining -= 1

    group_models = {}
    for g in groups:
        d = counts[g]
        if d == 0:
            group_models[g] = models[0]
            continue
        precision = {}
        for m in models:
            labels = ranked[m].labels[ranked[m].group_positions(g)]
            precision[m] = float(labels[:d].sum()) / d
        group_models[g] = _argmax(precision)
    return CompositeSearch(
        levels=levels,
        totals=totals,
        balancing_level=float(levels[best]),
        sweep_counts=counts,
        group_models=group_models,
    )


def select_mitigated_composite(val, test, k, seed, models=None, reference_group=None) -> StrategyOutcome:
    """Per-group best models combined under one recall-balanced allocation."""
    models = candidate_models(val, test, models)
    ref = _reference(val, reference_group)
    search = composite_search(val, models, k, seed)
    alloc = equalize_allocation_multi(val, search.group_models, k, seed)
    return _mitigated(
        MITIGATED_COMPOSITE,
        val,
        test,
        k,
        seed,
        dict(search.group_models),
        alloc,
        ref,
        {"balancing_level": search.balancing_level, "sweep_counts": search.sweep_counts},
    )


SELECTORS = {
    UNMITIGATED: select_unmitigated,
    MITIGATED_SINGLE: select_mitigated_single,
    MITIGATED_UNADJUSTED: select_mitigated_unadjusted,
    MITIGATED_COMPOSITE: select_mitigated_composite,
}


def run_strategies(val, test, k, seed, models=None, reference_group=None, strategies=STRATEGIES) -> dict:
    return {s: SELECTORS[s](val, test, k, seed, models, reference_group) for s in strategies}
