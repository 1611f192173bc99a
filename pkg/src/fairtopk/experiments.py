"""Experiment harnesses: strategy comparison, list-size sweep, group-fraction
resampling and the precision-shift distribution.

Every harness returns tidy rows keyed by
``(experiment, split_id, strategy, k, fraction, replicate, metric_name, group, seed)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .cohort import PredictionSet, compute_group_stats
from .errors import ConfigError, FairTopKError, UnknownKeyError
from .metrics import default_reference_group, evaluate_selection, rank, top_k_ids
from .mitigation import apply_allocation, equalize_allocation
from .scorers import derive_rng
from .selection import STRATEGIES, candidate_models, run_strategies

KEY = ["experiment", "split_id", "strategy", "k", "fraction", "replicate", "metric_name", "group", "seed"]
COLUMNS = [*KEY, "value"]
Z95 = 1.96


@dataclass
class ExperimentResult:
    rows: pd.DataFrame

    @classmethod
    def from_records(cls, records) -> "ExperimentResult":
        frame = pd.DataFrame.from_records(list(records), columns=COLUMNS)
        return cls(canonical(frame))

    def aggregate(self, over=("split_id", "replicate", "seed")) -> pd.DataFrame:
        return aggregate(self.rows, over)

    def to_csv(self, path) -> None:
        self.rows.to_csv(path, index=False, lineterminator="\n")

    def to_json(self, path) -> None:
        Path(path).write_text(self.rows.to_json(orient="records", indent=1), encoding="utf-8")


def canonical(frame: pd.DataFrame) -> pd.DataFrame:
    frame = frame.astype({"split_id": np.int64, "k": np.int64, "replicate": np.int64, "seed": np.int64})
    frame["fraction"] = frame["fraction"].astype(float)
    return frame.sort_values(KEY, kind="mergesort", na_position="first").reset_index(drop=True)


def aggregate(rows: pd.DataFrame, over=("split_id", "replicate", "seed")) -> pd.DataFrame:
    """Mean and normal-approximation 95% interval across the ``over`` columns.

    The interval is ``mean +/- 1.96 * sd / sqrt(n)`` with the sample sd. A
    cell holding an infinite disparity gets an infinite mean and a NaN sd.
    """
    keys = [c for c in KEY if c not in over]
    g = rows.groupby(keys, dropna=False, sort=True)["value"]
    out = g.agg(mean="mean", sd=_sample_sd, n="size").reset_index()
    half = Z95 * out["sd"] / np.sqrt(out["n"])
    out["ci_low"] = out["mean"] - half
    out["ci_high"] = out["mean"] + half
    return out


def _sample_sd(values) -> float:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return 0.0
    if not np.isfinite(v).all():
        return math.nan
    return float(np.std(v, ddof=1))


def outcome_rows(outcome, base: dict) -> list[dict]:
    """Tidy rows for one strategy outcome's test report."""
    rep = outcome.test_report
    rows = [dict(base, strategy=outcome.strategy, metric_name="precision_at_k", group="", value=rep.precision_at_k)]
    for g in sorted(rep.recall):
        rows.append(dict(base, strategy=outcome.strategy, metric_name="recall", group=g, value=rep.recall[g]))
        rows.append(dict(base, strategy=outcome.strategy, metric_name="selected", group=g, value=float(rep.selected[g])))
        if g != rep.reference_group:
            rows.append(dict(base, strategy=outcome.strategy, metric_name="disparity", group=g, value=rep.disparity[g]))
    return rows


def _run_split(bound, k, seed, models, reference_group, strategies, experiment):
    ref = reference_group or default_reference_group(compute_group_stats(bound.val).n)
    try:
        outcomes = run_strategies(bound.val, bound.test, k, seed, models, ref, strategies)
    except FairTopKError as exc:
        raise exc.add_context(f"split {bound.split.split_id} (test {bound.split.test_as_of}, k={k}, seed={seed})")
    base = dict(experiment=experiment, split_id=bound.split.split_id, k=k, fraction=math.nan, replicate=0, seed=seed)
    rows = []
    for s in strategies:
        rows.extend(outcome_rows(outcomes[s], base))
    return rows


def _parallel(tasks, n_jobs):
    if n_jobs == 1:
        return [f(*a) for f, a in tasks]
    return Parallel(n_jobs=n_jobs)(delayed(f)(*a) for f, a in tasks)


def strategy_comparison(
    bound_splits,
    k: int,
    seeds=(0,),
    models=None,
    reference_group=None,
    strategies=STRATEGIES,
    n_jobs: int = 1,
    experiment: str = "strategy_comparison",
) -> ExperimentResult:
    """Test precision@k, per-group recall and disparity for every split and strategy."""
    if not bound_splits:
        raise ConfigError("strategy comparison needs at least one bound split")
    tasks = [
        (_run_split, (b, k, seed, models, reference_group, tuple(strategies), experiment))
        for b in bound_splits
        for seed in seeds
    ]
    records = [r for chunk in _parallel(tasks, n_jobs) for r in chunk]
    return ExperimentResult.from_records(records)


def sweep_list_size(
    bound_splits, k_grid, seeds=(0,), models=None, reference_group=None, strategies=STRATEGIES, n_jobs: int = 1
) -> ExperimentResult:
    """Strategy comparison repeated at each list size in ``k_grid``."""
    k_grid = list(k_grid)
    if not k_grid:
        raise ConfigError("empty k grid")
    if not bound_splits:
        raise ConfigError("list-size sweep needs at least one bound split")
    limit = min(min(_n_entities(b.val), _n_entities(b.test)) for b in bound_splits)
    for k in k_grid:
        if not (isinstance(k, (int, np.integer)) and 1 <= k <= limit):
            raise ConfigError(f"list size {k!r} outside [1, {limit}]")
    parts = [
        strategy_comparison(
            bound_splits, int(k), seeds, models, reference_group, strategies, n_jobs, experiment="sweep_list_size"
        ).rows
        for k in k_grid
    ]
    return ExperimentResult(canonical(pd.concat(parts, ignore_index=True)))


def _n_entities(preds: PredictionSet) -> int:
    return preds.frame["entity_id"].nunique()


@dataclass
class ShiftDistribution:
    table: pd.DataFrame
    mean: float
    std: float


def precision_shift_distribution(val, test, k: int, seed: int, models=None, reference_group=None) -> ShiftDistribution:
    """Per-model test precision@k before and after recall equalization."""
    models = candidate_models(val, test, models)
    ref = reference_group or default_reference_group(compute_group_stats(val).n)
    rows = []
    for m in models:
        plain = evaluate_selection(test, top_k_ids(rank(test, m, seed), k), ref)
        adjusted = evaluate_selection(test, apply_allocation(test, equalize_allocation(val, m, k, seed), seed), ref)
        row = {
            "model_id": m,
            "precision_unadjusted": plain.precision_at_k,
            "precision_adjusted": adjusted.precision_at_k,
            "delta": adjusted.precision_at_k - plain.precision_at_k,
        }
        for g in sorted(plain.disparity):
            if g != ref:
                row[f"disparity_unadjusted_{g}"] = plain.disparity[g]
                row[f"disparity_adjusted_{g}"] = adjusted.disparity[g]
        rows.append(row)
    table = pd.DataFrame(rows)
    deltas = table["delta"].to_numpy()
    return ShiftDistribution(table=table, mean=float(deltas.mean()), std=float(deltas.std(ddof=1)) if len(deltas) > 1 else 0.0)


def _largest_remainder(total: int, weights: dict) -> dict:
    names = sorted(weights)
    w = np.array([weights[g] for g in names], dtype=float)
    raw = total * w / w.sum()
    base = np.floor(raw).astype(np.int64)
    short = total - int(base.sum())
    # ties on the remainder go to the earlier group name
    order = sorted(range(len(names)), key=lambda i: (-(raw[i] - base[i]), names[i]))
    for i in order[:short]:
        base[i] += 1
    return {g: int(c) for g, c in zip(names, base)}


def resample_cohort(preds: PredictionSet, focal_group: str, fraction: float, rng: np.random.Generator) -> PredictionSet:
    """Bootstrap a cohort of the same size with ``round(fraction * N)`` focal entities.

    Non-focal entities are drawn in proportion to the original mix of the
    remaining groups. Each draw keeps all of the entity's model rows and
    gets a fresh id ``<entity_id>~<draw>``.
    """
    frame = preds.frame
    codes, uniques = pd.factorize(frame["entity_id"], sort=True)
    order = np.argsort(codes, kind="stable")
    counts = np.bincount(codes, minlength=len(uniques))
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    first_rows = order[starts]
    ent_groups = frame["group"].to_numpy(dtype=object)[first_rows]
    n_total = len(uniques)
    if focal_group not in set(ent_groups):
        raise UnknownKeyError(f"focal group {focal_group!r} absent from cohort")
    n_focal = int(round(fraction * n_total))
    if n_focal == 0:
        raise ConfigError(f"fraction {fraction} leaves no focal entities in a cohort of {n_total}")
    others = {g: int((ent_groups == g).sum()) for g in set(ent_groups) if g != focal_group}
    plan = {focal_group: n_focal}
    if others:
        plan.update(_largest_remainder(n_total - n_focal, others))
    elif n_focal != n_total:
        raise ConfigError("cohort has only the focal group; cannot change its fraction")
    drawn = []
    for g in sorted(plan):
        members = np.flatnonzero(ent_groups == g)
        if plan[g] > 0:
            drawn.append(rng.choice(members, size=plan[g], replace=True))
    drawn = np.concatenate(drawn)
    draw_index = np.repeat(np.arange(drawn.size), counts[drawn])
    within = np.arange(draw_index.size) - np.repeat(np.cumsum(counts[drawn]) - counts[drawn], counts[drawn])
    rows = order[starts[drawn][draw_index] + within]
    out = frame.iloc[rows].reset_index(drop=True)
    out["entity_id"] = out["entity_id"].to_numpy(dtype=object) + "~" + draw_index.astype(str).astype(object)
    return PredictionSet._finish(out, preds.attribute_name)


def resample_pair(val, test, focal_group, fraction, replicate, seed):
    """Resampled (val, test) for one (fraction, replicate), from one derived stream."""
    rng = derive_rng(seed, repr(float(fraction)), replicate)
    return resample_cohort(val, focal_group, fraction, rng), resample_cohort(test, focal_group, fraction, rng)


def _run_resample(val, test, k, focal_group, fraction, replicate, seed, models, ref, strategies):
    rval, rtest = resample_pair(val, test, focal_group, fraction, replicate, seed)
    try:
        outcomes = run_strategies(rval, rtest, k, seed, models, ref, strategies)
    except FairTopKError as exc:
        raise exc.add_context(f"fraction {fraction}, replicate {replicate}")
    base = dict(experiment="resample_group_fraction", split_id=0, k=k, fraction=float(fraction), replicate=replicate, seed=seed)
    rows = []
    for s in strategies:
        rows.extend(outcome_rows(outcomes[s], base))
    return rows


def resample_group_fraction(
    val,
    test,
    k: int,
    focal_group: str,
    fractions,
    replicates: int,
    seed: int,
    models=None,
    reference_group=None,
    strategies=STRATEGIES,
    n_jobs: int = 1,
) -> ExperimentResult:
    """Run every strategy on bootstrap cohorts with the focal group at each fraction."""
    fractions = [float(p) for p in fractions]
    if not fractions or any(not 0.0 < p < 1.0 for p in fractions):
        raise ConfigError(f"fractions must lie in (0, 1): {fractions}")
    if replicates < 1:
        raise ConfigError("replicates must be >= 1")
    if focal_group not in val.groups or focal_group not in test.groups:
        raise UnknownKeyError(f"focal group {focal_group!r} absent from cohort")
    ref = reference_group or default_reference_group(compute_group_stats(val).n)
    if ref == focal_group:
        raise ConfigError("focal group must differ from the reference group")
    tasks = [
        (_run_resample, (val, test, k, focal_group, p, b, seed, models, ref, tuple(strategies)))
        for p in fractions
        for b in range(replicates)
    ]
    records = [r for chunk in _parallel(tasks, n_jobs) for r in chunk]
    return ExperimentResult.from_records(records)


def plot_data(result: ExperimentResult) -> dict:
    """Plot-ready aggregate tables: strategy summary, group disparity and the two sweeps."""
    agg = result.aggregate()
    out = {}
    exp = set(result.rows["experiment"])
    if "strategy_comparison" in exp:
        sub = agg[agg["experiment"] == "strategy_comparison"]
        out["strategy_summary"] = sub[sub["metric_name"].isin(["precision_at_k", "disparity"])].reset_index(drop=True)
        out["group_disparity"] = sub[sub["metric_name"].isin(["disparity", "recall"])].reset_index(drop=True)
    if "sweep_list_size" in exp:
        sub = agg[agg["experiment"] == "sweep_list_size"]
        out["list_size"] = sub[sub["metric_name"].isin(["precision_at_k", "disparity"])].reset_index(drop=True)
    if "resample_group_fraction" in exp:
        sub = agg[agg["experiment"] == "resample_group_fraction"]
        out["group_fraction"] = sub[sub["metric_name"].isin(["precision_at_k", "disparity"])].reset_index(drop=True)
    return out


def write_results(result: ExperimentResult, out_dir, experiment: str, timestamp: str, plot: bool = False) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"results_{experiment}_{timestamp}"
    paths = [out_dir / f"{stem}.csv", out_dir / f"{stem}.json"]
    result.to_csv(paths[0])
    result.to_json(paths[1])
    if plot:
        for name, table in plot_data(result).items():
            path = out_dir / f"plot_{name}_{timestamp}.csv"
            table.to_csv(path, index=False, lineterminator="\n")
            paths.append(path)
    return paths


def write_shift(dist: ShiftDistribution, out_dir, timestamp: str) -> Path:
    path = Path(out_dir) / f"plot_precision_shift_{timestamp}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    dist.table.to_csv(path, index=False, lineterminator="\n")
    path.with_suffix(".json").write_text(json.dumps({"mean": dist.mean, "std": dist.std}), encoding="utf-8")
    return path
