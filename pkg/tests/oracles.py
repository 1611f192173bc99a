"""Independent reference computations used to freeze and check expected values.

Nothing here imports the package under test.
"""
import itertools
from fractions import Fraction


def recall_at(labels, depth):
    """Exact recall after the top ``depth`` labels (1 for a group without positives)."""
    pos = sum(labels)
    if pos == 0:
        return Fraction(1)
    return Fraction(sum(labels[:depth]), pos)


def enumerate_allocations(sizes: dict, k: int):
    names = sorted(sizes)
    for combo in itertools.product(*[range(sizes[g] + 1) for g in names]):
        if sum(combo) == k:
            yield dict(zip(names, combo))


def spread(group_labels: dict, alloc: dict):
    """max - min achieved recall over groups that have positives."""
    vals = [recall_at(group_labels[g], alloc[g]) for g in group_labels if sum(group_labels[g]) > 0]
    return max(vals) - min(vals) if vals else Fraction(0)


def annotated_values(group_labels: dict, g: str):
    """Recall value carried by each member of g, by within-group depth."""
    return [recall_at(group_labels[g], d) for d in range(1, len(group_labels[g]) + 1)]


def is_frontier_consistent(group_labels: dict, alloc: dict) -> bool:
    """Selected set holds k smallest recall values (ties at the boundary allowed)."""
    selected, following = [], []
    for g, labels in group_labels.items():
        vals = annotated_values(group_labels, g)
        selected += vals[: alloc[g]]
        if alloc[g] < len(labels):
            following.append(vals[alloc[g]])
    if not selected or not following:
        return True
    return max(selected) <= min(following)


def brute_force(group_labels: dict, k: int):
    """(minimum spread, all allocations, frontier-consistent allocations)."""
    sizes = {g: len(v) for g, v in group_labels.items()}
    allocs = list(enumerate_allocations(sizes, k))
    best = min(spread(group_labels, a) for a in allocs)
    frontier = [a for a in allocs if is_frontier_consistent(group_labels, a)]
    return best, allocs, frontier


def max_step(group_labels: dict):
    return max((Fraction(1, sum(v)) for v in group_labels.values() if sum(v) > 0), default=Fraction(0))
