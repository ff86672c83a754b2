"""Measurement harness: stratified splitting, Top-1/Top-2 accuracy,
confusion matrix, and within-family confusion analysis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, TypeVar

import numpy as np

from .classifier import ModelParams, SpecMismatchError, predict
from .taxonomy import Taxonomy

T = TypeVar("T")


class EvaluationError(ValueError):
    pass


def split_dataset(
    dataset: Sequence[tuple[T, str]], test_fraction: float, seed: int
) -> tuple[list[tuple[T, str]], list[tuple[T, str]]]:
    """Stratified split; each class contributes ceil(count * test_fraction)
    test examples (never 0). Deterministic for a given seed; both halves
    keep the input's relative order.
    """
    if not 0.0 < test_fraction < 1.0:
        raise EvaluationError(f"test_fraction must be in (0, 1), got {test_fraction}")
    groups: dict[str, list[int]] = {}
    for i, (_, label) in enumerate(dataset):
        groups.setdefault(label, []).append(i)
    for label, idxs in groups.items():
        if len(idxs) < 2:
            raise EvaluationError(
                f"class {label!r} has {len(idxs)} example(s); need at least 2 to split"
            )
    rng = np.random.default_rng(seed)
    test_idx: set[int] = set()
    for label in sorted(groups):
        idxs = groups[label]
        n_test = math.ceil(len(idxs) * test_fraction)
        order = rng.permutation(len(idxs))
        test_idx.update(idxs[j] for j in order[:n_test])
    train = [dataset[i] for i in range(len(dataset)) if i not in test_idx]
    test = [dataset[i] for i in sorted(test_idx)]
    return train, test


@dataclass
class EvalReport:
    """Accuracy report; confusion rows are truth, columns are the Top-1
    prediction, both in class_ids order. rank2_recovered counts, inside
    each off-diagonal confusion cell, the examples whose truth sat at
    rank 2 of the ranking."""

    class_ids: tuple[str, ...]
    top1: float
    top2: float
    per_class_top1: dict[str, float]
    confusion: np.ndarray
    rank2_recovered: np.ndarray
    within_family_error_fraction: float
    family_error_denominator: int
    n_examples: int

    def to_dict(self) -> dict:
        return {
            "class_ids": list(self.class_ids),
            "top1": self.top1,
            "top2": self.top2,
            "per_class_top1": dict(self.per_class_top1),
            "confusion": self.confusion.tolist(),
            "rank2_recovered": self.rank2_recovered.tolist(),
            "within_family_error_fraction": self.within_family_error_fraction,
            "family_error_denominator": self.family_error_denominator,
            "n_examples": self.n_examples,
        }


@dataclass(frozen=True)
class ConfusionPair:
    true_class_id: str
    predicted_class_id: str
    count: int
    same_family: bool


def _family_lookup(taxonomy: Taxonomy, class_id: str) -> str | None:
    if class_id not in taxonomy:
        return None
    return taxonomy.get(class_id).family


def evaluate(model: ModelParams, test, taxonomy: Taxonomy) -> EvalReport:
    """Score a model on held-out (FeatureVector, class_id) pairs."""
    if not test:
        raise EvaluationError("empty test set")
    class_ids = model.class_ids
    index = {cid: i for i, cid in enumerate(class_ids)}
    expected_hash = model.feature_spec.spec_hash()
    c = len(class_ids)
    confusion = np.zeros((c, c), dtype=np.int64)
    rank2 = np.zeros((c, c), dtype=np.int64)
    top2_hits = 0
    for fv, label in test:
        if label not in index:
            raise EvaluationError(f"test label {label!r} not among model classes")
        if fv.spec_hash != expected_hash:
            raise SpecMismatchError(
                f"test vector spec_hash {fv.spec_hash} != model spec {expected_hash}"
            )
        pred = predict(model, fv)
        t = index[label]
        p = index[pred.ranked[0][0]]
        confusion[t, p] += 1
        if t == p:
            top2_hits += 1
        elif label == pred.ranked[1][0]:
            top2_hits += 1
            rank2[t, p] += 1
    n = len(test)
    top1 = float(confusion.trace()) / n
    top2 = top2_hits / n
    row_totals = confusion.sum(axis=1)
    per_class_top1 = {
        cid: float(confusion[i, i]) / int(row_totals[i])
        for i, cid in enumerate(class_ids)
        if row_totals[i] > 0
    }

    families = [_family_lookup(taxonomy, cid) for cid in class_ids]
    denom = 0
    same = 0
    for t in range(c):
        for p in range(c):
            if t == p or confusion[t, p] == 0:
                continue
            if families[t] is None or families[p] is None:
                continue
            denom += int(confusion[t, p])
            if families[t] == families[p]:
                same += int(confusion[t, p])
    fraction = same / denom if denom else 0.0
    return EvalReport(
        class_ids=class_ids,
        top1=top1,
        top2=top2,
        per_class_top1=per_class_top1,
        confusion=confusion,
        rank2_recovered=rank2,
        within_family_error_fraction=fraction,
        family_error_denominator=denom,
        n_examples=n,
    )


def family_confusion_pairs(report: EvalReport, taxonomy: Taxonomy) -> list[ConfusionPair]:
    """Every nonzero off-diagonal confusion cell, largest counts first
    (ties by class ids), flagged when both classes share an assigned
    family."""
    pairs: list[ConfusionPair] = []
    ids = report.class_ids
    for t in range(len(ids)):
        for p in range(len(ids)):
            if t == p:
                continue
            count = int(report.confusion[t, p])
            if count == 0:
                continue
            ft = _family_lookup(taxonomy, ids[t])
            fp = _family_lookup(taxonomy, ids[p])
            flagged = ft is not None and fp is not None and ft == fp
            pairs.append(ConfusionPair(ids[t], ids[p], count, flagged))
    pairs.sort(key=lambda x: (-x.count, x.true_class_id, x.predicted_class_id))
    return pairs


def format_report(report: EvalReport, taxonomy: Taxonomy | None = None) -> str:
    """Human-readable accuracy table."""
    lines = [
        f"examples:            {report.n_examples}",
        f"top-1 accuracy:      {report.top1:.4f}",
        f"top-2 accuracy:      {report.top2:.4f}",
        f"within-family error fraction: {report.within_family_error_fraction:.4f}"
        f" (over {report.family_error_denominator} family-assigned errors)",
        "",
        "per-class top-1:",
    ]
    for cid in report.class_ids:
        if cid in report.per_class_top1:
            lines.append(f"  {cid:24s} {report.per_class_top1[cid]:.4f}")
    if taxonomy is not None:
        worst = [p for p in family_confusion_pairs(report, taxonomy)[:10]]
        if worst:
            lines.append("")
            lines.append("top confusions (true -> predicted, count, same family):")
            for pair in worst:
                flag = "same-family" if pair.same_family else ""
                lines.append(
                    f"  {pair.true_class_id} -> {pair.predicted_class_id}"
                    f"  x{pair.count} {flag}".rstrip()
                )
    return "\n".join(lines)
