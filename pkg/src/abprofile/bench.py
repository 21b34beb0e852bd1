"""Classification benchmark: ROC/AUC with stratified ten-fold
cross-validation, averaged over the sampling iterations, for selectable
feature subsets.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .features import SEGMENTS
from .models import train_score
from .rng import stream

log = logging.getLogger(__name__)

DEFAULT_FOLDS = 10

MASK_FAMILIES = {
    "all": tuple(SEGMENTS),
    "germline": ("germ_hv", "germ_hj", "germ_lv", "germ_lj"),
    "canonical": ("canon_h1", "canon_h2", "canon_h3", "canon_l1", "canon_l2", "canon_l3"),
    "pi": ("pi",),
    "motif": ("motif",),
}


@dataclass(frozen=True)
class FeatureMask:
    name: str
    segments: tuple | None = None  # None means every segment
    exclude: tuple = ()  # feature columns to drop, as (segment, label)

    def column_indices(self, vocab) -> np.ndarray:
        segments = self.segments if self.segments is not None else tuple(SEGMENTS)
        banned = set(self.exclude)
        idx = [
            i
            for i, f in enumerate(vocab.features)
            if f.segment in segments and (f.segment, f.label) not in banned
        ]
        if not idx:
            raise UsageError(f"mask {self.name!r} leaves no features")
        return np.array(idx, dtype=np.int64)


def family_mask(name: str, exclude=()) -> FeatureMask:
    if name not in MASK_FAMILIES:
        raise UsageError(f"unknown mask family {name!r}; expected one of {sorted(MASK_FAMILIES)}")
    segments = MASK_FAMILIES[name]
    return FeatureMask(name=name, segments=segments, exclude=tuple(exclude))


# -- ROC ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RocCurve:
    points: tuple  # (fpr, tpr), monotone from (0,0) to (1,1)
    auc: float


def roc_curve(scores, labels) -> RocCurve:
    """Threshold sweep over distinct scores; tied scores move as a group,
    drawing diagonal segments; AUC by trapezoid."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise UsageError("ROC needs both classes present")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order]
    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    n = len(s)
    while i < n:
        j = i
        while j + 1 < n and s[j + 1] == s[i]:
            j += 1
        tp += int((y[i : j + 1] == 1).sum())
        fp += int((y[i : j + 1] == 0).sum())
        points.append((fp / n_neg, tp / n_pos))
        i = j + 1
    xs = np.array([p[0] for p in points])
    ys = np.array([p[1] for p in points])
    auc = float(np.trapezoid(ys, xs))
    return RocCurve(points=tuple(points), auc=auc)


def stratified_folds(labels, n_folds: int, rng: np.random.Generator) -> np.ndarray:
    """Fold id per record; per class, fold sizes differ by at most one."""
    labels = np.asarray(labels)
    out = np.empty(len(labels), dtype=np.int64)
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        perm = rng.permutation(len(idx))
        out[idx[perm]] = np.arange(len(idx)) % n_folds
    return out


# -- cross-validated AUC -----------------------------------------------------------------

@dataclass(frozen=True)
class BenchmarkCell:
    model: str
    mask: str
    mean_auc: float
    std_auc: float
    per_iteration: tuple
    roc: RocCurve  # pooled ROC of the first iteration, for plotting


def cross_validated_auc(
    iteration_data,
    model: str,
    mask: FeatureMask,
    vocab,
    seed: int,
    folds: int = DEFAULT_FOLDS,
    n_trees: int = 100,
) -> BenchmarkCell:
    """``iteration_data`` yields (X, y) per sampling iteration; AUC is
    computed on the pooled held-out scores of each iteration and
    averaged across iterations."""
    cols = mask.column_indices(vocab)
    aucs = []
    first_roc = None
    for it_index, (X, y) in enumerate(iteration_data):
        Xm = X[:, cols]
        y = np.asarray(y, dtype=np.int64)
        class_sizes = [int((y == c).sum()) for c in (0, 1)]
        if min(class_sizes) < 2:
            raise UsageError("each class needs at least two members per iteration")
        n_folds = folds
        if min(class_sizes) < folds:
            n_folds = min(class_sizes)
            log.warning(
                "iteration %d: smallest class has %d members; reducing folds to %d",
                it_index,
                min(class_sizes),
                n_folds,
            )
        fold_rng = stream(seed, "folds", it_index)
        assignment = stratified_folds(y, n_folds, fold_rng)
        pooled_scores = np.empty(len(y), dtype=np.float64)
        for fold in range(n_folds):
            test = assignment == fold
            train = ~test
            model_rng = stream(seed, "bench-model", model, mask.name, it_index, fold)
            pooled_scores[test] = train_score(
                model, Xm[train], y[train], Xm[test], rng=model_rng, n_trees=n_trees
            )
        curve = roc_curve(pooled_scores, y)
        aucs.append(curve.auc)
        if first_roc is None:
            first_roc = curve
    if not aucs:
        raise UsageError("no iterations supplied")
    arr = np.array(aucs)
    return BenchmarkCell(
        model=model,
        mask=mask.name,
        mean_auc=float(arr.mean()),
        std_auc=float(arr.std(ddof=0)),
        per_iteration=tuple(aucs),
        roc=first_roc,
    )


def write_benchmark_csv(path, cells) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "mask", "mean_auc", "std_auc", "iterations"])
        for cell in cells:
            writer.writerow(
                [cell.model, cell.mask, f"{cell.mean_auc:.6f}", f"{cell.std_auc:.6f}", len(cell.per_iteration)]
            )


def write_roc_json(path, cells) -> None:
    payload = [
        {
            "model": cell.model,
            "mask": cell.mask,
            "auc": cell.roc.auc,
            "points": [list(p) for p in cell.roc.points],
        }
        for cell in cells
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
