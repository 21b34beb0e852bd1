"""Salient feature identification: Fisher exact screening, random-forest
importance ranking, frequency and biasing analysis, feature association,
and cross-run comparison of salient sets.

P-values and importance ranks are averaged across the k sampling
iterations; frequencies and associations are computed on the full
representative sets.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import UsageError
from .forest import fit_forest
from .rng import stream
from .stats import ContingencyTable, fisher_exact

log = logging.getLogger(__name__)

FET_SIGNIFICANCE = 0.05
BIASING_THRESHOLD = 0.50
ASSOCIATION_THRESHOLD = 0.80


@lru_cache(maxsize=200_000)
def _cached_fisher(a: int, b: int, c: int, d: int, sided: str) -> float:
    return fisher_exact(ContingencyTable(a, b, c, d), sided)


def fet_screen(iteration_data, width: int, sided: str = "two_sided") -> np.ndarray:
    """Average Fisher p-value per feature across iterations.

    ``iteration_data`` yields (X, y) with X a binary matrix of the given
    width and y 1 for targeting rows.
    """
    totals = np.zeros(width, dtype=np.float64)
    count = 0
    for X, y in iteration_data:
        y = np.asarray(y, dtype=bool)
        n_t = int(y.sum())
        n_r = len(y) - n_t
        with_t = X[y].sum(axis=0)
        with_r = X[~y].sum(axis=0)
        for f in range(width):
            a = int(with_t[f])
            c = int(with_r[f])
            totals[f] += _cached_fisher(a, n_t - a, c, n_r - c, sided)
        count += 1
    if count == 0:
        raise UsageError("no iterations supplied")
    return totals / count


def rank_importances(importances: np.ndarray) -> np.ndarray:
    """Descending midranks: the most important feature has rank 1."""
    order = np.argsort(-importances, kind="stable")
    ranks = np.empty(len(importances), dtype=np.float64)
    sorted_vals = importances[order]
    i = 0
    while i < len(importances):
        j = i
        while j + 1 < len(importances) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def rf_importance(
    iteration_data,
    width: int,
    seed: int,
    n_trees: int = 100,
    max_features: int | None = None,
):
    """Average Gini importance and average rank across iterations.

    Iterations with a single class are skipped with a warning. Returns
    (avg_importance, avg_rank).
    """
    imp_total = np.zeros(width, dtype=np.float64)
    rank_total = np.zeros(width, dtype=np.float64)
    used = 0
    for it_index, (X, y) in enumerate(iteration_data):
        y = np.asarray(y, dtype=np.uint8)
        if len(np.unique(y)) < 2:
            log.warning("iteration %d has a single class; skipped", it_index)
            continue
        rng = stream(seed, "salient-rf", it_index)
        forest = fit_forest(X, y, rng, n_trees=n_trees, max_features=max_features)
        imp_total += forest.importances
        rank_total += rank_importances(forest.importances)
        used += 1
    if used == 0:
        raise UsageError("no usable iterations for importance ranking")
    return imp_total / used, rank_total / used


def feature_frequencies(fps: np.ndarray, labels) -> tuple:
    """Fraction of records with each bit set, per set."""
    y = np.asarray(labels, dtype=bool)
    if y.sum() == 0 or (~y).sum() == 0:
        raise UsageError("both sets must be populated")
    freq_t = fps[y].mean(axis=0)
    freq_r = fps[~y].mean(axis=0)
    return freq_t, freq_r


def detect_biasing(freq_t, freq_r, threshold: float = BIASING_THRESHOLD) -> np.ndarray:
    """Features whose frequency differs by strictly more than the
    threshold (boolean mask)."""
    return np.abs(np.asarray(freq_t) - np.asarray(freq_r)) > threshold


@dataclass(frozen=True)
class AssociationMatrix:
    set_label: str
    columns: tuple  # feature column names
    values: np.ndarray  # pairwise Jaccard co-occurrence
    empty_pairs: np.ndarray  # True where both features never occur


def feature_association(fps: np.ndarray, columns, set_label: str) -> AssociationMatrix:
    """Pairwise Jaccard co-occurrence of features within one set."""
    F = fps.astype(np.float64)
    inter = F.T @ F
    pop = F.sum(axis=0)
    union = pop[:, None] + pop[None, :] - inter
    empty = union == 0
    with np.errstate(invalid="ignore", divide="ignore"):
        values = np.where(empty, 0.0, inter / np.where(empty, 1.0, union))
    return AssociationMatrix(
        set_label=set_label, columns=tuple(columns), values=values, empty_pairs=empty
    )


@dataclass(frozen=True)
class SalientRow:
    segment: str
    label: str
    avg_p: float
    avg_importance: float
    avg_rank: float
    freq_targeting: float
    freq_reference: float

    @property
    def fet_significant(self) -> bool:
        return self.avg_p < FET_SIGNIFICANCE

    @property
    def biasing(self) -> bool:
        return abs(self.freq_targeting - self.freq_reference) > BIASING_THRESHOLD


@dataclass(frozen=True)
class SalientReport:
    rows: tuple
    importance_cutoff: float  # a feature is rf-important above this

    def rf_important(self, row: SalientRow) -> bool:
        return row.avg_importance > self.importance_cutoff

    def feature_key(self, row: SalientRow):
        return (row.segment, row.label)

    def fet_set(self):
        return {self.feature_key(r) for r in self.rows if r.fet_significant}

    def importance_set(self):
        return {self.feature_key(r) for r in self.rows if self.rf_important(r)}

    def biasing_set(self):
        return {self.feature_key(r) for r in self.rows if r.biasing}


def build_salient_report(vocab, avg_p, avg_importance, avg_rank, freq_t, freq_r) -> SalientReport:
    rows = tuple(
        SalientRow(
            segment=f.segment,
            label=f.label,
            avg_p=float(avg_p[i]),
            avg_importance=float(avg_importance[i]),
            avg_rank=float(avg_rank[i]),
            freq_targeting=float(freq_t[i]),
            freq_reference=float(freq_r[i]),
        )
        for i, f in enumerate(vocab.features)
    )
    # "important" means above the mean importance across features
    cutoff = float(np.mean(avg_importance)) if len(avg_importance) else 0.0
    return SalientReport(rows=rows, importance_cutoff=cutoff)


def associated_with_biasing(
    report: SalientReport,
    association: AssociationMatrix,
    threshold: float = ASSOCIATION_THRESHOLD,
) -> set:
    """Features strongly associated (J > threshold) with any biasing
    feature within the given (targeting-set) association matrix."""
    col_index = {}
    for i, col in enumerate(association.columns):
        segment, label = col.split(":", 1)
        col_index[(segment, label)] = i
    biasing = report.biasing_set()
    out = set()
    for key, i in col_index.items():
        if key in biasing:
            continue
        for bkey in biasing:
            j = col_index.get(bkey)
            if j is not None and association.values[i, j] > threshold:
                out.add(key)
                break
    return out


def write_salient_csv(path, report: SalientReport) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "segment",
                "label",
                "avg_p",
                "fet_significant",
                "avg_importance",
                "avg_rank",
                "rf_important",
                "freq_targeting",
                "freq_reference",
                "biasing",
            ]
        )
        for row in report.rows:
            writer.writerow(
                [
                    row.segment,
                    row.label,
                    f"{row.avg_p:.6g}",
                    int(row.fet_significant),
                    f"{row.avg_importance:.6f}",
                    f"{row.avg_rank:.2f}",
                    int(report.rf_important(row)),
                    f"{row.freq_targeting:.6f}",
                    f"{row.freq_reference:.6f}",
                    int(row.biasing),
                ]
            )


def write_association_csv(path, association: AssociationMatrix) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([""] + list(association.columns))
        for name, row in zip(association.columns, association.values):
            writer.writerow([name] + [f"{v:.6f}" for v in row])


@dataclass(frozen=True)
class SalientComparison:
    method: str
    common: tuple
    a_only: tuple
    b_only: tuple


def compare_salient(report_a: SalientReport, report_b: SalientReport) -> tuple:
    """Per method (FET, importance): features shared and unique between
    two runs, matched on (segment, label)."""
    out = []
    for method, set_a, set_b in (
        ("fet", report_a.fet_set(), report_b.fet_set()),
        ("importance", report_a.importance_set(), report_b.importance_set()),
    ):
        out.append(
            SalientComparison(
                method=method,
                common=tuple(sorted(set_a & set_b)),
                a_only=tuple(sorted(set_a - set_b)),
                b_only=tuple(sorted(set_b - set_a)),
            )
        )
    return tuple(out)
