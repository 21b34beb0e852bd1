"""Pairwise similarity matrices and the two iteration-aggregated
hypothesis tests.

Sequence similarity compares Chothia-numbered chains position by
position: both chains occupied at a position contributes the
substitution score, exactly one occupied contributes the gap score. Raw
sums over the whole pair set (self-pairs included) are min-max rescaled
into [0, 1], which cancels the constant-region contribution shared by
every chain of a kind. Fingerprint similarity is the mean of per-segment
Jaccard indices, skipping segments empty on both sides.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .align import SubstitutionTable
from .errors import DataError, UsageError
from .numbering import NumberedChain
from .stats import rank_sum_one_tailed

log = logging.getLogger(__name__)

SIGNIFICANCE = 0.05


@dataclass(frozen=True)
class SimilarityMatrix:
    kind: str  # heavy_seq | light_seq | fingerprint
    labels: tuple  # record ids, row order
    set_labels: tuple  # targeting | reference per row
    dataset_ids: tuple
    values: np.ndarray  # symmetric, in [0, 1]

    def __post_init__(self):
        n = len(self.labels)
        if self.values.shape != (n, n):
            raise UsageError("similarity matrix shape does not match labels")

    def __len__(self):
        return len(self.labels)


def raw_pair_score(a: NumberedChain | None, b: NumberedChain | None, table: SubstitutionTable) -> float:
    """Position-aligned raw score over the union of occupied positions."""
    if a is not None and b is not None and a.chain_type != b.chain_type:
        raise UsageError("cannot score a heavy chain against a light chain")
    map_a = dict(a.items()) if a is not None else {}
    map_b = dict(b.items()) if b is not None else {}
    score = 0.0
    for pos in map_a.keys() | map_b.keys():
        ra = map_a.get(pos)
        rb = map_b.get(pos)
        if ra is not None and rb is not None:
            score += table.score(ra, rb)
        else:
            score += table.gap_score
    return score


def pairwise_raw_matrix(chains, table: SubstitutionTable) -> np.ndarray:
    """Raw position-aligned scores for every ordered pair (vectorized).

    ``chains`` may contain None for records lacking the chain; those
    behave as empty position sets.
    """
    from .align import encode

    universe = sorted({pos for ch in chains if ch is not None for pos in ch.positions})
    index = {pos: i for i, pos in enumerate(universe)}
    n = len(chains)
    width = len(universe)
    R = np.full((n, width), -1, dtype=np.int64)
    for row, ch in enumerate(chains):
        if ch is None:
            continue
        cols = [index[pos] for pos in ch.positions]
        R[row, cols] = encode(ch.residues, allow_x=True)
    occupied = R >= 0
    total = np.zeros((n, n), dtype=np.float64)
    S = table.scores
    gap = table.gap_score
    for p in range(width):
        col = R[:, p]
        occ = occupied[:, p]
        safe = np.where(occ, col, 0)
        sub = S[safe[:, None], safe[None, :]]
        both = occ[:, None] & occ[None, :]
        one = occ[:, None] ^ occ[None, :]
        total += np.where(both, sub, 0.0)
        total += gap * one
    return total


def min_max_rescale(raw: np.ndarray) -> np.ndarray:
    lo = float(raw.min())
    hi = float(raw.max())
    if hi == lo:
        warnings.warn("all raw pair scores equal; emitting a degenerate all-1.0 matrix")
        return np.ones_like(raw)
    return (raw - lo) / (hi - lo)


def sequence_similarity_matrix(records, chains, kind: str, table: SubstitutionTable) -> SimilarityMatrix:
    """Min-max rescaled position-aligned similarity over record chains.

    ``records`` supplies labels; ``chains`` is the matching list of
    NumberedChain or None.
    """
    if len(records) != len(chains):
        raise UsageError("records and chains must align")
    if len(records) < 2:
        raise DataError("need at least two records for a similarity matrix")
    raw = pairwise_raw_matrix(chains, table)
    values = min_max_rescale(raw)
    return SimilarityMatrix(
        kind=kind,
        labels=tuple(r.id for r in records),
        set_labels=tuple(r.set_label for r in records),
        dataset_ids=tuple(r.dataset_id for r in records),
        values=values,
    )


def fingerprint_similarity_values(fps: np.ndarray, segment_slices) -> np.ndarray:
    """Mean per-segment Jaccard similarity for every pair.

    ``segment_slices`` is an iterable of index arrays, one per segment.
    Segments with an empty union for a pair are excluded from that
    pair's mean; a pair with every segment empty scores 0 (warned).
    """
    n = fps.shape[0]
    j_sum = np.zeros((n, n), dtype=np.float64)
    included = np.zeros((n, n), dtype=np.float64)
    fps_f = fps.astype(np.float64)
    for idx in segment_slices:
        if len(idx) == 0:
            continue
        block = fps_f[:, idx]
        inter = block @ block.T
        pop = block.sum(axis=1)
        union = pop[:, None] + pop[None, :] - inter
        mask = union > 0
        with np.errstate(invalid="ignore", divide="ignore"):
            j = np.where(mask, inter / np.where(mask, union, 1.0), 0.0)
        j_sum += j
        included += mask
    empty = included == 0
    if empty.any():
        warnings.warn(f"{int(empty.sum())} fingerprint pairs share no populated segment; scored 0")
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(empty, 0.0, j_sum / np.where(empty, 1.0, included))
    return out


def fingerprint_similarity_matrix(records, fps: np.ndarray, vocab) -> SimilarityMatrix:
    slices = [vocab.segment_indices(segment) for segment in _segments(vocab)]
    values = fingerprint_similarity_values(fps, slices)
    return SimilarityMatrix(
        kind="fingerprint",
        labels=tuple(r.id for r in records),
        set_labels=tuple(r.set_label for r in records),
        dataset_ids=tuple(r.dataset_id for r in records),
        values=values,
    )


def _segments(vocab):
    from .features import SEGMENTS

    return SEGMENTS


# -- hypothesis tests -------------------------------------------------------------

@dataclass(frozen=True)
class TestSummary:
    name: str
    alternative: str
    p_values: tuple

    @property
    def significant(self) -> bool:
        return bool(self.p_values) and max(self.p_values) < SIGNIFICANCE

    def as_dict(self) -> dict:
        return {
            "test": self.name,
            "alternative": self.alternative,
            "p_values": list(self.p_values),
            "significant": self.significant,
        }


def within_set_scores(matrix: SimilarityMatrix):
    """Off-diagonal within-targeting and within-reference scores."""
    labels = np.array(matrix.set_labels)
    iu, ju = np.triu_indices(len(matrix), k=1)
    vals = matrix.values[iu, ju]
    both_t = (labels[iu] == "targeting") & (labels[ju] == "targeting")
    both_r = (labels[iu] == "reference") & (labels[ju] == "reference")
    return vals[both_t], vals[both_r]


def within_set_test(matrices) -> TestSummary:
    """One iteration matrix at a time: is within-targeting similarity
    stochastically greater than within-reference similarity?"""
    p_values = []
    for matrix in matrices:
        tgt, ref = within_set_scores(matrix)
        if len(tgt) < 1 or len(ref) < 1:
            raise DataError("within-set test needs at least two members per set")
        p_values.append(rank_sum_one_tailed(tgt, ref))
    if not p_values:
        raise UsageError("no iterations supplied")
    return TestSummary(
        name="within_set_similarity",
        alternative="targeting within-set scores greater",
        p_values=tuple(p_values),
    )


def chain_feature_correlation_test(heavy_matrices, light_matrices, fp_matrices) -> TestSummary:
    """Do fingerprints track the heavy chain more closely than the light?

    Per pair, d_H = |heavy - fp| and d_L = |light - fp|; the one-sided
    rank-sum alternative is that d_L is stochastically greater.
    """
    p_values = []
    for heavy, light, fp in zip(heavy_matrices, light_matrices, fp_matrices):
        for other in (light, fp):
            if heavy.labels != other.labels or heavy.set_labels != other.set_labels:
                raise UsageError("matrices must share identical record labels")
        iu, ju = np.triu_indices(len(heavy), k=1)
        d_h = np.abs(heavy.values[iu, ju] - fp.values[iu, ju])
        d_l = np.abs(light.values[iu, ju] - fp.values[iu, ju])
        p_values.append(rank_sum_one_tailed(d_l, d_h))
    if not p_values:
        raise UsageError("no iterations supplied")
    return TestSummary(
        name="chain_feature_correlation",
        alternative="light-chain deviation from fingerprints greater",
        p_values=tuple(p_values),
    )


# -- output -------------------------------------------------------------------------

def dataset_grouped_order(matrix: SimilarityMatrix) -> list:
    """Row order for heat maps: reference datasets first, then targeting,
    datasets kept contiguous in first-appearance order."""
    first_seen: dict[tuple, int] = {}
    for i, (s, d) in enumerate(zip(matrix.set_labels, matrix.dataset_ids)):
        first_seen.setdefault((s, d), i)
    rows = list(range(len(matrix)))
    rows.sort(
        key=lambda i: (
            0 if matrix.set_labels[i] == "reference" else 1,
            first_seen[(matrix.set_labels[i], matrix.dataset_ids[i])],
            i,
        )
    )
    return rows


def emit_heatmap(
    matrix: SimilarityMatrix,
    csv_path,
    png_path=None,
    cell_size: int = 2,
) -> None:
    """Write the dataset-grouped matrix as CSV, optionally as a PNG whose
    size is exactly cells x cell_size pixels."""
    order = dataset_grouped_order(matrix)
    values = matrix.values[np.ix_(order, order)]
    labels = [matrix.labels[i] for i in order]
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([""] + labels)
        for label, row in zip(labels, values):
            writer.writerow([label] + [f"{v:.6f}" for v in row])
    if png_path is not None:
        try:
            import matplotlib

            matplotlib.use("Agg", force=False)
            import matplotlib.pyplot as plt
        except ImportError:
            log.warning("matplotlib not installed; skipping PNG heat map")
            return
        image = np.kron(values, np.ones((cell_size, cell_size)))
        plt.imsave(png_path, image, cmap="viridis", vmin=0.0, vmax=1.0)


def write_test_report(path, summaries) -> None:
    import json

    payload = [s.as_dict() for s in summaries]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
