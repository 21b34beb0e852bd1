"""Shared pairwise alignment engine.

One scoring scheme is used everywhere a residue-level comparison is
needed (clustering identity, numbering, germline calls): BLOSUM62 with
affine gaps, open -10 and extend -1 (a gap of length L costs
open + (L-1) * extend). Alignments are computed with the Gotoh
three-state dynamic program; ties prefer substitution over a gap in the
second sequence over a gap in the first, which keeps tracebacks
deterministic.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import DataError, UsageError

RESIDUES = "ACDEFGHIKLMNPQRSTVWY"
_INDEX = {aa: i for i, aa in enumerate(RESIDUES)}
X_INDEX = len(RESIDUES)  # neutral residue, scores 0 against everything

NEG = -1.0e9

_M, _X, _Y = 0, 1, 2  # DP states: substitution, gap in b, gap in a


@dataclass(frozen=True)
class SubstitutionTable:
    """Residue substitution scores plus the per-position gap score used
    by position-aligned comparison (see similarity)."""

    scores: np.ndarray  # (21, 21) float64, row/col 20 is the neutral X
    gap_score: float = -4.0

    def score(self, a: str, b: str) -> float:
        return float(self.scores[encode(a, allow_x=True)[0], encode(b, allow_x=True)[0]])

    @property
    def min_score(self) -> float:
        return float(self.scores[:X_INDEX, :X_INDEX].min())


def load_substitution_table(path=None, gap_score: float = -4.0) -> SubstitutionTable:
    """Load a substitution matrix CSV (header row/column of residues)."""
    if path is None:
        ref = resources.files("abprofile.data").joinpath("blosum62.csv")
        text = ref.read_text()
    else:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    rows = list(csv.reader(text.strip().splitlines()))
    header = rows[0][1:]
    if sorted(header) != sorted(RESIDUES):
        raise DataError("substitution table must cover the 20 canonical residues")
    scores = np.zeros((21, 21), dtype=np.float64)
    for row in rows[1:]:
        ra = row[0]
        for rb, val in zip(header, row[1:]):
            scores[_INDEX[ra], _INDEX[rb]] = float(val)
    if not np.allclose(scores[:20, :20], scores[:20, :20].T):
        raise DataError("substitution table must be symmetric")
    return SubstitutionTable(scores=scores, gap_score=gap_score)


def encode(seq: str, allow_x: bool = False) -> np.ndarray:
    """Map a residue string to integer indices, validating the alphabet."""
    out = np.empty(len(seq), dtype=np.int64)
    for i, ch in enumerate(seq):
        idx = _INDEX.get(ch)
        if idx is None:
            if ch == "X" and allow_x:
                idx = X_INDEX
            else:
                raise DataError(f"illegal residue {ch!r} at position {i + 1}")
        out[i] = idx
    return out


@dataclass(frozen=True)
class Alignment:
    score: float
    # (i, j) residue index pairs; None on one side marks a gap column
    pairs: tuple

    @property
    def columns(self) -> int:
        return len(self.pairs)

    def identity(self, a: str, b: str) -> float:
        """Matches over all alignment columns; gap columns count as mismatch."""
        if not self.pairs:
            return 0.0
        matches = sum(
            1 for i, j in self.pairs if i is not None and j is not None and a[i] == b[j]
        )
        return matches / len(self.pairs)


def _score_rows(ea: np.ndarray, eb: np.ndarray, table: SubstitutionTable) -> np.ndarray:
    return table.scores[np.ix_(ea, eb)]


def global_align(
    a: str,
    b: str,
    table: SubstitutionTable,
    gap_open: float = -10.0,
    gap_extend: float = -1.0,
    allow_x: bool = False,
) -> Alignment:
    """Global affine-gap alignment with full traceback. End gaps are charged."""
    ea, eb = encode(a, allow_x), encode(b, allow_x)
    m, n = len(ea), len(eb)
    if m == 0 and n == 0:
        return Alignment(score=0.0, pairs=())
    if m == 0:
        return Alignment(
            score=gap_open + (n - 1) * gap_extend, pairs=tuple((None, j) for j in range(n))
        )
    if n == 0:
        return Alignment(
            score=gap_open + (m - 1) * gap_extend, pairs=tuple((i, None) for i in range(m))
        )
    S = _score_rows(ea, eb, table)

    M = np.full(n + 1, NEG)
    X = np.full(n + 1, NEG)
    Y = np.full(n + 1, NEG)
    M[0] = 0.0
    Y[1:] = gap_open + np.arange(n) * gap_extend
    ptr_m = np.zeros((m + 1, n + 1), dtype=np.uint8)
    ptr_x = np.zeros((m + 1, n + 1), dtype=np.uint8)
    ptr_y = np.full((m + 1, n + 1), _Y, dtype=np.uint8)
    ptr_y[0, 1] = _M

    for i in range(1, m + 1):
        Mp, Xp, Yp = M, X, Y
        best_prev = np.maximum(Mp, np.maximum(Xp, Yp))
        ptr_row = np.where(Mp >= best_prev, _M, np.where(Xp >= best_prev, _X, _Y))
        M = np.full(n + 1, NEG)
        M[1:] = S[i - 1] + best_prev[:-1]
        ptr_m[i, 1:] = ptr_row[:-1]

        x_open = Mp + gap_open
        x_ext = Xp + gap_extend
        X = np.maximum(x_open, x_ext)
        ptr_x[i] = np.where(x_open >= x_ext, _M, _X)

        # horizontal gaps unroll to a running max over M - j*extend
        drift = M[:-1] - np.arange(n) * gap_extend
        run = np.maximum.accumulate(drift)
        Y = np.full(n + 1, NEG)
        Y[1:] = gap_open + np.arange(n) * gap_extend + run
        ptr_y[i, 1:] = np.where(M[:-1] + gap_open >= np.concatenate(([NEG], Y[1:-1])) + gap_extend, _M, _Y)

    finals = (M[n], X[n], Y[n])
    state = int(np.argmax(finals))
    score = float(finals[state])

    # rebuild the full DP for traceback is avoided: pointers were stored
    pairs = []
    i, j = m, n
    while i > 0 or j > 0:
        if i == 0:
            pairs.append((None, j - 1))
            j -= 1
            continue
        if j == 0:
            pairs.append((i - 1, None))
            i -= 1
            continue
        if state == _M:
            pairs.append((i - 1, j - 1))
            state = int(ptr_m[i, j])
            i -= 1
            j -= 1
        elif state == _X:
            pairs.append((i - 1, None))
            state = int(ptr_x[i, j])
            i -= 1
        else:
            pairs.append((None, j - 1))
            state = int(ptr_y[i, j])
            j -= 1
    pairs.reverse()
    return Alignment(score=score, pairs=tuple(pairs))


def local_score(
    a: str,
    b: str,
    table: SubstitutionTable,
    gap_open: float = -10.0,
    gap_extend: float = -1.0,
    allow_x: bool = False,
) -> float:
    """Best Smith-Waterman affine-gap score (score only)."""
    ea, eb = encode(a, allow_x), encode(b, allow_x)
    m, n = len(ea), len(eb)
    if m == 0 or n == 0:
        return 0.0
    S = _score_rows(ea, eb, table)
    M = np.zeros(n + 1)
    X = np.full(n + 1, NEG)
    Y = np.full(n + 1, NEG)
    best = 0.0
    jext = np.arange(n) * gap_extend
    for i in range(1, m + 1):
        Mp, Xp, Yp = M, X, Y
        X = np.maximum(Mp + gap_open, Xp + gap_extend)
        prev_best = np.maximum(Mp, np.maximum(Xp, Yp))
        M = np.zeros(n + 1)
        M[1:] = np.maximum(S[i - 1] + prev_best[:-1], 0.0)
        drift = M[:-1] - jext
        Y = np.full(n + 1, NEG)
        Y[1:] = gap_open + jext + np.maximum.accumulate(drift)
        # the best local alignment always ends in a substitution column
        row_best = float(M.max())
        if row_best > best:
            best = row_best
    return best


def percent_identity(
    a: str, b: str, table: SubstitutionTable, gap_open: float = -10.0, gap_extend: float = -1.0
) -> float:
    if not a and not b:
        raise UsageError("cannot align two empty chains")
    aln = global_align(a, b, table, gap_open, gap_extend)
    return aln.identity(a, b)
