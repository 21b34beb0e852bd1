"""First-principles statistical tests.

Two tests drive the whole analysis layer: a one-tailed Wilcoxon
rank-sum (Mann-Whitney) test for similarity-score comparisons and the
Fisher exact test for per-feature 2x2 contingency screening. Both are
implemented directly: the rank-sum test enumerates the exact
permutation distribution for small pooled samples and otherwise uses
the tie-corrected normal approximation with continuity correction; the
Fisher test sums hypergeometric tail probabilities computed in log
space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import UsageError

# exact permutation enumeration is used when the pooled sample is at
# most this large; beyond it the normal approximation takes over
EXACT_RANKSUM_LIMIT = 12


def rankdata(values: np.ndarray) -> np.ndarray:
    """Midranks (ties share the mean of their rank block)."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _u_statistic(a: np.ndarray, b: np.ndarray) -> float:
    pooled = np.concatenate([a, b])
    ranks = rankdata(pooled)
    n1 = len(a)
    return float(ranks[:n1].sum() - n1 * (n1 + 1) / 2.0)


def _normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def rank_sum_one_tailed(a, b, alternative: str = "a_greater") -> float:
    """P-value for the alternative that sample ``a`` is stochastically
    greater than sample ``b``.

    The exact path enumerates all C(n, |a|) labelings of the pooled
    values and reports P(U >= U_obs); the approximate path uses the
    tie-corrected normal distribution with a 0.5 continuity correction.
    """
    if alternative != "a_greater":
        raise UsageError(f"unsupported alternative {alternative!r}")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n1, n2 = len(a), len(b)
    if n1 < 1 or n2 < 1:
        raise UsageError("both samples must be nonempty")
    n = n1 + n2
    u_obs = _u_statistic(a, b)

    if n <= EXACT_RANKSUM_LIMIT:
        pooled = np.concatenate([a, b])
        ranks = rankdata(pooled)
        offset = n1 * (n1 + 1) / 2.0
        hits = 0
        total = 0
        for idx in combinations(range(n), n1):
            u = ranks[list(idx)].sum() - offset
            total += 1
            if u >= u_obs - 1e-12:
                hits += 1
        return hits / total

    pooled = np.concatenate([a, b])
    _, counts = np.unique(pooled, return_counts=True)
    tie_term = float((counts.astype(np.float64) ** 3 - counts).sum())
    var = n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if var <= 0.0:
        return 1.0  # all pooled values identical
    mean = n1 * n2 / 2.0
    z = (u_obs - mean - 0.5) / math.sqrt(var)
    return _normal_sf(z)


@dataclass(frozen=True)
class ContingencyTable:
    """2x2 feature-by-set table.

    a: targeting records with the feature, b: targeting without,
    c: reference with, d: reference without.
    """

    a: int
    b: int
    c: int
    d: int

    def __post_init__(self):
        if min(self.a, self.b, self.c, self.d) < 0:
            raise UsageError("contingency counts must be nonnegative")

    @property
    def n(self) -> int:
        return self.a + self.b + self.c + self.d


def _log_hypergeom_pmf(a: int, row1: int, row2: int, col1: int) -> float:
    # P(A = a) with fixed margins: C(row1, a) C(row2, col1-a) / C(n, col1)
    n = row1 + row2
    return (
        math.lgamma(row1 + 1)
        - math.lgamma(a + 1)
        - math.lgamma(row1 - a + 1)
        + math.lgamma(row2 + 1)
        - math.lgamma(col1 - a + 1)
        - math.lgamma(row2 - (col1 - a) + 1)
        - (math.lgamma(n + 1) - math.lgamma(col1 + 1) - math.lgamma(n - col1 + 1))
    )


def fisher_exact(table: ContingencyTable, sided: str = "two_sided") -> float:
    """Exact hypergeometric tail probability for a 2x2 table.

    two_sided sums the probabilities of every margin-fixed table whose
    probability does not exceed the observed one (with a small relative
    slack against floating-point noise); greater sums tables with at
    least the observed top-left count.
    """
    if sided not in ("two_sided", "greater"):
        raise UsageError(f"unsupported sidedness {sided!r}")
    row1 = table.a + table.b
    row2 = table.c + table.d
    col1 = table.a + table.c
    if table.n == 0:
        return 1.0
    lo = max(0, col1 - row2)
    hi = min(col1, row1)
    log_pmfs = {x: _log_hypergeom_pmf(x, row1, row2, col1) for x in range(lo, hi + 1)}
    log_obs = log_pmfs[table.a]
    if sided == "greater":
        tail = [lp for x, lp in log_pmfs.items() if x >= table.a]
    else:
        cutoff = log_obs + math.log1p(1e-7)
        tail = [lp for lp in log_pmfs.values() if lp <= cutoff]
    m = max(tail)
    p = math.exp(m) * sum(math.exp(lp - m) for lp in tail)
    return min(p, 1.0)
