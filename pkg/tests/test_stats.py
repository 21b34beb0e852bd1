import math
from fractions import Fraction
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from abprofile.errors import UsageError
from abprofile.stats import ContingencyTable, fisher_exact, rank_sum_one_tailed, rankdata


# -- oracles -----------------------------------------------------------------

def pairwise_u(a, b):
    """U via direct pairwise comparison, independent of ranking."""
    u = 0.0
    for x in a:
        for y in b:
            if x > y:
                u += 1.0
            elif x == y:
                u += 0.5
    return u


def exact_ranksum_oracle(a, b):
    pooled = list(a) + list(b)
    n1 = len(a)
    u_obs = pairwise_u(a, b)
    hits = total = 0
    for idx in combinations(range(len(pooled)), n1):
        idx = set(idx)
        aa = [pooled[i] for i in idx]
        bb = [pooled[i] for i in range(len(pooled)) if i not in idx]
        total += 1
        if pairwise_u(aa, bb) >= u_obs - 1e-12:
            hits += 1
    return hits / total


def fisher_oracle(t: ContingencyTable, sided):
    """Exact rational enumeration of all margin-fixed tables."""
    row1, row2, col1 = t.a + t.b, t.c + t.d, t.a + t.c
    denom = math.comb(row1 + row2, col1)
    lo, hi = max(0, col1 - row2), min(col1, row1)
    probs = {
        x: Fraction(math.comb(row1, x) * math.comb(row2, col1 - x), denom)
        for x in range(lo, hi + 1)
    }
    obs = probs[t.a]
    if sided == "greater":
        return float(sum(p for x, p in probs.items() if x >= t.a))
    cutoff = obs * Fraction(10**7 + 1, 10**7)
    return float(sum(p for p in probs.values() if p <= cutoff))


# -- rankdata ----------------------------------------------------------------

def test_midranks():
    assert list(rankdata(np.array([10.0, 20.0, 20.0, 30.0]))) == [1.0, 2.5, 2.5, 4.0]


# -- rank-sum ----------------------------------------------------------------

def test_ranksum_spec_examples():
    assert rank_sum_one_tailed([4, 5, 6], [1, 2, 3]) == pytest.approx(1 / 20)
    assert rank_sum_one_tailed([1, 2, 3], [4, 5, 6]) == pytest.approx(1.0)
    assert rank_sum_one_tailed([1, 2, 2], [1, 2, 2]) >= 0.5


def test_ranksum_identical_values():
    assert rank_sum_one_tailed([5] * 4, [5] * 5) == 1.0
    assert rank_sum_one_tailed([5] * 40, [5] * 50) == 1.0


def test_ranksum_exact_matches_oracle():
    rng = np.random.default_rng(3)
    for _ in range(40):
        n1 = int(rng.integers(1, 7))
        n2 = int(rng.integers(1, 13 - n1))
        a = rng.integers(0, 5, size=n1).astype(float)
        b = rng.integers(0, 5, size=n2).astype(float)
        got = rank_sum_one_tailed(a, b)
        want = exact_ranksum_oracle(a, b)
        assert got == pytest.approx(want, abs=1e-9), (a.tolist(), b.tolist())


def test_ranksum_approx_close_to_exact_at_boundary():
    # just above the exact cutoff, the approximation should not be wild
    rng = np.random.default_rng(5)
    a = rng.normal(1.0, 1.0, size=7)
    b = rng.normal(0.0, 1.0, size=7)
    p = rank_sum_one_tailed(a, b)
    assert 0.0 < p < 1.0


def test_ranksum_strong_separation_large_n():
    a = np.linspace(10, 11, 200)
    b = np.linspace(0, 1, 200)
    assert rank_sum_one_tailed(a, b) < 1e-10
    assert rank_sum_one_tailed(b, a) > 0.999


def test_ranksum_rejects_empty():
    with pytest.raises(UsageError):
        rank_sum_one_tailed([], [1.0])


# -- fisher ------------------------------------------------------------------

def test_fisher_spec_examples():
    assert fisher_exact(ContingencyTable(5, 5, 5, 5)) == pytest.approx(1.0)
    p = fisher_exact(ContingencyTable(10, 0, 0, 10))
    assert p == pytest.approx(2 / math.comb(20, 10), rel=1e-9)
    assert p == pytest.approx(1.0825e-5, rel=1e-3)
    assert fisher_exact(ContingencyTable(0, 7, 0, 9)) == 1.0


def test_fisher_matches_rational_oracle():
    rng = np.random.default_rng(9)
    for _ in range(200):
        t = ContingencyTable(*(int(x) for x in rng.integers(0, 11, size=4)))
        if t.n == 0:
            continue
        for sided in ("two_sided", "greater"):
            got = fisher_exact(t, sided)
            want = fisher_oracle(t, sided)
            assert got == pytest.approx(want, abs=1e-9), (t, sided)


def test_fisher_two_sided_symmetric_in_set_labels():
    t = ContingencyTable(8, 2, 3, 7)
    swapped = ContingencyTable(3, 7, 8, 2)
    assert fisher_exact(t) == pytest.approx(fisher_exact(swapped), rel=1e-12)


@given(
    st.integers(0, 12), st.integers(0, 12), st.integers(0, 12), st.integers(0, 12)
)
@settings(max_examples=60, deadline=None)
def test_fisher_probability_bounds(a, b, c, d):
    t = ContingencyTable(a, b, c, d)
    p = fisher_exact(t)
    assert 0.0 < p <= 1.0
    pg = fisher_exact(t, "greater")
    assert 0.0 < pg <= 1.0


def test_fisher_rejects_negative():
    with pytest.raises(UsageError):
        ContingencyTable(-1, 2, 3, 4)
