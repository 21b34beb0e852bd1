"""Data preparation: species filtering, representative clustering, and
the k-iteration sampling engine.

Sampling follows the set/dataset protocol: the desired per-dataset size
defaults to the median targeting dataset size, every dataset is sampled
down or deterministically duplicated up to its quota, and each of the k
iterations is derived solely from (seed, iteration index) so iterations
can be regenerated independently and in parallel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .align import SubstitutionTable, global_align
from .errors import ConfigError, DataError, UsageError
from .records import SequenceSet
from .rng import stream


# -- species filtering ---------------------------------------------------------

def filter_by_species(seqset: SequenceSet, calls, allowed) -> tuple[SequenceSet, dict]:
    """Keep records whose best germline call species is allowed.

    ``calls`` maps record id to an object with a ``species`` attribute.
    Returns the filtered set and a removal count per species.
    """
    allowed = set(allowed)
    kept = []
    removed: dict[str, int] = {}
    for rec in seqset:
        call = calls.get(rec.id)
        if call is None:
            raise DataError(f"record {rec.id!r} has no germline call")
        if call.species in allowed:
            kept.append(rec)
        else:
            removed[call.species] = removed.get(call.species, 0) + 1
    return SequenceSet(kept), removed


# -- representative clustering ---------------------------------------------------

def _composition_identity_bound(a: str, b: str) -> float:
    """Upper bound on percent identity without aligning.

    Matches cannot exceed the shared residue composition, and aligned
    columns cannot be fewer than the longer sequence.
    """
    counts_a: dict[str, int] = {}
    counts_b: dict[str, int] = {}
    for ch in a:
        counts_a[ch] = counts_a.get(ch, 0) + 1
    for ch in b:
        counts_b[ch] = counts_b.get(ch, 0) + 1
    shared = sum(min(n, counts_b.get(ch, 0)) for ch, n in counts_a.items())
    return shared / max(len(a), len(b))


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i: int, j: int) -> None:
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[max(ri, rj)] = min(ri, rj)


def cluster_representatives(
    seqset: SequenceSet,
    table: SubstitutionTable,
    identity_threshold: float = 0.95,
    gap_open: float = -10.0,
    gap_extend: float = -1.0,
) -> tuple[SequenceSet, list[list[int]]]:
    """Single-linkage clustering over pairwise percent identity of the
    concatenated available chains; one representative per cluster.

    The representative is the longest record (total chain length), ties
    broken by the lexicographically smallest id. Returns the
    representative set plus the clusters as index lists.
    """
    if not 0.0 < identity_threshold <= 1.0:
        raise ConfigError("identity threshold must be in (0, 1]")
    n = len(seqset)
    seqs = [(rec.heavy or "") + (rec.light or "") for rec in seqset]
    uf = _UnionFind(n)
    for i in range(n):
        for j in range(i + 1, n):
            if uf.find(i) == uf.find(j):
                continue
            if _composition_identity_bound(seqs[i], seqs[j]) < identity_threshold:
                continue
            aln = global_align(seqs[i], seqs[j], table, gap_open, gap_extend)
            if aln.identity(seqs[i], seqs[j]) >= identity_threshold:
                uf.union(i, j)
    clusters: dict[int, list[int]] = {}
    for i in range(n):
        clusters.setdefault(uf.find(i), []).append(i)
    ordered = sorted(clusters.values(), key=lambda c: c[0])
    reps = []
    for members in ordered:
        best = min(members, key=lambda i: (-seqset.records[i].total_length, seqset.records[i].id))
        reps.append(best)
    return seqset.subset(reps), ordered


# -- sampling -------------------------------------------------------------------

@dataclass(frozen=True)
class SamplingPlan:
    desired_dataset_size: int
    k: int
    seed: int
    targeting_quotas: dict = field(default_factory=dict)  # dataset_id -> quota
    reference_quotas: dict = field(default_factory=dict)
    override_targeting_total: int | None = None
    override_reference_total: int | None = None

    @property
    def targeting_total(self) -> int:
        return sum(self.targeting_quotas.values())

    @property
    def reference_total(self) -> int:
        return sum(self.reference_quotas.values())


@dataclass(frozen=True)
class SampledIteration:
    iteration_index: int
    targeting_indices: tuple
    reference_indices: tuple


def median_dataset_size(sizes) -> int:
    """Median of dataset sizes; even count takes the mean of the middle
    two rounded half-up."""
    ordered = sorted(sizes)
    if not ordered:
        raise ConfigError("no datasets to take a median over")
    n = len(ordered)
    if n % 2 == 1:
        return ordered[n // 2]
    mid = (ordered[n // 2 - 1] + ordered[n // 2]) / 2.0
    return int(math.floor(mid + 0.5))


def _split_quota(total: int, dataset_ids) -> dict:
    """ceil(total / n) per dataset, trimmed from the last dataset back so
    the quotas sum exactly and never go negative."""
    ids = list(dataset_ids)
    per = math.ceil(total / len(ids))
    quotas = {ds: per for ds in ids}
    excess = per * len(ids) - total
    for ds in reversed(ids):
        if excess == 0:
            break
        cut = min(excess, quotas[ds])
        quotas[ds] -= cut
        excess -= cut
    return quotas


def plan_sampling(
    targeting: SequenceSet,
    reference: SequenceSet,
    k: int = 100,
    seed: int = 0,
    override_targeting_total: int | None = None,
    override_reference_total: int | None = None,
) -> SamplingPlan:
    if k < 1:
        raise ConfigError("k must be at least 1")
    t_sizes = targeting.dataset_sizes()
    if not t_sizes:
        raise ConfigError("targeting set has no datasets")
    if len(reference) == 0:
        raise ConfigError("reference set is empty")
    desired = median_dataset_size(t_sizes.values())
    if override_targeting_total is not None:
        t_total = override_targeting_total
    else:
        t_total = desired * len(t_sizes)
    r_total = override_reference_total if override_reference_total is not None else t_total
    return SamplingPlan(
        desired_dataset_size=desired,
        k=k,
        seed=seed,
        targeting_quotas=_split_quota(t_total, t_sizes.keys()),
        reference_quotas=_split_quota(r_total, reference.dataset_sizes().keys()),
        override_targeting_total=override_targeting_total,
        override_reference_total=override_reference_total,
    )


def _sample_dataset(indices: list[int], quota: int, rng) -> list[int]:
    """Sample without replacement when possible, otherwise cycle every
    record floor(quota/size) times and sample the remainder."""
    size = len(indices)
    if quota <= 0:
        return []
    if size >= quota:
        picked = rng.choice(size, size=quota, replace=False)
        return [indices[i] for i in sorted(picked.tolist())]
    reps, rem = divmod(quota, size)
    out = list(indices) * reps
    if rem:
        picked = rng.choice(size, size=rem, replace=False)
        out.extend(indices[i] for i in sorted(picked.tolist()))
    return out


def sample_iteration(
    plan: SamplingPlan, targeting: SequenceSet, reference: SequenceSet, index: int
) -> SampledIteration:
    if not 0 <= index < plan.k:
        raise UsageError(f"iteration index {index} outside 0..{plan.k - 1}")
    t_sets = targeting.datasets
    r_sets = reference.datasets
    t_out: list[int] = []
    for ds, quota in plan.targeting_quotas.items():
        rng = stream(plan.seed, "sampling", index, "targeting", ds)
        t_out.extend(_sample_dataset(t_sets[ds], quota, rng))
    r_out: list[int] = []
    for ds, quota in plan.reference_quotas.items():
        rng = stream(plan.seed, "sampling", index, "reference", ds)
        r_out.extend(_sample_dataset(r_sets[ds], quota, rng))
    return SampledIteration(index, tuple(t_out), tuple(r_out))


def sample_iterations(plan: SamplingPlan, targeting: SequenceSet, reference: SequenceSet):
    """Yield the k iterations; each is fully determined by (seed, index)."""
    for i in range(plan.k):
        yield sample_iteration(plan, targeting, reference, i)
