"""Chothia numbering via profile alignment, plus region extraction.

Chains are numbered by globally aligning them against bundled
species/chain consensus profiles whose columns carry Chothia positions.
The best-scoring profile wins (normalized by the profile self-score; a
floor of 0.5 rejects non-antibody input). Residues falling inside a CDR
span are renumbered by a deterministic loop fill: scheme positions are
assigned from both ends of the loop, and surplus residues receive
insertion codes at the loop apex (e.g. 100A, 100B inside CDR-H3).

Externally produced numbering can be imported from CSV
(``id,chain,position,insertion,residue``) and used as a drop-in
replacement for the internal aligner.
"""

from __future__ import annotations

import csv
import functools
import string
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .align import SubstitutionTable, global_align
from .errors import ConfigError, DataError, NumberingFailure, UsageError

HEAVY = "heavy"
LIGHT = "light"

CDR_NAMES = {
    HEAVY: ("CDRH1", "CDRH2", "CDRH3"),
    LIGHT: ("CDRL1", "CDRL2", "CDRL3"),
}
FR_NAMES = {
    HEAVY: ("FRH1", "FRH2", "FRH3", "FRH4"),
    LIGHT: ("FRL1", "FRL2", "FRL3", "FRL4"),
}

MIN_CHAIN_LENGTH = 70
MAX_CHAIN_LENGTH = 200
QUALITY_FLOOR = 0.5


@functools.total_ordering
@dataclass(frozen=True)
class ChothiaPosition:
    number: int
    insertion: str = ""

    def __post_init__(self):
        if self.number < 1:
            raise UsageError("Chothia position numbers start at 1")
        if self.insertion and self.insertion not in string.ascii_uppercase:
            raise UsageError(f"bad insertion code {self.insertion!r}")

    def _key(self):
        return (self.number, self.insertion)

    def __lt__(self, other):
        return self._key() < other._key()

    def __str__(self):
        return f"{self.number}{self.insertion}"

    @classmethod
    def parse(cls, text: str) -> "ChothiaPosition":
        text = text.strip()
        if text and text[-1].isalpha():
            return cls(int(text[:-1]), text[-1].upper())
        return cls(int(text))


@dataclass(frozen=True)
class NumberedChain:
    chain_type: str
    positions: tuple  # ChothiaPosition, strictly increasing
    residues: str  # one residue per position, in position order
    source: str = "internal"  # internal | imported

    def __post_init__(self):
        if len(self.positions) != len(self.residues):
            raise UsageError("positions and residues must have equal length")
        for prev, cur in zip(self.positions, self.positions[1:]):
            if not prev < cur:
                raise DataError(f"positions not strictly increasing at {cur}")

    def __len__(self):
        return len(self.positions)

    def items(self):
        return zip(self.positions, self.residues)

    def as_dict(self) -> dict:
        return dict(self.items())


@dataclass(frozen=True)
class CdrSpan:
    region: str
    chain_type: str
    start: int
    end: int
    apex: int


@dataclass(frozen=True)
class BoundaryTable:
    spans: tuple  # CdrSpan, grouped by chain

    def cdrs(self, chain_type: str):
        return tuple(s for s in self.spans if s.chain_type == chain_type)

    def span(self, region: str) -> CdrSpan:
        for s in self.spans:
            if s.region == region:
                return s
        raise UsageError(f"unknown region {region!r}")


def load_boundaries(path=None) -> BoundaryTable:
    if path is None:
        text = resources.files("abprofile.data").joinpath("boundaries.csv").read_text()
    else:
        text = Path(path).read_text()
    spans = []
    for row in csv.DictReader(text.strip().splitlines()):
        span = CdrSpan(
            region=row["region"],
            chain_type=row["chain"],
            start=int(row["start"]),
            end=int(row["end"]),
            apex=int(row["apex"]),
        )
        if not span.start <= span.apex <= span.end:
            raise ConfigError(f"{span.region}: apex must lie inside the span")
        spans.append(span)
    return BoundaryTable(tuple(spans))


@dataclass(frozen=True)
class NumberingProfile:
    name: str  # e.g. human_heavy
    species: str
    chain_type: str
    positions: tuple
    residues: str
    self_score: float


@dataclass(frozen=True)
class NumberingProfileSet:
    profiles: tuple
    table: SubstitutionTable
    boundaries: BoundaryTable
    gap_open: float = -10.0
    gap_extend: float = -1.0
    quality_floor: float = QUALITY_FLOOR

    def for_chain(self, chain_type: str):
        return tuple(p for p in self.profiles if p.chain_type == chain_type)


def load_profiles(
    table: SubstitutionTable,
    boundaries: BoundaryTable | None = None,
    directory=None,
    quality_floor: float = QUALITY_FLOOR,
) -> NumberingProfileSet:
    """Load every ``{species}_{chain}.csv`` profile from the directory
    (the bundled profiles by default)."""
    if boundaries is None:
        boundaries = load_boundaries()
    if directory is None:
        root = resources.files("abprofile.data").joinpath("profiles")
        names = sorted(p.name for p in root.iterdir() if p.name.endswith(".csv"))
        texts = {n: root.joinpath(n).read_text() for n in names}
    else:
        root = Path(directory)
        names = sorted(p.name for p in root.glob("*.csv"))
        texts = {n: (root / n).read_text() for n in names}
    if not names:
        raise ConfigError("no numbering profiles found")
    profiles = []
    for name in names:
        stem = name[: -len(".csv")]
        try:
            species, chain_type = stem.rsplit("_", 1)
        except ValueError:
            raise ConfigError(f"profile file {name!r} must be named species_chain.csv")
        if chain_type not in (HEAVY, LIGHT):
            raise ConfigError(f"profile {name!r}: unknown chain type {chain_type!r}")
        positions = []
        residues = []
        for row in csv.DictReader(texts[name].strip().splitlines()):
            positions.append(ChothiaPosition(int(row["position"]), row["insertion"].strip()))
            residues.append(row["residue"].strip())
        seq = "".join(residues)
        self_score = sum(table.score(c, c) for c in seq)
        profiles.append(
            NumberingProfile(
                name=stem,
                species=species,
                chain_type=chain_type,
                positions=tuple(positions),
                residues=seq,
                self_score=self_score,
            )
        )
    return NumberingProfileSet(
        profiles=tuple(profiles), table=table, boundaries=boundaries, quality_floor=quality_floor
    )


def _loop_fill(start: int, end: int, apex: int, n: int) -> list[ChothiaPosition]:
    """Assign n residues to the scheme positions [start, end]: both ends
    fill inward, surplus residues get insertion codes at the apex."""
    scheme = list(range(start, end + 1))
    p = len(scheme)
    if n >= p:
        surplus = n - p
        if surplus > len(string.ascii_uppercase):
            raise NumberingFailure(f"loop of {n} residues exceeds insertion capacity")
        out = [ChothiaPosition(x) for x in scheme if x <= apex]
        out += [ChothiaPosition(apex, code) for code in string.ascii_uppercase[:surplus]]
        out += [ChothiaPosition(x) for x in scheme if x > apex]
        return out
    left = (n + 1) // 2
    right = n - left
    picks = scheme[:left] + (scheme[p - right :] if right else [])
    return [ChothiaPosition(x) for x in picks]


def number_chothia(chain: str, chain_type: str, profile_set: NumberingProfileSet) -> NumberedChain:
    """Assign Chothia positions to an amino-acid chain."""
    if chain_type not in (HEAVY, LIGHT):
        raise UsageError(f"unknown chain type {chain_type!r}")
    if not MIN_CHAIN_LENGTH <= len(chain) <= MAX_CHAIN_LENGTH:
        raise NumberingFailure(
            f"chain length {len(chain)} outside [{MIN_CHAIN_LENGTH}, {MAX_CHAIN_LENGTH}]"
        )
    candidates = profile_set.for_chain(chain_type)
    if not candidates:
        raise ConfigError(f"no numbering profiles for chain type {chain_type!r}")

    best = None
    best_norm = -1.0
    for profile in candidates:
        aln = global_align(
            chain, profile.residues, profile_set.table, profile_set.gap_open, profile_set.gap_extend
        )
        norm = aln.score / profile.self_score
        if norm > best_norm:
            best, best_norm = (profile, aln), norm
    if best_norm < profile_set.quality_floor:
        raise NumberingFailure(f"best profile score {best_norm:.3f} below quality floor")
    profile, aln = best

    mapped: dict[int, ChothiaPosition] = {}
    for qi, pj in aln.pairs:
        if qi is not None and pj is not None:
            mapped[qi] = profile.positions[pj]

    n = len(chain)
    assigned: list[ChothiaPosition | None] = [mapped.get(i) for i in range(n)]

    # renumber each CDR loop: everything between the last framework
    # residue before the span and the first framework residue after it
    for span in profile_set.boundaries.cdrs(chain_type):
        lefts = [qi for qi, pos in mapped.items() if pos.number < span.start]
        rights = [qi for qi, pos in mapped.items() if pos.number > span.end]
        lo = max(lefts) + 1 if lefts else 0
        hi = min(rights) - 1 if rights else n - 1
        if lo > hi:
            continue
        fill = _loop_fill(span.start, span.end, span.apex, hi - lo + 1)
        for offset, pos in enumerate(fill):
            assigned[lo + offset] = pos

    # framework insertions: attach codes to the preceding assigned position
    i = 0
    while i < n:
        if assigned[i] is None:
            j = i
            while j < n and assigned[j] is None:
                j += 1
            if i == 0:
                raise NumberingFailure("leading residues could not be numbered")
            anchor = assigned[i - 1]
            run = j - i
            existing = len(anchor.insertion)
            if existing + run > len(string.ascii_uppercase):
                raise NumberingFailure("framework insertion run exceeds insertion capacity")
            base_idx = string.ascii_uppercase.index(anchor.insertion) + 1 if anchor.insertion else 0
            for offset in range(run):
                assigned[i + offset] = ChothiaPosition(
                    anchor.number, string.ascii_uppercase[base_idx + offset]
                )
            i = j
        else:
            i += 1

    try:
        return NumberedChain(
            chain_type=chain_type,
            positions=tuple(assigned),
            residues=chain,
            source="internal",
        )
    except DataError as exc:
        raise NumberingFailure(f"inconsistent position assignment: {exc}") from exc


# -- regions -------------------------------------------------------------------

@dataclass(frozen=True)
class Region:
    name: str
    positions: tuple
    residues: str

    @property
    def empty(self) -> bool:
        return len(self.positions) == 0

    def __len__(self):
        return len(self.positions)

    def residue_at(self, number: int, insertion: str = "") -> str | None:
        target = ChothiaPosition(number, insertion)
        for pos, res in zip(self.positions, self.residues):
            if pos == target:
                return res
        return None


@dataclass(frozen=True)
class RegionMap:
    chain_type: str
    regions: dict  # region name -> Region, in positional order

    def __getitem__(self, name: str) -> Region:
        return self.regions[name]

    def cdr(self, index: int) -> Region:
        return self.regions[CDR_NAMES[self.chain_type][index - 1]]

    def residue_at(self, number: int, insertion: str = "") -> str | None:
        for region in self.regions.values():
            res = region.residue_at(number, insertion)
            if res is not None:
                return res
        return None


def extract_regions(chain: NumberedChain, boundaries: BoundaryTable) -> RegionMap:
    """Slice a numbered chain into CDRs and framework regions.

    Regions tile the chain: every residue lands in exactly one region,
    decided by its position number alone (insertion codes inherit their
    base position's region). Empty regions are kept and flagged.
    """
    cdrs = boundaries.cdrs(chain.chain_type)
    fr_names = FR_NAMES[chain.chain_type]
    order: list[tuple[str, int, int]] = []
    prev_end = 0
    for i, span in enumerate(cdrs):
        order.append((fr_names[i], prev_end + 1, span.start - 1))
        order.append((span.region, span.start, span.end))
        prev_end = span.end
    order.append((fr_names[-1], prev_end + 1, 10**6))

    buckets: dict[str, list] = {name: [] for name, _, _ in order}
    for pos, res in chain.items():
        for name, lo, hi in order:
            if lo <= pos.number <= hi:
                buckets[name].append((pos, res))
                break
    regions = {}
    for name, _, _ in order:
        entries = buckets[name]
        regions[name] = Region(
            name=name,
            positions=tuple(p for p, _ in entries),
            residues="".join(r for _, r in entries),
        )
    return RegionMap(chain_type=chain.chain_type, regions=regions)


# -- import / export -----------------------------------------------------------

def export_numbered(chains: dict, path) -> None:
    """Write ``{record_id: {chain_type: NumberedChain}}`` to numbered CSV."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "chain", "position", "insertion", "residue"])
        for rec_id, by_chain in chains.items():
            for chain_type in (HEAVY, LIGHT):
                numbered = by_chain.get(chain_type)
                if numbered is None:
                    continue
                for pos, res in numbered.items():
                    writer.writerow([rec_id, chain_type, pos.number, pos.insertion, res])


def import_numbered(path) -> dict:
    """Read a numbered CSV back into ``{record_id: {chain_type: NumberedChain}}``.

    Positions must be strictly increasing within each (id, chain) group.
    """
    grouped: dict[tuple, list] = {}
    order: list[tuple] = []
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"id", "chain", "position", "insertion", "residue"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise DataError("numbered CSV must have columns id,chain,position,insertion,residue")
        for lineno, row in enumerate(reader, start=2):
            chain_type = row["chain"]
            if chain_type not in (HEAVY, LIGHT):
                raise DataError(f"line {lineno}: unknown chain type {chain_type!r}")
            key = (row["id"], chain_type)
            if key not in grouped:
                grouped[key] = []
                order.append(key)
            pos = ChothiaPosition(int(row["position"]), row["insertion"].strip())
            grouped[key].append((lineno, pos, row["residue"].strip()))

    out: dict[str, dict] = {}
    for rec_id, chain_type in order:
        entries = grouped[(rec_id, chain_type)]
        for (ln_a, pos_a, _), (ln_b, pos_b, _) in zip(entries, entries[1:]):
            if not pos_a < pos_b:
                raise DataError(
                    f"line {ln_b}: position {pos_b} not after {pos_a} for record {rec_id!r}"
                )
        numbered = NumberedChain(
            chain_type=chain_type,
            positions=tuple(p for _, p, _ in entries),
            residues="".join(r for _, _, r in entries),
            source="imported",
        )
        out.setdefault(rec_id, {})[chain_type] = numbered
    return out
