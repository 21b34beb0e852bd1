"""Feature extraction: germline calls, CDR canonical classes, CDR-H3
isoelectric point with recursive binning, positional motifs, and the
assembly of binary feature fingerprints over a data-dependent
vocabulary.

The fingerprint is segmented: four germline segments (HV, HJ, LV, LJ),
six canonical-structure segments (one per CDR), one isoelectric-point
segment and one positional-motif segment. Single-valued segments set at
most one bit per record; the motif segment sets a bit for every
vocabulary motif found at its stated CDR-H3 position.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .align import SubstitutionTable, local_score
from .errors import ConfigError, DataError, UsageError
from .numbering import HEAVY, LIGHT, BoundaryTable, NumberedChain, RegionMap, extract_regions

SEGMENTS = (
    "germ_hv",
    "germ_hj",
    "germ_lv",
    "germ_lj",
    "canon_h1",
    "canon_h2",
    "canon_h3",
    "canon_l1",
    "canon_l2",
    "canon_l3",
    "pi",
    "motif",
)
GERMLINE_SEGMENTS = SEGMENTS[:4]
CANONICAL_SEGMENTS = SEGMENTS[4:10]
_CANON_BY_REGION = {
    "CDRH1": "canon_h1",
    "CDRH2": "canon_h2",
    "CDRH3": "canon_h3",
    "CDRL1": "canon_l1",
    "CDRL2": "canon_l2",
    "CDRL3": "canon_l3",
}

MOTIF_MIN_LEN = 2
MOTIF_MAX_LEN = 10
MOTIFS_PER_LENGTH = 2


# -- germline ----------------------------------------------------------------

@dataclass(frozen=True)
class GermlineGene:
    species: str
    segment: str  # hv | hj | lv | lj
    name: str  # allele suffix stripped
    allele: str  # as given in the reference file
    sequence: str


@dataclass(frozen=True)
class GermlineReference:
    genes: tuple

    def for_segment(self, segment: str):
        return tuple(g for g in self.genes if g.segment == segment)

    @property
    def species(self):
        return sorted({g.species for g in self.genes})


def load_germline_db(directory=None) -> GermlineReference:
    """Load ``{species}_{segment}.fasta`` gene files (bundled by default)."""
    if directory is None:
        root = resources.files("abprofile.data").joinpath("germline")
        names = sorted(p.name for p in root.iterdir() if p.name.endswith(".fasta"))
        texts = {n: root.joinpath(n).read_text() for n in names}
    else:
        root = Path(directory)
        names = sorted(p.name for p in root.glob("*.fasta"))
        texts = {n: (root / n).read_text() for n in names}
    if not names:
        raise ConfigError("no germline reference files found")
    genes = []
    for fname in names:
        stem = fname[: -len(".fasta")]
        try:
            species, segment = stem.rsplit("_", 1)
        except ValueError:
            raise ConfigError(f"germline file {fname!r} must be named species_segment.fasta")
        if segment not in ("hv", "hj", "lv", "lj"):
            raise ConfigError(f"germline file {fname!r}: unknown segment {segment!r}")
        header = None
        chunks: list[str] = []

        def flush():
            if header is None:
                return
            seq = "".join(chunks)
            genes.append(
                GermlineGene(
                    species=species,
                    segment=segment,
                    name=header.split("*")[0],
                    allele=header,
                    sequence=seq,
                )
            )

        for line in texts[fname].splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith(">"):
                flush()
                header = line[1:].strip()
                chunks = []
            else:
                chunks.append(line)
        flush()
    return GermlineReference(tuple(genes))


@dataclass(frozen=True)
class GermlineCall:
    hv: str | None = None
    hj: str | None = None
    lv: str | None = None
    lj: str | None = None
    species: str | None = None
    scores: dict = field(default_factory=dict, compare=False)

    def get(self, segment: str) -> str | None:
        return getattr(self, segment)


def _best_gene(chain: str, genes, table: SubstitutionTable):
    best = None
    best_score = -np.inf
    for gene in sorted(genes, key=lambda g: (g.name, g.allele)):
        score = local_score(chain, gene.sequence, table)
        if score > best_score:
            best, best_score = gene, score
    return best, float(best_score)


def assign_germline(
    chains: dict, refdb: GermlineReference, table: SubstitutionTable
) -> GermlineCall:
    """Best-alignment germline call for a record's available chains.

    Each segment is called independently as the reference gene with the
    maximal local alignment score; ties go to the lexicographically
    smallest gene name. Allele suffixes are never reported. The record
    species is taken from the heavy V call when a heavy chain is
    present, otherwise from the light V call.
    """
    fields: dict[str, str | None] = {"hv": None, "hj": None, "lv": None, "lj": None}
    scores: dict[str, float] = {}
    species_by_segment: dict[str, str] = {}
    plan = []
    heavy = chains.get(HEAVY)
    light = chains.get(LIGHT)
    if heavy:
        plan += [("hv", heavy), ("hj", heavy)]
    if light:
        plan += [("lv", light), ("lj", light)]
    for segment, chain in plan:
        genes = refdb.for_segment(segment)
        if not genes:
            raise ConfigError(f"germline reference has no {segment!r} genes")
        seq = chain.residues if isinstance(chain, NumberedChain) else chain
        gene, score = _best_gene(seq, genes, table)
        fields[segment] = gene.name
        scores[segment] = score
        species_by_segment[segment] = gene.species
    species = species_by_segment.get("hv") or species_by_segment.get("lv")
    return GermlineCall(species=species, scores=scores, **fields)


# -- canonical structures ------------------------------------------------------

@dataclass(frozen=True)
class CanonicalRule:
    region: str
    min_len: int
    max_len: int
    requirements: tuple  # ((chothia position number, allowed residues), ...)
    class_id: int


def load_canonical_rules(path=None) -> tuple:
    if path is None:
        text = resources.files("abprofile.data").joinpath("canonical_rules.csv").read_text()
    else:
        text = Path(path).read_text()
    rules = []
    for lineno, row in enumerate(csv.DictReader(text.strip().splitlines()), start=2):
        try:
            region = row["region"].strip()
            length = row["length"].strip()
            if "-" in length:
                lo, hi = (int(x) for x in length.split("-"))
            else:
                lo = hi = int(length)
            reqs = []
            raw = (row["requirements"] or "").strip()
            if raw:
                for item in raw.split(";"):
                    pos, residues = item.split(":")
                    reqs.append((int(pos), residues.strip()))
            rules.append(
                CanonicalRule(
                    region=region,
                    min_len=lo,
                    max_len=hi,
                    requirements=tuple(reqs),
                    class_id=int(row["class_id"]),
                )
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"canonical rule file line {lineno}: {exc}") from exc
    if not rules:
        raise ConfigError("canonical rule table is empty")
    return tuple(rules)


def assign_canonical(regions: RegionMap, rules) -> dict:
    """First matching rule per CDR (keyed by loop length plus required
    residues at specific Chothia positions); unmatched loops get no call."""
    out: dict[str, int] = {}
    for region_name, segment in _CANON_BY_REGION.items():
        region = regions.regions.get(region_name)
        if region is None or region.empty:
            continue
        loop_len = len(region)
        for rule in rules:
            if rule.region != region_name:
                continue
            if not rule.min_len <= loop_len <= rule.max_len:
                continue
            ok = True
            for number, allowed in rule.requirements:
                res = regions.residue_at(number)
                if res is None or res not in allowed:
                    ok = False
                    break
            if ok:
                out[region_name] = rule.class_id
                break
    return out


# -- isoelectric point -----------------------------------------------------------

@dataclass(frozen=True)
class PkaTable:
    positive: dict  # group -> pKa ('nterm' plus side chains)
    negative: dict  # group -> pKa ('cterm' plus side chains)


def load_pka_table(path=None) -> PkaTable:
    if path is None:
        text = resources.files("abprofile.data").joinpath("pka.csv").read_text()
    else:
        text = Path(path).read_text()
    positive: dict[str, float] = {}
    negative: dict[str, float] = {}
    for row in csv.DictReader(text.strip().splitlines()):
        group = row["group"].strip()
        value = float(row["pka"])
        if row["charge"].strip() == "positive":
            positive[group] = value
        elif row["charge"].strip() == "negative":
            negative[group] = value
        else:
            raise ConfigError(f"pKa table: bad charge {row['charge']!r}")
    if "nterm" not in positive or "cterm" not in negative:
        raise ConfigError("pKa table must define nterm and cterm groups")
    return PkaTable(positive=positive, negative=negative)


def net_charge(sequence: str, ph: float, pka: PkaTable) -> float:
    """Henderson-Hasselbalch net charge at a given pH (free termini)."""
    charge = 1.0 / (1.0 + 10.0 ** (ph - pka.positive["nterm"]))
    charge -= 1.0 / (1.0 + 10.0 ** (pka.negative["cterm"] - ph))
    for res in sequence:
        if res in pka.positive:
            charge += 1.0 / (1.0 + 10.0 ** (ph - pka.positive[res]))
        elif res in pka.negative:
            charge -= 1.0 / (1.0 + 10.0 ** (pka.negative[res] - ph))
    return charge


def compute_pi(sequence: str, pka: PkaTable, tol: float = 1e-4) -> float:
    """The pH in [0, 14] where the net charge crosses zero (bisection).

    Net charge is strictly decreasing in pH, so the root is unique.
    """
    if not sequence:
        raise UsageError("cannot compute pI of an empty sequence")
    lo, hi = 0.0, 14.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if net_charge(sequence, mid, pka) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# -- pI binning -------------------------------------------------------------------

@dataclass(frozen=True)
class PiBinning:
    edges: tuple  # ascending, edges[0] == 0.0 and edges[-1] == 14.0

    @property
    def bins(self):
        return tuple(zip(self.edges, self.edges[1:]))

    def label(self, index: int) -> str:
        lo, hi = self.bins[index]
        return f"{lo:g}-{hi:g}"

    @property
    def labels(self):
        return tuple(self.label(i) for i in range(len(self.bins)))

    def bin_index(self, value: float) -> int:
        """Bins are half-open [lo, hi); the last bin includes 14."""
        if not 0.0 <= value <= 14.0:
            raise UsageError(f"pI value {value} outside [0, 14]")
        for i, (lo, hi) in enumerate(self.bins):
            if lo <= value < hi:
                return i
        return len(self.bins) - 1


def bin_pi(values, min_fraction: float = 0.10, min_width: float = 0.3) -> PiBinning:
    """Recursive halving of [0, 14]; a bin splits only while it holds at
    least ``min_fraction`` of all values and is wider than ``min_width``."""
    values = sorted(float(v) for v in values)
    if not values:
        raise UsageError("cannot bin an empty value list")
    total = len(values)

    def count_in(lo, hi):
        # [lo, hi) except the final bin, which is closed at 14
        return sum(1 for v in values if lo <= v < hi or (hi == 14.0 and v == 14.0))

    edges = [0.0, 14.0]

    def split(lo, hi):
        if count_in(lo, hi) < min_fraction * total or (hi - lo) <= min_width:
            return
        mid = 0.5 * (lo + hi)
        edges.append(mid)
        split(lo, mid)
        split(mid, hi)

    split(0.0, 14.0)
    return PiBinning(edges=tuple(sorted(edges)))


# -- positional motifs -------------------------------------------------------------

@dataclass(frozen=True)
class Motif:
    start: int  # 1-based within CDR-H3
    subsequence: str

    @property
    def label(self) -> str:
        return f"{self.start}_{self.subsequence}"

    def present_in(self, cdrh3: str) -> bool:
        end = self.start - 1 + len(self.subsequence)
        return cdrh3[self.start - 1 : end] == self.subsequence


def motif_counts(cdrh3_set, length: int, count_mode: str = "presence") -> dict:
    """Count (start, subsequence) occurrences of one motif length.

    ``presence`` counts a motif at most once per sequence; ``occurrences``
    counts every occurrence (a positional motif can only repeat across
    sequences, so the modes differ only in multi-counting per record).
    """
    counts: dict[Motif, int] = {}
    for seq in cdrh3_set:
        seen = set()
        for start in range(0, len(seq) - length + 1):
            motif = Motif(start + 1, seq[start : start + length])
            if count_mode == "presence":
                if motif in seen:
                    continue
                seen.add(motif)
            counts[motif] = counts.get(motif, 0) + 1
    return counts


def mine_motifs(cdrh3_set, count_mode: str = "presence") -> tuple:
    """The two most frequent positional motifs of each length 2..10;
    ties prefer the smaller start, then the lexicographically smaller
    subsequence."""
    if count_mode not in ("presence", "occurrences"):
        raise UsageError(f"unknown motif count mode {count_mode!r}")
    found = []
    for length in range(MOTIF_MIN_LEN, MOTIF_MAX_LEN + 1):
        counts = motif_counts(cdrh3_set, length, count_mode)
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0].start, kv[0].subsequence))
        found.extend(m for m, _ in ranked[:MOTIFS_PER_LENGTH])
    return tuple(found)


# -- record annotations --------------------------------------------------------------

@dataclass(frozen=True)
class RecordAnnotation:
    record_id: str
    dataset_id: str
    set_label: str
    germline: GermlineCall
    canonical: dict  # region name -> class id
    cdrh3: str
    pi: float | None


def annotate_record(
    record,
    numbered: dict,
    refdb: GermlineReference,
    rules,
    boundaries: BoundaryTable,
    pka: PkaTable,
    table: SubstitutionTable,
) -> RecordAnnotation:
    germline = assign_germline(numbered, refdb, table)
    canonical: dict[str, int] = {}
    cdrh3 = ""
    pi = None
    for chain_type in (HEAVY, LIGHT):
        chain = numbered.get(chain_type)
        if chain is None:
            continue
        regions = extract_regions(chain, boundaries)
        canonical.update(assign_canonical(regions, rules))
        if chain_type == HEAVY:
            cdrh3 = regions["CDRH3"].residues
    if cdrh3:
        pi = compute_pi(cdrh3, pka)
    return RecordAnnotation(
        record_id=record.id,
        dataset_id=record.dataset_id,
        set_label=record.set_label,
        germline=germline,
        canonical=canonical,
        cdrh3=cdrh3,
        pi=pi,
    )


# -- vocabulary and fingerprints --------------------------------------------------------

@dataclass(frozen=True)
class Feature:
    segment: str
    label: str

    @property
    def column(self) -> str:
        return f"{self.segment}:{self.label}"


@dataclass(frozen=True)
class FeatureVocabulary:
    features: tuple  # Feature, ordered by segment then label
    pi_binning: PiBinning
    motifs: tuple  # Motif objects matching the motif segment labels

    def __post_init__(self):
        object.__setattr__(
            self, "_index", {(f.segment, f.label): i for i, f in enumerate(self.features)}
        )

    def __len__(self):
        return len(self.features)

    def index_of(self, segment: str, label: str) -> int:
        try:
            return self._index[(segment, label)]
        except KeyError:
            raise UsageError(f"feature {segment}:{label} not in vocabulary") from None

    def segment_indices(self, segment: str) -> np.ndarray:
        return np.array(
            [i for i, f in enumerate(self.features) if f.segment == segment], dtype=np.int64
        )

    @property
    def columns(self):
        return tuple(f.column for f in self.features)


def _numeric_label_key(label: str):
    try:
        return (0, float(label), label)
    except ValueError:
        return (1, 0.0, label)


def build_vocabulary(
    annotations,
    pi_binning: PiBinning | None = None,
    count_mode: str = "presence",
    pi_bin_scope: str = "pooled",
) -> FeatureVocabulary:
    """Union of observed feature values over both sets, in stable order.

    The pI binning is derived from the annotated CDR-H3 pI values
    (pooled over both sets by default, targeting-only behind the flag)
    unless an explicit binning is provided. Motifs are mined per set and
    the vocabulary takes the union.
    """
    annotations = list(annotations)
    if pi_binning is None:
        if pi_bin_scope == "pooled":
            pool = [a.pi for a in annotations if a.pi is not None]
        elif pi_bin_scope == "targeting":
            pool = [a.pi for a in annotations if a.pi is not None and a.set_label == "targeting"]
        else:
            raise UsageError(f"unknown pi bin scope {pi_bin_scope!r}")
        if not pool:
            pool = [7.0]
        pi_binning = bin_pi(pool)

    values: dict[str, set] = {segment: set() for segment in SEGMENTS}
    for ann in annotations:
        for segment in GERMLINE_SEGMENTS:
            name = ann.germline.get(segment.removeprefix("germ_"))
            if name:
                values[segment].add(name)
        for region, class_id in ann.canonical.items():
            values[_CANON_BY_REGION[region]].add(str(class_id))
        if ann.pi is not None:
            values["pi"].add(pi_binning.label(pi_binning.bin_index(ann.pi)))

    motif_union: set[Motif] = set()
    for label in ("targeting", "reference"):
        cdrh3s = [a.cdrh3 for a in annotations if a.set_label == label and a.cdrh3]
        if cdrh3s:
            motif_union.update(mine_motifs(cdrh3s, count_mode))
    motifs = tuple(sorted(motif_union, key=lambda m: (m.start, m.subsequence)))

    features = []
    for segment in SEGMENTS:
        if segment == "pi":
            labels = [lab for lab in pi_binning.labels if lab in values["pi"]]
        elif segment == "motif":
            labels = [m.label for m in motifs]
        elif segment in CANONICAL_SEGMENTS:
            labels = sorted(values[segment], key=_numeric_label_key)
        else:
            labels = sorted(values[segment])
        features.extend(Feature(segment, lab) for lab in labels)
    return FeatureVocabulary(features=tuple(features), pi_binning=pi_binning, motifs=motifs)


def build_fingerprint(annotation: RecordAnnotation, vocab: FeatureVocabulary) -> np.ndarray:
    """Binary fingerprint aligned to the vocabulary."""
    bits = np.zeros(len(vocab), dtype=np.uint8)
    for segment in GERMLINE_SEGMENTS:
        name = annotation.germline.get(segment.removeprefix("germ_"))
        if name:
            bits[vocab.index_of(segment, name)] = 1
    for region, class_id in annotation.canonical.items():
        bits[vocab.index_of(_CANON_BY_REGION[region], str(class_id))] = 1
    if annotation.pi is not None:
        label = vocab.pi_binning.label(vocab.pi_binning.bin_index(annotation.pi))
        bits[vocab.index_of("pi", label)] = 1
    if annotation.cdrh3:
        for motif in vocab.motifs:
            if motif.present_in(annotation.cdrh3):
                bits[vocab.index_of("motif", motif.label)] = 1
    return bits


def fingerprint_matrix(annotations, vocab: FeatureVocabulary):
    """(n, width) uint8 matrix plus the record ids, in input order."""
    annotations = list(annotations)
    mat = np.zeros((len(annotations), len(vocab)), dtype=np.uint8)
    for i, ann in enumerate(annotations):
        mat[i] = build_fingerprint(ann, vocab)
    return mat, [a.record_id for a in annotations]


def write_fingerprints(path, annotations, vocab: FeatureVocabulary) -> None:
    mat, ids = fingerprint_matrix(annotations, vocab)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + list(vocab.columns))
        for rec_id, row in zip(ids, mat):
            writer.writerow([rec_id] + row.astype(int).tolist())
