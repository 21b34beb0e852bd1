"""Sequence records, set containers, and CSV/FASTA ingestion.

Input schema (CSV, UTF-8, header required):
    id,dataset_id,set_label,heavy,light

FASTA convention: header ``>{id}|{dataset_id}|{set_label}|{H|L}``;
H and L records sharing an id are paired into one antibody.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

from .align import encode
from .errors import DataError

TARGETING = "targeting"
REFERENCE = "reference"
_SET_LABELS = {TARGETING, REFERENCE}


@dataclass(frozen=True)
class SequenceRecord:
    id: str
    dataset_id: str
    set_label: str
    heavy: str | None = None
    light: str | None = None
    species_hint: str | None = None

    def __post_init__(self):
        if self.set_label not in _SET_LABELS:
            raise DataError(f"record {self.id}: unknown set label {self.set_label!r}")
        if not self.heavy and not self.light:
            raise DataError(f"record {self.id}: at least one chain required")

    def chain(self, chain_type: str) -> str | None:
        return self.heavy if chain_type == "heavy" else self.light

    @property
    def total_length(self) -> int:
        return len(self.heavy or "") + len(self.light or "")


@dataclass
class SequenceSet:
    records: list[SequenceRecord] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for rec in self.records:
            if rec.id in seen:
                raise DataError(f"duplicate record id {rec.id!r}")
            seen.add(rec.id)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def datasets(self) -> dict[str, list[int]]:
        """dataset_id -> record indices, in first-seen order."""
        out: dict[str, list[int]] = {}
        for i, rec in enumerate(self.records):
            out.setdefault(rec.dataset_id, []).append(i)
        return out

    def dataset_sizes(self) -> dict[str, int]:
        return {k: len(v) for k, v in self.datasets.items()}

    def subset(self, indices) -> "SequenceSet":
        return SequenceSet([self.records[i] for i in indices])


def _validate_chain(rec_id: str, chain: str, allow_x: bool) -> None:
    try:
        encode(chain, allow_x=allow_x)
    except DataError as exc:
        raise DataError(f"record {rec_id!r}: {exc}") from exc


def parse_sequences(data, fmt: str = "csv", allow_x: bool = False) -> SequenceSet:
    """Parse a CSV or FASTA byte/text stream into a SequenceSet.

    Ordering of the input is preserved. Malformed rows raise DataError
    with the offending line number; duplicate ids and illegal residues
    are rejected.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    if fmt == "csv":
        return _parse_csv(data, allow_x)
    if fmt == "fasta":
        return _parse_fasta(data, allow_x)
    raise DataError(f"unknown input format {fmt!r}")


def _parse_csv(text: str, allow_x: bool) -> SequenceSet:
    reader = csv.reader(io.StringIO(text))
    rows = list(reader)
    if not rows or (len(rows) == 1 and not any(rows[0])):
        return SequenceSet([])
    header = [h.strip() for h in rows[0]]
    expected = ["id", "dataset_id", "set_label", "heavy", "light"]
    if header != expected:
        raise DataError(f"line 1: expected header {','.join(expected)}, got {','.join(header)}")
    records = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not any(cell.strip() for cell in row):
            continue
        if len(row) != 5:
            raise DataError(f"line {lineno}: expected 5 fields, got {len(row)}")
        rec_id, dataset_id, set_label, heavy, light = (cell.strip() for cell in row)
        heavy = heavy or None
        light = light or None
        try:
            rec = SequenceRecord(rec_id, dataset_id, set_label.lower(), heavy, light)
        except DataError as exc:
            raise DataError(f"line {lineno}: {exc}") from exc
        for chain in (heavy, light):
            if chain:
                _validate_chain(rec_id, chain, allow_x)
        records.append(rec)
    return SequenceSet(records)


def _parse_fasta(text: str, allow_x: bool) -> SequenceSet:
    entries: dict[str, dict] = {}
    order: list[str] = []
    head = None
    chunks: list[str] = []
    lineno_of: dict[str, int] = {}

    def flush():
        if head is None:
            return
        parts = head.split("|")
        if len(parts) != 4 or parts[3] not in ("H", "L"):
            raise DataError(
                f"line {lineno_of[head]}: FASTA header must be id|dataset_id|set_label|H-or-L"
            )
        rec_id, dataset_id, set_label, chain_code = parts
        seq = "".join(chunks)
        key = rec_id
        entry = entries.setdefault(
            key, {"dataset_id": dataset_id, "set_label": set_label.lower(), "H": None, "L": None}
        )
        if entry[chain_code] is not None:
            raise DataError(f"duplicate {chain_code} chain for record id {rec_id!r}")
        entry[chain_code] = seq
        if key not in order:
            order.append(key)

    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith(">"):
            flush()
            head = line[1:]
            lineno_of[head] = lineno
            chunks = []
        else:
            if head is None:
                raise DataError(f"line {lineno}: sequence data before any FASTA header")
            chunks.append(line)
    flush()

    records = []
    for rec_id in order:
        entry = entries[rec_id]
        rec = SequenceRecord(
            rec_id, entry["dataset_id"], entry["set_label"], entry["H"], entry["L"]
        )
        for chain in (entry["H"], entry["L"]):
            if chain:
                _validate_chain(rec_id, chain, allow_x)
        records.append(rec)
    return SequenceSet(records)


def write_csv(seqset: SequenceSet, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "dataset_id", "set_label", "heavy", "light"])
        for rec in seqset:
            writer.writerow([rec.id, rec.dataset_id, rec.set_label, rec.heavy or "", rec.light or ""])


def load_csv(path, allow_x: bool = False) -> SequenceSet:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_sequences(fh.read(), "csv", allow_x)
