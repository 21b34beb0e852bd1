"""Run configuration: a key=value config file with CLI-flag overrides.

Flags win over the file; the resolved configuration is hashed into the
run manifest so a bundle records exactly what produced it.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError

DEFAULT_SPECIES = ("human", "mouse")
DEFAULT_MODELS = ("svm", "random_forest", "adaboost")


@dataclass
class RunConfig:
    targeting: str = ""
    reference: str = ""
    outdir: str = "abprofile-out"
    input_format: str = "csv"  # csv | fasta
    k: int = 100
    seed: int = 0
    targeting_total: int | None = None  # sampling overrides
    reference_total: int | None = None
    allowed_species: tuple = DEFAULT_SPECIES
    species_filter: bool = True
    cluster: bool = True
    identity_threshold: float = 0.95
    gap_score: float = -4.0
    fet_sided: str = "two_sided"
    biasing_threshold: float = 0.50
    association_threshold: float = 0.80
    motif_count: str = "presence"  # presence | occurrences
    pi_bin_scope: str = "pooled"  # pooled | targeting
    pka_table: str | None = None  # None = bundled data files
    boundary_table: str | None = None
    canonical_rules: str | None = None
    germline_db: str | None = None
    profiles: str | None = None
    allow_x: bool = False
    png: bool = False
    models: tuple = DEFAULT_MODELS
    folds: int = 10
    trees: int = 100
    stop: str = "guard"  # guard | global
    min_se: float = 0.05
    tree_scope: str = "pooled"  # pooled | single
    threads: int = 1

    def validate(self) -> None:
        if not self.targeting or not self.reference:
            raise ConfigError("targeting and reference input paths are required")
        for label, path in (("targeting", self.targeting), ("reference", self.reference)):
            if not Path(path).exists():
                raise ConfigError(f"{label} input not found: {path}")
        for label in ("pka_table", "boundary_table", "canonical_rules", "germline_db", "profiles"):
            value = getattr(self, label)
            if value is not None and not Path(value).exists():
                raise ConfigError(f"{label} path not found: {value}")
        if self.k < 1:
            raise ConfigError("k must be at least 1")
        for label in ("identity_threshold", "biasing_threshold", "association_threshold", "min_se"):
            value = getattr(self, label)
            if not 0.0 < value < 1.0 and not (label == "identity_threshold" and value == 1.0):
                raise ConfigError(f"{label} must lie in (0, 1)")
        if self.input_format not in ("csv", "fasta"):
            raise ConfigError(f"unknown input format {self.input_format!r}")
        if self.fet_sided not in ("two_sided", "greater"):
            raise ConfigError(f"unknown FET sidedness {self.fet_sided!r}")
        if self.motif_count not in ("presence", "occurrences"):
            raise ConfigError(f"unknown motif count mode {self.motif_count!r}")
        if self.pi_bin_scope not in ("pooled", "targeting"):
            raise ConfigError(f"unknown pI bin scope {self.pi_bin_scope!r}")
        if self.stop not in ("guard", "global"):
            raise ConfigError(f"unknown stop rule {self.stop!r}")
        if self.tree_scope not in ("pooled", "single"):
            raise ConfigError(f"unknown tree scope {self.tree_scope!r}")
        bad = [m for m in self.models if m not in DEFAULT_MODELS]
        if bad:
            raise ConfigError(f"unknown models: {bad}")
        if self.folds < 2:
            raise ConfigError("folds must be at least 2")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")

    def as_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out

    def config_hash(self) -> str:
        payload = json.dumps(self.as_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()[:16]


_BOOL_FIELDS = {"cluster", "png", "allow_x", "species_filter"}
_INT_FIELDS = {"k", "seed", "folds", "trees", "threads"}
_OPT_INT_FIELDS = {"targeting_total", "reference_total"}
_FLOAT_FIELDS = {
    "identity_threshold",
    "gap_score",
    "biasing_threshold",
    "association_threshold",
    "min_se",
}
_TUPLE_FIELDS = {"allowed_species", "models"}
_OPT_STR_FIELDS = {"pka_table", "boundary_table", "canonical_rules", "germline_db", "profiles"}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key in _BOOL_FIELDS:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if key in _INT_FIELDS:
        return int(raw)
    if key in _OPT_INT_FIELDS:
        return None if raw.lower() in ("", "none") else int(raw)
    if key in _FLOAT_FIELDS:
        return float(raw)
    if key in _TUPLE_FIELDS:
        return tuple(part.strip() for part in raw.split(",") if part.strip())
    if key in _OPT_STR_FIELDS:
        return None if raw.lower() in ("", "none") else raw
    return raw


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from an optional key=value file plus overrides."""
    cfg = RunConfig()
    known = {f.name for f in fields(RunConfig)}
    if path is not None:
        text = Path(path).read_text()
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"config line {lineno}: expected key=value")
            key, raw = line.split("=", 1)
            key = key.strip()
            if key not in known:
                raise ConfigError(f"config line {lineno}: unknown key {key!r}")
            setattr(cfg, key, _parse_value(key, raw))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in known:
            raise ConfigError(f"unknown config override {key!r}")
        setattr(cfg, key, value)
    return cfg
