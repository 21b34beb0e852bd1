"""Pipeline orchestration: stage execution, artifact persistence, the
run manifest, and resume/staleness handling.

Stages run in a fixed order (prepare, number, annotate, similarity,
salient, classify, recommend). Every stage reads its inputs from the
previous stage's persisted artifacts when they are not already in
memory, so any stage can be rerun standalone and must produce exactly
what a full run would have produced.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .align import load_substitution_table
from .bench import (
    FeatureMask,
    cross_validated_auc,
    family_mask,
    write_benchmark_csv,
    write_roc_json,
)
from .config import RunConfig
from .designtree import export_tree, fit_tree, recommend, write_recommendations_csv
from .errors import AbprofileError, ConfigError, DataError, NumberingFailure, StageError
from .features import (
    Feature,
    FeatureVocabulary,
    Motif,
    PiBinning,
    annotate_record,
    assign_germline,
    build_vocabulary,
    fingerprint_matrix,
    load_canonical_rules,
    load_germline_db,
    load_pka_table,
    write_fingerprints,
)
from .numbering import (
    HEAVY,
    LIGHT,
    export_numbered,
    import_numbered,
    load_boundaries,
    load_profiles,
    number_chothia,
)
from .prep import cluster_representatives, filter_by_species, plan_sampling, sample_iteration
from .records import SequenceSet, load_csv, parse_sequences, write_csv
from .salient import (
    associated_with_biasing,
    build_salient_report,
    feature_association,
    feature_frequencies,
    fet_screen,
    rf_importance,
    write_association_csv,
    write_salient_csv,
)
from .similarity import (
    SimilarityMatrix,
    TestSummary,
    chain_feature_correlation_test,
    emit_heatmap,
    fingerprint_similarity_values,
    min_max_rescale,
    pairwise_raw_matrix,
    within_set_test,
    write_test_report,
)

log = logging.getLogger(__name__)

STAGES = ("prepare", "number", "annotate", "similarity", "salient", "classify", "recommend")
UPSTREAM = {
    "prepare": None,
    "number": "prepare",
    "annotate": "number",
    "similarity": "annotate",
    "salient": "annotate",
    "classify": "salient",
    "recommend": "annotate",
}


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class Manifest:
    path: Path
    data: dict

    @classmethod
    def load_or_new(cls, outdir: Path, cfg: RunConfig) -> "Manifest":
        path = outdir / "manifest.json"
        if path.exists():
            data = json.loads(path.read_text())
        else:
            data = {}
        data.setdefault("stages", {})
        data["version"] = __version__
        data["config_hash"] = cfg.config_hash()
        data["seed"] = cfg.seed
        data["k"] = cfg.k
        return cls(path=path, data=data)

    def record_stage(self, stage: str, outdir: Path, files) -> None:
        entry = {"files": {str(rel): _sha256(outdir / rel) for rel in files}}
        self.data["stages"][stage] = entry
        self.write()

    def write(self) -> None:
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")

    def stage_fresh(self, stage: str, outdir: Path) -> bool:
        entry = self.data["stages"].get(stage)
        if not entry:
            return False
        for rel, digest in entry["files"].items():
            path = outdir / rel
            if not path.exists() or _sha256(path) != digest:
                return False
        return True


@dataclass
class PipelineState:
    cfg: RunConfig
    outdir: Path
    manifest: Manifest
    resume: bool = False
    force: bool = False
    # loaded resources
    table: object = None
    boundaries: object = None
    profiles: object = None
    germdb: object = None
    rules: object = None
    pka: object = None
    # stage products
    targeting: SequenceSet | None = None
    reference: SequenceSet | None = None
    numbered: dict | None = None  # record id -> {chain type: NumberedChain}
    annotations: list | None = None
    vocab: FeatureVocabulary | None = None
    fingerprints: np.ndarray | None = None
    salient_report: object = None
    association_targeting: object = None
    excluded_features: tuple | None = None
    _fingerprint_ids: list | None = None

    def load_resources(self) -> None:
        if self.table is not None:
            return
        cfg = self.cfg
        self.table = load_substitution_table(gap_score=cfg.gap_score)
        self.boundaries = load_boundaries(cfg.boundary_table)
        self.profiles = load_profiles(self.table, self.boundaries, cfg.profiles)
        self.germdb = load_germline_db(cfg.germline_db)
        self.rules = load_canonical_rules(cfg.canonical_rules)
        self.pka = load_pka_table(cfg.pka_table)


def make_state(cfg: RunConfig, resume: bool = False, force: bool = False) -> PipelineState:
    cfg.validate()
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest.load_or_new(outdir, cfg)
    return PipelineState(cfg=cfg, outdir=outdir, manifest=manifest, resume=resume, force=force)


def _map_indexed(fn, items, threads: int):
    """Apply fn over items, optionally with a thread pool; results keep
    input order so scheduling cannot change any output."""
    if threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# -- stage: prepare ------------------------------------------------------------------

def stage_prepare(state: PipelineState) -> None:
    cfg = state.cfg
    state.load_resources()
    raw_t = _load_input(cfg.targeting, cfg)
    raw_r = _load_input(cfg.reference, cfg)
    meta = {"input_targeting": len(raw_t), "input_reference": len(raw_r)}

    if cfg.species_filter:
        def call_species(seqset):
            calls = {}
            for rec in seqset:
                chains = {}
                if rec.heavy:
                    chains[HEAVY] = rec.heavy
                if rec.light:
                    chains[LIGHT] = rec.light
                calls[rec.id] = assign_germline(chains, state.germdb, state.table)
            return calls

        raw_t, removed_t = filter_by_species(raw_t, call_species(raw_t), cfg.allowed_species)
        raw_r, removed_r = filter_by_species(raw_r, call_species(raw_r), cfg.allowed_species)
        meta["species_removed_targeting"] = removed_t
        meta["species_removed_reference"] = removed_r

    if cfg.cluster:
        raw_t, clusters_t = cluster_representatives(raw_t, state.table, cfg.identity_threshold)
        raw_r, clusters_r = cluster_representatives(raw_r, state.table, cfg.identity_threshold)
        meta["clusters_targeting"] = len(clusters_t)
        meta["clusters_reference"] = len(clusters_r)

    if len(raw_t) == 0 or len(raw_r) == 0:
        raise DataError("no records survive preparation")
    meta["prepared_targeting"] = len(raw_t)
    meta["prepared_reference"] = len(raw_r)

    prepared = state.outdir / "prepared"
    prepared.mkdir(exist_ok=True)
    write_csv(raw_t, prepared / "targeting.csv")
    write_csv(raw_r, prepared / "reference.csv")
    (prepared / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    state.targeting, state.reference = raw_t, raw_r
    state.manifest.record_stage(
        "prepare",
        state.outdir,
        ["prepared/targeting.csv", "prepared/reference.csv", "prepared/meta.json"],
    )


def _load_input(path: str, cfg: RunConfig) -> SequenceSet:
    text = Path(path).read_text()
    fmt = cfg.input_format
    if path.endswith((".fasta", ".fa")):
        fmt = "fasta"
    return parse_sequences(text, fmt, allow_x=cfg.allow_x)


def _require_prepared(state: PipelineState) -> None:
    if state.targeting is not None:
        return
    prepared = state.outdir / "prepared"
    if not (prepared / "targeting.csv").exists():
        raise StageError("prepare artifacts missing; run the prepare stage first")
    state.targeting = load_csv(prepared / "targeting.csv", allow_x=state.cfg.allow_x)
    state.reference = load_csv(prepared / "reference.csv", allow_x=state.cfg.allow_x)


# -- stage: number --------------------------------------------------------------------

def stage_number(state: PipelineState) -> None:
    cfg = state.cfg
    state.load_resources()
    _require_prepared(state)
    failures: list[tuple] = []
    numbered: dict[str, dict] = {}

    def number_one(rec):
        chains = {}
        for chain_type in (HEAVY, LIGHT):
            seq = rec.chain(chain_type)
            if not seq:
                continue
            chains[chain_type] = number_chothia(seq, chain_type, state.profiles)
        return chains

    for seqset in (state.targeting, state.reference):
        results = _map_indexed(
            lambda rec: _try_number(number_one, rec), list(seqset), cfg.threads
        )
        for rec, outcome in zip(seqset, results):
            chains, error = outcome
            if error is not None:
                failures.append((rec.id, rec.set_label, error))
            else:
                numbered[rec.id] = chains

    numbered_dir = state.outdir / "numbered"
    numbered_dir.mkdir(exist_ok=True)
    export_numbered(
        {rid: numbered[rid] for rec in state.targeting if (rid := rec.id) in numbered},
        numbered_dir / "targeting.csv",
    )
    export_numbered(
        {rid: numbered[rid] for rec in state.reference if (rid := rec.id) in numbered},
        numbered_dir / "reference.csv",
    )
    with open(numbered_dir / "failures.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "set_label", "reason"])
        for row in failures:
            writer.writerow(row)
    if failures:
        log.warning("%d records failed numbering and are excluded", len(failures))
    state.numbered = numbered
    state.manifest.record_stage(
        "number",
        state.outdir,
        ["numbered/targeting.csv", "numbered/reference.csv", "numbered/failures.csv"],
    )


def _try_number(fn, rec):
    try:
        return fn(rec), None
    except NumberingFailure as exc:
        return None, str(exc)


def _require_numbered(state: PipelineState) -> None:
    if state.numbered is not None:
        return
    numbered_dir = state.outdir / "numbered"
    if not (numbered_dir / "targeting.csv").exists():
        raise StageError("number artifacts missing; run the number stage first")
    state.numbered = {}
    state.numbered.update(import_numbered(numbered_dir / "targeting.csv"))
    state.numbered.update(import_numbered(numbered_dir / "reference.csv"))


def _surviving(state: PipelineState, seqset: SequenceSet) -> list:
    return [rec for rec in seqset if rec.id in state.numbered]


# -- stage: annotate -------------------------------------------------------------------

def stage_annotate(state: PipelineState) -> None:
    cfg = state.cfg
    state.load_resources()
    _require_prepared(state)
    _require_numbered(state)

    records = _surviving(state, state.targeting) + _surviving(state, state.reference)
    annotations = _map_indexed(
        lambda rec: annotate_record(
            rec,
            state.numbered[rec.id],
            state.germdb,
            state.rules,
            state.boundaries,
            state.pka,
            state.table,
        ),
        records,
        cfg.threads,
    )
    vocab = build_vocabulary(
        annotations, count_mode=cfg.motif_count, pi_bin_scope=cfg.pi_bin_scope
    )
    fps, _ = fingerprint_matrix(annotations, vocab)

    write_fingerprints(state.outdir / "fingerprints.csv", annotations, vocab)
    _write_vocab(state.outdir / "vocab.json", vocab)
    _write_annotations(state.outdir / "annotations.csv", annotations)
    state.annotations = annotations
    state.vocab = vocab
    state.fingerprints = fps
    state.manifest.record_stage(
        "annotate", state.outdir, ["fingerprints.csv", "vocab.json", "annotations.csv"]
    )


def _write_vocab(path, vocab: FeatureVocabulary) -> None:
    payload = {
        "features": [[f.segment, f.label] for f in vocab.features],
        "pi_edges": list(vocab.pi_binning.edges),
        "motifs": [[m.start, m.subsequence] for m in vocab.motifs],
    }
    path.write_text(json.dumps(payload, indent=2) + "\n")


def _load_vocab(path) -> FeatureVocabulary:
    payload = json.loads(Path(path).read_text())
    return FeatureVocabulary(
        features=tuple(Feature(s, l) for s, l in payload["features"]),
        pi_binning=PiBinning(edges=tuple(payload["pi_edges"])),
        motifs=tuple(Motif(start, sub) for start, sub in payload["motifs"]),
    )


def _write_annotations(path, annotations) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "id",
                "dataset_id",
                "set_label",
                "species",
                "hv",
                "hj",
                "lv",
                "lj",
                "canon_h1",
                "canon_h2",
                "canon_h3",
                "canon_l1",
                "canon_l2",
                "canon_l3",
                "cdrh3",
                "pi",
            ]
        )
        for ann in annotations:
            canon = {region: cls for region, cls in ann.canonical.items()}
            writer.writerow(
                [
                    ann.record_id,
                    ann.dataset_id,
                    ann.set_label,
                    ann.germline.species or "",
                    ann.germline.hv or "",
                    ann.germline.hj or "",
                    ann.germline.lv or "",
                    ann.germline.lj or "",
                ]
                + [canon.get(r, "") for r in ("CDRH1", "CDRH2", "CDRH3", "CDRL1", "CDRL2", "CDRL3")]
                + [ann.cdrh3, f"{ann.pi:.4f}" if ann.pi is not None else ""]
            )


def _require_fingerprints(state: PipelineState) -> None:
    if state.fingerprints is not None:
        return
    fp_path = state.outdir / "fingerprints.csv"
    if not fp_path.exists():
        raise StageError("annotate artifacts missing; run the annotate stage first")
    state.vocab = _load_vocab(state.outdir / "vocab.json")
    ids = []
    rows = []
    with open(fp_path, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            ids.append(row[0])
            rows.append([int(x) for x in row[1:]])
    state.fingerprints = np.array(rows, dtype=np.uint8)
    state._fingerprint_ids = ids


# -- sampling helpers --------------------------------------------------------------------

def _survivor_sets(state: PipelineState) -> tuple:
    _require_prepared(state)
    _require_numbered(state)
    t = SequenceSet(_surviving(state, state.targeting))
    r = SequenceSet(_surviving(state, state.reference))
    if len(t) == 0 or len(r) == 0:
        raise DataError("no records survived numbering")
    return t, r


def _plan(state: PipelineState, t: SequenceSet, r: SequenceSet):
    cfg = state.cfg
    return plan_sampling(
        t,
        r,
        k=cfg.k,
        seed=cfg.seed,
        override_targeting_total=cfg.targeting_total,
        override_reference_total=cfg.reference_total,
    )


def _combined_rows(t: SequenceSet, iteration) -> tuple:
    n_t = len(t)
    rows = list(iteration.targeting_indices) + [n_t + j for j in iteration.reference_indices]
    labels = np.array(
        [1] * len(iteration.targeting_indices) + [0] * len(iteration.reference_indices),
        dtype=np.uint8,
    )
    return np.array(rows, dtype=np.int64), labels


def iteration_fingerprints(state: PipelineState):
    """Yield (X, y) per sampling iteration over the surviving records."""
    _require_fingerprints(state)
    t, r = _survivor_sets(state)
    plan = _plan(state, t, r)
    for i in range(plan.k):
        it = sample_iteration(plan, t, r, i)
        rows, labels = _combined_rows(t, it)
        yield state.fingerprints[rows], labels


# -- stage: similarity ------------------------------------------------------------------

def stage_similarity(state: PipelineState) -> None:
    cfg = state.cfg
    state.load_resources()
    _require_fingerprints(state)
    _require_numbered(state)
    t, r = _survivor_sets(state)
    records = list(t) + list(r)

    simdir = state.outdir / "similarity"
    simdir.mkdir(exist_ok=True)

    chain_lists = {}
    raw = {}
    for kind, chain_type in (("heavy", HEAVY), ("light", LIGHT)):
        chains = [state.numbered[rec.id].get(chain_type) for rec in records]
        if not any(ch is not None for ch in chains):
            log.warning("no %s chains present; skipping %s similarity", chain_type, kind)
            continue
        chain_lists[kind] = chains
        raw[kind] = pairwise_raw_matrix(chains, state.table)

    from .features import SEGMENTS

    seg_slices = [state.vocab.segment_indices(s) for s in SEGMENTS]
    fp_values = fingerprint_similarity_values(state.fingerprints, seg_slices)

    labels = tuple(rec.id for rec in records)
    set_labels = tuple(rec.set_label for rec in records)
    dataset_ids = tuple(rec.dataset_id for rec in records)

    files = []
    full_matrices = {}
    for kind in raw:
        full_matrices[kind] = SimilarityMatrix(
            kind=f"{kind}_seq",
            labels=labels,
            set_labels=set_labels,
            dataset_ids=dataset_ids,
            values=min_max_rescale(raw[kind]),
        )
    full_matrices["fingerprint"] = SimilarityMatrix(
        kind="fingerprint",
        labels=labels,
        set_labels=set_labels,
        dataset_ids=dataset_ids,
        values=fp_values,
    )
    for kind, matrix in full_matrices.items():
        csv_path = simdir / f"{kind}.csv"
        png_path = simdir / f"{kind}.png" if cfg.png else None
        emit_heatmap(matrix, csv_path, png_path)
        files.append(f"similarity/{kind}.csv")
        if png_path is not None:
            files.append(f"similarity/{kind}.png")

    # k-iteration hypothesis tests on sampled submatrices
    plan = _plan(state, t, r)
    per_kind: dict[str, list] = {kind: [] for kind in raw}
    fp_iter: list[SimilarityMatrix] = []
    for i in range(plan.k):
        it = sample_iteration(plan, t, r, i)
        rows, _ = _combined_rows(t, it)
        sub_labels = tuple(labels[j] for j in rows)
        sub_sets = tuple(set_labels[j] for j in rows)
        sub_datasets = tuple(dataset_ids[j] for j in rows)
        for kind in raw:
            sub = raw[kind][np.ix_(rows, rows)]
            per_kind[kind].append(
                SimilarityMatrix(
                    kind=f"{kind}_seq",
                    labels=sub_labels,
                    set_labels=sub_sets,
                    dataset_ids=sub_datasets,
                    values=min_max_rescale(sub),
                )
            )
        fp_iter.append(
            SimilarityMatrix(
                kind="fingerprint",
                labels=sub_labels,
                set_labels=sub_sets,
                dataset_ids=sub_datasets,
                values=fp_values[np.ix_(rows, rows)],
            )
        )

    summaries = []
    for kind, mats in list(per_kind.items()) + [("fingerprint", fp_iter)]:
        base = within_set_test(mats)
        summaries.append(
            TestSummary(
                name=f"within_set_{kind}",
                alternative=base.alternative,
                p_values=base.p_values,
            )
        )
    if "heavy" in per_kind and "light" in per_kind:
        summaries.append(
            chain_feature_correlation_test(per_kind["heavy"], per_kind["light"], fp_iter)
        )
    write_test_report(state.outdir / "tests.json", summaries)
    files.append("tests.json")
    state.manifest.record_stage("similarity", state.outdir, files)


# -- stage: salient ---------------------------------------------------------------------

def stage_salient(state: PipelineState) -> None:
    cfg = state.cfg
    _require_fingerprints(state)
    t, r = _survivor_sets(state)
    width = len(state.vocab)

    avg_p = fet_screen(iteration_fingerprints(state), width, sided=cfg.fet_sided)
    avg_imp, avg_rank = rf_importance(
        iteration_fingerprints(state), width, seed=cfg.seed, n_trees=cfg.trees
    )
    labels = np.array([1] * len(t) + [0] * len(r), dtype=np.uint8)
    freq_t, freq_r = feature_frequencies(state.fingerprints, labels)
    report = build_salient_report(state.vocab, avg_p, avg_imp, avg_rank, freq_t, freq_r)

    assoc_t = feature_association(
        state.fingerprints[labels == 1], state.vocab.columns, "targeting"
    )
    assoc_r = feature_association(
        state.fingerprints[labels == 0], state.vocab.columns, "reference"
    )
    write_salient_csv(state.outdir / "salient.csv", report)
    write_association_csv(state.outdir / "association_targeting.csv", assoc_t)
    write_association_csv(state.outdir / "association_reference.csv", assoc_r)
    state.salient_report = report
    state.association_targeting = assoc_t
    state.manifest.record_stage(
        "salient",
        state.outdir,
        ["salient.csv", "association_targeting.csv", "association_reference.csv"],
    )


def _require_salient(state: PipelineState) -> None:
    if state.salient_report is not None:
        return
    path = state.outdir / "salient.csv"
    if not path.exists():
        raise StageError("salient artifacts missing; run the salient stage first")
    _require_fingerprints(state)
    rows = list(csv.DictReader(path.open()))
    avg_p = np.array([float(r["avg_p"]) for r in rows])
    avg_imp = np.array([float(r["avg_importance"]) for r in rows])
    avg_rank = np.array([float(r["avg_rank"]) for r in rows])
    freq_t = np.array([float(r["freq_targeting"]) for r in rows])
    freq_r = np.array([float(r["freq_reference"]) for r in rows])
    state.salient_report = build_salient_report(
        state.vocab, avg_p, avg_imp, avg_rank, freq_t, freq_r
    )
    assoc_path = state.outdir / "association_targeting.csv"
    with open(assoc_path) as fh:
        reader = csv.reader(fh)
        cols = next(reader)[1:]
        values = np.array([[float(x) for x in row[1:]] for row in reader])
    from .salient import AssociationMatrix

    state.association_targeting = AssociationMatrix(
        set_label="targeting", columns=tuple(cols), values=values, empty_pairs=values < 0
    )


def excluded_feature_keys(state: PipelineState) -> tuple:
    """Biasing features plus features associated with them (targeting set)."""
    _require_salient(state)
    report = state.salient_report
    excluded = set(report.biasing_set())
    excluded |= associated_with_biasing(
        report, state.association_targeting, state.cfg.association_threshold
    )
    return tuple(sorted(excluded))


# -- stage: classify ----------------------------------------------------------------------

def stage_classify(state: PipelineState, only_mask: str | None = None) -> None:
    cfg = state.cfg
    _require_fingerprints(state)
    excluded = excluded_feature_keys(state)
    masks = {
        "all": family_mask("all"),
        "germline": family_mask("germline"),
        "canonical": family_mask("canonical"),
        "pi": family_mask("pi"),
        "motif": family_mask("motif"),
        "no_biasing": FeatureMask(name="no_biasing", segments=None, exclude=tuple(excluded)),
    }
    if only_mask is not None:
        if only_mask not in masks:
            raise ConfigError(f"unknown mask {only_mask!r}; expected one of {sorted(masks)}")
        masks = {only_mask: masks[only_mask]}
    cells = []
    for model in cfg.models:
        for mask in masks.values():
            cells.append(
                cross_validated_auc(
                    iteration_fingerprints(state),
                    model,
                    mask,
                    state.vocab,
                    seed=cfg.seed,
                    folds=cfg.folds,
                    n_trees=cfg.trees,
                )
            )
    write_benchmark_csv(state.outdir / "bench.csv", cells)
    write_roc_json(state.outdir / "roc.json", cells)
    state.manifest.record_stage("classify", state.outdir, ["bench.csv", "roc.json"])


# -- stage: recommend ----------------------------------------------------------------------

def stage_recommend(state: PipelineState) -> None:
    cfg = state.cfg
    _require_fingerprints(state)
    parts = []
    y_parts = []
    for X, y in iteration_fingerprints(state):
        parts.append(X)
        y_parts.append(y)
        if cfg.tree_scope == "single":
            break
    X_pool = np.vstack(parts)
    y_pool = np.concatenate(y_parts)
    root = fit_tree(
        X_pool, y_pool, min_leaf_fraction=cfg.min_se, stop=cfg.stop
    )
    recommendations = recommend(root, min_se=cfg.min_se)
    (state.outdir / "tree.dot").write_text(export_tree(root, state.vocab, "dot"))
    (state.outdir / "tree.json").write_text(export_tree(root, state.vocab, "json"))
    write_recommendations_csv(state.outdir / "recommendations.csv", recommendations, state.vocab)
    state.manifest.record_stage(
        "recommend", state.outdir, ["tree.dot", "tree.json", "recommendations.csv"]
    )


_STAGE_FUNCS = {
    "prepare": stage_prepare,
    "number": stage_number,
    "annotate": stage_annotate,
    "similarity": stage_similarity,
    "salient": stage_salient,
    "classify": stage_classify,
    "recommend": stage_recommend,
}


def run_stage(state: PipelineState, stage: str) -> None:
    """Run one stage with resume and staleness handling."""
    if stage not in _STAGE_FUNCS:
        raise ConfigError(f"unknown stage {stage!r}")
    manifest = state.manifest
    if manifest.data.get("config_hash") != state.cfg.config_hash():
        manifest.data["config_hash"] = state.cfg.config_hash()
    upstream = UPSTREAM[stage]
    if upstream is not None and not state.force:
        entry = manifest.data["stages"].get(upstream)
        if entry is not None and not manifest.stage_fresh(upstream, state.outdir):
            raise StageError(
                f"stage {stage!r}: upstream {upstream!r} artifacts do not match the "
                "manifest (stale); rerun it or pass --force"
            )
    if state.resume and manifest.stage_fresh(stage, state.outdir):
        log.info("stage %s outputs are fresh; skipping", stage)
        return
    try:
        _STAGE_FUNCS[stage](state)
    except AbprofileError:
        raise
    except Exception as exc:  # pragma: no cover - defensive
        raise StageError(f"stage {stage!r} failed: {exc}") from exc


def run_pipeline(cfg: RunConfig, resume: bool = False, force: bool = False) -> PipelineState:
    """Run every stage in order; artifacts from completed stages are kept
    even if a later stage fails."""
    state = make_state(cfg, resume=resume, force=force)
    for stage in STAGES:
        try:
            run_stage(state, stage)
        except AbprofileError as exc:
            raise StageError(f"pipeline aborted at stage {stage!r}: {exc}") from exc
    return state
