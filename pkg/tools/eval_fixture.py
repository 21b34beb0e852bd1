#!/usr/bin/env python3
"""Development harness: run the pipeline over the bundled fixture and
print every quantity the acceptance suite asserts, for tuning."""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from abprofile.config import RunConfig
from abprofile.pipeline import (
    excluded_feature_keys,
    iteration_fingerprints,
    make_state,
    run_stage,
    stage_classify,
)
from abprofile.bench import FeatureMask, cross_validated_auc, family_mask
from abprofile.designtree import fit_tree, recommend

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "mmp"


def main(outdir="/tmp/abprofile-eval", k=30, run_cluster=True):
    cfg = RunConfig(
        targeting=str(FIXTURES / "targeting.csv"),
        reference=str(FIXTURES / "reference.csv"),
        outdir=outdir,
        k=k,
        seed=7,
        targeting_total=160,
        cluster=run_cluster,
        models=("svm",),
    )
    state = make_state(cfg, resume=True)
    for stage in ("prepare", "number", "annotate", "similarity", "salient"):
        t0 = time.time()
        run_stage(state, stage)
        print(f"[{stage}] {time.time() - t0:.1f}s", flush=True)

    meta = json.loads((Path(outdir) / "prepared" / "meta.json").read_text())
    print("prepare meta:", meta)

    labels = np.array(
        [1 if a.set_label == "targeting" else 0 for a in state.annotations]
        if state.annotations
        else [], dtype=np.uint8,
    )
    vocab = state.vocab
    fps = state.fingerprints
    print("vocab width:", len(vocab))
    seg_counts = {}
    for f in vocab.features:
        seg_counts[f.segment] = seg_counts.get(f.segment, 0) + 1
    print("segment widths:", seg_counts)

    from abprofile.salient import feature_frequencies

    freq_t, freq_r = feature_frequencies(fps, labels)
    iv23 = vocab.index_of("germ_hv", "IGHV3-23")
    ih26 = vocab.index_of("canon_h2", "6")
    print(f"IGHV3-23 freq: {freq_t[iv23]:.4f} / {freq_r[iv23]:.4f}")
    print(f"H2-6 freq:     {freq_t[ih26]:.4f} / {freq_r[ih26]:.4f}")

    from abprofile.salient import detect_biasing

    biasing = detect_biasing(freq_t, freq_r)
    print("biasing set:", [vocab.features[i].column for i in np.flatnonzero(biasing)])

    # association within targeting
    from abprofile.salient import feature_association

    assoc = feature_association(fps[labels == 1], vocab.columns, "targeting")
    print(f"J(V3-23, H2-6) = {assoc.values[iv23, ih26]:.4f}")
    excluded = excluded_feature_keys(state)
    print("excluded (biasing+associated):", excluded)

    # hypothesis tests
    tests = json.loads((Path(outdir) / "tests.json").read_text())
    for t in tests:
        ps = t["p_values"]
        print(f"test {t['test']}: max p = {max(ps):.3e} significant={t['significant']}")

    # design tree on pooled iterations
    t0 = time.time()
    parts, yparts = [], []
    for X, y in iteration_fingerprints(state):
        parts.append(X)
        yparts.append(y)
    Xp = np.vstack(parts)
    yp = np.concatenate(yparts)
    root = fit_tree(Xp, yp)
    print(f"[tree] {time.time() - t0:.1f}s pooled n={len(Xp)}")
    print("root split:", vocab.features[root.feature].column if root.feature is not None else None)
    v23_node = root.left if root.feature == iv23 else None
    if v23_node is not None:
        print(f"V3-23 node: se={v23_node.se:.4f} er={v23_node.er:.4f}")
    recs = recommend(root)
    for r in recs:
        toks = " ".join(r.tokens(vocab))
        print(f"rec se={r.se:.4f} er={r.er:.4f} depth={r.depth} path={toks}")

    # AUC benchmarks (svm only)
    t0 = time.time()
    masks = {
        "all": family_mask("all"),
        "germline": family_mask("germline"),
        "canonical": family_mask("canonical"),
        "pi": family_mask("pi"),
        "motif": family_mask("motif"),
        "no_biasing": FeatureMask(name="no_biasing", segments=None, exclude=tuple(excluded)),
    }
    for name, mask in masks.items():
        cell = cross_validated_auc(
            iteration_fingerprints(state), "svm", mask, vocab, seed=cfg.seed, folds=10
        )
        print(f"AUC svm/{name}: {cell.mean_auc:.4f} (std {cell.std_auc:.4f})", flush=True)
    print(f"[bench] {time.time() - t0:.1f}s")


if __name__ == "__main__":
    import argparse

    ap = argparse.ArgumentParser()
    ap.add_argument("--outdir", default="/tmp/abprofile-eval")
    ap.add_argument("--k", type=int, default=30)
    ap.add_argument("--no-cluster", action="store_true")
    args = ap.parse_args()
    main(args.outdir, args.k, not args.no_cluster)
