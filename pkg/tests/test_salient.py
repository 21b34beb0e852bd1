import logging
import math

import numpy as np
import pytest

from abprofile.errors import UsageError
from abprofile.features import Feature, FeatureVocabulary, PiBinning
from abprofile.salient import (
    associated_with_biasing,
    build_salient_report,
    compare_salient,
    detect_biasing,
    feature_association,
    feature_frequencies,
    fet_screen,
    rank_importances,
    rf_importance,
    write_association_csv,
    write_salient_csv,
)


def vocab_of(*features):
    return FeatureVocabulary(
        features=tuple(Feature(s, l) for s, l in features),
        pi_binning=PiBinning(edges=(0.0, 14.0)),
        motifs=(),
    )


# -- FET screen ----------------------------------------------------------------

def test_fet_corner_case_minimal_p():
    X = np.zeros((10, 1), dtype=np.uint8)
    X[:5, 0] = 1
    y = np.array([1] * 5 + [0] * 5, dtype=np.uint8)
    avg = fet_screen([(X, y)], width=1)
    assert avg[0] == pytest.approx(2 / math.comb(10, 5), rel=1e-9)


def test_fet_equal_frequencies_near_one():
    rng = np.random.default_rng(0)
    ps = []
    for _ in range(10):
        X = rng.integers(0, 2, size=(60, 1), dtype=np.uint8).astype(np.uint8)
        y = np.array([1] * 30 + [0] * 30, dtype=np.uint8)
        ps.append(fet_screen([(X, y)], width=1)[0])
    assert np.mean(ps) > 0.4


def test_fet_averages_over_iterations():
    X1 = np.array([[1]] * 4 + [[0]] * 4, dtype=np.uint8)
    y = np.array([1, 1, 1, 1, 0, 0, 0, 0], dtype=np.uint8)
    X2 = np.array([[1], [1], [0], [0], [1], [1], [0], [0]], dtype=np.uint8)
    p1 = fet_screen([(X1, y)], 1)[0]
    p2 = fet_screen([(X2, y)], 1)[0]
    both = fet_screen([(X1, y), (X2, y)], 1)[0]
    assert both == pytest.approx((p1 + p2) / 2)


# -- importance ----------------------------------------------------------------

def test_rank_importances_midranks():
    ranks = rank_importances(np.array([0.5, 0.2, 0.2, 0.1]))
    assert ranks.tolist() == [1.0, 2.5, 2.5, 4.0]


def test_rf_importance_finds_signal_and_skips_single_class(caplog):
    rng = np.random.default_rng(1)
    X = rng.integers(0, 2, size=(80, 6)).astype(np.uint8)
    y = X[:, 4].copy()
    degenerate = (np.ones((4, 6), dtype=np.uint8), np.ones(4, dtype=np.uint8))
    with caplog.at_level(logging.WARNING):
        imp, rank = rf_importance([(X, y), degenerate], width=6, seed=3, n_trees=20)
    assert "single class" in caplog.text
    assert np.argmax(imp) == 4
    assert rank[4] == 1.0
    assert imp.sum() == pytest.approx(1.0)


def test_rf_importance_no_usable_iterations():
    with pytest.raises(UsageError):
        rf_importance([], width=3, seed=0)


# -- frequencies / biasing ---------------------------------------------------------

def test_frequencies():
    X = np.array([[1, 1], [1, 0], [0, 0], [0, 0]], dtype=np.uint8)
    y = [1, 1, 0, 0]
    ft, fr = feature_frequencies(X, y)
    assert ft.tolist() == [1.0, 0.5]
    assert fr.tolist() == [0.0, 0.0]


def test_biasing_strict_threshold():
    ft = np.array([0.925, 0.80, 0.60])
    fr = np.array([0.0526, 0.30, 0.60])
    mask = detect_biasing(ft, fr)
    assert mask.tolist() == [True, False, False]
    # delta exactly 0.50 is not biasing
    assert not detect_biasing(np.array([0.75]), np.array([0.25]))[0]


def test_biasing_monotone_in_threshold():
    rng = np.random.default_rng(2)
    ft = rng.uniform(size=30)
    fr = rng.uniform(size=30)
    counts = [detect_biasing(ft, fr, thr).sum() for thr in (0.2, 0.4, 0.6, 0.8)]
    assert counts == sorted(counts, reverse=True)


# -- association ------------------------------------------------------------------

def test_association_matrix_properties():
    X = np.array(
        [[1, 1, 0, 0], [1, 1, 0, 0], [0, 0, 1, 0], [1, 1, 1, 0]], dtype=np.uint8
    )
    assoc = feature_association(X, ["a:x", "b:y", "c:z", "d:w"], "targeting")
    v = assoc.values
    assert np.allclose(v, v.T)
    assert v[0, 1] == 1.0  # duplicated columns
    assert v[0, 3] == 0.0  # never co-occurring (empty second column)
    assert v[0, 0] == 1.0 and v[2, 2] == 1.0
    assert assoc.empty_pairs[3, 3]


def test_associated_with_biasing():
    vocab = vocab_of(("germ_hv", "V1"), ("canon_h2", "6"), ("canon_h1", "1"))
    report = build_salient_report(
        vocab,
        avg_p=np.array([1e-9, 1e-6, 0.2]),
        avg_importance=np.array([0.5, 0.3, 0.2]),
        avg_rank=np.array([1.0, 2.0, 3.0]),
        freq_t=np.array([0.9, 0.9, 0.9]),
        freq_r=np.array([0.05, 0.8, 0.6]),
    )
    assert report.biasing_set() == {("germ_hv", "V1")}
    values = np.array([[1.0, 0.3, 0.9], [0.3, 1.0, 0.2], [0.9, 0.2, 1.0]])
    assoc = feature_association(np.eye(3, dtype=np.uint8), vocab.columns, "targeting")
    assoc = assoc.__class__(
        set_label="targeting", columns=vocab.columns, values=values, empty_pairs=values == -1
    )
    assert associated_with_biasing(report, assoc) == {("canon_h1", "1")}


# -- report / comparison -------------------------------------------------------------

def small_report(sig_mask, imp_values):
    vocab = vocab_of(*((f"s{i}", f"f{i}") for i in range(len(sig_mask))))
    return build_salient_report(
        vocab,
        avg_p=np.where(np.array(sig_mask), 1e-6, 0.9),
        avg_importance=np.array(imp_values, dtype=float),
        avg_rank=rank_importances(np.array(imp_values, dtype=float)),
        freq_t=np.zeros(len(sig_mask)),
        freq_r=np.zeros(len(sig_mask)),
    )


def test_report_flags():
    report = small_report([True, False], [0.8, 0.2])
    assert report.fet_set() == {("s0", "f0")}
    assert report.importance_set() == {("s0", "f0")}  # 0.8 > mean 0.5 > 0.2


def test_compare_identical_reports():
    r = small_report([True, True], [0.7, 0.3])
    comparisons = compare_salient(r, r)
    for comp in comparisons:
        assert comp.a_only == () and comp.b_only == ()
        assert len(comp.common) >= 1


def test_compare_disjoint_vocabularies():
    a = small_report([True], [1.0])
    vocab_b = vocab_of(("other", "x"), ("other", "y"))
    b = build_salient_report(
        vocab_b,
        avg_p=np.array([1e-6, 0.9]),
        avg_importance=np.array([0.9, 0.1]),
        avg_rank=np.array([1.0, 2.0]),
        freq_t=np.zeros(2),
        freq_r=np.zeros(2),
    )
    comparisons = compare_salient(a, b)
    assert all(comp.common == () for comp in comparisons)


def test_csv_writers(tmp_path):
    report = small_report([True, False], [0.8, 0.2])
    write_salient_csv(tmp_path / "salient.csv", report)
    header = (tmp_path / "salient.csv").read_text().splitlines()[0]
    assert header == (
        "segment,label,avg_p,fet_significant,avg_importance,avg_rank,"
        "rf_important,freq_targeting,freq_reference,biasing"
    )
    assoc = feature_association(
        np.array([[1, 0], [1, 1]], dtype=np.uint8), ["a:x", "b:y"], "targeting"
    )
    write_association_csv(tmp_path / "assoc.csv", assoc)
    lines = (tmp_path / "assoc.csv").read_text().splitlines()
    assert lines[0] == ",a:x,b:y"
    assert len(lines) == 3
