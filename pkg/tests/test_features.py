import numpy as np
import pytest

from abprofile.align import load_substitution_table
from abprofile.errors import ConfigError, UsageError
from abprofile.features import (
    GermlineCall,
    Motif,
    PiBinning,
    assign_canonical,
    assign_germline,
    bin_pi,
    build_fingerprint,
    build_vocabulary,
    compute_pi,
    load_canonical_rules,
    load_germline_db,
    load_pka_table,
    mine_motifs,
    motif_counts,
    net_charge,
    RecordAnnotation,
)
from abprofile.numbering import ChothiaPosition, NumberedChain, extract_regions, load_boundaries

TABLE = load_substitution_table()
PKA = load_pka_table()
RULES = load_canonical_rules()
BOUNDARIES = load_boundaries()
GERMDB = load_germline_db()


# -- pI ---------------------------------------------------------------------------

def test_pi_of_glycine_pair_is_midpoint():
    want = (PKA.positive["nterm"] + PKA.negative["cterm"]) / 2.0
    assert compute_pi("GG", PKA) == pytest.approx(want, abs=1e-3)


def test_pi_basic_vs_acidic():
    assert compute_pi("KK", PKA) > compute_pi("DD", PKA)


def test_pi_charge_near_zero_at_root():
    rng = np.random.default_rng(1)
    residues = list("ACDEFGHIKLMNPQRSTVWY")
    for _ in range(25):
        seq = "".join(rng.choice(residues, size=rng.integers(3, 21)))
        pi = compute_pi(seq, PKA)
        assert abs(net_charge(seq, pi, PKA)) < 1e-3


def test_pi_matches_grid_scan():
    rng = np.random.default_rng(2)
    residues = list("ACDEFGHIKLMNPQRSTVWY")
    grid = np.arange(0.0, 14.0005, 0.001)
    for _ in range(20):
        seq = "".join(rng.choice(residues, size=rng.integers(3, 21)))
        charges = np.array([net_charge(seq, ph, PKA) for ph in grid])
        oracle = grid[int(np.argmin(np.abs(charges)))]
        assert abs(compute_pi(seq, PKA) - oracle) <= 0.01


def test_pi_decreases_when_lysine_becomes_aspartate():
    base = "AKAKA"
    mutated = "ADAKA"
    assert compute_pi(mutated, PKA) < compute_pi(base, PKA)


def test_pi_empty_rejected():
    with pytest.raises(UsageError):
        compute_pi("", PKA)


# -- binning ----------------------------------------------------------------------

def simulate_binning(values, min_fraction=0.10, min_width=0.3):
    """Independent recursive simulator used as the oracle."""
    total = len(values)
    bins = []

    def walk(lo, hi):
        inside = [v for v in values if lo <= v < hi or (hi == 14.0 and v == 14.0)]
        if len(inside) >= min_fraction * total and (hi - lo) > min_width:
            mid = (lo + hi) / 2.0
            walk(lo, mid)
            walk(mid, hi)
        else:
            bins.append((lo, hi))

    walk(0.0, 14.0)
    return sorted(bins)


def test_single_value_splits_to_min_width():
    values = [5.0] * 100
    binning = bin_pi(values)
    idx = binning.bin_index(5.0)
    lo, hi = binning.bins[idx]
    assert hi - lo == pytest.approx(14 / 2**6)  # six splits on the path


def test_tiny_population_still_splits_top_bins():
    values = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 9.0, 13.0]
    got = bin_pi(values)
    assert sorted(got.bins) == simulate_binning(values)


def test_binning_matches_simulator_random():
    rng = np.random.default_rng(3)
    for _ in range(30):
        n = int(rng.integers(1, 200))
        values = rng.uniform(0, 14, size=n).tolist()
        got = bin_pi(values)
        assert sorted(got.bins) == simulate_binning(values)


def test_bins_partition_range_and_leaves_terminal():
    rng = np.random.default_rng(4)
    values = rng.normal(6, 2, size=150).clip(0, 14).tolist()
    binning = bin_pi(values)
    edges = binning.edges
    assert edges[0] == 0.0 and edges[-1] == 14.0
    assert list(edges) == sorted(set(edges))
    total = len(values)
    for lo, hi in binning.bins:
        inside = sum(1 for v in values if lo <= v < hi or (hi == 14.0 and v == 14.0))
        assert inside < 0.10 * total or (hi - lo) <= 0.3


def test_bin_labels():
    binning = PiBinning(edges=(0.0, 3.9375, 4.375, 14.0))
    assert binning.labels == ("0-3.9375", "3.9375-4.375", "4.375-14")
    assert binning.bin_index(4.0) == 1
    assert binning.bin_index(14.0) == 2


# -- motifs -----------------------------------------------------------------------

def brute_force_counts(seqs, length):
    counts = {}
    for seq in seqs:
        found = set()
        for start in range(len(seq) - length + 1):
            found.add((start + 1, seq[start : start + length]))
        for key in found:
            counts[key] = counts.get(key, 0) + 1
    return counts


def test_motif_spec_example():
    motifs = mine_motifs(["ARDY", "ARDW"])
    by_len = {}
    for m in motifs:
        by_len.setdefault(len(m.subsequence), []).append(m.label)
    assert by_len[2] == ["1_AR", "2_RD"]
    assert by_len[3] == ["1_ARD", "2_RDW"]  # count 2 beats the tied count-1 pool
    assert 5 not in by_len  # all sequences shorter than 5


def test_motif_label_format():
    assert Motif(4, "AL").label == "4_AL"
    assert Motif(4, "AL").present_in("XXXALY")
    assert not Motif(4, "AL").present_in("ALXXXX")


def test_motif_counts_match_brute_force():
    rng = np.random.default_rng(5)
    residues = list("ARNDCEQGH")
    for _ in range(25):
        seqs = [
            "".join(rng.choice(residues, size=rng.integers(2, 15)))
            for _ in range(int(rng.integers(1, 12)))
        ]
        for length in (2, 3, 5):
            assert {
                (m.start, m.subsequence): c for m, c in motif_counts(seqs, length).items()
            } == brute_force_counts(seqs, length)


def test_motif_occurrence_mode_counts_repeats():
    counts = motif_counts(["ABABA".replace("B", "R")], 2, count_mode="occurrences")
    assert counts[Motif(1, "AR")] == 1
    presence = motif_counts(["ARAR"], 2, count_mode="presence")
    occurrences = motif_counts(["ARAR"], 2, count_mode="occurrences")
    assert presence == occurrences  # positional motifs cannot repeat within one sequence


def test_mine_motifs_deterministic_tiebreak():
    # every motif appears once; ties resolve by start then subsequence
    motifs = mine_motifs(["AR", "RD"])
    labels = [m.label for m in motifs if len(m.subsequence) == 2]
    assert labels == ["1_AR", "1_RD"]


# -- germline ----------------------------------------------------------------------

def gene_seq(name):
    return next(g.sequence for g in GERMDB.genes if g.allele == name)


def test_exact_gene_self_match_wins():
    hv = gene_seq("IGHV3-23*01")
    call = assign_germline({"heavy": hv + "DRGYFDYWGQGTLVTVSS"}, GERMDB, TABLE)
    assert call.hv == "IGHV3-23"
    assert call.species == "human"


def test_j_segment_called_from_suffix():
    heavy = gene_seq("IGHV3-23*01") + "DRG" + "YFDYWGQGTLVTVSS"
    call = assign_germline({"heavy": heavy}, GERMDB, TABLE)
    assert call.hj == "IGHJ4"


def test_light_chain_calls():
    light = gene_seq("IGKV1-39*01") + "WTFGQGTKVEIK"
    call = assign_germline({"light": light}, GERMDB, TABLE)
    assert call.lv == "IGKV1-39"
    assert call.lj == "IGKJ1"
    assert call.hv is None
    assert call.species == "human"


def test_allele_suffix_stripped():
    call = assign_germline({"heavy": gene_seq("IGHV1-69*01")}, GERMDB, TABLE)
    assert "*" not in call.hv


def test_tie_breaks_to_smaller_name(tmp_path):
    (tmp_path / "human_hv.fasta").write_text(
        ">IGHV9-99*01\nWWWWWWWWWVWWWWWWWW\n>IGHV9-98*01\nWWWWWWWWWTWWWWWWWW\n"
    )
    (tmp_path / "human_hj.fasta").write_text(">IGHJ1*01\nWGQGT\n")
    db = load_germline_db(tmp_path)
    # query has A at the variable site: BLOSUM62 scores A/T and A/V both 0
    call = assign_germline({"heavy": "WWWWWWWWWAWWWWWWWW"}, db, TABLE)
    assert call.hv == "IGHV9-98"


def test_mouse_species_detected():
    hv = gene_seq("IGHV1-18*01")
    call = assign_germline({"heavy": hv}, GERMDB, TABLE)
    assert call.species == "mouse"


# -- canonical ----------------------------------------------------------------------

def chain_from(positions_residues):
    pos, res = zip(*positions_residues)
    return NumberedChain(chain_type="heavy", positions=tuple(pos), residues="".join(res))


def heavy_with_h2(h2_residues):
    entries = []
    for n in range(40, 52):
        entries.append((ChothiaPosition(n), "A"))
    # surplus loop residues carry insertion codes at the 52 apex
    scheme = [ChothiaPosition(52)]
    scheme += [ChothiaPosition(52, chr(ord("A") + i)) for i in range(max(0, len(h2_residues) - 5))]
    scheme += [ChothiaPosition(n) for n in range(53, 57)]
    for pos, r in zip(scheme[: len(h2_residues)], h2_residues):
        entries.append((pos, r))
    for n in range(57, 70):
        entries.append((ChothiaPosition(n), "G"))
    return chain_from(entries)


def test_h2_class_by_length_and_key_residue():
    regions = extract_regions(heavy_with_h2("SGSGG"), BOUNDARIES)
    # length 5, position 54 = S -> class 6
    assert assign_canonical(regions, RULES)["CDRH2"] == 6
    regions = extract_regions(heavy_with_h2("SGKGG"), BOUNDARIES)
    assert assign_canonical(regions, RULES)["CDRH2"] == 5
    regions = extract_regions(heavy_with_h2("SGWGG"), BOUNDARIES)
    assert assign_canonical(regions, RULES)["CDRH2"] == 4


def test_unmatched_length_gives_no_call():
    regions = extract_regions(heavy_with_h2("SGSGGGGG"), BOUNDARIES)  # length 8
    assert "CDRH2" not in assign_canonical(regions, RULES)


def test_malformed_rule_file(tmp_path):
    bad = tmp_path / "rules.csv"
    bad.write_text("region,length,requirements,class_id\nCDRH1,seven,,1\n")
    with pytest.raises(ConfigError):
        load_canonical_rules(bad)


# -- vocabulary / fingerprints ---------------------------------------------------------

def make_annotation(i, set_label, hv=None, lj=None, h2=None, cdrh3="", pi=None):
    return RecordAnnotation(
        record_id=f"r{i}",
        dataset_id="d",
        set_label=set_label,
        germline=GermlineCall(hv=hv, lj=lj),
        canonical={"CDRH2": h2} if h2 is not None else {},
        cdrh3=cdrh3,
        pi=pi,
    )


def test_vocabulary_union_and_order():
    anns = [
        make_annotation(0, "targeting", hv="IGHV3-23", h2=6, cdrh3="AALDY", pi=4.2),
        make_annotation(1, "reference", hv="IGHV1-69", h2=5, cdrh3="GGGDY", pi=8.1),
    ]
    vocab = build_vocabulary(anns)
    segs = [f.segment for f in vocab.features]
    assert segs == sorted(segs, key=lambda s: list(dict.fromkeys(segs)).index(s))
    hv_labels = [f.label for f in vocab.features if f.segment == "germ_hv"]
    assert hv_labels == ["IGHV1-69", "IGHV3-23"]
    h2_labels = [f.label for f in vocab.features if f.segment == "canon_h2"]
    assert h2_labels == ["5", "6"]


def test_vocabulary_idempotent_for_identical_sets():
    anns_a = [make_annotation(0, "targeting", hv="IGHV3-23", cdrh3="ARDY", pi=4.0)]
    anns_b = [make_annotation(1, "reference", hv="IGHV3-23", cdrh3="ARDY", pi=4.0)]
    v1 = build_vocabulary(anns_a + anns_b)
    v2 = build_vocabulary(anns_a + anns_b + anns_a[:1])  # duplicates change nothing
    assert [f.column for f in v1.features] == [f.column for f in v2.features]


def test_fingerprint_single_bit_per_segment():
    anns = [
        make_annotation(0, "targeting", hv="IGHV3-23", h2=6, cdrh3="AALDY", pi=4.2),
        make_annotation(1, "reference", hv="IGHV1-69", h2=5, cdrh3="GGGDY", pi=8.1),
    ]
    vocab = build_vocabulary(anns)
    bits = build_fingerprint(anns[0], vocab)
    assert bits.shape == (len(vocab),)
    for segment in ("germ_hv", "canon_h2", "pi"):
        seg_bits = bits[vocab.segment_indices(segment)]
        assert seg_bits.sum() == 1
    assert bits[vocab.index_of("germ_hv", "IGHV3-23")] == 1
    # no light chain -> all light segments zero
    for segment in ("germ_lv", "germ_lj", "canon_l1", "canon_l2", "canon_l3"):
        assert bits[vocab.segment_indices(segment)].sum() == 0 if len(
            vocab.segment_indices(segment)
        ) else True


def test_fingerprint_motif_positional():
    anns = [
        make_annotation(0, "targeting", cdrh3="AALDY", pi=4.0),
        make_annotation(1, "reference", cdrh3="GALDY", pi=5.0),
    ]
    vocab = build_vocabulary(anns)
    assert any(f.label == "2_AL" for f in vocab.features if f.segment == "motif")
    bits = build_fingerprint(anns[0], vocab)
    assert bits[vocab.index_of("motif", "2_AL")] == 1
    # motif present positionally in the reference record too
    bits_ref = build_fingerprint(anns[1], vocab)
    assert bits_ref[vocab.index_of("motif", "2_AL")] == 1


def test_fingerprint_unknown_value_rejected():
    anns = [make_annotation(0, "targeting", hv="IGHV3-23", cdrh3="ARDY", pi=4.0)]
    vocab = build_vocabulary(anns)
    rogue = make_annotation(9, "targeting", hv="IGHV5-51", cdrh3="ARDY", pi=4.0)
    with pytest.raises(UsageError):
        build_fingerprint(rogue, vocab)
