#!/usr/bin/env python3
"""Build the bundled demo antibody dataset (tests/fixtures/mmp/).

Synthesizes a 160-record MMP-style targeting set (8 datasets) and a
380-record PDB-style reference set (human + murine datasets) whose
germline, canonical-structure, pI and motif joint distribution carries
the summary statistics the test suite asserts. Every record is a real
amino-acid sequence assembled from the bundled germline genes, edited
for its intended loop classes, charge-tuned in CDR-H3, and scattered
with framework point mutations; the script verifies each record's
annotations through the library before writing anything.

Run from the repository root:  python3 tools/make_demo_dataset.py
"""

from __future__ import annotations

import csv
import sys
from collections import Counter
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from abprofile.align import load_substitution_table
from abprofile.features import (
    assign_canonical,
    assign_germline,
    compute_pi,
    load_canonical_rules,
    load_germline_db,
    load_pka_table,
)
from abprofile.numbering import extract_regions, load_boundaries, load_profiles, number_chothia
from abprofile.rng import stream

OUT_DIR = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "mmp"
SEED = 20170524  # reference-set query date in the source data

TABLE = load_substitution_table()
BOUNDARIES = load_boundaries()
PROFILES = load_profiles(TABLE, BOUNDARIES)
GERMDB = load_germline_db()
RULES = load_canonical_rules()
PKA = load_pka_table()

GENES = {}
for g in GERMDB.genes:
    GENES[(g.species, g.segment, g.name)] = g.sequence

# CDR-H3 contribution of each J gene (everything before the FR4 W..GxG core)
HJ_H3_PART = {
    ("human", "IGHJ1"): 6, ("human", "IGHJ2"): 6, ("human", "IGHJ3"): 5,
    ("human", "IGHJ4"): 4, ("human", "IGHJ5"): 5, ("human", "IGHJ6"): 9,
    ("mouse", "IGHJ2"): 4, ("mouse", "IGHJ3"): 4,
}

LAMBDA_LV = {"IGLV1-40", "IGLV2-14", "IGLV3-19"}

# pI target windows, keyed by short names used in the composition tables
PI_WINDOWS = {
    "B1": (3.55, 3.90),     # [3.5, 3.9375) leaf
    "BH": (3.97, 4.34),     # [3.9375, 4.375) leaf: the design-tree escape bin
    "B3a": (4.40, 4.57), "B3b": (4.62, 4.78), "B3c": (4.84, 5.00), "B3d": (5.06, 5.22),
    "B4a": (5.28, 5.65), "B4b": (5.72, 6.09), "B4c": (6.16, 6.52), "B4d": (6.56, 6.96),
    "B5a": (7.05, 8.70), "B5b": (8.80, 10.45),
    "B6": (10.55, 13.40),
}

H2_TEMPLATES = {
    6: ["SGSGG", "NGGGG", "SGNGT", "AGDGS", "TGTGS"],
    5: ["SGKGG", "NGEGS", "SGRGT", "AGQGS"],
    4: ["SGWGG", "NGFGS", "SGYGT"],
    2: ["SGGG", "NGGS", "SGGT"],
    1: ["SGSGGG", "NGSGGS"],
}

NEUTRAL = "GSYTANQ"
FR_MUT_RESIDUES = "ASTVNQGDEKR"


def rng_for(*names):
    return stream(SEED, *names)


def chothia_index_map(chain, chain_type):
    numbered = number_chothia(chain, chain_type, PROFILES)
    return numbered, {pos: i for i, pos in enumerate(numbered.positions)}


def _h2_class_of(heavy):
    numbered = number_chothia(heavy, "heavy", PROFILES)
    regions = extract_regions(numbered, BOUNDARIES)
    return assign_canonical(regions, RULES).get("CDRH2")


def rewrite_h2(heavy, h2_class, rng):
    """Replace the CDR-H2 span with a template of the target class.

    Length-changing templates can be re-absorbed into the framework by
    the aligner, so every candidate template is verified and the first
    one that yields the intended class wins.
    """
    numbered, index = chothia_index_map(heavy, "heavy")
    span = [i for pos, i in index.items() if 52 <= pos.number <= 56]
    lo, hi = min(span), max(span) + 1
    pool = list(H2_TEMPLATES[h2_class])
    start = int(rng.integers(len(pool)))
    for offset in range(len(pool)):
        template = pool[(start + offset) % len(pool)]
        candidate = heavy[:lo] + template + heavy[hi:]
        if _h2_class_of(candidate) == h2_class:
            return candidate
    raise RuntimeError(f"no H2 template of class {h2_class} survives renumbering")


def _h1_class_of(heavy):
    numbered = number_chothia(heavy, "heavy", PROFILES)
    regions = extract_regions(numbered, BOUNDARIES)
    return assign_canonical(regions, RULES).get("CDRH1")


def edit_h1_length(heavy, h1_class, rng):
    """Adjust CDR-H1 length (class is keyed purely on loop length);
    insertion residues are tried until the aligner keeps the new length
    inside the loop."""
    if h1_class == 1:
        return heavy
    numbered, index = chothia_index_map(heavy, "heavy")
    span = sorted(i for pos, i in index.items() if 26 <= pos.number <= 32)
    candidates = []
    for fill in ("P", "W", "H", "M"):
        for at in (span[3], span[4]):
            if h1_class == 2:
                candidates.append(heavy[:at] + fill + heavy[at:])
            elif h1_class == 3:
                candidates.append(heavy[:at] + fill * 2 + heavy[at:])
    if h1_class == 4:
        for at in (span[3], span[2]):
            candidates.append(heavy[:at] + heavy[at + 1 :])
    for candidate in candidates:
        if _h1_class_of(candidate) == h1_class:
            return candidate
    raise RuntimeError(f"could not reach H1 class {h1_class}")


def edit_l2_length(light, keep, rng):
    """Drop one CDR-L2 residue when the class-0 call must disappear."""
    if keep:
        return light
    numbered, index = chothia_index_map(light, "light")
    span = sorted(i for pos, i in index.items() if 50 <= pos.number <= 56)
    return light[: span[3]] + light[span[3] + 1 :]


def edit_l1_length(light, l1_insert, rng):
    if not l1_insert:
        return light
    numbered, index = chothia_index_map(light, "light")
    span = sorted(i for pos, i in index.items() if 24 <= pos.number <= 34)
    mid = span[4]
    return light[:mid] + light[mid] + light[mid:]


def scatter_mutations(chain, chain_type, n_mut, rng, keep_h2=True):
    """Point mutations restricted to framework interiors."""
    numbered, _ = chothia_index_map(chain, chain_type)
    if chain_type == "heavy":
        windows = [(4, 23), (37, 48), (59, 91)]
    else:
        windows = [(3, 21), (37, 47), (59, 85)]
    eligible = [
        i
        for i, pos in enumerate(numbered.positions)
        if any(lo <= pos.number <= hi for lo, hi in windows) and not pos.insertion
    ]
    picks = rng.choice(len(eligible), size=min(n_mut, len(eligible)), replace=False)
    out = list(chain)
    for p in sorted(picks.tolist()):
        i = eligible[p]
        choices = [r for r in FR_MUT_RESIDUES if r != out[i]]
        out[i] = choices[int(rng.integers(len(choices)))]
    return "".join(out)


def build_mid(length, prefix, pi_window, rng, max_tries=4000):
    """CDR-H3 middle segment: fixed prefix, then filler tuned until the
    whole H3 (with its V and J flanks attached later) provides slots;
    charge tuning happens in tune_pi against the assembled H3."""
    body_len = length - len(prefix)
    body = [NEUTRAL[int(rng.integers(len(NEUTRAL)))] for _ in range(body_len)]
    return prefix + "".join(body)


TUNE_RESIDUES = "DEKRHNQSGYT"


def _pi_of(v_tail, mid, j_part):
    return compute_pi(v_tail + "".join(mid) + j_part, PKA)


def pi_reach(v_tail, mid, j_part):
    """Achievable pI range when every tunable slot is acid or base."""
    slots = _tune_slots(mid)
    acid = list(mid)
    base = list(mid)
    for i in slots:
        acid[i] = "D"
        base[i] = "R"
    return _pi_of(v_tail, acid, j_part), _pi_of(v_tail, base, j_part)


def _tune_slots(mid):
    slots = list(range(2, len(mid)))
    return slots if slots else list(range(len(mid)))


def _greedy_descent(v_tail, mid, j_part, window, max_steps=60):
    lo, hi = window
    center = 0.5 * (lo + hi)
    slots = _tune_slots(mid)
    pi = _pi_of(v_tail, mid, j_part)
    for _ in range(max_steps):
        if lo <= pi <= hi:
            return True, pi
        best = None
        for i in slots:
            original = mid[i]
            for res in TUNE_RESIDUES:
                if res == original:
                    continue
                mid[i] = res
                cand = _pi_of(v_tail, mid, j_part)
                dist = abs(cand - center)
                if best is None or dist < best[0]:
                    best = (dist, i, res, cand)
            mid[i] = original
        if best is None or best[0] >= abs(pi - center) - 1e-9:
            return False, pi  # stuck in a quantization gap
        _, i, res, pi = best
        mid[i] = res
    return lo <= pi <= hi, pi


def tune_pi(v_tail, mid, j_part, window, rng, restarts=12):
    """Greedy descent into the pI window with randomized restarts."""
    mid = list(mid)
    slots = _tune_slots(mid)
    for attempt in range(restarts):
        ok, pi = _greedy_descent(v_tail, mid, j_part, window)
        if ok:
            return "".join(mid), pi
        for i in slots:
            mid[i] = TUNE_RESIDUES[int(rng.integers(len(TUNE_RESIDUES)))]
    raise RuntimeError(f"could not tune pI into {window} (stuck at {pi:.3f})")


TGT_PI_QUOTAS = {
    "B1": 8, "B3a": 9, "B3b": 9, "B3c": 9, "B3d": 10,
    "B4a": 12, "B4b": 13, "B4c": 12, "B4d": 13,
    "B5a": 10, "B5b": 10, "B6": 10,
}
REF_PI_QUOTAS = {
    "B1": 15, "B3a": 24, "B3b": 24, "B3c": 24, "B3d": 23,
    "B4a": 39, "B4b": 38, "B4c": 39, "B4d": 38,
    "B5a": 40, "B5b": 40, "B6": 30,
}


class PiAllocator:
    """Assign pI bins honoring feasibility; quotas shape the distribution."""

    def __init__(self, quotas):
        self.remaining = dict(quotas)

    @staticmethod
    def _feasible(name, reach):
        lo_r, hi_r = reach
        wlo, whi = PI_WINDOWS[name]
        center = 0.5 * (wlo + whi)
        return lo_r - 0.05 <= center <= hi_r + 0.05

    def pick(self, preferred, reach, excluded=()):
        order = [preferred] + sorted(self.remaining, key=lambda n: -self.remaining[n])
        for name in order:
            if name == "BH" or name in excluded:
                continue
            if self.remaining.get(name, 0) > 0 and self._feasible(name, reach):
                self.remaining[name] -= 1
                return name
        for name in sorted(PI_WINDOWS):
            if name != "BH" and name not in excluded and self._feasible(name, reach):
                return name
        raise RuntimeError(f"no feasible pI bin for reach {reach}")

    def refund(self, name):
        if name in self.remaining:
            self.remaining[name] += 1


class RecordSpec:
    def __init__(self, rec_id, dataset, set_label, species, hv, hj, lv, lj,
                 h2_class, h1_class, l2_keep, l1_insert, pi_bin, mid_len, mid_prefix,
                 lj_species=None, hj_species=None):
        self.rec_id = rec_id
        self.dataset = dataset
        self.set_label = set_label
        self.species = species
        self.hv = hv
        self.hj = hj
        self.lv = lv
        self.lj = lj
        self.h2_class = h2_class
        self.h1_class = h1_class
        self.l2_keep = l2_keep
        self.l1_insert = l1_insert
        self.pi_bin = pi_bin
        self.mid_len = mid_len
        self.mid_prefix = mid_prefix
        self.lj_species = lj_species or species
        self.hj_species = hj_species or species


def _h3_span(heavy):
    """String span of the extracted CDR-H3 (contiguous by construction)."""
    numbered = number_chothia(heavy, "heavy", PROFILES)
    idx = [i for i, pos in enumerate(numbered.positions) if 95 <= pos.number <= 102]
    return min(idx), max(idx) + 1


def tune_pi_in_chain(heavy, window, jpart_len, rng, restarts=12):
    """Charge-tune the assembled chain's real CDR-H3 into the window.

    Only the filler body is touched: the first three H3 residues (the V
    tail plus the two-residue motif prefix) and the trailing J-derived
    residues stay fixed so germline calls and motif structure survive.
    """
    lo, hi = _h3_span(heavy)
    body_lo = lo + 3
    body_hi = hi - jpart_len
    if body_hi <= body_lo:
        body_lo = lo + 1
    chain = list(heavy)
    slots = list(range(body_lo, body_hi))

    def h3_pi():
        return compute_pi("".join(chain[lo:hi]), PKA)

    wlo, whi = window
    center = 0.5 * (wlo + whi)
    for attempt in range(restarts):
        pi = h3_pi()
        for _ in range(60):
            if wlo <= pi <= whi:
                return "".join(chain), pi
            best = None
            for i in slots:
                original = chain[i]
                for res in TUNE_RESIDUES:
                    if res == original:
                        continue
                    chain[i] = res
                    cand = h3_pi()
                    dist = abs(cand - center)
                    if best is None or dist < best[0]:
                        best = (dist, i, res, cand)
                chain[i] = original
            if best is None or best[0] >= abs(pi - center) - 1e-9:
                break
            _, i, res, pi = best
            chain[i] = res
        if wlo <= pi <= whi:
            return "".join(chain), pi
        for i in slots:
            chain[i] = TUNE_RESIDUES[int(rng.integers(len(TUNE_RESIDUES)))]
    raise RuntimeError(f"could not tune pI into {window} (stuck at {pi:.3f})")


def chain_pi_reach(heavy, jpart_len):
    lo, hi = _h3_span(heavy)
    body_lo = min(lo + 3, hi - jpart_len)
    body_hi = max(hi - jpart_len, body_lo)
    h3 = list(heavy[lo:hi])
    rel = [i - lo for i in range(body_lo, body_hi)]
    acid = list(h3)
    base = list(h3)
    for i in rel:
        acid[i] = "D"
        base[i] = "R"
    return compute_pi("".join(acid), PKA), compute_pi("".join(base), PKA)


def assemble(spec: RecordSpec, allocators):
    rng = rng_for("assemble", spec.rec_id)
    hv_species = next(
        sp for sp in ("human", "mouse", "rat") if (sp, "hv", spec.hv) in GENES
    )
    v_seq = GENES[(hv_species, "hv", spec.hv)]
    j_seq = GENES[(spec.hj_species, "hj", spec.hj)]
    j_h3 = HJ_H3_PART[(spec.hj_species, spec.hj)]

    mid = build_mid(spec.mid_len, spec.mid_prefix, spec.pi_bin, rng)
    heavy = v_seq + mid + j_seq
    heavy = scatter_mutations(heavy, "heavy", int(rng.integers(7, 12)), rng)
    heavy = rewrite_h2(heavy, spec.h2_class, rng)
    heavy = edit_h1_length(heavy, spec.h1_class, rng)
    # randomize the V-tail residue starting CDR-H3 so position-1 motifs
    # do not mirror the heavy germline
    lo, _ = _h3_span(heavy)
    heavy = heavy[:lo] + "KR"[int(rng.integers(2))] + heavy[lo + 1 :]

    # charge-tune the real extracted CDR-H3 after every other edit
    def tuned_with_stable_extraction(base, window):
        # tuning edits can create alignment ties that move the loop
        # boundary; retry until a fresh extraction confirms the window
        for _ in range(8):
            cand, pi = tune_pi_in_chain(base, window, j_h3, rng)
            lo, hi = _h3_span(cand)
            fresh = compute_pi(cand[lo:hi], PKA)
            if window[0] <= fresh <= window[1]:
                return cand, fresh
            base = cand
        raise RuntimeError(f"unstable CDR-H3 extraction near {window}")

    if spec.pi_bin == "BH":
        heavy, pi = tuned_with_stable_extraction(heavy, PI_WINDOWS["BH"])
    else:
        allocator = allocators[spec.set_label]
        reach = chain_pi_reach(heavy, j_h3)
        tried = []
        last_error = None
        for _ in range(6):
            name = allocator.pick(spec.pi_bin, reach, excluded=tuple(tried))
            try:
                heavy, pi = tuned_with_stable_extraction(heavy, PI_WINDOWS[name])
                spec.pi_bin = name
                break
            except RuntimeError as exc:
                allocator.refund(name)
                tried.append(name)
                last_error = exc
        else:
            raise RuntimeError(f"{spec.rec_id}: {last_error}")

    lv_species = next(sp for sp in ("human", "mouse", "rat") if (sp, "lv", spec.lv) in GENES)
    light = GENES[(lv_species, "lv", spec.lv)] + GENES[(spec.lj_species, "lj", spec.lj)]
    light = scatter_mutations(light, "light", int(rng.integers(5, 9)), rng)
    light = edit_l2_length(light, spec.l2_keep, rng)
    light = edit_l1_length(light, spec.l1_insert, rng)
    return heavy, light


def verify(spec: RecordSpec, heavy, light):
    nh = number_chothia(heavy, "heavy", PROFILES)
    nl = number_chothia(light, "light", PROFILES)
    call = assign_germline({"heavy": nh, "light": nl}, GERMDB, TABLE)
    problems = []
    if call.hv != spec.hv:
        problems.append(f"hv {call.hv} != {spec.hv}")
    if call.hj != spec.hj:
        problems.append(f"hj {call.hj} != {spec.hj}")
    if call.lv != spec.lv:
        problems.append(f"lv {call.lv} != {spec.lv}")
    if call.lj != spec.lj:
        problems.append(f"lj {call.lj} != {spec.lj}")
    if call.species != spec.species:
        problems.append(f"species {call.species} != {spec.species}")
    rh = extract_regions(nh, BOUNDARIES)
    rl = extract_regions(nl, BOUNDARIES)
    canon = assign_canonical(rh, RULES)
    canon.update(assign_canonical(rl, RULES))
    if canon.get("CDRH2") != spec.h2_class:
        problems.append(f"h2 {canon.get('CDRH2')} != {spec.h2_class}")
    if canon.get("CDRH1") != spec.h1_class:
        problems.append(f"h1 {canon.get('CDRH1')} != {spec.h1_class}")
    has_l2 = canon.get("CDRL2") == 0
    if has_l2 != spec.l2_keep:
        problems.append(f"l2 {has_l2} != {spec.l2_keep}")
    h3 = rh["CDRH3"].residues
    pi = compute_pi(h3, PKA)
    lo, hi = PI_WINDOWS[spec.pi_bin]
    if not (lo - 0.05 <= pi <= hi + 0.05):
        problems.append(f"pi {pi:.3f} outside {spec.pi_bin}")
    return problems, h3, pi


# ---------------------------------------------------------------------------
# composition tables
# ---------------------------------------------------------------------------

def cycled(pool, n, rng=None):
    """Deterministic allocation of n items following the pool's ratios."""
    out = []
    reps = (n + len(pool) - 1) // len(pool)
    seq = list(pool) * reps
    return seq[:n]


def targeting_specs():
    """160 records over 8 datasets with the engineered joint structure."""
    ds_sizes = {"mmp1": 16, "mmp2": 64, "mmp3": 43, "mmp4": 12, "mmp5": 12,
                "mmp6": 11, "mmp7": 1, "mmp8": 1}
    v23 = {"mmp1": 16, "mmp2": 62, "mmp3": 38, "mmp4": 12, "mmp5": 12,
           "mmp6": 6, "mmp7": 1, "mmp8": 1}
    hatch_lj3 = {"mmp1": 3, "mmp2": 12, "mmp3": 8, "mmp4": 2, "mmp5": 2, "mmp6": 2}
    hatch_kj1 = {"mmp2": 2, "mmp3": 1, "mmp8": 1}
    hatch_pib = {"mmp1": 4, "mmp2": 14, "mmp3": 10, "mmp4": 3, "mmp5": 3, "mmp6": 1}
    v23_no_h26 = {"mmp1": 1, "mmp2": 2, "mmp3": 2, "mmp6": 1}

    non_v23 = {
        "mmp2": [("IGHV1-69", "human", 6), ("IGHV1-69", "human", 6)],
        "mmp3": [("IGHV3-30", "human", 6)] * 4 + [("IGHV4-34", "human", 2)],
        "mmp6": [("IGHV1-18", "mouse", 6)] * 3 + [("IGHV5-17", "mouse", 4)] * 2,
    }

    pi_pool = (
        ["B1"] * 6 + ["B3a"] * 8 + ["B3b"] * 8 + ["B3c"] * 8 + ["B3d"] * 8
        + ["B4a"] * 16 + ["B4b"] * 16 + ["B4c"] * 16 + ["B4d"] * 16
        + ["B5a"] * 12 + ["B5b"] * 6 + ["B6"] * 5
    )
    kappa_lj_pool = ["IGKJ2"] * 25 + ["IGKJ3"] * 26 + ["IGKJ4"] * 40 + ["IGKJ5"] * 26
    lambda_extra = ["IGLJ2"] * 8
    hj_pool = (
        ["IGHJ6"] * 58 + ["IGHJ4"] * 34 + ["IGHJ2"] * 22 + ["IGHJ3"] * 24
        + ["IGHJ1"] * 10 + ["IGHJ5"] * 12
    )
    kappa_lv_pool = (
        ["IGKV1-39"] * 28 + ["IGKV3-20"] * 38 + ["IGKV1-5"] * 29
        + ["IGKV2-28"] * 24 + ["IGKV4-1"] * 14
    )
    lambda_lv_pool = ["IGLV1-40"] * 20 + ["IGLV2-14"] * 17
    mid_prefix_pool = ["DY"] * 72 + ["GY"] * 32 + ["GR"] * 19 + ["SS"] * 18 + ["NW"] * 19
    mid_len_pool = [7] * 30 + [8] * 45 + [9] * 45 + [6] * 20 + [11] * 16 + [12] * 4

    pi_iter = iter(interleave(pi_pool, 300))
    kappa_lj_iter = iter(interleave(kappa_lj_pool, 300))
    lambda_extra_iter = iter(lambda_extra)
    hj_iter = iter(interleave(hj_pool, 300))
    kappa_lv_iter = iter(interleave(kappa_lv_pool, 300))
    lambda_lv_iter = iter(interleave(lambda_lv_pool, 300))
    prefix_iter = iter(interleave(mid_prefix_pool, 300))
    len_iter = iter(interleave(mid_len_pool, 300))

    # H1 length edits (class 2 / class 4) and L2 drops sit on hatched
    # records so the pure-path cohort keeps its default loop classes
    h1_edit_plan = {"mmp2": [2, 2, 2, 2], "mmp3": [4, 4, 4, 4]}
    l2_drop_plan = {"mmp1": 2, "mmp2": 4, "mmp3": 2}

    specs = []
    counter = 0
    for ds, size in ds_sizes.items():
        n_v23 = v23[ds]
        plans = []
        for _ in range(hatch_lj3.get(ds, 0)):
            plans.append("lj3")
        for _ in range(hatch_kj1.get(ds, 0)):
            plans.append("kj1")
        for _ in range(hatch_pib.get(ds, 0)):
            plans.append("pib")
        while len(plans) < n_v23:
            plans.append("clean")
        h1_edits = list(h1_edit_plan.get(ds, []))
        l2_drops = l2_drop_plan.get(ds, 0)
        no_h26 = v23_no_h26.get(ds, 0)

        for i, plan in enumerate(plans):
            counter += 1
            rec_id = f"t{counter:03d}"
            h2 = 6
            if no_h26 > 0 and plan in ("lj3", "pib"):
                h2 = 4
                no_h26 -= 1
            h1 = 1
            if h1_edits and plan in ("lj3", "pib"):
                h1 = h1_edits.pop()
            l2_keep = True
            if l2_drops > 0 and plan in ("lj3", "pib") and h1 == 1:
                l2_keep = False
                l2_drops -= 1
            if plan == "lj3":
                lv, lj = next(lambda_lv_iter), "IGLJ3"
                pi_bin = next(pi_iter)
            elif plan == "kj1":
                lv, lj = next(kappa_lv_iter), "IGKJ1"
                pi_bin = next(pi_iter)
            elif plan == "pib":
                lv = next(kappa_lv_iter)
                lj = next(kappa_lj_iter)
                pi_bin = "BH"
            else:
                lv = next(kappa_lv_iter)
                lj = next(kappa_lj_iter)
                pi_bin = next(pi_iter)
            specs.append(
                RecordSpec(
                    rec_id, ds, "targeting", "human", "IGHV3-23", next(hj_iter),
                    lv, lj, h2, h1, l2_keep, False, pi_bin,
                    next(len_iter), next(prefix_iter),
                    lj_species="human", hj_species="human",
                )
            )
        for hv, species, h2 in non_v23.get(ds, []):
            counter += 1
            rec_id = f"t{counter:03d}"
            if species == "mouse":
                lv = ["IGKV6-15", "IGKV6-15", "IGKV6-15", "IGKV3-12", "IGKV3-12"][counter % 5]
                lj = ["IGKJ2", "IGKJ2", "IGKJ2", "IGKJ5", "IGKJ5"][counter % 5]
                hj = ["IGHJ2", "IGHJ3"][counter % 2]
                specs.append(
                    RecordSpec(
                        rec_id, ds, "targeting", "mouse", hv, hj, lv, lj,
                        h2, 1, True, False, next(pi_iter), next(len_iter),
                        next(prefix_iter), lj_species="mouse", hj_species="mouse",
                    )
                )
            else:
                specs.append(
                    RecordSpec(
                        rec_id, ds, "targeting", "human", hv, next(hj_iter),
                        next(kappa_lv_iter), next(kappa_lj_iter), h2, 1, True, False,
                        next(pi_iter), next(len_iter), next(prefix_iter),
                        lj_species="human", hj_species="human",
                    )
                )
    return specs


def interleave(pool, n):
    """Deterministically interleave a pool so each value spreads evenly,
    then repeat to length n (keeps per-dataset compositions balanced)."""
    groups = {}
    for item in pool:
        groups.setdefault(item, []).append(item)
    # schedule by largest remaining share
    remaining = {k: len(v) for k, v in groups.items()}
    total = sum(remaining.values())
    credit = {k: 0.0 for k in remaining}
    ordered = []
    for _ in range(total):
        for k in remaining:
            credit[k] += remaining[k] / total
        pick = max(credit, key=lambda k: (credit[k], k))
        credit[pick] -= 1.0
        ordered.append(pick)
    reps = (n + total - 1) // total
    return (ordered * reps)[:n]


def reference_specs():
    """380 records in one PDB-style dataset: 245 human, 135 murine."""
    specs = []
    counter = 0

    lambda_lv_iter = iter(interleave(["IGLV1-40"] * 30 + ["IGLV2-14"] * 28 + ["IGLV3-19"] * 25, 400))
    kappa_lv_iter = iter(
        interleave(
            ["IGKV1-39"] * 15 + ["IGKV3-20"] * 36 + ["IGKV1-5"] * 34
            + ["IGKV2-28"] * 34 + ["IGKV4-1"] * 43,
            400,
        )
    )
    hj_iter = iter(
        interleave(
            ["IGHJ1"] * 28 + ["IGHJ2"] * 24 + ["IGHJ3"] * 30 + ["IGHJ4"] * 66
            + ["IGHJ5"] * 36 + ["IGHJ6"] * 61,
            400,
        )
    )
    h2_iter = iter(interleave([6] * 66 + [5] * 97 + [2] * 41 + [1] * 41, 245))
    h1_iter = iter(interleave([1] * 184 + [2] * 25 + [3] * 18 + [4] * 18, 245))
    pi_pool = (
        ["B1"] * 15 + ["B3a"] * 24 + ["B3b"] * 24 + ["B3c"] * 24 + ["B3d"] * 23
        + ["B4a"] * 39 + ["B4b"] * 38 + ["B4c"] * 39 + ["B4d"] * 38
        + ["B5a"] * 40 + ["B5b"] * 40 + ["B6"] * 30
    )
    pi_iter = iter(interleave(pi_pool, 600))
    kappa_lj_iter = iter(
        interleave(["IGKJ1"] * 13 + ["IGKJ2"] * 35 + ["IGKJ3"] * 8 + ["IGKJ4"] * 49 + ["IGKJ5"] * 50, 400)
    )
    lambda_lj_iter = iter(interleave(["IGLJ1"] * 26 + ["IGLJ2"] * 34 + ["IGLJ3"] * 16, 400))
    prefix_pool = ["DY"] * 95 + ["GR"] * 84 + ["SS"] * 68 + ["NW"] * 46 + ["GY"] * 87
    prefix_iter = iter(interleave(prefix_pool, 600))
    len_pool = [6] * 50 + [7] * 60 + [8] * 70 + [9] * 60 + [10] * 50 + [11] * 40 + [13] * 30 + [14] * 20
    len_iter = iter(interleave(len_pool, 600))
    l2_iter = iter(interleave([True] * 266 + [False] * 114, 600))
    l1_insert_iter = iter(interleave([False] * 350 + [True] * 30, 600))

    human_hv_pool = (
        ["IGHV1-69"] * 32 + ["IGHV3-30"] * 30 + ["IGHV4-34"] * 28 + ["IGHV1-2"] * 27
        + ["IGHV3-7"] * 27 + ["IGHV4-59"] * 26 + ["IGHV1-46"] * 25
        + ["IGHV1-18"] * 15 + ["IGHV2-5"] * 15
    )  # 225 + 20 x IGHV3-23 = 245
    human_hv_iter = iter(interleave(human_hv_pool, 225))

    # -- the 20 human IGHV3-23 records, every one carrying an escape
    # property so no reference record satisfies the pure design path;
    # their other attributes are spread so no single further feature
    # can exclude all of them at once
    special = (
        [("lj3", None)] * 7 + [("kj1", None)] * 7
        + [("pib", "IGKJ2"), ("pib", "IGKJ4"), ("pib", "IGKJ5"),
           ("pib", "IGLJ2"), ("pib", "IGKJ2"), ("pib", "IGKJ4")]
    )
    for plan, pib_lj in special:
        counter += 1
        rec_id = f"r{counter:03d}"
        if plan == "lj3":
            lv, lj = next(lambda_lv_iter), "IGLJ3"
            pi_bin = next(pi_iter)
        elif plan == "kj1":
            lv, lj = next(kappa_lv_iter), "IGKJ1"
            pi_bin = next(pi_iter)
        else:
            lv = next(lambda_lv_iter) if pib_lj.startswith("IGL") else next(kappa_lv_iter)
            lj = pib_lj
            pi_bin = "BH"
        specs.append(
            RecordSpec(
                rec_id, "pdb", "reference", "human", "IGHV3-23", next(hj_iter),
                lv, lj, next(h2_iter), next(h1_iter), next(l2_iter), next(l1_insert_iter),
                pi_bin, next(len_iter), next(prefix_iter),
                lj_species="human", hj_species="human",
            )
        )

    for _ in range(225):
        counter += 1
        rec_id = f"r{counter:03d}"
        hv = next(human_hv_iter)
        if counter % 11 in (3, 7, 9):
            lv, lj = next(lambda_lv_iter), next(lambda_lj_iter)
        else:
            lv, lj = next(kappa_lv_iter), next(kappa_lj_iter)
        specs.append(
            RecordSpec(
                rec_id, "pdb", "reference", "human", hv, next(hj_iter),
                lv, lj, next(h2_iter), next(h1_iter), next(l2_iter), next(l1_insert_iter),
                next(pi_iter), next(len_iter), next(prefix_iter),
                lj_species="human", hj_species="human",
            )
        )

    mouse_hv_iter = iter(
        interleave(["IGHV1-18"] * 35 + ["IGHV5-17"] * 34 + ["IGHV9-3"] * 33 + ["IGHV2-5"] * 33, 135)
    )
    mouse_lv_iter = iter(
        interleave(["IGKV6-15"] * 36 + ["IGKV3-12"] * 34 + ["IGKV4-1"] * 33 + ["IGKV10-96"] * 32, 135)
    )
    mouse_lj_iter = iter(interleave(["IGKJ1"] * 34 + ["IGKJ2"] * 35 + ["IGKJ4"] * 33 + ["IGKJ5"] * 33, 135))
    mouse_hj_iter = iter(interleave(["IGHJ1"] * 30 + ["IGHJ2"] * 35 + ["IGHJ3"] * 35 + ["IGHJ4"] * 35, 135))
    mouse_h2_iter = iter(interleave([6] * 37 + [5] * 53 + [2] * 23 + [1] * 22, 135))
    mouse_h1_iter = iter(interleave([1] * 101 + [2] * 12 + [3] * 11 + [4] * 11, 135))
    for _ in range(135):
        counter += 1
        rec_id = f"r{counter:03d}"
        specs.append(
            RecordSpec(
                rec_id, "pdb", "reference", "mouse", next(mouse_hv_iter),
                next(mouse_hj_iter), next(mouse_lv_iter), next(mouse_lj_iter),
                next(mouse_h2_iter), next(mouse_h1_iter), next(l2_iter),
                next(l1_insert_iter), next(pi_iter), next(len_iter), next(prefix_iter),
                lj_species="mouse", hj_species="mouse",
            )
        )
    return specs


def main():
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    all_specs = targeting_specs() + reference_specs()
    assert len([s for s in all_specs if s.set_label == "targeting"]) == 160
    assert len([s for s in all_specs if s.set_label == "reference"]) == 380

    allocators = {
        "targeting": PiAllocator(TGT_PI_QUOTAS),
        "reference": PiAllocator(REF_PI_QUOTAS),
    }
    rows = []
    failures = []
    pi_values = []
    for spec in all_specs:
        heavy, light = assemble(spec, allocators)
        problems, h3, pi = verify(spec, heavy, light)
        if problems:
            failures.append((spec.rec_id, problems))
        rows.append((spec, heavy, light, h3, pi))
        pi_values.append(pi)

    if failures:
        for rec_id, problems in failures[:25]:
            print(f"FAIL {rec_id}: {problems}")
        raise SystemExit(f"{len(failures)} records failed verification")

    with open(OUT_DIR / "targeting.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "dataset_id", "set_label", "heavy", "light"])
        for spec, heavy, light, _, _ in rows:
            if spec.set_label == "targeting":
                w.writerow([spec.rec_id, spec.dataset, "targeting", heavy, light])
    with open(OUT_DIR / "reference.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "dataset_id", "set_label", "heavy", "light"])
        for spec, heavy, light, _, _ in rows:
            if spec.set_label == "reference":
                w.writerow([spec.rec_id, spec.dataset, "reference", heavy, light])

    t_hv = Counter(s.hv for s, *_ in rows if s.set_label == "targeting")
    r_hv = Counter(s.hv for s, *_ in rows if s.set_label == "reference")
    t_h2 = Counter(s.h2_class for s, *_ in rows if s.set_label == "targeting")
    r_h2 = Counter(s.h2_class for s, *_ in rows if s.set_label == "reference")
    t_pi = Counter(s.pi_bin for s, *_ in rows if s.set_label == "targeting")
    r_pi = Counter(s.pi_bin for s, *_ in rows if s.set_label == "reference")
    print("targeting pi bins:", dict(sorted(t_pi.items())))
    print("reference pi bins:", dict(sorted(r_pi.items())))
    print("targeting IGHV3-23:", t_hv["IGHV3-23"], "/160 ->", t_hv["IGHV3-23"] / 160)
    print("reference IGHV3-23:", r_hv["IGHV3-23"], "/380 ->", r_hv["IGHV3-23"] / 380)
    print("targeting H2-6:", t_h2[6], "/160 ->", t_h2[6] / 160)
    print("reference H2-6:", r_h2[6], "/380 ->", r_h2[6] / 380)
    print("wrote", OUT_DIR)


if __name__ == "__main__":
    main()
