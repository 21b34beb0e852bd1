"""Command-line interface.

    abprofile <subcommand> --config <file> [flags]

Subcommands run one pipeline stage each against a shared output
directory; ``run-all`` executes the whole pipeline. Flags override
config-file values. Exit codes: 0 ok, 2 configuration error, 3 data
error, 4 stage failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import load_config
from .errors import ConfigError, DataError, StageError, UsageError
from .pipeline import STAGES, make_state, run_pipeline, run_stage

log = logging.getLogger("abprofile")

_STAGE_COMMANDS = {
    "prepare": "prepare",
    "number": "number",
    "annotate": "annotate",
    "similarity": "similarity",
    "salient": "salient",
    "classify": "classify",
    "recommend": "recommend",
}


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--targeting", help="targeting set input (CSV or FASTA)")
    parser.add_argument("--reference", help="reference set input (CSV or FASTA)")
    parser.add_argument("--outdir", help="output directory")
    parser.add_argument("--seed", type=int, help="64-bit run seed")
    parser.add_argument("--k", type=int, help="sampling iterations")
    parser.add_argument("--targeting-total", type=int, dest="targeting_total",
                        help="override the sampled targeting total")
    parser.add_argument("--reference-total", type=int, dest="reference_total",
                        help="override the sampled reference total")
    parser.add_argument("--species", dest="allowed_species",
                        help="comma-separated allowed species")
    parser.add_argument("--no-species-filter", action="store_true",
                        help="keep records regardless of called species")
    parser.add_argument("--no-cluster", action="store_true",
                        help="skip representative clustering")
    parser.add_argument("--identity-threshold", type=float, dest="identity_threshold")
    parser.add_argument("--gap-score", type=float, dest="gap_score")
    parser.add_argument("--fet-sided", dest="fet_sided", choices=["two_sided", "greater"])
    parser.add_argument("--biasing-threshold", type=float, dest="biasing_threshold")
    parser.add_argument("--association-threshold", type=float, dest="association_threshold")
    parser.add_argument("--motif-count", dest="motif_count",
                        choices=["presence", "occurrences"])
    parser.add_argument("--pi-bin-scope", dest="pi_bin_scope", choices=["pooled", "targeting"])
    parser.add_argument("--pka-table", dest="pka_table")
    parser.add_argument("--boundaries", dest="boundary_table")
    parser.add_argument("--canonical-rules", dest="canonical_rules")
    parser.add_argument("--germline-db", dest="germline_db")
    parser.add_argument("--profiles", dest="profiles")
    parser.add_argument("--allow-x", action="store_true", help="accept X residues (score 0)")
    parser.add_argument("--png", action="store_true", help="emit PNG heat maps")
    parser.add_argument("--models", help="comma-separated classifier list")
    parser.add_argument("--folds", type=int)
    parser.add_argument("--trees", type=int, help="forest size")
    parser.add_argument("--stop", choices=["guard", "global"], help="tree stop rule")
    parser.add_argument("--min-se", type=float, dest="min_se")
    parser.add_argument("--tree-scope", dest="tree_scope", choices=["pooled", "single"])
    parser.add_argument("--threads", type=int)
    parser.add_argument("--resume", action="store_true",
                        help="skip stages whose outputs match the manifest")
    parser.add_argument("--force", action="store_true",
                        help="ignore stale upstream artifacts")
    parser.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="abprofile",
        description="Contrast a targeting antibody set against a reference set.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for command in list(_STAGE_COMMANDS) + ["run-all"]:
        p = sub.add_parser(command)
        _add_common_flags(p)
        if command == "classify":
            p.add_argument("--mask", help="restrict the benchmark to one feature mask")
    return parser


def _config_from_args(args: argparse.Namespace):
    overrides = {}
    for key in (
        "targeting", "reference", "outdir", "seed", "k", "targeting_total",
        "reference_total", "identity_threshold", "gap_score", "fet_sided",
        "biasing_threshold", "association_threshold", "motif_count", "pi_bin_scope",
        "pka_table", "boundary_table", "canonical_rules", "germline_db", "profiles",
        "folds", "trees", "stop", "min_se", "tree_scope", "threads",
    ):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "allowed_species", None):
        overrides["allowed_species"] = tuple(
            s.strip() for s in args.allowed_species.split(",") if s.strip()
        )
    if getattr(args, "models", None):
        overrides["models"] = tuple(m.strip() for m in args.models.split(",") if m.strip())
    if getattr(args, "no_cluster", False):
        overrides["cluster"] = False
    if getattr(args, "no_species_filter", False):
        overrides["species_filter"] = False
    if getattr(args, "allow_x", False):
        overrides["allow_x"] = True
    if getattr(args, "png", False):
        overrides["png"] = True
    return load_config(args.config, overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _config_from_args(args)
        if args.command == "run-all":
            run_pipeline(cfg, resume=args.resume, force=args.force)
        else:
            cfg.validate()
            state = make_state(cfg, resume=args.resume, force=args.force)
            if args.command == "classify" and getattr(args, "mask", None):
                from .pipeline import stage_classify

                stage_classify(state, only_mask=args.mask)
            else:
                run_stage(state, _STAGE_COMMANDS[args.command])
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return 2
    except (DataError, UsageError) as exc:
        log.error("data error: %s", exc)
        return 3
    except StageError as exc:
        log.error("%s", exc)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
