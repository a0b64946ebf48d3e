#!/usr/bin/env python3
"""
Command-line entry point for the strand-space analyzer and the SRP-3 corpus.

    python main.py analyze models/srp3.lisp --pov client-pov --format dot
    python main.py regress
    python main.py demo handshake --profile toy
    python main.py demo malserver --profile toy
    python main.py validate models/srp3.lisp
    python main.py check-mapping

Exit codes: 0 success, 1 input error or failed check, 2 search bounds exhausted.
"""
import argparse
import json
import logging
import os
import random
import sys
from typing import List, Optional

from analyzer.model_lang import ModelError, ModelSyntaxError, load_model_file
from analyzer.rendering import FORMATS, render_shape, report_to_dict
from analyzer.strand_search import DEFAULT_MAX_BRANCH, DEFAULT_MAX_DEPTH, DEFAULT_MAX_STRANDS, Bounds
from srp3.corpus import MANIFEST_PATH, CorpusError, analyze_file, corpus, format_results, run_regression
from srp3.mapping import MAPPING_PATH, MappingError, check_mapping_complete
from srp3.reference import (
    DEFAULT_PROFILE, GROUP_PROFILES, TAMPER_FIELDS, SRPError, malicious_server_transcript, register,
    run_handshake, run_key_agreement_trials, run_malserver_trials, get_profile,
)

# Defaults (override on the command line)
OUTPUT_DIR = "output"
LOG_FILE = "analyzer.log"
DEFAULT_FORMAT = "dot"
DEFAULT_SEED = 0
DEMO_PASSWORD = "correct horse battery staple"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_EXHAUSTED = 2

logger = logging.getLogger(__name__)


def setup_logging(log_file: str = LOG_FILE, verbose: bool = False):
    """Log to a file and to stderr; stdout is reserved for results."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(log_file),
            logging.StreamHandler(sys.stderr)
        ]
    )


def ensure_output_dir(path: str):
    """Create output directory if it doesn't exist"""
    os.makedirs(path, exist_ok=True)


def save_json_file(data, file_path: str):
    """Save JSON data to file."""
    try:
        with open(file_path, 'w', encoding="utf-8") as file:
            json.dump(data, file, indent=2)
            file.write("\n")
        logger.info(f"Successfully saved data to {file_path}")
    except OSError as e:
        logger.error(f"Error saving JSON file {file_path}: {e}")
        raise


def bounds_from_args(args) -> Bounds:
    return Bounds(args.max_strands, args.max_depth, args.max_branch)


def cmd_analyze(args) -> int:
    bounds = bounds_from_args(args)
    pov, result = analyze_file(args.file, args.pov, bounds)
    ensure_output_dir(args.out_dir)
    stem = os.path.splitext(os.path.basename(args.file))[0]
    for k, shape in enumerate(result.shapes, start=1):
        name = f"{stem}-{pov}-shape-{k}"
        path = os.path.join(args.out_dir, f"{name}.{args.format}")
        with open(path, "wb") as f:
            f.write(render_shape(shape, args.format, k, name))
        logger.info(f"Wrote {path}")
    if args.format == "json":
        report = report_to_dict(stem, pov, result, bounds.as_dict())
        save_json_file(report, os.path.join(args.out_dir, f"{stem}-{pov}-report.json"))
    print(f"{args.file} {pov}: {len(result.shapes)} shape(s), {result.status}")
    for note in result.notes:
        print(f"  note: {note}")
    return EXIT_OK if result.complete else EXIT_EXHAUSTED


def cmd_regress(args) -> int:
    entries = corpus(args.manifest)
    if args.only:
        entries = [e for e in entries if e.id in set(args.only)]
    results = run_regression(entries, bounds_from_args(args), workers=args.workers,
                             progress=not args.no_progress,
                             models_dir=os.path.dirname(os.path.abspath(args.manifest)))
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.entry.id:3} {r.entry.file}: "
              f"expected {r.entry.describe()}; got {r.detail}")
    formatted = format_results(results)
    if args.report:
        save_json_file(formatted, args.report)
    print(f"{len(formatted['passed'])} out of {len(results)} entries pass")
    return EXIT_OK if not formatted["failed"] else EXIT_ERROR


def _print_handshake(group, result):
    t = result.transcript
    print(f"profile {group.name}: q={group.q:x} g={group.g}")
    print(t.to_text(), end="")
    if result.client_key is not None:
        print(f"client K {result.client_key.hex()}")
    if result.server_key is not None:
        print(f"server K {result.server_key.hex()}")
    print(f"keys equal: {'yes' if result.keys_agree else 'no'}")


def cmd_demo(args) -> int:
    group = get_profile(args.profile)
    rng = random.Random(args.seed)
    if args.which == "handshake":
        result = run_handshake(group, DEMO_PASSWORD, rng, tamper=args.tamper)
        _print_handshake(group, result)
        accepted = result.transcript.accepted
        if args.trials:
            summary = run_key_agreement_trials(group, args.trials, args.seed, progress=not args.no_progress)
            print(f"key agreement trials: {summary.passed}/{summary.trials}")
            accepted = accepted and summary.ok
    else:
        if args.tamper:
            raise SRPError("--tamper applies to the handshake demo only")
        record = register(DEMO_PASSWORD, group, rng).record("alice")
        transcript = malicious_server_transcript(record, group, rng)
        print(f"profile {group.name}: q={group.q:x} g={group.g}")
        print("*** client absent: session fabricated from the server record alone ***")
        print(transcript.to_text(), end="")
        accepted = transcript.accepted
        if args.trials:
            summary = run_malserver_trials(group, args.trials, args.seed, progress=not args.no_progress)
            print(f"forged sessions accepted: {summary.passed}/{summary.trials}, "
                  f"client secret reads: {summary.secret_reads}")
            accepted = accepted and summary.ok
    print(f"verdict: {'accept' if accepted else 'reject'}")
    return EXIT_OK if accepted else EXIT_ERROR


def cmd_validate(args) -> int:
    model = load_model_file(args.file)
    problems = model.diagnostics()
    for d in problems:
        print(f"{args.file}:{d}")
    if not problems:
        print(f"{args.file}: ok ({', '.join(model.pov_names()) or 'no skeletons'})")
    return EXIT_OK if not problems else EXIT_ERROR


def cmd_check_mapping(args) -> int:
    problems = check_mapping_complete(args.manifest, args.mapping)
    for p in problems:
        print(p)
    if not problems:
        print(f"{args.mapping}: every corpus entry is mapped")
    return EXIT_OK if not problems else EXIT_ERROR


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Strand-space protocol analyzer and SRP-3 corpus")
    parser.add_argument("--log-file", default=LOG_FILE, help="File that receives the log")
    parser.add_argument("--verbose", action="store_true", help="Log per-branch detail")
    parser.add_argument("--no-progress", action="store_true", help="Hide progress bars")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_bounds(p):
        p.add_argument("--max-strands", type=int, default=DEFAULT_MAX_STRANDS,
                       help="Maximum number of regular strands in a skeleton")
        p.add_argument("--max-depth", type=int, default=DEFAULT_MAX_DEPTH,
                       help="Maximum number of strand-changing refinement steps")
        p.add_argument("--max-branch", type=int, default=DEFAULT_MAX_BRANCH,
                       help="Maximum number of children explored per skeleton")

    analyze = sub.add_parser("analyze", help="Search a model file for shapes")
    analyze.add_argument("file", help="Model file")
    analyze.add_argument("--pov", help="Point of view (defaults to the first skeleton)")
    analyze.add_argument("--format", default=DEFAULT_FORMAT, choices=FORMATS, help="Shape output format")
    analyze.add_argument("--out-dir", default=OUTPUT_DIR, help="Directory for shape files")
    add_bounds(analyze)
    analyze.set_defaults(func=cmd_analyze)

    regress = sub.add_parser("regress", help="Run every corpus entry against its expectation")
    regress.add_argument("--manifest", default=MANIFEST_PATH, help="Corpus manifest")
    regress.add_argument("--workers", type=int, default=1, help="Entries analyzed in parallel")
    regress.add_argument("--only", nargs="*", help="Run only these entry ids")
    regress.add_argument("--report", help="Write a JSON summary here")
    add_bounds(regress)
    regress.set_defaults(func=cmd_regress)

    demo = sub.add_parser("demo", help="Run the numeric SRP-3 reference")
    demo.add_argument("which", choices=["handshake", "malserver"])
    demo.add_argument("--profile", default=DEFAULT_PROFILE, choices=sorted(GROUP_PROFILES), help="Group profile")
    demo.add_argument("--seed", type=int, default=DEFAULT_SEED, help="Random seed")
    demo.add_argument("--tamper", choices=TAMPER_FIELDS, help="Flip one bit of this wire field")
    demo.add_argument("--trials", type=int, default=0, help="Also run this many randomized trials")
    demo.set_defaults(func=cmd_demo)

    validate = sub.add_parser("validate", help="Parse and validate a model file")
    validate.add_argument("file", help="Model file")
    validate.set_defaults(func=cmd_validate)

    mapping = sub.add_parser("check-mapping", help="Check docs/MAPPING.md against the manifest")
    mapping.add_argument("--manifest", default=MANIFEST_PATH, help="Corpus manifest")
    mapping.add_argument("--mapping", default=MAPPING_PATH, help="Mapping document")
    mapping.set_defaults(func=cmd_check_mapping)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for the analyzer command line"""
    args = build_parser().parse_args(argv)
    setup_logging(args.log_file, args.verbose)
    try:
        return args.func(args)
    except ModelSyntaxError as e:
        logger.error(f"Syntax error: {e}")
    except (ModelError, CorpusError, MappingError, SRPError) as e:
        logger.error(str(e))
    except OSError as e:
        logger.error(f"I/O error: {e}")
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
