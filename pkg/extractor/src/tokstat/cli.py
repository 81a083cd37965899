"""Command line front end for teacher-forced token statistics extraction.

Reads prompt/response pairs from a JSONL file, scores every response token
against a causal language model, and writes a token-stats file with a sidecar
manifest.  Output is deterministic for a fixed model, input, and settings;
records appear in input order and nothing time- or host-dependent is written.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Optional, Sequence, TextIO

from .extract import (
    DEFAULT_SYSTEM_PROMPT,
    DEFAULT_TOPK,
    DEFAULT_WINDOW,
    ExtractionConfig,
    ExtractionError,
    extract_records,
    load_student,
    manifest_object,
    manifest_path_for,
    read_pairs,
    select_sample,
    write_manifest,
    write_records,
)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INPUT = 2


class CliError(Exception):
    """Input or configuration problem reported to the user (exit code 2)."""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tokstat-extract",
        description=(
            "Extract per-token surprisal and rank statistics from a causal "
            "language model over teacher-forced (prompt, response) pairs."
        ),
    )
    parser.add_argument("--model", required=True, help="model name or local path")
    parser.add_argument(
        "--input", required=True, help="JSONL file of prompt/response pairs"
    )
    parser.add_argument("--out", required=True, help="output token-stats JSONL path")
    parser.add_argument(
        "--topk",
        type=int,
        default=DEFAULT_TOPK,
        help="rank cap; deeper ranks are written as the cap with the "
        "saturation flag set (default %(default)s)",
    )
    parser.add_argument(
        "--window",
        type=int,
        default=DEFAULT_WINDOW,
        help="trailing sentence count for local surprisal (default %(default)s)",
    )
    parser.add_argument(
        "--local-surprisal",
        action="store_true",
        help="also emit per-token surprisal under a trailing-sentence context",
    )
    parser.add_argument(
        "--entropy",
        action="store_true",
        help="also emit per-token next-token distribution entropy",
    )
    parser.add_argument(
        "--system-prompt",
        default=DEFAULT_SYSTEM_PROMPT,
        help="system prompt prepended to every problem prompt",
    )
    parser.add_argument(
        "--sample-n",
        type=int,
        default=0,
        help="score only a seeded sample of this many pairs (0 = all)",
    )
    parser.add_argument("--seed", type=int, default=0, help="seed for --sample-n")
    parser.add_argument(
        "--max-length",
        type=int,
        default=None,
        help="cap on context+response tokens (default: the model's limit)",
    )
    parser.add_argument(
        "--dataset-id",
        default=None,
        help="dataset id recorded in the manifest (default: output file stem)",
    )
    parser.add_argument(
        "--student-id",
        default=None,
        help="student id recorded in the manifest (default: model basename)",
    )
    return parser


def run(args: argparse.Namespace, stdout: TextIO) -> int:
    try:
        cfg = ExtractionConfig(
            model_ref=args.model,
            topk=args.topk,
            window=args.window,
            emit_local=args.local_surprisal,
            emit_entropy=args.entropy,
            system_prompt=args.system_prompt,
            max_length=args.max_length,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from None

    try:
        pairs = read_pairs(args.input)
    except OSError as exc:
        raise CliError(f"cannot read {args.input}: {exc}") from None
    except ValueError as exc:
        raise CliError(f"{args.input}: {exc}") from None

    total_pairs = len(pairs)
    sample_info = None
    if args.sample_n:
        try:
            pairs = select_sample(pairs, args.sample_n, args.seed)
        except ValueError as exc:
            raise CliError(str(exc)) from None
        if len(pairs) < total_pairs:
            sample_info = {
                "n": len(pairs),
                "seed": args.seed,
                "keys": [p.key for p in pairs],
            }

    try:
        student = load_student(args.model, max_length=args.max_length)
    except ExtractionError as exc:
        raise CliError(str(exc)) from None
    except (OSError, ValueError, EnvironmentError) as exc:
        raise CliError(f"cannot load model {args.model!r}: {exc}") from None

    try:
        records = extract_records(student, cfg, pairs)
    except ExtractionError as exc:
        raise CliError(str(exc)) from None

    write_records(args.out, records)
    dataset_id = args.dataset_id or os.path.splitext(os.path.basename(args.out))[0]
    student_id = args.student_id or student.name
    manifest = manifest_object(dataset_id, student_id, student, cfg, sample_info)
    mpath = manifest_path_for(args.out)
    write_manifest(mpath, manifest)

    token_count = sum(len(r["tokens"]) for r in records)
    saturated = sum(1 for r in records for t in r["tokens"] if t["rs"])
    stdout.write(f"records: {len(records)} (of {total_pairs} input pairs)\n")
    stdout.write(f"tokens: {token_count}\n")
    stdout.write(f"saturated_tokens: {saturated}\n")
    stdout.write(f"output: {args.out}\n")
    stdout.write(f"manifest: {mpath}\n")
    return EXIT_OK


def main(
    argv: Optional[Sequence[str]] = None,
    stdout: TextIO = sys.stdout,
    stderr: TextIO = sys.stderr,
) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return run(args, stdout)
    except CliError as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    except Exception as exc:  # pragma: no cover - defensive
        stderr.write(f"internal error: {type(exc).__name__}: {exc}\n")
        return EXIT_INTERNAL


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
