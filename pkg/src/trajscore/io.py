"""Streaming ingestion and serialization of token-stats files.

File format (schema version "1"): UTF-8 line-delimited JSON, one trajectory
per line. Required top-level fields: schema_version, problem_id, teacher_id,
rollout_id, k_ext, tokens. Each token is an object with s (surprisal, nats),
r (rank), rs (rank saturated); optional ls (local surprisal) and h (entropy).
Optional top-level fields: text, correct, scores (name -> value map).

A sidecar manifest (<data path> + ".manifest.json") records dataset_id,
student_id, the surprisal unit, and the extraction settings.
"""

from __future__ import annotations

import io as _io
import json
import os
from typing import IO, Iterator, Optional, Tuple, Union

from .records import (
    SchemaError,
    TokenStat,
    TrajectoryDataset,
    TrajectoryRecord,
    ValidationReport,
    Violation,
    validate_dataset,
)

SCHEMA_VERSION = "1"
MANIFEST_SUFFIX = ".manifest.json"
SURPRISAL_UNIT = "nats"

_REQUIRED_FIELDS = ("schema_version", "problem_id", "teacher_id", "rollout_id", "k_ext", "tokens")
_OPTIONAL_FIELDS = ("text", "correct", "scores")
_TOKEN_REQUIRED = ("s", "r", "rs")
_TOKEN_OPTIONAL = ("ls", "h")

Source = Union[str, os.PathLike, IO[bytes], IO[str]]


def _open_text(source: Source):
    """Return (text stream, should_close) for a path or open stream."""
    if isinstance(source, (str, os.PathLike)):
        return open(source, "r", encoding="utf-8"), True
    if isinstance(source, _io.TextIOBase):
        return source, False
    # byte stream: decode on the fly
    return _io.TextIOWrapper(source, encoding="utf-8"), False


def _parse_token(obj, line_no: int, idx: int) -> TokenStat:
    if not isinstance(obj, dict):
        raise SchemaError(f"line {line_no}: token {idx} is not an object")
    for key in _TOKEN_REQUIRED:
        if key not in obj:
            raise SchemaError(f"line {line_no}: token {idx} missing field {key!r}")
    for key in obj:
        if key not in _TOKEN_REQUIRED and key not in _TOKEN_OPTIONAL:
            raise SchemaError(f"line {line_no}: token {idx} has unexpected field {key!r}")
    s, r, rs = obj["s"], obj["r"], obj["rs"]
    if not isinstance(rs, bool):
        raise SchemaError(f"line {line_no}: token {idx} field 'rs' must be boolean")
    if isinstance(r, bool) or not isinstance(r, int):
        raise SchemaError(f"line {line_no}: token {idx} field 'r' must be an integer")
    try:
        return TokenStat(
            surprisal=float(s),
            rank=r,
            rank_saturated=rs,
            local_surprisal=None if obj.get("ls") is None else float(obj["ls"]),
            entropy=None if obj.get("h") is None else float(obj["h"]),
        )
    except SchemaError as exc:
        raise SchemaError(f"line {line_no}: token {idx}: {exc}") from None


def parse_record_line(line: str, line_no: int) -> Tuple[TrajectoryRecord, int]:
    """Parse one line into (record, k_ext). Raises SchemaError with location."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"line {line_no}: malformed record ({exc.msg})") from None
    if not isinstance(obj, dict):
        raise SchemaError(f"line {line_no}: record is not an object")
    for key in _REQUIRED_FIELDS:
        if key not in obj:
            raise SchemaError(f"line {line_no}: missing field {key!r}")
    for key in obj:
        if key not in _REQUIRED_FIELDS and key not in _OPTIONAL_FIELDS:
            raise SchemaError(f"line {line_no}: unexpected field {key!r}")
    if obj["schema_version"] != SCHEMA_VERSION:
        raise SchemaError(
            f"line {line_no}: unsupported schema_version {obj['schema_version']!r}"
        )
    k_ext = obj["k_ext"]
    if isinstance(k_ext, bool) or not isinstance(k_ext, int) or k_ext < 1:
        raise SchemaError(f"line {line_no}: field 'k_ext' must be a positive integer")
    rollout = obj["rollout_id"]
    if isinstance(rollout, bool) or not isinstance(rollout, int):
        raise SchemaError(f"line {line_no}: field 'rollout_id' must be an integer")
    tokens_raw = obj["tokens"]
    if not isinstance(tokens_raw, list):
        raise SchemaError(f"line {line_no}: field 'tokens' must be an array")
    tokens = tuple(_parse_token(t, line_no, i) for i, t in enumerate(tokens_raw))
    for i, t in enumerate(tokens):
        if t.rank_saturated and t.rank != k_ext:
            raise SchemaError(
                f"line {line_no}: token {i}: saturated rank {t.rank} != k_ext {k_ext}"
            )
        if not t.rank_saturated and t.rank > k_ext:
            raise SchemaError(
                f"line {line_no}: token {i}: rank {t.rank} exceeds k_ext {k_ext}"
            )
    correct = obj.get("correct")
    if correct is not None and not isinstance(correct, bool):
        raise SchemaError(f"line {line_no}: field 'correct' must be boolean")
    scores = obj.get("scores")
    if scores is not None:
        if not isinstance(scores, dict):
            raise SchemaError(f"line {line_no}: field 'scores' must be an object")
        scores = {str(k): float(v) for k, v in scores.items()}
    record = TrajectoryRecord(
        problem_id=str(obj["problem_id"]),
        teacher_id=str(obj["teacher_id"]),
        rollout_id=rollout,
        tokens=tokens,
        text=obj.get("text"),
        correct=correct,
        external_scores=scores,
    )
    return record, k_ext


def iter_token_stats(source: Source) -> Iterator[Tuple[TrajectoryRecord, int]]:
    """Stream (record, k_ext) pairs from a token-stats file, one line at a time.

    Memory stays proportional to one record; blank lines are rejected.
    """
    stream, close = _open_text(source)
    try:
        for line_no, line in enumerate(stream, 1):
            if line.strip() == "":
                raise SchemaError(f"line {line_no}: blank line")
            yield parse_record_line(line, line_no)
    finally:
        if close:
            stream.close()


def parse_token_stats(
    source: Source,
    dataset_id: str = "",
    student_id: str = "",
) -> TrajectoryDataset:
    """Parse a whole token-stats file into a TrajectoryDataset.

    Order-preserving single pass. Raises SchemaError (with the offending
    line number) on the first malformed line, duplicate record key, or
    k_ext mismatch between lines.
    """
    records = []
    keys = {}
    k_ext = None
    for line_no, (record, line_k) in enumerate(iter_token_stats(source), 1):
        if k_ext is None:
            k_ext = line_k
        elif line_k != k_ext:
            raise SchemaError(
                f"line {line_no}: k_ext {line_k} differs from earlier value {k_ext}"
            )
        if record.key in keys:
            raise SchemaError(
                f"line {line_no}: duplicate key {record.key}, first on line {keys[record.key]}"
            )
        keys[record.key] = line_no
        records.append(record)
    if k_ext is None:
        raise SchemaError("empty input: no records")
    return TrajectoryDataset(
        dataset_id=dataset_id, student_id=student_id, k_ext=k_ext, records=tuple(records)
    )


def _token_obj(t: TokenStat) -> dict:
    obj = {"s": t.surprisal, "r": t.rank, "rs": t.rank_saturated}
    if t.local_surprisal is not None:
        obj["ls"] = t.local_surprisal
    if t.entropy is not None:
        obj["h"] = t.entropy
    return obj


def record_line(record: TrajectoryRecord, k_ext: int) -> str:
    """Canonical one-line serialization of a record (no trailing newline)."""
    obj = {
        "schema_version": SCHEMA_VERSION,
        "problem_id": record.problem_id,
        "teacher_id": record.teacher_id,
        "rollout_id": record.rollout_id,
        "k_ext": k_ext,
        "tokens": [_token_obj(t) for t in record.tokens],
    }
    if record.text is not None:
        obj["text"] = record.text
    if record.correct is not None:
        obj["correct"] = record.correct
    if record.external_scores is not None:
        obj["scores"] = dict(sorted(record.external_scores.items()))
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def serialize_dataset(ds: TrajectoryDataset, sink: Union[str, os.PathLike, IO[str]]) -> None:
    """Write ds as canonical line-delimited records (round-trips bit-exactly)."""
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "w", encoding="utf-8", newline="\n") as f:
            serialize_dataset(ds, f)
        return
    for record in ds.records:
        sink.write(record_line(record, ds.k_ext))
        sink.write("\n")


def manifest_path(data_path: Union[str, os.PathLike]) -> str:
    return os.fspath(data_path) + MANIFEST_SUFFIX


def write_manifest(ds: TrajectoryDataset, data_path, settings: Optional[dict] = None) -> str:
    """Write the sidecar manifest next to data_path; returns the manifest path."""
    obj = {
        "dataset_id": ds.dataset_id,
        "student_id": ds.student_id,
        "k_ext": ds.k_ext,
        "surprisal_unit": SURPRISAL_UNIT,
        "schema_version": SCHEMA_VERSION,
    }
    if settings:
        obj["extraction"] = settings
    path = manifest_path(data_path)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(obj, f, sort_keys=True, indent=2)
        f.write("\n")
    return path


def read_manifest(data_path) -> Optional[dict]:
    path = manifest_path(data_path)
    if not os.path.exists(path):
        return None
    with open(path, "r", encoding="utf-8") as f:
        obj = json.load(f)
    unit = obj.get("surprisal_unit", SURPRISAL_UNIT)
    if unit != SURPRISAL_UNIT:
        raise SchemaError(
            f"{path}: surprisal unit {unit!r} does not match expected {SURPRISAL_UNIT!r}"
        )
    return obj


def load_dataset(data_path: Union[str, os.PathLike]) -> TrajectoryDataset:
    """Parse a token-stats file, taking ids from its sidecar manifest if present."""
    manifest = read_manifest(data_path)
    dataset_id = student_id = ""
    if manifest is not None:
        dataset_id = str(manifest.get("dataset_id", ""))
        student_id = str(manifest.get("student_id", ""))
    ds = parse_token_stats(data_path, dataset_id=dataset_id, student_id=student_id)
    if manifest is not None and "k_ext" in manifest and manifest["k_ext"] != ds.k_ext:
        raise SchemaError(
            f"manifest k_ext {manifest['k_ext']} does not match file k_ext {ds.k_ext}"
        )
    return ds


def validate_file(data_path: Union[str, os.PathLike], r_max: int) -> ValidationReport:
    """Total streaming validation of a token-stats file.

    Unlike parse_token_stats this never raises on malformed content; every
    problem becomes a line-located violation in the report.
    """
    violations = []
    keys = {}
    k_ext = None
    record_count = token_count = saturated = 0
    try:
        stream, close = _open_text(data_path)
    except OSError as exc:
        return ValidationReport((Violation(str(data_path), str(exc)),), 0, 0, 0)
    try:
        for line_no, line in enumerate(stream, 1):
            try:
                if line.strip() == "":
                    raise SchemaError(f"line {line_no}: blank line")
                record, line_k = parse_record_line(line, line_no)
            except SchemaError as exc:
                msg = str(exc)
                prefix = f"line {line_no}: "
                if msg.startswith(prefix):
                    msg = msg[len(prefix):]
                violations.append(Violation(f"line {line_no}", msg))
                continue
            record_count += 1
            token_count += len(record.tokens)
            saturated += sum(1 for t in record.tokens if t.rank_saturated)
            if k_ext is None:
                k_ext = line_k
            elif line_k != k_ext:
                violations.append(
                    Violation(
                        f"line {line_no}",
                        f"k_ext {line_k} differs from earlier value {k_ext}",
                    )
                )
            if record.key in keys:
                violations.append(
                    Violation(
                        f"line {line_no}",
                        f"duplicate key {record.key}, first on line {keys[record.key]}",
                    )
                )
            else:
                keys[record.key] = line_no
            if not record.tokens:
                violations.append(Violation(f"line {line_no}", "empty token sequence"))
    finally:
        if close:
            stream.close()
    if record_count == 0 and not violations:
        violations.append(Violation(str(data_path), "empty input: no records"))
    if k_ext is not None and r_max > k_ext:
        violations.append(
            Violation(
                str(data_path),
                f"extraction cap below clip threshold (K_ext={k_ext} < r_max={r_max})",
            )
        )
    return ValidationReport(tuple(violations), record_count, token_count, saturated)


__all__ = [
    "SCHEMA_VERSION",
    "SURPRISAL_UNIT",
    "iter_token_stats",
    "parse_token_stats",
    "parse_record_line",
    "record_line",
    "serialize_dataset",
    "load_dataset",
    "write_manifest",
    "read_manifest",
    "manifest_path",
    "validate_file",
    "validate_dataset",
]
