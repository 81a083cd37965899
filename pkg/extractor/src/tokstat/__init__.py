"""Teacher-forced per-token surprisal and rank extraction from causal LMs."""

from .extract import (
    DEFAULT_SYSTEM_PROMPT,
    DEFAULT_TOPK,
    DEFAULT_WINDOW,
    SCHEMA_VERSION,
    SENTENCE_MARKS,
    SURPRISAL_UNIT,
    ExtractionConfig,
    ExtractionError,
    PromptResponsePair,
    StudentModel,
    assemble_context,
    extract_records,
    load_student,
    manifest_object,
    manifest_path_for,
    parse_pairs,
    read_pairs,
    record_object,
    score_position,
    select_sample,
    token_stats_for_pair,
    write_manifest,
    write_records,
)

__version__ = "1.0.0"

__all__ = [
    "DEFAULT_SYSTEM_PROMPT",
    "DEFAULT_TOPK",
    "DEFAULT_WINDOW",
    "SCHEMA_VERSION",
    "SENTENCE_MARKS",
    "SURPRISAL_UNIT",
    "ExtractionConfig",
    "ExtractionError",
    "PromptResponsePair",
    "StudentModel",
    "assemble_context",
    "extract_records",
    "load_student",
    "manifest_object",
    "manifest_path_for",
    "parse_pairs",
    "read_pairs",
    "record_object",
    "score_position",
    "select_sample",
    "token_stats_for_pair",
    "write_manifest",
    "write_records",
    "__version__",
]
