"""Teacher-forced extraction of per-token statistics from a causal language model.

Given (prompt, response) pairs and a student model, runs one forward pass per
response under teacher forcing and records, for every response token, its
surprisal under the student and its rank among the student's next-token
candidates.  Output rows follow the token-stats interchange schema consumed by
the trajectory scoring tools: ranks are capped at ``topk`` with a saturation
flag, surprisal is in nats, and records carry the response text so that
text-based quality rules keep working downstream.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import IO, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F
from transformers import AutoModelForCausalLM, AutoTokenizer

SCHEMA_VERSION = "1"
SURPRISAL_UNIT = "nats"

DEFAULT_TOPK = 1000
DEFAULT_WINDOW = 3
DEFAULT_SYSTEM_PROMPT = (
    "Please reason step by step, and put your final answer within \\boxed{}."
)

SENTENCE_MARKS = (".", "!", "?", "\n")

_REQUIRED_PAIR_FIELDS = ("problem_id", "teacher_id", "rollout_id", "prompt", "response")
_OPTIONAL_PAIR_FIELDS = ("correct",)


class ExtractionError(Exception):
    """Raised when an input pair cannot be scored against the model."""


@dataclass(frozen=True)
class PromptResponsePair:
    """One teacher trajectory to score: a problem prompt and a full response."""

    problem_id: str
    teacher_id: str
    rollout_id: int
    prompt: str
    response: str
    correct: Optional[bool] = None

    def __post_init__(self) -> None:
        if not isinstance(self.problem_id, str) or not self.problem_id:
            raise ValueError("problem_id must be a non-empty string")
        if not isinstance(self.teacher_id, str) or not self.teacher_id:
            raise ValueError("teacher_id must be a non-empty string")
        if not isinstance(self.rollout_id, int) or isinstance(self.rollout_id, bool):
            raise ValueError("rollout_id must be an integer")
        if self.rollout_id < 0:
            raise ValueError("rollout_id must be >= 0")
        if not isinstance(self.prompt, str):
            raise ValueError("prompt must be a string")
        if not isinstance(self.response, str) or not self.response:
            raise ValueError("response must be a non-empty string")
        if self.correct is not None and not isinstance(self.correct, bool):
            raise ValueError("correct must be a boolean when present")

    @property
    def key(self) -> str:
        return f"{self.problem_id}/{self.teacher_id}#{self.rollout_id}"


def parse_pairs(source: Union[str, IO[str]]) -> List[PromptResponsePair]:
    """Parse prompt/response pairs from JSONL text or an open text stream.

    Every line must be a JSON object with exactly the fields problem_id,
    teacher_id, rollout_id, prompt, response, and optionally correct.  Unknown
    fields are rejected so that typos do not silently drop data.
    """
    if isinstance(source, str):
        lines = source.splitlines()
    else:
        lines = source.read().splitlines()
    pairs: List[PromptResponsePair] = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"line {lineno}: invalid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise ValueError(f"line {lineno}: expected a JSON object")
        missing = [f for f in _REQUIRED_PAIR_FIELDS if f not in obj]
        if missing:
            raise ValueError(f"line {lineno}: missing fields: {', '.join(missing)}")
        unknown = [
            f
            for f in obj
            if f not in _REQUIRED_PAIR_FIELDS and f not in _OPTIONAL_PAIR_FIELDS
        ]
        if unknown:
            raise ValueError(f"line {lineno}: unknown fields: {', '.join(sorted(unknown))}")
        try:
            pair = PromptResponsePair(
                problem_id=obj["problem_id"],
                teacher_id=obj["teacher_id"],
                rollout_id=obj["rollout_id"],
                prompt=obj["prompt"],
                response=obj["response"],
                correct=obj.get("correct"),
            )
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
        pairs.append(pair)
    if not pairs:
        raise ValueError("no prompt/response pairs found in input")
    return pairs


def read_pairs(path: Union[str, os.PathLike]) -> List[PromptResponsePair]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_pairs(fh)


@dataclass(frozen=True)
class ExtractionConfig:
    """Settings for one extraction run."""

    model_ref: str
    topk: int = DEFAULT_TOPK
    window: int = DEFAULT_WINDOW
    emit_local: bool = False
    emit_entropy: bool = False
    system_prompt: str = DEFAULT_SYSTEM_PROMPT
    max_length: Optional[int] = None

    def __post_init__(self) -> None:
        if not isinstance(self.model_ref, str) or not self.model_ref:
            raise ValueError("model_ref must be a non-empty string")
        if not isinstance(self.topk, int) or isinstance(self.topk, bool) or self.topk < 1:
            raise ValueError("topk must be an integer >= 1")
        if not isinstance(self.window, int) or isinstance(self.window, bool) or self.window < 1:
            raise ValueError("window must be an integer >= 1")
        if self.max_length is not None and (
            not isinstance(self.max_length, int) or self.max_length < 2
        ):
            raise ValueError("max_length must be an integer >= 2 when set")


@dataclass
class StudentModel:
    """A loaded causal LM with its tokenizer and resolved sequence limit."""

    name: str
    tokenizer: object
    model: object
    context_limit: int
    uses_chat_template: bool


def _resolve_context_limit(config: object) -> int:
    for attr in ("max_position_embeddings", "n_positions"):
        value = getattr(config, attr, None)
        if isinstance(value, int) and value > 0:
            return value
    return 0


def load_student(model_ref: str, max_length: Optional[int] = None) -> StudentModel:
    """Load tokenizer and model weights and resolve the usable sequence limit."""
    tokenizer = AutoTokenizer.from_pretrained(model_ref)
    model = AutoModelForCausalLM.from_pretrained(model_ref, dtype=torch.float32)
    model.eval()
    limit = _resolve_context_limit(model.config)
    if max_length is not None:
        limit = min(limit, max_length) if limit else max_length
    if limit <= 0:
        raise ExtractionError(
            f"model {model_ref!r} does not report a sequence limit; pass max_length"
        )
    vocab_size = int(getattr(model.config, "vocab_size", 0))
    if vocab_size <= 0:
        raise ExtractionError(f"model {model_ref!r} does not report a vocabulary size")
    name = os.path.basename(os.path.normpath(model_ref)) or model_ref
    uses_chat = getattr(tokenizer, "chat_template", None) is not None
    return StudentModel(
        name=name,
        tokenizer=tokenizer,
        model=model,
        context_limit=limit,
        uses_chat_template=uses_chat,
    )


def assemble_context(
    tokenizer: object, system_prompt: str, prompt: str
) -> str:
    """Build the conditioning text that precedes the response.

    Uses the tokenizer's chat template when it has one, otherwise joins the
    system prompt and the problem prompt with blank lines.
    """
    if getattr(tokenizer, "chat_template", None) is not None:
        messages = [
            {"role": "system", "content": system_prompt},
            {"role": "user", "content": prompt},
        ]
        return tokenizer.apply_chat_template(
            messages, tokenize=False, add_generation_prompt=True
        )
    return f"{system_prompt}\n\n{prompt}\n\n"


def score_position(
    logits_row: torch.Tensor,
    token_id: int,
    topk: int,
    emit_entropy: bool = False,
) -> dict:
    """Score one realized token against the model's next-token distribution.

    Rank counts candidates with strictly greater logits, so tied logits share
    the best rank of their tie group.  Ranks beyond ``topk`` are reported as
    ``topk`` with the saturation flag set.  Surprisal and entropy come from a
    float32 log-softmax over the full vocabulary.
    """
    if not torch.isfinite(logits_row).all():
        raise ExtractionError("model produced non-finite logits")
    if token_id < 0 or token_id >= logits_row.shape[-1]:
        raise ExtractionError(
            f"token id {token_id} outside model vocabulary of {logits_row.shape[-1]}"
        )
    row = logits_row.float()
    rank_raw = 1 + int((row > row[token_id]).sum().item())
    if rank_raw > topk:
        rank, saturated = topk, True
    else:
        rank, saturated = rank_raw, False
    logp = F.log_softmax(row, dim=-1)
    surprisal = float(-logp[token_id].item())
    if surprisal == 0.0:
        surprisal = 0.0
    entry = {"r": rank, "rs": saturated, "s": surprisal}
    if emit_entropy:
        probs = logp.exp()
        entropy = float(-(probs * logp).sum().item())
        if entropy < 0.0:
            entropy = 0.0
        entry["h"] = entropy
    return entry


def _sentence_boundaries(tokenizer: object, ids: Sequence[int]) -> List[int]:
    """Indices of tokens whose decoded text contains a sentence-ending mark."""
    boundaries: List[int] = []
    for idx, tid in enumerate(ids):
        piece = tokenizer.decode([tid])
        if any(mark in piece for mark in SENTENCE_MARKS):
            boundaries.append(idx)
    return boundaries


def _forward_logits(model: object, ids: Sequence[int]) -> torch.Tensor:
    input_ids = torch.tensor([list(ids)], dtype=torch.long)
    with torch.no_grad():
        out = model(input_ids)
    return out.logits[0]


def token_stats_for_pair(
    student: StudentModel, cfg: ExtractionConfig, pair: PromptResponsePair
) -> List[dict]:
    """Compute the per-token stats for one pair, in response order.

    One teacher-forced pass over context+response yields rank, saturation,
    and surprisal for every response token.  When local surprisal is enabled,
    each response token also gets surprisal conditioned only on the trailing
    ``window`` sentences, computed from separate truncated-context passes.
    """
    tokenizer = student.tokenizer
    ctx_text = assemble_context(tokenizer, cfg.system_prompt, pair.prompt)
    ctx_ids = tokenizer.encode(ctx_text, add_special_tokens=False)
    resp_ids = tokenizer.encode(pair.response, add_special_tokens=False)
    if not ctx_ids:
        raise ExtractionError(f"record {pair.key}: context tokenized to zero tokens")
    if not resp_ids:
        raise ExtractionError(f"record {pair.key}: response tokenized to zero tokens")
    total = len(ctx_ids) + len(resp_ids)
    if total > student.context_limit:
        raise ExtractionError(
            f"record {pair.key}: context+response is {total} tokens, "
            f"over the model limit of {student.context_limit}; "
            "refusing to truncate"
        )
    vocab_size = int(student.model.config.vocab_size)
    for tid in list(ctx_ids) + list(resp_ids):
        if tid >= vocab_size:
            raise ExtractionError(
                f"record {pair.key}: token id {tid} outside model vocabulary "
                f"of {vocab_size}; tokenizer/model mismatch"
            )

    all_ids = list(ctx_ids) + list(resp_ids)
    logits = _forward_logits(student.model, all_ids)
    if not torch.isfinite(logits).all():
        raise ExtractionError(f"record {pair.key}: model produced non-finite logits")

    entries: List[dict] = []
    base = len(ctx_ids)
    for offset, tid in enumerate(resp_ids):
        row = logits[base + offset - 1]
        try:
            entries.append(score_position(row, tid, cfg.topk, cfg.emit_entropy))
        except ExtractionError as exc:
            raise ExtractionError(f"record {pair.key}: {exc}") from exc

    if cfg.emit_local:
        _add_local_surprisal(student, cfg, pair, all_ids, base, resp_ids, entries)
    return entries


def _add_local_surprisal(
    student: StudentModel,
    cfg: ExtractionConfig,
    pair: PromptResponsePair,
    all_ids: Sequence[int],
    base: int,
    resp_ids: Sequence[int],
    entries: List[dict],
) -> None:
    """Fill the ``ls`` field: surprisal under a trailing-sentence context.

    For a response token at absolute position g, the context is truncated to
    start just after the ``window``-th sentence boundary before g (or at the
    sequence start when fewer boundaries exist), always keeping at least the
    immediately preceding token.  Tokens sharing a truncation start share one
    forward pass.
    """
    boundaries = _sentence_boundaries(student.tokenizer, all_ids)
    starts: List[int] = []
    for offset in range(len(resp_ids)):
        g = base + offset
        before = [b for b in boundaries if b < g]
        if len(before) >= cfg.window:
            start = before[-cfg.window] + 1
        else:
            start = 0
        starts.append(min(start, g - 1))

    by_start: dict = {}
    for offset, start in enumerate(starts):
        by_start.setdefault(start, []).append(offset)
    for start, offsets in sorted(by_start.items()):
        end = base + offsets[-1]
        local_logits = _forward_logits(student.model, all_ids[start : end + 1])
        if not torch.isfinite(local_logits).all():
            raise ExtractionError(
                f"record {pair.key}: model produced non-finite logits "
                "in a local window pass"
            )
        for offset in offsets:
            g = base + offset
            row = local_logits[g - start - 1].float()
            logp = F.log_softmax(row, dim=-1)
            local = float(-logp[resp_ids[offset]].item())
            if local == 0.0:
                local = 0.0
            entries[offset]["ls"] = local


def select_sample(
    pairs: Sequence[PromptResponsePair], n: int, seed: int
) -> List[PromptResponsePair]:
    """Pick n pairs without replacement, keeping input order; n=0 keeps all."""
    if n < 0:
        raise ValueError("sample size must be >= 0")
    if n == 0 or n >= len(pairs):
        return list(pairs)
    rng = np.random.default_rng(seed)
    chosen = sorted(rng.choice(len(pairs), size=n, replace=False).tolist())
    return [pairs[i] for i in chosen]


def _canonical(obj: object) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def record_object(pair: PromptResponsePair, tokens: List[dict], topk: int) -> dict:
    """Assemble one output record in the token-stats interchange schema."""
    record = {
        "schema_version": SCHEMA_VERSION,
        "problem_id": pair.problem_id,
        "teacher_id": pair.teacher_id,
        "rollout_id": pair.rollout_id,
        "k_ext": topk,
        "tokens": tokens,
        "text": pair.response,
    }
    if pair.correct is not None:
        record["correct"] = pair.correct
    return record


def extract_records(
    student: StudentModel,
    cfg: ExtractionConfig,
    pairs: Sequence[PromptResponsePair],
) -> List[dict]:
    """Score every pair and return output records in input order."""
    return [
        record_object(pair, token_stats_for_pair(student, cfg, pair), cfg.topk)
        for pair in pairs
    ]


def write_records(path: Union[str, os.PathLike], records: Sequence[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(_canonical(record))
            fh.write("\n")


def manifest_object(
    dataset_id: str,
    student_id: str,
    student: StudentModel,
    cfg: ExtractionConfig,
    sample_info: Optional[dict] = None,
) -> dict:
    """Sidecar metadata describing the run: ids, units, and settings."""
    extraction = {
        "model": student.name,
        "template": "chat" if student.uses_chat_template else "plain",
        "topk": cfg.topk,
        "local_surprisal": cfg.emit_local,
        "window": cfg.window if cfg.emit_local else None,
        "entropy": cfg.emit_entropy,
        "system_prompt": cfg.system_prompt,
        "max_length": student.context_limit,
    }
    if sample_info is not None:
        extraction["sample"] = sample_info
    return {
        "dataset_id": dataset_id,
        "student_id": student_id,
        "k_ext": cfg.topk,
        "surprisal_unit": SURPRISAL_UNIT,
        "schema_version": SCHEMA_VERSION,
        "extraction": extraction,
    }


def write_manifest(path: Union[str, os.PathLike], manifest: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")


def manifest_path_for(out_path: Union[str, os.PathLike]) -> str:
    return os.fspath(out_path) + ".manifest.json"
