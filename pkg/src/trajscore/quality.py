"""Student-agnostic quality baselines computed from trajectory text and labels.

Rule-based quality scores four criteria per trajectory (word count plus
three keyword densities), z-scores each criterion over the dataset, and
combines them with fixed weights. Token length and verified accuracy are
the other text/label baselines. Gradient- and judge-based scores are never
computed here; they arrive as external columns.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Tuple

import numpy as np

from .records import MetricError, TrajectoryDataset

_WORD_RE = re.compile(r"[a-z0-9]+")

DEFAULT_WEIGHTS = {
    "elaborated": 0.30,
    "verification": 0.20,
    "exploratory": 0.25,
    "adaptive": 0.25,
}
DEFAULT_KEYWORDS = {
    "verification": frozenset({"check", "verify"}),
    "exploratory": frozenset({"perhaps", "might"}),
    "adaptive": frozenset({"therefore", "since"}),
}
CRITERIA = ("elaborated", "verification", "exploratory", "adaptive")


@dataclass(frozen=True)
class RuleQualityConfig:
    weights: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))
    keywords: Mapping[str, frozenset] = field(default_factory=lambda: dict(DEFAULT_KEYWORDS))

    def __post_init__(self):
        if set(self.weights) != set(CRITERIA):
            raise MetricError(f"weights must cover exactly {CRITERIA}")
        total = sum(self.weights.values())
        if abs(total - 1.0) > 1e-9:
            raise MetricError(f"criterion weights must sum to 1.0, got {total}")
        if set(self.keywords) != set(CRITERIA) - {"elaborated"}:
            raise MetricError("keyword sets must cover the three keyword criteria")


@dataclass(frozen=True)
class CriterionScores:
    """Raw values, z-scores, and weighted composite for one trajectory."""

    key: Tuple[str, str, int]
    raw: Mapping[str, float]
    z: Mapping[str, float]
    composite: float


def words(text: str) -> list:
    """Lowercased words: maximal alphanumeric runs."""
    return _WORD_RE.findall(text.lower())


def _raw_criteria(text: str, cfg: RuleQualityConfig, loc: str) -> dict:
    toks = words(text)
    n = len(toks)
    if n == 0:
        warnings.warn(f"{loc}: empty text, raw criterion values set to 0")
        return {c: 0.0 for c in CRITERIA}
    raw = {"elaborated": float(n)}
    for criterion, keyset in cfg.keywords.items():
        hits = sum(1 for w in toks if w in keyset)
        raw[criterion] = hits / n
    return raw


def rule_based_quality(
    ds: TrajectoryDataset, cfg: RuleQualityConfig = RuleQualityConfig()
) -> Tuple[CriterionScores, ...]:
    """Per-record criterion scores with dataset z-scoring.

    Raw values: elaborated = word count; each keyword criterion = whole-word
    match count over word count. z-scores use the population standard
    deviation; a degenerate criterion (zero spread) z-scores to 0.
    """
    if not ds.records:
        raise MetricError(f"dataset {ds.dataset_id} is empty")
    for i, rec in enumerate(ds.records):
        if rec.text is None:
            raise MetricError(f"record {i} {rec.key}: text missing")
    raws = [
        _raw_criteria(rec.text, cfg, f"record {i} {rec.key}")
        for i, rec in enumerate(ds.records)
    ]
    zs = {}
    for criterion in CRITERIA:
        col = np.array([r[criterion] for r in raws], dtype=float)
        std = float(np.std(col))  # population std
        if std == 0.0:
            zs[criterion] = np.zeros(len(col))
        else:
            zs[criterion] = (col - float(np.mean(col))) / std
    out = []
    for i, rec in enumerate(ds.records):
        z = {c: float(zs[c][i]) for c in CRITERIA}
        composite = sum(cfg.weights[c] * z[c] for c in CRITERIA)
        out.append(CriterionScores(key=rec.key, raw=raws[i], z=z, composite=composite))
    return tuple(out)


def rule_based_quality_values(
    ds: TrajectoryDataset, cfg: RuleQualityConfig = RuleQualityConfig()
) -> Tuple[float, ...]:
    """Composite values only, aligned with ds.records."""
    return tuple(s.composite for s in rule_based_quality(ds, cfg))


def avg_token_length(ds: TrajectoryDataset) -> float:
    """Mean token count per record."""
    if not ds.records:
        raise MetricError(f"dataset {ds.dataset_id} is empty")
    return float(np.mean([len(rec.tokens) for rec in ds.records]))


def verified_accuracy(ds: TrajectoryDataset) -> float:
    """Fraction of records whose verifier label is true."""
    if not ds.records:
        raise MetricError(f"dataset {ds.dataset_id} is empty")
    missing = [str(rec.key) for rec in ds.records if rec.correct is None]
    if missing:
        raise MetricError(
            f"dataset {ds.dataset_id}: correctness label missing on {', '.join(missing)}"
        )
    return sum(1 for rec in ds.records if rec.correct) / len(ds.records)


def attach_external_scores(ds: TrajectoryDataset, column: str) -> Tuple[float, ...]:
    """Surface a precomputed per-record score column; provenance is external."""
    values = []
    missing = []
    for rec in ds.records:
        scores = rec.external_scores or {}
        if column not in scores:
            missing.append(str(rec.key))
        else:
            values.append(float(scores[column]))
    if missing:
        raise MetricError(
            f"dataset {ds.dataset_id}: external column {column!r} missing on "
            f"{', '.join(missing)}"
        )
    return tuple(values)


__all__ = [
    "RuleQualityConfig",
    "CriterionScores",
    "CRITERIA",
    "words",
    "rule_based_quality",
    "rule_based_quality_values",
    "avg_token_length",
    "verified_accuracy",
    "attach_external_scores",
]
