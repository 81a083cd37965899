"""Domain types for trajectory token statistics.

A trajectory is one teacher response to one problem. Each response token
carries its surprisal (negative natural-log probability, nats) and its rank
(1 plus the number of vocabulary candidates with strictly higher probability)
under a fixed student model. Ranks are stored already capped at the
extraction-time limit K_ext, with a saturation flag.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Tuple


class SchemaError(ValueError):
    """Raised for malformed or invariant-violating input data."""


class MetricError(ValueError):
    """Raised when a metric's preconditions do not hold."""


@dataclass(frozen=True)
class TokenStat:
    """Per-token statistics under the student model.

    surprisal and the optional fields are in nats. rank_saturated marks
    tokens whose true rank exceeded the extraction cap; for those, rank
    holds the cap value K_ext.
    """

    surprisal: float
    rank: int
    rank_saturated: bool = False
    local_surprisal: Optional[float] = None
    entropy: Optional[float] = None

    def __post_init__(self):
        if not (self.surprisal >= 0.0):
            raise SchemaError(f"surprisal must be >= 0, got {self.surprisal}")
        if not (isinstance(self.rank, int) and self.rank >= 1):
            raise SchemaError(f"rank must be an integer >= 1, got {self.rank!r}")
        if self.local_surprisal is not None and not (self.local_surprisal >= 0.0):
            raise SchemaError(
                f"local_surprisal must be >= 0, got {self.local_surprisal}"
            )
        if self.entropy is not None and not (self.entropy >= 0.0):
            raise SchemaError(f"entropy must be >= 0, got {self.entropy}")


@dataclass(frozen=True)
class TrajectoryRecord:
    """One (problem, teacher, rollout) trajectory.

    tokens covers response tokens only; prompt tokens are excluded at
    extraction time. text is required only by the rule-based quality
    baseline, correct only by verified accuracy, external_scores carries
    precomputed columns (for example llm_judged_quality).
    """

    problem_id: str
    teacher_id: str
    rollout_id: int
    tokens: Tuple[TokenStat, ...]
    text: Optional[str] = None
    correct: Optional[bool] = None
    external_scores: Optional[Mapping[str, float]] = None

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if isinstance(self.rollout_id, bool) or not isinstance(self.rollout_id, int):
            raise SchemaError(
                f"rollout_id must be an integer, got {self.rollout_id!r}"
            )

    @property
    def key(self) -> Tuple[str, str, int]:
        return (self.problem_id, self.teacher_id, self.rollout_id)


@dataclass(frozen=True)
class TrajectoryDataset:
    """A named collection of trajectories scored under one student model.

    k_ext is the extraction cap shared by every record; any clip threshold
    r_max used later must satisfy r_max <= k_ext.
    """

    dataset_id: str
    student_id: str
    k_ext: int
    records: Tuple[TrajectoryRecord, ...]

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        if not (isinstance(self.k_ext, int) and self.k_ext >= 1):
            raise SchemaError(f"k_ext must be a positive integer, got {self.k_ext!r}")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


@dataclass(frozen=True)
class ScoreTable:
    """Metric values per teacher dataset for one student.

    rows are teacher dataset ids, columns are metric names. provenance maps
    each column to "computed" or "external-fixture".
    """

    student_id: str
    rows: Tuple[str, ...]
    columns: Tuple[str, ...]
    values: Tuple[Tuple[float, ...], ...]
    provenance: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "values", tuple(tuple(r) for r in self.values))
        if len(self.values) != len(self.rows):
            raise SchemaError("value row count does not match row ids")
        for rid, row in zip(self.rows, self.values):
            if len(row) != len(self.columns):
                raise SchemaError(f"row {rid!r} is not rectangular")

    def column(self, name: str) -> Tuple[float, ...]:
        try:
            j = self.columns.index(name)
        except ValueError:
            raise KeyError(f"no metric column {name!r}") from None
        return tuple(row[j] for row in self.values)

    def cell(self, row_id: str, column: str) -> float:
        try:
            i = self.rows.index(row_id)
        except ValueError:
            raise KeyError(f"no row {row_id!r}") from None
        j = self.columns.index(column)
        return self.values[i][j]


@dataclass(frozen=True)
class Violation:
    location: str
    message: str

    def __str__(self) -> str:
        return f"{self.location}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of report-only dataset validation. Never raises."""

    violations: Tuple[Violation, ...]
    record_count: int
    token_count: int
    saturated_count: int

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def saturation_fraction(self) -> float:
        if self.token_count == 0:
            return 0.0
        return self.saturated_count / self.token_count


def validate_dataset(ds: TrajectoryDataset, r_max: int) -> ValidationReport:
    """Report invariant violations of ds against a clip threshold r_max.

    Report-only: collects every violation with a location instead of
    raising. Also counts saturated ranks so callers can report the
    saturation fraction.
    """
    violations = []
    if r_max > ds.k_ext:
        violations.append(
            Violation(
                f"dataset {ds.dataset_id}",
                f"extraction cap below clip threshold (K_ext={ds.k_ext} < r_max={r_max})",
            )
        )
    seen = {}
    token_count = 0
    saturated = 0
    for i, rec in enumerate(ds.records):
        loc = f"record {i} {rec.key}"
        if not rec.tokens:
            violations.append(Violation(loc, "empty token sequence"))
        if rec.key in seen:
            violations.append(
                Violation(loc, f"duplicate key, first seen at record {seen[rec.key]}")
            )
        else:
            seen[rec.key] = i
        for k, t in enumerate(rec.tokens):
            token_count += 1
            if t.rank_saturated:
                saturated += 1
                if t.rank != ds.k_ext:
                    violations.append(
                        Violation(
                            f"{loc} token {k}",
                            f"saturated rank {t.rank} != K_ext {ds.k_ext}",
                        )
                    )
            elif t.rank > ds.k_ext:
                violations.append(
                    Violation(
                        f"{loc} token {k}",
                        f"rank {t.rank} exceeds K_ext {ds.k_ext} without saturation flag",
                    )
                )
    return ValidationReport(
        violations=tuple(violations),
        record_count=len(ds.records),
        token_count=token_count,
        saturated_count=saturated,
    )
