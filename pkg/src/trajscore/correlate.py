"""Rank correlations between metric columns and post-training performance.

Spearman is the Pearson correlation of average-tie ranks; the aggregate
convention follows the source study: average the signed per-student
coefficients across students first, then take the absolute value. Per-student
cells are reported as absolute values.

Shipped under fixtures/ are the per-student metric tables and the
post-training performance table of the published evaluation these analyses
reproduce.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from importlib import resources
from typing import Mapping, Optional, Sequence, Tuple

import numpy as np

from .records import MetricError, ScoreTable

FIXTURE_STUDENTS = (
    "qwen3-14b",
    "llama31-8b",
    "qwen25-7b",
    "qwen3-4b",
    "qwen25-3b",
)


@dataclass(frozen=True)
class PerformanceTable:
    """Post-training score per (teacher dataset, student), percentage points."""

    teachers: Tuple[str, ...]
    students: Tuple[str, ...]
    values: Tuple[Tuple[float, ...], ...]  # rows = teachers

    def __post_init__(self):
        object.__setattr__(self, "teachers", tuple(self.teachers))
        object.__setattr__(self, "students", tuple(self.students))
        object.__setattr__(self, "values", tuple(tuple(r) for r in self.values))
        for t, row in zip(self.teachers, self.values):
            if len(row) != len(self.students):
                raise MetricError(f"performance row {t!r} is not rectangular")

    def column(self, student: str) -> Tuple[float, ...]:
        try:
            j = self.students.index(student)
        except ValueError:
            raise KeyError(f"no student {student!r}") from None
        return tuple(row[j] for row in self.values)


@dataclass(frozen=True)
class CorrelationCell:
    spearman: float
    pearson: float
    n: int


@dataclass(frozen=True)
class CorrelationReport:
    students: Tuple[str, ...]
    metrics: Tuple[str, ...]
    cells: Mapping[Tuple[str, str], CorrelationCell]  # (student, metric)
    # per metric: |mean over students of signed coefficients|
    aggregate_spearman: Mapping[str, float]
    aggregate_pearson: Mapping[str, float]


def average_ranks(values: Sequence[float]) -> np.ndarray:
    """1-based ranks; tied values share the mean of their rank positions."""
    v = np.asarray(values, dtype=float)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(len(v), dtype=float)
    i = 0
    sv = v[order]
    while i < len(v):
        j = i
        while j + 1 < len(v) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _check_pair(xs, ys) -> Tuple[np.ndarray, np.ndarray]:
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise MetricError(f"length mismatch: {x.shape} vs {y.shape}")
    if len(x) < 3:
        raise MetricError(f"need at least 3 points, got {len(x)}")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise MetricError("constant vector has no defined correlation")
    return x, y


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Product-moment correlation (two-pass, normalization cancels)."""
    x, y = _check_pair(xs, ys)
    xc = x - x.mean()
    yc = y - y.mean()
    return float(np.dot(xc, yc) / np.sqrt(np.dot(xc, xc) * np.dot(yc, yc)))


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Pearson correlation of average-tie ranks."""
    x, y = _check_pair(xs, ys)
    return pearson(average_ranks(x), average_ranks(y))


def correlate_table(
    scores: Mapping[str, ScoreTable],
    perf: PerformanceTable,
    metrics: Optional[Sequence[str]] = None,
) -> CorrelationReport:
    """Both coefficients per (student, metric), plus the aggregate columns.

    Every score table's rows must align with the performance table's teacher
    set; metric columns missing from any student's table are an error.
    """
    students = tuple(scores.keys())
    if metrics is None:
        metrics = scores[students[0]].columns
    metrics = tuple(metrics)
    missing = []
    for student, table in scores.items():
        if tuple(table.rows) != tuple(perf.teachers):
            raise MetricError(
                f"score table for {student!r} does not align with the "
                f"performance table's teacher set"
            )
        for m in metrics:
            if m not in table.columns:
                missing.append((student, m))
    if missing:
        raise MetricError(f"missing metric cells: {missing}")
    cells = {}
    for student, table in scores.items():
        y = perf.column(student)
        for m in metrics:
            x = table.column(m)
            cells[(student, m)] = CorrelationCell(
                spearman=spearman(x, y), pearson=pearson(x, y), n=len(x)
            )
    agg_s = {}
    agg_p = {}
    for m in metrics:
        agg_s[m] = abs(float(np.mean([cells[(st, m)].spearman for st in students])))
        agg_p[m] = abs(float(np.mean([cells[(st, m)].pearson for st in students])))
    return CorrelationReport(
        students=students,
        metrics=metrics,
        cells=cells,
        aggregate_spearman=agg_s,
        aggregate_pearson=agg_p,
    )


# ---------------------------------------------------------------------------
# fixture loading


def _fixture_text(name: str) -> str:
    return (resources.files("trajscore") / "fixtures" / name).read_text(encoding="utf-8")


def _read_csv(text: str) -> Tuple[list, list]:
    """(header, rows) of a CSV body, skipping '#' comment lines."""
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    reader = csv.reader(io.StringIO("\n".join(lines)))
    rows = list(reader)
    return rows[0], rows[1:]


def load_fixture_scores(student: str) -> ScoreTable:
    """Shipped per-student metric table (all columns external fixtures)."""
    if student not in FIXTURE_STUDENTS:
        raise KeyError(f"no fixture table for student {student!r}")
    header, rows = _read_csv(_fixture_text(f"scores_{student.replace('-', '_')}.csv"))
    columns = tuple(header[1:])
    teacher_ids = tuple(r[0] for r in rows)
    values = tuple(tuple(float(x) for x in r[1:]) for r in rows)
    return ScoreTable(
        student_id=student,
        rows=teacher_ids,
        columns=columns,
        values=values,
        provenance={c: "external-fixture" for c in columns},
    )


def load_fixture_performance() -> PerformanceTable:
    """Shipped post-training performance table (Acc@4 averages)."""
    header, rows = _read_csv(_fixture_text("performance_acc4.csv"))
    students = tuple(header[1:])
    teachers = tuple(r[0] for r in rows)
    values = tuple(tuple(float(x) for x in r[1:]) for r in rows)
    return PerformanceTable(teachers=teachers, students=students, values=values)


def load_all_fixture_scores() -> Mapping[str, ScoreTable]:
    return {s: load_fixture_scores(s) for s in FIXTURE_STUDENTS}


__all__ = [
    "FIXTURE_STUDENTS",
    "PerformanceTable",
    "CorrelationCell",
    "CorrelationReport",
    "average_ranks",
    "pearson",
    "spearman",
    "correlate_table",
    "load_fixture_scores",
    "load_fixture_performance",
    "load_all_fixture_scores",
]
