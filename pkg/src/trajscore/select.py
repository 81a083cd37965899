"""Trajectory and teacher selection by metric extremization.

Per-problem selection picks one trajectory out of each candidate pool (the
paper setting is 33 candidates: 11 teachers x 3 rollouts); teacher ranking
orders whole datasets by a dataset-level score, usually computed on a small
seeded subsample. Ties always break lexicographically so manifests are
reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence, Tuple

import numpy as np

from .records import MetricError, TrajectoryDataset, TrajectoryRecord

Metric = Callable[[TrajectoryRecord], float]


@dataclass(frozen=True)
class CandidatePool:
    problem_id: str
    candidates: Tuple[TrajectoryRecord, ...]

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if not self.candidates:
            raise MetricError(f"pool {self.problem_id!r} is empty")
        for c in self.candidates:
            if c.problem_id != self.problem_id:
                raise MetricError(
                    f"pool {self.problem_id!r} contains candidate for {c.problem_id!r}"
                )


@dataclass(frozen=True)
class Choice:
    problem_id: str
    teacher_id: str
    rollout_id: int
    value: float


@dataclass(frozen=True)
class SelectionManifest:
    metric_name: str
    direction: str
    params: Mapping[str, object]
    choices: Tuple[Choice, ...]
    composition: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        seen = set()
        for c in self.choices:
            if c.problem_id in seen:
                raise MetricError(f"multiple choices for problem {c.problem_id!r}")
            seen.add(c.problem_id)


def _composition(choices: Sequence[Choice]) -> dict:
    counts = {}
    for c in choices:
        counts[c.teacher_id] = counts.get(c.teacher_id, 0) + 1
    total = len(choices)
    return {t: 100.0 * n / total for t, n in sorted(counts.items())}


def _best(
    candidates: Sequence[TrajectoryRecord],
    values: Sequence[float],
    direction: str,
) -> Tuple[TrajectoryRecord, float]:
    sign = 1.0 if direction == "min" else -1.0
    best_key = None
    best = None
    for cand, value in zip(candidates, values):
        key = (sign * value, cand.teacher_id, cand.rollout_id)
        if best_key is None or key < best_key:
            best_key = key
            best = (cand, value)
    return best


def _check_direction(direction: str) -> None:
    if direction not in ("min", "max"):
        raise MetricError(f"direction must be 'min' or 'max', got {direction!r}")


def _pool_values(pool: CandidatePool, metric: Metric) -> list:
    try:
        return [metric(c) for c in pool.candidates]
    except MetricError as exc:
        raise MetricError(f"pool {pool.problem_id!r}: {exc}") from None


def select_trajectories(
    pools: Sequence[CandidatePool],
    metric: Metric,
    direction: str = "min",
    metric_name: str = "",
    params: Optional[Mapping[str, object]] = None,
    pool_values: Optional[Sequence[Sequence[float]]] = None,
) -> SelectionManifest:
    """One extremizing candidate per pool; metric ties break by
    (teacher_id, rollout_id). pool_values may carry precomputed metric values
    aligned with each pool's candidates."""
    _check_direction(direction)
    choices = []
    for i, pool in enumerate(pools):
        values = pool_values[i] if pool_values is not None else _pool_values(pool, metric)
        cand, value = _best(pool.candidates, values, direction)
        choices.append(Choice(pool.problem_id, cand.teacher_id, cand.rollout_id, value))
    return SelectionManifest(
        metric_name=metric_name,
        direction=direction,
        params=dict(params or {}),
        choices=tuple(choices),
        composition=_composition(choices),
    )


def correctness_filtered_select(
    pools: Sequence[CandidatePool],
    metric: Metric,
    direction: str = "min",
    metric_name: str = "",
    params: Optional[Mapping[str, object]] = None,
) -> SelectionManifest:
    """Like select_trajectories but restricted to verified-correct candidates
    whenever a pool has any; pools without correct candidates (or without
    labels) fall back to the plain rule."""
    _check_direction(direction)
    choices = []
    for pool in pools:
        correct = [c for c in pool.candidates if c.correct is True]
        eligible = correct if correct else list(pool.candidates)
        values = _pool_values(CandidatePool(pool.problem_id, tuple(eligible)), metric)
        cand, value = _best(eligible, values, direction)
        choices.append(Choice(pool.problem_id, cand.teacher_id, cand.rollout_id, value))
    return SelectionManifest(
        metric_name=metric_name,
        direction=direction,
        params=dict(params or {}),
        choices=tuple(choices),
        composition=_composition(choices),
    )


def sample_for_teacher(ds: TrajectoryDataset, n: int, seed: int) -> TrajectoryDataset:
    """Uniform sample of n records without replacement, order-stable."""
    if n > len(ds.records):
        raise MetricError(
            f"sample size {n} exceeds dataset size {len(ds.records)}"
        )
    rng = np.random.default_rng(seed)
    idx = sorted(rng.choice(len(ds.records), size=n, replace=False).tolist())
    return TrajectoryDataset(
        dataset_id=f"{ds.dataset_id}#sample{n}",
        student_id=ds.student_id,
        k_ext=ds.k_ext,
        records=tuple(ds.records[i] for i in idx),
    )


@dataclass(frozen=True)
class RankedTeacher:
    teacher_id: str
    score: float
    position: int  # 1-based

    @property
    def top1(self) -> bool:
        return self.position == 1

    @property
    def top2(self) -> bool:
        return self.position == 2


def rank_teacher_scores(
    scores: Mapping[str, float], direction: str = "min"
) -> Tuple[RankedTeacher, ...]:
    """Teachers sorted by score in the preferred direction, ties by id."""
    _check_direction(direction)
    if not scores:
        raise MetricError("no teachers to rank")
    sign = 1.0 if direction == "min" else -1.0
    ordered = sorted(scores.items(), key=lambda kv: (sign * kv[1], kv[0]))
    return tuple(
        RankedTeacher(teacher_id=t, score=v, position=i)
        for i, (t, v) in enumerate(ordered, 1)
    )


def rank_teachers(
    datasets: Mapping[str, TrajectoryDataset],
    dataset_metric: Callable[[TrajectoryDataset], float],
    direction: str = "min",
) -> Tuple[RankedTeacher, ...]:
    """Rank teachers by a dataset-level metric computed on their datasets."""
    scores = {}
    for teacher_id, ds in datasets.items():
        try:
            scores[teacher_id] = dataset_metric(ds)
        except MetricError as exc:
            raise MetricError(f"teacher {teacher_id!r}: {exc}") from None
    return rank_teacher_scores(scores, direction)


__all__ = [
    "CandidatePool",
    "Choice",
    "SelectionManifest",
    "RankedTeacher",
    "select_trajectories",
    "correctness_filtered_select",
    "sample_for_teacher",
    "rank_teacher_scores",
    "rank_teachers",
]
