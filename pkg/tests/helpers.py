"""Shared builders for test datasets."""

import numpy as np

from trajscore.records import TokenStat, TrajectoryDataset, TrajectoryRecord


def token(surprisal, rank, saturated=False, ls=None, entropy=None):
    return TokenStat(
        surprisal=surprisal,
        rank=rank,
        rank_saturated=saturated,
        local_surprisal=ls,
        entropy=entropy,
    )


def record(pairs, problem="p0", teacher="t0", rollout=0, text=None,
           correct=None, scores=None):
    """pairs: iterable of (rank, surprisal) or TokenStat."""
    toks = tuple(
        t if isinstance(t, TokenStat) else token(surprisal=t[1], rank=t[0])
        for t in pairs
    )
    return TrajectoryRecord(
        problem_id=problem,
        teacher_id=teacher,
        rollout_id=rollout,
        tokens=toks,
        text=text,
        correct=correct,
        external_scores=scores,
    )


def dataset(records, dataset_id="ds", student_id="stu", k_ext=100000):
    return TrajectoryDataset(
        dataset_id=dataset_id,
        student_id=student_id,
        k_ext=k_ext,
        records=tuple(records),
    )


def random_record(rng, n_tokens=None, max_len=50, max_rank=10000,
                  problem="p0", teacher="t0", rollout=0):
    """Random trajectory with ranks in [1, max_rank], surprisals in
    [1e-6, 20]."""
    if n_tokens is None:
        n_tokens = int(rng.integers(1, max_len + 1))
    ranks = rng.integers(1, max_rank + 1, size=n_tokens)
    surps = rng.uniform(1e-6, 20.0, size=n_tokens)
    toks = tuple(
        token(surprisal=float(s), rank=int(r)) for r, s in zip(ranks, surps)
    )
    return TrajectoryRecord(
        problem_id=problem, teacher_id=teacher, rollout_id=rollout, tokens=toks
    )


def random_dataset(rng, n_records=10, **kw):
    return dataset(
        [
            random_record(rng, problem=f"p{i}", teacher=f"t{i % 3}", **kw)
            for i in range(n_records)
        ]
    )


def weighted_mean(values, weights):
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    return float(np.sum(values * weights) / np.sum(weights))
