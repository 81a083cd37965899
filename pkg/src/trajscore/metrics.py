"""Token-, trajectory-, and dataset-level suitability metrics.

The core quantity is the rank-surprisal ratio (RSR) of a trajectory: the sum
of clipped token ranks over the sum of token surprisals. Lower means the
trajectory sits closer to what the student model already finds plausible.
All functions are pure; summation order is fixed (record order, then token
order) so results are bit-reproducible regardless of caller parallelism.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Union

import numpy as np

from .records import MetricError, TokenStat, TrajectoryDataset, TrajectoryRecord

EPSILON = 1e-12
DEFAULT_R_MAX = 100
DEFAULT_FILTER_H = 30.0
DEFAULT_POWER_RANK = 1.05
DEFAULT_POWER_SURPRISAL = 1.0


@dataclass(frozen=True)
class ClipThreshold:
    """Rank clip threshold; ranks above r_max count as r_max."""

    r_max: int = DEFAULT_R_MAX

    def __post_init__(self):
        if not (isinstance(self.r_max, int) and self.r_max >= 1):
            raise MetricError(f"r_max must be a positive integer, got {self.r_max!r}")


@dataclass(frozen=True)
class MetricValue:
    name: str
    value: float
    params: Mapping[str, object] = field(default_factory=dict)


Clip = Union[int, ClipThreshold, None]


def _r_max(clip: Clip) -> Optional[int]:
    if clip is None:
        return None
    if isinstance(clip, ClipThreshold):
        return clip.r_max
    return ClipThreshold(clip).r_max


def _surprisals(traj: TrajectoryRecord) -> np.ndarray:
    if not traj.tokens:
        raise MetricError(f"trajectory {traj.key} has no tokens")
    return np.fromiter((t.surprisal for t in traj.tokens), dtype=float, count=len(traj.tokens))


def _ranks(traj: TrajectoryRecord, clip: Clip) -> np.ndarray:
    """Rank vector under the clipping policy.

    With a threshold, a saturated rank strictly below r_max proves the
    extraction cap was smaller than the clip threshold, so the clipped value
    would be wrong. Without a threshold, saturated ranks are lower bounds
    and any of them poisons an unclipped mean.
    """
    if not traj.tokens:
        raise MetricError(f"trajectory {traj.key} has no tokens")
    r_max = _r_max(clip)
    if r_max is None:
        n_sat = sum(1 for t in traj.tokens if t.rank_saturated)
        if n_sat:
            raise MetricError(
                f"trajectory {traj.key}: unclipped ranks requested on saturated data "
                f"(saturation fraction {n_sat / len(traj.tokens):.4f})"
            )
        return np.fromiter((t.rank for t in traj.tokens), dtype=float, count=len(traj.tokens))
    for k, t in enumerate(traj.tokens):
        if t.rank_saturated and t.rank < r_max:
            raise MetricError(
                f"trajectory {traj.key} token {k}: extraction cap below clip "
                f"threshold (saturated at {t.rank} < r_max={r_max})"
            )
    return np.fromiter(
        (min(t.rank, r_max) for t in traj.tokens), dtype=float, count=len(traj.tokens)
    )


def token_rsr(t: TokenStat) -> float:
    """Rank over surprisal for one token (unclipped rank)."""
    if t.surprisal <= EPSILON:
        raise MetricError(
            f"unbounded token ratio: surprisal {t.surprisal} <= {EPSILON}"
        )
    return t.rank / t.surprisal


def clip_rank(rank: int, clip: Clip = DEFAULT_R_MAX) -> int:
    r_max = _r_max(clip)
    if r_max is None:
        return rank
    return min(rank, r_max)


def trajectory_rsr(traj: TrajectoryRecord, clip: Clip = DEFAULT_R_MAX) -> float:
    """Sum of clipped ranks over sum of surprisals. Pass clip=None to disable
    clipping (then the data must have no saturated ranks)."""
    s = _surprisals(traj)
    r = _ranks(traj, clip)
    total_s = float(np.sum(s))
    if total_s <= EPSILON:
        raise MetricError(f"trajectory {traj.key}: total surprisal {total_s} <= {EPSILON}")
    return float(np.sum(r)) / total_s


def avg_surprisal(traj: TrajectoryRecord) -> float:
    return float(np.mean(_surprisals(traj)))


def avg_local_surprisal(traj: TrajectoryRecord) -> float:
    """Mean of the precomputed local-context surprisal field."""
    if not traj.tokens:
        raise MetricError(f"trajectory {traj.key} has no tokens")
    for k, t in enumerate(traj.tokens):
        if t.local_surprisal is None:
            raise MetricError(
                f"trajectory {traj.key}: local surprisal unavailable on token {k}"
            )
    return float(np.mean([t.local_surprisal for t in traj.tokens]))


def avg_rank(traj: TrajectoryRecord, clip: Clip = None) -> float:
    """Mean rank; clipped when a threshold is given, raw otherwise."""
    return float(np.mean(_ranks(traj, clip)))


def avg_token_rsr(traj: TrajectoryRecord) -> float:
    """Unweighted mean of per-token rank/surprisal ratios (unclipped ranks)."""
    r = _ranks(traj, None)
    s = _surprisals(traj)
    if np.any(s <= EPSILON):
        k = int(np.argmax(s <= EPSILON))
        raise MetricError(
            f"trajectory {traj.key} token {k}: unbounded token ratio "
            f"(surprisal {s[k]} <= {EPSILON})"
        )
    return float(np.mean(r / s))


def _filtered_indices(s: np.ndarray, h: float) -> np.ndarray:
    if not (0.0 < h <= 100.0):
        raise MetricError(f"filter percentage must be in (0, 100], got {h}")
    count = math.ceil((h * len(s)) / 100.0)
    # stable sort on negated surprisal keeps earlier indices first on ties
    order = np.argsort(-s, kind="stable")
    return order[:count]


def filtered_avg_token_rsr(
    traj: TrajectoryRecord, h: float = DEFAULT_FILTER_H, clip: Clip = DEFAULT_R_MAX
) -> float:
    """Mean clipped-rank/surprisal ratio over the top h% highest-surprisal tokens.

    Subset size is ceil(h% of T); surprisal ties are broken toward earlier
    token index.
    """
    s = _surprisals(traj)
    r = _ranks(traj, clip)
    idx = _filtered_indices(s, h)
    sel = s[idx]
    if np.any(sel <= EPSILON):
        raise MetricError(
            f"trajectory {traj.key}: filtered subset contains a zero-surprisal token"
        )
    return float(np.mean(r[idx] / sel))


def weighted_avg_token_rsr(traj: TrajectoryRecord, clip: Clip = DEFAULT_R_MAX) -> float:
    """Surprisal-weighted mean of clipped token ratios.

    Algebraically identical to trajectory_rsr; kept as a separate computation
    so the identity is testable.
    """
    s = _surprisals(traj)
    r = _ranks(traj, clip)
    total_s = float(np.sum(s))
    if total_s <= EPSILON:
        raise MetricError(f"trajectory {traj.key}: total surprisal {total_s} <= {EPSILON}")
    return float(np.sum(s * (r / s))) / total_s


def variant_rank_minus_surprisal(traj: TrajectoryRecord, clip: Clip = DEFAULT_R_MAX) -> float:
    """Mean over tokens of (clipped rank - surprisal)."""
    s = _surprisals(traj)
    r = _ranks(traj, clip)
    return float(np.mean(r - s))


def variant_rank_entropy_ratio(traj: TrajectoryRecord, clip: Clip = DEFAULT_R_MAX) -> float:
    """Mean clipped rank over mean next-token entropy."""
    r = _ranks(traj, clip)
    for k, t in enumerate(traj.tokens):
        if t.entropy is None:
            raise MetricError(f"trajectory {traj.key}: entropy missing on token {k}")
    h = np.array([t.entropy for t in traj.tokens], dtype=float)
    total_h = float(np.sum(h))
    if total_h <= EPSILON:
        raise MetricError(f"trajectory {traj.key}: total entropy {total_h} <= {EPSILON}")
    return float(np.mean(r)) / float(np.mean(h))


def variant_power_rsr(
    traj: TrajectoryRecord,
    clip: Clip = DEFAULT_R_MAX,
    p_rank: float = DEFAULT_POWER_RANK,
    p_surp: float = DEFAULT_POWER_SURPRISAL,
) -> float:
    """Sum of clipped ranks^p_rank over sum of surprisals^p_surp."""
    s = _surprisals(traj)
    r = _ranks(traj, clip)
    denom = float(np.sum(s**p_surp))
    if denom <= EPSILON:
        raise MetricError(
            f"trajectory {traj.key}: total surprisal^{p_surp} {denom} <= {EPSILON}"
        )
    return float(np.sum(r**p_rank)) / denom


def _check_dataset_clip(ds: TrajectoryDataset, clip: Clip) -> None:
    r_max = _r_max(clip)
    if r_max is not None and r_max > ds.k_ext:
        raise MetricError(
            f"extraction cap below clip threshold (K_ext={ds.k_ext} < r_max={r_max})"
        )


def dataset_rsr(ds: TrajectoryDataset, clip: Clip = DEFAULT_R_MAX) -> float:
    """Dataset-level RSR: sum over trajectories of mean clipped rank, over the
    same sum of mean surprisal. Equals the mean-surprisal-weighted mean of the
    per-trajectory RSR values."""
    if not ds.records:
        raise MetricError(f"dataset {ds.dataset_id} is empty")
    _check_dataset_clip(ds, clip)
    num = 0.0
    den = 0.0
    for traj in ds.records:
        s = _surprisals(traj)
        mean_s = float(np.mean(s))
        if mean_s <= EPSILON:
            raise MetricError(
                f"trajectory {traj.key}: total surprisal {mean_s * len(s)} <= {EPSILON}"
            )
        num += float(np.mean(_ranks(traj, clip)))
        den += mean_s
    return num / den


def dataset_simple_mean(
    ds: TrajectoryDataset, metric: Callable[..., float], **params
) -> float:
    """Unweighted mean of a trajectory-level metric over the dataset."""
    if not ds.records:
        raise MetricError(f"dataset {ds.dataset_id} is empty")
    if "clip" in params:
        _check_dataset_clip(ds, params["clip"])
    values = [metric(traj, **params) for traj in ds.records]
    return float(np.mean(values))


# registry used by the CLI and the selection engine; every entry takes a
# trajectory and keyword params and returns a float
TRAJECTORY_METRICS: Mapping[str, Callable[..., float]] = {
    "rsr": trajectory_rsr,
    "avg_surprisal": avg_surprisal,
    "avg_local_surprisal": avg_local_surprisal,
    "avg_rank": avg_rank,
    "avg_rank_clipped": lambda traj, clip=DEFAULT_R_MAX: avg_rank(traj, clip),
    "avg_token_rsr": avg_token_rsr,
    "filtered_avg_token_rsr": filtered_avg_token_rsr,
    "weighted_avg_token_rsr": weighted_avg_token_rsr,
    "rank_minus_surprisal": variant_rank_minus_surprisal,
    "rank_entropy_ratio": variant_rank_entropy_ratio,
    "power_rsr": variant_power_rsr,
    "token_length": lambda traj: float(len(traj.tokens)),
}

# which keyword params each registry metric accepts
_METRIC_PARAMS = {
    "rsr": ("clip",),
    "avg_surprisal": (),
    "avg_local_surprisal": (),
    "avg_rank": (),
    "avg_rank_clipped": ("clip",),
    "avg_token_rsr": (),
    "filtered_avg_token_rsr": ("h", "clip"),
    "weighted_avg_token_rsr": ("clip",),
    "rank_minus_surprisal": ("clip",),
    "rank_entropy_ratio": ("clip",),
    "power_rsr": ("clip", "p_rank", "p_surp"),
    "token_length": (),
}


def metric_params(name: str, r_max: int = DEFAULT_R_MAX, h: float = DEFAULT_FILTER_H,
                  p_rank: float = DEFAULT_POWER_RANK,
                  p_surp: float = DEFAULT_POWER_SURPRISAL) -> dict:
    """Keyword params for a registry metric, restricted to what it accepts."""
    if name not in TRAJECTORY_METRICS:
        raise MetricError(f"unknown metric {name!r}")
    pool = {"clip": r_max, "h": h, "p_rank": p_rank, "p_surp": p_surp}
    return {k: pool[k] for k in _METRIC_PARAMS[name]}


def trajectory_metric(name: str, **params) -> Callable[[TrajectoryRecord], float]:
    """Bind a registry metric name and params into a single-argument callable."""
    if name not in TRAJECTORY_METRICS:
        raise MetricError(f"unknown metric {name!r}")
    fn = TRAJECTORY_METRICS[name]
    return lambda traj: fn(traj, **params)


def dataset_metric_value(ds: TrajectoryDataset, name: str, **params) -> float:
    """Dataset-level value: weighted aggregation for rsr, simple mean otherwise."""
    if name == "rsr":
        return dataset_rsr(ds, **params)
    return dataset_simple_mean(ds, TRAJECTORY_METRICS[name], **params)


__all__ = [
    "EPSILON",
    "DEFAULT_R_MAX",
    "DEFAULT_FILTER_H",
    "ClipThreshold",
    "MetricValue",
    "token_rsr",
    "clip_rank",
    "trajectory_rsr",
    "avg_surprisal",
    "avg_local_surprisal",
    "avg_rank",
    "avg_token_rsr",
    "filtered_avg_token_rsr",
    "weighted_avg_token_rsr",
    "variant_rank_minus_surprisal",
    "variant_rank_entropy_ratio",
    "variant_power_rsr",
    "dataset_rsr",
    "dataset_simple_mean",
    "TRAJECTORY_METRICS",
    "metric_params",
    "trajectory_metric",
    "dataset_metric_value",
]
