"""Zipf-mixture simulation of a student model's next-token distribution.

The student distribution Z mixes two Zipf(alpha) vocabularies: a dominant
component Z_A (weight pi = M_A/(M_A+M_B)) and a minority component Z_B under
an independent random permutation of the token identities. Four trajectory
families are sampled (X_A from Z_A, X_B from Z_B, X_C from a third permuted
Zipf, X_D from Z itself) and evaluated under Z: probability, surprisal,
rank, and unclipped token-level rank/surprisal ratio.

Exact per-seed values depend on how the random permutations collide, so the
reference report is tied to the pinned DEFAULT_SEED; the family orderings
(X_B lowest ratio, X_C highest; X_A lowest surprisal, X_C highest) hold for
almost every seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Tuple

import numpy as np

from .records import MetricError

DEFAULT_ALPHA = 2.3
DEFAULT_VOCAB = 50
DEFAULT_M_A = 1_000_000
DEFAULT_M_B = 250_000
DEFAULT_TOKENS = 10_000
DEFAULT_SEED = 2110

PROB_FLOOR = 1e-300
FAMILIES = ("X_A", "X_B", "X_C", "X_D")


@dataclass(frozen=True)
class SimulationConfig:
    alpha: float = DEFAULT_ALPHA
    vocab_size: int = DEFAULT_VOCAB
    m_a: int = DEFAULT_M_A
    m_b: int = DEFAULT_M_B
    tokens_per_trajectory: int = DEFAULT_TOKENS
    seed: int = DEFAULT_SEED
    mixture_mode: str = "empirical"

    def __post_init__(self):
        if not self.alpha > 1:
            raise MetricError(f"alpha must be > 1, got {self.alpha}")
        if self.vocab_size < 2:
            raise MetricError(f"vocab_size must be >= 2, got {self.vocab_size}")
        if not (self.m_a > self.m_b > 0):
            raise MetricError(
                f"component sizes must satisfy M_A > M_B > 0, got {self.m_a}, {self.m_b}"
            )
        if self.tokens_per_trajectory < 1:
            raise MetricError("tokens_per_trajectory must be >= 1")
        if self.mixture_mode not in ("empirical", "analytic"):
            raise MetricError(f"unknown mixture_mode {self.mixture_mode!r}")

    @property
    def pi(self) -> float:
        return self.m_a / (self.m_a + self.m_b)


@dataclass(frozen=True)
class VocabDistribution:
    """Probabilities over token ids plus the Zipf-rank -> token id mapping."""

    probabilities: np.ndarray
    permutation: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        object.__setattr__(self, "probabilities", p)
        object.__setattr__(self, "permutation", np.asarray(self.permutation))
        if np.any(p < 0) or abs(float(p.sum()) - 1.0) > 1e-12:
            raise MetricError("probabilities must be nonnegative and sum to 1")


@dataclass(frozen=True)
class FamilyStats:
    probability: float
    surprisal: float
    rank: float
    token_rsr: float

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.probability, self.surprisal, self.rank, self.token_rsr)


@dataclass(frozen=True)
class SimulationReport:
    config: SimulationConfig
    families: Mapping[str, FamilyStats]
    # student distribution dump rows: (token id, probability, rank)
    student_table: Tuple[Tuple[int, float, int], ...] = field(default=())


def zipf_base(alpha: float, vocab_size: int) -> np.ndarray:
    """Zipf(alpha) probabilities by Zipf rank: p_i proportional to i^-alpha."""
    if not alpha > 1:
        raise MetricError(f"alpha must be > 1, got {alpha}")
    w = np.arange(1, vocab_size + 1, dtype=float) ** (-alpha)
    return w / w.sum()


def build_zipf(alpha: float, vocab_size: int, perm: Optional[np.ndarray] = None) -> VocabDistribution:
    """Zipf distribution with token ids assigned through perm.

    perm[i] is the token id holding Zipf rank i+1; identity when omitted.
    """
    base = zipf_base(alpha, vocab_size)
    if perm is None:
        perm = np.arange(vocab_size)
    perm = np.asarray(perm)
    if sorted(perm.tolist()) != list(range(vocab_size)):
        raise MetricError("perm is not a permutation of the token ids")
    probs = np.empty(vocab_size, dtype=float)
    probs[perm] = base
    return VocabDistribution(probabilities=probs, permutation=perm)


def ranks_under(probs: np.ndarray) -> np.ndarray:
    """Rank per token id: 1 + count of strictly more probable tokens."""
    p = np.asarray(probs, dtype=float)
    return (1 + (p[None, :] > p[:, None]).sum(axis=1)).astype(np.int64)


def rank_table(probs: np.ndarray) -> Tuple[Tuple[int, float, int], ...]:
    """(token id, probability, rank) rows sorted by probability, ties by id."""
    p = np.asarray(probs, dtype=float)
    ranks = ranks_under(p)
    order = sorted(range(len(p)), key=lambda t: (-p[t], t))
    return tuple((int(t), float(p[t]), int(ranks[t])) for t in order)


def build_student_mixture(
    cfg: SimulationConfig,
    dist_a: VocabDistribution,
    dist_b: VocabDistribution,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Mixture probabilities over token ids.

    Empirical mode draws M_A tokens from Z_A and M_B from Z_B and normalizes
    the counts (needs rng); analytic mode returns pi*Z_A + (1-pi)*Z_B exactly.
    """
    if cfg.mixture_mode == "analytic":
        # lerp form so identical components mix to themselves bitwise
        a, b = dist_a.probabilities, dist_b.probabilities
        return b + cfg.pi * (a - b)
    if rng is None:
        raise MetricError("empirical mixture requires a random generator")
    counts = rng.multinomial(cfg.m_a, dist_a.probabilities) + rng.multinomial(
        cfg.m_b, dist_b.probabilities
    )
    return counts / counts.sum()


def sample_tokens(probs: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """n independent draws from probs via inverse CDF."""
    if n < 1:
        raise MetricError("sample size must be >= 1")
    cum = np.cumsum(np.asarray(probs, dtype=float))
    cum[-1] = 1.0  # guard against cumulative rounding
    return np.searchsorted(cum, rng.random(n), side="right")


def sample_trajectory(dist: VocabDistribution, n: int, seed: int) -> np.ndarray:
    """Seeded trajectory sample from a vocabulary distribution."""
    return sample_tokens(dist.probabilities, n, np.random.default_rng(seed))


def evaluate_under_student(tokens: np.ndarray, student_probs: np.ndarray):
    """Per-token (probability, surprisal, rank) of tokens under the student.

    Token ids outside the support get the probability floor and rank V.
    """
    p = np.asarray(student_probs, dtype=float)
    safe = np.where(p > 0, p, PROB_FLOOR)
    ranks = ranks_under(safe)
    ranks = np.where(p > 0, ranks, len(p))
    surps = -np.log(safe)
    toks = np.asarray(tokens)
    return safe[toks], surps[toks], ranks[toks].astype(float)


def run_simulation(cfg: SimulationConfig = SimulationConfig()) -> SimulationReport:
    """Build the mixture, sample the four families, evaluate them under Z.

    All randomness flows from cfg.seed through a fixed SeedSequence spawn
    order (permutation B, permutation C, mixture counts, then one stream per
    family), so reports are bit-identical for identical configs.
    """
    v = cfg.vocab_size
    ss = np.random.SeedSequence(cfg.seed)
    k_perm_b, k_perm_c, k_mix, k_a, k_b, k_c, k_d = ss.spawn(7)
    dist_a = build_zipf(cfg.alpha, v)
    dist_b = build_zipf(cfg.alpha, v, np.random.default_rng(k_perm_b).permutation(v))
    dist_c = build_zipf(cfg.alpha, v, np.random.default_rng(k_perm_c).permutation(v))
    student = build_student_mixture(cfg, dist_a, dist_b, np.random.default_rng(k_mix))

    sources = {
        "X_A": (dist_a.probabilities, k_a),
        "X_B": (dist_b.probabilities, k_b),
        "X_C": (dist_c.probabilities, k_c),
        "X_D": (student, k_d),
    }
    families = {}
    for name in FAMILIES:
        probs, key = sources[name]
        toks = sample_tokens(probs, cfg.tokens_per_trajectory, np.random.default_rng(key))
        prob, surp, rank = evaluate_under_student(toks, student)
        families[name] = FamilyStats(
            probability=float(prob.mean()),
            surprisal=float(surp.mean()),
            rank=float(rank.mean()),
            token_rsr=float((rank / surp).mean()),
        )
    return SimulationReport(
        config=cfg, families=families, student_table=rank_table(student)
    )


def with_seed(cfg: SimulationConfig, seed: int) -> SimulationConfig:
    return replace(cfg, seed=seed)


__all__ = [
    "DEFAULT_SEED",
    "FAMILIES",
    "SimulationConfig",
    "VocabDistribution",
    "FamilyStats",
    "SimulationReport",
    "zipf_base",
    "build_zipf",
    "build_student_mixture",
    "ranks_under",
    "rank_table",
    "sample_tokens",
    "sample_trajectory",
    "evaluate_under_student",
    "run_simulation",
    "with_seed",
]
