"""Acceptance gate. One test per shipped guarantee; each pytest -v line is
the pass/fail verdict for that guarantee. Tolerances are pinned here and
nowhere else."""

import io
import json
import time

import numpy as np

from helpers import dataset, random_record, record
from trajscore.cli import main
from trajscore.correlate import (
    FIXTURE_STUDENTS,
    correlate_table,
    load_all_fixture_scores,
    load_fixture_performance,
    load_fixture_scores,
)
from trajscore.io import serialize_dataset, write_manifest
from trajscore.metrics import (
    avg_surprisal,
    dataset_rsr,
    trajectory_rsr,
    weighted_avg_token_rsr,
)
from trajscore.quality import CRITERIA, rule_based_quality
from trajscore.records import TrajectoryRecord
from trajscore.select import (
    CandidatePool,
    correctness_filtered_select,
    rank_teacher_scores,
    select_trajectories,
)
from trajscore.simulate import FAMILIES, SimulationConfig, run_simulation

CORRELATION_TOL = 0.005
BASELINE_TOL = 0.015
IDENTITY_REL_TOL = 1e-12
SIMULATION_REL_TOL = 0.20
ZSCORE_TOL = 1e-9

RSR_SPEARMAN = (0.855, 0.845, 0.918, 0.818, 0.845)
RSR_PEARSON = (0.654, 0.880, 0.805, 0.819, 0.811)
RSR_AGGREGATE_SPEARMAN = 0.856

BASELINE_SPEARMAN = {
    "avg_surprisal": (0.24, 0.42, 0.55, 0.55, 0.70),
    "avg_rank": (0.41, 0.64, 0.68, 0.61, 0.62),
    "avg_token_length": (0.49, 0.68, 0.45, 0.57, 0.47),
    "verified_accuracy": (0.54, 0.43, 0.25, 0.35, 0.10),
}

SIMULATION_TARGETS = {
    "X_A": (0.41, 1.38, 2.49, 1.69),
    "X_B": (0.10, 2.73, 4.31, 1.30),
    "X_C": (0.08, 4.73, 11.57, 2.23),
    "X_D": (0.35, 1.67, 2.93, 1.62),
}


def test_criterion_1_rsr_correlations_from_fixtures():
    start = time.perf_counter()
    report = correlate_table(load_all_fixture_scores(),
                             load_fixture_performance(), metrics=("rsr",))
    elapsed = time.perf_counter() - start
    for student, exp_s, exp_p in zip(FIXTURE_STUDENTS, RSR_SPEARMAN,
                                     RSR_PEARSON):
        cell = report.cells[(student, "rsr")]
        assert abs(abs(cell.spearman) - exp_s) <= CORRELATION_TOL, student
        assert abs(abs(cell.pearson) - exp_p) <= CORRELATION_TOL, student
    agg = report.aggregate_spearman["rsr"]
    assert abs(agg - RSR_AGGREGATE_SPEARMAN) <= CORRELATION_TOL
    assert elapsed < 1.0


def test_criterion_2_baseline_correlation_rows():
    report = correlate_table(load_all_fixture_scores(),
                             load_fixture_performance(),
                             metrics=tuple(BASELINE_SPEARMAN))
    for metric, row in BASELINE_SPEARMAN.items():
        for student, expected in zip(FIXTURE_STUDENTS, row):
            got = abs(report.cells[(student, metric)].spearman)
            assert abs(got - expected) <= BASELINE_TOL, (metric, student)


def test_criterion_3_teacher_selection_fixture():
    pool = ("deepseek-r1", "qwen3-235b-a22b-thinking", "nemotron-super-49b",
            "qwen3-30b-a3b-thinking", "magistral-small", "gpt-oss-20b")
    table = load_fixture_scores("qwen25-7b")
    ranked = rank_teacher_scores(
        {t: table.cell(t, "rsr_200") for t in pool}, direction="min"
    )
    assert ranked[0].teacher_id == "qwen3-30b-a3b-thinking"
    assert ranked[1].teacher_id == "deepseek-r1"
    perf = load_fixture_performance()
    column = dict(zip(perf.teachers, perf.column("qwen25-7b")))
    assert column[ranked[0].teacher_id] == 50.0
    assert column[ranked[1].teacher_id] == 47.8


def test_criterion_4_algebraic_identities():
    rng = np.random.default_rng(1009)
    records = []
    for i in range(1000):
        n = int(rng.integers(1, 5001))
        records.append(random_record(rng, n_tokens=n, max_rank=10000,
                                     problem=f"p{i}"))
    for rec in records:
        a = weighted_avg_token_rsr(rec, 100)
        b = trajectory_rsr(rec, 100)
        assert abs(a - b) <= IDENTITY_REL_TOL * abs(b)
    ds = dataset(records, k_ext=100000)
    values = np.array([trajectory_rsr(r, 100) for r in records])
    weights = np.array([avg_surprisal(r) for r in records])
    expected = float(np.dot(values, weights) / weights.sum())
    got = dataset_rsr(ds, 100)
    assert abs(got - expected) <= IDENTITY_REL_TOL * abs(expected)


def test_criterion_5_simulation_orderings_and_pinned_seed():
    start = time.perf_counter()
    rsr_ok = 0
    surkp_ok = 0
    for seed in range(100):
        fams = run_simulation(SimulationConfig(seed=seed)).families
        ratio = {f: fams[f].token_rsr for f in FAMILIES}
        surp = {f: fams[f].surprisal for f in FAMILIES}
        others = ("X_A", "X_D")
        if ratio["X_B"] < min(ratio[f] for f in others) and \
                ratio["X_C"] > max(ratio[f] for f in others) and \
                ratio["X_B"] < ratio["X_C"]:
            rsr_ok += 1
        if surp["X_A"] < min(surp["X_B"], surp["X_C"], surp["X_D"]) and \
                surp["X_C"] > max(surp["X_A"], surp["X_B"], surp["X_D"]):
            surkp_ok += 1
    assert rsr_ok >= 95
    assert surkp_ok >= 95
    report = run_simulation(SimulationConfig())
    for fam, targets in SIMULATION_TARGETS.items():
        got = report.families[fam].as_tuple()
        for g, t in zip(got, targets):
            assert abs(g - t) <= SIMULATION_REL_TOL * abs(t), (fam, g, t)
    assert time.perf_counter() - start < 10.0


def test_criterion_6_selection_matches_bruteforce_oracle():
    rng = np.random.default_rng(6007)
    value_grid = (1.0, 1.5, 2.0, 2.5, 3.0, 3.5)

    def metric(rec: TrajectoryRecord) -> float:
        return trajectory_rsr(rec, 100)

    for trial in range(10000):
        size = int(rng.integers(1, 34))
        candidates = []
        for _ in range(size):
            value = value_grid[int(rng.integers(0, len(value_grid)))]
            flag = (True, False, None)[int(rng.integers(0, 3))]
            candidates.append(record(
                [(4, 4.0 / value)], problem="p",
                teacher=f"t{int(rng.integers(0, 8))}",
                rollout=int(rng.integers(0, 3)), correct=flag,
            ))
        pool = CandidatePool("p", tuple(candidates))
        direction = "min" if rng.random() < 0.5 else "max"
        sign = 1.0 if direction == "min" else -1.0

        got = select_trajectories([pool], metric, direction=direction)
        keyed = [(sign * metric(c), c.teacher_id, c.rollout_id)
                 for c in candidates]
        expected = min(keyed)
        choice = got.choices[0]
        assert (sign * choice.value, choice.teacher_id,
                choice.rollout_id) == expected, trial

        got_f = correctness_filtered_select([pool], metric,
                                            direction=direction)
        eligible = [c for c in candidates if c.correct is True] or candidates
        keyed_f = [(sign * metric(c), c.teacher_id, c.rollout_id)
                   for c in eligible]
        expected_f = min(keyed_f)
        choice_f = got_f.choices[0]
        assert (sign * choice_f.value, choice_f.teacher_id,
                choice_f.rollout_id) == expected_f, trial


def test_criterion_7_rule_based_quality_zscores():
    rng = np.random.default_rng(7001)
    vocab = ["alpha", "beta", "check", "verify", "perhaps", "might",
             "therefore", "since", "gamma", "delta", "epsilon"]
    for _ in range(50):
        n = int(rng.integers(2, 40))
        texts = [" ".join(rng.choice(vocab, size=int(rng.integers(3, 80))))
                 for _ in range(n)]
        ds = dataset([record([(1, 1.0)], problem=f"p{i}", text=t)
                      for i, t in enumerate(texts)])
        scores = rule_based_quality(ds)
        for criterion in CRITERIA:
            raw = [s.raw[criterion] for s in scores]
            if len(set(raw)) < 2:
                continue
            z = np.array([s.z[criterion] for s in scores])
            assert abs(float(z.mean())) < ZSCORE_TOL
            assert abs(float(z.std()) - 1.0) < ZSCORE_TOL
    short = " ".join(["word"] * 10)
    long = " ".join(["word"] * 30)
    ds = dataset([record([(1, 1.0)], problem="a", text=short),
                  record([(1, 1.0)], problem="b", text=long)])
    composites = tuple(s.composite for s in rule_based_quality(ds))
    assert composites == (-0.30, 0.30)


def test_criterion_8_cli_reports_are_byte_stable(tmp_path):
    def run(argv):
        out = io.StringIO()
        err = io.StringIO()
        code = main(argv, stdout=out, stderr=err)
        assert code == 0, (argv, err.getvalue())

    def bytes_of(argv, name):
        path = tmp_path / name
        run(argv + ["--out", str(path)])
        return path.read_bytes()

    records = []
    for i in range(25):
        for j in range(3):
            records.append(record(
                [((i + j) % 9 + 1, 0.25 + ((i * 3 + j) % 11) / 4.0)],
                problem=f"p{i:02d}", teacher=f"t{j}", rollout=j,
                correct=bool((i + j) % 2),
            ))
    data = tmp_path / "data.jsonl"
    ds = dataset(records, dataset_id="main", k_ext=1000)
    serialize_dataset(ds, data)
    write_manifest(ds, data)
    other = tmp_path / "other.jsonl"
    ds2 = dataset(records[:30], dataset_id="other", k_ext=1000)
    serialize_dataset(ds2, other)
    write_manifest(ds2, other)

    commands = {
        "validate": ["validate", "--input", str(data)],
        "score": ["score", "--input", str(data), "--metric",
                  "rsr,avg_surprisal,avg_rank_clipped"],
        "select-traj": ["select-traj", "--input", str(data)],
        "select-teacher": ["select-teacher", "--input", str(data),
                           "--input", str(other), "--n-sample", "20",
                           "--seed", "3"],
        "simulate": ["simulate", "--seed", "11", "--n-tokens", "2000"],
        "correlate": ["correlate", "--metric", "rsr"],
    }
    for name, argv in commands.items():
        first = bytes_of(argv, f"{name}.1")
        second = bytes_of(argv, f"{name}.2")
        assert first == second, name

    for name in ("score", "select-traj"):
        argv = commands[name]
        t1 = bytes_of(argv + ["--threads", "1"], f"{name}.t1")
        t8 = bytes_of(argv + ["--threads", "8"], f"{name}.t8")
        assert t1 == t8, name
