"""Command-line entry point for batch scoring, selection, simulation,
correlation, and file validation.

Conventions shared by every subcommand:
- a JSON --config file OVERRIDES command-line flags (the file is the
  reproducible record; flags are interactive defaults),
- every report starts with comment lines carrying the tool version, the
  resolved configuration, and its sha256, and never a timestamp, so reruns
  are byte-identical,
- exit codes: 0 ok, 1 internal error, 2 input or validation error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, TextIO, Tuple

from . import __version__
from .correlate import (
    CorrelationReport,
    PerformanceTable,
    correlate_table,
    load_all_fixture_scores,
    load_fixture_performance,
)
from .io import load_dataset, validate_file
from .metrics import (
    DEFAULT_FILTER_H,
    DEFAULT_POWER_RANK,
    DEFAULT_POWER_SURPRISAL,
    DEFAULT_R_MAX,
    TRAJECTORY_METRICS,
    dataset_metric_value,
    metric_params,
    trajectory_metric,
)
from .records import MetricError, SchemaError, TrajectoryDataset
from .select import (
    CandidatePool,
    correctness_filtered_select,
    rank_teacher_scores,
    sample_for_teacher,
    select_trajectories,
)
from .simulate import (
    DEFAULT_ALPHA,
    DEFAULT_M_A,
    DEFAULT_M_B,
    DEFAULT_SEED,
    DEFAULT_TOKENS,
    DEFAULT_VOCAB,
    FAMILIES,
    SimulationConfig,
    run_simulation,
)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INPUT = 2

DEFAULT_N_SAMPLE = 200

# config keys admitted per subcommand (also the resolved-config key order)
CONFIG_KEYS: Dict[str, Tuple[str, ...]] = {
    "validate": ("input", "r_max"),
    # threads is intentionally absent: it bounds workers without affecting
    # results, and reports must be byte-identical across thread counts
    "score": ("input", "metric", "r_max", "filter_h", "power_rank",
              "power_surprisal"),
    "select-traj": ("input", "metric", "direction", "r_max", "filter_h",
                    "power_rank", "power_surprisal", "correct_only"),
    "select-teacher": ("input", "metric", "direction", "r_max", "filter_h",
                       "n_sample", "seed", "teachers"),
    "simulate": ("seed", "alpha", "vocab", "m_a", "m_b", "n_tokens",
                 "mixture"),
    "correlate": ("scores", "performance", "metric"),
}


class CliError(Exception):
    """Input or validation failure that maps to exit code 2."""


def _fmt(v: float) -> str:
    return f"{v:.6f}"


def _resolve_config(args: argparse.Namespace) -> dict:
    keys = CONFIG_KEYS[args.command]
    cfg = {k: getattr(args, k) for k in keys}
    if args.config is not None:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                loaded = json.load(fh)
        except OSError as exc:
            raise CliError(f"cannot read config file: {exc}") from None
        except json.JSONDecodeError as exc:
            raise CliError(f"config file is not valid JSON: {exc}") from None
        if not isinstance(loaded, dict):
            raise CliError("config file must hold a JSON object")
        for key, value in loaded.items():
            if key not in keys:
                raise CliError(
                    f"unknown config key {key!r} for command {args.command!r} "
                    f"(known: {', '.join(keys)})"
                )
            cfg[key] = value
    return cfg


def _header(command: str, cfg: dict) -> List[str]:
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"),
                           ensure_ascii=False)
    digest = hashlib.sha256(canonical.encode("utf-8")).hexdigest()
    return [
        f"# tool_version: {__version__}",
        f"# command: {command}",
        f"# resolved_config: {canonical}",
        f"# config_sha256: {digest}",
    ]


def _emit(lines: Sequence[str], out: Optional[str], stdout: TextIO) -> None:
    text = "\n".join(lines) + "\n"
    if out is None:
        stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _load(path: str) -> TrajectoryDataset:
    try:
        return load_dataset(path)
    except FileNotFoundError as exc:
        raise CliError(f"no such input: {exc.filename}") from None
    except SchemaError as exc:
        raise CliError(str(exc)) from None


def _check_clip(ds: TrajectoryDataset, r_max: int) -> None:
    if r_max > ds.k_ext:
        raise CliError(
            f"extraction cap below clip threshold: dataset {ds.dataset_id!r} "
            f"has K_ext={ds.k_ext} < r_max={r_max}"
        )


def _metric_list(spec_str: str) -> List[str]:
    names = [m.strip() for m in spec_str.split(",") if m.strip()]
    if not names:
        raise CliError("no metric names given")
    for name in names:
        if name not in TRAJECTORY_METRICS:
            raise CliError(
                f"unknown metric {name!r} (known: "
                f"{', '.join(sorted(TRAJECTORY_METRICS))})"
            )
    return names


def _bound_metrics(cfg: dict, names: Sequence[str]) -> dict:
    return {
        name: trajectory_metric(
            name,
            **metric_params(
                name,
                r_max=int(cfg["r_max"]),
                h=float(cfg["filter_h"]),
                p_rank=float(cfg["power_rank"]),
                p_surp=float(cfg["power_surprisal"]),
            ),
        )
        for name in names
    }


def _map_records(records, fn, threads: int):
    """fn over records, merged in input order regardless of worker count."""
    if threads <= 1:
        return [fn(r) for r in records]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, records))


# ---------------------------------------------------------------------------
# subcommands


def cmd_validate(args, stdout: TextIO) -> int:
    cfg = _resolve_config(args)
    report = validate_file(cfg["input"], r_max=int(cfg["r_max"]))
    lines = _header("validate", cfg)
    lines.append(f"records: {report.record_count}")
    lines.append(f"tokens: {report.token_count}")
    lines.append(
        f"saturated_tokens: {report.saturated_count} "
        f"(fraction {report.saturation_fraction:.6f})"
    )
    lines.append(f"violations: {len(report.violations)}")
    for v in report.violations:
        lines.append(f"{v.location}: {v.message}")
    lines.append(f"status: {'ok' if report.ok else 'invalid'}")
    _emit(lines, args.out, stdout)
    return EXIT_OK if report.ok else EXIT_INPUT


def cmd_score(args, stdout: TextIO) -> int:
    cfg = _resolve_config(args)
    names = _metric_list(cfg["metric"])
    fns = _bound_metrics(cfg, names)
    threads = int(args.threads)
    lines = _header("score", cfg)
    lines.append(",".join(
        ["dataset_id", "problem_id", "teacher_id", "rollout_id", "tokens"]
        + names
    ))
    for path in cfg["input"]:
        ds = _load(path)
        _check_clip(ds, int(cfg["r_max"]))

        def row(rec):
            try:
                vals = [fns[n](rec) for n in names]
            except MetricError as exc:
                raise CliError(f"record {rec.key}: {exc}") from None
            return [
                ds.dataset_id, rec.problem_id, rec.teacher_id,
                str(rec.rollout_id), str(len(rec.tokens)),
            ] + [_fmt(v) for v in vals]

        for parts in _map_records(ds.records, row, threads):
            lines.append(",".join(parts))
        total_tokens = sum(len(r.tokens) for r in ds.records)
        try:
            agg = [
                dataset_metric_value(
                    ds, n,
                    **metric_params(
                        n, r_max=int(cfg["r_max"]), h=float(cfg["filter_h"]),
                        p_rank=float(cfg["power_rank"]),
                        p_surp=float(cfg["power_surprisal"]),
                    ),
                )
                for n in names
            ]
        except MetricError as exc:
            raise CliError(f"dataset {ds.dataset_id!r}: {exc}") from None
        lines.append(",".join(
            [ds.dataset_id, "[dataset]", "", "", str(total_tokens)]
            + [_fmt(v) for v in agg]
        ))
    _emit(lines, args.out, stdout)
    return EXIT_OK


def _pools(ds: TrajectoryDataset) -> List[CandidatePool]:
    grouped: Dict[str, list] = {}
    order: List[str] = []
    for rec in ds.records:
        if rec.problem_id not in grouped:
            grouped[rec.problem_id] = []
            order.append(rec.problem_id)
        grouped[rec.problem_id].append(rec)
    return [CandidatePool(pid, tuple(grouped[pid])) for pid in order]


def cmd_select_traj(args, stdout: TextIO) -> int:
    cfg = _resolve_config(args)
    names = _metric_list(cfg["metric"])
    if len(names) != 1:
        raise CliError("select-traj takes exactly one metric")
    name = names[0]
    fn = _bound_metrics(cfg, [name])[name]
    params = metric_params(
        name, r_max=int(cfg["r_max"]), h=float(cfg["filter_h"]),
        p_rank=float(cfg["power_rank"]), p_surp=float(cfg["power_surprisal"]),
    )
    ds = _load(cfg["input"])
    _check_clip(ds, int(cfg["r_max"]))
    pools = _pools(ds)
    try:
        if cfg["correct_only"]:
            manifest = correctness_filtered_select(
                pools, fn, direction=cfg["direction"], metric_name=name,
                params=params,
            )
        else:
            flat = [rec for pool in pools for rec in pool.candidates]
            values = _map_records(flat, fn, int(args.threads))
            pool_values, k = [], 0
            for pool in pools:
                pool_values.append(values[k : k + len(pool.candidates)])
                k += len(pool.candidates)
            manifest = select_trajectories(
                pools, fn, direction=cfg["direction"], metric_name=name,
                params=params, pool_values=pool_values,
            )
    except MetricError as exc:
        raise CliError(str(exc)) from None
    lines = _header("select-traj", cfg)
    lines.append("problem_id,teacher_id,rollout_id,value")
    for c in manifest.choices:
        lines.append(
            f"{c.problem_id},{c.teacher_id},{c.rollout_id},{_fmt(c.value)}"
        )
    for teacher, pct in manifest.composition.items():
        lines.append(f"# composition: {teacher} {pct:.4f}%")
    _emit(lines, args.out, stdout)
    return EXIT_OK


def _scores_csv(path: str, column: str, teachers: Optional[str]) -> Dict[str, float]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            rows = [ln.rstrip("\n") for ln in fh if ln.strip() and not ln.startswith("#")]
    except OSError as exc:
        raise CliError(f"cannot read scores table: {exc}") from None
    if not rows:
        raise CliError(f"scores table {path!r} is empty")
    header = rows[0].split(",")
    if column not in header[1:]:
        raise CliError(f"scores table {path!r} has no column {column!r}")
    j = header.index(column)
    table = {}
    for ln in rows[1:]:
        parts = ln.split(",")
        table[parts[0]] = float(parts[j])
    if teachers:
        wanted = [t.strip() for t in teachers.split(",") if t.strip()]
        missing = [t for t in wanted if t not in table]
        if missing:
            raise CliError(f"teachers not in scores table: {', '.join(missing)}")
        table = {t: table[t] for t in wanted}
    return table


def cmd_select_teacher(args, stdout: TextIO) -> int:
    cfg = _resolve_config(args)
    inputs = cfg["input"]
    if len(inputs) == 1 and inputs[0].endswith(".csv"):
        scores = _scores_csv(inputs[0], cfg["metric"], cfg["teachers"])
    else:
        if cfg["teachers"]:
            raise CliError("--teachers only applies to a scores-table input")
        names = _metric_list(cfg["metric"])
        if len(names) != 1:
            raise CliError("select-teacher takes exactly one metric")
        name = names[0]
        params = metric_params(
            name, r_max=int(cfg["r_max"]), h=float(cfg["filter_h"]),
        )
        scores = {}
        for path in inputs:
            ds = _load(path)
            _check_clip(ds, int(cfg["r_max"]))
            teacher = ds.dataset_id
            if teacher in scores:
                raise CliError(f"duplicate dataset id {teacher!r}")
            n = int(cfg["n_sample"])
            if n > 0:
                try:
                    ds = sample_for_teacher(ds, n, int(cfg["seed"]))
                except MetricError as exc:
                    raise CliError(str(exc)) from None
            try:
                scores[teacher] = dataset_metric_value(ds, name, **params)
            except MetricError as exc:
                raise CliError(f"dataset {teacher!r}: {exc}") from None
    try:
        ranking = rank_teacher_scores(scores, direction=cfg["direction"])
    except MetricError as exc:
        raise CliError(str(exc)) from None
    lines = _header("select-teacher", cfg)
    lines.append("position,teacher_id,score,mark")
    for rt in ranking:
        mark = "top1" if rt.top1 else ("top2" if rt.top2 else "")
        lines.append(f"{rt.position},{rt.teacher_id},{_fmt(rt.score)},{mark}")
    _emit(lines, args.out, stdout)
    return EXIT_OK


def cmd_simulate(args, stdout: TextIO) -> int:
    cfg = _resolve_config(args)
    try:
        sim_cfg = SimulationConfig(
            alpha=float(cfg["alpha"]),
            vocab_size=int(cfg["vocab"]),
            m_a=int(cfg["m_a"]),
            m_b=int(cfg["m_b"]),
            tokens_per_trajectory=int(cfg["n_tokens"]),
            seed=int(cfg["seed"]),
            mixture_mode=cfg["mixture"],
        )
        report = run_simulation(sim_cfg)
    except MetricError as exc:
        raise CliError(str(exc)) from None
    lines = _header("simulate", cfg)
    lines.append("family,probability,surprisal,rank,token_rsr")
    for fam in FAMILIES:
        st = report.families[fam]
        lines.append(",".join([fam] + [_fmt(v) for v in st.as_tuple()]))
    _emit(lines, args.out, stdout)
    return EXIT_OK


def _student_order(perf: PerformanceTable, scores: dict) -> List[str]:
    ordered = [s for s in perf.students if s in scores]
    extra = [s for s in scores if s not in perf.students]
    if extra:
        raise CliError(
            f"students missing from performance table: {', '.join(extra)}"
        )
    return ordered


def _text_table(report: CorrelationReport, students: Sequence[str]) -> List[str]:
    width = max(len(m) for m in report.metrics) + 2
    cols = list(students) + ["average"]
    out = []
    for measure in ("spearman", "pearson"):
        out.append(f"[{measure}]")
        out.append(" " * width + "  ".join(f"{c:>12s}" for c in cols))
        for m in report.metrics:
            cells = [
                abs(getattr(report.cells[(s, m)], measure)) for s in students
            ]
            agg = (report.aggregate_spearman if measure == "spearman"
                   else report.aggregate_pearson)[m]
            out.append(
                f"{m:<{width}s}"
                + "  ".join(f"{v:>12.4f}" for v in cells + [agg])
            )
    return out


def cmd_correlate(args, stdout: TextIO) -> int:
    cfg = _resolve_config(args)
    if cfg["scores"]:
        from .correlate import load_fixture_scores  # noqa: F401 (parity)
        from .records import ScoreTable

        tables = {}
        for item in cfg["scores"]:
            if "=" not in item:
                raise CliError(
                    "each --scores item must be student=path, got "
                    f"{item!r}"
                )
            student, path = item.split("=", 1)
            try:
                with open(path, "r", encoding="utf-8") as fh:
                    rows = [ln.rstrip("\n") for ln in fh
                            if ln.strip() and not ln.startswith("#")]
            except OSError as exc:
                raise CliError(f"cannot read scores table: {exc}") from None
            header = rows[0].split(",")
            columns = tuple(header[1:])
            teacher_ids = tuple(r.split(",")[0] for r in rows[1:])
            values = tuple(
                tuple(float(x) for x in r.split(",")[1:]) for r in rows[1:]
            )
            tables[student] = ScoreTable(
                student_id=student, rows=teacher_ids, columns=columns,
                values=values,
                provenance={c: "external-fixture" for c in columns},
            )
    else:
        tables = load_all_fixture_scores()
    if cfg["performance"]:
        try:
            with open(cfg["performance"], "r", encoding="utf-8") as fh:
                rows = [ln.rstrip("\n") for ln in fh
                        if ln.strip() and not ln.startswith("#")]
        except OSError as exc:
            raise CliError(f"cannot read performance table: {exc}") from None
        header = rows[0].split(",")
        perf = PerformanceTable(
            teachers=tuple(r.split(",")[0] for r in rows[1:]),
            students=tuple(header[1:]),
            values=tuple(
                tuple(float(x) for x in r.split(",")[1:]) for r in rows[1:]
            ),
        )
    else:
        perf = load_fixture_performance()
    metrics = None
    if cfg["metric"]:
        metrics = [m.strip() for m in cfg["metric"].split(",") if m.strip()]
    try:
        report = correlate_table(tables, perf, metrics=metrics)
    except (MetricError, KeyError) as exc:
        raise CliError(str(exc)) from None
    students = _student_order(perf, tables)
    lines = _header("correlate", cfg)
    lines.append(",".join(["metric", "measure"] + students + ["average"]))
    for m in report.metrics:
        for measure in ("spearman", "pearson"):
            cells = [
                abs(getattr(report.cells[(s, m)], measure)) for s in students
            ]
            agg = (report.aggregate_spearman if measure == "spearman"
                   else report.aggregate_pearson)[m]
            lines.append(",".join(
                [m, measure] + [f"{v:.4f}" for v in cells + [agg]]
            ))
    _emit(lines, args.out, stdout)
    if args.out is not None:
        stdout.write("\n".join(_text_table(report, students)) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--out", default=None,
                     help="report path (default: stdout)")
    sub.add_argument("--config", default=None,
                     help="JSON config file; its keys OVERRIDE flags")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trajscore",
        description="Score, select, simulate, and correlate teacher "
                    "reasoning trajectories against a student model.",
    )
    parser.add_argument("--version", action="version",
                        version=f"trajscore {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("validate", help="check a token-stats file")
    p.add_argument("--input", required=True, help="token-stats JSONL file")
    p.add_argument("--r-max", dest="r_max", type=int, default=DEFAULT_R_MAX)
    _add_common(p)

    p = subs.add_parser("score", help="per-trajectory and dataset metrics")
    p.add_argument("--input", required=True, action="append",
                   help="token-stats JSONL file (repeatable)")
    p.add_argument("--metric", default="rsr",
                   help="comma-separated metric names")
    p.add_argument("--r-max", dest="r_max", type=int, default=DEFAULT_R_MAX)
    p.add_argument("--filter-h", dest="filter_h", type=float,
                   default=DEFAULT_FILTER_H)
    p.add_argument("--power-rank", dest="power_rank", type=float,
                   default=DEFAULT_POWER_RANK)
    p.add_argument("--power-surprisal", dest="power_surprisal", type=float,
                   default=DEFAULT_POWER_SURPRISAL)
    p.add_argument("--threads", type=int, default=1)
    _add_common(p)

    p = subs.add_parser("select-traj",
                        help="pick one trajectory per problem")
    p.add_argument("--input", required=True, help="token-stats JSONL file")
    p.add_argument("--metric", default="rsr")
    p.add_argument("--direction", choices=("min", "max"), default="min")
    p.add_argument("--r-max", dest="r_max", type=int, default=DEFAULT_R_MAX)
    p.add_argument("--filter-h", dest="filter_h", type=float,
                   default=DEFAULT_FILTER_H)
    p.add_argument("--power-rank", dest="power_rank", type=float,
                   default=DEFAULT_POWER_RANK)
    p.add_argument("--power-surprisal", dest="power_surprisal", type=float,
                   default=DEFAULT_POWER_SURPRISAL)
    p.add_argument("--correct-only", dest="correct_only",
                   action="store_true",
                   help="restrict to verified-correct candidates per pool")
    p.add_argument("--threads", type=int, default=1)
    _add_common(p)

    p = subs.add_parser("select-teacher", help="rank teacher datasets")
    p.add_argument("--input", required=True, action="append",
                   help="token-stats JSONL files, or one scores CSV")
    p.add_argument("--metric", default="rsr",
                   help="metric name (or scores-CSV column)")
    p.add_argument("--direction", choices=("min", "max"), default="min")
    p.add_argument("--r-max", dest="r_max", type=int, default=DEFAULT_R_MAX)
    p.add_argument("--filter-h", dest="filter_h", type=float,
                   default=DEFAULT_FILTER_H)
    p.add_argument("--n-sample", dest="n_sample", type=int,
                   default=DEFAULT_N_SAMPLE,
                   help="records sampled per dataset (0 = all)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--teachers", default=None,
                   help="comma-separated row filter for a scores-CSV input")
    _add_common(p)

    p = subs.add_parser("simulate", help="two-component mixture study")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--vocab", type=int, default=DEFAULT_VOCAB)
    p.add_argument("--m-a", dest="m_a", type=int, default=DEFAULT_M_A)
    p.add_argument("--m-b", dest="m_b", type=int, default=DEFAULT_M_B)
    p.add_argument("--n-tokens", dest="n_tokens", type=int,
                   default=DEFAULT_TOKENS)
    p.add_argument("--mixture", choices=("empirical", "analytic"),
                   default="empirical")
    _add_common(p)

    p = subs.add_parser("correlate",
                        help="metric vs performance rank correlations")
    p.add_argument("--scores", action="append", default=None,
                   metavar="STUDENT=PATH",
                   help="per-student score CSVs (default: shipped tables)")
    p.add_argument("--performance", default=None,
                   help="performance CSV (default: shipped table)")
    p.add_argument("--metric", default=None,
                   help="comma-separated column subset (default: all)")
    _add_common(p)

    return parser


HANDLERS = {
    "validate": cmd_validate,
    "score": cmd_score,
    "select-traj": cmd_select_traj,
    "select-teacher": cmd_select_teacher,
    "simulate": cmd_simulate,
    "correlate": cmd_correlate,
}


def main(argv: Optional[Sequence[str]] = None,
         stdout: TextIO = sys.stdout, stderr: TextIO = sys.stderr) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return HANDLERS[args.command](args, stdout)
    except CliError as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    except Exception as exc:  # pragma: no cover - defensive
        stderr.write(f"internal error: {type(exc).__name__}: {exc}\n")
        return EXIT_INTERNAL


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
