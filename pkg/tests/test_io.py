"""Token-stats file parsing, serialization round-trips, and total validation."""

import io
import json

import numpy as np
import pytest

from helpers import dataset, random_record, record, token
from trajscore.io import (
    iter_token_stats,
    load_dataset,
    parse_token_stats,
    read_manifest,
    record_line,
    serialize_dataset,
    validate_file,
    write_manifest,
)
from trajscore.records import SchemaError


def line(problem="p0", teacher="t0", rollout=0, k_ext=1000,
         tokens=({"s": 1.0, "r": 1, "rs": False},), **extra):
    obj = {
        "schema_version": "1",
        "problem_id": problem,
        "teacher_id": teacher,
        "rollout_id": rollout,
        "k_ext": k_ext,
        "tokens": list(tokens),
    }
    obj.update(extra)
    return json.dumps(obj)


def parse(text, **kw):
    return parse_token_stats(io.StringIO(text), **kw)


def test_single_line_two_tokens():
    ds = parse(line(tokens=[{"s": 1.0, "r": 1, "rs": False},
                            {"s": 0.5, "r": 7, "rs": False}]))
    assert len(ds) == 1
    assert len(ds.records[0].tokens) == 2
    assert ds.k_ext == 1000
    assert ds.records[0].tokens[1].rank == 7


def test_rank_zero_names_field_and_line():
    bad = line(tokens=[{"s": 1.0, "r": 0, "rs": False}])
    with pytest.raises(SchemaError) as err:
        parse(bad)
    assert "line 1" in str(err.value)
    assert "rank" in str(err.value)


def test_negative_surprisal_rejected():
    bad = line(tokens=[{"s": -2.0, "r": 1, "rs": False}])
    with pytest.raises(SchemaError) as err:
        parse(bad)
    assert "line 1" in str(err.value)


def test_duplicate_key_rejected():
    text = line() + "\n" + line()
    with pytest.raises(SchemaError) as err:
        parse(text)
    assert "duplicate" in str(err.value)
    assert "line 2" in str(err.value)


def test_unknown_top_level_field_rejected():
    with pytest.raises(SchemaError) as err:
        parse(line(mystery=1))
    assert "mystery" in str(err.value)


def test_unknown_token_field_rejected():
    with pytest.raises(SchemaError):
        parse(line(tokens=[{"s": 1.0, "r": 1, "rs": False, "zz": 2}]))


def test_missing_required_field_rejected():
    obj = json.loads(line())
    del obj["teacher_id"]
    with pytest.raises(SchemaError) as err:
        parse(json.dumps(obj))
    assert "teacher_id" in str(err.value)


def test_wrong_schema_version_rejected():
    obj = json.loads(line())
    obj["schema_version"] = "2"
    with pytest.raises(SchemaError):
        parse(json.dumps(obj))


def test_blank_line_rejected():
    with pytest.raises(SchemaError) as err:
        parse(line() + "\n\n")
    assert "blank" in str(err.value)


def test_k_ext_mismatch_between_lines():
    text = line() + "\n" + line(problem="p1", k_ext=500)
    with pytest.raises(SchemaError) as err:
        parse(text)
    assert "k_ext" in str(err.value)


def test_saturated_rank_must_equal_k_ext():
    bad = line(tokens=[{"s": 1.0, "r": 30, "rs": True}], k_ext=1000)
    with pytest.raises(SchemaError):
        parse(bad)


def test_rank_above_k_ext_rejected_when_not_saturated():
    bad = line(tokens=[{"s": 1.0, "r": 1001, "rs": False}], k_ext=1000)
    with pytest.raises(SchemaError):
        parse(bad)


def test_empty_input_rejected():
    with pytest.raises(SchemaError):
        parse("")


def test_optional_fields_round_trip():
    ds = parse(line(text="a b", correct=True,
                    scores={"llm_judged_quality": 0.9}))
    rec = ds.records[0]
    assert rec.text == "a b"
    assert rec.correct is True
    assert rec.external_scores == {"llm_judged_quality": 0.9}


def test_order_preserved_and_streaming_matches_parse():
    text = "\n".join(line(problem=f"p{i}") for i in range(5))
    ds = parse(text)
    assert [r.problem_id for r in ds.records] == [f"p{i}" for i in range(5)]
    streamed = [rec for rec, _ in iter_token_stats(io.StringIO(text))]
    assert [r.key for r in streamed] == [r.key for r in ds.records]


def test_round_trip_5000_records_byte_identical(tmp_path):
    rng = np.random.default_rng(42)
    records = []
    for i in range(5000):
        rec = random_record(rng, max_len=8, max_rank=9999,
                            problem=f"p{i // 4}", teacher=f"t{i % 11}",
                            rollout=i % 4)
        records.append(rec)
    ds = dataset(records, dataset_id="gen", student_id="stu", k_ext=10000)
    path = tmp_path / "gen.jsonl"
    serialize_dataset(ds, path)
    first = path.read_bytes()
    ds2 = parse_token_stats(str(path), dataset_id="gen", student_id="stu")
    assert len(ds2) == 5000
    path2 = tmp_path / "gen2.jsonl"
    serialize_dataset(ds2, path2)
    assert path2.read_bytes() == first
    ds3 = parse_token_stats(str(path2), dataset_id="gen", student_id="stu")
    assert ds3.records == ds.records
    assert ds3.k_ext == ds.k_ext


def test_record_line_is_canonical():
    rec = record([(3, 1.25)], text="x", correct=False,
                 scores={"b": 2.0, "a": 1.0})
    ln = record_line(rec, 1000)
    assert ln == record_line(rec, 1000)
    obj = json.loads(ln)
    assert list(obj) == sorted(obj)
    assert obj["scores"] == {"a": 1.0, "b": 2.0}


def test_manifest_round_trip(tmp_path):
    ds = dataset([record([(1, 1.0)])], dataset_id="d1", student_id="s1",
                 k_ext=1000)
    path = tmp_path / "d1.jsonl"
    serialize_dataset(ds, path)
    write_manifest(ds, path, settings={"window": 3})
    manifest = read_manifest(path)
    assert manifest["dataset_id"] == "d1"
    assert manifest["student_id"] == "s1"
    assert manifest["k_ext"] == 1000
    assert manifest["surprisal_unit"] == "nats"
    assert manifest["extraction"] == {"window": 3}
    loaded = load_dataset(path)
    assert loaded.dataset_id == "d1"
    assert loaded.student_id == "s1"
    assert loaded.records == ds.records


def test_manifest_unit_mismatch(tmp_path):
    ds = dataset([record([(1, 1.0)])], k_ext=1000)
    path = tmp_path / "d.jsonl"
    serialize_dataset(ds, path)
    mpath = write_manifest(ds, path)
    obj = json.loads(open(mpath).read())
    obj["surprisal_unit"] = "bits"
    open(mpath, "w").write(json.dumps(obj))
    with pytest.raises(SchemaError) as err:
        load_dataset(path)
    assert "bits" in str(err.value)


def test_manifest_k_ext_mismatch(tmp_path):
    ds = dataset([record([(1, 1.0)])], k_ext=1000)
    path = tmp_path / "d.jsonl"
    serialize_dataset(ds, path)
    mpath = write_manifest(ds, path)
    obj = json.loads(open(mpath).read())
    obj["k_ext"] = 500
    open(mpath, "w").write(json.dumps(obj))
    with pytest.raises(SchemaError):
        load_dataset(path)


def test_validate_file_is_total_and_line_located(tmp_path):
    path = tmp_path / "messy.jsonl"
    lines = [
        line(),                                             # ok
        "not json at all",                                  # malformed
        line(tokens=[{"s": 1.0, "r": 0, "rs": False}],
             problem="p1"),                                 # bad rank
        line(problem="p2", k_ext=500),                      # k_ext mismatch
        line(),                                             # duplicate key
    ]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    report = validate_file(str(path), r_max=100)
    assert not report.ok
    assert report.record_count == 3  # lines 1, 4, 5 parse
    locations = [v.location for v in report.violations]
    assert "line 2" in locations
    assert "line 3" in locations
    assert "line 4" in locations
    assert "line 5" in locations
    msgs = " | ".join(v.message for v in report.violations)
    assert "rank" in msgs
    assert "k_ext" in msgs
    assert "duplicate" in msgs


def test_validate_file_counts_saturation(tmp_path):
    toks = [{"s": 1.0, "r": 5, "rs": False}] * 97
    toks += [{"s": 1.0, "r": 1000, "rs": True}] * 3
    path = tmp_path / "sat.jsonl"
    path.write_text(line(tokens=toks) + "\n", encoding="utf-8")
    report = validate_file(str(path), r_max=100)
    assert report.ok
    assert report.saturated_count == 3
    assert abs(report.saturation_fraction - 0.03) < 1e-15


def test_validate_file_missing_path_reports():
    report = validate_file("/nonexistent/nowhere.jsonl", r_max=100)
    assert not report.ok
