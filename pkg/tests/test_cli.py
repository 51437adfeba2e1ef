import csv
import json

import numpy as np
import pytest

from pointcert import PointCloud, save_network, save_point_cloud
from pointcert.cli import (EXIT_ALL_MISCLASSIFIED, EXIT_FORMAT_ERROR, EXIT_NO_INPUTS,
                           EXIT_OK, emit_report, main, parse_report)
from conftest import build_example_net
from netgen import center_cloud_for, random_fuzz_net


@pytest.fixture
def example_files(tmp_path):
    net = build_example_net()
    model = tmp_path / "model.json"
    save_network(net, model)
    cloud = tmp_path / "cloud.json"
    save_point_cloud(PointCloud(points=[[1.0, 0.0]], label=0), cloud)
    return model, cloud


def test_golden_fixture_report_contains_interval_table(example_files, tmp_path):
    model, cloud = example_files
    report = tmp_path / "report.jsonl"
    rc = main(["--model", str(model), "--input", str(cloud), "--norm", "inf",
               "--eps-init", "1", "--report", str(report), "--dump-bounds",
               "--no-timing"])
    assert rc == EXIT_OK
    records = parse_report(report)
    rec = records[0]
    assert rec["certified_eps"] > 0
    table = rec["layer_bounds"]
    np.testing.assert_allclose(table[0][0], [-1, -3], atol=1e-9)
    np.testing.assert_allclose(table[0][1], [3, 1], atol=1e-9)
    np.testing.assert_allclose(table[3][0], [-2, -1], atol=1e-9)
    np.testing.assert_allclose(table[3][1], [7, 1], atol=1e-9)
    np.testing.assert_allclose(table[4][0], [-2, -8], atol=1e-9)
    np.testing.assert_allclose(table[4][1], [7, 2.5], atol=1e-9)
    summary = records[-1]
    assert summary["type"] == "summary"
    assert summary["avg_certified_eps"] == rec["certified_eps"]


def test_empty_input_directory(tmp_path, example_files):
    model, _ = example_files
    empty = tmp_path / "empty"
    empty.mkdir()
    report = tmp_path / "r.jsonl"
    rc = main(["--model", str(model), "--input", str(empty),
               "--report", str(report)])
    assert rc == EXIT_NO_INPUTS
    assert parse_report(report) == [json.loads(json.dumps(
        {"type": "summary", "n_inputs": 0, "n_processed": 0, "n_skipped": 0,
         "avg_certified_eps": None}))]


def test_misclassified_inputs_skipped(tmp_path, example_files):
    model, _ = example_files
    d = tmp_path / "clouds"
    d.mkdir()
    save_point_cloud(PointCloud(points=[[1.0, 0.0]], label=1), d / "bad.json")
    report = tmp_path / "r.jsonl"
    rc = main(["--model", str(model), "--input", str(d), "--report", str(report)])
    assert rc == EXIT_ALL_MISCLASSIFIED
    rec = parse_report(report)[0]
    assert rec["skipped"] and rec["reason"] == "misclassified"
    assert rec["predicted"] == 0 and rec["label"] == 1


def test_format_error_exit_code(tmp_path, example_files):
    _, cloud = example_files
    bad_model = tmp_path / "bad.json"
    bad_model.write_text("{\"layers\": []}")
    rc = main(["--model", str(bad_model), "--input", str(cloud)])
    assert rc == EXIT_FORMAT_ERROR


def _batch_dir(tmp_path):
    net = random_fuzz_net(42, force_mul=True)
    model = tmp_path / "model.json"
    save_network(net, model)
    d = tmp_path / "clouds"
    d.mkdir()
    for i in range(3):
        cloud = center_cloud_for(net, 100 + i)
        save_point_cloud(cloud, d / f"c{i}.json")
    return model, d


def test_parallel_jobs_bitwise_identical_reports(tmp_path):
    model, d = _batch_dir(tmp_path)
    r1 = tmp_path / "r1.jsonl"
    r4 = tmp_path / "r4.jsonl"
    base = ["--model", str(model), "--input", str(d), "--norm", "2",
            "--eps-init", "0.05", "--seed", "7", "--no-timing"]
    assert main(base + ["--jobs", "1", "--report", str(r1)]) == EXIT_OK
    assert main(base + ["--jobs", "4", "--report", str(r4)]) == EXIT_OK
    assert r1.read_bytes() == r4.read_bytes()


def test_rerun_reproduces_report_bitwise(tmp_path):
    model, d = _batch_dir(tmp_path)
    r1 = tmp_path / "a.jsonl"
    r2 = tmp_path / "b.jsonl"
    base = ["--model", str(model), "--input", str(d), "--no-timing"]
    main(base + ["--report", str(r1)])
    main(base + ["--report", str(r2)])
    assert r1.read_bytes() == r2.read_bytes()


def test_report_average_matches_rows(tmp_path):
    model, d = _batch_dir(tmp_path)
    report = tmp_path / "r.jsonl"
    main(["--model", str(model), "--input", str(d), "--report", str(report),
          "--no-timing"])
    records = parse_report(report)
    rows = [r for r in records if r.get("type") != "summary" and not r["skipped"]]
    summary = records[-1]
    mean = sum(r["certified_eps"] for r in rows) / len(rows)
    assert abs(summary["avg_certified_eps"] - mean) <= 1e-12


def test_emit_report_csv_columns(tmp_path):
    record = {"file": "x.json", "n_points": 4, "norm": "inf",
              "certified_eps": 0.125, "min_margin": 0.5,
              "seconds_per_iter": 0.0, "iterations": 11, "skipped": False,
              "per_target_sigma": {"1": 0.5}, "search_trace": [[0.125, True]]}
    path = tmp_path / "r.csv"
    emit_report([record], "csv", path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["file", "n_points", "norm", "certified_eps", "min_margin",
                       "seconds_per_iter", "iterations"]
    assert rows[1][0] == "x.json"
    assert float(rows[1][3]) == 0.125


def test_emit_report_zero_results_header_only(tmp_path):
    path = tmp_path / "r.csv"
    emit_report([], "csv", path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 1


def test_jsonl_round_trip_fields(tmp_path):
    model, d = _batch_dir(tmp_path)
    report = tmp_path / "r.jsonl"
    main(["--model", str(model), "--input", str(d), "--report", str(report),
          "--no-timing"])
    for rec in parse_report(report):
        if rec.get("type") == "summary" or rec.get("skipped"):
            continue
        assert set(rec) >= {"file", "n_points", "norm", "certified_eps",
                            "min_margin", "seconds_per_iter", "iterations",
                            "per_target_sigma", "search_trace"}
        assert any(v for _, v in rec["search_trace"]) == (rec["certified_eps"] > 0)
