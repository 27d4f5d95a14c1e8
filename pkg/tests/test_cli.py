import csv
import json

import pytest
from hypothesis import given, strategies as st

from tbsplit import cli
from tbsplit.verify import ComparisonReport
import numpy as np


def run(tmp_path, cmd, cfg=None, *flags):
    argv = [cmd, "--out-dir", str(tmp_path / "out")]
    if cfg is not None:
        path = tmp_path / f"{cmd}.json"
        path.write_text(json.dumps(cfg))
        argv += ["--config", str(path)]
    return cli.main(argv + list(flags))


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_gen_deterministic(tmp_path):
    assert run(tmp_path, "gen", {"workload": {"kind": "deterministic", "interval": 1, "n": 3}}) == 0
    lines = (tmp_path / "out" / "trace.jsonl").read_text().splitlines()
    assert [json.loads(x)["t"] for x in lines] == [0, 1, 2]


def test_gen_poisson_reproducible(tmp_path):
    cfg = {"workload": {"kind": "poisson", "rate": 1.0, "n": 20}}
    run(tmp_path, "gen", cfg, "--seed", "1")
    first = (tmp_path / "out" / "trace.jsonl").read_bytes()
    run(tmp_path, "gen", cfg, "--seed", "1")
    assert (tmp_path / "out" / "trace.jsonl").read_bytes() == first


def test_gen_onoff_bursts(tmp_path):
    run(tmp_path, "gen", {"workload": {"kind": "onoff", "burst_size": 3, "burst_gap": 5, "n": 6}})
    ts = [json.loads(x)["t"] for x in (tmp_path / "out" / "trace.jsonl").read_text().splitlines()]
    assert ts == [0, 0, 0, 5, 5, 5]


def test_simulate_summary(tmp_path):
    cfg = {"workload": {"kind": "onoff", "burst_size": 3, "burst_gap": 1, "n": 3},
           "aggregate": {"rate": 1, "burst": 2}}
    assert run(tmp_path, "simulate", cfg) == 0
    s = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert s["n"] == 3 and s["S_inf"] == 1.0 and abs(s["mean_delay"] - 1 / 3) <= 1e-9
    rows = read_csv(tmp_path / "out" / "jobs.csv")
    assert rows[0] == ["job_index", "arrival", "bucket", "delay", "departure"]
    assert [float(r[3]) for r in rows[1:]] == [0, 0, 1]
    curve = read_csv(tmp_path / "out" / "curve.csv")
    assert curve[0] == ["time", "N", "S"] and curve[-1] == ["1.0", "0", "1.0"]


def test_simulate_empty_trace(tmp_path):
    (tmp_path / "t.jsonl").write_text("")
    cfg = {"trace": str(tmp_path / "t.jsonl"), "aggregate": {"rate": 1, "burst": 2}}
    assert run(tmp_path, "simulate", cfg) == 0
    s = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert s["S_inf"] == 0 and s["mean_delay"] is None


def test_simulate_split_outputs(tmp_path):
    cfg = {"workload": {"kind": "deterministic", "interval": 0.1, "n": 10},
           "aggregate": {"rate": 1, "burst": 2}, "split": {"k": 2, "policy": "round_robin"}}
    assert run(tmp_path, "simulate", cfg) == 0
    out = tmp_path / "out"
    assert {p.name for p in out.iterdir()} >= {"jobs_bucket0.csv", "jobs_bucket1.csv", "jobs_combined.csv"}
    assert len(read_csv(out / "jobs_bucket0.csv")) == 6


def test_simulate_uses_embedded_assignment(tmp_path):
    (tmp_path / "t.jsonl").write_text('{"t": 0, "bucket": 1}\n{"t": 0, "bucket": 1}\n')
    cfg = {"trace": "t.jsonl", "aggregate": {"rate": 1, "burst": 2}, "split": {"k": 2}}
    assert run(tmp_path, "simulate", cfg) == 0
    rows = read_csv(tmp_path / "out" / "jobs_combined.csv")
    assert [r[2] for r in rows[1:]] == ["1", "1"]


def test_invalid_config_writes_nothing(tmp_path, capsys):
    cfg = {"workload": {"kind": "deterministic", "interval": 1, "n": 3},
           "aggregate": {"rate": 1, "burst": 2},
           "split": {"sub_buckets": [{"rate": 0.5, "burst": 1}, {"rate": 0.6, "burst": 1}]}}
    assert run(tmp_path, "simulate", cfg) == 1
    assert "rate sum" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


COMPARE = {"trace": "t.jsonl", "aggregate": {"rate": 1, "burst": 2},
           "split": {"sub_buckets": [{"rate": 0.5, "burst": 1}, {"rate": 0.5, "burst": 1}],
                     "policy": "all_to_one"}}


@pytest.fixture
def two_jobs(tmp_path):
    (tmp_path / "t.jsonl").write_text('{"t": 0}\n{"t": 0}\n')
    return tmp_path


def test_compare_gap(two_jobs):
    assert run(two_jobs, "compare", COMPARE) == 0
    rep = json.loads((two_jobs / "out" / "report.json").read_text())
    assert rep["strict_gap"] == 2.0 and rep["one_total"] == 0.0
    rows = read_csv(two_jobs / "out" / "curves.csv")
    assert rows[0] == ["time", "S_one", "S_split"] and float(rows[-1][2]) == 2.0


def test_compare_k1(two_jobs):
    assert run(two_jobs, "compare", COMPARE, "--k", "1") == 0
    rep = json.loads((two_jobs / "out" / "report.json").read_text())
    assert rep["strict_gap"] == 0.0


def test_compare_injected_disagreement(two_jobs):
    assert run(two_jobs, "compare", COMPARE, "--inject-disagreement", "1e-6") == 3


def _report(slack, path_error, tol=1e-9):
    grid = np.array([0.0])
    viol = [(0.0, 1.0, 1.0 + slack)] if slack < -tol else []
    return ComparisonReport("latency", grid, grid, grid, slack, viol, path_error=path_error,
                            path_disagreement=path_error > tol)


@given(st.floats(-1, 1), st.floats(0, 1e-6))
def test_exit_codes_reflect_report(slack, err):
    rep = _report(slack, err)
    code = cli.exit_code_for(rep)
    if err > 1e-9:
        assert code == 3
    elif slack < -1e-9:
        assert code == 2
    else:
        assert code == 0


def test_verify_config_error(tmp_path):
    assert run(tmp_path, "verify", None, "--trials", "0") == 1


def test_verify_byte_identical(tmp_path):
    assert run(tmp_path, "verify", {"trials": 5}, "--seed", "4") == 0
    first = (tmp_path / "out" / "campaign.json").read_bytes()
    assert run(tmp_path, "verify", {"trials": 5}, "--seed", "4") == 0
    assert (tmp_path / "out" / "campaign.json").read_bytes() == first


def test_sweep_grid(tmp_path):
    cfg = {"aggregate": {"rate": 1, "burst": 4}, "k_values": [1, 2, 4], "policies": ["all_to_one"],
           "loads": [0.5, 1.0]}
    assert run(tmp_path, "sweep", cfg) == 0
    rows = read_csv(tmp_path / "out" / "sweep.csv")
    assert rows[0] == cli.SWEEP_HEADER
    by_load = {}
    for r in rows[1:]:
        by_load.setdefault(r[2], []).append((int(r[0]), float(r[3])))
    for cells in by_load.values():
        gaps = [g for _, g in sorted(cells)]
        assert gaps[0] == 0.0
        assert all(a <= b for a, b in zip(gaps, gaps[1:]))


def test_sweep_empty_grid(tmp_path):
    assert run(tmp_path, "sweep", {"aggregate": {"rate": 1, "burst": 2}, "k_values": []}) == 0
    assert read_csv(tmp_path / "out" / "sweep.csv") == [cli.SWEEP_HEADER]
