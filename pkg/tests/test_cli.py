import json

import numpy as np
import pytest
from click.testing import CliRunner

from oracles import fork_graph, joint_by_enumeration
from stochcirc import fixture_text
from stochcirc.cli import main
from stochcirc.lowprec import total_variation
from stochcirc.mrf import random_dot_stereogram
from stochcirc.pgm import read_pgm, write_pgm


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def model_file(tmp_path):
    path = tmp_path / "fork.json"
    path.write_text(fixture_text("three_var_fork.json"))
    return path


def invoke(runner, args):
    result = runner.invoke(main, args, catch_exceptions=False)
    return result


def test_selftest_passes(runner, tmp_path):
    result = invoke(runner, ["--out-dir", str(tmp_path), "selftest"])
    assert result.exit_code == 0, result.output
    assert "selftest ok" in result.output


def test_unknown_subcommand_usage_error(runner):
    result = runner.invoke(main, ["definitely-not-a-command"])
    assert result.exit_code == 2


def test_fg_validate_good_and_bad(runner, tmp_path, model_file):
    assert invoke(runner, ["fg", "validate", str(model_file)]).exit_code == 0
    bad = tmp_path / "bad.json"
    bad.write_text('{"variables": [{"name": "X", "arity": 2}], '
                   '"factors": [{"name": "f", "vars": ["X"], "table": [1]}]}')
    result = runner.invoke(main, ["fg", "validate", str(bad)])
    assert result.exit_code == 3


def test_query_marginals_match_oracle(runner, tmp_path, model_file):
    out = tmp_path / "out"
    result = invoke(runner, ["--seed", "11", "--out-dir", str(out), "query",
                             str(model_file), "--evidence", "C=1",
                             "--sweeps", "40000"])
    assert result.exit_code == 0, result.output
    rows = (out / "marginals.csv").read_text().strip().split("\n")
    assert rows[0] == "variable,value,probability,stderr"
    est = {}
    for line in rows[1:]:
        name, value, prob, _ = line.split(",")
        est.setdefault(name, {})[int(value)] = float(prob)
    joint = joint_by_enumeration(fork_graph({"C": 1}))
    exact_a = joint.sum(axis=(1, 2))
    assert total_variation([est["A"][0], est["A"][1]], exact_a) < 0.02
    meta = json.loads((out / "query_meta.json").read_text())
    assert meta["seed"] == 11
    assert "time" not in json.dumps(meta).lower()


def test_query_rejects_unknown_evidence_variable(runner, tmp_path, model_file):
    result = runner.invoke(main, ["--out-dir", str(tmp_path), "query",
                                  str(model_file), "--evidence", "Q=1"])
    assert result.exit_code == 3


def test_run_trace_artifact(runner, tmp_path, model_file):
    out = tmp_path / "out"
    result = invoke(runner, ["--seed", "3", "--out-dir", str(out), "run",
                             str(model_file), "--sweeps", "50"])
    assert result.exit_code == 0, result.output
    lines = (out / "trace.csv").read_text().strip().split("\n")
    assert lines[0] == "A,B,C"
    assert len(lines) == 51
    meta = json.loads((out / "run_meta.json").read_text())
    assert meta["params"]["fault_rate"] == 0.0


def test_compile_artifact(runner, tmp_path, model_file):
    out = tmp_path / "out"
    result = invoke(runner, ["--out-dir", str(out), "compile", str(model_file)])
    assert result.exit_code == 0, result.output
    doc = json.loads((out / "assembly.json").read_text())
    assert doc["schedule"] == [["A"], ["B", "C"]]
    assert doc["coloring"]["B"] == doc["coloring"]["C"] != doc["coloring"]["A"]


def test_precision_sweep_artifact(runner, tmp_path):
    out = tmp_path / "out"
    result = invoke(runner, ["--seed", "5", "--out-dir", str(out),
                             "precision-sweep", "--outcomes", "50",
                             "--per-bin", "50", "--bits", "4,8"])
    assert result.exit_code == 0, result.output
    lines = (out / "precision_sweep.csv").read_text().strip().split("\n")
    assert lines[0] == "entropy_bits,total_bits,frac_bits,mean_kl,max_kl,n"
    bits = {int(line.split(",")[1]) for line in lines[1:]}
    assert bits == {4, 8}


def test_gate_sample_artifact(runner, tmp_path):
    cpt = tmp_path / "cpt.json"
    cpt.write_text('{"m": 1, "n": 1, "rows": [[0.25, 0.75], [1.0, 0.0]]}')
    out = tmp_path / "out"
    result = invoke(runner, ["--seed", "9", "--out-dir", str(out), "gate",
                             "sample", "--cpt", str(cpt), "--input", "0",
                             "-n", "20000"])
    assert result.exit_code == 0, result.output
    lines = (out / "gate_sample.csv").read_text().strip().split("\n")
    freq1 = float(lines[2].split(",")[2])
    assert abs(freq1 - 0.75) < 0.01


def test_stereo_pipeline(runner, tmp_path):
    pair, _ = random_dot_stereogram(12, 12, 1, seed=0)
    left, right = tmp_path / "l.pgm", tmp_path / "r.pgm"
    write_pgm(left, pair.first)
    write_pgm(right, pair.second)
    out = tmp_path / "out"
    result = invoke(runner, ["--seed", "2", "--out-dir", str(out), "stereo",
                             str(left), str(right), "-d", "3",
                             "--sweeps", "60"])
    assert result.exit_code == 0, result.output
    labels = read_pgm(out / "stereo_labels.pgm")
    assert labels.shape == (12, 12)
    energy = (out / "stereo_energy.csv").read_text().strip().split("\n")
    assert energy[0] == "sweep,energy"
    assert len(energy) == 61
    # most interior pixels at the true shift (gray level 127 for d=1 of 3)
    assert (labels[:, 1:] == 127).mean() > 0.8


def test_motion_pipeline(runner, tmp_path):
    rng = np.random.default_rng(4)
    first = rng.integers(0, 256, size=(10, 10)).astype(np.uint8)
    second = np.roll(first, -1, axis=0)
    a, b = tmp_path / "a.pgm", tmp_path / "b.pgm"
    write_pgm(a, first)
    write_pgm(b, second)
    out = tmp_path / "out"
    result = invoke(runner, ["--seed", "6", "--out-dir", str(out), "motion",
                             str(a), str(b), "-d", "5", "--sweeps", "60"])
    assert result.exit_code == 0, result.output
    assert (out / "motion_labels.pgm").exists()
    assert (out / "motion_meta.json").exists()


def test_dpmm_pipeline(runner, tmp_path):
    data = tmp_path / "data.txt"
    rows = [[0] * 8] * 6 + [[1] * 8] * 6
    data.write_text("\n".join(" ".join(map(str, r)) for r in rows) + "\n")
    out = tmp_path / "out"
    result = invoke(runner, ["--seed", "8", "--out-dir", str(out), "dpmm",
                             "run", str(data), "--sweeps", "150",
                             "--burn-in", "50"])
    assert result.exit_code == 0, result.output
    hist = (out / "cluster_counts.csv").read_text().strip().split("\n")
    counts = {int(l.split(",")[0]): int(l.split(",")[1]) for l in hist[1:]}
    assert max(counts, key=counts.get) == 2
    assert any(p.name.startswith("cluster_00") for p in out.iterdir())
    assign = (out / "assignments.csv").read_text().strip().split("\n")
    assert len(assign) == 151


def test_spike_pipeline(runner, tmp_path, model_file):
    out = tmp_path / "out"
    result = invoke(runner, ["--seed", "10", "--out-dir", str(out), "spike",
                             "run", str(model_file), "--sweeps", "100"])
    assert result.exit_code == 0, result.output
    raster = (out / "raster.csv").read_text().strip().split("\n")
    assert raster[0] == "time,variable,unit"
    trace = (out / "spike_trace.csv").read_text().strip().split("\n")
    assert trace[0] == "A,B,C"
    assert len(trace) == 101


def test_fault_report_pipeline(runner, tmp_path, model_file):
    out = tmp_path / "out"
    result = invoke(runner, ["--seed", "12", "--out-dir", str(out),
                             "fault-report", str(model_file),
                             "--sweeps", "4000"])
    assert result.exit_code == 0, result.output
    lines = (out / "fault_report.csv").read_text().strip().split("\n")
    assert lines[0] == "fault_rate,kl_bits"
    assert len(lines) == 5


def test_byte_identical_reruns_and_thread_independence(runner, tmp_path, model_file):
    outputs = []
    for trial, threads in [(0, "1"), (1, "1"), (2, "4")]:
        out = tmp_path / f"out{trial}"
        result = invoke(runner, ["--seed", "99", "--out-dir", str(out),
                                 "--threads", threads, "query",
                                 str(model_file), "--sweeps", "3000"])
        assert result.exit_code == 0, result.output
        outputs.append((out / "marginals.csv").read_bytes())
    assert outputs[0] == outputs[1] == outputs[2]


def test_float_format_flag(runner, tmp_path, model_file):
    out = tmp_path / "out"
    result = invoke(runner, ["--format", "float", "--out-dir", str(out),
                             "query", str(model_file), "--sweeps", "2000"])
    assert result.exit_code == 0, result.output


def test_global_schedule_and_fault_flags(runner, tmp_path, model_file):
    out = tmp_path / "out"
    result = invoke(runner, ["--schedule", "random-scan", "--fault-rate",
                             "0.01", "--seed", "4", "--out-dir", str(out),
                             "run", str(model_file), "--sweeps", "500"])
    assert result.exit_code == 0, result.output
    meta = json.loads((out / "run_meta.json").read_text())
    assert meta["params"]["fault_rate"] == 0.01
    assert meta["params"]["schedule"] == "random-scan"


def test_dpmm_idx_input(runner, tmp_path):
    images = np.zeros((8, 2, 4), dtype=np.uint8)
    images[4:] = 255
    blob = bytes([0, 0, 0x08, 3])
    for dim in images.shape:
        blob += dim.to_bytes(4, "big")
    blob += images.tobytes()
    idx = tmp_path / "digits.idx"
    idx.write_bytes(blob)
    out = tmp_path / "out"
    result = invoke(runner, ["--seed", "1", "--out-dir", str(out), "dpmm",
                             "run", str(idx), "--idx", "--sweeps", "100",
                             "--burn-in", "20"])
    assert result.exit_code == 0, result.output
    hist = (out / "cluster_counts.csv").read_text().strip().split("\n")
    counts = {int(l.split(",")[0]): int(l.split(",")[1]) for l in hist[1:]}
    assert max(counts, key=counts.get) == 2


def test_bad_format_flag(runner, tmp_path, model_file):
    result = runner.invoke(main, ["--format", "nope,x", "--out-dir",
                                  str(tmp_path), "query", str(model_file)])
    assert result.exit_code == 6


@pytest.mark.parametrize("args", [
    [], ["gate", "sample"], ["precision-sweep"], ["fg", "validate"],
    ["compile"], ["query"], ["run"], ["fault-report"], ["stereo"],
    ["motion"], ["dpmm", "run"], ["spike", "run"], ["selftest"],
])
def test_every_subcommand_has_help(runner, args):
    result = runner.invoke(main, args + ["--help"])
    assert result.exit_code == 0
    assert "Usage" in result.output
