import json
import math

import pytest

from amn.cli import main

FAST = ["--samples", "300", "--n-max", "16384", "--quad", "16"]


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_zoo_list(capsys):
    code, out, _ = run(capsys, "zoo", "list")
    assert code == 0
    lines = out.splitlines()
    labels = [line.split("\t")[0] for line in lines]
    assert labels == sorted(labels)
    c_l1 = next(line for line in lines if line.startswith("zoo:c-l1"))
    assert "delta0 = (4/pi)*sum|x_i|" in c_l1
    assert run(capsys, "zoo", "list")[1] == out


def test_norm_eval_lp(capsys):
    code, out, _ = run(capsys, "norm", "eval", "zoo:lp?field=R&dim=2&p=2", "--point", "3,4")
    assert code == 0
    fields = dict(line.split() for line in out.splitlines())
    assert set(fields) == {"value", "upper_envelope", "last_gap"}
    assert abs(float(fields["value"]) - 5.0) <= 1e-12


def test_norm_eval_c_l1_and_warp(capsys):
    _, out, _ = run(capsys, "norm", "eval", "zoo:c-l1?dim=1", "--point", "1,0", "--quad", "256")
    value = float(out.split()[1])
    assert abs(value - 4 / math.pi) <= 1e-3
    _, out, _ = run(capsys, "norm", "eval", "zoo:warp?base=lp&p=2&dim=2&c=10", "--point", "1,0")
    assert abs(float(out.split()[1]) - 1.0) <= 1e-4


@pytest.mark.parametrize("point", ["3", "3,4,5", "a,b", "1,inf"])
def test_norm_eval_malformed_point(capsys, point):
    code, _, err = run(capsys, "norm", "eval", "zoo:lp?dim=2", "--point", point)
    assert code == 2 and "error" in err


def test_convergence_csv(capsys):
    code, out, _ = run(capsys, "convergence", "zoo:warp?base=lp&p=2&dim=2&c=10",
                       "--point", "1,0", "--n-max", "1024")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "n,a_n,a_n_over_n,upper_envelope"
    rows = [[float(v) for v in line.split(",")] for line in lines[1:]]
    assert [r[0] for r in rows] == [2.0**k for k in range(11)]
    for n, _, ratio, _ in rows:
        assert 0 <= ratio - 1.0 <= 10 / n
    ratios = [r[2] for r in rows]
    assert ratios == sorted(ratios, reverse=True)


def test_convergence_lp_constant_column(capsys):
    _, out, _ = run(capsys, "convergence", "zoo:lp?dim=2", "--point", "3,4", "--n-max", "64")
    assert {line.split(",")[2] for line in out.splitlines()[1:]} == {"5.0"}


def test_analyze_writes_file_and_is_deterministic(tmp_path, capsys):
    spec = "zoo:warp?base=lp&p=2&dim=2&c=10"
    paths = [tmp_path / "a.json", tmp_path / "b.json"]
    for p in paths:
        assert main(["analyze", spec, "--seed", "7", *FAST, "--out", str(p)]) == 0
    a, b = (json.loads(p.read_text()) for p in paths)
    a.pop("generated_at"), b.pop("generated_at")
    assert a == b
    assert a["config"]["seed"] == 7


def test_analyze_quasi_lp_exits_zero(capsys):
    code, out, _ = run(capsys, "analyze", "zoo:quasi-lp?dim=2&p=0.5", *FAST)
    assert code == 0
    assert json.loads(out)["verdict"] == "HYPOTHESES_VIOLATED"


@pytest.mark.parametrize("argv", [
    ["analyze", "zoo:nope"],
    ["verify", "zoo:lp?dim=2&bogus=1"],
    ["analyze", "zoo:lp?dim=2", "--seed", "-1"],
    ["analyze", "zoo:lp?dim=2", "--quad", "0"],
    ["frobnicate"],
])
def test_bad_input_exits_two(capsys, argv):
    assert main(argv) == 2


def test_invalid_thread_count_exits_two(capsys, monkeypatch):
    monkeypatch.setenv("AMN_THREADS", "-3")
    code, _, err = run(capsys, "norm", "eval", "zoo:lp?dim=2", "--point", "1,1")
    assert code == 2 and "AMN_THREADS" in err


def test_verify_pass_and_named_failure(capsys):
    code, out, _ = run(capsys, "verify", "zoo:bounded-dir?dim=2&cap=1", *FAST)
    assert code == 0 and out.rstrip().endswith("all checks passed")
    code, out, _ = run(capsys, "verify", "zoo:bounded-dir?dim=2&cap=1", "--tol-null", "1e-12",
                       "--n-max", "1024", "--samples", "300", "--quad", "16")
    assert code == 1
    assert "FAILED:" in out and "null_space_matches_analytic" in out
