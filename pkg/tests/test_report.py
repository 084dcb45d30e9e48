import json

import pytest

from amn.asymptote import geometric_schedule, subadditive_limit
from amn.report import (
    CSV_HEADER,
    AnalysisConfig,
    SCHEMA_VERSION,
    analyze,
    convergence_csv,
    dumps_report,
    loads_report,
    verify,
)
from amn.space import parse_spec

FAST = AnalysisConfig(samples=300, n_max=2**14, quad=16)


@pytest.fixture(scope="module")
def lp_report():
    return analyze(parse_spec("zoo:lp?field=R&dim=3&p=2"), FAST, timestamp="T")


def test_report_fields(lp_report):
    for key in ("space_label", "field", "dim", "constants", "asymptotic_fit", "sum_condition",
                "verdict", "null_basis", "norm_samples", "bound_check", "homogeneity",
                "prop3_crosscheck", "config", "schema_version"):
        assert key in lp_report
    assert lp_report["verdict"] == "NORMABLE"
    assert lp_report["classification"] == "AMN"
    c = lp_report["constants"]
    assert (c["c0"], c["c1"], c["c2"], c["c3"]) == (0.0, 1.0, 0.0, 0.0)
    assert lp_report["bound_check"]["violations"] == 0
    assert lp_report["config"]["seed"] == 42
    sample = lp_report["norm_samples"][0]
    assert set(sample) == {"point", "raw_distance_to_0", "norm_estimate", "upper_envelope",
                           "last_gap"}
    assert sample["norm_estimate"] == pytest.approx(sample["raw_distance_to_0"], abs=1e-9)


def test_report_round_trips_byte_identical(lp_report):
    text = dumps_report(lp_report)
    assert text.endswith("\n")
    assert dumps_report(loads_report(text)) == text


def test_report_is_deterministic_except_timestamp():
    space = parse_spec("zoo:warp?base=lp&p=2&dim=2&c=10")
    a = analyze(space, FAST, timestamp="A")
    b = analyze(space, FAST, timestamp="B")
    a.pop("generated_at"), b.pop("generated_at")
    assert dumps_report(a) == dumps_report(b)


def test_loads_rejects_unknown_major_version(lp_report):
    doc = dict(lp_report, schema_version="2.0")
    with pytest.raises(ValueError, match="schema"):
        loads_report(json.dumps(doc))
    minor = dict(lp_report, schema_version=SCHEMA_VERSION.split(".")[0] + ".7")
    assert loads_report(json.dumps(minor))["schema_version"].endswith(".7")


def test_quasi_lp_report_has_violated_verdict():
    doc = analyze(parse_spec("zoo:quasi-lp?dim=2&p=0.5"), FAST, timestamp="T")
    assert doc["constants"]["divergent"] is True
    assert doc["verdict"] == "HYPOTHESES_VIOLATED"
    assert doc["bound_check"] is None
    assert len(doc["null_basis"]) == 2


def test_bounded_dir_report_quotient():
    doc = analyze(parse_spec("zoo:bounded-dir?dim=2&cap=1"), FAST, timestamp="T")
    assert doc["verdict"] == "NORMABLE"
    assert doc["classification"] == "MN_QUOTIENT"
    (b,) = doc["null_basis"]
    assert abs(b[1]) >= 0.999


def test_convergence_csv_layout():
    est = subadditive_limit(lambda n: 3.0 * n + 1.0, schedule=geometric_schedule(8))
    lines = convergence_csv(est).splitlines()
    assert lines[0] == "n,a_n,a_n_over_n,upper_envelope"
    assert ",".join(CSV_HEADER) == lines[0]
    assert lines[1] == "1,4.0,4.0,4.0"
    assert lines[-1] == "8,25.0,3.125,3.125"
    assert len(lines) == 5


@pytest.mark.parametrize("spec", ["zoo:lp?field=C&dim=2&p=2", "zoo:bounded-dir?dim=2&cap=1",
                                  "zoo:quasi-lp?dim=2&p=0.5", "zoo:lp?dim=2&jitter=0.25"])
def test_verify_passes_on_zoo(spec):
    checks = verify(parse_spec(spec), FAST)
    failed = [c for c in checks if not c.passed]
    assert not failed, failed
    names = {c.name for c in checks}
    assert {"metric_axioms", "prop1_bound", "prop3_exchange", "seminorm_triangle",
            "homogeneity", "theorem2_bounds", "sum_condition"} <= names


def test_verify_fails_on_impossible_tolerance():
    cfg = AnalysisConfig(samples=300, n_max=2**10, quad=16, tol_null=1e-12)
    checks = verify(parse_spec("zoo:bounded-dir?dim=2&cap=1"), cfg)
    failed = {c.name for c in checks if not c.passed}
    assert "null_space_matches_analytic" in failed
