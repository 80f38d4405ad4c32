import json

import pytest

from qmomap.cli import main


def run(capsys, *argv):
    rc = main(list(argv))
    out = capsys.readouterr()
    return rc, out.out, out.err


def test_star_gutt_so3(capsys):
    rc, out, _ = run(capsys, "star", "gutt", "--f", "th1", "--g", "th2", "--algebra", "so3rot")
    assert rc == 0
    assert json.loads(out) == {"0": "th1*th2", "1": "-1/2*i*th3"}


def test_star_gutt_routes_agree(capsys):
    args = ["star", "gutt", "--f", "th1^2", "--g", "th2*th3", "--algebra", "heisenberg", "--order", "3"]
    _, pbw, _ = run(capsys, *args)
    _, phase, _ = run(capsys, *args, "--route", "phase")
    assert json.loads(pbw) == json.loads(phase)


def test_star_gutt_defaults_to_abelian(capsys):
    rc, out, _ = run(capsys, "star", "gutt", "--f", "th1", "--g", "th2")
    assert rc == 0 and json.loads(out) == {"0": "th1*th2"}


def test_star_standard_text(capsys):
    rc, out, _ = run(capsys, "star", "standard", "--f", "xi1", "--g", "x1", "--format", "text")
    assert rc == 0
    assert out.strip() == "x1*xi1 + hbar*(-i)"


def test_star_standard_rejects_theta(capsys):
    rc, _, err = run(capsys, "star", "standard", "--f", "th1", "--g", "x1")
    assert rc == 2 and "x and xi" in err


def test_parse_error_exit_code(capsys):
    rc, _, err = run(capsys, "star", "standard", "--f", "x1*(", "--g", "x1")
    assert rc == 2 and "error" in err


def test_qmm_apply(capsys):
    rc, out, _ = run(capsys, "qmm", "apply", "--model", "translations", "--u", "th1")
    assert rc == 0 and json.loads(out) == {"0": "-xi1"}
    rc, _, _ = run(capsys, "qmm", "apply", "--model", "translations")
    assert rc == 2


def test_qmm_verify_and_output_file(capsys, tmp_path):
    dest = tmp_path / "report.json"
    rc, _, _ = run(capsys, "qmm", "verify", "--model", "quadratic1d", "--suite", "mc,linear,casimir", "--out", str(dest))
    assert rc == 0
    data = json.loads(dest.read_text())
    assert data["summary"]["ok"] and data["summary"]["failed"] == 0
    assert {c["test"] for c in data["checks"]} == {"mc", "linear", "casimir"}


def test_qmm_verify_broken_model_skips(capsys):
    rc, out, _ = run(capsys, "qmm", "verify", "--model", "broken_gsystem", "--suite", "mc,unital")
    assert rc == 1
    data = json.loads(out)
    assert [c["status"] for c in data["checks"]] == ["FAIL", "SKIP"]


def test_unknown_suite(capsys):
    rc, _, err = run(capsys, "qmm", "verify", "--model", "translations", "--suite", "bogus")
    assert rc == 2 and "bogus" in err


def test_gsystem_check(capsys):
    rc, out, _ = run(capsys, "gsystem", "check", "--model", "broken_gsystem")
    assert rc == 1
    assert json.loads(out)["location"][0] == [1, "v1*w1", "-1"]
    rc, _, _ = run(capsys, "gsystem", "check", "--model", "so3rot")
    assert rc == 0


def test_graphs(capsys):
    rc, out, _ = run(capsys, "graphs", "enumerate", "--ext", "2", "--max-power", "1")
    assert rc == 0 and len(json.loads(out)) == 9
    rc, _, err = run(capsys, "graphs", "enumerate", "--max-power", "7")
    assert rc == 2


def test_casimir(capsys):
    rc, out, _ = run(capsys, "casimir", "check", "--f", "th1^2+th2^2+th3^2", "--model", "so3rot")
    assert rc == 0 and json.loads(out)["casimir"]
    rc, out, _ = run(capsys, "casimir", "check", "--f", "th1", "--model", "so3rot")
    assert rc == 1 and json.loads(out)["residuals"]["th2"] != "0"


def test_missing_model_and_bad_args(capsys):
    rc, _, err = run(capsys, "qmm", "apply", "--model", "nope", "--u", "th1")
    assert rc == 2 and "nope" in err
    assert main(["frobnicate"]) == 2
    assert main([]) == 2


def test_report_single_model(capsys):
    rc, out, _ = run(capsys, "report", "--model", "translations", "--deg", "1")
    assert rc == 0
    data = json.loads(out)
    assert data["ok"] and data["models"][0]["suites"]["mc"] == "PASS"


def test_documented_invocations(capsys):
    rc, out, _ = run(capsys, "star", "gutt", "--f", "1", "--g", "th1")
    assert rc == 0 and json.loads(out) == {"0": "th1"}
    rc, out, _ = run(capsys, "star", "standard", "--dim", "1", "--f", "xi1", "--g", "x1", "--order", "1")
    assert json.loads(out) == {"0": "x1*xi1", "1": "-i"}
    rc, out, _ = run(capsys, "qmm", "verify", "--model", "so3rot.json", "--suite", "morphism", "--order", "2", "--deg", "2")
    assert rc == 0 and json.loads(out)["summary"]["passed"] == 100
