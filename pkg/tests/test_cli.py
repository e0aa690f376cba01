import json

import pytest
from click.testing import CliRunner

from upb_locc import __version__
from upb_locc.cli import main


@pytest.fixture
def cli():
    runner = CliRunner()
    return lambda *args: runner.invoke(main, [str(a) for a in args])


def test_build_writes_records(cli, tmp_path):
    out = tmp_path / "u3.json"
    r = cli("build", "--d", 3, "--out", out)
    assert r.exit_code == 0, r.output
    doc = json.loads(out.read_text())
    assert doc["schema"] == 1 and doc["d"] == 3 and len(doc["states"]) == 19
    r = cli("build", "--d", 4)
    assert len(json.loads(r.output)["states"]) == 56


def test_build_rejects_small_d(cli):
    r = cli("build", "--d", 2)
    assert r.exit_code == 2
    assert "d must be ≥ 3" in r.output


def test_build_unwritable_path(cli, tmp_path):
    r = cli("build", "--d", 3, "--out", tmp_path / "missing" / "x.json")
    assert r.exit_code != 0


@pytest.mark.parametrize("d", [3, 7])
def test_verify_passes(cli, d):
    r = cli("verify", "--d", d)
    assert r.exit_code == 0, r.output
    doc = json.loads(r.output)
    assert doc["passed"] and {c["name"] for c in doc["checks"]} == {"cardinality", "labels", "orthogonality", "rank"}


def test_verify_input_roundtrip_and_tamper(cli, tmp_path):
    good = tmp_path / "u.json"
    cli("build", "--d", 3, "--out", good)
    r = cli("verify", "--input", good)
    assert r.exit_code == 0, r.output
    doc = json.loads(good.read_text())
    doc["states"][3]["amplitudes"][0][1] += 0.1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    r = cli("verify", "--input", bad)
    assert r.exit_code == 1
    assert "FAIL orthogonality" in r.output


def test_verify_detects_substituted_state(cli, tmp_path):
    # swapping two labels keeps the set orthogonal but breaks the match with the construction
    good = tmp_path / "u.json"
    cli("build", "--d", 3, "--out", good)
    doc = json.loads(good.read_text())
    s = doc["states"]
    s[0]["label"], s[1]["label"] = s[1]["label"], s[0]["label"]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    r = cli("verify", "--input", bad)
    assert r.exit_code == 1 and "matches-construction" in r.output


def test_verify_truncated_file(cli, tmp_path):
    good = tmp_path / "u.json"
    cli("build", "--d", 3, "--out", good)
    doc = json.loads(good.read_text())
    doc["states"].pop()
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    assert cli("verify", "--input", bad).exit_code == 1


def test_verify_with_probe(cli):
    r = cli("verify", "--d", 3, "--probe", "--restarts", 10, "--seed", 2)
    doc = json.loads(r.output)
    assert r.exit_code == 0
    assert doc["probe"]["best_overlap"] < 1 - 1e-6
    assert "diagnostic only" in doc["probe"]["note"]


def test_verify_needs_a_source(cli):
    assert cli("verify").exit_code == 2


def test_run_t1(cli):
    r = cli("run", "--theorem", "T1")
    assert r.exit_code == 0, r.output
    doc = json.loads(r.output)
    assert doc["ledger"]["formula"] == "1+log2(3) ebits"
    assert doc["tool"]["version"] == __version__
    assert doc["config"]["theorem"] == "T1" and doc["tolerances"]["orthogonality"] == 1e-9
    assert doc["finisher"]["resolved"] == doc["finisher"]["leaves"] == 12
    assert doc["checks"]["finisher"]


def test_run_t2_reports_party_mismatch(cli):
    doc = json.loads(cli("run", "--theorem", "T2").output)
    assert any("statement lists" in n for n in doc["notes"])
    assert doc["ledger"]["expected_ebits"] == pytest.approx(2.0)


def test_run_t3_fails_with_claim_exit_code(cli):
    r = cli("run", "--theorem", "T3")
    assert r.exit_code == 1
    doc = json.loads(r.stdout)
    assert not doc["checks"]["orthogonality"]
    assert any("register correction" in n for n in doc["notes"])
    assert len(doc["finisher"]["unresolved"]) == doc["finisher"]["expected_unresolved"] == 12


def test_run_t6_d8_ledger(cli):
    r = cli("run", "--theorem", "T6", "--d", 8, "--no-finisher")
    assert r.exit_code == 0
    doc = json.loads(r.output)
    assert doc["ledger"]["formula"] == "2·log2(4) = 4 ebits"
    assert doc["finisher"] is None


def test_run_domain_errors(cli):
    assert cli("run", "--theorem", "T2", "--d", 5).exit_code == 2
    assert cli("run", "--theorem", "T4", "--d", 2).exit_code == 2
    assert cli("run", "--theorem", "T9").exit_code == 2
    assert cli("run", "--theorem", "T5", "--schedule", "printed").exit_code == 2
    assert cli("run", "--theorem", "T4", "--bogus").exit_code == 2


def test_run_printed_schedule_fails_checks(cli):
    r = cli("run", "--theorem", "T4", "--d", 5, "--schedule", "printed", "--no-finisher")
    assert r.exit_code == 1


def test_run_trace_embeds_steps(cli):
    doc = json.loads(cli("run", "--theorem", "T1", "--trace", "--no-finisher").output)
    assert any("Step 1" in line for line in doc["trace"])


def test_run_is_byte_identical(cli, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    cli("run", "--theorem", "T5", "--d", 4, "--out", a)
    cli("run", "--theorem", "T5", "--d", 4, "--out", b)
    assert a.read_bytes() == b.read_bytes()


def test_trace_command(cli):
    r = cli("trace", "--theorem", "T1", "--input", "B3[k=0](0,1)")
    assert r.exit_code == 0
    assert "Step 3: Alice measures M_3" in r.output
    assert cli("trace", "--theorem", "T1", "--input", "nope").exit_code == 2


def test_sweep_even_grid(cli, tmp_path):
    out = tmp_path / "costs.csv"
    r = cli("sweep", "--d-min", 4, "--d-max", 40, "--parity", "even", "--csv", out, "--cutoff", 0)
    assert r.exit_code == 0, r.output
    lines = out.read_text().splitlines()
    data = [x for x in lines if not x.startswith("#")]
    assert len(data) == 58
    comments = [x[2:] for x in lines if x.startswith("#")]
    assert comments[:3] == ["T4=T5 at d=4", "T5<T4 for d in [6,24]", "T4<T5 for d>=26"]
    assert any(c.startswith("upb-locc ") for c in comments)
    assert (tmp_path / "costs.gp").exists()


def test_sweep_odd_selection(cli):
    r = cli("sweep", "--d-min", 3, "--d-max", 9, "--parity", "odd", "--theorem", "T4", "--theorem", "T6", "--cutoff", 0)
    data = [x for x in r.output.splitlines() if x and not x.startswith("#")]
    assert len(data) == 9


def test_sweep_usage_errors(cli):
    assert cli("sweep", "--d-min", 4, "--d-max", 4, "--parity", "odd").exit_code == 2
    assert cli("sweep", "--d-min", 2, "--d-max", 4).exit_code == 2
    assert cli("sweep", "--d-min", 6, "--d-max", 4).exit_code == 2


def test_sweep_is_byte_identical(cli, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    cli("sweep", "--d-min", 3, "--d-max", 6, "--csv", a, "--cutoff", 5)
    cli("sweep", "--d-min", 3, "--d-max", 6, "--csv", b, "--cutoff", 5)
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a.gp").read_text().replace("a.csv", "b.csv") == (tmp_path / "b.gp").read_text()
