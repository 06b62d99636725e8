import json

import pytest

from lreq.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def machine(capsys, *argv):
    code, out, _ = run_cli(capsys, *argv, "--format", "machine")
    return code, json.loads(out)


def test_effects(capsys):
    code, out, _ = run_cli(capsys, "effects", "unit.lreq")
    assert code == 0 and out.strip() == "unit, ε"
    code, doc = machine(capsys, "effects", "services/e9.lreq")
    assert code == 0 and doc["command"] == "effects"


def test_mnf(capsys):
    code, out, _ = run_cli(capsys, "mnf", "besttravel.lreq")
    assert code == 0
    assert out.splitlines()[0] == "bound: 223"
    assert "needs runtime guard" in out
    code, doc = machine(capsys, "mnf", "besttravel.lreq", "--trail")
    assert doc["bound"] == 223 and doc["trail"]


def test_plans(capsys):
    code, doc = machine(capsys, "plans", "besttravel.lreq")
    assert code == 0 and len(doc["plans"]) == 128
    code, out, _ = run_cli(capsys, "plans", "hotel.lreq")
    assert out.count("\n#") == 4


@pytest.mark.parametrize(
    "plan, code, outcome",
    [("rho2=e7,rho3=e6", 4, "MetricHalt"), ("rho2=e8,rho3=e6", 0, "Done")],
)
def test_run_exit_codes(capsys, plan, code, outcome):
    got, doc = machine(capsys, "run", "hotel.lreq", "--plan", plan)
    assert got == code and doc["outcome"]["outcome"] == outcome


def test_run_function_program_with_argument(capsys):
    code, out, _ = run_cli(capsys, "run", "services/e1.lreq", "--arg", "AIRPORT")
    assert code == 0
    assert "Done FLIGHT_No metric 15 trace search_flight_for(AIRPORT) reserve(FLIGHT_No)" in out


def test_run_exhaustive(capsys):
    code, doc = machine(capsys, "run", "services/e2.lreq", "--arg", "AIRPORT", "--scheduler", "exhaustive",
                        "--guard", "is_available=false", "--guard", "can_overbook=both")
    assert code == 0
    assert sorted(o["value"] for o in doc["outcomes"]) == ["FLIGHT_No", "NO_FLIGHT"]


def test_run_out_of_fuel(capsys):
    code, _, _ = run_cli(capsys, "run", "besttravel.lreq", "--fuel", "3")
    assert code == 5


def test_check(capsys, corpus_dir):
    code, doc = machine(capsys, "check", "besttravel_secure.lreq")
    assert code == 0 and doc["counts"]["Invalid"] == 64
    code, _, err = run_cli(capsys, "check", "besttravel.lreq", "--config", str(corpus_dir / "config_unsigned.json"))
    assert code == 3 and "PlanningError" in err


def test_input_errors(capsys, tmp_path):
    bad = tmp_path / "bad.lreq"
    bad.write_text("*;\n  (")
    code, _, err = run_cli(capsys, "effects", str(bad))
    assert code == 2 and "2:" in err
    code, _, _ = run_cli(capsys, "effects", str(tmp_path / "missing.lreq"))
    assert code == 2
    code, _, _ = run_cli(capsys, "run", "hotel.lreq", "--guard", "is_available=maybe")
    assert code == 2
    code, _, _ = run_cli(capsys, "run", "hotel.lreq", "--plan", "42")
    assert code == 3


def test_semiring_mismatch(capsys):
    code, _, err = run_cli(capsys, "mnf", "hotel.lreq", "--semiring", "TRUST")
    assert code == 2 and err


def test_argparse_rejects_unknown_scheduler(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run", "hotel.lreq", "--scheduler", "random"])
    assert exc.value.code == 2
