import csv
import io
import json

import pytest

from mtlplan.cli import CSV_HEADER, EXIT_ERROR, EXIT_FAILURES, EXIT_OK, ReportRow, RunReport, main
from mtlplan.scenario import builtin_scenario, scenario_to_dict


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def report_rows(text):
    """Data rows of the report table: lines after the dashed rule up to the summary block."""
    lines = text.splitlines()
    start = next(i for i, ln in enumerate(lines) if ln.startswith("---")) + 1
    end = next(i for i, ln in enumerate(lines) if ln.startswith("minimum separation"))
    return lines[start:end]


@pytest.fixture(scope="module")
def two_uav_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("n2")
    code = main(["plan", "--builtin", "rescue", "-N", "2", "--out", str(out)])
    return code, out


def test_plan_two_uavs(two_uav_run):
    code, out = two_uav_run
    assert code == EXIT_OK
    report = (out / "report.txt").read_text()
    rows = report_rows(report)
    assert len(rows) == 12
    assert all(r.endswith("pass") for r in rows)
    assert "summary: PASS" in report
    assert "semantic check: pass" in report
    assert "Time (s)" not in report


def test_plan_csv_schema(two_uav_run):
    _, out = two_uav_run
    rows = list(csv.reader(io.StringIO((out / "trajectories.csv").read_text())))
    assert tuple(rows[0]) == CSV_HEADER
    assert {r[0] for r in rows[1:]} == {"uav1", "uav2"}
    assert rows[1][1] == "0"


def test_plan_one_uav_is_deterministic(tmp_path, capsys):
    outs = []
    for k in range(2):
        d = tmp_path / str(k)
        code, text, _ = run(capsys, "plan", "--builtin", "rescue", "-N", "1", "--out", str(d))
        assert code == EXIT_OK
        rows = report_rows(text)
        assert len(rows) == 6
        # waits column is the second to last
        assert all(r.split()[-2] == "0" for r in rows)
        outs.append(((d / "trajectories.csv").read_bytes(), (d / "report.txt").read_bytes()))
    assert outs[0] == outs[1]


def test_plan_scenario_file_and_lp_export(tmp_path, capsys):
    data = scenario_to_dict(builtin_scenario("rescue", 1))
    data["missions"][0]["subtasks"] = data["missions"][0]["subtasks"][:1]
    data["missions"][0]["total_steps"] = 5
    path = tmp_path / "s.json"
    path.write_text(json.dumps(data), encoding="utf-8")
    lp = tmp_path / "lp"
    code, text, _ = run(capsys, "plan", "--scenario", str(path), "--export-lp", str(lp))
    assert code == EXIT_OK
    assert len(report_rows(text)) == 1
    files = sorted(lp.glob("*.lp"))
    assert files and all(f.read_text().startswith("\\") for f in files)
    code, text, _ = run(capsys, "export-lp", "--scenario", str(path), "--out", str(tmp_path / "lp2"))
    assert code == EXIT_OK and text.strip()


def test_failing_mission_exit_code(tmp_path, capsys):
    data = scenario_to_dict(builtin_scenario("rescue", 1))
    data["missions"][0]["total_steps"] = 10
    path = tmp_path / "s.json"
    path.write_text(json.dumps(data), encoding="utf-8")
    code, text, _ = run(capsys, "plan", "--scenario", str(path))
    assert code == EXIT_FAILURES
    assert "summary: FAIL" in text


def test_short_sweep_finds_no_limit(capsys):
    code, text, _ = run(capsys, "plan", "--builtin", "rescue", "-N", "1", "--capacity-sweep")
    assert code == EXIT_FAILURES
    assert "N=1: feasible" in text
    assert "no capacity limit" in text


def test_check_trace_pass_and_fail(two_uav_run, capsys):
    _, out = two_uav_run
    csv_path = str(out / "trajectories.csv")
    code, text, _ = run(capsys, "check-trace", "--builtin", "rescue", "--csv", csv_path, "--uav", "uav1",
                        "--formula", "A & F[0,5] A_prime & F[0,40] F_prime & G !O")
    assert code == EXIT_OK and text.startswith("pass")
    code, text, _ = run(capsys, "check-trace", "--builtin", "rescue", "--csv", csv_path, "--uav", "uav1",
                        "--formula", "G !A")
    assert code == EXIT_FAILURES
    assert "first violation at t=0" in text


def test_check_trace_schema_errors(two_uav_run, tmp_path, capsys):
    _, out = two_uav_run
    lines = (out / "trajectories.csv").read_text().splitlines()
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join(lines[:3] + [lines[3].rsplit(",", 2)[0]]) + "\n")
    code, _, err = run(capsys, "check-trace", "--builtin", "rescue", "--csv", str(bad), "--formula", "TRUE")
    assert code == EXIT_ERROR and "fields" in err
    bad.write_text("a,b\n")
    code, _, err = run(capsys, "check-trace", "--builtin", "rescue", "--csv", str(bad), "--formula", "TRUE")
    assert code == EXIT_ERROR and "header" in err


def test_usage_errors(capsys):
    assert run(capsys, "plan")[0] == EXIT_ERROR
    assert run(capsys, "plan", "--builtin", "maze")[0] == EXIT_ERROR
    assert run(capsys, "bogus")[0] == EXIT_ERROR
    assert run(capsys, "check-trace", "--builtin", "rescue", "--csv", "/nonexistent.csv",
               "--formula", "TRUE")[0] == EXIT_ERROR
    assert run(capsys, "export-lp", "--builtin", "rescue")[0] == EXIT_ERROR


def test_prop_suite(capsys):
    code, text, _ = run(capsys, "prop-suite", "--pairs", "20", "--seed", "3")
    assert code == EXIT_OK
    assert text.count("20/20") == 2


def test_report_pass_flags_follow_columns():
    rows = [ReportRow("u", "a", "f", "Steer", 0.1, 5, 5, 0), ReportRow("u", "b", "f", "Steer", 0.1, 6, 5, 2),
            ReportRow("u", "c", "f", "Steer", 0.1, None, 5, 0)]
    assert [r.passed for r in rows] == [True, False, False]
    rep = RunReport("x", rows[:1])
    assert rep.passed
    rep.rows = rows
    assert not rep.passed
    table = rep.table()
    assert "5 <= 5" in table and "6 > 5" in table and "FAIL" in table
