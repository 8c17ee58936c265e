from __future__ import annotations

import math

import pytest

from gcts.casefile import builtin_case
from gcts.cli import main
from gcts.pipeline import (
    EXIT_DEGENERATE,
    EXIT_INFEASIBLE,
    EXIT_INTERNAL,
    EXIT_OK,
    EXIT_VALIDATION,
    PipelineOptions,
    run_pipeline,
)
from gcts.report import SECTIONS, build_tables, emit_report, parse_machine, render_human, render_machine

INFEASIBLE_CASE = """
[case]
name = short
[buses]
1 1
2 1
3 2
4 2
[lines]
1 1 2 1 inf
2 2 3 1 5
3 3 4 1 inf
[generators]
G1 1 10 0 100
[loads]
4 20
[bids]
b 1-2 2-3 0 100
"""


def _run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_case1_settlement_table_row(capsys):
    code, out, _ = _run(capsys, "settle", "--case", "case1", "--scenario", "x24_inf")
    assert code == EXIT_OK
    row = next(line for line in out.splitlines() if line.startswith("Congestion rent afforded"))
    assert row.split()[-3:] == ["0.00", "0.00", "10.00"]


def test_report_exits_zero_on_certified_case(capsys):
    code, out, err = _run(capsys, "report", "--case", "case1", "--scenario", "x24_inf", "--distributed")
    assert code == EXIT_OK, err
    for title in ("Summary", "Generator dispatch", "Settlement", "Verification", "Price-gap sweep"):
        assert title in out


def test_degenerate_case_exit_codes(capsys):
    assert _run(capsys, "verify", "--case", "case1", "--scenario", "x24_1")[0] == EXIT_DEGENERATE
    assert _run(capsys, "recover", "--case", "case1", "--scenario", "x24_1")[0] == EXIT_DEGENERATE
    code, out, _ = _run(capsys, "clear", "--case", "case1", "--scenario", "x24_1")
    assert code == EXIT_OK  # clearing itself succeeded
    assert "Problems" in out


def test_validation_exit_code(capsys, tmp_path):
    bad = tmp_path / "bad.case"
    bad.write_text("[buses]\n1 x\n")
    code, _, err = _run(capsys, "clear", "--case", str(bad))
    assert code == EXIT_VALIDATION
    assert "line 2" in err
    assert _run(capsys, "clear", "--case", "case1", "--scenario", "x24_inf", "--ref-bus", "2")[0] == EXIT_VALIDATION


def test_infeasible_exit_code(capsys, tmp_path):
    path = tmp_path / "short.case"
    path.write_text(INFEASIBLE_CASE)
    assert _run(capsys, "clear", "--case", str(path))[0] == EXIT_INFEASIBLE


def test_unwritable_output(capsys):
    code, _, err = _run(capsys, "clear", "--case", "case1", "--out", "/nonexistent/dir/report.txt")
    assert code == EXIT_VALIDATION
    assert "cannot write" in err


def test_failed_check_exit_code(capsys, monkeypatch):
    import gcts.pipeline

    monkeypatch.setattr(gcts.pipeline.ReportBundle, "verified", property(lambda self: False))
    assert _run(capsys, "verify", "--case", "case1", "--scenario", "x24_inf")[0] == EXIT_INTERNAL


def test_out_file_written(capsys, tmp_path):
    path = tmp_path / "report.csv"
    code, out, _ = _run(capsys, "settle", "--case", "case1", "--scenario", "x24_inf", "--format", "machine", "--out", str(path))
    assert code == EXIT_OK and out == ""
    values = parse_machine(path.read_text())
    assert float(values[("settlement", "Congestion rent afforded", "bids 1-2")]) == pytest.approx(10.0)


def test_machine_output_is_deterministic(capsys):
    argv = ("report", "--case", "case2", "--scenario", "S4", "--format", "machine")
    first = _run(capsys, *argv)[1]
    second = _run(capsys, *argv)[1]
    assert first == second


def test_machine_round_trip():
    bundle = run_pipeline(builtin_case("case2", "S4"), PipelineOptions(sweep=True))
    tables = build_tables(bundle, SECTIONS["report"])
    parsed = parse_machine(render_machine(tables))
    count = 0
    for t in tables:
        for label, cells in t.rows:
            for col, v in zip(t.columns, cells):
                if v is None:
                    continue
                text = parsed[(t.name, label, col)]
                if isinstance(v, bool):
                    assert text == ("true" if v else "false")
                elif isinstance(v, float):
                    assert float(text) == v or (math.isnan(v) and math.isnan(float(text)))
                else:
                    assert text == str(v)
                count += 1
    assert count == len(parsed)


def test_human_format_two_decimals():
    bundle = run_pipeline(builtin_case("case1", "x24_inf"), PipelineOptions())
    text = render_human(build_tables(bundle, ("summary", "prices")))
    assert "140.00" in text
    assert "-0.00" not in text
    assert emit_report(bundle, "table", sections=("summary", "prices")) == text


def test_pipeline_collects_section_errors():
    bundle = run_pipeline(builtin_case("case1", "x24_1"))
    assert set(bundle.errors) == {"recover"}
    assert bundle.settlement is not None  # settlement still runs on the selected bundle
    assert bundle.exit_code == EXIT_DEGENERATE
