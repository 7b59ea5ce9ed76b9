import json

import pytest
from click.testing import CliRunner

from cli import cli
from scripts.interpreter import encode_call
from scripts.step_04_codegen import selector

from .conftest import CORPUS

WCET = str(CORPUS / "wcet_lists.mlc")
BOOK = str(CORPUS / "orderbooks" / "example_2x2.book")
HAPPY = str(CORPUS / "scenarios" / "happy_path.json")


@pytest.fixture
def runner(in_repo):
    return CliRunner()


@pytest.fixture
def local_settings(tmp_path):
    path = tmp_path / "settings.json"
    path.write_text(json.dumps({"paths": {"logs_dir": str(tmp_path / "logs"), "out_dir": str(tmp_path / "out")}}))
    return str(path)


def test_compile_writes_artifacts(runner, tmp_path):
    result = runner.invoke(cli, ["compile", WCET, "-o", str(tmp_path)])
    assert result.exit_code == 0, result.output
    assert {p.name for p in tmp_path.iterdir()} == {"wcet_lists.evm", "wcet_lists.asm", "wcet_lists.gasmap"}


def test_compile_json(runner, tmp_path):
    result = runner.invoke(cli, ["compile", WCET, "-o", str(tmp_path), "--json"])
    data = json.loads(result.output)
    assert data["contract"] == "wcet_lists"
    assert data["size"] > 0 and data["annotations"] > 0


def test_compile_errors(runner, tmp_path):
    bad = tmp_path / "bad.mlc"
    bad.write_text("let public f () : unit = try () with _ -> ()")
    result = runner.invoke(cli, ["compile", str(bad), "-o", str(tmp_path)])
    assert result.exit_code == 1
    assert "no-try-with" in result.output
    assert runner.invoke(cli, ["compile", str(tmp_path / "absent.mlc")]).exit_code == 2


def test_check_gas_passes_on_the_corpus(runner):
    result = runner.invoke(cli, ["check-gas", WCET])
    assert result.exit_code == 0, result.output
    assert "PATH length_@" in result.output
    assert "FAIL" not in result.output


def test_check_gas_json_and_tighten(runner):
    result = runner.invoke(cli, ["check-gas", WCET, "--json", "--tighten"])
    assert result.exit_code == 0, result.output
    data = json.loads(result.output)
    assert data["passed"] is True
    assert {(t["used"], t["alloc"]) for t in data["tightened"] if t["function"] == "length_"} == {(71, 0), (108, 0)}


def test_check_gas_fails_on_an_underestimate(runner, tmp_path):
    source = (CORPUS / "wcet_lists.mlc").read_text(encoding="utf-8").replace("add_gas 71 0; 0", "add_gas 70 0; 0")
    lowered = tmp_path / "lowered.mlc"
    lowered.write_text(source)
    result = runner.invoke(cli, ["check-gas", str(lowered), "--function", "length_"])
    assert result.exit_code == 1
    assert "FAIL" in result.output


def test_check_gas_report(runner, tmp_path):
    report = tmp_path / "wcet.md"
    result = runner.invoke(cli, ["check-gas", WCET, "--report", str(report)])
    assert result.exit_code == 0, result.output
    assert report.read_text().startswith("# Gas report: wcet_lists")


@pytest.mark.parametrize("args", [
    ["--function", "nope"],
    ["--json", "--report", "x.md"],
    ["--path-cap", "0"],
    ["--schedule", "absent_schedule.txt"],
])
def test_check_gas_usage_errors(runner, args):
    assert runner.invoke(cli, ["check-gas", WCET] + args).exit_code == 2


def test_run_compiled_bytecode(runner, tmp_path):
    runner.invoke(cli, ["compile", WCET, "-o", str(tmp_path)])
    code = str(tmp_path / "wcet_lists.evm")
    calldata = encode_call(selector("g_"), [3]).hex()
    result = runner.invoke(cli, ["run", code, "--calldata", calldata, "--json"])
    assert result.exit_code == 0, result.output
    data = json.loads(result.output)
    assert data["outcome"] == "return"
    assert int(data["data"], 16) == 3
    reverted = runner.invoke(cli, ["run", code, "--calldata", "deadbeef"])
    assert reverted.exit_code == 1
    assert reverted.output.startswith("Revert(")


def test_run_trace_excludes_json(runner, tmp_path):
    code = tmp_path / "add.evm"
    code.write_text("6001600201")
    traced = runner.invoke(cli, ["run", str(code), "--trace"])
    assert traced.exit_code == 0
    assert traced.output.splitlines()[0].startswith("pc=0x0000 op=PUSH1")
    assert "gas_used=9" in traced.output
    assert runner.invoke(cli, ["run", str(code), "--trace", "--json"]).exit_code == 2


def test_match(runner):
    result = runner.invoke(cli, ["match", BOOK, "--oracle"])
    assert result.exit_code == 0
    assert result.output.splitlines() == ["TRADE seller=0 buyer=0 amount=3", "TRADE seller=0 buyer=1 amount=1",
                                          "TRADE seller=1 buyer=1 amount=1", "TOTAL 5", "ORACLE 5 AGREE"]


def test_match_rejects_unsorted_books(runner, tmp_path):
    book = tmp_path / "unsorted.book"
    book.write_text("buys 2 sells 1\n0x01 1 5\n0x02 1 9\n0x03 1 1\n")
    result = runner.invoke(cli, ["match", str(book)])
    assert result.exit_code == 2
    assert "not sorted" in result.output
    assert runner.invoke(cli, ["match", str(book), "--sort"]).exit_code == 0


@pytest.mark.parametrize("text, message", [("buys 0 sells 1\n0x01 1 5\n", "non-empty"),
                                           ("buys 1 sells 1\n0x01 0 5\n0x02 1 1\n", "has no tokens")])
def test_match_rejects_books_trading_cannot_take(runner, tmp_path, text, message):
    book = tmp_path / "bad.book"
    book.write_text(text)
    result = runner.invoke(cli, ["match", str(book), "--oracle"])
    assert result.exit_code == 2
    assert message in result.output
    assert "Traceback" not in result.output


def test_scenario_native(runner, local_settings):
    result = runner.invoke(cli, ["scenario", HAPPY, "--mode", "native", "--json", "--settings", local_settings])
    assert result.exit_code == 0, result.output
    [summary] = json.loads(result.output)
    assert summary["passed"] is True
    assert set(summary["steps"]) == {"native"}


def test_scenario_schema(runner):
    result = runner.invoke(cli, ["scenario", "--schema"])
    assert result.exit_code == 0
    assert "steps" in json.loads(result.output)["properties"]


def test_scenario_errors(runner, tmp_path, local_settings):
    broken = tmp_path / "broken.json"
    broken.write_text("{\"name\": 1}")
    assert runner.invoke(cli, ["scenario", str(broken), "--settings", local_settings]).exit_code == 2


def test_measure(runner):
    result = runner.invoke(cli, ["measure", WCET, "mk_list42", "--entry", "g_", "--from", "0", "--to", "4", "--json"])
    assert result.exit_code == 0, result.output
    data = json.loads(result.output)
    assert data["step"] <= 159 and data["alloc_step"] <= 96
    assert runner.invoke(cli, ["measure", WCET, "mk_list42", "--from", "3", "--to", "1"]).exit_code == 2


def test_disassemble(runner, tmp_path):
    code = tmp_path / "jump.evm"
    code.write_text("0x6003565b00")
    result = runner.invoke(cli, ["disassemble", str(code)])
    assert result.exit_code == 0
    assert result.output.splitlines() == ["    PUSH1 0x3", "    JUMP", "L0x0003:", "    JUMPDEST", "    STOP"]
