#!/usr/bin/env python3
"""
MLC-EVM - Command-Line Interface

Compiles ML-style contracts to EVM bytecode, checks their gas annotations,
runs bytecode in the desk interpreter, matches order books and replays
market scenarios. Exit status: 0 success, 1 verification failure,
2 usage or I/O error.
"""

import json
import sys
from pathlib import Path
from typing import List, Optional

import click
from pydantic import BaseModel, ValidationError, model_validator

from scripts.chain import Address, World, uint
from scripts.diagrams import DIAGRAM_REGISTRY
from scripts.errors import MlcError, ScenarioError, StepMismatch
from scripts.interpreter import exec_tx
from scripts.opcodes import ScheduleError, load_schedule
from scripts.orderbook import load_orderbook, nb_token, oracle_max_tokens, trading
from scripts.scenario import Scenario, load_scenario, run_scenario, run_suite
from scripts.settings import load_settings
from scripts.step_06_emit import compile_file, disassemble as disassemble_code, read_code, render_listing, \
    write_artifacts
from scripts.step_07_check_gas import (check_program, measure_constants, render_report, report_dict, tighten,
                                       write_diagrams)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class CliConfig(BaseModel):
    """Options of one invocation merged with settings.json."""
    command: str
    inputs: List[Path] = []
    out_dir: Path = Path("out")
    spec_check: bool = True
    trace: bool = False
    schedule: Optional[Path] = None
    path_cap: int = 100_000
    json_output: bool = False
    report: Optional[Path] = None
    diagrams: Optional[Path] = None

    @model_validator(mode="after")
    def exclusive_outputs(self):
        if self.json_output and self.report is not None:
            raise ValueError("--json and --report are mutually exclusive")
        if self.trace and self.json_output:
            raise ValueError("--trace and --json are mutually exclusive")
        if self.path_cap < 1:
            raise ValueError("--path-cap must be positive")
        return self


def fail(message: str, code: int = EXIT_FAIL):
    click.echo(click.style(message, fg='red'), err=True)
    sys.exit(code)


def make_config(settings: dict, **options) -> CliConfig:
    gas = settings.get("gas", {})
    options.setdefault("out_dir", settings.get("paths", {}).get("out_dir", "out"))
    if options.get("schedule") is None:
        options["schedule"] = gas.get("schedule")
    if options.get("path_cap") is None:
        options["path_cap"] = gas.get("path_cap", 100_000)
    try:
        return CliConfig(**options)
    except ValidationError as e:
        fail(f"Invalid options: {e.errors()[0]['msg']}", EXIT_USAGE)


def schedule_for(config: CliConfig):
    try:
        return load_schedule(config.schedule)
    except (OSError, ScheduleError) as e:
        fail(f"Error loading gas schedule: {e}", EXIT_USAGE)


def compile_or_exit(src):
    try:
        return compile_file(src)
    except OSError as e:
        fail(f"Error reading {src}: {e}", EXIT_USAGE)
    except MlcError as e:
        fail(f"{src}:{e}")


def emit_json(data):
    click.echo(json.dumps(data, indent=2))


def common_options(f):
    f = click.option('--json', 'json_output', is_flag=True, help="Machine-readable JSON output.")(f)
    f = click.option('--settings', default='settings.json', help="Path to settings.json file.")(f)
    return f


@click.group()
def cli():
    """MLC-EVM - ML-style contracts compiled to EVM bytecode with static gas checking"""
    pass


@cli.command()
@click.argument('src', type=click.Path(dir_okay=False))
@click.option('-o', '--out-dir', default=None, help="Directory for the .evm, .asm and .gasmap artifacts.")
@common_options
def compile(src, out_dir, settings, json_output):
    """Compile an .mlc source file to bytecode, listing and gas map."""
    config = make_config(load_settings(settings), command="compile", inputs=[src], json_output=json_output,
                         **({"out_dir": out_dir} if out_dir else {}))
    contract = compile_or_exit(src)
    try:
        paths = write_artifacts(contract, config.out_dir)
    except OSError as e:
        fail(f"Error writing artifacts: {e}", EXIT_USAGE)
    if config.json_output:
        emit_json({"contract": contract.name, "size": len(contract.code), "iterations": contract.sized.iterations,
                   "annotations": len(contract.annotations), "artifacts": [str(p) for p in paths]})
        return
    click.echo(click.style(f"✅ Compiled {src}: {len(contract.code)} bytes, "
                           f"{len(contract.annotations)} gas annotations", fg='green'))
    for path in paths:
        click.echo(f"   - {path}")


@cli.command('check-gas')
@click.argument('src', type=click.Path(dir_okay=False))
@click.option('--function', 'functions', multiple=True, help="Check only this function (repeatable).")
@click.option('--schedule', default=None, help="Gas schedule file.")
@click.option('--path-cap', type=int, default=None, help="Maximum number of paths per function.")
@click.option('--report', type=click.Path(dir_okay=False), default=None, help="Write a Markdown report here.")
@click.option('--diagrams', type=click.Path(file_okay=False), default=None, help="Write plotly diagrams here.")
@click.option('--tighten', 'show_tight', is_flag=True, help="Print the tightest passing annotation constants.")
@common_options
def check_gas(src, functions, schedule, path_cap, report, diagrams, show_tight, settings, json_output):
    """Check every path of the gas_checking functions against their add_gas annotations."""
    loaded = load_settings(settings)
    config = make_config(loaded, command="check-gas", inputs=[src], schedule=schedule, path_cap=path_cap,
                         json_output=json_output, report=report, diagrams=diagrams)
    gas_schedule = schedule_for(config)
    contract = compile_or_exit(src)

    known = contract.core.functions
    unknown = [f for f in functions if f not in known]
    if unknown:
        fail(f"Unknown function(s): {', '.join(unknown)}", EXIT_USAGE)
    names = list(functions) or [f.name for f in known.values() if f.gas_checking]
    if not config.json_output and not functions:
        for f in known.values():
            if not f.gas_checking:
                click.echo(click.style(f"Skipping {f.name}: not marked [@gas_checking]", fg='blue'), err=True)

    try:
        result = check_program(contract, gas_schedule, config.path_cap, names)
    except MlcError as e:
        fail(f"{src}:{e}")

    if config.json_output:
        data = report_dict(result)
        if show_tight:
            data["tightened"] = [{"function": s.function, "annotation": s.node, "used": s.used, "alloc": s.alloc}
                                 for f in result.functions for s in tighten(f)]
        emit_json(data)
    else:
        click.echo(render_report(result, "text"), nl=False)
        if show_tight:
            for f in result.functions:
                for site in tighten(f):
                    click.echo(f"TIGHT {site.function} {site.node} used={site.used} alloc={site.alloc}")

    if config.report is not None:
        Path(config.report).parent.mkdir(parents=True, exist_ok=True)
        Path(config.report).write_text(render_report(result, "markdown", loaded["paths"]["templates_dir"]),
                                       encoding="utf-8")
        click.echo(click.style(f"Report written to {config.report}", fg='green'), err=True)
    if config.diagrams is not None:
        write_diagrams(contract, result, config.diagrams, gas_schedule, loaded)

    if not result.passed:
        fail(f"💥 Gas check failed for {src}")
    if not config.json_output:
        click.echo(click.style(f"✅ {result.path_count} paths checked, all within their bounds", fg='green'), err=True)


@cli.command()
@click.argument('code', type=click.Path(dir_okay=False))
@click.option('--calldata', default="", help="Calldata as hex.")
@click.option('--gas', type=int, default=None, help="Gas limit.")
@click.option('--caller', default="0x1", help="Caller address (hex).")
@click.option('--value', type=int, default=0, help="Wei moved from the caller with the call.")
@click.option('--trace', is_flag=True, help="Print one line per executed instruction.")
@common_options
def run(code, calldata, gas, caller, value, trace, settings, json_output):
    """Execute a .evm bytecode file as one transaction against an empty world."""
    loaded = load_settings(settings)
    config = make_config(loaded, command="run", inputs=[code], trace=trace, json_output=json_output)
    try:
        bytecode = read_code(code)
        data = bytes.fromhex(calldata[2:] if calldata.startswith("0x") else calldata)
        sender = Address.parse(caller)
    except (OSError, ValueError, MlcError) as e:
        fail(f"Error: {e}", EXIT_USAGE)
    limit = loaded["gas"]["gas_limit"] if gas is None else gas
    world = World(Address(0xC0))
    if value:
        world.ledger.set(sender, uint(value))
    result = exec_tx(bytecode, data, limit, world, sender, value, trace=click.echo if config.trace else None,
                     schedule=schedule_for(config), stack_limit=loaded["interpreter"]["stack_limit"])

    if config.json_output:
        emit_json({"outcome": result.outcome, "gas_used": result.gas_used, "data": result.data.hex(),
                   "tag": result.tag, "fault": result.fault,
                   "storage_delta": {f"{k:#x}": v for k, v in sorted(result.storage_delta.items())}})
    else:
        click.echo(f"{result.describe()} gas_used={result.gas_used}")
        for key, val in sorted(result.storage_delta.items()):
            click.echo(f"   storage {key:#x} = {val}")
    if not result.ok:
        sys.exit(EXIT_FAIL)


@cli.command()
@click.argument('book', type=click.Path(dir_okay=False))
@click.option('--oracle', is_flag=True, help="Compare the total with the max-flow optimum.")
@click.option('--sort', is_flag=True, help="Sort both sections by price before matching.")
@common_options
def match(book, oracle, sort, settings, json_output):
    """Match the buy and sell orders of an order-book file."""
    make_config(load_settings(settings), command="match", inputs=[book], json_output=json_output)
    try:
        buys, sells = load_orderbook(book, sort=sort)
        trades = trading(buys, sells)
        total = nb_token(trades)
        best = oracle_max_tokens(buys, sells) if oracle else None
    except MlcError as e:
        fail(f"{book}: {e}", EXIT_USAGE)

    if json_output:
        emit_json({"trades": [{"seller": t.seller_index, "buyer": t.buyer_index, "amount": t.amount}
                              for t in trades.in_construction_order()],
                   "total": total, "oracle": best, "optimal": None if best is None else best == total})
    else:
        for t in trades.in_construction_order():
            click.echo(f"TRADE seller={t.seller_index} buyer={t.buyer_index} amount={t.amount}")
        click.echo(f"TOTAL {total}")
        if best is not None:
            verdict = "AGREE" if best == total else "DISAGREE"
            click.echo(click.style(f"ORACLE {best} {verdict}", fg='green' if best == total else 'red'))
    if best is not None and best != total:
        sys.exit(EXIT_FAIL)


@cli.command()
@click.argument('scenarios', nargs=-1, type=click.Path(dir_okay=False))
@click.option('--mode', type=click.Choice(['native', 'compiled', 'both'], case_sensitive=False), default='both',
              help="Run natively with specification checks, as compiled bytecode, or both in lockstep.")
@click.option('--schema', is_flag=True, help="Print the JSON schema of scenario files and exit.")
@common_options
def scenario(scenarios, mode, schema, settings, json_output):
    """Replay market scenarios and check every step's expected outcome."""
    if schema:
        emit_json(Scenario.model_json_schema())
        return
    loaded = load_settings(settings)
    make_config(loaded, command="scenario", inputs=list(scenarios), json_output=json_output)
    if not scenarios:
        scenarios = sorted(str(p) for p in Path(loaded["corpus"]["scenario_dir"]).glob("*.json"))
        if not scenarios:
            fail(f"No scenarios given and none found in {loaded['corpus']['scenario_dir']}", EXIT_USAGE)

    if len(scenarios) == 1:
        try:
            parsed, contract = load_scenario(scenarios[0])
            results = [(Path(scenarios[0]), run_scenario(parsed, contract, mode, settings=loaded,
                                                         progress=not json_output))]
        except MlcError as e:
            results = [(Path(scenarios[0]), e)]
    else:
        results = run_suite(list(scenarios), mode, loaded)

    worst = EXIT_OK
    summary = []
    for path, result in results:
        if isinstance(result, StepMismatch):
            worst = max(worst, EXIT_FAIL)
            summary.append({"scenario": str(path), "passed": False, "error": str(result), "step": result.index})
            if not json_output:
                click.echo(click.style(f"💥 {path}: {result}", fg='red'), err=True)
        elif isinstance(result, MlcError):
            worst = EXIT_USAGE if isinstance(result, ScenarioError) else max(worst, EXIT_FAIL)
            summary.append({"scenario": str(path), "passed": False, "error": str(result)})
            if not json_output:
                click.echo(click.style(f"💥 {path}: {result}", fg='red'), err=True)
        else:
            summary.append({"scenario": str(path), "passed": True, "mode": result.mode,
                            "steps": {name: [o.status for o in outcomes]
                                      for name, outcomes in result.outcomes.items()},
                            "log": str(result.log_file) if result.log_file else None})
            if not json_output:
                click.echo(click.style(f"✅ {path}: {result.step_count} steps passed ({result.mode})", fg='green'))
    if json_output:
        emit_json(summary)
    sys.exit(worst)


@cli.command()
@click.argument('src', type=click.Path(dir_okay=False))
@click.argument('function')
@click.option('--entry', default=None, help="Public function called to exercise FUNCTION (default: FUNCTION).")
@click.option('--from', 'start', type=int, default=0, help="Smallest size argument.")
@click.option('--to', 'stop', type=int, default=10, help="Largest size argument.")
@click.option('--exact', is_flag=True, help="Fail unless the measurements are exactly affine.")
@click.option('--diagrams', type=click.Path(file_okay=False), default=None, help="Write the fit chart here.")
@common_options
def measure(src, function, entry, start, stop, exact, diagrams, settings, json_output):
    """Fit affine gas and allocation constants to measured runs of FUNCTION."""
    loaded = load_settings(settings)
    config = make_config(loaded, command="measure", inputs=[src], json_output=json_output, diagrams=diagrams)
    if stop < start:
        fail("--to must not be smaller than --from", EXIT_USAGE)
    contract = compile_or_exit(src)
    for name in filter(None, (function, entry)):
        if name not in contract.core.functions:
            fail(f"Unknown function: {name}", EXIT_USAGE)
    try:
        bound = measure_constants(contract, function, range(start, stop + 1), entry=entry,
                                  schedule=schedule_for(config), exact=exact,
                                  gas_limit=loaded["gas"]["gas_limit"], progress=not json_output)
    except MlcError as e:
        fail(f"{src}:{e}")

    if json_output:
        emit_json({"function": bound.function, "step": bound.step, "base": bound.base,
                   "alloc_step": bound.alloc_step, "alloc_base": bound.alloc_base,
                   "sizes": bound.sizes, "gas": bound.gas, "alloc": bound.allocs})
    else:
        click.echo(f"{bound.function}: gas <= {bound.step} * n + {bound.base}, "
                   f"alloc <= {bound.alloc_step} * n + {bound.alloc_base}")
    if config.diagrams is not None:
        chart = DIAGRAM_REGISTRY["gas_fit_chart"](bound, f"{contract.name}.{function} measured vs bound", loaded)
        chart.save(chart.generate(), config.diagrams, f"{contract.name}_{function}_fit")


@cli.command()
@click.argument('code', type=click.Path(dir_okay=False))
@common_options
def disassemble(code, settings, json_output):
    """Print the instruction listing of a .evm bytecode file."""
    make_config(load_settings(settings), command="disassemble", inputs=[code], json_output=json_output)
    try:
        instrs = disassemble_code(read_code(code))
    except (OSError, MlcError) as e:
        fail(f"Error: {e}", EXIT_USAGE)
    if json_output:
        emit_json([{"offset": i.offset, "mnemonic": i.mnemonic, "immediate": i.immediate} for i in instrs])
    else:
        click.echo(render_listing(instrs), nl=False)


if __name__ == '__main__':
    cli()
