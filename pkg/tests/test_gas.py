import json
from dataclasses import replace

import pytest
from hypothesis import given
from hypothesis import strategies as st

from scripts.chain import ExecContext, World
from scripts.errors import PathExplosion
from scripts.interpreter import RETURN, encode_call, exec_tx
from scripts.opcodes import load_schedule, parse_schedule
from scripts.reference import evaluate
from scripts.step_04_codegen import selector
from scripts.step_06_emit import compile_file
from scripts.step_07_check_gas import (build_cfg, check_function, check_program, entries_of, enumerate_paths,
                                       function_cfg, least_affine_bound, measure_constants, profile_range,
                                       render_report, tighten, write_diagrams)

from .conftest import CALLER, CONTRACT, CORPUS

GAS_FUNCTIONS = [("wcet", "length_"), ("wcet", "mk_list42"), ("wcet", "g_"),
                 ("trading_contract", "trading"), ("trading_contract", "nb_token")]


@pytest.mark.parametrize("fixture", ["wcet", "trading_contract"])
def test_corpus_annotations_cover_every_path(fixture, request, schedule):
    report = check_program(request.getfixturevalue(fixture), schedule)
    assert report.passed, render_report(report)
    assert report.path_count > 0
    assert all(f.paths for f in report.functions)


def test_trading_paths_start_at_the_entry_and_the_loop_head(trading_contract, schedule):
    report = check_program(trading_contract, schedule, functions=["trading"])
    entries = {p.offset for p in report.functions[0].paths}
    cfg = function_cfg(trading_contract.sized, "trading")
    assert len(cfg.loop_heads) == 1
    assert entries == {trading_contract.sized.labels["trading"]} | set(cfg.loop_heads)


@pytest.mark.parametrize("fixture, function", GAS_FUNCTIONS)
def test_decrementing_any_annotation_fails(fixture, function, request, schedule):
    contract = request.getfixturevalue(fixture)
    sites = [s for s in contract.annotations if s.function == function]
    assert sites
    for k, site in enumerate(sites):
        mutants = []
        if site.used > 0:
            mutants.append(replace(site, used=site.used - 1))
        if site.alloc > 0:
            mutants.append(replace(site, alloc=site.alloc - 1))
        for mutant in mutants:
            annotations = sites[:k] + [mutant] + sites[k + 1:]
            report = check_function(contract.sized, function, schedule, annotations)
            assert not report.passed, f"{site.node} lowered to {mutant.used}/{mutant.alloc} still passes"


@pytest.mark.parametrize("fixture, function", GAS_FUNCTIONS)
def test_corpus_constants_are_already_tight(fixture, function, request, schedule):
    contract = request.getfixturevalue(fixture)
    report = check_program(contract, schedule, functions=[function]).functions[0]
    assert [(s.used, s.alloc) for s in tighten(report)] == [(s.used, s.alloc) for s in report.sites]


def test_tighten_removes_slack(wcet, schedule):
    report = check_program(wcet, schedule, functions=["length_"]).functions[0]
    padded = [replace(s, used=s.used + 50) for s in report.sites]
    loose = check_function(wcet.sized, "length_", schedule, padded)
    assert loose.passed
    tight = tighten(loose)
    assert [s.used for s in tight] == [s.used for s in report.sites]
    assert check_function(wcet.sized, "length_", schedule, tight).passed


def test_more_expensive_schedule_breaks_the_bounds(wcet, schedule):
    costs = dict(schedule.costs)
    costs["ADD"] += 1
    dearer = parse_schedule("\n".join(f"{m} {c}" for m, c in costs.items()))
    report = check_program(wcet, dearer)
    assert not report.passed


def test_path_cap(trading_contract):
    cfg = function_cfg(trading_contract.sized, "trading")
    with pytest.raises(PathExplosion):
        enumerate_paths(cfg, entries_of(cfg, trading_contract.sized.labels["trading"]), cap=1)


def metered(contract, entry, functions, n, schedule):
    """Gas and allocation spent inside ``functions`` by one call of ``entry(n)``."""
    profile = {}
    result = exec_tx(contract.code, encode_call(selector(entry), [n]), 50_000_000, World(CONTRACT), CALLER,
                     profile=profile, schedule=schedule)
    assert result.ok, result.describe()
    parts = [profile_range(contract, f, profile, schedule) for f in functions]
    return sum(gas for gas, _ in parts), sum(alloc for _, alloc in parts)


def test_measured_runs_stay_within_the_declared_bounds(wcet, schedule):
    sizes = list(range(0, 21))
    lists = measure_constants(wcet, "mk_list42", sizes, entry="g_", schedule=schedule)
    for n, gas, alloc in zip(lists.sizes, lists.gas, lists.allocs):
        assert gas <= 159 * n + 90
        assert alloc <= 96 * n + 32
    lengths = measure_constants(wcet, "length_", sizes, entry="g_", schedule=schedule)
    for n, gas in zip(lengths.sizes, lengths.gas):
        assert gas <= 108 * n + 71
    assert lengths.gas_at(20) >= lengths.gas[-1]


@pytest.mark.parametrize("i", range(0, 21))
def test_g_whole_run_stays_within_its_bound(wcet, schedule, i):
    gas, alloc = metered(wcet, "g_", ["g_", "mk_list42", "length_"], i, schedule)
    assert gas <= 267 * i + 260
    assert alloc <= 96 * i + 32


def test_least_bound_of_an_irregular_series():
    gas = [1872, 2815, 3721, 4891, 4891, 5797, 5797, 7646, 7646]
    step, base = least_affine_bound(range(2, 11), gas)
    assert (step, base) == (689, 1446)
    assert all(step * n + base >= g for n, g in zip(range(2, 11), gas))
    # a valid but looser line
    assert sum(step * n + base for n in range(2, 11)) < sum(760 * n + 1091 for n in range(2, 11))


def test_least_bound_never_has_a_negative_base():
    assert least_affine_bound([1, 2], [0, 100]) == (50, 0)
    assert least_affine_bound([3], [-5]) == (0, 0)
    assert least_affine_bound([4, 4, 6], [10, 30, 30]) == (0, 30)


@given(st.dictionaries(st.integers(0, 20), st.integers(0, 500), min_size=1, max_size=8))
def test_least_bound_matches_exhaustive_search(points):
    sizes, values = list(points), list(points.values())
    step, base = least_affine_bound(sizes, values)
    assert step >= 0 and base >= 0
    assert all(step * n + base >= v for n, v in points.items())

    def summed(s):
        b = max(0, max(v - s * n for n, v in points.items()))
        return s * sum(sizes) + b * len(sizes)

    assert summed(step) == min(summed(s) for s in range(0, 502))
    assert base == max(0, max(v - step * n for n, v in points.items()))


def test_trading_gas_is_affine_in_the_order_count(trading_contract, schedule):
    bound = measure_constants(trading_contract, "trading", range(2, 11), entry="benchTrading", schedule=schedule)
    assert bound.base >= 0 and bound.alloc_base >= 0
    for n, gas, alloc in zip(bound.sizes, bound.gas, bound.allocs):
        assert gas <= bound.gas_at(n) and gas <= 1170 * n + 966
        assert alloc <= bound.alloc_at(n) and alloc <= 160 * n + 32


@pytest.mark.parametrize("n", range(2, 11))
def test_trading_ensures_holds_natively(trading_contract, n):
    # the affine ensures clauses of trading are evaluated on its return
    result = evaluate(trading_contract.core, "benchTrading", [n], World(CONTRACT), ExecContext(CALLER),
                      spec_check=True, layout=trading_contract.layout)
    assert result.outcome == RETURN


REFERENCE = json.loads((CORPUS / "reference_bounds.json").read_text(encoding="utf-8"))["bounds"]


@pytest.mark.parametrize("row", REFERENCE, ids=lambda row: row["function"])
def test_frozen_bounds_dominate_measured_runs(row, schedule):
    contract = compile_file(CORPUS / row["contract"])
    frozen = row["frozen"]
    for n in range(row["sizes"][0], row["sizes"][1] + 1):
        gas, alloc = metered(contract, row["entry"], [row["function"]] + row["callees"], n, schedule)
        assert gas <= frozen["step"] * n + frozen["base"], n
        assert alloc <= frozen["alloc_step"] * n + frozen["alloc_base"], n


def test_measured_fit_is_affine_for_list_building(wcet, schedule):
    bound = measure_constants(wcet, "mk_list42", [0, 1, 2, 3], entry="g_", schedule=schedule, exact=True)
    assert [bound.gas_at(n) for n in bound.sizes] == bound.gas
    assert bound.alloc_step == 96


def test_reports(wcet, schedule):
    report = check_program(wcet, schedule)
    data = json.loads(render_report(report, "json"))
    assert data["passed"] is True
    assert {f["function"] for f in data["functions"]} == {"length_", "mk_list42", "g_"}
    markdown = render_report(report, "markdown")
    assert markdown.startswith("# Gas report: wcet_lists")
    assert "| Entry | Offset |" in markdown
    text = render_report(report)
    assert all(line.startswith("PATH ") and line.endswith("PASS") for line in text.splitlines())


def test_diagrams_are_written(tmp_path, wcet, schedule):
    report = check_program(wcet, schedule)
    bound = measure_constants(wcet, "mk_list42", [0, 1, 2], entry="g_", schedule=schedule)
    written = write_diagrams(wcet, report, tmp_path, schedule, bounds=[bound])
    names = {p.name for p in written}
    assert "wcet_lists_slack.html" in names
    assert "wcet_lists_mk_list42_fit.html" in names
    assert len(written) == len(report.functions) + 2


def test_cfg_back_edges_close_the_loop(trading_contract):
    cfg = build_cfg(trading_contract.sized)
    for source, target in cfg.back_edges:
        assert target in cfg.loop_heads
        assert cfg.graph.edges[source, target]["kind"] == "back"


def test_default_schedule_constants():
    schedule = load_schedule()
    assert schedule.cost("PUSH1") == 3
    assert schedule.cost("JUMP") == 8
    assert schedule.cost("JUMPI") == 10
    assert schedule.static_cost("CALL") == 700 + 9000 + 2300
