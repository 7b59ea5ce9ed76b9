import json
import random

import pytest
from hypothesis import settings
from hypothesis import strategies as st
from hypothesis.stateful import RuleBasedStateMachine, invariant, precondition, rule

from scripts.chain import Address, ExecContext, World
from scripts.errors import ScenarioError, StepMismatch
from scripts.interpreter import REVERT, RETURN, encode_call, exec_tx
from scripts.numeric import MAX_UINT
from scripts.orderbook import Order, nb_token, trading
from scripts.reference import evaluate
from scripts.scenario import load_scenario, plan_settlements, run_scenario, run_suite
from scripts.settings import load_settings
from scripts.step_04_codegen import exception_tag, selector
from scripts.step_06_emit import compile_file, compile_source

from .conftest import CONTRACT, CORPUS

SCENARIOS = sorted((CORPUS / "scenarios").glob("*.json"))
CORRECTION = 0x10000000

OWNER, ORACLE, MARKET = Address(0xA0), Address(0xB0), Address(0xD0)
ALICE, BOB = Address(0xA11CE), Address(0xB0B)


def call(contract, world, function, args=(), caller=OWNER):
    return evaluate(contract.core, function, list(args), world, ExecContext(caller), spec_check=True,
                    layout=contract.layout)


def open_market(contract):
    world = World(CONTRACT)
    for function, args in [("claimOwnership", []), ("setOracle", [ORACLE.value]), ("setMarket", [MARKET.value]),
                           ("setAlgorithm", [MARKET.value]), ("registerSmartMeter", [101, ALICE.value]),
                           ("registerSmartMeter", [102, BOB.value]), ("openMarket", [])]:
        assert call(contract, world, function, args).outcome == RETURN, function
    return world


def test_meter_registration(market):
    world = World(CONTRACT)
    call(market, world, "claimOwnership")
    assert call(market, world, "registerSmartMeter", [7, ALICE.value]).outcome == RETURN
    again = call(market, world, "registerSmartMeter", [7, BOB.value])
    assert again.exception == "ExistingSmartMeter"
    assert again.tag == exception_tag("ExistingSmartMeter")
    assert call(market, world, "registerSmartMeter", [8, BOB.value], caller=BOB).exception == "OnlyOwner"
    assert call(market, world, "registrySize").value == 1
    assert world.storage[market.layout.map_slot("addressOf", 7)] == ALICE.value


def fuzz_args(rng):
    meters = [101, 102, 99, 0]
    amounts = [0, 1, rng.randint(1, 10**6), MAX_UINT // CORRECTION, MAX_UINT // CORRECTION + 1]
    prices = [0, rng.randint(1, 100)]
    return [rng.choice(meters), rng.choice(amounts), rng.choice(prices),
            rng.choice(meters), rng.choice(amounts), rng.choice(prices)]


def test_fuzzed_records_never_break_state(market):
    rng = random.Random(99)
    base = open_market(market)
    seen = set()
    for k in range(2_000):
        world = base.copy()
        before = world.copy()
        args = fuzz_args(rng)
        caller = ORACLE if rng.random() < 0.85 else ALICE
        result = call(market, world, "recordImportsAndExports", args, caller)
        if result.outcome == REVERT:
            seen.add(result.exception)
            assert world.same_state(before), f"revert {result.exception} changed state for {args}"
            assert world.logs == before.logs
            continue
        assert result.outcome == RETURN
        seen.add("ok")
        b_meter, b_amount, _, s_meter, s_amount, _ = args
        owner = {101: ALICE, 102: BOB}
        export = market.layout.map_slot("exportBalanceOf", owner[s_meter].value)
        imported = market.layout.map_slot("importBalanceOf", owner[b_meter].value)
        assert world.storage[export] == s_amount * CORRECTION
        assert world.storage[imported] == b_amount * CORRECTION
        assert world.storage[market.layout.slot("state", "sellNext")] == 1
        if k % 8 == 0:
            compiled_world = base.copy()
            compiled = exec_tx(market.code, encode_call(selector("recordImportsAndExports"), args), 10_000_000,
                               compiled_world, caller)
            assert compiled.ok and compiled_world.same_state(world)
    assert {"ok", "OnlyOracle", "NoSmartMeter", "NoAmount", "NoPrice", "OverFlow"} <= seen
    assert seen <= {"ok", "WhenMarketOpen", "OnlyOracle", "NoSmartMeter", "OwnerNotFound", "NoAmount", "ZeroNumber",
                    "OverFlow", "ExistingRecord", "NoPrice", "ExistingMarket"}


def test_closed_market_rejects_records(market):
    world = open_market(market)
    call(market, world, "closeMarket")
    result = call(market, world, "recordImportsAndExports", [102, 1, 1, 101, 1, 1], ORACLE)
    assert result.exception == "WhenMarketOpen"


@pytest.mark.parametrize("mode", ["native", "compiled", "both"])
@pytest.mark.parametrize("path", SCENARIOS, ids=lambda p: p.stem)
def test_scenarios(path, mode):
    scenario, contract = load_scenario(path)
    report = run_scenario(scenario, contract, mode, write_log=False)
    assert report.step_count == len(scenario.steps)


def test_mutated_settlement_is_caught():
    source = (CORPUS / "bemp_market.mlc").read_text(encoding="utf-8")
    needle = "escrowOf[buyer] <- escrowOf[buyer] - price;"
    assert needle in source
    mutant = compile_source(source.replace(needle, "escrowOf[buyer] <- escrowOf[buyer] - price + 1;"),
                            "bemp_market")
    scenario, contract = load_scenario(CORPUS / "scenarios" / "happy_path.json")
    with pytest.raises(StepMismatch):
        run_scenario(scenario, contract, "compiled", compiled=mutant, write_log=False)


def test_settlement_plan_uses_ask_prices(market):
    world = open_market(market)
    call(market, world, "recordImportsAndExports", [102, 2, 10, 101, 3, 5], ORACLE)
    assert plan_settlements(world, market.layout) == [[0, 0, 2 * CORRECTION, 5]]


def test_suite_runs_in_parallel_and_logs(tmp_path):
    config = load_settings(None)
    config["paths"]["logs_dir"] = str(tmp_path)
    results = run_suite(SCENARIOS, "native", config, max_workers=2)
    assert [p for p, _ in results] == SCENARIOS
    for _, report in results:
        assert report.log_file is not None and report.log_file.exists()
        assert "STEP 0" in report.log_file.read_text()


def write_scenario(tmp_path, body):
    path = tmp_path / "s.json"
    path.write_text(json.dumps(body))
    return path


BASE = {"name": "s", "contract": str(CORPUS / "bemp_market.mlc"),
        "accounts": {"owner": "0xa0"}, "steps": [{"op": "claimOwnership"}]}


@pytest.mark.parametrize("change", [
    {"accounts": {"owner": "zz"}},
    {"balances": {"ghost": 5}},
    {"steps": [{"op": "claimOwnership", "value": -1}]},
    {"steps": [{"op": "claimOwnership", "expect": "maybe"}]},
])
def test_malformed_scenarios(tmp_path, change):
    with pytest.raises(ScenarioError):
        load_scenario(write_scenario(tmp_path, {**BASE, **change}))


@pytest.mark.parametrize("steps", [
    [{"op": "noSuchFunction"}],
    [{"op": "registerSmartMeter", "args": {"meterID": 1}}],
    [{"op": "claimOwnership", "caller": "nobody"}],
])
def test_bad_steps(tmp_path, steps):
    scenario, contract = load_scenario(write_scenario(tmp_path, {**BASE, "steps": steps}))
    with pytest.raises(ScenarioError):
        run_scenario(scenario, contract, "native", write_log=False)


def test_missing_scenario_file(tmp_path):
    with pytest.raises(ScenarioError):
        load_scenario(tmp_path / "absent.json")


class OrderBookMachine(RuleBasedStateMachine):
    """Order indices in storage follow a Python model of both books."""

    contract = compile_file(CORPUS / "trading.mlc")

    def __init__(self):
        super().__init__()
        self.world = World(CONTRACT)
        self.buys = []
        self.sells = []

    def send(self, function, args=()):
        return exec_tx(self.contract.code, encode_call(selector(function), list(args)), 10_000_000, self.world,
                       Address(0x1))

    def add(self, side, book, tokens, price):
        result = self.send(side, [tokens, price])
        if tokens == 0 or price == 0 or (book and book[-1].price_order.value < price):
            assert result.outcome == REVERT
        else:
            assert result.ok
            book.append(Order(Address(0x1), tokens, price))

    @rule(tokens=st.integers(0, 50), price=st.integers(0, 40))
    def add_buy(self, tokens, price):
        self.add("addBuy", self.buys, tokens, price)

    @rule(tokens=st.integers(0, 50), price=st.integers(0, 40))
    def add_sell(self, tokens, price):
        self.add("addSell", self.sells, tokens, price)

    @precondition(lambda self: self.buys or self.sells)
    @rule()
    def clear(self):
        assert self.send("clearBook").ok
        self.buys, self.sells = [], []

    @rule()
    def run_trading(self):
        result = self.send("runTrading")
        expected = nb_token(trading(self.buys, self.sells)) if self.buys and self.sells else 0
        assert result.word == expected

    @invariant()
    def books_match_storage(self):
        layout = self.contract.layout
        storage = self.world.storage
        assert storage.get(layout.slot("book", "nbuys"), 0) == len(self.buys)
        assert storage.get(layout.slot("book", "nsells"), 0) == len(self.sells)
        for prefix, book in (("buy", self.buys), ("sell", self.sells)):
            for i, order in enumerate(book):
                assert storage.get(layout.map_slot(f"{prefix}Tokens", i), 0) == order.tokens.value
                assert storage.get(layout.map_slot(f"{prefix}Price", i), 0) == order.price_order.value


OrderBookMachine.TestCase.settings = settings(max_examples=40, stateful_step_count=20, deadline=None)
TestOrderBook = OrderBookMachine.TestCase
