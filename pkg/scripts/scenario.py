#!/usr/bin/env python3
"""
Market Scenario Harness

Replays a JSON scenario of market transactions against the energy-market
contract, natively through the reference interpreter with specification
checks on, as compiled bytecode through the EVM interpreter, or both at
once. In ``both`` mode every step must produce the same outcome and leave
the two worlds in the same state.

The ``runTrading`` step is not a contract function: it reads both order
books out of storage, matches them with the order-book engine and submits
one ``settleTrade`` transaction per resulting trade.
"""

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, Field, ValidationError
from tqdm import tqdm

from .chain import Address, ExecContext, World, uint
from .core_ir import CoreModule
from .errors import MlcError, ScenarioError, SpecViolation, StepMismatch
from .interpreter import OUT_OF_GAS, REVERT, RETURN, encode_call, exec_tx
from .orderbook import Order, sort_orders, trading
from .reference import evaluate
from .settings import load_settings
from .step_04_codegen import LayoutPlan, exception_tag, guard_exception, selector
from .step_06_emit import CompiledContract, compile_file

CONTRACT_ADDRESS = Address(0xC0)
TRADING_STEP = "runTrading"
MINTING_STEP = "recordImportsAndExports"
TOKEN_MAPS = ("exportBalanceOf", "importBalanceOf", "marketBalanceOf")
ADDRESS_SPACE = 1 << 160


# --- scenario files ---

class RevertExpectation(BaseModel):
    revert: str


class Step(BaseModel):
    op: str
    args: Dict[str, Union[int, str]] = Field(default_factory=dict)
    caller: Optional[str] = None
    value: int = Field(default=0, ge=0)
    expect: Union[Literal["ok"], RevertExpectation] = "ok"
    returns: Optional[int] = None
    trades: Optional[int] = Field(default=None, ge=0)

    @property
    def expected(self) -> str:
        return "ok" if self.expect == "ok" else f"revert:{self.expect.revert}"


class Scenario(BaseModel):
    name: str
    description: str = ""
    contract: str = "../bemp_market.mlc"
    accounts: Dict[str, str]
    meters: Dict[str, int] = Field(default_factory=dict)
    balances: Dict[str, int] = Field(default_factory=dict)
    default_caller: str = "owner"
    steps: List[Step]


def load_scenario(path) -> Tuple[Scenario, Path]:
    """Parse and validate a scenario file; returns it with the contract path resolved."""
    path = Path(path)
    try:
        scenario = Scenario.model_validate_json(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ScenarioError(f"cannot read scenario {path}: {e}")
    except ValidationError as e:
        raise ScenarioError(f"malformed scenario {path}: {e}")
    for name, text in scenario.accounts.items():
        try:
            Address.parse(text)
        except ValueError as e:
            raise ScenarioError(f"{path}: account {name}: {e}")
    unknown = [n for n in list(scenario.balances) + [scenario.default_caller] if n not in scenario.accounts]
    if unknown:
        raise ScenarioError(f"{path}: unknown accounts {', '.join(sorted(set(unknown)))}")
    contract = Path(scenario.contract)
    if not contract.is_absolute():
        contract = (path.parent / contract).resolve()
    return scenario, contract


# --- outcomes ---

@dataclass
class StepOutcome:
    index: int
    op: str
    status: str
    value: Optional[int] = None
    trades: Optional[int] = None
    detail: str = ""

    def line(self) -> str:
        extra = f" value={self.value}" if self.value is not None else ""
        extra += f" trades={self.trades}" if self.trades is not None else ""
        extra += f" ({self.detail})" if self.detail else ""
        return f"STEP {self.index} {self.op} {self.status}{extra}"


@dataclass
class ScenarioReport:
    name: str
    mode: str
    outcomes: Dict[str, List[StepOutcome]] = field(default_factory=dict)
    log_file: Optional[Path] = None

    @property
    def step_count(self) -> int:
        return max((len(v) for v in self.outcomes.values()), default=0)


# --- execution backends ---

class Backend:
    """One world plus the way transactions are executed against it."""

    name = "backend"

    def __init__(self, scenario: Scenario, core: CoreModule, layout: LayoutPlan):
        self.scenario = scenario
        self.core = core
        self.layout = layout
        self.world = World(CONTRACT_ADDRESS)
        for account, amount in scenario.balances.items():
            self.world.ledger.set(Address.parse(scenario.accounts[account]), uint(amount))

    def transact(self, op: str, args: List[int], caller: Address, value: int) -> Tuple[str, Optional[int], str]:
        raise NotImplementedError


class NativeBackend(Backend):
    name = "native"

    def __init__(self, scenario, core, layout, max_steps: int = 2_000_000):
        super().__init__(scenario, core, layout)
        self.max_steps = max_steps

    def transact(self, op, args, caller, value):
        ctx = ExecContext(caller, value=value)
        try:
            result = evaluate(self.core, op, args, self.world, ctx, spec_check=True, layout=self.layout,
                              max_steps=self.max_steps)
        except SpecViolation as e:
            return "spec-violation", None, str(e)
        if result.outcome == RETURN:
            return "ok", result.word, ""
        if result.outcome == REVERT:
            return f"revert:{result.exception}", None, ""
        return "fault:InsufficientBalance", None, ""


class CompiledBackend(Backend):
    name = "compiled"

    def __init__(self, scenario, core, layout, contract: CompiledContract, gas_limit: int = 10_000_000):
        super().__init__(scenario, core, layout)
        self.contract = contract
        self.gas_limit = gas_limit
        self.tags = {exception_tag(name): name for name in core.exceptions}
        for flag in core.modifiers:
            name = guard_exception(flag, None)
            self.tags[exception_tag(name)] = name

    def transact(self, op, args, caller, value):
        if op not in self.core.functions or not self.core.functions[op].public:
            return "fault:UnknownSelector", None, ""
        result = exec_tx(self.contract.code, encode_call(selector(op), args), self.gas_limit, self.world,
                         caller, value)
        if result.outcome == RETURN:
            return "ok", result.word, ""
        if result.outcome == REVERT:
            return f"revert:{self.tags.get(result.tag, f'{result.tag:#010x}' if result.tag is not None else '?')}", \
                None, ""
        if result.outcome == OUT_OF_GAS:
            return "out-of-gas", None, ""
        return f"fault:{result.fault}", None, ""


# --- state inspection ---

def read_books(world: World, layout: LayoutPlan) -> Tuple[List[Tuple[int, Order]], List[Tuple[int, Order]]]:
    """(id, order) pairs of the buy and the sell book as stored."""
    def side(prefix: str):
        count = world.storage.get(layout.slot("state", f"{prefix}Next"), 0)
        orders = []
        for order_id in range(count):
            address = world.storage.get(layout.map_slot(f"{prefix}Address", order_id), 0)
            tokens = world.storage.get(layout.map_slot(f"{prefix}Tokens", order_id), 0)
            price = world.storage.get(layout.map_slot(f"{prefix}Price", order_id), 0)
            orders.append((order_id, Order(Address(address), tokens, price)))
        return orders

    return side("buy"), side("sell")


def map_total(world: World, layout: LayoutPlan, map_name: str) -> int:
    base = layout.map_bases[map_name]
    return sum(v for k, v in world.storage.items() if base <= k < base + ADDRESS_SPACE)


def token_total(world: World, layout: LayoutPlan) -> int:
    return sum(map_total(world, layout, name) for name in TOKEN_MAPS)


def ether_total(world: World) -> int:
    return world.ledger.total()


def plan_settlements(world: World, layout: LayoutPlan) -> List[List[int]]:
    """settleTrade arguments for every trade the matcher finds, in matching order."""
    buys, sells = read_books(world, layout)
    by_price_buys = sort_orders([o for _, o in buys])
    by_price_sells = sort_orders([o for _, o in sells])
    # sorting is stable, so equal orders keep their relative id order
    buy_ids = [i for i, _ in sorted(buys, key=lambda pair: -pair[1].price_order.value)]
    sell_ids = [i for i, _ in sorted(sells, key=lambda pair: -pair[1].price_order.value)]
    plans = []
    for t in trading(by_price_buys, by_price_sells).in_construction_order():
        ask = by_price_sells[t.seller_index].price_order.value
        plans.append([sell_ids[t.seller_index], buy_ids[t.buyer_index], t.amount, ask])
    return plans


# --- the run ---

class ScenarioRunner:
    def __init__(self, scenario: Scenario, core: CoreModule, layout: LayoutPlan, backends: List[Backend],
                 correction: int = 0x10000000):
        self.scenario = scenario
        self.core = core
        self.layout = layout
        self.backends = backends
        self.correction = correction

    def resolve(self, value: Union[int, str], index: int) -> int:
        if isinstance(value, int):
            return value
        if value in self.scenario.accounts:
            return Address.parse(self.scenario.accounts[value]).value
        if value in self.scenario.meters:
            return self.scenario.meters[value]
        try:
            return int(value, 0)
        except ValueError:
            raise ScenarioError(f"step {index}: '{value}' is neither an account, a meter nor a number")

    def arguments(self, step: Step, index: int) -> List[int]:
        if step.op == TRADING_STEP:
            return []
        f = self.core.functions.get(step.op)
        if f is None or not f.public:
            raise ScenarioError(f"step {index}: {step.op} is not a public function of the contract")
        names = [name for name, _ in f.params]
        extra = sorted(set(step.args) - set(names))
        missing = [n for n in names if n not in step.args]
        if extra or missing:
            raise ScenarioError(f"step {index}: {step.op} takes ({', '.join(names)}); "
                                f"unknown {extra or '-'}, missing {missing or '-'}")
        return [self.resolve(step.args[n], index) for n in names]

    def caller(self, step: Step, index: int) -> Address:
        name = step.caller or self.scenario.default_caller
        if name not in self.scenario.accounts:
            raise ScenarioError(f"step {index}: unknown caller '{name}'")
        return Address.parse(self.scenario.accounts[name])

    def run_step(self, backend: Backend, step: Step, index: int, args: List[int], caller: Address) -> StepOutcome:
        if step.op != TRADING_STEP:
            status, value, detail = backend.transact(step.op, args, caller, step.value)
            return StepOutcome(index, step.op, status, value, detail=detail)
        plans = plan_settlements(backend.world, self.layout)
        for plan in plans:
            status, _, detail = backend.transact("settleTrade", plan, caller, 0)
            if status != "ok":
                return StepOutcome(index, step.op, status, trades=len(plans),
                                   detail=f"settleTrade{tuple(plan)} {detail}".strip())
        return StepOutcome(index, step.op, "ok", trades=len(plans))

    def check_expectation(self, step: Step, outcome: StepOutcome):
        if outcome.status != step.expected:
            got = outcome.status + (f" ({outcome.detail})" if outcome.detail else "")
            raise StepMismatch(outcome.index, step.expected, got)
        if step.returns is not None and outcome.value != step.returns:
            raise StepMismatch(outcome.index, f"returns {step.returns}", f"returns {outcome.value}")
        if step.trades is not None and outcome.trades != step.trades:
            raise StepMismatch(outcome.index, f"{step.trades} trades", f"{outcome.trades} trades")

    def check_conservation(self, backend: Backend, step: Step, args: List[int], index: int,
                           before: Tuple[int, int]):
        ether, tokens = ether_total(backend.world), token_total(backend.world, self.layout)
        minted = 0
        if step.op == MINTING_STEP and step.expected == "ok":
            f = self.core.functions[MINTING_STEP]
            named = dict(zip((n for n, _ in f.params), args))
            minted = (named["bAmount"] + named["sAmount"]) * self.correction
        if ether != before[0]:
            raise StepMismatch(index, f"ether total {before[0]}", f"{ether} after {step.op} ({backend.name})")
        if tokens != before[1] + minted:
            raise StepMismatch(index, f"token total {before[1] + minted}",
                               f"{tokens} after {step.op} ({backend.name})")

    def run(self, log=None, progress: bool = False) -> Dict[str, List[StepOutcome]]:
        outcomes: Dict[str, List[StepOutcome]] = {b.name: [] for b in self.backends}
        steps = list(enumerate(self.scenario.steps))
        for index, step in tqdm(steps, desc=f"scenario {self.scenario.name}", disable=not progress):
            args = self.arguments(step, index)
            caller = self.caller(step, index)
            results = []
            for backend in self.backends:
                before = (ether_total(backend.world), token_total(backend.world, self.layout))
                outcome = self.run_step(backend, step, index, args, caller)
                outcomes[backend.name].append(outcome)
                if log is not None:
                    log(f"[{backend.name}] {outcome.line()}")
                self.check_expectation(step, outcome)
                self.check_conservation(backend, step, args, index, before)
                results.append(outcome)
            if len(self.backends) == 2:
                first, second = results
                if (first.status, first.value, first.trades) != (second.status, second.value, second.trades):
                    raise StepMismatch(index, f"{self.backends[0].name} {first.status}",
                                       f"{self.backends[1].name} {second.status}")
                if not self.backends[0].world.same_state(self.backends[1].world):
                    raise StepMismatch(index, "identical world state in both modes",
                                       f"diverging state after {step.op}")
        return outcomes


def run_scenario(scenario: Scenario, contract_path, mode: str = "both",
                 compiled: Optional[CompiledContract] = None, settings: Optional[dict] = None,
                 progress: bool = False, write_log: bool = True) -> ScenarioReport:
    """Run every step in ``mode`` (native, compiled or both); raises StepMismatch on the first failure.

    ``compiled`` replaces the bytecode built from ``contract_path`` in compiled mode.
    """
    if mode not in ("native", "compiled", "both"):
        raise ScenarioError(f"unknown mode '{mode}'")
    settings = settings or load_settings(None)
    reference = compile_file(contract_path)
    core, layout = reference.core, reference.layout
    backends: List[Backend] = []
    if mode in ("native", "both"):
        backends.append(NativeBackend(scenario, core, layout, settings["interpreter"]["max_steps"]))
    if mode in ("compiled", "both"):
        backends.append(CompiledBackend(scenario, core, layout, compiled or reference,
                                        settings["gas"]["gas_limit"]))
    runner = ScenarioRunner(scenario, core, layout, backends, settings["corpus"]["floating_point_correction"])

    report = ScenarioReport(scenario.name, mode)
    lines: List[str] = []
    try:
        report.outcomes = runner.run(lines.append, progress)
    finally:
        if write_log:
            report.log_file = save_log(scenario, mode, lines, settings["paths"]["logs_dir"])
    return report


def save_log(scenario: Scenario, mode: str, lines: List[str], logs_dir) -> Optional[Path]:
    try:
        log_dir = Path(logs_dir)
        log_dir.mkdir(parents=True, exist_ok=True)
        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        log_file = log_dir / f"scenario_{scenario.name}_{timestamp}.log"
        with open(log_file, "w", encoding="utf-8") as f:
            f.write(f"# Scenario {scenario.name} ({mode})\n")
            f.write(f"# Generated: {datetime.now().isoformat()}\n\n")
            f.write("\n".join(lines) + ("\n" if lines else ""))
        return log_file
    except OSError as e:
        print(f"Warning: Could not save scenario log: {e}")
        return None


def run_scenario_file(path, mode: str = "both", settings: Optional[dict] = None, progress: bool = False):
    scenario, contract = load_scenario(path)
    return run_scenario(scenario, contract, mode, settings=settings, progress=progress)


def run_suite(paths, mode: str = "both", settings: Optional[dict] = None,
              max_workers: Optional[int] = None) -> List[Tuple[Path, Union[ScenarioReport, MlcError]]]:
    """Run independent scenarios in parallel, each over its own worlds."""
    settings = settings or load_settings(None)
    workers = max_workers or settings["performance"]["max_workers"]

    def one(path):
        try:
            return Path(path), run_scenario_file(path, mode, settings)
        except MlcError as e:
            return Path(path), e

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(tqdm(pool.map(one, paths), total=len(paths), desc="scenarios"))


def main():
    parser = argparse.ArgumentParser(description="Replay a market scenario natively, compiled, or both.")
    parser.add_argument("scenario", nargs="+", help="Scenario JSON file(s)")
    parser.add_argument("--mode", choices=["native", "compiled", "both"], default="both")
    args = parser.parse_args()
    failed = False
    for path, result in run_suite(args.scenario, args.mode):
        if isinstance(result, MlcError):
            print(f"{path}: {result}")
            failed = True
        else:
            print(f"{path}: {result.step_count} steps passed ({result.mode})")
    if failed:
        sys.exit(1)


if __name__ == "__main__":
    main()
