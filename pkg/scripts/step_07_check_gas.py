#!/usr/bin/env python3
"""
Static Gas Checker

Builds the control-flow graph of compiled code, enumerates the paths of
every gas_checking function and compares each path's cost with the add_gas
annotations lying on it.

Paths start at the function entry and at every loop head reachable from
it, and stop at a terminal instruction, at the function return, or at an
edge into a loop head. Calls are summarized by an edge to the instruction
after the call: the callee is checked on its own paths against its own
annotations.
"""

import argparse
import json
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Tuple

import networkx as nx
import numpy as np
from jinja2 import Environment, FileSystemLoader
from tqdm import tqdm

from .chain import Address, World
from .diagrams import DIAGRAM_REGISTRY
from .errors import DynamicJump, MlcError, NonAffine, PathExplosion
from .interpreter import encode_call, exec_tx
from .opcodes import TERMINATORS, GasSchedule, load_schedule
from .step_04_codegen import selector
from .step_05_resolve_labels import AnnotationSite, Instr, SizedProgram
from .step_06_emit import CompiledContract, compile_file

DEFAULT_PATH_CAP = 100_000
TEMPLATES_DIR = Path(__file__).resolve().parent.parent / "templates"


@dataclass
class Block:
    start: int
    instrs: List[Instr]

    @property
    def end(self) -> int:
        return self.instrs[-1].end

    @property
    def last(self) -> Instr:
        return self.instrs[-1]


@dataclass
class Cfg:
    graph: nx.DiGraph
    blocks: Dict[int, Block]
    loop_heads: frozenset
    back_edges: frozenset
    labels: Dict[int, str] = field(default_factory=dict)

    def successors(self, start: int) -> List[int]:
        return sorted(self.graph.successors(start))

    def name_of(self, start: int) -> str:
        return self.labels.get(start, f"{start:#x}")


def _leaders(instrs: List[Instr]) -> set:
    leaders = {instrs[0].offset} if instrs else set()
    for i, instr in enumerate(instrs):
        if instr.mnemonic == "JUMPDEST":
            leaders.add(instr.offset)
        if (instr.mnemonic in ("JUMP", "JUMPI") or instr.mnemonic in TERMINATORS) and i + 1 < len(instrs):
            leaders.add(instrs[i + 1].offset)
    return leaders


def _static_target(block: Block) -> int:
    if len(block.instrs) < 2 or not block.instrs[-2].mnemonic.startswith("PUSH"):
        raise DynamicJump(f"{block.last.mnemonic} at {block.last.offset:#x} has no constant target")
    return block.instrs[-2].immediate


def build_cfg(program) -> Cfg:
    """Basic blocks and edges; call jumps become edges to their resume point."""
    instrs = program.instrs if isinstance(program, SizedProgram) else list(program)
    label_at = {}
    if isinstance(program, SizedProgram):
        for name, address in sorted(program.labels.items(), key=lambda kv: (kv[1], kv[0])):
            label_at.setdefault(address, name)
    leaders = _leaders(instrs)
    blocks: Dict[int, Block] = {}
    current: Optional[Block] = None
    for instr in instrs:
        if instr.offset in leaders:
            current = Block(instr.offset, [])
            blocks[instr.offset] = current
        current.instrs.append(instr)

    graph = nx.DiGraph()
    for start, block in blocks.items():
        graph.add_node(start, label=label_at.get(start, f"{start:#x}"), size=len(block.instrs))
    starts = sorted(blocks)
    back_edges, loop_heads = set(), set()
    for index, start in enumerate(starts):
        block = blocks[start]
        last = block.last
        following = starts[index + 1] if index + 1 < len(starts) else None
        if last.mnemonic == "JUMP":
            if last.tag == "return":
                continue
            if last.tag == "call":
                graph.add_edge(start, program.labels[last.resume], kind="call")
                continue
            target = _static_target(block)
            if target not in blocks:
                raise DynamicJump(f"jump at {last.offset:#x} targets {target:#x}, which starts no block")
            graph.add_edge(start, target, kind="back" if last.tag == "back" else "jump")
            if last.tag == "back":
                back_edges.add((start, target))
                loop_heads.add(target)
        elif last.mnemonic == "JUMPI":
            target = _static_target(block)
            if target not in blocks:
                raise DynamicJump(f"branch at {last.offset:#x} targets {target:#x}, which starts no block")
            graph.add_edge(start, target, kind="branch")
            if following is not None:
                graph.add_edge(start, following, kind="fallthrough")
        elif last.mnemonic in TERMINATORS:
            continue
        elif following is not None:
            graph.add_edge(start, following, kind="fallthrough")
    return Cfg(graph, blocks, frozenset(loop_heads), frozenset(back_edges), label_at)


def function_cfg(program: SizedProgram, name: str, cfg: Optional[Cfg] = None) -> Cfg:
    """The part of the program CFG reachable from a function's entry."""
    cfg = cfg or build_cfg(program)
    entry = program.labels[name]
    reachable = {entry} | nx.descendants(cfg.graph, entry)
    graph = cfg.graph.subgraph(reachable).copy()
    return Cfg(graph, {s: cfg.blocks[s] for s in reachable},
               frozenset(h for h in cfg.loop_heads if h in reachable),
               frozenset(e for e in cfg.back_edges if e[0] in reachable),
               {s: n for s, n in cfg.labels.items() if s in reachable})


@dataclass
class CfgPath:
    entry: int
    blocks: Tuple[int, ...]


def entries_of(cfg: Cfg, entry: int) -> List[int]:
    return [entry] + sorted(h for h in cfg.loop_heads if h != entry)


def enumerate_paths(cfg: Cfg, entries: Optional[Iterable[int]] = None, cap: int = DEFAULT_PATH_CAP) -> List[CfgPath]:
    """All walks from each entry, cut at terminals and at edges into loop heads."""
    if entries is None:
        entries = [min(cfg.blocks)] + sorted(cfg.loop_heads - {min(cfg.blocks)}) if cfg.blocks else []
    paths: List[CfgPath] = []
    for entry in entries:
        stack = [(entry, (entry,))]
        while stack:
            node, walk = stack.pop()
            succs = cfg.successors(node)
            nexts = [s for s in succs if s not in cfg.loop_heads]
            if not succs or len(nexts) < len(succs):
                paths.append(CfgPath(entry, walk))
                if len(paths) > cap:
                    raise PathExplosion(f"more than {cap} paths from {cfg.name_of(entry)}; restructure the function")
            for succ in reversed(nexts):
                if succ in walk:
                    raise PathExplosion(f"cycle through {cfg.name_of(succ)} without a tagged back edge")
                stack.append((succ, walk + (succ,)))
    return paths


@dataclass
class PathResult:
    entry: str
    offset: int
    blocks: Tuple[int, ...]
    cost: int
    bound: int
    alloc: int
    allocbound: int
    sites: Tuple[str, ...]

    @property
    def passed(self) -> bool:
        return self.cost <= self.bound and self.alloc <= self.allocbound

    @property
    def slack(self) -> Tuple[int, int]:
        return self.bound - self.cost, self.allocbound - self.alloc

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (f"PATH {self.entry}@{self.offset:#x} cost={self.cost} bound={self.bound} "
                f"alloc={self.alloc} allocbound={self.allocbound} {verdict}")


@dataclass
class FunctionReport:
    function: str
    paths: List[PathResult]
    sites: List[AnnotationSite]
    problems: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.problems and all(p.passed for p in self.paths)


@dataclass
class GasReport:
    contract: str
    functions: List[FunctionReport]

    @property
    def passed(self) -> bool:
        return all(f.passed for f in self.functions)

    @property
    def path_count(self) -> int:
        return sum(len(f.paths) for f in self.functions)


def check_function(program: SizedProgram, function: str, schedule: GasSchedule,
                   annotations: Optional[List[AnnotationSite]] = None, cap: int = DEFAULT_PATH_CAP,
                   cfg: Optional[Cfg] = None) -> FunctionReport:
    """Check every path of ``function``: cost <= sum of used, alloc <= sum of allocation."""
    sites = [s for s in (annotations if annotations is not None else program.annotations) if s.function == function]
    local = function_cfg(program, function, cfg)
    problems = []
    for site in sites:
        if not site.constant:
            problems.append(f"annotation {site.node} at {site.offset:#x} is not constant and cannot be "
                            f"checked statically")
    constant = [s for s in sites if s.constant]
    results = []
    for path in enumerate_paths(local, entries_of(local, program.labels[function]), cap):
        cost = alloc = bound = allocbound = 0
        on_path = []
        for start in path.blocks:
            block = local.blocks[start]
            cost += sum(schedule.static_cost(i.mnemonic) for i in block.instrs)
            alloc += sum(i.alloc for i in block.instrs)
            for site in constant:
                if block.start <= site.offset < block.end:
                    bound += site.used
                    allocbound += site.alloc
                    on_path.append(site.node)
        results.append(PathResult(local.name_of(path.entry), path.entry, path.blocks, cost, bound, alloc,
                                  allocbound, tuple(on_path)))
    return FunctionReport(function, results, sites, problems)


def check_program(contract: CompiledContract, schedule: Optional[GasSchedule] = None,
                  cap: int = DEFAULT_PATH_CAP, functions: Optional[List[str]] = None) -> GasReport:
    schedule = schedule or load_schedule()
    cfg = build_cfg(contract.sized)
    names = functions or [f.name for f in contract.core.functions.values() if f.gas_checking]
    return GasReport(contract.name, [check_function(contract.sized, n, schedule, cap=cap, cfg=cfg) for n in names])


def tighten(report: FunctionReport) -> List[AnnotationSite]:
    """Lower each constant annotation by the least slack of the paths through it.

    Every annotation ends up on a path with zero slack (or at zero), so any
    further decrement fails the check.
    """
    gas_slack = {i: p.slack[0] for i, p in enumerate(report.paths)}
    alloc_slack = {i: p.slack[1] for i, p in enumerate(report.paths)}
    tightened = []
    for site in report.sites:
        if not site.constant:
            tightened.append(site)
            continue
        through = [i for i, p in enumerate(report.paths) if site.node in p.sites]
        if not through:
            tightened.append(site)
            continue
        cut_gas = max(0, min(site.used, min(gas_slack[i] for i in through)))
        cut_alloc = max(0, min(site.alloc, min(alloc_slack[i] for i in through)))
        for i in through:
            gas_slack[i] -= cut_gas
            alloc_slack[i] -= cut_alloc
        tightened.append(replace(site, used=site.used - cut_gas, alloc=site.alloc - cut_alloc))
    return tightened


# --- dynamic measurement ---

@dataclass
class AffineBound:
    function: str
    step: int
    base: int
    alloc_step: int
    alloc_base: int
    sizes: List[int]
    gas: List[int]
    allocs: List[int]

    def gas_at(self, n: int) -> int:
        return self.step * n + self.base

    def alloc_at(self, n: int) -> int:
        return self.alloc_step * n + self.alloc_base


def least_affine_bound(sizes, values) -> Tuple[int, int]:
    """Non-negative integers (step, base) of the line over every (size, value)
    whose sum over the measured sizes is smallest; ties go to the smaller step.

    The summed bound is convex in the step, and no step beyond the steepest
    neighbouring slope can lower it, so a bisection on that range finds it.
    """
    sizes = np.asarray(sizes, dtype=np.int64)
    values = np.asarray(values, dtype=np.int64)
    if sizes.size == 0:
        raise MlcError("no measurements to fit")
    if np.any(sizes < 0):
        raise MlcError("sizes must be non-negative")
    # one point per size, the largest value measured there
    xs, first = np.unique(sizes, return_inverse=True)
    ys = np.full(xs.shape, np.iinfo(np.int64).min)
    np.maximum.at(ys, first, values)
    if xs.size == 1:
        return 0, max(0, int(ys[0]))
    rises, runs = np.diff(ys), np.diff(xs)
    steepest = max(0, int((-(-rises // runs)).max()))
    total = int(xs.sum())

    def summed(step: int) -> Tuple[int, int]:
        base = max(0, int((ys - step * xs).max()))
        return step * total + base * xs.size, base

    low, high = 0, steepest
    while low < high:
        middle = (low + high) // 2
        if summed(middle + 1)[0] < summed(middle)[0]:
            low = middle + 1
        else:
            high = middle
    return low, summed(low)[1]


def _fit(sizes: np.ndarray, values: np.ndarray, exact: bool, what: str) -> Tuple[int, int]:
    if exact and len(sizes) > 2:
        rises, runs = np.diff(values), np.diff(sizes)
        if np.any(rises * runs[0] != rises[0] * runs):
            slopes = rises / runs
            raise NonAffine(f"{what} is not affine: slopes range over {slopes.min()}..{slopes.max()}")
    return least_affine_bound(sizes, values)


def profile_range(contract: CompiledContract, function: str, profile: Dict[int, int],
                  schedule: GasSchedule) -> Tuple[int, int]:
    """Static-cost gas and allocated bytes executed inside ``function``'s code."""
    start, end = contract.function_range(function)
    gas = sum(cost for pc, cost in profile.items() if start <= pc < end)
    alloc = 0
    for instr in contract.sized.instrs:
        if instr.alloc and start <= instr.offset < end and instr.offset in profile:
            alloc += profile[instr.offset] // schedule.static_cost(instr.mnemonic) * instr.alloc
    return gas, alloc


def measure_constants(contract: CompiledContract, function: str, sizes: Iterable[int],
                      entry: Optional[str] = None, args: Callable[[int], list] = lambda n: [n],
                      schedule: Optional[GasSchedule] = None, exact: bool = False,
                      gas_limit: int = 50_000_000, progress: bool = False) -> AffineBound:
    """Least affine upper bound (step, base) of the gas and allocation of ``function``.

    ``entry`` is the public function called with ``args(n)`` to exercise it.
    """
    schedule = schedule or load_schedule()
    entry = entry or function
    sizes = sorted(sizes)
    gas_values, alloc_values = [], []
    for n in tqdm(sizes, desc=f"measuring {function}", disable=not progress):
        profile: Dict[int, int] = {}
        world = World(Address(0xC0))
        result = exec_tx(contract.code, encode_call(selector(entry), args(n)), gas_limit, world, Address(0x1),
                         profile=profile, schedule=schedule)
        if not result.ok:
            raise MlcError(f"measuring {function} at n={n}: {result.describe()}")
        gas, alloc = profile_range(contract, function, profile, schedule)
        gas_values.append(gas)
        alloc_values.append(alloc)
    xs = np.array(sizes, dtype=np.int64)
    step, base = _fit(xs, np.array(gas_values, dtype=np.int64), exact, f"gas of {function}")
    alloc_step, alloc_base = _fit(xs, np.array(alloc_values, dtype=np.int64), exact, f"allocation of {function}")
    return AffineBound(function, step, base, alloc_step, alloc_base, sizes, gas_values, alloc_values)


# --- rendering ---

def render_text(report: GasReport) -> str:
    lines = []
    for f in report.functions:
        lines.extend(f"{f.function}: {problem}" for problem in f.problems)
        lines.extend(p.line() for p in f.paths)
    return "\n".join(lines) + ("\n" if lines else "")


def report_dict(report: GasReport) -> dict:
    return {
        "contract": report.contract,
        "passed": report.passed,
        "functions": [{
            "function": f.function,
            "passed": f.passed,
            "problems": f.problems,
            "paths": [{"entry": p.entry, "offset": p.offset, "cost": p.cost, "bound": p.bound,
                       "alloc": p.alloc, "allocbound": p.allocbound, "passed": p.passed,
                       "annotations": list(p.sites)} for p in f.paths],
        } for f in report.functions],
    }


def render_report(report: GasReport, fmt: str = "text", templates_dir=None) -> str:
    if fmt == "json":
        return json.dumps(report_dict(report), indent=2) + "\n"
    if fmt == "markdown":
        env = Environment(loader=FileSystemLoader(str(templates_dir or TEMPLATES_DIR)),
                          trim_blocks=True, lstrip_blocks=True)
        return env.get_template("gas_report.md.j2").render(report=report, data=report_dict(report))
    return render_text(report)


def write_diagrams(contract: CompiledContract, report: GasReport, out_dir, schedule: Optional[GasSchedule] = None,
                   settings: Optional[dict] = None, bounds: Iterable["AffineBound"] = ()) -> List[Path]:
    """CFG of every checked function, the path slack chart and any measured fits, as plotly HTML."""
    schedule = schedule or load_schedule()
    settings = settings or {}
    cfg = build_cfg(contract.sized)
    written = []
    for f in report.functions:
        diagram = DIAGRAM_REGISTRY["cfg_graph"](
            {"cfg": function_cfg(contract.sized, f.function, cfg), "schedule": schedule, "report": f},
            f"{contract.name}.{f.function} control flow", settings)
        written.append(diagram.save(diagram.generate(), out_dir, f"{contract.name}_{f.function}_cfg"))
    slack = DIAGRAM_REGISTRY["path_slack_chart"](report, f"{contract.name} path slack", settings)
    written.append(slack.save(slack.generate(), out_dir, f"{contract.name}_slack"))
    for bound in bounds:
        fit = DIAGRAM_REGISTRY["gas_fit_chart"](bound, f"{contract.name}.{bound.function} measured vs bound", settings)
        written.append(fit.save(fit.generate(), out_dir, f"{contract.name}_{bound.function}_fit"))
    return [p for p in written if p is not None]


def check_gas_file(input_file, schedule_path=None, cap=DEFAULT_PATH_CAP, fmt="text"):
    try:
        contract = compile_file(input_file)
        report = check_program(contract, load_schedule(schedule_path), cap)
    except OSError as e:
        print(f"Error reading {input_file}: {e}")
        return None
    except MlcError as e:
        print(f"{input_file}:{e}")
        return None
    print(render_report(report, fmt), end="")
    return report


def main():
    parser = argparse.ArgumentParser(description="Check the gas annotations of an .mlc source file.")
    parser.add_argument("input", help="Path to the .mlc source")
    parser.add_argument("--schedule", help="Gas schedule file")
    parser.add_argument("--path-cap", type=int, default=DEFAULT_PATH_CAP, help="Maximum paths per function")
    parser.add_argument("--json", action="store_true", help="Print the JSON report")
    args = parser.parse_args()
    report = check_gas_file(args.input, args.schedule, args.path_cap, "json" if args.json else "text")
    if report is None or not report.passed:
        sys.exit(1)


if __name__ == "__main__":
    main()
