#!/usr/bin/env python3
"""
Symbolic EVM Code Generator

Lowers the typed core IR to symbolic EVM assembly: plain opcodes, label
pushes and definitions, zero-size gas annotation markers, and macros for
allocation, calls and sends. Addresses are assigned later by
step_05_resolve_labels.

Frame discipline: on entry to a function the stack holds the return label
followed by the arguments, first argument deepest. Locals are pushed on top
and addressed by DUP/SWAP distance from the current stack height. On exit
everything but the result is popped and the function jumps back to the
return label with the result (if any) on top.
"""

import argparse
import hashlib
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .core_ir import (UNIT, CAddGas, CArith, CAssign, CBool, CCall, CCaller, CCallValue, CCompare,
                      CConstruct, CEmit, CField, CGlobalGet, CGlobalSet, CGuard, CIf, CInt, CLet, CLocal,
                      CLogic, CMapGet, CMapSet, CMatch, CNot, Core, CoreFunction, CoreModule, CRaise, CRecord,
                      CSend, CSeq, CSetField, CTransfer, CUnit, CWhile, width)
from .errors import MlcError, UnsupportedConstruct
from .numeric import KINDS, from_math, to_word
from .opcodes import push_for
from .step_03_typecheck import check_source

FREE_POINTER = 0x40
HEAP_START = 0x80
WORD = 32
MAP_STRIDE = 1 << 192
SEND_STIPEND = 2300
SELECTOR_SHIFT = 1 << 224
MAX_REACH = 16


def _hash4(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:4], "big")


def selector(name: str) -> int:
    """4-byte function selector: the first four bytes of SHA-256 of the name."""
    return _hash4(name)


def exception_tag(name: str) -> int:
    return _hash4(name)


def guard_exception(flag: str, exception: Optional[str]) -> str:
    return exception or f"GuardFailed({flag})"


# --- symbolic instructions ---

@dataclass(frozen=True)
class Op:
    mnemonic: str
    immediate: Optional[int] = None
    tag: Optional[str] = None  # "call", "return" or "back" on jumps


@dataclass(frozen=True)
class PushLabel:
    label: str


@dataclass(frozen=True)
class LabelDef:
    label: str


@dataclass(frozen=True)
class Annotate:
    """Zero-size marker; the site is the offset of the following instruction."""
    function: str
    node: CAddGas


@dataclass(frozen=True)
class Macro:
    kind: str  # "alloc", "call" or "send"
    body: Tuple[object, ...]
    alloc: int = 0
    target: Optional[str] = None
    resume: Optional[str] = None


def push(value: int) -> Op:
    return Op(push_for(value), value)


# --- layout ---

@dataclass
class LayoutPlan:
    slots: Dict[Tuple[str, str], int] = field(default_factory=dict)
    map_bases: Dict[str, int] = field(default_factory=dict)
    cell_sizes: Dict[str, int] = field(default_factory=dict)
    free_pointer: int = FREE_POINTER
    heap_start: int = HEAP_START

    def slot(self, glob: str, field_name: str) -> int:
        return self.slots[(glob, field_name)]

    def map_slot(self, map_name: str, key: int) -> int:
        return self.map_bases[map_name] + key

    def field_offset(self, index: int, tagged: bool) -> int:
        return WORD * (index + 1) if tagged else WORD * index


def plan_layout(core: CoreModule) -> LayoutPlan:
    """One storage slot per global field in declaration order; maps in disjoint 2^192 regions."""
    plan = LayoutPlan()
    for glob in core.globals.values():
        for field_name, _ in glob.fields:
            plan.slots[(glob.name, field_name)] = len(plan.slots)
    for info in core.maps.values():
        plan.map_bases[info.name] = (info.index + 1) * MAP_STRIDE
    for adt in core.adts.values():
        for ctor in adt.ctors:
            plan.cell_sizes[ctor.name] = WORD * (len(ctor.fields) + 1)
    for record in core.records.values():
        plan.cell_sizes[record.name] = WORD * len(record.fields)
    return plan


@dataclass
class SymProgram:
    name: str
    instrs: List[object]
    functions: List[str]
    public: List[str]


# --- code generation ---

class FunctionCompiler:
    def __init__(self, module: CoreModule, layout: LayoutPlan, function: CoreFunction, out: List[object]):
        self.module = module
        self.layout = layout
        self.function = function
        self.out = out
        self.height = 0
        self.counter = 0

    def fresh(self, hint: str) -> str:
        self.counter += 1
        return f"{self.function.name}.{hint}{self.counter}"

    def emit(self, *items):
        for item in items:
            self.out.append(item)
            if isinstance(item, Op):
                if item.mnemonic.startswith("PUSH") or item.mnemonic in ("CALLER", "CALLVALUE"):
                    self.height += 1
                elif item.mnemonic.startswith("DUP"):
                    self.height += 1
                elif item.mnemonic in ("POP", "JUMP", "SSTORE"):
                    self.height -= 2 if item.mnemonic == "SSTORE" else 1
                elif item.mnemonic in ("ADD", "SUB", "MUL", "DIV", "SDIV", "MOD", "LT", "GT", "SLT", "SGT",
                                       "EQ", "AND", "OR"):
                    self.height -= 1
                elif item.mnemonic in ("MSTORE", "JUMPI"):
                    self.height -= 2
                elif item.mnemonic == "REVERT":
                    self.height -= 2
            elif isinstance(item, PushLabel):
                self.height += 1

    def label(self, name: str):
        self.emit(LabelDef(name), Op("JUMPDEST"))

    def dup_of(self, position: int, node: Core):
        distance = self.height - position
        if not 1 <= distance <= MAX_REACH:
            raise UnsupportedConstruct(f"{self.function.name}: value {distance} slots deep is out of DUP reach",
                                       node.loc, "stack-reach")
        self.emit(Op(f"DUP{distance}"))

    def swap(self, distance: int, node: Core):
        if not 1 <= distance <= MAX_REACH:
            raise UnsupportedConstruct(f"{self.function.name}: assignment {distance} slots deep is out of "
                                       f"SWAP reach", node.loc, "stack-reach")
        self.emit(Op(f"SWAP{distance}"))

    def drop_under(self, count: int, keep: bool):
        """Pop ``count`` words, preserving the top word when ``keep``."""
        for _ in range(count):
            if keep:
                self.emit(Op("SWAP1"), Op("POP"))
            else:
                self.emit(Op("POP"))

    def revert_with(self, tag: int):
        self.emit(push(tag << 224), push(0), Op("MSTORE"), push(4), push(0), Op("REVERT"))

    # --- entry point ---

    def compile_function(self):
        f = self.function
        env = {}
        for position, (name, ty) in enumerate(f.params, start=1):
            if width(ty) == 0:
                raise UnsupportedConstruct(f"{f.name}: parameter {name} of type {ty}", f.loc, "unit-parameter")
            env[name] = position
        self.label(f.name)
        self.height = len(f.params) + 1
        self.compile(f.body, env)
        keep = width(f.ret) == 1
        self.drop_under(len(f.params), keep)
        if keep:
            self.emit(Op("SWAP1"))
        self.emit(Op("JUMP", tag="return"))

    # --- expressions ---

    def compile(self, node: Core, env: Dict[str, int]):
        method = getattr(self, f"compile_{type(node).__name__}", None)
        if method is None:
            raise UnsupportedConstruct(f"no code generation for {type(node).__name__}", node.loc)
        before = self.height
        method(node, env)
        if self.height != before + width(node.ty):
            raise UnsupportedConstruct(f"{self.function.name}: stack height {self.height} after {node.name} "
                                       f"({type(node).__name__}), expected {before + width(node.ty)}", node.loc)

    def compile_CInt(self, node, env):
        self.emit(push(to_word(from_math(KINDS[node.ty], node.value))))

    def compile_CBool(self, node, env):
        self.emit(push(1 if node.value else 0))

    def compile_CUnit(self, node, env):
        pass

    def compile_CLocal(self, node, env):
        if width(node.ty):
            self.dup_of(env[node.var], node)

    def compile_CLet(self, node, env):
        self.compile(node.value, env)
        inner = dict(env)
        bound = width(node.value.ty) == 1
        if bound:
            inner[node.var] = self.height - 1
        else:
            inner.pop(node.var, None)
        self.compile(node.body, inner)
        if bound:
            self.drop_under(1, width(node.body.ty) == 1)

    def compile_CAssign(self, node, env):
        self.compile(node.value, env)
        if width(node.value.ty):
            self.swap(self.height - 1 - env[node.var], node)
            self.emit(Op("POP"))

    def compile_CSeq(self, node, env):
        self.compile(node.first, env)
        if width(node.first.ty):
            self.emit(Op("POP"))
        self.compile(node.second, env)

    def compile_CIf(self, node, env):
        orelse, end = self.fresh("else"), self.fresh("endif")
        self.compile(node.cond, env)
        self.emit(Op("ISZERO"), PushLabel(orelse), Op("JUMPI"))
        base = self.height
        self.compile(node.then, env)
        self.emit(PushLabel(end), Op("JUMP"))
        self.height = base
        self.label(orelse)
        self.compile(node.orelse, env)
        self.emit(PushLabel(end), Op("JUMP"))
        self.label(end)
        self.height = base + width(node.ty)

    def compile_CWhile(self, node, env):
        head, exit_ = self.fresh("loop"), self.fresh("done")
        self.emit(PushLabel(head), Op("JUMP"))
        self.label(head)
        self.compile(node.cond, env)
        self.emit(Op("ISZERO"), PushLabel(exit_), Op("JUMPI"))
        self.compile(node.body, env)
        if width(node.body.ty):
            self.emit(Op("POP"))
        self.emit(PushLabel(head), Op("JUMP", tag="back"))
        self.label(exit_)

    def compile_CMatch(self, node, env):
        end = self.fresh("endmatch")
        self.compile(node.scrutinee, env)
        pointer = self.height - 1
        self.emit(Op("DUP1"), Op("MLOAD"))
        base = self.height
        labels = [self.fresh(arm.ctor) for arm in node.arms]
        for arm, label in zip(node.arms[:-1], labels):
            self.emit(Op("DUP1"), push(arm.tag), Op("EQ"), PushLabel(label), Op("JUMPI"))
        # the last constructor falls through
        order = [node.arms[-1]] + list(node.arms[:-1])
        order_labels = [None] + labels[:-1]
        for arm, label in zip(order, order_labels):
            self.height = base
            if label is not None:
                self.label(label)
            self.emit(Op("POP"))
            inner = dict(env)
            bound = 0
            for index, binder in enumerate(arm.binders):
                if binder is None:
                    continue
                self.dup_of(pointer, arm)
                self.emit(push(self.layout.field_offset(index, True)), Op("ADD"), Op("MLOAD"))
                inner[binder] = self.height - 1
                bound += 1
            self.compile(arm.body, inner)
            self.drop_under(bound + 1, width(node.ty) == 1)
            self.emit(PushLabel(end), Op("JUMP"))
        self.label(end)
        self.height = base - 2 + width(node.ty)

    def allocate(self, args: Tuple[Core, ...], env, size: int, tag: Optional[int]):
        for arg in args:
            self.compile(arg, env)
        body = [push(FREE_POINTER), Op("MLOAD")]
        if tag is not None:
            body += [push(tag), Op("DUP2"), Op("MSTORE")]
        for index in reversed(range(len(args))):
            offset = self.layout.field_offset(index, tag is not None)
            body += [Op("SWAP1"), Op("DUP2"), push(offset), Op("ADD"), Op("MSTORE")]
        body += [Op("DUP1"), push(size), Op("ADD"), push(FREE_POINTER), Op("MSTORE")]
        self.out.append(Macro("alloc", tuple(body), alloc=size))
        self.height += 1 - len(args)

    def compile_CConstruct(self, node, env):
        self.allocate(node.args, env, self.layout.cell_sizes[node.ctor], node.tag)

    def compile_CRecord(self, node, env):
        self.allocate(node.args, env, self.layout.cell_sizes[node.record], None)

    def compile_CField(self, node, env):
        self.compile(node.target, env)
        self.emit(push(self.layout.field_offset(node.index, False)), Op("ADD"), Op("MLOAD"))

    def compile_CSetField(self, node, env):
        self.compile(node.target, env)
        self.compile(node.value, env)
        self.emit(Op("SWAP1"), push(self.layout.field_offset(node.index, False)), Op("ADD"), Op("MSTORE"))

    def compile_CGlobalGet(self, node, env):
        self.emit(push(self.layout.slot(node.glob, node.field_name)), Op("SLOAD"))

    def compile_CGlobalSet(self, node, env):
        self.compile(node.value, env)
        self.emit(push(self.layout.slot(node.glob, node.field_name)), Op("SSTORE"))

    def compile_CMapGet(self, node, env):
        self.compile(node.key, env)
        self.emit(push(self.layout.map_bases[node.map_name]), Op("ADD"), Op("SLOAD"))

    def compile_CMapSet(self, node, env):
        self.compile(node.key, env)
        self.compile(node.value, env)
        self.emit(Op("SWAP1"), push(self.layout.map_bases[node.map_name]), Op("ADD"), Op("SSTORE"))

    def compile_CCall(self, node, env):
        resume = self.fresh("ret")
        self.emit(PushLabel(resume))
        for arg in node.args:
            self.compile(arg, env)
        self.out.append(Macro("call", (PushLabel(node.func), Op("JUMP", tag="call")),
                              target=node.func, resume=resume))
        self.height -= len(node.args) + 1
        self.label(resume)
        self.height += width(node.ty)

    def compile_CArith(self, node, env):
        self.compile(node.left, env)
        self.compile(node.right, env)
        signed = KINDS[node.ty].signed
        if node.op == "add":
            self.emit(Op("ADD"))
        elif node.op == "mul":
            self.emit(Op("MUL"))
        elif node.op == "sub":
            self.emit(Op("SWAP1"), Op("SUB"))
        elif node.op == "div":
            self.emit(Op("SWAP1"), Op("SDIV" if signed else "DIV"))
        elif node.op == "mod":
            self.emit(Op("SWAP1"), Op("MOD"))
        else:
            raise UnsupportedConstruct(f"arithmetic operator {node.op}", node.loc)

    def compile_CCompare(self, node, env):
        self.compile(node.left, env)
        self.compile(node.right, env)
        signed = node.left.ty in KINDS and KINDS[node.left.ty].signed
        lt, gt = ("SLT", "SGT") if signed else ("LT", "GT")
        sequences = {
            "eq": [Op("EQ")],
            "ne": [Op("EQ"), Op("ISZERO")],
            "lt": [Op("SWAP1"), Op(lt)],
            "gt": [Op("SWAP1"), Op(gt)],
            "le": [Op("SWAP1"), Op(gt), Op("ISZERO")],
            "ge": [Op("SWAP1"), Op(lt), Op("ISZERO")],
        }
        self.emit(*sequences[node.op])

    def compile_CLogic(self, node, env):
        self.compile(node.left, env)
        self.compile(node.right, env)
        self.emit(Op("AND" if node.op == "and" else "OR"))

    def compile_CNot(self, node, env):
        self.compile(node.operand, env)
        self.emit(Op("ISZERO"))

    def compile_CRaise(self, node, env):
        self.revert_with(exception_tag(node.exception))
        self.height += width(node.ty)

    def compile_CAddGas(self, node, env):
        self.out.append(Annotate(self.function.name, node))

    def compile_CGuard(self, node, env):
        ok = self.fresh("guarded")
        self.compile(self.module.modifiers[node.flag], {})
        self.emit(PushLabel(ok), Op("JUMPI"))
        self.revert_with(exception_tag(guard_exception(node.flag, node.exception)))
        self.label(ok)

    def compile_CSend(self, node, env):
        self.emit(push(0), push(0), push(0), push(0))
        self.compile(node.to, env)
        self.compile(node.amount, env)
        body = (Op("SWAP1"), push(SEND_STIPEND), Op("CALL"), Op("POP"))
        self.out.append(Macro("send", body))
        self.height -= 6

    def compile_CTransfer(self, node, env):
        self.compile(node.sender, env)
        self.compile(node.to, env)
        self.compile(node.amount, env)
        source = self.layout.map_bases[node.map_from]
        dest = self.layout.map_bases[node.map_to]
        self.emit(Op("DUP3"), push(source), Op("ADD"), Op("DUP1"), Op("SLOAD"), Op("DUP3"), Op("SWAP1"),
                  Op("SUB"), Op("SWAP1"), Op("SSTORE"))
        self.emit(Op("DUP2"), push(dest), Op("ADD"), Op("DUP1"), Op("SLOAD"), Op("DUP3"), Op("ADD"),
                  Op("SWAP1"), Op("SSTORE"))
        self.emit(Op("POP"), Op("POP"), Op("POP"))

    def compile_CEmit(self, node, env):
        self.compile(node.payload, env)
        self.emit(push(0), Op("MSTORE"), push(selector(node.event)), push(WORD), push(0), Op("LOG1"))
        self.height -= 3

    def compile_CCaller(self, node, env):
        self.emit(Op("CALLER"))

    def compile_CCallValue(self, node, env):
        self.emit(Op("CALLVALUE"))


def entry_stub(function: CoreFunction) -> List[object]:
    """Decode calldata words, call the function and return its result word."""
    resume = f"entry.{function.name}.ret"
    out = [LabelDef(f"entry.{function.name}"), Op("JUMPDEST"), Op("POP"), PushLabel(resume)]
    for k, (name, ty) in enumerate(function.params):
        if ty not in KINDS and ty != "bool":
            raise UnsupportedConstruct(f"public function {function.name} takes {name} : {ty}; entry points "
                                       f"accept integers and booleans only", function.loc, "public-signature")
        out += [push(4 + WORD * k), Op("CALLDATALOAD")]
    out.append(Macro("call", (PushLabel(function.name), Op("JUMP", tag="call")),
                     target=function.name, resume=resume))
    out += [LabelDef(resume), Op("JUMPDEST")]
    if width(function.ret):
        out += [push(0), Op("MSTORE"), push(WORD), push(0), Op("RETURN")]
    else:
        out += [push(0), push(0), Op("RETURN")]
    return out


def codegen(core: CoreModule, layout: Optional[LayoutPlan] = None) -> SymProgram:
    """Prologue, selector dispatch, entry stubs, then every function body."""
    layout = layout or plan_layout(core)
    out: List[object] = [push(HEAP_START), push(FREE_POINTER), Op("MSTORE"),
                         push(SELECTOR_SHIFT), push(0), Op("CALLDATALOAD"), Op("DIV")]
    public = core.public_functions
    for f in public:
        out += [Op("DUP1"), push(selector(f.name)), Op("EQ"), PushLabel(f"entry.{f.name}"), Op("JUMPI")]
    out += [push(0), push(0), Op("REVERT")]
    for f in public:
        out += entry_stub(f)
    for f in core.functions.values():
        FunctionCompiler(core, layout, f, out).compile_function()
    return SymProgram(core.name, out, list(core.functions), [f.name for f in public])


def render_symbolic(program: SymProgram) -> str:
    lines = []

    def render(item, indent="    "):
        if isinstance(item, LabelDef):
            lines.append(f"L{item.label}:")
        elif isinstance(item, PushLabel):
            lines.append(f"{indent}PUSH L{item.label}")
        elif isinstance(item, Annotate):
            lines.append(f"{indent}; add_gas {item.node.used} {item.node.alloc}")
        elif isinstance(item, Macro):
            lines.append(f"{indent}; {item.kind} {item.target or item.alloc or ''}".rstrip())
            for inner in item.body:
                render(inner, indent + "  ")
        elif item.immediate is not None:
            lines.append(f"{indent}{item.mnemonic} {item.immediate:#x}")
        else:
            lines.append(f"{indent}{item.mnemonic}")

    for item in program.instrs:
        render(item)
    return "\n".join(lines) + "\n"


def codegen_file(input_file, debug=False):
    try:
        core = check_source(Path(input_file).read_text(encoding="utf-8"), Path(input_file).stem)
        program = codegen(core)
    except OSError as e:
        print(f"Error reading {input_file}: {e}")
        return None
    except MlcError as e:
        print(f"{input_file}:{e}")
        return None
    print(f"Generated {len(program.instrs)} symbolic items for {len(program.functions)} functions")
    if debug:
        print(render_symbolic(program), end="")
    return program


def main():
    parser = argparse.ArgumentParser(description="Generate symbolic EVM assembly for an .mlc source file.")
    parser.add_argument("input", help="Path to the .mlc source")
    parser.add_argument("--print", dest="show", action="store_true", help="Print the symbolic listing")
    args = parser.parse_args()
    if codegen_file(args.input, debug=args.show) is None:
        sys.exit(1)


if __name__ == "__main__":
    main()
