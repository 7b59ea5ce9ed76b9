"""
Reference interpreter over the typed core IR.

Evaluates a contract function directly on the IR with checked arithmetic,
against the same storage layout the compiled code uses, so its results can
be compared with a bytecode run slot for slot. Ghost ``add_gas`` annotations
advance the declared gas/alloc counters.

With ``spec_check`` on, the executable part of the specification language
is asserted at runtime: ``requires`` on entry, ``ensures`` on return,
``raises`` conditions on a raise, loop invariants before the first and
after every iteration, and variants on every loop iteration and recursive
call. A failed assertion raises ``SpecViolation``; the intrinsics ``send``
and ``transfer`` check their own preconditions the same way.

Arithmetic overflow in code raises ``Overflow`` (the compiled code would
wrap), which is how the differential tests recognise inputs outside the
compiled semantics.
"""

from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from .chain import Address, ExecContext, LogEntry, TokenMap, World, guard, send, token_transfer, uint
from .core_ir import BOOL, Core, CoreFunction, CoreModule, is_int
from .errors import GuardFailed, MlcError, SpecViolation, StepLimit
from .interpreter import FAULT, RETURN, REVERT
from .numeric import KINDS, MAX_UINT, BoundedInt, checked_arith, compare, exact, from_math, from_word, to_word
from .step_02_parse import Printer
from .step_04_codegen import LayoutPlan, exception_tag, guard_exception, plan_layout, selector
from .syntax import (Apply, Ascribe, BinOp, BoolLit, Deref, FieldGet, Index, IntLit, Not, Old, ResultRef,
                     UnitLit, Var)

DEFAULT_MAX_STEPS = 2_000_000

SPEC_ARITH = {"+": "add", "-": "sub", "*": "mul", "/": "div", "%": "mod"}


@dataclass(frozen=True)
class AdtValue:
    ctor: str
    tag: int
    fields: tuple = ()


class RecordValue:
    """A volatile record cell; mutable and shared by reference like its memory image."""

    def __init__(self, record: str, fields):
        self.record = record
        self.fields = list(fields)

    def __repr__(self):
        return f"{self.record}{{{', '.join(map(repr, self.fields))}}}"


class Raised(Exception):
    """A contract-level raise travelling up to the transaction boundary."""

    def __init__(self, exception: str):
        super().__init__(exception)
        self.exception = exception


@dataclass
class EvalResult:
    outcome: str
    ret: str = "unit"
    value: object = None
    exception: Optional[str] = None
    tag: Optional[int] = None
    storage_delta: Dict[int, int] = field(default_factory=dict)
    logs: List[LogEntry] = field(default_factory=list)
    declared_gas: int = 0
    declared_alloc: int = 0
    allocated: int = 0
    steps: int = 0

    @property
    def ok(self) -> bool:
        return self.outcome == RETURN

    @property
    def word(self) -> Optional[int]:
        """The value as the compiled entry point would return it."""
        if not self.ok:
            return None
        if self.ret == BOOL:
            return int(self.value)
        if is_int(self.ret):
            return to_word(from_math(KINDS[self.ret], self.value))
        return None

    def describe(self) -> str:
        if self.outcome == RETURN:
            return f"Return({self.value!r})"
        if self.outcome == REVERT:
            return f"Revert({self.exception})"
        return "Fault(InsufficientBalance)"


@dataclass
class Frame:
    function: CoreFunction
    args: Dict[str, object]
    storage: Optional[Dict[int, int]]
    gas: int
    alloc: int
    variant: Optional[tuple] = None


class Evaluator:
    def __init__(self, core: CoreModule, world: World, ctx: ExecContext, spec_check: bool = False,
                 layout: Optional[LayoutPlan] = None, max_steps: int = DEFAULT_MAX_STEPS):
        self.core = core
        self.world = world
        self.ctx = ctx
        self.spec_check = spec_check
        self.layout = layout or plan_layout(core)
        self.max_steps = max_steps
        self.declared_gas = 0
        self.declared_alloc = 0
        self.allocated = 0
        self.steps = 0
        self.frames: List[Frame] = []

    # --- helpers ---

    def violation(self, message: str, node=None):
        return SpecViolation(message, getattr(node, "loc", None))

    def read_slot(self, slot: int, kind: str, storage=None) -> int:
        storage = self.world.storage if storage is None else storage
        return from_word(KINDS[kind], storage.get(slot, 0)).value

    def write_slot(self, slot: int, kind: str, value: int):
        self.world.storage[slot] = to_word(from_math(KINDS[kind], value))

    def modifier(self, flag: str) -> bool:
        return bool(self.eval(self.core.modifiers[flag], {}))

    @contextmanager
    def viewing(self, storage: Dict[int, int]):
        """Temporarily read (and write) a different storage image."""
        saved = self.world.storage
        self.world.storage = storage
        try:
            yield
        finally:
            self.world.storage = saved

    # --- functions ---

    def call(self, f: CoreFunction, args) -> object:
        bound = dict(zip((name for name, _ in f.params), args))
        frame = Frame(f, bound, dict(self.world.storage) if self.spec_check else None,
                      self.declared_gas, self.declared_alloc)
        if self.spec_check:
            for clause in f.requires:
                if not self.spec(clause, bound, frame):
                    raise self.violation(f"{f.name}: requires {_render(clause)} does not hold", clause)
            if f.variants:
                frame.variant = tuple(self.spec(v, bound, frame) for v in f.variants)
                caller = self.frames[-1] if self.frames else None
                if caller is not None and caller.function.name == f.name and caller.variant is not None:
                    if min(frame.variant) < 0 or not frame.variant < caller.variant:
                        raise self.violation(f"{f.name}: variant {frame.variant} does not decrease from "
                                             f"{caller.variant}", f)
        env = {name: [value] for name, value in bound.items()}
        self.frames.append(frame)
        try:
            try:
                result = self.eval(f.body, env)
            except Raised as raised:
                if self.spec_check:
                    self.check_raises(f, frame, raised.exception)
                raise
            if self.spec_check:
                for clause in f.ensures:
                    if not self.spec(clause, bound, frame, result):
                        raise self.violation(f"{f.name}: ensures {_render(clause)} does not hold", clause)
            return result
        finally:
            self.frames.pop()

    def check_raises(self, f: CoreFunction, frame: Frame, exception: str):
        if not f.raises or exception not in self.core.exceptions:
            return
        listed = [entry for entry in f.raises if entry.exception == exception]
        if not listed:
            raise self.violation(f"{f.name} raised {exception}, which its raises clause does not list", f)
        for entry in listed:
            if entry.condition is not None and not self.spec(entry.condition, frame.args, frame):
                raise self.violation(f"{f.name} raised {exception} while {_render(entry.condition)} is false",
                                     entry)

    # --- code ---

    def eval(self, node: Core, env: Dict[str, list]):
        self.steps += 1
        if self.steps > self.max_steps:
            raise StepLimit(f"evaluation exceeded {self.max_steps} steps", node.loc)
        return getattr(self, f"eval_{type(node).__name__}")(node, env)

    def eval_CInt(self, node, env):
        return node.value

    def eval_CBool(self, node, env):
        return node.value

    def eval_CUnit(self, node, env):
        return None

    def eval_CLocal(self, node, env):
        return env[node.var][0]

    def eval_CLet(self, node, env):
        value = self.eval(node.value, env)
        inner = dict(env)
        inner[node.var] = [value]
        return self.eval(node.body, inner)

    def eval_CAssign(self, node, env):
        env[node.var][0] = self.eval(node.value, env)

    def eval_CSeq(self, node, env):
        self.eval(node.first, env)
        return self.eval(node.second, env)

    def eval_CIf(self, node, env):
        if self.eval(node.cond, env):
            return self.eval(node.then, env)
        return self.eval(node.orelse, env)

    def loop_scope(self, env) -> Dict[str, object]:
        return {name: cell[0] for name, cell in env.items()}

    def check_invariants(self, node, env, when: str):
        frame = self.frames[-1]
        for clause in node.invariants:
            if not self.spec(clause, self.loop_scope(env), frame):
                raise self.violation(f"loop invariant {_render(clause)} fails {when}", clause)

    def eval_CWhile(self, node, env):
        check = self.spec_check
        if check:
            self.check_invariants(node, env, "on entry")
        previous = None
        while self.eval(node.cond, env):
            if check and node.variants:
                current = tuple(self.spec(v, self.loop_scope(env), self.frames[-1]) for v in node.variants)
                if min(current) < 0 or (previous is not None and not current < previous):
                    raise self.violation(f"loop variant {current} does not decrease from {previous}", node)
                previous = current
            self.eval(node.body, env)
            if check:
                self.check_invariants(node, env, "after an iteration")

    def eval_CMatch(self, node, env):
        value = self.eval(node.scrutinee, env)
        arm = next(a for a in node.arms if a.tag == value.tag)
        inner = dict(env)
        for binder, item in zip(arm.binders, value.fields):
            if binder is not None:
                inner[binder] = [item]
        return self.eval(arm.body, inner)

    def eval_CConstruct(self, node, env):
        args = tuple(self.eval(arg, env) for arg in node.args)
        self.allocated += self.layout.cell_sizes[node.ctor]
        return AdtValue(node.ctor, node.tag, args)

    def eval_CRecord(self, node, env):
        args = [self.eval(arg, env) for arg in node.args]
        self.allocated += self.layout.cell_sizes[node.record]
        return RecordValue(node.record, args)

    def eval_CField(self, node, env):
        return self.eval(node.target, env).fields[node.index]

    def eval_CSetField(self, node, env):
        target = self.eval(node.target, env)
        target.fields[node.index] = self.eval(node.value, env)

    def eval_CGlobalGet(self, node, env):
        return self.read_slot(self.layout.slot(node.glob, node.field_name), node.ty)

    def eval_CGlobalSet(self, node, env):
        value = self.eval(node.value, env)
        self.write_slot(self.layout.slot(node.glob, node.field_name), node.value.ty, value)

    def eval_CMapGet(self, node, env):
        key = self.eval(node.key, env)
        return self.read_slot(self.layout.map_slot(node.map_name, key), node.ty)

    def eval_CMapSet(self, node, env):
        key = self.eval(node.key, env)
        value = self.eval(node.value, env)
        self.write_slot(self.layout.map_slot(node.map_name, key), node.value.ty, value)

    def eval_CCall(self, node, env):
        args = [self.eval(arg, env) for arg in node.args]
        return self.call(self.core.functions[node.func], args)

    def eval_CArith(self, node, env):
        kind = KINDS[node.ty]
        left = self.eval(node.left, env)
        right = self.eval(node.right, env)
        return checked_arith(node.op, BoundedInt(kind, left), BoundedInt(kind, right)).value

    def eval_CCompare(self, node, env):
        left = self.eval(node.left, env)
        right = self.eval(node.right, env)
        if node.left.ty == BOOL:
            return (left == right) if node.op == "eq" else (left != right)
        kind = KINDS[node.left.ty]
        return compare(node.op, BoundedInt(kind, left), BoundedInt(kind, right))

    def eval_CLogic(self, node, env):
        left = self.eval(node.left, env)
        right = self.eval(node.right, env)
        return (left and right) if node.op == "and" else (left or right)

    def eval_CNot(self, node, env):
        return not self.eval(node.operand, env)

    def eval_CRaise(self, node, env):
        raise Raised(node.exception)

    def eval_CAddGas(self, node, env):
        scope = self.loop_scope(env)
        frame = self.frames[-1]
        used = node.used if node.used is not None else self.spec(node.used_expr, scope, frame)
        alloc = node.alloc if node.alloc is not None else self.spec(node.alloc_expr, scope, frame)
        self.declared_gas += used
        self.declared_alloc += alloc

    def eval_CGuard(self, node, env):
        self.ctx.flags[node.flag] = self.modifier(node.flag)
        try:
            guard(self.ctx, node.flag)
        except GuardFailed:
            raise Raised(guard_exception(node.flag, node.exception))

    def eval_CSend(self, node, env):
        to = Address(self.eval(node.to, env))
        amount = uint(self.eval(node.amount, env))
        contract = self.world.contract
        if self.spec_check:
            self.world.ledger = send(self.world.ledger, contract, to, amount, spec_check=True)
        elif self.world.ledger[contract].value >= amount.value:
            # an unfunded CALL moves nothing
            self.world.ledger = send(self.world.ledger, contract, to, amount, spec_check=False)

    def eval_CTransfer(self, node, env):
        sender = self.eval(node.sender, env)
        to = self.eval(node.to, env)
        amount = uint(self.eval(node.amount, env))
        src = self.layout.map_slot(node.map_from, sender)
        dst = self.layout.map_slot(node.map_to, to)
        storage = self.world.storage
        m_from = TokenMap({Address(sender): storage.get(src, 0)})
        if node.map_from == node.map_to:
            m_from.set(Address(to), uint(storage.get(dst, 0)))
            m_to = m_from
        else:
            m_to = TokenMap({Address(to): storage.get(dst, 0)})
        new_from, new_to = token_transfer(m_from, m_to, Address(sender), Address(to), amount,
                                          spec_check=self.spec_check)
        storage[src] = new_from[Address(sender)].value
        storage[dst] = new_to[Address(to)].value

    def eval_CEmit(self, node, env):
        payload = self.eval(node.payload, env)
        word = to_word(from_math(KINDS[node.payload.ty], payload))
        self.world.logs.append(LogEntry(selector(node.event), word.to_bytes(32, "big")))
        self.ctx.emit(node.event, payload)

    def eval_CCaller(self, node, env):
        return self.ctx.msg_sender.value

    def eval_CCallValue(self, node, env):
        return self.ctx.value

    # --- specifications ---

    def spec(self, e, scope: Dict[str, object], frame: Frame, result=None, old: bool = False):
        """Evaluate a specification expression with unbounded arithmetic."""
        storage = frame.storage if old else None
        gas, alloc = (frame.gas, frame.alloc) if old else (self.declared_gas, self.declared_alloc)

        def ev(node):
            if isinstance(node, (IntLit, BoolLit)):
                return node.value
            if isinstance(node, UnitLit):
                return None
            if isinstance(node, Ascribe):
                return ev(node.expr)
            if isinstance(node, ResultRef):
                return result
            if isinstance(node, Old):
                return self.spec(node.expr, scope, frame, result, old=True)
            if isinstance(node, (Var, Deref)):
                return self.spec_name(node, scope, gas, alloc, storage)
            if isinstance(node, Not):
                return not ev(node.operand)
            if isinstance(node, FieldGet):
                target = node.target
                if isinstance(target, Var) and target.name not in scope and target.name in self.core.globals:
                    kind = self.core.globals[target.name].kind_of(node.name)
                    return self.read_slot(self.layout.slot(target.name, node.name), kind, storage)
                value = ev(target)
                return value.fields[self.core.records[value.record].index_of(node.name)]
            if isinstance(node, Index):
                info = self.core.maps[node.map_name]
                return self.read_slot(self.layout.map_slot(info.name, ev(node.key)), info.value, storage)
            if isinstance(node, Apply):
                return self.spec_apply(node, [ev(arg) for arg in node.args], storage)
            if isinstance(node, BinOp):
                if node.op == "&&":
                    return ev(node.left) and ev(node.right)
                if node.op == "||":
                    return ev(node.left) or ev(node.right)
                if node.op == "->":
                    return (not ev(node.left)) or ev(node.right)
                left, right = ev(node.left), ev(node.right)
                if node.op in SPEC_ARITH:
                    return exact(SPEC_ARITH[node.op], left, right)
                if node.op in ("=", "<>"):
                    return (left == right) if node.op == "=" else (left != right)
                return {"<": left < right, "<=": left <= right, ">": left > right, ">=": left >= right}[node.op]
            raise MlcError(f"{type(node).__name__} is not executable in a specification",
                           getattr(node, "loc", None), "spec-executable")

        return ev(e)

    def spec_name(self, node, scope, gas, alloc, storage):
        name = node.name
        if name in scope:
            return scope[name]
        if name in self.core.constants:
            return self.core.constants[name][1]
        if name == "gas":
            return gas
        if name == "alloc":
            return alloc
        if name == "max_uint":
            return MAX_UINT
        if name in self.core.modifiers:
            with self.viewing(self.world.storage if storage is None else dict(storage)):
                return self.modifier(name)
        raise MlcError(f"unbound name '{name}' in specification", node.loc, "spec-scope")

    def spec_apply(self, node, args, storage):
        if node.func[0].isupper():
            _, ctor = self.core.ctor(node.func)
            return AdtValue(ctor.name, ctor.tag, tuple(args))
        if node.func == "caller":
            return self.ctx.msg_sender.value
        if node.func == "callvalue":
            return self.ctx.value
        return self.pure_call(self.core.functions[node.func], [a for a in args if a is not None], storage)

    def pure_call(self, f: CoreFunction, args, storage):
        """Call a function from a specification; nothing it does survives."""
        saved = (self.declared_gas, self.declared_alloc, self.allocated, self.spec_check,
                 self.world.ledger, list(self.world.logs), list(self.ctx.event_log))
        self.spec_check = False
        try:
            with self.viewing(dict(self.world.storage if storage is None else storage)):
                return self.call(f, args)
        finally:
            (self.declared_gas, self.declared_alloc, self.allocated, self.spec_check,
             self.world.ledger, self.world.logs, self.ctx.event_log) = saved


def _render(e) -> str:
    return Printer().render(e)


def derive_flags(core: CoreModule, world: World, ctx: ExecContext,
                 layout: Optional[LayoutPlan] = None) -> Dict[str, bool]:
    """Evaluate every modifier of the contract for the transaction's caller."""
    evaluator = Evaluator(core, world, ctx, layout=layout)
    flags = {name: evaluator.modifier(name) for name in core.modifiers}
    ctx.flags.update(flags)
    return flags


def evaluate(core: CoreModule, function: str, args, world: World, ctx: ExecContext, spec_check: bool = False,
             layout: Optional[LayoutPlan] = None, max_steps: int = DEFAULT_MAX_STEPS) -> EvalResult:
    """Run ``function`` as one transaction against ``world``; only a normal return commits."""
    f = core.functions[function]
    if len(args) != len(f.params):
        raise MlcError(f"{function} takes {len(f.params)} arguments, got {len(args)}")
    values = []
    for (name, ty), arg in zip(f.params, args):
        if ty == BOOL:
            values.append(bool(arg))
        elif is_int(ty):
            values.append(from_math(KINDS[ty], int(arg)).value)
        else:
            values.append(arg)

    scratch = world.copy()
    if ctx.value:
        if scratch.ledger[ctx.msg_sender].value < ctx.value:
            return EvalResult(FAULT, f.ret)
        scratch.ledger = send(scratch.ledger, ctx.msg_sender, world.contract, uint(ctx.value), spec_check=False)
    evaluator = Evaluator(core, scratch, ctx, spec_check, layout, max_steps)
    logged = len(scratch.logs)
    try:
        value = evaluator.call(f, values)
    except Raised as raised:
        return EvalResult(REVERT, f.ret, exception=raised.exception, tag=exception_tag(raised.exception),
                          declared_gas=evaluator.declared_gas, declared_alloc=evaluator.declared_alloc,
                          allocated=evaluator.allocated, steps=evaluator.steps)

    delta = {k: v for k, v in scratch.storage.items() if world.storage.get(k, 0) != v}
    logs = scratch.logs[logged:]
    world.storage = scratch.storage
    world.ledger = scratch.ledger
    world.logs.extend(logs)
    return EvalResult(RETURN, f.ret, value, storage_delta=delta, logs=list(logs),
                      declared_gas=evaluator.declared_gas, declared_alloc=evaluator.declared_alloc,
                      allocated=evaluator.allocated, steps=evaluator.steps)
