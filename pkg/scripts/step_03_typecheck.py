#!/usr/bin/env python3
"""
Contract Type Checker

Resolves names, assigns a type to every expression and lowers the surface
tree to the core IR. Besides ordinary typing it enforces the rules the
backend depends on:

- globals are records of integer fields, maps are keyed by small unsigned kinds
- arithmetic operands share one integer kind
- only public functions raise, and every raise precedes the first mutation of
  storage, the ledger or the event log on every path
- add_gas arguments are non-negative constants or affine in the parameters
"""

import argparse
import sys
from pathlib import Path
from typing import Dict, Optional, Set, Tuple

from .core_ir import (BOOL, MUTATIONS, NEVER, RAISES, UNIT, AdtInfo, CAddGas, CArith, CArm, CAssign, CBool,
                      CCall, CCaller, CCallValue, CCompare, CConstruct, CEmit, CField, CGlobalGet, CGlobalSet,
                      CGuard, CIf, CInt, CLet, CLocal, CLogic, CMapGet, CMapSet, CMatch, CNot, Core,
                      CoreFunction, CoreModule, CRaise, CRecord, CSend, CSeq, CSetField, CTransfer, CtorInfo,
                      CUnit, CWhile, GlobalInfo, MapInfo, RecordInfo, is_int, walk)
from .errors import GlobalShapeError, MlcError, MlcTypeError, RaiseDisciplineError
from .numeric import ALIASES, KINDS, MAX_UINT, kind_of
from .step_02_parse import parse_source
from .syntax import (AddGas, Apply, Ascribe, Assign, BinOp, BoolLit, ConstantDecl, Deref, Emit, EventDecl,
                     ExceptionDecl, FieldGet, FieldSet, FunDecl, GlobalDecl, Guard, If, Index, IndexSet, IntLit,
                     Let, MapDecl, Match, ModifierDecl, Not, Old, Raise, RecordDecl, RecordLit, ResultRef, Send,
                     Seq, SourceModule, Transfer, TypeDecl, UnitLit, Var, While)

ARITH = {"+": "add", "-": "sub", "*": "mul", "/": "div", "%": "mod"}
COMPARE = {"=": "eq", "<>": "ne", "<": "lt", "<=": "le", ">": "gt", ">=": "ge"}
SPEC_NAMES = {"gas", "alloc", "max_uint"}

Env = Dict[str, Tuple[str, bool]]


def _join(a: str, b: str) -> Optional[str]:
    if a == NEVER:
        return b
    if b == NEVER or a == b:
        return a
    return None


def settle(node: Core, ty: str) -> None:
    """Give an always-raising expression the type its context expects."""
    if node.ty != NEVER:
        return
    node.ty = ty
    if isinstance(node, CSeq):
        settle(node.second, ty)
    elif isinstance(node, CLet):
        settle(node.body, ty)
    elif isinstance(node, CIf):
        settle(node.then, ty)
        settle(node.orelse, ty)
    elif isinstance(node, CMatch):
        for arm in node.arms:
            arm.ty = ty
            settle(arm.body, ty)


class TypeChecker:
    def __init__(self, module: SourceModule):
        self.source = module
        self.core = CoreModule(module.name)
        self.signatures: Dict[str, FunDecl] = {}
        self.modifier_decls: Dict[str, ModifierDecl] = {}

    # --- helpers ---

    def error(self, message, node, rule=None, cls=MlcTypeError):
        return cls(message, getattr(node, "loc", None), rule)

    def resolve_type(self, name: str, node) -> str:
        name = ALIASES.get(name, name)
        if name in KINDS or name in (BOOL, UNIT) or name in self.core.adts or name in self.core.records:
            return name
        raise self.error(f"unknown type '{name}'", node, "unknown-type")

    def resolve_kind(self, name: str, node, cls=MlcTypeError, rule="integer-kind") -> str:
        try:
            return kind_of(name).name
        except KeyError:
            raise self.error(f"'{name}' is not an integer kind", node, rule, cls)

    def expect_type(self, node: Core, ty: str, source) -> Core:
        joined = _join(node.ty, ty)
        if joined != ty:
            raise self.error(f"expected {ty}, found {node.ty}", source, "type-mismatch")
        settle(node, ty)
        return node

    def unique(self, seen: Set[str], name: str, node, what: str):
        if name in seen:
            raise self.error(f"duplicate {what} '{name}'", node, "duplicate-name")
        seen.add(name)

    # --- declarations ---

    def collect(self):
        type_names, ctor_names, values, exceptions, events = set(), set(), set(), set(), set()
        decls = self.source.decls
        # type names first so declarations may refer to later types
        for d in decls:
            if isinstance(d, TypeDecl):
                self.unique(type_names, d.name, d, "type")
                self.core.adts[d.name] = AdtInfo(d.name, [])
            elif isinstance(d, RecordDecl):
                self.unique(type_names, d.name, d, "type")
                self.core.records[d.name] = RecordInfo(d.name, [])
        for d in decls:
            if isinstance(d, TypeDecl):
                for tag, ctor in enumerate(d.constructors):
                    self.unique(ctor_names, ctor.name, ctor, "constructor")
                    field_types = tuple(self.resolve_type(t, ctor) for t in ctor.fields)
                    self.core.adts[d.name].ctors.append(CtorInfo(ctor.name, tag, field_types))
            elif isinstance(d, RecordDecl):
                seen = set()
                for f in d.fields:
                    self.unique(seen, f.name, f, "field")
                    self.core.records[d.name].fields.append((f.name, self.resolve_type(f.ty, f), f.mutable))
            elif isinstance(d, GlobalDecl):
                self.unique(values, d.name, d, "name")
                seen, shaped = set(), []
                for f in d.fields:
                    self.unique(seen, f.name, f, "field")
                    if ALIASES.get(f.ty, f.ty) not in KINDS:
                        raise self.error(f"global {d.name}.{f.name} has type {f.ty}; globals hold integers only",
                                         f, "integer-globals", GlobalShapeError)
                    shaped.append((f.name, kind_of(f.ty).name))
                self.core.globals[d.name] = GlobalInfo(d.name, shaped)
            elif isinstance(d, MapDecl):
                self.unique(values, d.name, d, "name")
                key = self.resolve_kind(d.key, d, GlobalShapeError, "map-key")
                if KINDS[key].signed or KINDS[key].width > 160:
                    raise self.error(f"map {d.name} key {key} must be unsigned and at most 160 bits", d,
                                     "map-key", GlobalShapeError)
                value = self.resolve_kind(d.value, d, GlobalShapeError, "integer-globals")
                self.core.maps[d.name] = MapInfo(d.name, len(self.core.maps), key, value)
            elif isinstance(d, ExceptionDecl):
                self.unique(exceptions, d.name, d, "exception")
                self.core.exceptions.append(d.name)
            elif isinstance(d, EventDecl):
                self.unique(events, d.name, d, "event")
                self.core.events.append(d.name)
            elif isinstance(d, ConstantDecl):
                self.unique(values, d.name, d, "name")
                kind = self.resolve_kind(d.ty, d)
                if not KINDS[kind].contains(d.value):
                    raise self.error(f"constant {d.name} = {d.value} is outside {kind}", d, "literal-range")
                self.core.constants[d.name] = (kind, d.value)
            elif isinstance(d, ModifierDecl):
                self.unique(values, d.name, d, "name")
                self.modifier_decls[d.name] = d
            elif isinstance(d, FunDecl):
                self.unique(values, d.name, d, "name")
                self.signatures[d.name] = d

    # --- expressions ---

    def infer(self, e, env: Env, expected: Optional[str] = None) -> Core:
        method = getattr(self, f"infer_{type(e).__name__}", None)
        if method is None:
            raise self.error(f"{type(e).__name__} is not allowed in code", e, "specification-only")
        node = method(e, env, expected)
        if node.loc is None:
            node.loc = getattr(e, "loc", None)
        return node

    def check(self, e, env: Env, ty: str) -> Core:
        return self.expect_type(self.infer(e, env, ty), ty, e)

    def infer_IntLit(self, e, env, expected):
        kind = expected if expected and is_int(expected) else "uint256"
        if not KINDS[kind].contains(e.value):
            raise self.error(f"literal {e.value} is outside {kind}", e, "literal-range")
        return CInt(e.value, ty=kind)

    def infer_BoolLit(self, e, env, expected):
        return CBool(e.value, ty=BOOL)

    def infer_UnitLit(self, e, env, expected):
        return CUnit(ty=UNIT)

    def infer_Ascribe(self, e, env, expected):
        ty = self.resolve_type(e.ty, e)
        return self.check(e.expr, env, ty)

    def infer_Var(self, e, env, expected):
        if e.name in env:
            ty, is_ref = env[e.name]
            if is_ref:
                raise self.error(f"reference '{e.name}' must be read with !{e.name}", e, "reference-read")
            return CLocal(e.name, ty=ty)
        if e.name in self.core.constants:
            kind, value = self.core.constants[e.name]
            return CInt(value, ty=kind)
        if e.name == "max_uint":
            return CInt(MAX_UINT, ty="uint256")
        if e.name in self.core.globals or e.name in self.core.maps:
            raise self.error(f"'{e.name}' is persistent; access a field or an entry", e, "persistent-access")
        raise self.error(f"unbound variable '{e.name}'", e, "unbound-variable")

    def infer_Let(self, e, env, expected):
        value = self.infer(e.value, env)
        if value.ty == NEVER:
            raise self.error(f"binding '{e.name}' never receives a value", e, "type-mismatch")
        inner = dict(env)
        if e.name != "_":
            inner[e.name] = (value.ty, e.is_ref)
        body = self.infer(e.body, inner, expected)
        return CLet(e.name, value, body, e.is_ref, ty=body.ty)

    def infer_Deref(self, e, env, expected):
        if e.name not in env or not env[e.name][1]:
            raise self.error(f"'{e.name}' is not a reference", e, "reference-read")
        return CLocal(e.name, ty=env[e.name][0])

    def infer_Assign(self, e, env, expected):
        if e.name not in env or not env[e.name][1]:
            raise self.error(f"'{e.name}' is not a reference", e, "reference-write")
        value = self.check(e.value, env, env[e.name][0])
        return CAssign(e.name, value, ty=UNIT)

    def infer_Seq(self, e, env, expected):
        first = self.infer(e.first, env)
        settle(first, UNIT)
        second = self.infer(e.second, env, expected)
        return CSeq(first, second, ty=second.ty)

    def infer_If(self, e, env, expected):
        cond = self.check(e.cond, env, BOOL)
        if e.orelse is None:
            then = self.check(e.then, env, UNIT)
            return CIf(cond, then, CUnit(ty=UNIT, loc=e.loc), ty=UNIT)
        then = self.infer(e.then, env, expected)
        orelse = self.infer(e.orelse, env, expected if then.ty == NEVER else then.ty)
        ty = _join(then.ty, orelse.ty)
        if ty is None:
            raise self.error(f"branches have types {then.ty} and {orelse.ty}", e, "type-mismatch")
        settle(then, ty)
        settle(orelse, ty)
        return CIf(cond, then, orelse, ty=ty)

    def infer_While(self, e, env, expected):
        cond = self.check(e.cond, env, BOOL)
        body = self.infer(e.body, env, UNIT)
        settle(body, UNIT)
        for clause in e.invariants + e.variants:
            self.check_spec(clause, env, allow_old=True)
        return CWhile(cond, body, e.invariants, e.variants, ty=UNIT)

    def infer_Match(self, e, env, expected):
        scrutinee = self.infer(e.scrutinee, env)
        adt = self.core.adts.get(scrutinee.ty)
        if adt is None:
            raise self.error(f"cannot match on a value of type {scrutinee.ty}", e, "match-adt")
        by_name = {c.name: c for c in adt.ctors}
        arms, seen = {}, set()
        ty = NEVER
        for arm in e.arms:
            if arm.ctor not in by_name:
                raise self.error(f"{arm.ctor} is not a constructor of {adt.name}", arm, "match-adt")
            if arm.ctor in seen:
                raise self.error(f"constructor {arm.ctor} matched twice", arm, "exhaustive-match")
            seen.add(arm.ctor)
            ctor = by_name[arm.ctor]
            if len(arm.binders) != len(ctor.fields):
                raise self.error(f"{arm.ctor} has {len(ctor.fields)} fields, pattern binds {len(arm.binders)}",
                                 arm, "pattern-arity")
            inner = dict(env)
            for binder, field_ty in zip(arm.binders, ctor.fields):
                if binder is not None:
                    inner[binder] = (field_ty, False)
            body = self.infer(arm.body, inner, expected if ty == NEVER else ty)
            joined = _join(ty, body.ty)
            if joined is None:
                raise self.error(f"match arms have types {ty} and {body.ty}", arm, "type-mismatch")
            ty = joined
            arms[ctor.tag] = CArm(ctor.name, ctor.tag, arm.binders, ctor.fields, body, ty=body.ty, loc=arm.loc)
        missing = [c.name for c in adt.ctors if c.name not in seen]
        if missing:
            raise self.error(f"match misses {', '.join(missing)}", e, "exhaustive-match")
        ordered = tuple(arms[tag] for tag in sorted(arms))
        for arm in ordered:
            arm.ty = ty
            settle(arm.body, ty)
        return CMatch(scrutinee, adt.name, ordered, ty=ty)

    def infer_RecordLit(self, e, env, expected):
        names = [name for name, _ in e.fields]
        if len(set(names)) != len(names):
            raise self.error("record literal repeats a field", e, "duplicate-name")
        candidates = [r for r in self.core.records.values() if sorted(f[0] for f in r.fields) == sorted(names)]
        if expected in self.core.records:
            candidates = [r for r in candidates if r.name == expected]
        if len(candidates) != 1:
            raise self.error(f"cannot determine the record type of {{{', '.join(names)}}}", e, "record-type")
        record = candidates[0]
        values = dict(e.fields)
        args = tuple(self.check(values[f_name], env, f_ty) for f_name, f_ty, _ in record.fields)
        return CRecord(record.name, args, ty=record.name)

    def global_target(self, target, env) -> Optional[GlobalInfo]:
        if isinstance(target, Var) and target.name not in env:
            return self.core.globals.get(target.name)
        return None

    def record_field(self, target: Core, field_name: str, e) -> Tuple[RecordInfo, int]:
        record = self.core.records.get(target.ty)
        if record is None:
            raise self.error(f"value of type {target.ty} has no fields", e, "field-access")
        index = record.index_of(field_name)
        if index < 0:
            raise self.error(f"record {record.name} has no field '{field_name}'", e, "field-access")
        return record, index

    def infer_FieldGet(self, e, env, expected):
        glob = self.global_target(e.target, env)
        if glob is not None:
            kind = glob.kind_of(e.name)
            if kind is None:
                raise self.error(f"global {glob.name} has no field '{e.name}'", e, "field-access")
            return CGlobalGet(glob.name, e.name, ty=kind)
        target = self.infer(e.target, env)
        record, index = self.record_field(target, e.name, e)
        return CField(target, record.name, index, ty=record.fields[index][1])

    def infer_FieldSet(self, e, env, expected):
        glob = self.global_target(e.target, env)
        if glob is not None:
            kind = glob.kind_of(e.name)
            if kind is None:
                raise self.error(f"global {glob.name} has no field '{e.name}'", e, "field-access")
            return CGlobalSet(glob.name, e.name, self.check(e.value, env, kind), ty=UNIT)
        target = self.infer(e.target, env)
        record, index = self.record_field(target, e.name, e)
        _, field_ty, mutable = record.fields[index]
        if not mutable:
            raise self.error(f"field {record.name}.{e.name} is not mutable", e, "immutable-field")
        return CSetField(target, record.name, index, self.check(e.value, env, field_ty), ty=UNIT)

    def map_info(self, name: str, e) -> MapInfo:
        if name not in self.core.maps:
            raise self.error(f"'{name}' is not a declared map", e, "unknown-map")
        return self.core.maps[name]

    def infer_Index(self, e, env, expected):
        info = self.map_info(e.map_name, e)
        return CMapGet(info.name, self.check(e.key, env, info.key), ty=info.value)

    def infer_IndexSet(self, e, env, expected):
        info = self.map_info(e.map_name, e)
        key = self.check(e.key, env, info.key)
        return CMapSet(info.name, key, self.check(e.value, env, info.value), ty=UNIT)

    def unit_args(self, e) -> bool:
        return len(e.args) == 1 and isinstance(e.args[0], UnitLit)

    def infer_Apply(self, e, env, expected):
        if e.func[0].isupper():
            try:
                adt, ctor = self.core.ctor(e.func)
            except KeyError:
                raise self.error(f"unknown constructor {e.func}", e, "unknown-constructor")
            if len(e.args) != len(ctor.fields):
                raise self.error(f"{e.func} takes {len(ctor.fields)} arguments, got {len(e.args)}", e, "arity")
            args = tuple(self.check(a, env, t) for a, t in zip(e.args, ctor.fields))
            return CConstruct(adt.name, ctor.name, ctor.tag, args, ty=adt.name)
        if e.func in env:
            raise self.error(f"'{e.func}' is a value, not a function", e, "no-closure")
        if e.func in self.signatures:
            decl = self.signatures[e.func]
            if not decl.params:
                if not self.unit_args(e):
                    raise self.error(f"{e.func} takes ()", e, "arity")
                return CCall(e.func, (), ty=self.resolve_type(decl.ret, decl))
            if len(e.args) != len(decl.params):
                raise self.error(f"{e.func} takes {len(decl.params)} arguments, got {len(e.args)}", e, "arity")
            args = tuple(self.check(a, env, self.resolve_type(p.ty, p)) for a, p in zip(e.args, decl.params))
            return CCall(e.func, args, ty=self.resolve_type(decl.ret, decl))
        if e.func in ("caller", "callvalue"):
            if not self.unit_args(e):
                raise self.error(f"{e.func} takes ()", e, "arity")
            return CCaller(ty="uint160") if e.func == "caller" else CCallValue(ty="uint256")
        raise self.error(f"unknown function '{e.func}'", e, "unbound-function")

    def operands(self, e, env, expected):
        # a bare literal takes its kind from the other operand
        if isinstance(e.left, IntLit) and not isinstance(e.right, IntLit):
            right = self.infer(e.right, env, expected)
            left = self.infer(e.left, env, right.ty)
        else:
            left = self.infer(e.left, env, expected)
            right = self.infer(e.right, env, left.ty)
        return left, right

    def infer_BinOp(self, e, env, expected):
        if e.op in ("&&", "||"):
            left = self.check(e.left, env, BOOL)
            right = self.check(e.right, env, BOOL)
            return CLogic("and" if e.op == "&&" else "or", left, right, ty=BOOL)
        if e.op == "->":
            raise self.error("implication is only allowed in specifications", e, "specification-only")
        if e.op in ARITH:
            left, right = self.operands(e, env, expected if expected and is_int(expected) else None)
            if not is_int(left.ty) or left.ty != right.ty:
                raise self.error(f"'{e.op}' on {left.ty} and {right.ty}", e, "kind-mismatch")
            if e.op == "%" and KINDS[left.ty].signed:
                raise self.error(f"'%' is defined on unsigned kinds only, got {left.ty}", e, "unsigned-modulo")
            return CArith(ARITH[e.op], left, right, ty=left.ty)
        left, right = self.operands(e, env, None)
        same = left.ty == right.ty
        if not same or not (is_int(left.ty) or (left.ty == BOOL and e.op in ("=", "<>"))):
            raise self.error(f"'{e.op}' on {left.ty} and {right.ty}", e, "kind-mismatch")
        return CCompare(COMPARE[e.op], left, right, ty=BOOL)

    def infer_Not(self, e, env, expected):
        return CNot(self.check(e.operand, env, BOOL), ty=BOOL)

    def infer_Raise(self, e, env, expected):
        if e.exception not in self.core.exceptions:
            raise self.error(f"unknown exception {e.exception}", e, "unknown-exception")
        return CRaise(e.exception, ty=NEVER)

    def gas_argument(self, arg, env, params) -> Optional[int]:
        """Constant value of an add_gas argument, or None when it is affine in the parameters."""
        if isinstance(arg, IntLit):
            value = arg.value
        elif isinstance(arg, Var) and arg.name in self.core.constants and arg.name not in env:
            value = self.core.constants[arg.name][1]
        else:
            self.check_affine(arg, params)
            return None
        if value < 0:
            raise self.error(f"add_gas argument {value} is negative", arg, "nonnegative-gas")
        return value

    def check_affine(self, arg, params):
        def constant(node) -> bool:
            return isinstance(node, IntLit) or (isinstance(node, Var) and node.name in self.core.constants)

        def affine(node) -> bool:
            if constant(node):
                return not isinstance(node, IntLit) or node.value >= 0
            if isinstance(node, Var):
                return node.name in params
            if isinstance(node, BinOp) and node.op == "+":
                return affine(node.left) and affine(node.right)
            if isinstance(node, BinOp) and node.op == "*":
                return (constant(node.left) and affine(node.right)) or (affine(node.left) and constant(node.right))
            return False

        if not affine(arg):
            raise self.error("add_gas arguments must be non-negative constants or affine in the parameters",
                             arg, "affine-gas")

    def infer_AddGas(self, e, env, expected):
        params = self.current_params
        used = self.gas_argument(e.used, env, params)
        alloc = self.gas_argument(e.alloc, env, params)
        return CAddGas(used, alloc, e.used, e.alloc, ty=UNIT)

    def infer_Guard(self, e, env, expected):
        if e.flag not in self.modifier_decls:
            raise self.error(f"unknown guard flag '{e.flag}'", e, "unknown-flag")
        if e.exception is not None and e.exception not in self.core.exceptions:
            raise self.error(f"unknown exception {e.exception}", e, "unknown-exception")
        return CGuard(e.flag, e.exception, ty=UNIT)

    def infer_Send(self, e, env, expected):
        to = self.check(e.to, env, "uint160")
        return CSend(to, self.check(e.amount, env, "uint256"), ty=UNIT)

    def infer_Transfer(self, e, env, expected):
        source = self.map_info(e.map_from, e)
        dest = self.map_info(e.map_to, e)
        if source.value != "uint256" or dest.value != "uint256":
            raise self.error("transfer moves between uint256 balance maps", e, "kind-mismatch")
        sender = self.check(e.sender, env, source.key)
        to = self.check(e.to, env, dest.key)
        amount = self.check(e.amount, env, "uint256")
        return CTransfer(source.name, dest.name, sender, to, amount, ty=UNIT)

    def infer_Emit(self, e, env, expected):
        if e.event not in self.core.events:
            raise self.error(f"unknown event {e.event}", e, "unknown-event")
        payload = self.infer(e.payload, env)
        if not is_int(payload.ty):
            raise self.error(f"event payload must be an integer, got {payload.ty}", e, "kind-mismatch")
        return CEmit(e.event, payload, ty=UNIT)

    # --- specifications ---

    def check_spec(self, e, scope: Env, allow_old=False, allow_result=False):
        """Scope check of a specification expression; evaluation happens in the reference interpreter."""
        def visit(node, in_old=False):
            if isinstance(node, Var):
                known = (node.name in scope or node.name in self.core.constants or node.name in SPEC_NAMES
                         or node.name in self.modifier_decls)
                if not known:
                    raise self.error(f"unbound name '{node.name}' in specification", node, "spec-scope")
                return
            if isinstance(node, ResultRef) and not allow_result:
                raise self.error("'result' is only meaningful in ensures", node, "spec-scope")
            if isinstance(node, Old):
                if not allow_old or in_old:
                    raise self.error("'old' is only meaningful in ensures and loop invariants", node, "spec-scope")
                visit(node.expr, True)
                return
            if isinstance(node, FieldGet) and isinstance(node.target, Var) and node.target.name in self.core.globals:
                if self.core.globals[node.target.name].kind_of(node.name) is None:
                    raise self.error(f"global {node.target.name} has no field '{node.name}'", node, "field-access")
                return
            if isinstance(node, (Index, IndexSet)):
                self.map_info(node.map_name, node)
            if isinstance(node, Apply) and not node.func[0].isupper():
                if node.func not in self.signatures and node.func not in ("caller", "callvalue"):
                    raise self.error(f"unknown function '{node.func}' in specification", node, "spec-scope")
            if isinstance(node, (Assign, IndexSet, FieldSet, Send, Transfer, Emit, Raise, AddGas, Guard)):
                raise self.error(f"{type(node).__name__} has effects and cannot appear in a specification",
                                 node, "spec-scope")
            for child in _ast_children(node):
                visit(child, in_old)

        visit(e)

    # --- functions ---

    def check_function(self, decl: FunDecl) -> CoreFunction:
        params = []
        env: Env = {}
        seen = set()
        for p in decl.params:
            self.unique(seen, p.name, p, "parameter")
            ty = self.resolve_type(p.ty, p)
            params.append((p.name, ty))
            env[p.name] = (ty, False)
        ret = self.resolve_type(decl.ret, decl)
        self.current_params = set(seen)
        body = self.infer(decl.body, env, ret)
        self.expect_type(body, ret, decl.body)
        for clause in decl.requires + decl.variants:
            self.check_spec(clause, env)
        for clause in decl.ensures:
            self.check_spec(clause, env, allow_old=True, allow_result=True)
        for entry in decl.raises:
            if entry.exception not in self.core.exceptions:
                raise self.error(f"unknown exception {entry.exception}", entry, "unknown-exception")
            if entry.condition is not None:
                self.check_spec(entry.condition, env, allow_old=True)
        if decl.rec is False and any(isinstance(n, CCall) and n.func == decl.name for n in walk(body)):
            raise self.error(f"{decl.name} calls itself; declare it with 'let rec'", decl, "recursion")
        return CoreFunction(decl.name, decl.visibility, tuple(params), ret, body, decl.gas_checking, decl.rec,
                            decl.requires, decl.ensures, decl.raises, decl.variants, loc=decl.loc)

    def check_modifiers(self):
        self.current_params = set()
        for name, decl in self.modifier_decls.items():
            body = self.check(decl.body, {}, BOOL)
            bad = [n for n in walk(body) if isinstance(n, MUTATIONS + RAISES + (CCall, CAddGas))]
            if bad:
                raise self.error(f"modifier {name} must be a side-effect free condition", bad[0], "pure-modifier")
            self.core.modifiers[name] = body

    # --- raise discipline ---

    def compute_effects(self):
        functions = self.core.functions
        calls = {name: {n.func for n in walk(f.body) if isinstance(n, CCall)} for name, f in functions.items()}
        for f in functions.values():
            nodes = list(walk(f.body))
            f.mutation_sites = [n.name for n in nodes if isinstance(n, MUTATIONS)]
            f.raise_sites = [n.name for n in nodes if isinstance(n, RAISES)]
            f.mutates = bool(f.mutation_sites)
            f.may_raise = bool(f.raise_sites)
        changed = True
        while changed:
            changed = False
            for name, f in functions.items():
                mutates = f.mutates or any(functions[c].mutates for c in calls[name])
                may_raise = f.may_raise or any(functions[c].may_raise for c in calls[name])
                if (mutates, may_raise) != (f.mutates, f.may_raise):
                    f.mutates, f.may_raise = mutates, may_raise
                    changed = True

    def check_raise_discipline(self):
        functions = self.core.functions
        for f in functions.values():
            if not f.public:
                for n in walk(f.body):
                    if isinstance(n, RAISES) or (isinstance(n, CCall) and functions[n.func].may_raise):
                        what = "raise" if isinstance(n, CRaise) else "guard" if isinstance(n, CGuard) \
                            else f"call to raising {n.func}"
                        raise RaiseDisciplineError(
                            f"private function {f.name} contains a {what}; state the condition as a "
                            f"requires clause instead", n.loc, "raise-only-public")
            else:
                self.flow(f.body, False, f)

    def flow(self, node: Core, mutated: bool, f: CoreFunction) -> bool:
        """Propagates 'storage may have been mutated' in evaluation order."""
        functions = self.core.functions
        if isinstance(node, RAISES):
            if mutated:
                raise RaiseDisciplineError(f"{f.name} may raise after a mutation", node.loc, "raise-before-mutation")
            return mutated
        if isinstance(node, CIf):
            mutated = self.flow(node.cond, mutated, f)
            then = self.flow(node.then, mutated, f)
            return self.flow(node.orelse, mutated, f) or then
        if isinstance(node, CMatch):
            mutated = self.flow(node.scrutinee, mutated, f)
            results = [self.flow(arm.body, mutated, f) for arm in node.arms]
            return any(results)
        if isinstance(node, CWhile):
            state = self.flow(node.cond, mutated, f)
            for _ in range(2):
                state = self.flow(node.cond, self.flow(node.body, state, f), f)
            return state
        for child in node.children():
            mutated = self.flow(child, mutated, f)
        if isinstance(node, CCall):
            callee = functions[node.func]
            if callee.may_raise and mutated:
                raise RaiseDisciplineError(f"{f.name} calls raising {callee.name} after a mutation", node.loc,
                                           "raise-before-mutation")
            return mutated or callee.mutates
        return mutated or isinstance(node, MUTATIONS)

    # --- driver ---

    def run(self) -> CoreModule:
        self.collect()
        self.check_modifiers()
        for name, decl in self.signatures.items():
            function = self.check_function(decl)
            for number, node in enumerate(walk(function.body)):
                node.name = f"%{number}"
            self.core.functions[name] = function
        self.compute_effects()
        self.check_raise_discipline()
        return self.core


def _ast_children(node):
    for value in getattr(node, "__dict__", {}).values():
        if isinstance(value, tuple):
            for item in value:
                if isinstance(item, tuple):
                    yield from (x for x in item if hasattr(x, "__dataclass_fields__"))
                elif hasattr(item, "__dataclass_fields__"):
                    yield item
        elif hasattr(value, "__dataclass_fields__"):
            yield value


def typecheck(module: SourceModule) -> CoreModule:
    """Check a parsed module and lower it to the core IR."""
    return TypeChecker(module).run()


def verify_types(core: CoreModule) -> bool:
    """Re-derive node types locally and compare them with the recorded ones."""
    def fail(node, message):
        raise MlcTypeError(f"{node.name or type(node).__name__}: {message}", node.loc, "type-preservation")

    for f in core.functions.values():
        env = dict(f.params)
        stack = [(f.body, env)]
        while stack:
            node, scope = stack.pop()
            if node.ty == NEVER:
                fail(node, "unsettled raise type")
            if isinstance(node, CArith) and not (node.left.ty == node.right.ty == node.ty):
                fail(node, f"arith operands {node.left.ty}/{node.right.ty} vs {node.ty}")
            if isinstance(node, (CCompare, CLogic, CNot)) and node.ty != BOOL:
                fail(node, "comparison is not bool")
            if isinstance(node, CLocal) and scope.get(node.var) != node.ty:
                fail(node, f"local {node.var} recorded as {node.ty}, bound as {scope.get(node.var)}")
            if isinstance(node, CCall) and core.functions[node.func].ret != node.ty:
                fail(node, f"call type {node.ty} differs from {node.func} result")
            if isinstance(node, CIf) and not (node.then.ty == node.orelse.ty == node.ty):
                fail(node, "branch types differ")
            if isinstance(node, CLet):
                stack.append((node.value, scope))
                inner = dict(scope)
                inner[node.var] = node.value.ty
                stack.append((node.body, inner))
                continue
            if isinstance(node, CMatch):
                stack.append((node.scrutinee, scope))
                for arm in node.arms:
                    if arm.body.ty != node.ty:
                        fail(arm, "arm type differs from match type")
                    inner = dict(scope)
                    inner.update({b: t for b, t in zip(arm.binders, arm.field_types) if b})
                    stack.append((arm.body, inner))
                continue
            stack.extend((child, scope) for child in node.children())
    return True


def check_source(source: str, name: str = "main") -> CoreModule:
    return typecheck(parse_source(source, name))


def typecheck_file(input_file, debug=False):
    try:
        source = Path(input_file).read_text(encoding="utf-8")
        core = check_source(source, Path(input_file).stem)
    except OSError as e:
        print(f"Error reading {input_file}: {e}")
        return None
    except MlcError as e:
        print(f"{input_file}:{e}")
        return None
    print(f"Checked {input_file}: {len(core.functions)} functions, {len(core.globals)} globals, "
          f"{len(core.maps)} maps")
    if debug:
        for f in core.functions.values():
            flags = [f.visibility] + (["gas_checking"] if f.gas_checking else []) + \
                    (["mutates"] if f.mutates else []) + (["raises"] if f.may_raise else [])
            params = ", ".join(f"{n} : {t}" for n, t in f.params)
            print(f"  {f.name}({params}) : {f.ret}  [{', '.join(flags)}]")
    return core


def main():
    parser = argparse.ArgumentParser(description="Typecheck an .mlc source file.")
    parser.add_argument("input", help="Path to the .mlc source")
    parser.add_argument("--verbose", action="store_true", help="List the checked functions")
    args = parser.parse_args()
    if typecheck_file(args.input, debug=args.verbose) is None:
        sys.exit(1)


if __name__ == "__main__":
    main()
