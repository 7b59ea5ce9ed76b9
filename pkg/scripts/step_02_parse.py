#!/usr/bin/env python3
"""
Contract Source Parser

Recursive-descent parser from the token list of step 1 to a ``SourceModule``,
plus the canonical pretty printer used by the round-trip tests and by
``python -m scripts.step_02_parse --print``.

Constructs outside the supported subset are rejected here with a named rule
(``no-try-with``, ``no-for-loop``, ``no-closure``, ``no-nested-pattern``,
``monomorphic-only``, ``nominal-exception``, ``no-assert``) so that the error
message tells the author what to restructure.
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional

from .errors import MlcError, ParseError
from .step_01_tokenize import Token, tokenize
from .syntax import (AddGas, Apply, Arm, Ascribe, Assign, BinOp, BoolLit, ConstantDecl, Constructor,
                     Deref, Emit, EventDecl, ExceptionDecl, FieldDecl, FieldGet, FieldSet, FunDecl,
                     GlobalDecl, Guard, If, Index, IndexSet, IntLit, Let, MapDecl, Match, ModifierDecl,
                     Not, Old, Param, Raise, RaisesClause, RecordDecl, RecordLit, ResultRef, Send, Seq,
                     SourceModule, Transfer, TypeDecl, UnitLit, Var, While)

ATOM_START = {"INT", "TRUE", "FALSE", "LPAREN", "IDENT", "UIDENT", "LBRACE", "BEGIN", "RESULT", "BANG"}
COMPARISONS = {"EQ": "=", "NE": "<>", "LT": "<", "LE": "<=", "GT": ">", "GE": ">="}
DECL_START = {"TYPE", "RECORD", "GLOBAL", "MAP", "EXCEPTION", "EVENT", "CONSTANT", "MODIFIER", "LET"}
SEQ_CLOSERS = {"END", "DONE", "RPAREN", "BAR", "EOF", "IN"}

REJECTED = {
    "TRY": ("try/with is not supported; raise only from public functions", "no-try-with"),
    "FOR": ("for loops are not supported; use while", "no-for-loop"),
    "FUN": ("anonymous functions are not supported", "no-closure"),
    "FUNCTION": ("anonymous functions are not supported", "no-closure"),
    "ASSERT": ("assert is not allowed in code; state it as a requires or ensures clause", "no-assert"),
}


class Parser:
    def __init__(self, tokens: List[Token], name: str = "main"):
        self.tokens = tokens
        self.pos = 0
        self.name = name

    # --- token helpers ---

    def peek(self, offset: int = 0) -> Token:
        index = min(self.pos + offset, len(self.tokens) - 1)
        return self.tokens[index]

    def at(self, *kinds) -> bool:
        return self.peek().kind in kinds

    def advance(self) -> Token:
        token = self.peek()
        if token.kind != "EOF":
            self.pos += 1
        return token

    def expect(self, kind: str) -> Token:
        token = self.peek()
        if token.kind != kind:
            raise ParseError(f"unexpected {token!r}", token.location, expected=[kind])
        return self.advance()

    def accept(self, kind: str) -> Optional[Token]:
        return self.advance() if self.at(kind) else None

    def reject_if_unsupported(self):
        token = self.peek()
        if token.kind in REJECTED:
            message, rule = REJECTED[token.kind]
            raise ParseError(message, token.location, rule=rule)

    # --- module ---

    def parse_module(self) -> SourceModule:
        decls = []
        while not self.at("EOF"):
            decls.append(self.declaration())
        if not decls:
            raise ParseError("empty module", self.peek().location, expected=DECL_START)
        return SourceModule(self.name, tuple(decls))

    def declaration(self):
        token = self.peek()
        handlers = {
            "TYPE": self.type_decl,
            "RECORD": self.record_decl,
            "GLOBAL": self.global_decl,
            "MAP": self.map_decl,
            "EXCEPTION": self.exception_decl,
            "EVENT": self.event_decl,
            "CONSTANT": self.constant_decl,
            "MODIFIER": self.modifier_decl,
            "LET": self.fun_decl,
        }
        if token.kind not in handlers:
            self.reject_if_unsupported()
            raise ParseError(f"unexpected {token!r} at top level", token.location, expected=DECL_START)
        return handlers[token.kind]()

    def type_name(self) -> str:
        token = self.peek()
        if token.kind == "QUOTE":
            raise ParseError("type variables are not supported", token.location, rule="monomorphic-only")
        name = self.expect("IDENT").value
        if self.at("IDENT", "QUOTE"):
            raise ParseError(f"parameterised type '{name}' is not supported",
                             token.location, rule="monomorphic-only")
        return name

    def type_decl(self) -> TypeDecl:
        start = self.expect("TYPE")
        if self.at("QUOTE"):
            raise ParseError("type variables are not supported", self.peek().location, rule="monomorphic-only")
        name = self.expect("IDENT").value
        if self.at("QUOTE", "IDENT"):
            raise ParseError("type parameters are not supported", self.peek().location, rule="monomorphic-only")
        self.expect("EQ")
        self.accept("BAR")
        ctors = [self.constructor()]
        while self.accept("BAR"):
            ctors.append(self.constructor())
        return TypeDecl(name, tuple(ctors), loc=start.location)

    def constructor(self) -> Constructor:
        token = self.expect("UIDENT")
        fields = []
        while self.at("IDENT", "QUOTE"):
            if self.at("QUOTE"):
                raise ParseError("type variables are not supported", self.peek().location, rule="monomorphic-only")
            fields.append(self.advance().value)
        return Constructor(token.value, tuple(fields), loc=token.location)

    def field_decls(self) -> tuple:
        self.expect("LBRACE")
        fields = []
        while not self.at("RBRACE"):
            mutable = bool(self.accept("MUTABLE"))
            token = self.expect("IDENT")
            self.expect("COLON")
            fields.append(FieldDecl(token.value, self.type_name(), mutable, loc=token.location))
            if not self.accept("SEMI"):
                break
        self.expect("RBRACE")
        return tuple(fields)

    def record_decl(self) -> RecordDecl:
        start = self.expect("RECORD")
        name = self.expect("IDENT").value
        self.expect("EQ")
        return RecordDecl(name, self.field_decls(), loc=start.location)

    def global_decl(self) -> GlobalDecl:
        start = self.expect("GLOBAL")
        name = self.expect("IDENT").value
        self.expect("COLON")
        return GlobalDecl(name, self.field_decls(), loc=start.location)

    def map_decl(self) -> MapDecl:
        start = self.expect("MAP")
        name = self.expect("IDENT").value
        self.expect("COLON")
        key = self.type_name()
        self.expect("ARROW")
        return MapDecl(name, key, self.type_name(), loc=start.location)

    def exception_decl(self) -> ExceptionDecl:
        start = self.expect("EXCEPTION")
        name = self.expect("UIDENT").value
        if self.at("OF") or self.at("IDENT"):
            raise ParseError(f"exception {name} carries a payload", self.peek().location, rule="nominal-exception")
        return ExceptionDecl(name, loc=start.location)

    def event_decl(self) -> EventDecl:
        start = self.expect("EVENT")
        return EventDecl(self.expect("UIDENT").value, loc=start.location)

    def constant_decl(self) -> ConstantDecl:
        start = self.expect("CONSTANT")
        name = self.expect("IDENT").value
        self.expect("COLON")
        ty = self.type_name()
        self.expect("EQ")
        sign = -1 if self.accept("MINUS") else 1
        value = self.expect("INT").value
        return ConstantDecl(name, ty, sign * value, loc=start.location)

    def modifier_decl(self) -> ModifierDecl:
        start = self.expect("MODIFIER")
        name = self.expect("IDENT").value
        self.expect("EQ")
        return ModifierDecl(name, self.opexpr(), loc=start.location)

    def attribute(self) -> str:
        self.expect("LATTR")
        token = self.expect("IDENT")
        name = token.value
        if self.accept("COLON"):
            name = self.expect("IDENT").value
        self.expect("RBRACKET")
        if name != "gas_checking":
            raise ParseError(f"unknown attribute '{name}'", token.location, expected=["gas_checking"])
        return name

    def fun_decl(self) -> FunDecl:
        start = self.expect("LET")
        rec = bool(self.accept("REC"))
        visibility = "private"
        if self.at("PUBLIC", "PRIVATE"):
            visibility = self.advance().kind.lower()
        name = self.expect("IDENT").value
        gas_checking = False
        if self.at("LATTR"):
            gas_checking = self.attribute() == "gas_checking"
        params = []
        if not self.at("LPAREN"):
            raise ParseError(f"function {name} needs a parameter list", self.peek().location, expected=["LPAREN"])
        while self.accept("LPAREN"):
            if self.accept("RPAREN"):
                continue
            token = self.expect("IDENT")
            self.expect("COLON")
            params.append(Param(token.value, self.type_name(), loc=token.location))
            self.expect("RPAREN")
        self.expect("COLON")
        ret = self.type_name()
        requires, ensures, raises, variants = [], [], [], []
        while self.at("REQUIRES", "ENSURES", "RAISES", "VARIANT"):
            kind = self.advance().kind
            self.expect("LBRACE")
            if kind == "RAISES":
                raises.extend(self.raises_entries())
            else:
                {"REQUIRES": requires, "ENSURES": ensures, "VARIANT": variants}[kind].append(self.opexpr())
            self.expect("RBRACE")
        self.expect("EQ")
        body = self.expr()
        return FunDecl(name, tuple(params), ret, body, rec, visibility, gas_checking,
                       tuple(requires), tuple(ensures), tuple(raises), tuple(variants), loc=start.location)

    def raises_entries(self) -> List[RaisesClause]:
        entries = []
        while self.at("UIDENT"):
            token = self.advance()
            condition = self.opexpr() if self.accept("ARROW") else None
            entries.append(RaisesClause(token.value, condition, loc=token.location))
            if not self.accept("SEMI"):
                break
        return entries

    # --- expressions ---

    def expr(self):
        if self.at("LET"):
            return self.let_expr()
        first = self.stmt()
        if self.at("SEMI"):
            token = self.advance()
            if self.at(*SEQ_CLOSERS) or self.at("ELSE"):
                return first
            return Seq(first, self.expr(), loc=token.location)
        return first

    def let_expr(self):
        start = self.expect("LET")
        if self.at("REC"):
            raise ParseError("local function definitions are not supported", start.location, rule="no-closure")
        if self.accept("UNDERSCORE"):
            name = "_"
        else:
            name = self.expect("IDENT").value
        if self.at("LPAREN", "IDENT"):
            raise ParseError(f"local function '{name}' is not supported", start.location, rule="no-closure")
        ty = self.type_name() if self.accept("COLON") else None
        self.expect("EQ")
        is_ref = bool(self.accept("REF"))
        value = self.expr()
        if ty is not None:
            value = Ascribe(value, ty, loc=start.location)
        self.expect("IN")
        return Let(name, value, self.expr(), is_ref, loc=start.location)

    def stmt(self):
        self.reject_if_unsupported()
        token = self.peek()
        if token.kind == "IF":
            return self.if_expr()
        if token.kind == "WHILE":
            return self.while_expr()
        if token.kind == "MATCH":
            return self.match_expr()
        if token.kind == "LET":
            return self.let_expr()
        target = self.opexpr()
        if self.at("LARROW"):
            arrow = self.advance()
            if isinstance(target, FieldGet):
                return FieldSet(target.target, target.name, self.stmt(), loc=arrow.location)
            if isinstance(target, Index):
                return IndexSet(target.map_name, target.key, self.stmt(), loc=arrow.location)
            raise ParseError("left side of '<-' must be a field or a map entry", arrow.location)
        if self.at("ASSIGN"):
            arrow = self.advance()
            if isinstance(target, Var):
                return Assign(target.name, self.stmt(), loc=arrow.location)
            raise ParseError("left side of ':=' must be a reference", arrow.location)
        return target

    def branch(self):
        return self.let_expr() if self.at("LET") else self.stmt()

    def if_expr(self):
        start = self.expect("IF")
        cond = self.opexpr()
        self.expect("THEN")
        then = self.branch()
        orelse = self.branch() if self.accept("ELSE") else None
        return If(cond, then, orelse, loc=start.location)

    def while_expr(self):
        start = self.expect("WHILE")
        cond = self.opexpr()
        self.expect("DO")
        invariants, variants = [], []
        while self.at("INVARIANT", "VARIANT"):
            kind = self.advance().kind
            self.expect("LBRACE")
            (invariants if kind == "INVARIANT" else variants).append(self.opexpr())
            self.expect("RBRACE")
        body = self.expr()
        self.expect("DONE")
        return While(cond, body, tuple(invariants), tuple(variants), loc=start.location)

    def match_expr(self):
        start = self.expect("MATCH")
        scrutinee = self.opexpr()
        self.expect("WITH")
        self.accept("BAR")
        arms = [self.arm()]
        while self.accept("BAR"):
            arms.append(self.arm())
        self.expect("END")
        return Match(scrutinee, tuple(arms), loc=start.location)

    def arm(self) -> Arm:
        token = self.peek()
        if token.kind != "UIDENT":
            raise ParseError("match arms must name a constructor", token.location, expected=["UIDENT"])
        self.advance()
        binders = []
        while not self.at("ARROW"):
            if self.at("UIDENT", "LPAREN", "INT"):
                raise ParseError(f"nested pattern under {token.value}", self.peek().location,
                                 rule="no-nested-pattern")
            if self.accept("UNDERSCORE"):
                binders.append(None)
            else:
                binders.append(self.expect("IDENT").value)
        self.expect("ARROW")
        return Arm(token.value, tuple(binders), self.expr(), loc=token.location)

    def opexpr(self):
        left = self.disjunction()
        if self.at("ARROW"):
            token = self.advance()
            return BinOp("->", left, self.opexpr(), loc=token.location)
        return left

    def disjunction(self):
        left = self.conjunction()
        while self.at("OR"):
            token = self.advance()
            left = BinOp("||", left, self.conjunction(), loc=token.location)
        return left

    def conjunction(self):
        left = self.negation()
        while self.at("AND"):
            token = self.advance()
            left = BinOp("&&", left, self.negation(), loc=token.location)
        return left

    def negation(self):
        if self.at("NOT"):
            token = self.advance()
            return Not(self.negation(), loc=token.location)
        return self.comparison()

    def comparison(self):
        left = self.additive()
        if self.peek().kind in COMPARISONS:
            token = self.advance()
            left = BinOp(COMPARISONS[token.kind], left, self.additive(), loc=token.location)
            if self.peek().kind in COMPARISONS:
                raise ParseError("comparisons do not chain", self.peek().location)
        return left

    def additive(self):
        left = self.multiplicative()
        while self.at("PLUS", "MINUS"):
            token = self.advance()
            op = "+" if token.kind == "PLUS" else "-"
            left = BinOp(op, left, self.multiplicative(), loc=token.location)
        return left

    def multiplicative(self):
        left = self.unary()
        while self.at("STAR", "SLASH", "PERCENT"):
            token = self.advance()
            op = {"STAR": "*", "SLASH": "/", "PERCENT": "%"}[token.kind]
            left = BinOp(op, left, self.unary(), loc=token.location)
        return left

    def unary(self):
        if self.at("MINUS"):
            token = self.advance()
            operand = self.unary()
            if isinstance(operand, IntLit):
                return IntLit(-operand.value, loc=token.location)
            if isinstance(operand, Ascribe) and isinstance(operand.expr, IntLit):
                return Ascribe(IntLit(-operand.expr.value, loc=token.location), operand.ty, loc=token.location)
            raise ParseError("unary minus applies to integer literals only", token.location)
        return self.application()

    def atom_args(self) -> tuple:
        args = []
        while self.peek().kind in ATOM_START:
            args.append(self.postfix())
        return tuple(args)

    def application(self):
        self.reject_if_unsupported()
        token = self.peek()
        kind = token.kind
        if kind == "IDENT" and self.peek(1).kind in ATOM_START:
            self.advance()
            return Apply(token.value, self.atom_args(), loc=token.location)
        if kind == "UIDENT":
            self.advance()
            return Apply(token.value, self.atom_args(), loc=token.location)
        if kind == "RAISE":
            self.advance()
            name = self.expect("UIDENT").value
            if self.peek().kind in ATOM_START:
                raise ParseError(f"exception {name} cannot carry a payload", self.peek().location,
                                 rule="nominal-exception")
            return Raise(name, loc=token.location)
        if kind == "ADD_GAS":
            self.advance()
            used = self.postfix()
            return AddGas(used, self.postfix(), loc=token.location)
        if kind == "GUARD":
            self.advance()
            flag = self.expect("IDENT").value
            exception = None
            if self.at("ELSE") and self.peek(1).kind == "UIDENT":
                self.advance()
                exception = self.advance().value
            return Guard(flag, exception, loc=token.location)
        if kind == "SEND":
            self.advance()
            to = self.postfix()
            return Send(to, self.postfix(), loc=token.location)
        if kind == "TRANSFER":
            self.advance()
            map_from = self.expect("IDENT").value
            map_to = self.expect("IDENT").value
            sender = self.postfix()
            to = self.postfix()
            return Transfer(map_from, map_to, sender, to, self.postfix(), loc=token.location)
        if kind == "EMIT":
            self.advance()
            event = self.expect("UIDENT").value
            return Emit(event, self.postfix(), loc=token.location)
        if kind == "OLD":
            self.advance()
            return Old(self.postfix(), loc=token.location)
        return self.postfix()

    def postfix(self):
        node = self.atom()
        while self.at("DOT", "LBRACKET"):
            token = self.advance()
            if token.kind == "DOT":
                node = FieldGet(node, self.expect("IDENT").value, loc=token.location)
            else:
                if not isinstance(node, Var):
                    raise ParseError("only a declared map can be indexed", token.location)
                key = self.expr()
                self.expect("RBRACKET")
                node = Index(node.name, key, loc=node.loc)
        return node

    def atom(self):
        self.reject_if_unsupported()
        token = self.peek()
        kind = token.kind
        if kind == "INT":
            self.advance()
            return IntLit(token.value, loc=token.location)
        if kind in ("TRUE", "FALSE"):
            self.advance()
            return BoolLit(kind == "TRUE", loc=token.location)
        if kind == "LPAREN":
            self.advance()
            if self.accept("RPAREN"):
                return UnitLit(loc=token.location)
            inner = self.expr()
            if self.accept("COLON"):
                inner = Ascribe(inner, self.type_name(), loc=token.location)
            self.expect("RPAREN")
            return inner
        if kind == "IDENT":
            self.advance()
            return Var(token.value, loc=token.location)
        if kind == "UIDENT":
            self.advance()
            return Apply(token.value, (), loc=token.location)
        if kind == "LBRACE":
            return self.record_literal()
        if kind == "BEGIN":
            self.advance()
            inner = self.expr()
            self.expect("END")
            return inner
        if kind == "RESULT":
            self.advance()
            return ResultRef(loc=token.location)
        if kind == "BANG":
            self.advance()
            return Deref(self.expect("IDENT").value, loc=token.location)
        raise ParseError(f"unexpected {token!r}", token.location, expected=ATOM_START)

    def record_literal(self):
        start = self.expect("LBRACE")
        fields = []
        while not self.at("RBRACE"):
            name = self.expect("IDENT").value
            if self.at("WITH"):
                raise ParseError("functional record update is not supported", self.peek().location)
            self.expect("EQ")
            fields.append((name, self.stmt()))
            if not self.accept("SEMI"):
                break
        self.expect("RBRACE")
        return RecordLit(tuple(fields), loc=start.location)


def parse(tokens: List[Token], name: str = "main") -> SourceModule:
    """Parse a token list into a module; raises ParseError with the expected-token set."""
    return Parser(tokens, name).parse_module()


def parse_source(source: str, name: str = "main") -> SourceModule:
    return parse(tokenize(source), name)


# --- canonical printer ---

_BINOP_LEVEL = {"->": 2, "||": 3, "&&": 4, "=": 6, "<>": 6, "<": 6, "<=": 6, ">": 6, ">=": 6,
                "+": 7, "-": 7, "*": 8, "/": 8, "%": 8}
_APPLICATION = (Raise, AddGas, Guard, Send, Transfer, Emit, Old)


def _level(e) -> int:
    if isinstance(e, (Let, Seq)):
        return 0
    if isinstance(e, (If, While, Match, Assign, FieldSet, IndexSet)):
        return 1
    if isinstance(e, BinOp):
        return _BINOP_LEVEL[e.op]
    if isinstance(e, Not):
        return 5
    if isinstance(e, Apply):
        return 10 if e.args else 12
    if isinstance(e, _APPLICATION):
        return 10
    if isinstance(e, (FieldGet, Index)):
        return 11
    return 12


class Printer:
    def __init__(self, indent: str = "  "):
        self.indent = indent

    def at_level(self, e, minimum: int, depth: int) -> str:
        text = self.render(e, depth)
        return f"({text})" if _level(e) < minimum else text

    def block(self, e, depth: int) -> str:
        pad = self.indent * (depth + 1)
        return f"begin\n{pad}{self.render(e, depth + 1)}\n{self.indent * depth}end"

    def render(self, e, depth: int = 0) -> str:
        pad = self.indent * depth
        if isinstance(e, Let):
            value = self.render(e.value, depth + 1)
            head = f"let {e.name} = {'ref ' if e.is_ref else ''}{value} in"
            return f"{head}\n{pad}{self.render(e.body, depth)}"
        if isinstance(e, Seq):
            first = self.block(e.first, depth) if _level(e.first) == 0 else self.render(e.first, depth)
            return f"{first};\n{pad}{self.render(e.second, depth)}"
        if isinstance(e, If):
            text = f"if {self.at_level(e.cond, 2, depth)} then {self.block(e.then, depth)}"
            if e.orelse is not None:
                text += f" else {self.block(e.orelse, depth)}"
            return text
        if isinstance(e, While):
            clauses = "".join(f" invariant {{ {self.at_level(i, 2, depth)} }}" for i in e.invariants)
            clauses += "".join(f" variant {{ {self.at_level(v, 2, depth)} }}" for v in e.variants)
            inner = self.indent * (depth + 1)
            return f"while {self.at_level(e.cond, 2, depth)} do{clauses}\n{inner}" \
                   f"{self.render(e.body, depth + 1)}\n{pad}done"
        if isinstance(e, Match):
            lines = [f"match {self.at_level(e.scrutinee, 2, depth)} with"]
            for arm in e.arms:
                binders = "".join(f" {b or '_'}" for b in arm.binders)
                lines.append(f"{pad}| {arm.ctor}{binders} -> {self.block(arm.body, depth + 1)}")
            lines.append(f"{pad}end")
            return "\n".join(lines)
        if isinstance(e, Assign):
            return f"{e.name} := {self.at_level(e.value, 1, depth)}"
        if isinstance(e, FieldSet):
            return f"{self.at_level(e.target, 11, depth)}.{e.name} <- {self.at_level(e.value, 1, depth)}"
        if isinstance(e, IndexSet):
            return f"{e.map_name}[{self.render(e.key, depth)}] <- {self.at_level(e.value, 1, depth)}"
        if isinstance(e, BinOp):
            level = _BINOP_LEVEL[e.op]
            if e.op == "->":
                left, right = level + 1, level
            elif level == 6:
                left = right = level + 1
            else:
                left, right = level, level + 1
            return f"{self.at_level(e.left, left, depth)} {e.op} {self.at_level(e.right, right, depth)}"
        if isinstance(e, Not):
            return f"not {self.at_level(e.operand, 5, depth)}"
        if isinstance(e, Apply):
            return " ".join([e.func] + [self.at_level(a, 11, depth) for a in e.args])
        if isinstance(e, Raise):
            return f"raise {e.exception}"
        if isinstance(e, AddGas):
            return f"add_gas {self.at_level(e.used, 11, depth)} {self.at_level(e.alloc, 11, depth)}"
        if isinstance(e, Guard):
            return f"guard {e.flag}" + (f" else {e.exception}" if e.exception else "")
        if isinstance(e, Send):
            return f"send {self.at_level(e.to, 11, depth)} {self.at_level(e.amount, 11, depth)}"
        if isinstance(e, Transfer):
            args = " ".join(self.at_level(a, 11, depth) for a in (e.sender, e.to, e.amount))
            return f"transfer {e.map_from} {e.map_to} {args}"
        if isinstance(e, Emit):
            return f"emit {e.event} {self.at_level(e.payload, 11, depth)}"
        if isinstance(e, Old):
            return f"old {self.at_level(e.expr, 11, depth)}"
        if isinstance(e, FieldGet):
            return f"{self.at_level(e.target, 11, depth)}.{e.name}"
        if isinstance(e, Index):
            return f"{e.map_name}[{self.render(e.key, depth)}]"
        if isinstance(e, IntLit):
            return f"({e.value})" if e.value < 0 else str(e.value)
        if isinstance(e, BoolLit):
            return "true" if e.value else "false"
        if isinstance(e, UnitLit):
            return "()"
        if isinstance(e, Var):
            return e.name
        if isinstance(e, Deref):
            return f"!{e.name}"
        if isinstance(e, ResultRef):
            return "result"
        if isinstance(e, RecordLit):
            body = "; ".join(f"{name} = {self.at_level(v, 1, depth)}" for name, v in e.fields)
            return f"{{ {body} }}"
        if isinstance(e, Ascribe):
            return f"({self.render(e.expr, depth)} : {e.ty})"
        raise TypeError(f"cannot print {type(e).__name__}")

    def fields(self, fields) -> str:
        return "; ".join(f"{'mutable ' if f.mutable else ''}{f.name} : {f.ty}" for f in fields)

    def declaration(self, d) -> str:
        if isinstance(d, TypeDecl):
            ctors = "".join(f"\n  | {c.name}" + "".join(f" {t}" for t in c.fields) for c in d.constructors)
            return f"type {d.name} ={ctors}"
        if isinstance(d, RecordDecl):
            return f"record {d.name} = {{ {self.fields(d.fields)} }}"
        if isinstance(d, GlobalDecl):
            return f"global {d.name} : {{ {self.fields(d.fields)} }}"
        if isinstance(d, MapDecl):
            return f"map {d.name} : {d.key} -> {d.value}"
        if isinstance(d, ExceptionDecl):
            return f"exception {d.name}"
        if isinstance(d, EventDecl):
            return f"event {d.name}"
        if isinstance(d, ConstantDecl):
            return f"constant {d.name} : {d.ty} = {d.value}"
        if isinstance(d, ModifierDecl):
            return f"modifier {d.name} = {self.at_level(d.body, 2, 1)}"
        if isinstance(d, FunDecl):
            head = "let " + ("rec " if d.rec else "") + f"{d.visibility} {d.name}"
            if d.gas_checking:
                head += " [@gas_checking]"
            params = " ".join(f"({p.name} : {p.ty})" for p in d.params) or "()"
            lines = [f"{head} {params} : {d.ret}"]
            for clause, items in (("requires", d.requires), ("ensures", d.ensures), ("variant", d.variants)):
                lines += [f"  {clause} {{ {self.at_level(e, 2, 1)} }}" for e in items]
            if d.raises:
                entries = "; ".join(r.exception + (f" -> {self.at_level(r.condition, 2, 1)}" if r.condition else "")
                                    for r in d.raises)
                lines.append(f"  raises {{ {entries} }}")
            lines.append(f"=\n  {self.render(d.body, 1)}")
            return "\n".join(lines)
        raise TypeError(f"cannot print {type(d).__name__}")


def pretty_print(module: SourceModule) -> str:
    """Canonical source text; parsing it yields a module equal to ``module``."""
    printer = Printer()
    return "\n\n".join(printer.declaration(d) for d in module.decls) + "\n"


def parse_file(input_file, debug=False):
    try:
        source = Path(input_file).read_text(encoding="utf-8")
        module = parse_source(source, Path(input_file).stem)
    except OSError as e:
        print(f"Error reading {input_file}: {e}")
        return None
    except MlcError as e:
        print(f"{input_file}:{e}")
        return None
    print(f"Parsed {input_file}: {len(module.decls)} declarations, {len(module.functions)} functions")
    if debug:
        print(pretty_print(module))
    return module


def main():
    parser = argparse.ArgumentParser(description="Parse an .mlc source file and print it canonically.")
    parser.add_argument("input", help="Path to the .mlc source")
    parser.add_argument("--print", dest="show", action="store_true", help="Print the canonical form")
    args = parser.parse_args()
    if parse_file(args.input, debug=args.show) is None:
        sys.exit(1)


if __name__ == "__main__":
    main()
