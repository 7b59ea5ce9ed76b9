#!/usr/bin/env python3
"""
Bounded integer arithmetic for every width the contract language supports.

All arithmetic is checked: a result outside the kind's range raises
``Overflow`` instead of wrapping. Specifications work over plain Python
integers (``MathInt``), reached through ``to_math`` / ``from_math``.
"""

from dataclasses import dataclass
from typing import Dict

from .errors import DivisionByZero, KindMismatch, Overflow, OutOfRange

MathInt = int

WORD_BITS = 256
WORD_MOD = 1 << WORD_BITS
WIDTHS = (32, 64, 128, 160, 256)


@dataclass(frozen=True)
class IntKind:
    width: int
    signed: bool

    def __post_init__(self):
        if self.width not in WIDTHS:
            raise ValueError(f"unsupported integer width {self.width}")

    @property
    def lower(self) -> int:
        return -(1 << (self.width - 1)) if self.signed else 0

    @property
    def upper(self) -> int:
        return (1 << (self.width - 1)) - 1 if self.signed else (1 << self.width) - 1

    @property
    def name(self) -> str:
        return f"{'int' if self.signed else 'uint'}{self.width}"

    def contains(self, value: int) -> bool:
        return self.lower <= value <= self.upper

    def __str__(self):
        return self.name


KINDS: Dict[str, IntKind] = {}
for _width in WIDTHS:
    KINDS[f"uint{_width}"] = IntKind(_width, False)
    KINDS[f"int{_width}"] = IntKind(_width, True)

ALIASES = {"uint": "uint256", "address": "uint160"}

UINT256 = KINDS["uint256"]
UINT160 = KINDS["uint160"]
INT32 = KINDS["int32"]
MAX_UINT = UINT256.upper


def kind_of(name: str) -> IntKind:
    """Resolve a kind name or alias (``uint``, ``address``) to its IntKind."""
    name = ALIASES.get(name, name)
    if name not in KINDS:
        raise KeyError(name)
    return KINDS[name]


@dataclass(frozen=True)
class BoundedInt:
    kind: IntKind
    value: int

    def __post_init__(self):
        if not self.kind.contains(self.value):
            raise OutOfRange(f"{self.value} is outside {self.kind.name} [{self.kind.lower}, {self.kind.upper}]")

    def __repr__(self):
        return f"{self.kind.name}:{self.value}"

    def __int__(self):
        return self.value


def _truncating_div(a: int, b: int) -> int:
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def exact(op: str, a: int, b: int) -> int:
    """Unbounded result of ``op``; division truncates toward zero."""
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        return _truncating_div(a, b)
    if op == "mod":
        return a - _truncating_div(a, b) * b
    raise ValueError(f"unknown arithmetic operator {op!r}")


def checked_arith(op: str, a: BoundedInt, b: BoundedInt) -> BoundedInt:
    """Exact arithmetic on same-kind operands; out-of-range results raise Overflow."""
    if a.kind != b.kind:
        raise KindMismatch(f"{op} on {a.kind.name} and {b.kind.name}")
    if op in ("div", "mod") and b.value == 0:
        raise DivisionByZero(f"{op} by zero ({a.kind.name})")
    result = exact(op, a.value, b.value)
    if not a.kind.contains(result):
        raise Overflow(f"{op}({a.value}, {b.value}) = {result} leaves {a.kind.name}")
    return BoundedInt(a.kind, result)


_COMPARISONS = {
    "eq": lambda x, y: x == y,
    "ne": lambda x, y: x != y,
    "lt": lambda x, y: x < y,
    "le": lambda x, y: x <= y,
    "gt": lambda x, y: x > y,
    "ge": lambda x, y: x >= y,
}


def compare(op: str, a: BoundedInt, b: BoundedInt) -> bool:
    if a.kind != b.kind:
        raise KindMismatch(f"{op} on {a.kind.name} and {b.kind.name}")
    return _COMPARISONS[op](a.value, b.value)


def to_math(a: BoundedInt) -> MathInt:
    return a.value


def from_math(kind: IntKind, v: MathInt) -> BoundedInt:
    if not kind.contains(v):
        raise OutOfRange(f"{v} is outside {kind.name}")
    return BoundedInt(kind, v)


def to_word(a: BoundedInt) -> int:
    """Two's-complement image of ``a`` in a 256-bit EVM word."""
    return a.value % WORD_MOD


def signed_word(w: int) -> int:
    return w - WORD_MOD if w >= (1 << (WORD_BITS - 1)) else w


def from_word(kind: IntKind, w: int) -> BoundedInt:
    value = signed_word(w) if kind.signed else w
    return from_math(kind, value)
