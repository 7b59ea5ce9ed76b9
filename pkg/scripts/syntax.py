"""
Surface syntax tree for `.mlc` contract modules.

Nodes are frozen dataclasses. Source spans live in a trailing ``loc`` field
excluded from equality, so a re-parsed module compares equal to the original
whatever the layout of its text.
"""

from dataclasses import dataclass, field
from typing import Optional, Tuple

Location = Optional[Tuple[int, int]]


def _loc():
    return field(default=None, compare=False, repr=False)


# --- expressions ---

@dataclass(frozen=True)
class IntLit:
    value: int
    loc: Location = _loc()


@dataclass(frozen=True)
class BoolLit:
    value: bool
    loc: Location = _loc()


@dataclass(frozen=True)
class UnitLit:
    loc: Location = _loc()


@dataclass(frozen=True)
class Var:
    name: str
    loc: Location = _loc()


@dataclass(frozen=True)
class Ascribe:
    expr: "Expr"
    ty: str
    loc: Location = _loc()


@dataclass(frozen=True)
class Let:
    name: str
    value: "Expr"
    body: "Expr"
    is_ref: bool = False
    loc: Location = _loc()


@dataclass(frozen=True)
class Deref:
    name: str
    loc: Location = _loc()


@dataclass(frozen=True)
class Assign:
    name: str
    value: "Expr"
    loc: Location = _loc()


@dataclass(frozen=True)
class Seq:
    first: "Expr"
    second: "Expr"
    loc: Location = _loc()


@dataclass(frozen=True)
class If:
    cond: "Expr"
    then: "Expr"
    orelse: Optional["Expr"] = None
    loc: Location = _loc()


@dataclass(frozen=True)
class While:
    cond: "Expr"
    body: "Expr"
    invariants: Tuple["Expr", ...] = ()
    variants: Tuple["Expr", ...] = ()
    loc: Location = _loc()


@dataclass(frozen=True)
class Arm:
    ctor: str
    binders: Tuple[Optional[str], ...]
    body: "Expr"
    loc: Location = _loc()


@dataclass(frozen=True)
class Match:
    scrutinee: "Expr"
    arms: Tuple[Arm, ...]
    loc: Location = _loc()


@dataclass(frozen=True)
class RecordLit:
    fields: Tuple[Tuple[str, "Expr"], ...]
    loc: Location = _loc()


@dataclass(frozen=True)
class FieldGet:
    target: "Expr"
    name: str
    loc: Location = _loc()


@dataclass(frozen=True)
class FieldSet:
    target: "Expr"
    name: str
    value: "Expr"
    loc: Location = _loc()


@dataclass(frozen=True)
class Index:
    map_name: str
    key: "Expr"
    loc: Location = _loc()


@dataclass(frozen=True)
class IndexSet:
    map_name: str
    key: "Expr"
    value: "Expr"
    loc: Location = _loc()


@dataclass(frozen=True)
class Apply:
    """Function call, constructor application or intrinsic call by name."""
    func: str
    args: Tuple["Expr", ...]
    loc: Location = _loc()


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"
    loc: Location = _loc()


@dataclass(frozen=True)
class Not:
    operand: "Expr"
    loc: Location = _loc()


@dataclass(frozen=True)
class Raise:
    exception: str
    loc: Location = _loc()


@dataclass(frozen=True)
class AddGas:
    used: "Expr"
    alloc: "Expr"
    loc: Location = _loc()


@dataclass(frozen=True)
class Guard:
    flag: str
    exception: Optional[str] = None
    loc: Location = _loc()


@dataclass(frozen=True)
class Send:
    to: "Expr"
    amount: "Expr"
    loc: Location = _loc()


@dataclass(frozen=True)
class Transfer:
    map_from: str
    map_to: str
    sender: "Expr"
    to: "Expr"
    amount: "Expr"
    loc: Location = _loc()


@dataclass(frozen=True)
class Emit:
    event: str
    payload: "Expr"
    loc: Location = _loc()


@dataclass(frozen=True)
class Old:
    expr: "Expr"
    loc: Location = _loc()


@dataclass(frozen=True)
class ResultRef:
    loc: Location = _loc()


Expr = object

# --- declarations ---


@dataclass(frozen=True)
class Constructor:
    name: str
    fields: Tuple[str, ...]
    loc: Location = _loc()


@dataclass(frozen=True)
class TypeDecl:
    name: str
    constructors: Tuple[Constructor, ...]
    loc: Location = _loc()


@dataclass(frozen=True)
class FieldDecl:
    name: str
    ty: str
    mutable: bool = False
    loc: Location = _loc()


@dataclass(frozen=True)
class RecordDecl:
    name: str
    fields: Tuple[FieldDecl, ...]
    loc: Location = _loc()


@dataclass(frozen=True)
class GlobalDecl:
    name: str
    fields: Tuple[FieldDecl, ...]
    loc: Location = _loc()


@dataclass(frozen=True)
class MapDecl:
    name: str
    key: str
    value: str
    loc: Location = _loc()


@dataclass(frozen=True)
class ExceptionDecl:
    name: str
    loc: Location = _loc()


@dataclass(frozen=True)
class EventDecl:
    name: str
    loc: Location = _loc()


@dataclass(frozen=True)
class ConstantDecl:
    name: str
    ty: str
    value: int
    loc: Location = _loc()


@dataclass(frozen=True)
class ModifierDecl:
    name: str
    body: Expr
    loc: Location = _loc()


@dataclass(frozen=True)
class Param:
    name: str
    ty: str
    loc: Location = _loc()


@dataclass(frozen=True)
class RaisesClause:
    exception: str
    condition: Optional[Expr] = None
    loc: Location = _loc()


@dataclass(frozen=True)
class FunDecl:
    name: str
    params: Tuple[Param, ...]
    ret: str
    body: Expr
    rec: bool = False
    visibility: str = "private"
    gas_checking: bool = False
    requires: Tuple[Expr, ...] = ()
    ensures: Tuple[Expr, ...] = ()
    raises: Tuple[RaisesClause, ...] = ()
    variants: Tuple[Expr, ...] = ()
    loc: Location = _loc()

    @property
    def public(self) -> bool:
        return self.visibility == "public"


@dataclass(frozen=True)
class SourceModule:
    name: str
    decls: Tuple[object, ...]

    def of_type(self, cls):
        return [d for d in self.decls if isinstance(d, cls)]

    @property
    def functions(self):
        return self.of_type(FunDecl)
