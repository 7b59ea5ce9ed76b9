"""
Typed core IR produced by the checker and consumed by codegen and the
reference interpreter.

Every node carries its resolved type in ``ty`` and a function-unique name
``%n`` in ``name``; together they are the administrative form the backend
relies on (each intermediate value has a name and a known width). Types are
canonical strings: an integer kind name (``uint256``, ``int32`` ...),
``bool``, ``unit``, or a declared ADT / record name. ``never`` is the type of
an expression that always raises; the checker settles it to the
surrounding type before handing the tree on.
"""

from dataclasses import dataclass, field, fields
from typing import Dict, Iterator, List, Optional, Tuple

from .numeric import KINDS

Location = Optional[Tuple[int, int]]

NEVER = "never"
UNIT = "unit"
BOOL = "bool"


def is_int(ty: str) -> bool:
    return ty in KINDS


def width(ty: str) -> int:
    """Stack words a value of ``ty`` occupies."""
    return 0 if ty in (UNIT, NEVER) else 1


@dataclass(eq=False)
class Core:
    ty: str = field(default=UNIT, kw_only=True)
    name: str = field(default="", kw_only=True)
    loc: Location = field(default=None, kw_only=True, repr=False)

    def children(self) -> Iterator["Core"]:
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, Core):
                yield value
            elif isinstance(value, tuple):
                for item in value:
                    if isinstance(item, Core):
                        yield item


@dataclass(eq=False)
class CInt(Core):
    value: int


@dataclass(eq=False)
class CBool(Core):
    value: bool


@dataclass(eq=False)
class CUnit(Core):
    pass


@dataclass(eq=False)
class CLocal(Core):
    var: str


@dataclass(eq=False)
class CLet(Core):
    var: str
    value: Core
    body: Core
    is_ref: bool = False


@dataclass(eq=False)
class CAssign(Core):
    var: str
    value: Core


@dataclass(eq=False)
class CSeq(Core):
    first: Core
    second: Core


@dataclass(eq=False)
class CIf(Core):
    cond: Core
    then: Core
    orelse: Core


@dataclass(eq=False)
class CWhile(Core):
    cond: Core
    body: Core
    invariants: tuple = ()
    variants: tuple = ()


@dataclass(eq=False)
class CArm(Core):
    ctor: str
    tag: int
    binders: Tuple[Optional[str], ...]
    field_types: Tuple[str, ...]
    body: Core


@dataclass(eq=False)
class CMatch(Core):
    scrutinee: Core
    adt: str
    arms: Tuple[CArm, ...]


@dataclass(eq=False)
class CConstruct(Core):
    adt: str
    ctor: str
    tag: int
    args: Tuple[Core, ...]


@dataclass(eq=False)
class CRecord(Core):
    record: str
    args: Tuple[Core, ...]


@dataclass(eq=False)
class CField(Core):
    target: Core
    record: str
    index: int


@dataclass(eq=False)
class CSetField(Core):
    target: Core
    record: str
    index: int
    value: Core


@dataclass(eq=False)
class CGlobalGet(Core):
    glob: str
    field_name: str


@dataclass(eq=False)
class CGlobalSet(Core):
    glob: str
    field_name: str
    value: Core


@dataclass(eq=False)
class CMapGet(Core):
    map_name: str
    key: Core


@dataclass(eq=False)
class CMapSet(Core):
    map_name: str
    key: Core
    value: Core


@dataclass(eq=False)
class CCall(Core):
    func: str
    args: Tuple[Core, ...]


@dataclass(eq=False)
class CArith(Core):
    op: str
    left: Core
    right: Core


@dataclass(eq=False)
class CCompare(Core):
    op: str
    left: Core
    right: Core


@dataclass(eq=False)
class CLogic(Core):
    op: str
    left: Core
    right: Core


@dataclass(eq=False)
class CNot(Core):
    operand: Core


@dataclass(eq=False)
class CRaise(Core):
    exception: str


@dataclass(eq=False)
class CAddGas(Core):
    """Ghost annotation; ``used``/``alloc`` are None when the argument is affine in parameters."""
    used: Optional[int]
    alloc: Optional[int]
    used_expr: object = None
    alloc_expr: object = None

    @property
    def constant(self) -> bool:
        return self.used is not None and self.alloc is not None


@dataclass(eq=False)
class CGuard(Core):
    flag: str
    exception: Optional[str] = None


@dataclass(eq=False)
class CSend(Core):
    to: Core
    amount: Core


@dataclass(eq=False)
class CTransfer(Core):
    map_from: str
    map_to: str
    sender: Core
    to: Core
    amount: Core


@dataclass(eq=False)
class CEmit(Core):
    event: str
    payload: Core


@dataclass(eq=False)
class CCaller(Core):
    pass


@dataclass(eq=False)
class CCallValue(Core):
    pass


MUTATIONS = (CGlobalSet, CMapSet, CSend, CEmit, CTransfer)
RAISES = (CRaise, CGuard)


def walk(node: Core) -> Iterator[Core]:
    """Pre-order traversal in evaluation order."""
    yield node
    for child in node.children():
        yield from walk(child)


# --- module-level tables ---

@dataclass
class CtorInfo:
    name: str
    tag: int
    fields: Tuple[str, ...]


@dataclass
class AdtInfo:
    name: str
    ctors: List[CtorInfo]


@dataclass
class RecordInfo:
    name: str
    fields: List[Tuple[str, str, bool]]

    def index_of(self, field_name: str) -> int:
        for i, (name, _, _) in enumerate(self.fields):
            if name == field_name:
                return i
        return -1


@dataclass
class GlobalInfo:
    name: str
    fields: List[Tuple[str, str]]

    def kind_of(self, field_name: str) -> Optional[str]:
        return dict(self.fields).get(field_name)


@dataclass
class MapInfo:
    name: str
    index: int
    key: str
    value: str


@dataclass
class CoreFunction:
    name: str
    visibility: str
    params: Tuple[Tuple[str, str], ...]
    ret: str
    body: Core
    gas_checking: bool = False
    rec: bool = False
    requires: tuple = ()
    ensures: tuple = ()
    raises: tuple = ()
    variants: tuple = ()
    mutates: bool = False
    may_raise: bool = False
    mutation_sites: List[str] = field(default_factory=list)
    raise_sites: List[str] = field(default_factory=list)
    loc: Location = None

    @property
    def public(self) -> bool:
        return self.visibility == "public"

    def annotations(self) -> List[CAddGas]:
        return [n for n in walk(self.body) if isinstance(n, CAddGas)]


@dataclass
class CoreModule:
    name: str
    adts: Dict[str, AdtInfo] = field(default_factory=dict)
    records: Dict[str, RecordInfo] = field(default_factory=dict)
    globals: Dict[str, GlobalInfo] = field(default_factory=dict)
    maps: Dict[str, MapInfo] = field(default_factory=dict)
    exceptions: List[str] = field(default_factory=list)
    events: List[str] = field(default_factory=list)
    constants: Dict[str, Tuple[str, int]] = field(default_factory=dict)
    modifiers: Dict[str, Core] = field(default_factory=dict)
    functions: Dict[str, CoreFunction] = field(default_factory=dict)

    def ctor(self, name: str) -> Tuple[AdtInfo, CtorInfo]:
        for adt in self.adts.values():
            for ctor in adt.ctors:
                if ctor.name == name:
                    return adt, ctor
        raise KeyError(name)

    @property
    def public_functions(self) -> List[CoreFunction]:
        return [f for f in self.functions.values() if f.public]
