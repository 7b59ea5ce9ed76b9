#!/usr/bin/env python3
"""
On-chain world model: addresses, the ether ledger, token balance maps,
the per-transaction execution context, and the non-failing send primitive.

``send`` and ``token_transfer`` run in one of two modes. In spec-check mode
their preconditions are asserted and a violation raises ``SpecViolation``;
in release mode the preconditions are assumed, as a proved caller would.
"""

import copy
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Optional, Tuple

from .errors import GuardFailed, SpecViolation, UnknownFlag
from .numeric import MAX_UINT, UINT256, BoundedInt, checked_arith, from_math

ADDRESS_LIMIT = 1 << 160
GUARD_FLAGS = ("onlyOwner", "onlyMarket", "onlyOracle", "onlyAlgo", "marketOpen")


@dataclass(frozen=True, order=True)
class Address:
    value: int

    def __post_init__(self):
        if not 0 <= self.value < ADDRESS_LIMIT:
            raise ValueError(f"address {self.value:#x} is not a 160-bit value")

    @classmethod
    def parse(cls, text: str) -> "Address":
        return cls(int(text.strip(), 16))

    @property
    def hex(self) -> str:
        return f"0x{self.value:040x}"

    def __str__(self):
        return self.hex


ZERO_ADDRESS = Address(0)


def uint(value: int) -> BoundedInt:
    return from_math(UINT256, value)


class BalanceMap:
    """Address → uint256 map where absent addresses read as zero."""

    kind = "balance"

    def __init__(self, entries: Optional[Dict[Address, int]] = None):
        self.entries: Dict[Address, BoundedInt] = {}
        for address, value in (entries or {}).items():
            self.set(address, value if isinstance(value, BoundedInt) else uint(value))

    def __getitem__(self, address: Address) -> BoundedInt:
        return self.entries.get(address, uint(0))

    def set(self, address: Address, value: BoundedInt):
        if value.kind != UINT256:
            raise SpecViolation(f"{self.kind} entries are uint256, got {value.kind.name}")
        self.entries[address] = value

    def total(self) -> int:
        return sum(v.value for v in self.entries.values())

    def copy(self):
        clone = type(self)()
        clone.entries = dict(self.entries)
        return clone

    def __iter__(self) -> Iterator[Tuple[Address, BoundedInt]]:
        return iter(sorted(self.entries.items()))

    def __eq__(self, other):
        if not isinstance(other, BalanceMap):
            return NotImplemented
        mine = {a: v for a, v in self.entries.items() if v.value}
        theirs = {a: v for a, v in other.entries.items() if v.value}
        return mine == theirs

    def __repr__(self):
        body = ", ".join(f"{a.hex}: {v.value}" for a, v in self)
        return f"{type(self).__name__}({{{body}}})"


class Ledger(BalanceMap):
    kind = "ether"


class TokenMap(BalanceMap):
    kind = "token"


def send(ledger: Ledger, sender: Address, to: Address, amount: BoundedInt, spec_check: bool = True) -> Ledger:
    """Move ``amount`` wei from ``sender`` to ``to``; never fails at runtime."""
    if spec_check:
        if sender == to:
            raise SpecViolation(f"send from {sender} to itself")
        if ledger[sender].value < amount.value:
            raise SpecViolation(f"send of {amount.value} exceeds balance {ledger[sender].value} of {sender}")
        if ledger[to].value > MAX_UINT - amount.value:
            raise SpecViolation(f"send of {amount.value} overflows the balance of {to}")
    result = ledger.copy()
    result.set(sender, checked_arith("sub", ledger[sender], amount))
    result.set(to, checked_arith("add", result[to], amount))
    return result


def token_transfer(m_from: TokenMap, m_to: TokenMap, sender: Address, to: Address,
                   amount: BoundedInt, spec_check: bool = True) -> Tuple[TokenMap, TokenMap]:
    """Move tokens between two balance maps, preserving m_from[sender] + m_to[to]."""
    if spec_check:
        if amount.value <= 0:
            raise SpecViolation("token transfer of a non-positive amount")
        if m_from[sender].value < amount.value:
            raise SpecViolation(f"token transfer of {amount.value} exceeds {m_from[sender].value} held by {sender}")
        if m_to[to].value > MAX_UINT - amount.value:
            raise SpecViolation(f"token transfer of {amount.value} overflows the balance of {to}")
    new_from = m_from.copy()
    # the same map may be both source and destination
    new_to = new_from if m_to is m_from else m_to.copy()
    new_from.set(sender, checked_arith("sub", m_from[sender], amount))
    new_to.set(to, checked_arith("add", new_to[to], amount))
    return new_from, new_to


@dataclass
class ExecContext:
    msg_sender: Address
    flags: Dict[str, bool] = field(default_factory=dict)
    event_log: List[Tuple[str, int]] = field(default_factory=list)
    value: int = 0

    def emit(self, name: str, payload: int):
        self.event_log.append((name, payload))


def guard(ctx: ExecContext, flag_name: str) -> None:
    if flag_name not in ctx.flags:
        raise UnknownFlag(f"unknown guard flag '{flag_name}'")
    if not ctx.flags[flag_name]:
        raise GuardFailed(flag_name)


@dataclass
class LogEntry:
    topic: int
    data: bytes


@dataclass
class World:
    """Committed chain state: one contract account plus externally owned ones."""
    contract: Address
    ledger: Ledger = field(default_factory=Ledger)
    storage: Dict[int, int] = field(default_factory=dict)
    code: Dict[Address, bytes] = field(default_factory=dict)
    logs: List[LogEntry] = field(default_factory=list)

    def copy(self) -> "World":
        return World(self.contract, self.ledger.copy(), dict(self.storage),
                     dict(self.code), copy.deepcopy(self.logs))

    def same_state(self, other: "World") -> bool:
        """Storage and ledger equal, treating zero entries as absent."""
        mine = {k: v for k, v in self.storage.items() if v}
        theirs = {k: v for k, v in other.storage.items() if v}
        return mine == theirs and self.ledger == other.ledger


# --- canonical snapshot text ---

def snapshot_lines(kind: str, entries: Iterable[Tuple[int, int]]) -> List[str]:
    return [f"{kind} 0x{key:040x} {value}" for key, value in sorted(entries) if value]


def snapshot(world: World, extra: Optional[Dict[str, Dict[int, int]]] = None) -> str:
    """Render ether balances, raw storage and any named maps as sorted text lines."""
    lines = snapshot_lines("ether", ((a.value, v.value) for a, v in world.ledger))
    lines += snapshot_lines("storage", world.storage.items())
    for kind, entries in sorted((extra or {}).items()):
        lines += snapshot_lines(kind, entries.items())
    lines.sort(key=lambda line: (line.split()[1], line.split()[0]))
    return "\n".join(lines) + ("\n" if lines else "")


def parse_snapshot(text: str) -> Dict[str, Dict[int, int]]:
    result: Dict[str, Dict[int, int]] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"snapshot line {number}: expected '<kind> <address-hex> <value-dec>'")
        kind, key, value = parts
        result.setdefault(kind, {})[int(key, 16)] = int(value)
    return result
