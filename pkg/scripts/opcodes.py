#!/usr/bin/env python3
"""
Opcode table for the supported EVM subset and the gas schedule loader.

``OPCODES`` maps mnemonic → Opcode (byte value, immediate width, stack
inputs and outputs); ``BY_BYTE`` is the reverse index used by the
disassembler and the interpreter. Gas costs are not part of the table: they
come from the schedule file so that one data file pins the version.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional

from .errors import MlcError

DEFAULT_SCHEDULE = Path(__file__).resolve().parent.parent / "data" / "gas_schedule.txt"


@dataclass(frozen=True)
class Opcode:
    mnemonic: str
    code: int
    pops: int
    pushes: int
    immediate: int = 0


_BASE = {
    "STOP": (0x00, 0, 0),
    "ADD": (0x01, 2, 1),
    "MUL": (0x02, 2, 1),
    "SUB": (0x03, 2, 1),
    "DIV": (0x04, 2, 1),
    "SDIV": (0x05, 2, 1),
    "MOD": (0x06, 2, 1),
    "LT": (0x10, 2, 1),
    "GT": (0x11, 2, 1),
    "SLT": (0x12, 2, 1),
    "SGT": (0x13, 2, 1),
    "EQ": (0x14, 2, 1),
    "ISZERO": (0x15, 1, 1),
    "AND": (0x16, 2, 1),
    "OR": (0x17, 2, 1),
    "NOT": (0x19, 1, 1),
    "CALLER": (0x33, 0, 1),
    "CALLVALUE": (0x34, 0, 1),
    "CALLDATALOAD": (0x35, 1, 1),
    "CALLDATASIZE": (0x36, 0, 1),
    "POP": (0x50, 1, 0),
    "MLOAD": (0x51, 1, 1),
    "MSTORE": (0x52, 2, 0),
    "SLOAD": (0x54, 1, 1),
    "SSTORE": (0x55, 2, 0),
    "JUMP": (0x56, 1, 0),
    "JUMPI": (0x57, 2, 0),
    "PC": (0x58, 0, 1),
    "JUMPDEST": (0x5b, 0, 0),
    "LOG1": (0xa1, 3, 0),
    "CALL": (0xf1, 7, 1),
    "RETURN": (0xf3, 2, 0),
    "REVERT": (0xfd, 2, 0),
    "INVALID": (0xfe, 0, 0),
}

OPCODES: Dict[str, Opcode] = {name: Opcode(name, *spec) for name, spec in _BASE.items()}
for _n in range(1, 33):
    OPCODES[f"PUSH{_n}"] = Opcode(f"PUSH{_n}", 0x5f + _n, 0, 1, immediate=_n)
for _n in range(1, 17):
    OPCODES[f"DUP{_n}"] = Opcode(f"DUP{_n}", 0x7f + _n, _n, _n + 1)
    OPCODES[f"SWAP{_n}"] = Opcode(f"SWAP{_n}", 0x8f + _n, _n + 1, _n + 1)

BY_BYTE: Dict[int, Opcode] = {op.code: op for op in OPCODES.values()}

TERMINATORS = frozenset({"STOP", "RETURN", "REVERT", "INVALID"})
JUMPS = frozenset({"JUMP", "JUMPI"})

# Tier membership follows the usual Ethereum fee tiers.
TIERS = {
    "zero": ("STOP", "RETURN", "REVERT"),
    "base": ("POP", "PC", "CALLER", "CALLVALUE", "CALLDATASIZE"),
    "verylow": ("ADD", "SUB", "LT", "GT", "SLT", "SGT", "EQ", "ISZERO", "AND", "OR", "NOT",
                "CALLDATALOAD", "MLOAD", "MSTORE"),
    "low": ("MUL", "DIV", "SDIV", "MOD"),
    "mid": ("JUMP",),
    "high": ("JUMPI",),
}


def push_for(value: int) -> str:
    """Smallest PUSHn mnemonic able to carry ``value``."""
    return f"PUSH{max(1, (value.bit_length() + 7) // 8)}"


class ScheduleError(MlcError):
    pass


@dataclass
class GasSchedule:
    costs: Dict[str, int] = field(default_factory=dict)
    source: Optional[str] = None

    def cost(self, mnemonic: str) -> int:
        try:
            return self.costs[mnemonic]
        except KeyError:
            raise ScheduleError(f"gas schedule {self.source or ''} has no entry for {mnemonic}")

    def tier(self, name: str) -> int:
        if name not in TIERS:
            return self.cost(name.upper())
        return self.cost(TIERS[name][0])

    @property
    def call_value(self) -> int:
        return self.costs.get("CALL_VALUE", 0)

    @property
    def stipend(self) -> int:
        return self.costs.get("CALL_STIPEND", 2300)

    @property
    def memory_word(self) -> int:
        return self.costs.get("MEMORY_WORD", 3)

    def static_cost(self, mnemonic: str) -> int:
        """Upper bound used by the path checker; CALL includes value transfer and the stipend."""
        if mnemonic == "CALL":
            return self.cost("CALL") + self.call_value + self.stipend
        return self.cost(mnemonic)

    def validate(self):
        missing = [m for m in OPCODES if m not in self.costs]
        if missing:
            raise ScheduleError(f"gas schedule is missing {', '.join(sorted(missing))}")
        negative = [m for m, c in self.costs.items() if c < 0]
        if negative:
            raise ScheduleError(f"negative costs for {', '.join(sorted(negative))}")
        return self


def parse_schedule(text: str, source: Optional[str] = None) -> GasSchedule:
    costs = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ScheduleError(f"{source or 'schedule'} line {number}: expected '<MNEMONIC> <cost>'")
        try:
            costs[parts[0].upper()] = int(parts[1])
        except ValueError:
            raise ScheduleError(f"{source or 'schedule'} line {number}: cost {parts[1]!r} is not an integer")
    return GasSchedule(costs, source).validate()


def load_schedule(path=None) -> GasSchedule:
    path = Path(path) if path else DEFAULT_SCHEDULE
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ScheduleError(f"cannot read gas schedule {path}: {e}")
    return parse_schedule(text, str(path))
