#!/usr/bin/env python3
"""
Desk-scale EVM interpreter for the opcode subset the compiler emits.

Words are 256-bit, the stack is capped at 1024 entries, memory grows in
32-byte words at a linear price, and storage is a transaction-scoped copy of
the committed world. ``exec_tx`` runs one transaction to completion and only
a RETURN commits storage, ledger and logs; every other outcome leaves the
world as it was.
"""

import argparse
import sys
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

from .chain import Address, LogEntry, World, uint
from .errors import (InvalidJump, InvalidOpcode, MachineFault, MlcError, OutOfGas, StackOverflow,
                     StackUnderflow)
from .numeric import WORD_MOD, signed_word
from .opcodes import BY_BYTE, OPCODES, GasSchedule, load_schedule
from .step_06_emit import read_code

STACK_LIMIT = 1024
WORD_BYTES = 32

RETURN = "return"
REVERT = "revert"
OUT_OF_GAS = "out_of_gas"
FAULT = "fault"


def jump_destinations(code: bytes) -> frozenset:
    """JUMPDEST offsets, skipping bytes that are PUSH immediates."""
    dests = set()
    pc = 0
    while pc < len(code):
        op = BY_BYTE.get(code[pc])
        if op is not None and op.mnemonic == "JUMPDEST":
            dests.add(pc)
        pc += 1 + (op.immediate if op is not None else 0)
    return frozenset(dests)


@dataclass
class CallFrame:
    callee: Address
    allotment: int
    value: int
    success: bool = False
    gas_used: int = 0
    return_data: bytes = b""


@dataclass
class MachineState:
    code: bytes
    calldata: bytes
    gas: int
    caller: Address
    address: Address
    value: int
    world: World
    storage: Dict[int, int]
    stack: List[int] = field(default_factory=list)
    memory: bytearray = field(default_factory=bytearray)
    pc: int = 0
    memory_gas: int = 0
    declared_gas: int = 0
    declared_alloc: int = 0
    logs: List[LogEntry] = field(default_factory=list)
    frames: List[CallFrame] = field(default_factory=list)
    halted: Optional[str] = None
    output: bytes = b""
    steps: int = 0
    stack_limit: int = STACK_LIMIT
    jumpdests: frozenset = frozenset()

    def __post_init__(self):
        if not self.jumpdests:
            self.jumpdests = jump_destinations(self.code)

    # --- stack ---

    def pop(self) -> int:
        if not self.stack:
            raise StackUnderflow(f"pop from an empty stack at pc={self.pc:#x}")
        return self.stack.pop()

    def push(self, value: int):
        if len(self.stack) >= self.stack_limit:
            raise StackOverflow(f"stack exceeds {self.stack_limit} entries at pc={self.pc:#x}")
        self.stack.append(value % WORD_MOD)

    def peek(self, depth: int) -> int:
        if len(self.stack) < depth:
            raise StackUnderflow(f"stack holds {len(self.stack)} entries, need {depth} at pc={self.pc:#x}")
        return self.stack[-depth]

    # --- gas and memory ---

    def charge(self, amount: int):
        if amount > self.gas:
            self.gas = 0
            raise OutOfGas(f"needs {amount} gas at pc={self.pc:#x}")
        self.gas -= amount

    def expand(self, offset: int, size: int, word_price: int):
        if size == 0:
            return
        end = offset + size
        words = (end + WORD_BYTES - 1) // WORD_BYTES
        current = len(self.memory) // WORD_BYTES
        if words > current:
            cost = (words - current) * word_price
            self.charge(cost)
            self.memory_gas += cost
            self.memory.extend(bytes((words - current) * WORD_BYTES))

    def mload(self, offset: int, word_price: int) -> int:
        self.expand(offset, WORD_BYTES, word_price)
        return int.from_bytes(self.memory[offset:offset + WORD_BYTES], "big")

    def mstore(self, offset: int, value: int, word_price: int):
        self.expand(offset, WORD_BYTES, word_price)
        self.memory[offset:offset + WORD_BYTES] = value.to_bytes(WORD_BYTES, "big")

    def read(self, offset: int, size: int, word_price: int) -> bytes:
        self.expand(offset, size, word_price)
        return bytes(self.memory[offset:offset + size])


@dataclass
class TxResult:
    outcome: str
    gas_used: int
    data: bytes = b""
    tag: Optional[int] = None
    fault: Optional[str] = None
    storage_delta: Dict[int, int] = field(default_factory=dict)
    logs: List[LogEntry] = field(default_factory=list)
    memory: bytes = b""
    memory_gas: int = 0
    declared_gas: int = 0
    declared_alloc: int = 0
    steps: int = 0

    @property
    def ok(self) -> bool:
        return self.outcome == RETURN

    @property
    def word(self) -> Optional[int]:
        """The single returned word, if the transaction returned one."""
        if self.outcome != RETURN or len(self.data) != WORD_BYTES:
            return None
        return int.from_bytes(self.data, "big")

    def describe(self) -> str:
        if self.outcome == RETURN:
            return f"Return({self.data.hex()})"
        if self.outcome == REVERT:
            return f"Revert({self.tag:#010x})" if self.tag is not None else "Revert()"
        if self.outcome == FAULT:
            return f"Fault({self.fault})"
        return "OutOfGas"


def _binary(state: MachineState, fn):
    a = state.pop()
    b = state.pop()
    state.push(fn(a, b))


def _div(a, b):
    return a // b if b else 0


def _sdiv(a, b):
    x, y = signed_word(a), signed_word(b)
    if y == 0:
        return 0
    q = abs(x) // abs(y)
    return q if (x >= 0) == (y >= 0) else -q


ARITHMETIC = {
    "ADD": lambda a, b: a + b,
    "SUB": lambda a, b: a - b,
    "MUL": lambda a, b: a * b,
    "DIV": _div,
    "SDIV": _sdiv,
    "MOD": lambda a, b: a % b if b else 0,
    "LT": lambda a, b: int(a < b),
    "GT": lambda a, b: int(a > b),
    "SLT": lambda a, b: int(signed_word(a) < signed_word(b)),
    "SGT": lambda a, b: int(signed_word(a) > signed_word(b)),
    "EQ": lambda a, b: int(a == b),
    "AND": lambda a, b: a & b,
    "OR": lambda a, b: a | b,
}


def call_with_stipend(state: MachineState, callee: Address, value: int, requested: int,
                      schedule: GasSchedule) -> Tuple[MachineState, bool]:
    """Restricted CALL: the callee runs on scratch storage that is thrown away.

    The value transfer stands whether or not the callee finishes.
    """
    allotment = min(requested, state.gas)
    state.charge(allotment)
    frame = CallFrame(callee, allotment, value)
    state.frames.append(frame)
    ledger = state.world.ledger
    if ledger[state.address].value < value:
        state.gas += allotment
        return state, False
    if value:
        ledger.set(state.address, uint(ledger[state.address].value - value))
        ledger.set(callee, uint(ledger[callee].value + value))
    code = state.world.code.get(callee, b"")
    if not code:
        frame.success = True
        state.gas += allotment
        return state, True
    inner = MachineState(code, b"", allotment, state.address, callee, value, state.world, {})
    _run(inner, schedule)
    frame.success = inner.halted == RETURN
    frame.gas_used = allotment - inner.gas
    frame.return_data = inner.output
    state.gas += inner.gas
    return state, frame.success


def step(state: MachineState, schedule: GasSchedule) -> MachineState:
    """Execute one instruction; faults raise MachineFault subclasses."""
    if state.pc >= len(state.code):
        state.halted = RETURN
        return state
    byte = state.code[state.pc]
    op = BY_BYTE.get(byte)
    if op is None or op.mnemonic == "INVALID":
        raise InvalidOpcode(f"invalid opcode {byte:#04x} at pc={state.pc:#x}")
    name = op.mnemonic
    state.charge(schedule.cost(name))
    next_pc = state.pc + 1 + op.immediate
    word_price = schedule.memory_word

    if name.startswith("PUSH"):
        if state.pc + 1 + op.immediate > len(state.code):
            raise InvalidOpcode(f"truncated {name} at pc={state.pc:#x}")
        state.push(int.from_bytes(state.code[state.pc + 1:next_pc], "big"))
    elif name.startswith("DUP"):
        state.push(state.peek(int(name[3:])))
    elif name.startswith("SWAP"):
        n = int(name[4:])
        state.peek(n + 1)
        state.stack[-1], state.stack[-1 - n] = state.stack[-1 - n], state.stack[-1]
    elif name in ARITHMETIC:
        _binary(state, ARITHMETIC[name])
    elif name == "ISZERO":
        state.push(int(state.pop() == 0))
    elif name == "NOT":
        state.push(~state.pop())
    elif name == "POP":
        state.pop()
    elif name == "MLOAD":
        state.push(state.mload(state.pop(), word_price))
    elif name == "MSTORE":
        offset, value = state.pop(), state.pop()
        state.mstore(offset, value, word_price)
    elif name == "SLOAD":
        state.push(state.storage.get(state.pop(), 0))
    elif name == "SSTORE":
        key, value = state.pop(), state.pop()
        state.storage[key] = value
    elif name == "JUMP":
        target = state.pop()
        if target not in state.jumpdests:
            raise InvalidJump(f"jump to {target:#x} from pc={state.pc:#x} is not a JUMPDEST")
        next_pc = target
    elif name == "JUMPI":
        target, cond = state.pop(), state.pop()
        if cond:
            if target not in state.jumpdests:
                raise InvalidJump(f"jump to {target:#x} from pc={state.pc:#x} is not a JUMPDEST")
            next_pc = target
    elif name == "JUMPDEST":
        pass
    elif name == "PC":
        state.push(state.pc)
    elif name == "CALLER":
        state.push(state.caller.value)
    elif name == "CALLVALUE":
        state.push(state.value)
    elif name == "CALLDATALOAD":
        offset = state.pop()
        chunk = state.calldata[offset:offset + WORD_BYTES] if offset < len(state.calldata) else b""
        state.push(int.from_bytes(chunk.ljust(WORD_BYTES, b"\0"), "big"))
    elif name == "CALLDATASIZE":
        state.push(len(state.calldata))
    elif name == "LOG1":
        offset, size, topic = state.pop(), state.pop(), state.pop()
        state.logs.append(LogEntry(topic, state.read(offset, size, word_price)))
    elif name == "CALL":
        requested, to, value = state.pop(), state.pop(), state.pop()
        in_off, in_size, out_off, out_size = state.pop(), state.pop(), state.pop(), state.pop()
        state.expand(in_off, in_size, word_price)
        state.expand(out_off, out_size, word_price)
        if value:
            state.charge(schedule.call_value)
        _, success = call_with_stipend(state, Address(to % (1 << 160)), value, requested, schedule)
        state.push(int(success))
    elif name in ("RETURN", "REVERT"):
        offset, size = state.pop(), state.pop()
        state.output = state.read(offset, size, word_price)
        state.halted = RETURN if name == "RETURN" else REVERT
    elif name == "STOP":
        state.halted = RETURN
    else:
        raise InvalidOpcode(f"{name} is not supported at pc={state.pc:#x}")
    state.pc = next_pc
    state.steps += 1
    return state


def trace_line(state: MachineState) -> str:
    op = BY_BYTE.get(state.code[state.pc]) if state.pc < len(state.code) else OPCODES["STOP"]
    mnemonic = op.mnemonic if op else "INVALID"
    top = ", ".join(f"{w:#x}" for w in reversed(state.stack[-4:]))
    return f"pc={state.pc:#06x} op={mnemonic} gas={state.gas} stack=[{top}]"


def _run(state: MachineState, schedule: GasSchedule, annotations=None, trace=None, profile=None):
    try:
        while state.halted is None:
            if annotations and state.pc in annotations:
                used, alloc = annotations[state.pc]
                state.declared_gas += used
                state.declared_alloc += alloc
            if trace is not None:
                trace(trace_line(state))
            if profile is not None and state.pc < len(state.code):
                op = BY_BYTE.get(state.code[state.pc])
                if op is not None:
                    profile[state.pc] = profile.get(state.pc, 0) + schedule.static_cost(op.mnemonic)
            step(state, schedule)
    except OutOfGas:
        state.halted = OUT_OF_GAS
        state.gas = 0
    except MachineFault as e:
        state.halted = FAULT
        state.output = type(e).__name__.encode()
    return state


def annotation_table(sites) -> Dict[int, Tuple[int, int]]:
    """Sum constant add_gas sites per byte offset for the ghost counters."""
    table: Dict[int, Tuple[int, int]] = {}
    for site in sites:
        if not site.constant:
            continue
        used, alloc = table.get(site.offset, (0, 0))
        table[site.offset] = (used + site.used, alloc + site.alloc)
    return table


def exec_tx(code: bytes, calldata: bytes, gas_limit: int, world: World, caller: Address, value: int = 0,
            annotations: Optional[Dict[int, Tuple[int, int]]] = None,
            trace: Optional[Callable[[str], None]] = None, profile: Optional[Dict[int, int]] = None,
            schedule: Optional[GasSchedule] = None, stack_limit: int = STACK_LIMIT) -> TxResult:
    """Run one transaction against ``world``; only a RETURN commits."""
    schedule = schedule or load_schedule()
    scratch = world.copy()
    if value:
        if scratch.ledger[caller].value < value:
            return TxResult(FAULT, 0, fault="InsufficientBalance")
        scratch.ledger.set(caller, uint(scratch.ledger[caller].value - value))
        scratch.ledger.set(world.contract, uint(scratch.ledger[world.contract].value + value))
    state = MachineState(code, calldata, gas_limit, caller, world.contract, value, scratch,
                         dict(world.storage), stack_limit=stack_limit)
    _run(state, schedule, annotations, trace, profile)

    result = TxResult(state.halted, gas_limit - state.gas, memory=bytes(state.memory),
                      memory_gas=state.memory_gas, declared_gas=state.declared_gas,
                      declared_alloc=state.declared_alloc, steps=state.steps)
    if state.halted == RETURN:
        result.data = state.output
        result.logs = list(state.logs)
        result.storage_delta = {k: v for k, v in state.storage.items() if world.storage.get(k, 0) != v}
        world.storage = state.storage
        world.ledger = scratch.ledger
        world.logs.extend(state.logs)
    elif state.halted == REVERT:
        result.data = state.output
        result.tag = int.from_bytes(state.output[:4], "big") if len(state.output) >= 4 else None
    else:
        # exceptional halts consume the whole limit
        result.fault = state.output.decode() if state.halted == FAULT else None
        result.gas_used = gas_limit
    return result


def encode_call(selector: int, args) -> bytes:
    """Calldata: 4-byte selector followed by one 32-byte word per argument."""
    out = selector.to_bytes(4, "big")
    for arg in args:
        out += (int(arg) % WORD_MOD).to_bytes(WORD_BYTES, "big")
    return out


def run_file(code_file, calldata_hex="", gas=10_000_000, caller="0x1", value=0, trace=False):
    try:
        code = read_code(code_file)
        calldata = bytes.fromhex(calldata_hex[2:] if calldata_hex.startswith("0x") else calldata_hex)
        world = World(Address(0xC0))
        result = exec_tx(code, calldata, gas, world, Address.parse(caller), value,
                         trace=print if trace else None)
    except (OSError, ValueError) as e:
        print(f"Error running {code_file}: {e}")
        return None
    except MlcError as e:
        print(f"{code_file}:{e}")
        return None
    print(f"{result.describe()} gas_used={result.gas_used}")
    return result


def main():
    parser = argparse.ArgumentParser(description="Execute EVM bytecode in the desk interpreter.")
    parser.add_argument("code", help="Path to a .evm hex file")
    parser.add_argument("--calldata", default="", help="Calldata as hex")
    parser.add_argument("--gas", type=int, default=10_000_000, help="Gas limit")
    parser.add_argument("--caller", default="0x1", help="Caller address (hex)")
    parser.add_argument("--value", type=int, default=0, help="Wei sent with the call")
    parser.add_argument("--trace", action="store_true", help="Print one line per step")
    args = parser.parse_args()
    result = run_file(args.code, args.calldata, args.gas, args.caller, args.value, args.trace)
    if result is None or not result.ok:
        sys.exit(1)


if __name__ == "__main__":
    main()
