import pytest

from scripts.chain import Address, ExecContext, Ledger, World
from scripts.interpreter import (FAULT, OUT_OF_GAS, RETURN, REVERT, annotation_table, encode_call, exec_tx,
                                 jump_destinations)
from scripts.reference import evaluate
from scripts.step_04_codegen import selector

from .conftest import CALLER, CONTRACT

RETURN_TOP = bytes([0x60, 0x00, 0x52, 0x60, 0x20, 0x60, 0x00, 0xF3])  # MSTORE at 0, RETURN 32 bytes
CALLEE = Address(0xEE)


def run(code, world=None, gas=100_000, **kwargs):
    return exec_tx(bytes(code), b"", gas, world or World(CONTRACT), CALLER, **kwargs)


def stipend_call(value):
    # CALL(gas=2300, to=0xEE, value, 0, 0, 0, 0), then return the success flag
    return bytes([0x60, 0x00, 0x60, 0x00, 0x60, 0x00, 0x60, 0x00, 0x60, value, 0x60, 0xEE,
                  0x61, 0x08, 0xFC, 0xF1]) + RETURN_TOP


def test_add_costs_nine_gas():
    result = run([0x60, 0x01, 0x60, 0x02, 0x01])
    assert result.outcome == RETURN
    assert result.gas_used == 9


def test_returned_word():
    result = run(bytes([0x60, 0x2A]) + RETURN_TOP)
    assert result.ok
    assert result.word == 42
    assert result.gas_used == 4 * 3 + 3 + 3  # four pushes, MSTORE, one memory word


def test_return_commits_storage(world):
    result = run([0x60, 0x07, 0x60, 0x05, 0x55, 0x00], world)
    assert result.ok
    assert result.storage_delta == {5: 7}
    assert world.storage == {5: 7}


def test_revert_rolls_back(world):
    world.storage[9] = 1
    result = run([0x60, 0x07, 0x60, 0x05, 0x55, 0x60, 0x00, 0x60, 0x00, 0xFD], world)
    assert result.outcome == REVERT
    assert result.tag is None
    assert world.storage == {9: 1}


def test_out_of_gas_consumes_the_limit_and_rolls_back(world):
    result = run([0x60, 0x07, 0x60, 0x05, 0x55, 0x00], world, gas=1_000)
    assert result.outcome == OUT_OF_GAS
    assert result.gas_used == 1_000
    assert world.storage == {}


@pytest.mark.parametrize("code, fault", [
    ([0x01], "StackUnderflow"),
    ([0x60, 0x03, 0x56, 0x00, 0x00], "InvalidJump"),
    ([0x60, 0x5B, 0x60, 0x01, 0x56], "InvalidJump"),
    ([0xFE], "InvalidOpcode"),
    ([0x0C], "InvalidOpcode"),
    ([0x61, 0x01], "InvalidOpcode"),
])
def test_faults(code, fault, world):
    result = run(code, world, gas=5_000)
    assert result.outcome == FAULT
    assert result.fault == fault
    assert result.gas_used == 5_000
    assert result.describe() == f"Fault({fault})"


def test_stack_limit():
    result = run([0x60, 0x01, 0x60, 0x01, 0x60, 0x01], stack_limit=2)
    assert result.fault == "StackOverflow"


def test_push_immediates_are_not_jump_destinations():
    assert jump_destinations(bytes([0x60, 0x5B, 0x5B])) == frozenset({2})


def test_stipend_callee_cannot_write_storage():
    world = World(CONTRACT, Ledger({CONTRACT: 10}))
    world.code[CALLEE] = bytes([0x60, 0x01, 0x60, 0x00, 0x55, 0x00])
    result = run(stipend_call(5), world)
    assert result.ok
    assert result.word == 0
    assert world.storage == {}
    # the value moved even though the callee failed
    assert world.ledger[CALLEE].value == 5
    assert world.ledger[CONTRACT].value == 5


def test_send_to_an_account_without_code_succeeds():
    world = World(CONTRACT, Ledger({CONTRACT: 10}))
    result = run(stipend_call(4), world)
    assert result.word == 1
    assert world.ledger[CALLEE].value == 4


def test_callvalue_needs_the_callers_balance(world):
    result = run([0x34], world, value=5)
    assert result.outcome == FAULT
    assert result.fault == "InsufficientBalance"
    world.ledger = Ledger({CALLER: 5})
    assert run([0x34, 0x00], world, value=5).ok
    assert world.ledger[CONTRACT].value == 5


def test_trace_lines():
    lines = []
    run([0x60, 0x01, 0x60, 0x02, 0x01], trace=lines.append)
    assert len(lines) == 4
    assert lines[0].startswith("pc=0x0000 op=PUSH1")
    assert lines[2].endswith("stack=[0x2, 0x1]")


def test_calldata_layout():
    data = encode_call(0xAABBCCDD, [1, -1])
    assert len(data) == 4 + 2 * 32
    assert data[:4] == bytes.fromhex("aabbccdd")
    assert data[-32:] == b"\xff" * 32


def test_compiled_and_reference_agree_on_g(wcet):
    n = 5
    compiled = exec_tx(wcet.code, encode_call(selector("g_"), [n]), 1_000_000, World(CONTRACT), CALLER,
                       annotations=annotation_table(wcet.annotations))
    native = evaluate(wcet.core, "g_", [n], World(CONTRACT), ExecContext(CALLER), spec_check=True,
                      layout=wcet.layout)
    assert compiled.word == native.word == n
    assert compiled.declared_gas == native.declared_gas == 267 * n + 260
    assert compiled.declared_alloc == native.declared_alloc == 96 * n + 32


def test_unknown_selector_reverts(wcet):
    result = exec_tx(wcet.code, encode_call(0xDEADBEEF, []), 100_000, World(CONTRACT), CALLER)
    assert result.outcome == REVERT
