import random

import pytest

from scripts.chain import ExecContext, World
from scripts.interpreter import REVERT, RETURN, encode_call, exec_tx
from scripts.reference import evaluate
from scripts.step_04_codegen import exception_tag, selector

from .conftest import CALLER, CONTRACT


def both(contract, compiled_world, native_world, function, args):
    compiled = exec_tx(contract.code, encode_call(selector(function), args), 10_000_000, compiled_world, CALLER)
    native = evaluate(contract.core, function, args, native_world, ExecContext(CALLER), spec_check=True,
                      layout=contract.layout)
    return compiled, native


def assert_agree(compiled, native, compiled_world, native_world, what):
    assert compiled.outcome == native.outcome, what
    if native.outcome == RETURN:
        assert compiled.word == native.word, what
        assert compiled.storage_delta == native.storage_delta, what
    if native.outcome == REVERT:
        assert compiled.tag == native.tag, what
    assert compiled_world.same_state(native_world), what


@pytest.mark.parametrize("n", range(-3, 13))
def test_g_agrees(wcet, n):
    cw, nw = World(CONTRACT), World(CONTRACT)
    compiled, native = both(wcet, cw, nw, "g_", [n])
    assert_agree(compiled, native, cw, nw, f"g_ {n}")
    if n < 0:
        assert native.exception == "NegativeSize"
        assert compiled.tag == exception_tag("NegativeSize")
    else:
        assert compiled.word == n


def random_call(rng):
    op = rng.choices(["addBuy", "addSell", "runTrading", "clearBook", "benchTrading"], [5, 5, 2, 1, 1])[0]
    if op in ("addBuy", "addSell"):
        tokens = rng.choice([0, rng.randint(1, 40)])
        price = rng.choice([0, rng.randint(1, 30), rng.randint(1, 30)])
        return op, [tokens, price]
    if op == "benchTrading":
        return op, [rng.randint(0, 12)]
    return op, []


def test_trading_contract_agrees_on_random_sessions(trading_contract):
    rng = random.Random(7)
    for session in range(60):
        cw, nw = World(CONTRACT), World(CONTRACT)
        for step in range(rng.randint(1, 12)):
            op, args = random_call(rng)
            compiled, native = both(trading_contract, cw, nw, op, args)
            assert_agree(compiled, native, cw, nw, f"session {session} step {step}: {op}{tuple(args)}")


def test_bench_trading_counts_matched_tokens(trading_contract):
    # n/2 buys of 3 tokens against the rest as sells of 2, every bid above every ask
    for n in (2, 5, 8):
        cw, nw = World(CONTRACT), World(CONTRACT)
        compiled, native = both(trading_contract, cw, nw, "benchTrading", [n])
        nb, ns = n // 2, n - n // 2
        assert compiled.word == native.word == min(3 * nb, 2 * ns)


def test_unsorted_order_reverts_in_both(trading_contract):
    cw, nw = World(CONTRACT), World(CONTRACT)
    both(trading_contract, cw, nw, "addBuy", [5, 10])
    compiled, native = both(trading_contract, cw, nw, "addBuy", [5, 11])
    assert native.exception == "Unsorted"
    assert_agree(compiled, native, cw, nw, "unsorted")
