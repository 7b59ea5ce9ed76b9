import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scripts.chain import Address
from scripts.errors import OrderBookError, PreconditionViolation
from scripts.orderbook import (Order, Trade, TradeList, correct, load_orderbook, nb_token, oracle_max_tokens,
                               parse_orderbook, remaining_capacity, run_trading, sort_orders, sorted_order,
                               sum_buyer, sum_seller, trading)

from .conftest import CORPUS


def book(rng, n):
    prices = sorted((rng.randint(1, 20) for _ in range(n)), reverse=True)
    return [Order(Address(rng.randint(1, 1 << 20)), rng.randint(1, 30), p) for p in prices]


def orders_strategy():
    order = st.builds(Order, st.integers(1, 99).map(Address), st.integers(1, 50), st.integers(1, 25))
    return st.lists(order, min_size=1, max_size=8).map(sort_orders)


def test_example_book_matches_by_hand():
    buys, sells = load_orderbook(CORPUS / "orderbooks" / "example_2x2.book")
    trades = trading(buys, sells)
    assert trades.in_construction_order() == [Trade(0, 0, 3), Trade(0, 1, 1), Trade(1, 1, 1)]
    assert nb_token(trades) == 5 == oracle_max_tokens(buys, sells)


def test_random_instances_are_correct_and_optimal():
    rng = random.Random(20240501)
    for _ in range(1_000):
        buys, sells = book(rng, rng.randint(1, 10)), book(rng, rng.randint(1, 10))
        run = run_trading(buys, sells)
        assert correct(run.trades, buys, sells)
        assert nb_token(run.trades) == oracle_max_tokens(buys, sells)
        assert run.variants == sorted(run.variants, reverse=True)
        assert len(set(run.variants)) == len(run.variants)


@settings(max_examples=200)
@given(orders_strategy(), orders_strategy())
def test_capacity_accounting(buys, sells):
    run = run_trading(buys, sells)
    for i, b in enumerate(buys):
        assert sum_buyer(run.trades, i) + run.buy_left[i] == b.tokens.value
    for j, s in enumerate(sells):
        assert sum_seller(run.trades, j) + run.sell_left[j] == s.tokens.value
    assert remaining_capacity(buys, sells) == (run.buy_left, run.sell_left)


def test_inputs_are_not_mutated():
    buys = [Order(Address(1), 3, 10)]
    sells = [Order(Address(2), 2, 5)]
    trading(buys, sells)
    assert buys[0].tokens.value == 3 and sells[0].tokens.value == 2


def test_no_trade_when_every_bid_is_below_every_ask():
    trades = trading([Order(Address(1), 5, 3)], [Order(Address(2), 5, 9), Order(Address(3), 5, 4)])
    assert len(trades) == 0
    assert correct(trades, [], []) is True


def test_correct_rejects_overselling():
    buys = [Order(Address(1), 5, 10)]
    sells = [Order(Address(2), 2, 5)]
    assert not correct(TradeList((Trade(0, 0, 3),)), buys, sells)
    assert not correct(TradeList((Trade(0, 1, 1),)), buys, sells)


def test_preconditions_are_checked():
    with pytest.raises(PreconditionViolation):
        trading([], [Order(Address(2), 2, 5)])
    with pytest.raises(PreconditionViolation, match="indices 0, 1"):
        trading([Order(Address(1), 1, 1), Order(Address(1), 1, 2)], [Order(Address(2), 2, 5)])


def test_trade_amounts_are_positive():
    with pytest.raises(ValueError):
        Trade(0, 0, 0)


def test_unsorted_file_names_the_offending_pair():
    text = "buys 2 sells 1\n0x01 1 5\n0x02 1 9\n0x03 1 1\n"
    with pytest.raises(OrderBookError, match="index 1"):
        parse_orderbook(text)
    buys, sells = parse_orderbook(text, sort=True)
    assert sorted_order(buys)
    assert [b.price_order.value for b in buys] == [9, 5]


@pytest.mark.parametrize("text", ["", "sells 1 buys 1\n0x1 1 1\n0x2 1 1\n", "buys 1 sells 1\n0x1 1 1\n",
                                  "buys 1 sells 1\n0x1 1\n0x2 1 1\n", "buys 1 sells 1\n0xzz 1 1\n0x2 1 1\n"])
def test_malformed_files(text):
    with pytest.raises(OrderBookError):
        parse_orderbook(text)


def test_missing_file(tmp_path):
    with pytest.raises(OrderBookError):
        load_orderbook(tmp_path / "absent.book")
