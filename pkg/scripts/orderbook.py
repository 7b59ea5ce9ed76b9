#!/usr/bin/env python3
"""
Order-book trading engine.

Buy and sell orders arrive as arrays sorted by non-increasing price. The
matcher walks both arrays with two cursors and greedily trades the smaller
remaining capacity whenever the bid covers the ask. The predicates below
(``sorted_order``, ``matching_order``, ``sum_seller`` ... ``correct``) are
the executable form of the algorithm's contract, and ``oracle_max_tokens``
is an independent max-flow optimum used to check that no correct trade list
moves more tokens than the matcher does.
"""

import argparse
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence, Tuple

import networkx as nx

from .chain import Address
from .errors import OrderBookError, PreconditionViolation
from .numeric import UINT256, BoundedInt, from_math


@dataclass(frozen=True)
class Order:
    order_address: Address
    tokens: BoundedInt
    price_order: BoundedInt

    def __post_init__(self):
        # plain ints are accepted and lifted to uint256
        for name in ("tokens", "price_order"):
            value = getattr(self, name)
            if not isinstance(value, BoundedInt):
                object.__setattr__(self, name, from_math(UINT256, value))
        if not isinstance(self.order_address, Address):
            object.__setattr__(self, "order_address", Address(self.order_address))


@dataclass(frozen=True)
class Trade:
    seller_index: int
    buyer_index: int
    amount: int

    def __post_init__(self):
        if self.amount <= 0:
            raise ValueError(f"trade amount must be positive, got {self.amount}")


@dataclass(frozen=True)
class TradeList:
    """Trades, most recent first."""
    trades: Tuple[Trade, ...] = ()

    def cons(self, trade: Trade) -> "TradeList":
        return TradeList((trade,) + self.trades)

    def in_construction_order(self) -> List[Trade]:
        return list(reversed(self.trades))

    def __iter__(self):
        return iter(self.trades)

    def __len__(self):
        return len(self.trades)


@dataclass
class TradingRun:
    trades: TradeList
    buy_left: List[int]
    sell_left: List[int]
    iterations: int = 0
    variants: List[int] = field(default_factory=list)


# --- predicates ---

def sorted_order(orders: Sequence[Order]) -> bool:
    return all(orders[k + 1].price_order.value <= orders[k].price_order.value
               for k in range(len(orders) - 1))


def first_unsorted_pair(orders: Sequence[Order]):
    for k in range(len(orders) - 1):
        if orders[k + 1].price_order.value > orders[k].price_order.value:
            return k, k + 1
    return None


def matching_order(t: Trade, buys: Sequence[Order], sells: Sequence[Order]) -> bool:
    if not (0 <= t.seller_index < len(sells) and 0 <= t.buyer_index < len(buys)):
        return False
    return t.amount > 0 and sells[t.seller_index].price_order.value <= buys[t.buyer_index].price_order.value


def sum_seller(trades: TradeList, i: int) -> int:
    return sum(t.amount for t in trades if t.seller_index == i)


def sum_buyer(trades: TradeList, i: int) -> int:
    return sum(t.amount for t in trades if t.buyer_index == i)


def nb_token(trades: TradeList) -> int:
    return sum(t.amount for t in trades)


def correct(trades: TradeList, buys: Sequence[Order], sells: Sequence[Order]) -> bool:
    if not all(matching_order(t, buys, sells) for t in trades):
        return False
    if any(sum_seller(trades, i) > s.tokens.value for i, s in enumerate(sells)):
        return False
    return all(sum_buyer(trades, i) <= b.tokens.value for i, b in enumerate(buys))


def check_trading_inputs(buys: Sequence[Order], sells: Sequence[Order]) -> None:
    if not buys or not sells:
        raise PreconditionViolation("trading needs non-empty buy and sell arrays")
    for name, orders in (("buys", buys), ("sells", sells)):
        pair = first_unsorted_pair(orders)
        if pair is not None:
            raise PreconditionViolation(f"{name} not sorted by non-increasing price at indices {pair[0]}, {pair[1]}")
        for k, order in enumerate(orders):
            if order.tokens.value <= 0:
                raise PreconditionViolation(f"{name}[{k}] has no tokens")


# --- the matcher ---

def run_trading(buys: Sequence[Order], sells: Sequence[Order], spec_check: bool = True) -> TradingRun:
    """Two-pointer greedy matching over private copies of the capacities."""
    if spec_check:
        check_trading_inputs(buys, sells)
    demand = [b.tokens.value for b in buys]
    stock = [s.tokens.value for s in sells]
    result = TradeList()
    i = j = 0
    run = TradingRun(result, demand, stock)
    while i < len(buys) and j < len(sells):
        run.variants.append(len(buys) + len(sells) - i - j)
        run.iterations += 1
        if buys[i].price_order.value >= sells[j].price_order.value:
            if demand[i] <= stock[j]:
                result = result.cons(Trade(j, i, demand[i]))
                stock[j] -= demand[i]
                demand[i] = 0
                i += 1
                if stock[j] == 0:
                    j += 1
            else:
                result = result.cons(Trade(j, i, stock[j]))
                demand[i] -= stock[j]
                stock[j] = 0
                j += 1
        else:
            j += 1
    run.trades = result
    return run


def trading(buys: Sequence[Order], sells: Sequence[Order], spec_check: bool = True) -> TradeList:
    return run_trading(buys, sells, spec_check).trades


def remaining_capacity(buys: Sequence[Order], sells: Sequence[Order]) -> Tuple[List[int], List[int]]:
    """Demand and stock left per order once matching stops."""
    run = run_trading(buys, sells)
    return run.buy_left, run.sell_left


def oracle_max_tokens(buys: Sequence[Order], sells: Sequence[Order]) -> int:
    """Maximum tokens any correct trade list can move: integer max flow, buyers → sellers."""
    graph = nx.DiGraph()
    graph.add_node("source")
    graph.add_node("sink")
    for i, b in enumerate(buys):
        graph.add_edge("source", ("buy", i), capacity=b.tokens.value)
        for j, s in enumerate(sells):
            if b.price_order.value >= s.price_order.value:
                # no capacity attribute: unbounded in networkx
                graph.add_edge(("buy", i), ("sell", j))
    for j, s in enumerate(sells):
        graph.add_edge(("sell", j), "sink", capacity=s.tokens.value)
    return nx.maximum_flow_value(graph, "source", "sink")


def sort_orders(orders: Sequence[Order]) -> List[Order]:
    """Stable sort by non-increasing price."""
    return sorted(orders, key=lambda o: -o.price_order.value)


# --- order-book files ---

def parse_orderbook(text: str, sort: bool = False) -> Tuple[List[Order], List[Order]]:
    lines = [line.strip() for line in text.splitlines() if line.strip() and not line.strip().startswith("#")]
    if not lines:
        raise OrderBookError("empty order-book file")
    header = lines[0].split()
    if len(header) != 4 or header[0] != "buys" or header[2] != "sells":
        raise OrderBookError(f"bad header {lines[0]!r}; expected 'buys N sells M'")
    try:
        n_buys, n_sells = int(header[1]), int(header[3])
    except ValueError:
        raise OrderBookError(f"bad header counts in {lines[0]!r}")
    body = lines[1:]
    if len(body) != n_buys + n_sells:
        raise OrderBookError(f"header announces {n_buys + n_sells} orders, file has {len(body)}")
    orders = []
    for number, line in enumerate(body, start=2):
        parts = line.split()
        if len(parts) != 3:
            raise OrderBookError(f"line {number}: expected '<address-hex> <tokens> <price>'")
        try:
            orders.append(Order(Address.parse(parts[0]), int(parts[1]), int(parts[2])))
        except ValueError as e:
            raise OrderBookError(f"line {number}: {e}")
    buys, sells = orders[:n_buys], orders[n_buys:]
    if sort:
        return sort_orders(buys), sort_orders(sells)
    for name, section in (("buys", buys), ("sells", sells)):
        pair = first_unsorted_pair(section)
        if pair is not None:
            raise OrderBookError(
                f"{name} section is not sorted: index {pair[1]} (price {section[pair[1]].price_order.value}) "
                f"exceeds index {pair[0]} (price {section[pair[0]].price_order.value})")
    return buys, sells


def load_orderbook(path, sort: bool = False) -> Tuple[List[Order], List[Order]]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise OrderBookError(f"cannot read order book {path}: {e}")
    return parse_orderbook(text, sort=sort)


def main():
    parser = argparse.ArgumentParser(description="Match an order-book file and compare against the max-flow optimum.")
    parser.add_argument("book", help="Path to the order-book file")
    parser.add_argument("--sort", action="store_true", help="Sort both sections by price before matching")
    args = parser.parse_args()

    buys, sells = load_orderbook(args.book, sort=args.sort)
    trades = trading(buys, sells)
    for t in trades.in_construction_order():
        print(f"seller {t.seller_index} buyer {t.buyer_index} amount {t.amount}")
    print(f"total {nb_token(trades)} oracle {oracle_max_tokens(buys, sells)}")


if __name__ == "__main__":
    main()
