import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from scripts.errors import DivisionByZero, KindMismatch, OutOfRange, Overflow
from scripts.numeric import (KINDS, MAX_UINT, UINT256, BoundedInt, checked_arith, compare, exact, from_math,
                             from_word, kind_of, to_word)

OPS = ("add", "sub", "mul", "div", "mod")


def trunc_div(a, b):
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def oracle(op, a, b):
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        return trunc_div(a, b)
    return a - trunc_div(a, b) * b


def edge_biased(rng, kind):
    edges = [kind.lower, kind.lower + 1, -1, 0, 1, kind.upper - 1, kind.upper]
    if rng.random() < 0.3:
        return min(max(rng.choice(edges), kind.lower), kind.upper)
    return rng.randint(kind.lower, kind.upper)


@pytest.mark.parametrize("name", sorted(KINDS))
def test_checked_arith_agrees_with_exact_oracle(name):
    kind = KINDS[name]
    rng = random.Random(f"arith-{name}")
    for _ in range(10_000):
        op = rng.choice(OPS)
        a, b = edge_biased(rng, kind), edge_biased(rng, kind)
        if op in ("div", "mod") and b == 0:
            with pytest.raises(DivisionByZero):
                checked_arith(op, BoundedInt(kind, a), BoundedInt(kind, b))
            continue
        expected = oracle(op, a, b)
        if kind.contains(expected):
            assert checked_arith(op, BoundedInt(kind, a), BoundedInt(kind, b)).value == expected
        else:
            with pytest.raises(Overflow):
                checked_arith(op, BoundedInt(kind, a), BoundedInt(kind, b))


def test_division_truncates_toward_zero():
    int32 = KINDS["int32"]
    assert exact("div", -7, 2) == -3
    assert exact("mod", -7, 2) == -1
    assert checked_arith("div", BoundedInt(int32, 7), BoundedInt(int32, -2)).value == -3


def test_signed_minimum_divided_by_minus_one_overflows():
    int64 = KINDS["int64"]
    with pytest.raises(Overflow):
        checked_arith("div", BoundedInt(int64, int64.lower), BoundedInt(int64, -1))


def test_kind_mismatch_is_rejected():
    with pytest.raises(KindMismatch):
        checked_arith("add", BoundedInt(KINDS["uint32"], 1), BoundedInt(KINDS["uint64"], 1))
    with pytest.raises(KindMismatch):
        compare("lt", BoundedInt(KINDS["int32"], 1), BoundedInt(KINDS["uint32"], 1))


def test_construction_outside_the_kind_fails():
    with pytest.raises(OutOfRange):
        BoundedInt(KINDS["uint32"], -1)
    with pytest.raises(OutOfRange):
        from_math(UINT256, MAX_UINT + 1)


def test_aliases_resolve():
    assert kind_of("uint") == UINT256
    assert kind_of("address") == KINDS["uint160"]
    with pytest.raises(KeyError):
        kind_of("uint7")


@given(st.sampled_from(sorted(KINDS)), st.data())
def test_word_image_round_trips(name, data):
    kind = KINDS[name]
    value = data.draw(st.integers(kind.lower, kind.upper))
    a = BoundedInt(kind, value)
    word = to_word(a)
    assert 0 <= word <= MAX_UINT
    assert from_word(kind, word) == a


def test_negative_values_are_twos_complement_words():
    assert to_word(BoundedInt(KINDS["int32"], -1)) == MAX_UINT
    assert from_word(KINDS["int256"], MAX_UINT).value == -1
