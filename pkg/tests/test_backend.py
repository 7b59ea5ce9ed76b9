import hashlib

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scripts.errors import MlcError, TruncatedPush
from scripts.opcodes import push_for
from scripts.step_04_codegen import MAP_STRIDE, LabelDef, Op, PushLabel, SymProgram, exception_tag, selector
from scripts.step_05_resolve_labels import resolve_labels, verify_jump_targets
from scripts.step_06_emit import compile_file, disassemble, emit, read_code, render_listing, write_artifacts

from .conftest import CORPUS


def padded_jump(padding):
    return SymProgram("t", [PushLabel("far"), Op("JUMP")] + [Op("STOP")] * padding
                      + [LabelDef("far"), Op("JUMPDEST"), Op("STOP")], [], [])


def test_selector_is_the_leading_four_bytes_of_sha256():
    digest = hashlib.sha256(b"registerSmartMeter").digest()
    assert selector("registerSmartMeter") == int.from_bytes(digest[:4], "big")
    assert exception_tag("NoAmount") != exception_tag("NoPrice")


def test_layout_gives_each_map_its_own_region(market):
    layout = market.layout
    assert layout.slot("roles", "owner") == 0
    assert layout.slot("state", "isOpen") == 4
    bases = sorted(layout.map_bases.values())
    assert bases[0] == MAP_STRIDE
    assert all(b - a == MAP_STRIDE for a, b in zip(bases, bases[1:]))
    assert layout.map_slot("addressOf", 7) == layout.map_bases["addressOf"] + 7


def test_compilation_is_deterministic():
    first = compile_file(CORPUS / "bemp_market.mlc")
    second = compile_file(CORPUS / "bemp_market.mlc")
    assert first.code == second.code
    assert [(s.offset, s.used, s.alloc) for s in first.annotations] == \
           [(s.offset, s.used, s.alloc) for s in second.annotations]


def test_every_public_function_has_a_range(market):
    for name in market.sized.public:
        start, end = market.function_range(name)
        assert start < end <= len(market.code)


def test_far_label_widens_to_push2_in_a_second_pass():
    sized = resolve_labels(padded_jump(300))
    push = sized.instrs[0]
    assert push.mnemonic == "PUSH2"
    assert push.immediate == sized.labels["far"] == 304
    assert sized.iterations >= 2
    assert sized.push_widths[0] == [1] and sized.push_widths[-1] == [2]


def test_near_label_stays_push1():
    sized = resolve_labels(padded_jump(100))
    assert sized.instrs[0].mnemonic == "PUSH1"
    assert sized.iterations == 1


def test_undefined_and_duplicate_labels_fail():
    with pytest.raises(MlcError, match="undefined"):
        resolve_labels(SymProgram("t", [PushLabel("x"), Op("JUMP")], [], []))
    with pytest.raises(MlcError, match="twice"):
        resolve_labels(SymProgram("t", [LabelDef("x"), Op("JUMPDEST"), LabelDef("x"), Op("JUMPDEST")], [], []))


def test_jump_to_a_non_jumpdest_is_rejected():
    with pytest.raises(MlcError, match="JUMPDEST"):
        resolve_labels(SymProgram("t", [PushLabel("x"), Op("JUMP"), LabelDef("x"), Op("STOP")], [], []))


@st.composite
def label_programs(draw):
    count = draw(st.integers(1, 6))
    items = []
    for k in range(count):
        items.append(PushLabel(f"l{draw(st.integers(0, count - 1))}"))
        items.append(Op("JUMP"))
        items.extend([Op("STOP")] * draw(st.integers(0, 120)))
        items.extend([LabelDef(f"l{k}"), Op("JUMPDEST")])
    return SymProgram("random", items, [], [])


@settings(max_examples=60, deadline=None)
@given(label_programs())
def test_resolution_is_minimal_and_idempotent(program):
    sized = resolve_labels(program)
    for instr in sized.instrs:
        if instr.label is not None:
            assert instr.immediate == sized.labels[instr.label]
            assert instr.mnemonic == push_for(instr.immediate)
    again = resolve_labels(program)
    assert emit(again) == emit(sized)
    verify_jump_targets(sized)


@pytest.mark.parametrize("name", ["wcet_lists.mlc", "trading.mlc", "bemp_market.mlc"])
def test_corpus_jumps_land_on_jumpdests(name):
    contract = compile_file(CORPUS / name)
    verify_jump_targets(contract.sized)
    decoded = disassemble(contract.code)
    assert [i.mnemonic for i in decoded] == [i.mnemonic for i in contract.sized.instrs]


def test_truncated_push_is_reported():
    with pytest.raises(TruncatedPush):
        disassemble(bytes([0x61, 0x01]))


def test_listing_labels_jumpdests():
    listing = render_listing(disassemble(bytes([0x60, 0x03, 0x56, 0x5b, 0x00])))
    assert "L0x0003:" in listing
    assert "PUSH1 0x3" in listing


def test_artifacts_round_trip_through_disk(tmp_path, wcet):
    evm, asm, gasmap = write_artifacts(wcet, tmp_path)
    assert read_code(evm) == wcet.code
    assert "JUMPDEST" in asm.read_text()
    assert len(gasmap.read_text().splitlines()) == len(wcet.annotations)


def test_non_hex_bytecode_file(tmp_path):
    bad = tmp_path / "bad.evm"
    bad.write_text("not hex")
    with pytest.raises(MlcError):
        read_code(bad)
