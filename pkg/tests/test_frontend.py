import pytest

from scripts.errors import GlobalShapeError, LexError, MlcTypeError, ParseError, RaiseDisciplineError
from scripts.step_01_tokenize import tokenize
from scripts.step_02_parse import parse_source, pretty_print
from scripts.step_03_typecheck import check_source, verify_types

from .conftest import CORPUS

CORPUS_FILES = ["wcet_lists.mlc", "trading.mlc", "bemp_market.mlc"]


def test_tokens_carry_positions_and_end_with_eof():
    tokens = tokenize("let x\n  = 0x2a (* a (* nested *) comment *)")
    assert [t.kind for t in tokens] == ["LET", "IDENT", "EQ", "INT", "EOF"]
    assert tokens[2].location == (2, 3)
    assert tokens[3].value == 42


@pytest.mark.parametrize("source, message", [
    ("let x = 1 (* open (* nested *)", "unterminated comment"),
    ('let s = "abc', "unterminated string"),
    ("let x = 12ab", "malformed number"),
    ("let x = 1 # 2", "unexpected character"),
])
def test_lex_errors(source, message):
    with pytest.raises(LexError, match=message):
        tokenize(source)


def test_lex_error_reports_the_opening_position():
    with pytest.raises(LexError) as info:
        tokenize("let x = 1\n  (* never closed")
    assert info.value.location == (2, 3)


def test_empty_module_is_a_parse_error():
    with pytest.raises(ParseError, match="empty module"):
        parse_source("(* only a comment *)")


@pytest.mark.parametrize("source, rule", [
    ("let public f () : unit = try () with _ -> ()", "no-try-with"),
    ("let public f () : unit = for i = 0 to 3 do () done", "no-for-loop"),
    ("let public f () : unit = let g = fun x -> x in ()", "no-closure"),
    ("let public f () : unit = let rec g (x : uint32) : uint32 = x in ()", "no-closure"),
    ("let public f () : unit = let g (x : uint32) : uint32 = x in ()", "no-closure"),
    ("let public f () : unit = assert { true }", "no-assert"),
    ("type 'a box = | Box 'a", "monomorphic-only"),
    ("exception Bad of uint32", "nominal-exception"),
    ("type t = | A | B t\nlet public f (x : t) : uint32 = match x with | A -> 0 | B (B _) -> 1 | B A -> 2 end",
     "no-nested-pattern"),
])
def test_excluded_constructs_are_rejected_by_rule(source, rule):
    with pytest.raises(ParseError) as info:
        parse_source(source)
    assert info.value.rule == rule


def test_parse_error_lists_what_was_expected():
    with pytest.raises(ParseError) as info:
        parse_source("let public f () : unit")
    assert info.value.expected
    assert info.value.location is not None


@pytest.mark.parametrize("name", CORPUS_FILES)
def test_pretty_print_reparses_to_the_same_tree(name):
    source = (CORPUS / name).read_text(encoding="utf-8")
    module = parse_source(source, name)
    printed = pretty_print(module)
    assert parse_source(printed, name) == module
    assert pretty_print(parse_source(printed, name)) == printed


@pytest.mark.parametrize("name", CORPUS_FILES)
def test_corpus_typechecks(name):
    core = check_source((CORPUS / name).read_text(encoding="utf-8"), name)
    assert core.functions
    assert verify_types(core)


def test_corpus_functions_are_classified():
    core = check_source((CORPUS / "wcet_lists.mlc").read_text(encoding="utf-8"), "wcet_lists")
    assert [f.name for f in core.functions.values() if f.gas_checking] == ["length_", "mk_list42", "g_"]
    assert [f.name for f in core.functions.values() if f.public] == ["g_"]


@pytest.mark.parametrize("source, rule", [
    ("let public f (x : uint32) : bool = x", "type-mismatch"),
    ("let public f () : uint32 = y", "unbound-variable"),
    ("let public f () : uint32 = (0x100000000 : uint32)", "literal-range"),
    ("type t = | A | B\nlet public f (x : t) : uint32 = match x with | A -> 0 end", "exhaustive-match"),
    ("let public f (x : uint32) (y : int32) : uint32 = x + y", "kind-mismatch"),
    ("let public f () : unit = raise Nope", "unknown-exception"),
])
def test_type_errors(source, rule):
    with pytest.raises(MlcTypeError) as info:
        check_source(source)
    assert info.value.rule == rule


@pytest.mark.parametrize("source, rule", [
    ("global g : { flag : bool }\nlet public f () : uint32 = 0", "integer-globals"),
    ("map m : int32 -> uint256\nlet public f () : uint32 = 0", "map-key"),
    ("map m : uint256 -> uint256\nlet public f () : uint32 = 0", "map-key"),
])
def test_global_shape_errors(source, rule):
    with pytest.raises(GlobalShapeError) as info:
        check_source(source)
    assert info.value.rule == rule


PRIVATE_RAISE = """
exception Boom
let helper (x : uint256) : uint256 =
  if x = 0 then raise Boom;
  x
let public f (x : uint256) : uint256 = helper x
"""

RAISE_AFTER_WRITE = """
exception Boom
global g : { n : uint256 }
let public f (x : uint256) : unit =
  g.n <- x;
  if x = 0 then raise Boom
"""

RAISING_CALL_AFTER_WRITE = """
exception Boom
global g : { n : uint256 }
let public check (x : uint256) : unit =
  if x = 0 then raise Boom
let public f (x : uint256) : unit =
  g.n <- x;
  check x
"""

RAISE_BEFORE_WRITE = """
exception Boom
global g : { n : uint256 }
let public f (x : uint256) : unit =
  if x = 0 then raise Boom;
  g.n <- x
"""


@pytest.mark.parametrize("source, rule", [
    (PRIVATE_RAISE, "raise-only-public"),
    (RAISE_AFTER_WRITE, "raise-before-mutation"),
    (RAISING_CALL_AFTER_WRITE, "raise-before-mutation"),
])
def test_raise_discipline(source, rule):
    with pytest.raises(RaiseDisciplineError) as info:
        check_source(source)
    assert info.value.rule == rule


def test_raise_before_mutation_is_accepted():
    core = check_source(RAISE_BEFORE_WRITE)
    f = core.functions["f"]
    assert f.may_raise and f.mutates
