#!/usr/bin/env python3
"""
Contract Source Tokenizer

Turns `.mlc` source text into a flat token list with line/column spans.
Comments are ML-style ``(* ... *)`` and may nest. Keywords are recognised
after identifier scanning, so ``letter`` is an identifier and ``let`` is not.
"""

import argparse
import re
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import List, Union

from .errors import LexError, MlcError

KEYWORDS = {
    "let", "rec", "in", "if", "then", "else", "while", "do", "done", "match", "with", "end",
    "type", "record", "global", "map", "exception", "event", "constant", "modifier",
    "public", "private", "requires", "ensures", "raises", "variant", "invariant",
    "raise", "ref", "not", "true", "false", "old", "result", "begin", "mutable", "of",
    "add_gas", "guard", "send", "transfer", "emit",
    # reserved so the parser can reject them by rule
    "try", "for", "fun", "function", "assert", "lemma",
}

# Longest symbols first.
SYMBOLS = [
    ("[@", "LATTR"), (":=", "ASSIGN"), ("<-", "LARROW"), ("->", "ARROW"), ("<=", "LE"), (">=", "GE"),
    ("<>", "NE"), ("&&", "AND"), ("||", "OR"),
    ("(", "LPAREN"), (")", "RPAREN"), ("{", "LBRACE"), ("}", "RBRACE"), ("[", "LBRACKET"),
    ("]", "RBRACKET"), (",", "COMMA"), (";", "SEMI"), (":", "COLON"), (".", "DOT"), ("=", "EQ"),
    ("<", "LT"), (">", "GT"), ("+", "PLUS"), ("-", "MINUS"), ("*", "STAR"), ("/", "SLASH"),
    ("%", "PERCENT"), ("!", "BANG"), ("|", "BAR"), ("'", "QUOTE"),
]

IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_']*")
INT_RE = re.compile(r"0[xX][0-9A-Fa-f]+|[0-9]+")


@dataclass(frozen=True)
class Token:
    kind: str
    value: Union[str, int, None]
    line: int
    col: int

    @property
    def location(self):
        return (self.line, self.col)

    def __repr__(self):
        return self.kind if self.value is None else f"{self.kind} {self.value}"


class Tokenizer:
    def __init__(self, source: str):
        self.source = source
        self.pos = 0
        self.line = 1
        self.col = 1
        self.tokens: List[Token] = []

    def _advance(self, count: int):
        for ch in self.source[self.pos:self.pos + count]:
            if ch == "\n":
                self.line += 1
                self.col = 1
            else:
                self.col += 1
        self.pos += count

    def _skip_comment(self):
        start = (self.line, self.col)
        depth = 0
        while self.pos < len(self.source):
            if self.source.startswith("(*", self.pos):
                depth += 1
                self._advance(2)
            elif self.source.startswith("*)", self.pos):
                depth -= 1
                self._advance(2)
                if depth == 0:
                    return
            else:
                self._advance(1)
        raise LexError("unterminated comment", start)

    def _string(self):
        start = (self.line, self.col)
        self._advance(1)
        chars = []
        escapes = {"n": "\n", "t": "\t", '"': '"', "\\": "\\"}
        while self.pos < len(self.source):
            ch = self.source[self.pos]
            if ch == '"':
                self._advance(1)
                self.tokens.append(Token("STRING", "".join(chars), *start))
                return
            if ch == "\n":
                break
            if ch == "\\" and self.pos + 1 < len(self.source) and self.source[self.pos + 1] in escapes:
                chars.append(escapes[self.source[self.pos + 1]])
                self._advance(2)
                continue
            chars.append(ch)
            self._advance(1)
        raise LexError("unterminated string", start)

    def run(self) -> List[Token]:
        src = self.source
        while self.pos < len(src):
            ch = src[self.pos]
            if ch in " \t\r\n":
                self._advance(1)
                continue
            if src.startswith("(*", self.pos):
                self._skip_comment()
                continue
            if ch == '"':
                self._string()
                continue
            start = (self.line, self.col)
            m = INT_RE.match(src, self.pos)
            if m:
                text = m.group(0)
                follow = src[m.end():m.end() + 1]
                if follow and (follow.isalnum() or follow == "_"):
                    raise LexError(f"malformed number {text + follow!r}", start)
                self.tokens.append(Token("INT", int(text, 0), *start))
                self._advance(len(text))
                continue
            m = IDENT_RE.match(src, self.pos)
            if m:
                text = m.group(0)
                if text == "_":
                    self.tokens.append(Token("UNDERSCORE", None, *start))
                elif text in KEYWORDS:
                    self.tokens.append(Token(text.upper(), None, *start))
                elif text[0].isupper():
                    self.tokens.append(Token("UIDENT", text, *start))
                else:
                    self.tokens.append(Token("IDENT", text, *start))
                self._advance(len(text))
                continue
            for symbol, kind in SYMBOLS:
                if src.startswith(symbol, self.pos):
                    self.tokens.append(Token(kind, None, *start))
                    self._advance(len(symbol))
                    break
            else:
                raise LexError(f"unexpected character {ch!r}", start)
        self.tokens.append(Token("EOF", None, self.line, self.col))
        return self.tokens


def tokenize(source: str) -> List[Token]:
    """Tokenize source text; the list always ends with an EOF token."""
    return Tokenizer(source).run()


def tokenize_file(input_file, debug=False):
    try:
        source = Path(input_file).read_text(encoding="utf-8")
        tokens = tokenize(source)
    except OSError as e:
        print(f"Error reading {input_file}: {e}")
        return None
    except MlcError as e:
        print(f"{input_file}:{e}")
        return None
    if debug:
        for token in tokens:
            print(f"{token.line}:{token.col}\t{token!r}")
    return tokens


def main():
    parser = argparse.ArgumentParser(description="Tokenize an .mlc source file.")
    parser.add_argument("input", help="Path to the .mlc source")
    args = parser.parse_args()
    if tokenize_file(args.input, debug=True) is None:
        sys.exit(1)


if __name__ == "__main__":
    main()
