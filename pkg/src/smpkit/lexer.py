"""A small tokenizer shared by the three formula grammars."""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

from smpkit.errors import ParseError
from smpkit.rational import match_rational

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_']*")


@dataclass(frozen=True)
class Token:
    kind: str  # "ident", "num", "sym" or "end"
    value: object
    pos: int


def tokenize(text: str, symbols: tuple[str, ...]) -> list[Token]:
    """Split ``text`` into identifiers, rationals and the given symbols.

    Longer symbols are tried first. Raises ParseError on any other character.
    """
    ordered = sorted(symbols, key=len, reverse=True)
    out = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        m = _IDENT.match(text, i)
        if m:
            out.append(Token("ident", m.group(0), i))
            i = m.end()
            continue
        num = match_rational(text, i)
        if num is not None:
            out.append(Token("num", num[0], i))
            i = num[1]
            continue
        for sym in ordered:
            if text.startswith(sym, i):
                out.append(Token("sym", sym, i))
                i += len(sym)
                break
        else:
            raise ParseError(f"unexpected character {ch!r}", text, i)
    out.append(Token("end", None, len(text)))
    return out


class TokenStream:
    """Cursor over a token list with error helpers."""

    def __init__(self, text: str, symbols: tuple[str, ...]):
        self.text = text
        self.tokens = tokenize(text, symbols)
        self.i = 0

    @property
    def peek(self) -> Token:
        return self.tokens[self.i]

    def next(self) -> Token:
        tok = self.tokens[self.i]
        if tok.kind != "end":
            self.i += 1
        return tok

    def error(self, message: str, tok: Token | None = None) -> ParseError:
        tok = tok or self.peek
        return ParseError(message, self.text, tok.pos)

    def accept(self, sym: str) -> bool:
        tok = self.peek
        if tok.kind == "sym" and tok.value == sym:
            self.i += 1
            return True
        return False

    def expect(self, sym: str) -> Token:
        tok = self.peek
        if tok.kind == "sym" and tok.value == sym:
            self.i += 1
            return tok
        raise self.error(f"expected {sym!r}")

    def ident(self, what: str = "identifier") -> str:
        tok = self.peek
        if tok.kind != "ident":
            raise self.error(f"expected {what}")
        self.i += 1
        return tok.value

    def number(self, what: str = "a nonnegative rational") -> Fraction:
        tok = self.peek
        if tok.kind == "sym" and tok.value == "-":
            raise self.error(f"expected {what}, got a negative number")
        if tok.kind != "num":
            raise self.error(f"expected {what}")
        self.i += 1
        return tok.value

    def finish(self):
        if self.peek.kind != "end":
            raise self.error("unexpected trailing input")
