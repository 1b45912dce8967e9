"""Tokenizer and indentation-block builder for the recipe dialect.

The recipe dialect is a small subset of Python: import lines, one package
class whose body holds attribute assignments, directive calls and method
definitions.  This module only knows about tokens and block structure; it
accepts anything that is lexically well formed (balanced brackets, closed
strings, consistent indentation) and leaves the directive semantics to
:mod:`recipeforge.recipe`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator

from .errors import ParseError

NAME, STRING, NUMBER, OP = "NAME", "STRING", "NUMBER", "OP"

_OPERATORS = sorted(
    """**= //= >>= <<= ... -> := == != <= >= ** // << >> += -= *= /= %= &= |= ^= @=
    + - * / % @ & | ^ ~ < > ( ) [ ] { } , : ; . = !""".split(),
    key=len,
    reverse=True,
)
_NAME_RE = re.compile(r"[^\W\d]\w*")
_NUMBER_RE = re.compile(
    r"0[xX][0-9a-fA-F_]+|0[oO][0-7_]+|0[bB][01_]+"
    r"|(?:\d[\d_]*\.?[\d_]*|\.\d[\d_]*)(?:[eE][+-]?\d+)?[jJ]?"
)
_STRING_START_RE = re.compile(r"([rRbBuUfF]{0,2})('''|\"\"\"|'|\")")
_CLOSERS = {")": "(", "]": "[", "}": "{"}
_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", "\\": "\\", "'": "'", '"': '"', "0": "\0", "\n": ""}


@dataclass(frozen=True)
class Token:
    kind: str
    value: str
    line: int
    end_line: int

    def is_op(self, value: str) -> bool:
        return self.kind == OP and self.value == value

    def is_name(self, value: str | None = None) -> bool:
        return self.kind == NAME and (value is None or self.value == value)


@dataclass
class LogicalLine:
    indent: int
    tokens: list[Token]

    @property
    def first_line(self) -> int:
        return self.tokens[0].line

    @property
    def last_line(self) -> int:
        return self.tokens[-1].end_line

    def opens_block(self) -> bool:
        return self.tokens[-1].is_op(":")


@dataclass
class Block:
    """A logical line plus the indented statements it owns (if it ends in ':')."""

    line: LogicalLine | None
    children: list["Block"] = field(default_factory=list)

    @property
    def first_line(self) -> int:
        return self.line.first_line if self.line else 1

    @property
    def last_line(self) -> int:
        if self.children:
            return self.children[-1].last_line
        return self.line.last_line if self.line else 1

    def walk(self) -> Iterator["Block"]:
        for child in self.children:
            yield child
            yield from child.walk()


def string_literal(token: Token) -> tuple[str, str]:
    """Decode a STRING token; returns (prefix, text).

    f-strings are returned with their braces intact, the caller decides what
    a placeholder means.
    """
    match = _STRING_START_RE.match(token.value)
    assert match is not None
    prefix, quote = match.group(1).lower(), match.group(2)
    body = token.value[match.end(): len(token.value) - len(quote)]
    if "r" in prefix:
        return prefix, body
    out: list[str] = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\" and i + 1 < len(body):
            nxt = body[i + 1]
            out.append(_ESCAPES.get(nxt, "\\" + nxt))
            i += 2
            continue
        out.append(ch)
        i += 1
    return prefix, "".join(out)


def tokenize(text: str) -> list[LogicalLine]:
    """Split *text* into logical lines of tokens.

    Raises ParseError on unterminated strings, unbalanced brackets or
    characters that cannot start a token.
    """
    lines: list[LogicalLine] = []
    current: list[Token] = []
    indent = 0
    at_line_start = True
    stack: list[tuple[str, int]] = []
    i, line, n = 0, 1, len(text)

    def flush() -> None:
        nonlocal current
        if current:
            lines.append(LogicalLine(indent, current))
        current = []

    while i < n:
        ch = text[i]
        if at_line_start and not stack:
            width = 0
            j = i
            while j < n and text[j] in " \t\f":
                width = (width // 8 + 1) * 8 if text[j] == "\t" else width + 1
                j += 1
            if j >= n:
                break
            if text[j] in "\r\n#":
                # blank or comment-only line
                while j < n and text[j] != "\n":
                    j += 1
                i = j + 1
                line += 1
                continue
            indent = width
            at_line_start = False
            i = j
            continue
        if ch == "\n":
            line += 1
            i += 1
            if not stack:
                flush()
                at_line_start = True
            continue
        if ch in " \t\f\r":
            i += 1
            continue
        if ch == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch == "\\":
            rest = text[i + 1: i + 3]
            if rest.startswith("\n") or rest == "\r\n":
                i += 2 if rest.startswith("\n") else 3
                line += 1
                continue
            raise ParseError("unexpected character after line continuation", line)

        m = _STRING_START_RE.match(text, i)
        if m:
            start_line = line
            quote = m.group(2)
            j = m.end()
            while True:
                if j >= n:
                    raise ParseError("unterminated string literal", start_line)
                c = text[j]
                if c == "\\":
                    if j + 1 < n and text[j + 1] == "\n":
                        line += 1
                    j += 2
                    continue
                if text.startswith(quote, j):
                    j += len(quote)
                    break
                if c == "\n":
                    if len(quote) == 1:
                        raise ParseError("unterminated string literal", start_line)
                    line += 1
                j += 1
            current.append(Token(STRING, text[i:j], start_line, line))
            i = j
            continue

        m = _NAME_RE.match(text, i)
        if m:
            current.append(Token(NAME, m.group(), line, line))
            i = m.end()
            continue
        m = _NUMBER_RE.match(text, i)
        if m and m.group():
            current.append(Token(NUMBER, m.group(), line, line))
            i = m.end()
            continue
        for op in _OPERATORS:
            if text.startswith(op, i):
                break
        else:
            raise ParseError(f"invalid character {ch!r}", line)
        if op in "([{":
            stack.append((op, line))
        elif op in _CLOSERS:
            if not stack or stack[-1][0] != _CLOSERS[op]:
                raise ParseError(f"unmatched {op!r}", line)
            stack.pop()
        current.append(Token(OP, op, line, line))
        i += len(op)

    if stack:
        opener, opened_at = stack[-1]
        raise ParseError(f"{opener!r} was never closed", opened_at)
    flush()
    return lines


def build_blocks(lines: list[LogicalLine]) -> Block:
    """Arrange logical lines into an indentation tree, checking indentation."""
    root = Block(None)
    levels: list[tuple[int, Block]] = [(0, root)]
    previous: Block | None = None
    for ll in lines:
        if previous is not None and previous.line is not None and previous.line.opens_block():
            if ll.indent <= levels[-1][0]:
                raise ParseError("expected an indented block", ll.first_line)
            levels.append((ll.indent, previous))
        else:
            if ll.indent > levels[-1][0]:
                raise ParseError("unexpected indent", ll.first_line)
            while ll.indent < levels[-1][0]:
                levels.pop()
            if ll.indent != levels[-1][0]:
                raise ParseError("unindent does not match any outer indentation level", ll.first_line)
        node = Block(ll)
        levels[-1][1].children.append(node)
        previous = node
    if previous is not None and previous.line is not None and previous.line.opens_block():
        raise ParseError("expected an indented block", previous.line.last_line)
    return root


def split_top_level(tokens: list[Token], sep: str = ",") -> list[list[Token]]:
    """Split tokens on *sep* at bracket depth zero; empty trailing parts dropped."""
    parts: list[list[Token]] = [[]]
    depth = 0
    for tok in tokens:
        if tok.kind == OP and tok.value in "([{":
            depth += 1
        elif tok.kind == OP and tok.value in ")]}":
            depth -= 1
        if depth == 0 and tok.is_op(sep):
            parts.append([])
            continue
        parts[-1].append(tok)
    return [p for p in parts if p]


def matching_close(tokens: list[Token], open_index: int) -> int:
    depth = 0
    for k in range(open_index, len(tokens)):
        tok = tokens[k]
        if tok.kind == OP and tok.value in "([{":
            depth += 1
        elif tok.kind == OP and tok.value in ")]}":
            depth -= 1
            if depth == 0:
                return k
    return -1
