"""Lexical reader for CMake command invocations.

Only the command-call layer is understood: ``name(arg arg "quoted" [[bracket]])``
with comments and line continuations.  Variables and generator expressions
are kept as literal text.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_BRACKET_OPEN_RE = re.compile(r"\[(=*)\[")


@dataclass(frozen=True)
class Arg:
    value: str
    quoted: bool = False


@dataclass(frozen=True)
class Command:
    name: str  # lowercased
    args: tuple[Arg, ...]
    line: int
    source: str  # verbatim text of the invocation

    def values(self) -> list[str]:
        return [a.value for a in self.args]


def _skip_bracket(text: str, i: int) -> int | None:
    """If a bracket argument/comment starts at i, return the index after it."""
    m = _BRACKET_OPEN_RE.match(text, i)
    if not m:
        return None
    close = "]" + m.group(1) + "]"
    end = text.find(close, m.end())
    return len(text) if end < 0 else end + len(close)


def parse_commands(text: str) -> list[Command]:
    """Return every command invocation in a CMake source text.

    Malformed input never raises: an unterminated invocation is closed at
    end of text, which is what a hint extractor wants.
    """
    commands: list[Command] = []
    i, n, line = 0, len(text), 1
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            i += 1
            continue
        if ch.isspace():
            i += 1
            continue
        if ch == "#":
            end = _skip_bracket(text, i + 1)
            if end is None:
                end = text.find("\n", i)
                end = n if end < 0 else end
            line += text.count("\n", i, end)
            i = end
            continue
        m = _IDENT_RE.match(text, i)
        if not m:
            i += 1
            continue
        j = m.end()
        while j < n and text[j] in " \t":
            j += 1
        if j >= n or text[j] != "(":
            i = m.end()
            continue
        start, start_line = i, line
        args, j, line = _read_args(text, j + 1, line)
        commands.append(Command(m.group().lower(), tuple(args), start_line, text[start:j]))
        i = j
    return commands


def _read_args(text: str, i: int, line: int) -> tuple[list[Arg], int, int]:
    args: list[Arg] = []
    depth = 1
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            i += 1
        elif ch.isspace():
            i += 1
        elif ch == "#":
            end = _skip_bracket(text, i + 1)
            if end is None:
                end = text.find("\n", i)
                end = n if end < 0 else end
            line += text.count("\n", i, end)
            i = end
        elif ch == "(":
            depth += 1
            i += 1
        elif ch == ")":
            depth -= 1
            i += 1
            if depth == 0:
                return args, i, line
        elif ch == '"':
            j = i + 1
            buf: list[str] = []
            while j < n and text[j] != '"':
                if text[j] == "\\" and j + 1 < n:
                    if text[j + 1] == "\n":  # line continuation
                        line += 1
                    else:
                        buf.append(text[j + 1])
                    j += 2
                    continue
                if text[j] == "\n":
                    line += 1
                buf.append(text[j])
                j += 1
            args.append(Arg("".join(buf), True))
            i = j + 1
        elif ch == "[" and _BRACKET_OPEN_RE.match(text, i):
            end = _skip_bracket(text, i)
            m = _BRACKET_OPEN_RE.match(text, i)
            body = text[m.end(): end - len(m.group(0))]
            line += text.count("\n", i, end)
            args.append(Arg(body, True))
            i = end
        else:
            j = i
            buf = []
            while j < n and not text[j].isspace() and text[j] not in '()#"':
                if text[j] == "\\" and j + 1 < n:
                    buf.append(text[j: j + 2])
                    j += 2
                    continue
                buf.append(text[j])
                j += 1
            args.append(Arg("".join(buf)))
            i = j
    return args, n, line
