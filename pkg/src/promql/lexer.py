"""Tokenizer for query strings."""
import re
from dataclasses import dataclass
from typing import List, Optional, Tuple

from src.promql.diagnostics import Diagnostic


@dataclass(frozen=True)
class Token:
    kind: str  # ident, number, string, duration, op, punct, eof
    text: str
    start: int
    end: int


_DURATION_RE = re.compile(r"[0-9]+[smhd](?![a-zA-Z0-9_])")
_NUMBER_RE = re.compile(r"(?:[0-9]+\.?[0-9]*|\.[0-9]+)(?:[eE][+-]?[0-9]+)?")
_IDENT_RE = re.compile(r"[a-zA-Z_:][a-zA-Z0-9_:]*")
_OPERATORS = ("=~", "!~", "!=", ">=", "<=", "==", "+", "-", "*", "/", ">", "<", "=")
_PUNCT = "(){}[],"


def _read_string(source: str, pos: int) -> Tuple[Optional[str], int]:
    quote = source[pos]
    i = pos + 1
    out = []
    while i < len(source):
        ch = source[i]
        if ch == "\\" and i + 1 < len(source):
            nxt = source[i + 1]
            out.append({"n": "\n", "t": "\t", "\\": "\\", "\"": "\"", "'": "'"}.get(nxt, "\\" + nxt))
            i += 2
            continue
        if ch == quote:
            return "".join(out), i + 1
        out.append(ch)
        i += 1
    return None, i


def tokenize(source: str) -> Tuple[List[Token], List[Diagnostic]]:
    tokens: List[Token] = []
    diagnostics: List[Diagnostic] = []
    pos = 0
    while pos < len(source):
        ch = source[pos]
        if ch.isspace():
            pos += 1
            continue
        if ch in "\"'":
            value, end = _read_string(source, pos)
            if value is None:
                diagnostics.append(Diagnostic.error((pos, len(source)), "unterminated string literal"))
                break
            tokens.append(Token("string", value, pos, end))
            pos = end
            continue
        match = _DURATION_RE.match(source, pos)
        if match:
            tokens.append(Token("duration", match.group(0), pos, match.end()))
            pos = match.end()
            continue
        match = _NUMBER_RE.match(source, pos)
        if match and match.group(0) != ".":
            tokens.append(Token("number", match.group(0), pos, match.end()))
            pos = match.end()
            continue
        match = _IDENT_RE.match(source, pos)
        if match:
            tokens.append(Token("ident", match.group(0), pos, match.end()))
            pos = match.end()
            continue
        op = next((o for o in _OPERATORS if source.startswith(o, pos)), None)
        if op:
            tokens.append(Token("op", op, pos, pos + len(op)))
            pos += len(op)
            continue
        if ch in _PUNCT:
            tokens.append(Token("punct", ch, pos, pos + 1))
            pos += 1
            continue
        diagnostics.append(Diagnostic.error((pos, pos + 1), f"unexpected character {ch!r}"))
        pos += 1
    tokens.append(Token("eof", "", len(source), len(source)))
    return tokens, diagnostics
