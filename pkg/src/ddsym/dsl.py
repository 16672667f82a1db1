"""Tiny text format for pulse sequences.

    seq   := term+
    term  := delay | pulse | group
    group := INT "x" "[" seq "]"
    delay := "d" FLOAT            (microseconds)
    pulse := "X" | "Y" | "-X" | "-Y" | "P" FLOAT   (phase in degrees)

``#`` starts a comment running to the end of the line.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from ddsym.seq import Delay, Element, Pulse, PulseSequence, wrap_phase

_FLOAT = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_TOKEN = re.compile(
    rf"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<group>(?P<count>\d+)\s*[xX]\s*\[)
  | (?P<close>\])
  | (?P<delay>d(?P<dval>{_FLOAT}))
  | (?P<phase>P(?P<pval>{_FLOAT}))
  | (?P<named>-?[XY])
    """,
    re.VERBOSE,
)
_NAMED = {"X": 0.0, "Y": math.pi / 2, "-X": math.pi, "-Y": 3 * math.pi / 2}


class DSLSyntaxError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


@dataclass
class _Token:
    kind: str
    value: object
    line: int
    column: int


def _position(text: str, pos: int) -> tuple[int, int]:
    line = text.count("\n", 0, pos) + 1
    return line, pos - (text.rfind("\n", 0, pos) + 1) + 1


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        line, col = _position(text, pos)
        if m is None:
            snippet = text[pos : pos + 10].split()[0] if text[pos:].strip() else text[pos]
            raise DSLSyntaxError(f"unexpected token {snippet!r}", line, col)
        end = m.end()
        # a token must be followed by whitespace, a bracket or end of input
        if m.lastgroup in ("delay", "phase", "named") and end < len(text):
            if not (text[end].isspace() or text[end] in "[]#"):
                raise DSLSyntaxError(f"malformed token {text[pos:end + 1]!r}", line, col)
        kind = m.lastgroup
        if kind == "group":
            tokens.append(_Token("group", int(m.group("count")), line, col))
        elif kind == "close":
            tokens.append(_Token("close", None, line, col))
        elif kind == "delay":
            value = float(m.group("dval"))
            if value < 0:
                raise ValueError(f"line {line}, column {col}: negative delay {value}")
            tokens.append(_Token("delay", value, line, col))
        elif kind == "phase":
            tokens.append(_Token("pulse", math.radians(float(m.group("pval"))), line, col))
        elif kind == "named":
            tokens.append(_Token("pulse", _NAMED[m.group("named")], line, col))
        pos = end
    return tokens


def parse_sequence(text: str, label: str = "") -> PulseSequence:
    tokens = _tokenize(text)
    elements, i = _parse_seq(tokens, 0, text)
    if i != len(tokens):
        tok = tokens[i]
        raise DSLSyntaxError("unmatched ']'", tok.line, tok.column)
    return PulseSequence(tuple(elements), label)


def _parse_seq(tokens: list[_Token], i: int, text: str) -> tuple[list[Element], int]:
    elements: list[Element] = []
    while i < len(tokens) and tokens[i].kind != "close":
        tok = tokens[i]
        if tok.kind == "delay":
            elements.append(Delay(tok.value))
            i += 1
        elif tok.kind == "pulse":
            elements.append(Pulse(tok.value))
            i += 1
        else:
            inner, i = _parse_seq(tokens, i + 1, text)
            if i >= len(tokens):
                raise DSLSyntaxError("group is missing its closing ']'", tok.line, tok.column)
            if tok.value < 1:
                raise DSLSyntaxError("group count must be >= 1", tok.line, tok.column)
            if not inner:
                raise DSLSyntaxError("empty group", tok.line, tok.column)
            elements.extend(inner * tok.value)
            i += 1
    if not elements:
        line, col = (tokens[i].line, tokens[i].column) if i < len(tokens) else _position(text, len(text))
        raise DSLSyntaxError("expected at least one delay or pulse", line, col)
    return elements, i


def _shortest(x: float) -> str:
    s = repr(float(x))
    return s[:-2] if s.endswith(".0") else s


def _degrees_token(phase: float) -> str:
    """Shortest degree string that parses back to exactly ``phase``."""
    deg = math.degrees(phase)
    candidate = deg
    for _ in range(64):
        if wrap_phase(math.radians(float(_shortest(candidate)))) == phase:
            return _shortest(candidate)
        candidate = np.nextafter(candidate, math.inf if wrap_phase(math.radians(candidate)) < phase else -math.inf)
    return _shortest(deg)


def format_sequence(s: PulseSequence) -> str:
    tokens = []
    for el in s.elements:
        if isinstance(el, Delay):
            tokens.append("d" + _shortest(el.duration))
        else:
            name = el.name
            tokens.append(name if not name.startswith("P") else "P" + _degrees_token(el.phase))
    return " ".join(tokens)
