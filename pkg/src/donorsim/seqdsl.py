"""Small text DSL for pulse sequences.

Grammar (whitespace-insensitive, ``#`` starts a line comment)::

    program  :=  "seq" IDENT "{" stmt* "}"
    stmt     :=  cycle | pulse | delay
    cycle    :=  "cycle" IDENT "[" NUMBER ("," NUMBER)* "]" ";"
    pulse    :=  "pulse" IDENT? "angle=" NUMBER "phase=" NUMBER ("dur=" TIME)? ";"
    delay    :=  "delay" (TIME | IDENT) ";"
    TIME     :=  NUMBER ("ns" | "us" | "ms" | "s")

Angles and phases are degrees in source text and radians in compiled
programs.  A TIME literal attaches its unit directly to the number
("250us").  ``pretty_print`` emits a canonical form (one statement per
line, numbers without trailing zeros) and ``parse`` inverts it exactly:
``parse(pretty_print(ast))`` is structurally identical to ``ast``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Mapping, Union

from .program import Delay, PhaseCycle, Pulse, PulseProgram, UnboundSymbolError

TIME_UNITS = {"ns": 1e-9, "us": 1e-6, "ms": 1e-3, "s": 1.0}

KEYWORDS = ("seq", "cycle", "pulse", "delay")


class ParseError(ValueError):
    """Syntax or lexical error with a 1-based source position."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.message = message
        self.line = line
        self.col = col


class CompileError(ValueError):
    """The AST failed validation and cannot be lowered to a program."""


@dataclass(frozen=True)
class Span:
    """Half-open [start, end) character range plus 1-based start position."""

    start: int
    end: int
    line: int
    col: int


@dataclass(frozen=True)
class TimeLiteral:
    value: float
    unit: str

    def __post_init__(self) -> None:
        if self.unit not in TIME_UNITS:
            raise ValueError(f"unknown time unit {self.unit!r}")
        if not math.isfinite(self.value):
            raise ValueError("time value must be finite")

    def seconds(self) -> float:
        return self.value * TIME_UNITS[self.unit]


@dataclass(frozen=True)
class CycleStmt:
    label: str
    phases_deg: tuple[float, ...]
    span: Span | None = field(default=None, compare=False)


@dataclass(frozen=True)
class PulseStmt:
    label: str | None
    angle_deg: float
    phase_deg: float
    duration: TimeLiteral | None = None
    span: Span | None = field(default=None, compare=False)


@dataclass(frozen=True)
class DelayStmt:
    duration: TimeLiteral | None = None
    symbol: str | None = None
    span: Span | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if (self.duration is None) == (self.symbol is None):
            raise ValueError("delay statement needs exactly one of duration or symbol")


Statement = Union[CycleStmt, PulseStmt, DelayStmt]


@dataclass(frozen=True)
class SequenceAst:
    name: str
    statements: tuple[Statement, ...]
    span: Span | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    message: str
    line: int
    col: int

    def __str__(self) -> str:
        return f"{self.line}:{self.col}: {self.severity}: {self.message}"


# --- lexer -----------------------------------------------------------------

@dataclass(frozen=True)
class _Token:
    kind: str  # IDENT NUMBER TIME PUNCT EOF
    text: str
    value: object
    span: Span


_NUMBER_RE = re.compile(r"-?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_PUNCT = set("{}[];,=")


def _lex(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    line = 1
    line_start = 0

    def here(start: int, end: int) -> Span:
        return Span(start=start, end=end, line=line, col=start - line_start + 1)

    n = len(text)
    while pos < n:
        ch = text[pos]
        if ch == "\n":
            pos += 1
            line += 1
            line_start = pos
            continue
        if ch in " \t\r":
            pos += 1
            continue
        if ch == "#":
            while pos < n and text[pos] != "\n":
                pos += 1
            continue
        if ch in _PUNCT:
            tokens.append(_Token("PUNCT", ch, ch, here(pos, pos + 1)))
            pos += 1
            continue
        m = _NUMBER_RE.match(text, pos)
        if m:
            number_text = m.group(0)
            end = m.end()
            suffix = _IDENT_RE.match(text, end)
            if suffix:
                unit = suffix.group(0)
                if unit not in TIME_UNITS:
                    raise ParseError(
                        f"unknown unit {unit!r} (expected one of {sorted(TIME_UNITS)})",
                        line, end - line_start + 1,
                    )
                lit = TimeLiteral(value=float(number_text), unit=unit)
                tokens.append(
                    _Token("TIME", text[pos:suffix.end()], lit, here(pos, suffix.end()))
                )
                pos = suffix.end()
            else:
                tokens.append(
                    _Token("NUMBER", number_text, float(number_text), here(pos, end))
                )
                pos = end
            continue
        m = _IDENT_RE.match(text, pos)
        if m:
            tokens.append(_Token("IDENT", m.group(0), m.group(0), here(pos, m.end())))
            pos = m.end()
            continue
        raise ParseError(f"unexpected character {ch!r}", line, pos - line_start + 1)
    tokens.append(_Token("EOF", "", None, here(pos, pos)))
    return tokens


# --- parser ----------------------------------------------------------------

class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        if tok.kind != "EOF":
            self.pos += 1
        return tok

    def error(self, message: str, tok: _Token | None = None) -> ParseError:
        tok = tok or self.peek()
        return ParseError(message, tok.span.line, tok.span.col)

    def expect_punct(self, ch: str) -> _Token:
        tok = self.peek()
        if tok.kind != "PUNCT" or tok.text != ch:
            raise self.error(f"expected {ch!r}, found {tok.text or 'end of input'!r}")
        return self.advance()

    def expect_ident(self, what: str = "identifier") -> _Token:
        tok = self.peek()
        if tok.kind != "IDENT":
            raise self.error(f"expected {what}, found {tok.text or 'end of input'!r}")
        return self.advance()

    def expect_number(self, what: str = "number") -> _Token:
        tok = self.peek()
        if tok.kind != "NUMBER":
            raise self.error(f"expected {what}, found {tok.text or 'end of input'!r}")
        return self.advance()

    def expect_keyword(self, word: str) -> _Token:
        tok = self.peek()
        if tok.kind != "IDENT" or tok.text != word:
            raise self.error(f"expected {word!r}, found {tok.text or 'end of input'!r}")
        return self.advance()

    def expect_key_value_number(self, key: str) -> float:
        tok = self.peek()
        if tok.kind != "IDENT" or tok.text != key:
            raise self.error(f"expected '{key}=', found {tok.text or 'end of input'!r}")
        self.advance()
        self.expect_punct("=")
        return float(self.expect_number().value)

    def parse_sequence(self) -> SequenceAst:
        start = self.peek().span
        self.expect_keyword("seq")
        name = self.expect_ident("sequence name").text
        self.expect_punct("{")
        statements: list[Statement] = []
        while True:
            tok = self.peek()
            if tok.kind == "PUNCT" and tok.text == "}":
                closing = self.advance()
                break
            if tok.kind == "EOF":
                raise self.error("unexpected end of input inside sequence body")
            statements.append(self.parse_statement())
        span = Span(start.start, closing.span.end, start.line, start.col)
        return SequenceAst(name=name, statements=tuple(statements), span=span)

    def parse_statement(self) -> Statement:
        tok = self.peek()
        if tok.kind != "IDENT":
            raise self.error(
                f"expected a statement keyword {KEYWORDS[1:]}, found {tok.text!r}"
            )
        if tok.text == "cycle":
            return self.parse_cycle()
        if tok.text == "pulse":
            return self.parse_pulse()
        if tok.text == "delay":
            return self.parse_delay()
        raise self.error(
            f"expected one of {KEYWORDS[1:]}, found {tok.text!r}"
        )

    def parse_cycle(self) -> CycleStmt:
        start = self.advance().span  # 'cycle'
        label = self.expect_ident("cycle label").text
        self.expect_punct("[")
        phases = [float(self.expect_number("phase offset").value)]
        while True:
            tok = self.peek()
            if tok.kind == "PUNCT" and tok.text == ",":
                self.advance()
                phases.append(float(self.expect_number("phase offset").value))
                continue
            break
        self.expect_punct("]")
        end = self.expect_punct(";").span
        return CycleStmt(
            label=label, phases_deg=tuple(phases),
            span=Span(start.start, end.end, start.line, start.col),
        )

    def parse_pulse(self) -> PulseStmt:
        start = self.advance().span  # 'pulse'
        label = None
        tok = self.peek()
        if tok.kind == "IDENT" and tok.text not in ("angle",):
            label = self.advance().text
        angle = self.expect_key_value_number("angle")
        phase = self.expect_key_value_number("phase")
        duration = None
        tok = self.peek()
        if tok.kind == "IDENT" and tok.text == "dur":
            self.advance()
            self.expect_punct("=")
            time_tok = self.peek()
            if time_tok.kind != "TIME":
                raise self.error(
                    f"expected time literal (e.g. 250us), found {time_tok.text!r}"
                )
            duration = self.advance().value
        end = self.expect_punct(";").span
        return PulseStmt(
            label=label, angle_deg=angle, phase_deg=phase, duration=duration,
            span=Span(start.start, end.end, start.line, start.col),
        )

    def parse_delay(self) -> DelayStmt:
        start = self.advance().span  # 'delay'
        tok = self.peek()
        if tok.kind == "TIME":
            self.advance()
            duration, symbol = tok.value, None
        elif tok.kind == "IDENT":
            self.advance()
            duration, symbol = None, tok.text
        elif tok.kind == "NUMBER":
            raise self.error("delay needs a unit (ns, us, ms or s) or a symbol", tok)
        else:
            raise self.error(f"expected time literal or symbol, found {tok.text!r}")
        end = self.expect_punct(";").span
        return DelayStmt(
            duration=duration, symbol=symbol,
            span=Span(start.start, end.end, start.line, start.col),
        )


def parse(text: str) -> SequenceAst:
    """Parse exactly one sequence; raises ParseError with line:col positions."""
    parser = _Parser(_lex(text))
    ast = parser.parse_sequence()
    trailing = parser.peek()
    if trailing.kind == "IDENT" and trailing.text == "seq":
        lookahead = parser.tokens[parser.pos + 1]
        if lookahead.kind == "IDENT" and lookahead.text == ast.name:
            raise parser.error(f"duplicate sequence name {ast.name!r}", lookahead)
        raise parser.error("multiple sequences in one document", trailing)
    if trailing.kind != "EOF":
        raise parser.error(f"unexpected trailing input {trailing.text!r}", trailing)
    return ast


# --- validation ------------------------------------------------------------

def validate(ast: SequenceAst) -> list[Diagnostic]:
    """Structural checks beyond the grammar; returns diagnostics, never raises."""
    diags: list[Diagnostic] = []

    def where(span: Span | None) -> tuple[int, int]:
        return (span.line, span.col) if span else (0, 0)

    pulse_labels: dict[str, int] = {}
    for stmt in ast.statements:
        if isinstance(stmt, PulseStmt) and stmt.label:
            pulse_labels[stmt.label] = pulse_labels.get(stmt.label, 0) + 1

    seen_cycles: set[str] = set()
    for stmt in ast.statements:
        line, col = where(stmt.span)
        if isinstance(stmt, CycleStmt):
            if stmt.label in seen_cycles:
                diags.append(Diagnostic("error", f"duplicate cycle label {stmt.label!r}", line, col))
            seen_cycles.add(stmt.label)
            count = pulse_labels.get(stmt.label, 0)
            if count != 1:
                diags.append(Diagnostic(
                    "error",
                    f"cycle {stmt.label!r} must reference exactly one pulse, found {count}",
                    line, col,
                ))
            if any(not math.isfinite(p) for p in stmt.phases_deg):
                diags.append(Diagnostic("error", "cycle phases must be finite", line, col))
        elif isinstance(stmt, PulseStmt):
            if not 0.0 < stmt.angle_deg <= 360.0:
                diags.append(Diagnostic(
                    "error",
                    f"pulse angle must lie in (0, 360] degrees, got {stmt.angle_deg:g}",
                    line, col,
                ))
            if not math.isfinite(stmt.phase_deg):
                diags.append(Diagnostic("error", "pulse phase must be finite", line, col))
            if stmt.duration is not None and stmt.duration.seconds() <= 0:
                diags.append(Diagnostic("error", "pulse duration must be > 0", line, col))
        elif isinstance(stmt, DelayStmt):
            if stmt.duration is not None and stmt.duration.seconds() < 0:
                diags.append(Diagnostic("error", "delay duration must be >= 0", line, col))
            if stmt.symbol is not None and stmt.symbol in seen_cycles:
                diags.append(Diagnostic(
                    "warning",
                    f"delay symbol {stmt.symbol!r} shadows a cycle label",
                    line, col,
                ))
    for label, count in pulse_labels.items():
        if count > 1 and label not in seen_cycles:
            first = next(
                s for s in ast.statements if isinstance(s, PulseStmt) and s.label == label
            )
            line, col = where(first.span)
            diags.append(Diagnostic("warning", f"duplicate pulse label {label!r}", line, col))
    return diags


# --- lowering --------------------------------------------------------------

def compile(ast: SequenceAst, bindings: Mapping[str, float] | None = None) -> PulseProgram:  # noqa: A001
    """Lower an AST to a PulseProgram (degrees -> radians, TIME -> seconds).

    With ``bindings=None`` symbolic delays stay symbolic; passing a mapping
    (even an empty one) requests concrete timing, and any symbol missing
    from it raises UnboundSymbolError.
    """
    errors = [d for d in validate(ast) if d.severity == "error"]
    if errors:
        raise CompileError("; ".join(str(d) for d in errors))
    events: list[Pulse | Delay] = []
    for stmt in ast.statements:
        if isinstance(stmt, CycleStmt):
            continue
        if isinstance(stmt, PulseStmt):
            events.append(Pulse(
                angle_rad=math.radians(stmt.angle_deg),
                phase_rad=math.radians(stmt.phase_deg),
                duration_s=stmt.duration.seconds() if stmt.duration else None,
                label=stmt.label,
            ))
        else:
            if stmt.symbol is not None:
                if bindings is None:
                    events.append(Delay(symbol=stmt.symbol))
                elif stmt.symbol in bindings:
                    events.append(Delay(duration_s=float(bindings[stmt.symbol])))
                else:
                    raise UnboundSymbolError(
                        f"unbound delay symbol {stmt.symbol!r} in concrete mode"
                    )
            else:
                events.append(Delay(duration_s=stmt.duration.seconds()))
    cycles = tuple(
        PhaseCycle(
            pulse_label=stmt.label,
            offsets_rad=tuple(math.radians(p) for p in stmt.phases_deg),
        )
        for stmt in ast.statements if isinstance(stmt, CycleStmt)
    )
    return PulseProgram(name=ast.name, events=tuple(events), cycles=cycles)


# --- canonical form --------------------------------------------------------

def _format_number(x: float) -> str:
    if x == int(x) and abs(x) < 1e16:
        return str(int(x))
    return repr(float(x))


def _format_time(lit: TimeLiteral) -> str:
    return f"{_format_number(lit.value)}{lit.unit}"


def _format_statement(stmt: Statement) -> str:
    if isinstance(stmt, CycleStmt):
        phases = ", ".join(_format_number(p) for p in stmt.phases_deg)
        return f"cycle {stmt.label} [{phases}];"
    if isinstance(stmt, PulseStmt):
        parts = ["pulse"]
        if stmt.label:
            parts.append(stmt.label)
        parts.append(f"angle={_format_number(stmt.angle_deg)}")
        parts.append(f"phase={_format_number(stmt.phase_deg)}")
        if stmt.duration is not None:
            parts.append(f"dur={_format_time(stmt.duration)}")
        return " ".join(parts) + ";"
    if stmt.symbol is not None:
        return f"delay {stmt.symbol};"
    return f"delay {_format_time(stmt.duration)};"


def pretty_print(ast: SequenceAst) -> str:
    """Canonical text: one statement per line; ``parse`` inverts it exactly."""
    if not ast.statements:
        return f"seq {ast.name} {{ }}\n"
    lines = [f"seq {ast.name} {{"]
    lines.extend(f"  {_format_statement(stmt)}" for stmt in ast.statements)
    lines.append("}")
    return "\n".join(lines) + "\n"


#: Canonical phase-cycled Hahn echo source text.
HAHN_TEXT = """\
seq hahn {
  cycle p1 [0, 180];
  pulse p1 angle=90 phase=0;
  delay tau;
  pulse angle=180 phase=0;
  delay tau;
  pulse angle=90 phase=0;
}
"""
