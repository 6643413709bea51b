"""Predicate language: a small SQL WHERE subset over typed attributes.

Grammar (keywords are case-insensitive)::

    predicate  := or_expr
    or_expr    := and_expr ( "OR" and_expr )*
    and_expr   := not_expr ( "AND" not_expr )*
    not_expr   := "NOT" not_expr | primary
    primary    := "(" or_expr ")" | comparison
    comparison := IDENT op literal | IDENT "LIKE" STRING
    op         := "=" | "!=" | "<" | "<=" | ">" | ">="
    literal    := STRING | INT | FLOAT | "true" | "false"

Strings are single-quoted with ``''`` as the escaped quote. LIKE patterns use
``%`` (any run) and ``_`` (one character) and are case-sensitive. Any
comparison touching a null value is false; ``NOT`` is applied afterwards.
Multi-valued attributes (``pfname``, ``lfname``) match when any value does.
"""

from __future__ import annotations

import functools
import operator
import re
from dataclasses import dataclass
from typing import Any, Mapping, Union

from .errors import QuerySyntaxError, QueryTypeError
from .model import INT64_MAX, INT64_MIN, KEYWORDS

COMPARISON_OPS = ("=", "!=", "<", "<=", ">", ">=")

Literal = Union[str, int, float, bool]


@dataclass(frozen=True)
class Comparison:
    attr: str
    op: str
    value: Literal


@dataclass(frozen=True)
class And:
    left: Predicate
    right: Predicate


@dataclass(frozen=True)
class Or:
    left: Predicate
    right: Predicate


@dataclass(frozen=True)
class Not:
    operand: Predicate


Predicate = Union[Comparison, And, Or, Not]

# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<float>-?(?:\d+\.\d*|\.\d+)(?:[eE][+-]?\d+)?|-?\d+[eE][+-]?\d+)
  | (?P<int>-?\d+)
  | (?P<string>'(?:[^']|'')*')
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|!=|<>|=|<|>)
  | (?P<lparen>\()
  | (?P<rparen>\))
    """,
    re.VERBOSE | re.DOTALL,
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    value: Any
    column: int


def _lex(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            if text[pos] == "'":
                raise QuerySyntaxError("unterminated string literal", pos + 1)
            raise QuerySyntaxError(f"unexpected character {text[pos]!r}", pos + 1)
        kind = m.lastgroup
        raw = m.group()
        col = pos + 1
        pos = m.end()
        if kind == "ws":
            continue
        if kind == "int":
            value: Any = int(raw)
            if not INT64_MIN <= value <= INT64_MAX:
                raise QuerySyntaxError("integer literal out of 64-bit range", col)
        elif kind == "float":
            value = float(raw)
            if value in (float("inf"), float("-inf")):
                raise QuerySyntaxError("float literal out of range", col)
        elif kind == "string":
            value = raw[1:-1].replace("''", "'")
        elif kind == "ident":
            lowered = raw.lower()
            if lowered in KEYWORDS:
                kind = lowered
            value = raw
        elif kind == "op":
            value = "!=" if raw == "<>" else raw
        else:
            value = raw
        toks.append(_Tok(kind, raw, value, col))
    toks.append(_Tok("eof", "", None, len(text) + 1))
    return toks


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


class _Parser:
    def __init__(self, text: str) -> None:
        self.toks = _lex(text)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def take(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def fail(self, what: str) -> QuerySyntaxError:
        tok = self.peek()
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        return QuerySyntaxError(f"expected {what}, found {found}", tok.column)

    def parse(self) -> Predicate:
        node = self.or_expr()
        if self.peek().kind != "eof":
            raise self.fail("AND, OR or end of input")
        return node

    def or_expr(self) -> Predicate:
        node = self.and_expr()
        while self.peek().kind == "or":
            self.take()
            node = Or(node, self.and_expr())
        return node

    def and_expr(self) -> Predicate:
        node = self.not_expr()
        while self.peek().kind == "and":
            self.take()
            node = And(node, self.not_expr())
        return node

    def not_expr(self) -> Predicate:
        if self.peek().kind == "not":
            self.take()
            return Not(self.not_expr())
        return self.primary()

    def primary(self) -> Predicate:
        tok = self.peek()
        if tok.kind == "lparen":
            self.take()
            node = self.or_expr()
            if self.peek().kind != "rparen":
                raise self.fail("')'")
            self.take()
            return node
        if tok.kind != "ident":
            raise self.fail("attribute name or '('")
        attr = self.take().value
        op_tok = self.peek()
        if op_tok.kind == "like":
            self.take()
            lit = self.peek()
            if lit.kind != "string":
                raise self.fail("string pattern")
            self.take()
            return Comparison(attr, "LIKE", lit.value)
        if op_tok.kind != "op":
            raise self.fail("comparison operator")
        self.take()
        lit = self.peek()
        if lit.kind in ("string", "int", "float"):
            self.take()
            return Comparison(attr, op_tok.value, lit.value)
        if lit.kind in ("true", "false"):
            self.take()
            return Comparison(attr, op_tok.value, lit.kind == "true")
        raise self.fail("literal")


@functools.lru_cache(maxsize=512)
def parse(text: str) -> Predicate:
    """Parse predicate text into an AST (precedence NOT > AND > OR)."""
    if not isinstance(text, str):
        raise TypeError("predicate text must be a string")
    return _Parser(text).parse()


def as_predicate(p: Predicate | str | None) -> Predicate | None:
    if p is None or isinstance(p, (Comparison, And, Or, Not)):
        return p
    if isinstance(p, str):
        return None if not p.strip() else parse(p)
    raise TypeError(f"not a predicate: {p!r}")


# ---------------------------------------------------------------------------
# Printer
# ---------------------------------------------------------------------------

_PRECEDENCE = {Or: 1, And: 2, Not: 3, Comparison: 4}


def format_literal(value: Literal) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return "'" + value.replace("'", "''") + "'"
    return repr(value)


def to_text(p: Predicate) -> str:
    """Render an AST as predicate text that parses back to the same AST."""
    if isinstance(p, Comparison):
        return f"{p.attr} {p.op} {format_literal(p.value)}"
    if isinstance(p, Not):
        inner = to_text(p.operand)
        if _PRECEDENCE[type(p.operand)] < _PRECEDENCE[Not]:
            inner = f"({inner})"
        return f"NOT {inner}"
    word = "AND" if isinstance(p, And) else "OR"
    prec = _PRECEDENCE[type(p)]
    left, right = to_text(p.left), to_text(p.right)
    if _PRECEDENCE[type(p.left)] < prec:
        left = f"({left})"
    # left-associative: an equal-precedence right child needs parentheses
    if _PRECEDENCE[type(p.right)] <= prec:
        right = f"({right})"
    return f"{left} {word} {right}"


def attributes(p: Predicate) -> set[str]:
    if isinstance(p, Comparison):
        return {p.attr}
    if isinstance(p, Not):
        return attributes(p.operand)
    return attributes(p.left) | attributes(p.right)


# ---------------------------------------------------------------------------
# Typechecking
# ---------------------------------------------------------------------------

CONFLICT = "<conflict>"

CATALOG_PSEUDO_ATTRIBUTES = {"guid": "string", "pfname": "string", "lfname": "string"}


def _literal_type(value: Literal) -> str:
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, int):
        return "int"
    if isinstance(value, float):
        return "float"
    return "string"


def typecheck(p: Predicate, view: Mapping[str, str]) -> Predicate:
    """Check ``p`` against an attribute→type view.

    Returns the predicate ready for evaluation; comparisons against the
    ``guid`` pseudo-attribute get their literal lowercased because file ids
    are case-insensitive on input.
    """
    if isinstance(p, Comparison):
        attr_type = view.get(p.attr)
        if attr_type is None:
            raise QueryTypeError(f"unknown attribute: {p.attr!r}")
        if attr_type == CONFLICT:
            raise QueryTypeError(f"attribute {p.attr!r} has conflicting types across collections")
        lit_type = _literal_type(p.value)
        if p.op == "LIKE":
            if attr_type != "string":
                raise QueryTypeError(f"LIKE requires a string attribute, {p.attr!r} is {attr_type}")
        elif not (lit_type == attr_type or (attr_type == "float" and lit_type == "int")):
            raise QueryTypeError(
                f"type mismatch: {p.attr!r} is {attr_type}, literal is {lit_type}"
            )
        if p.attr == "guid" and p.op != "LIKE":
            lowered = p.value.lower()
            if lowered != p.value:
                return Comparison(p.attr, p.op, lowered)
        return p
    if isinstance(p, Not):
        inner = typecheck(p.operand, view)
        return p if inner is p.operand else Not(inner)
    left, right = typecheck(p.left, view), typecheck(p.right, view)
    if left is p.left and right is p.right:
        return p
    return type(p)(left, right)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

_OPS = {
    "=": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}


@functools.lru_cache(maxsize=1024)
def like_regex(pattern: str) -> re.Pattern[str]:
    parts = []
    for ch in pattern:
        if ch == "%":
            parts.append(".*")
        elif ch == "_":
            parts.append(".")
        else:
            parts.append(re.escape(ch))
    return re.compile("".join(parts), re.DOTALL)


def _compare(op: str, actual: Any, literal: Literal) -> bool:
    if actual is None:
        return False
    if op == "LIKE":
        return like_regex(literal).fullmatch(actual) is not None
    return _OPS[op](actual, literal)


def evaluate(p: Predicate, row: Mapping[str, Any]) -> bool:
    """Evaluate a typechecked predicate against a row (missing key = null)."""
    if isinstance(p, Comparison):
        actual = row.get(p.attr)
        if isinstance(actual, list):
            return any(_compare(p.op, v, p.value) for v in actual)
        return _compare(p.op, actual, p.value)
    if isinstance(p, And):
        return evaluate(p.left, row) and evaluate(p.right, row)
    if isinstance(p, Or):
        return evaluate(p.left, row) or evaluate(p.right, row)
    return not evaluate(p.operand, row)


def prepare(p: Predicate | str | None, view: Mapping[str, str]) -> Predicate | None:
    """Parse (if needed) and typecheck in one step."""
    pred = as_predicate(p)
    return None if pred is None else typecheck(pred, view)


def catalog_view(schema_types: Mapping[str, str]) -> dict[str, str]:
    view = dict(schema_types)
    view.update(CATALOG_PSEUDO_ATTRIBUTES)
    return view
