"""Recursive-descent parser and static type checker.

Precedence, lowest first: comparison, ``+ -``, ``* /``, unary sign, atoms.
All binary operators are left-associative.
"""
import logging
import math
from typing import List, Optional, Tuple

from src.errors import InvalidSeries, ParseError
from src.metrics.types import LabelMatcher, MatchOp
from src.promql.ast import (
    AGGREGATIONS,
    COMPARISONS,
    FUNCTIONS,
    PRECEDENCE,
    Aggregate,
    BinaryOp,
    Expr,
    FnCall,
    NumberLiteral,
    Paren,
    RangeSelector,
    UnaryOp,
    VectorSelector,
)
from src.promql.diagnostics import Diagnostic, has_errors
from src.promql.lexer import Token, tokenize
from src.utils.durations import parse_duration

logger = logging.getLogger(__name__)

SCALAR, VECTOR, MATRIX = "scalar", "vector", "matrix"


class _Abort(Exception):
    def __init__(self, diagnostic: Diagnostic):
        self.diagnostic = diagnostic


class _Parser:
    def __init__(self, source: str, tokens: List[Token]):
        self.source = source
        self.tokens = tokens
        self.pos = 0

    # token helpers

    @property
    def current(self) -> Token:
        return self.tokens[self.pos]

    def _advance(self) -> Token:
        token = self.tokens[self.pos]
        if token.kind != "eof":
            self.pos += 1
        return token

    def _at(self, kind: str, text: Optional[str] = None) -> bool:
        token = self.current
        return token.kind == kind and (text is None or token.text == text)

    def _fail(self, message: str, token: Optional[Token] = None) -> None:
        token = token or self.current
        end = token.end if token.end > token.start else token.start
        raise _Abort(Diagnostic.error((token.start, end), message))

    def _expect(self, kind: str, text: str) -> Token:
        if not self._at(kind, text):
            found = self.current.text or "end of input"
            self._fail(f"expected '{text}', found '{found}'")
        return self._advance()

    # grammar

    def parse(self) -> Expr:
        expr = self._binary(1)
        if not self._at("eof"):
            self._fail(f"unexpected '{self.current.text}'")
        return expr

    def _binary_op(self) -> Optional[str]:
        token = self.current
        if token.kind == "op" and token.text in PRECEDENCE:
            return token.text
        return None

    def _binary(self, min_prec: int) -> Expr:
        lhs = self._unary()
        while True:
            op = self._binary_op()
            if op is None or PRECEDENCE[op] < min_prec:
                return lhs
            self._advance()
            bool_modifier = False
            if self._at("ident", "bool"):
                bool_token = self._advance()
                if op not in COMPARISONS:
                    self._fail("bool modifier is only allowed on comparisons", bool_token)
                bool_modifier = True
            rhs = self._binary(PRECEDENCE[op] + 1)
            lhs = BinaryOp(op, lhs, rhs, bool_modifier, span=(lhs.span[0], rhs.span[1]))

    def _unary(self) -> Expr:
        if self._at("op", "-") or self._at("op", "+"):
            sign = self._advance()
            arg = self._unary()
            if isinstance(arg, NumberLiteral):
                value = -arg.value if sign.text == "-" else arg.value
                return NumberLiteral(value, span=(sign.start, arg.span[1]))
            return UnaryOp(sign.text, arg, span=(sign.start, arg.span[1]))
        return self._atom()

    def _atom(self) -> Expr:
        token = self.current
        if token.kind == "number":
            self._advance()
            return NumberLiteral(float(token.text), span=(token.start, token.end))
        if token.kind == "punct" and token.text == "(":
            self._advance()
            inner = self._binary(1)
            close = self._expect("punct", ")")
            return Paren(inner, span=(token.start, close.end))
        if token.kind == "punct" and token.text == "{":
            return self._selector(None, token.start)
        if token.kind == "ident":
            if token.text in ("Inf", "NaN"):
                self._advance()
                return NumberLiteral(math.inf if token.text == "Inf" else math.nan, span=(token.start, token.end))
            if token.text in AGGREGATIONS and self._peek_aggregation():
                return self._aggregate()
            if self.tokens[self.pos + 1].kind == "punct" and self.tokens[self.pos + 1].text == "(":
                return self._call()
            if token.text in ("by", "without", "bool"):
                self._fail(f"unexpected keyword '{token.text}'")
            self._advance()
            return self._selector(token.text, token.start)
        if token.kind == "eof":
            self._fail("unexpected end of input")
        self._fail(f"unexpected '{token.text}'")

    def _peek_aggregation(self) -> bool:
        nxt = self.tokens[self.pos + 1]
        return (nxt.kind == "punct" and nxt.text == "(") or (nxt.kind == "ident" and nxt.text in ("by", "without"))

    def _selector(self, name: Optional[str], start: int) -> Expr:
        matchers: List[LabelMatcher] = []
        end = self.tokens[self.pos - 1].end if name is not None else start
        if self._at("punct", "{"):
            self._advance()
            while not self._at("punct", "}"):
                matchers.append(self._matcher())
                if self._at("punct", ","):
                    self._advance()
                elif not self._at("punct", "}"):
                    self._fail("expected ',' or '}' in label matchers")
            end = self._advance().end
        if name is None and not matchers:
            self._fail("vector selector must contain a metric name or a label matcher")
        selector = VectorSelector(name, tuple(matchers), span=(start, end))
        if self._at("punct", "["):
            self._advance()
            duration = self.current
            if duration.kind != "duration":
                self._fail("expected duration like 5m in range selector")
            self._advance()
            window = parse_duration(duration.text)
            if window <= 0:
                self._fail("range window must be positive", duration)
            close = self._expect("punct", "]")
            return RangeSelector(selector, window, span=(start, close.end))
        return selector

    def _matcher(self) -> LabelMatcher:
        name = self.current
        if name.kind != "ident":
            self._fail("expected label name")
        self._advance()
        op = self.current
        if op.kind != "op" or op.text not in ("=", "!=", "=~", "!~"):
            self._fail("expected one of =, !=, =~, !~")
        self._advance()
        value = self.current
        if value.kind != "string":
            self._fail("expected quoted label value")
        self._advance()
        try:
            return LabelMatcher(name.text, MatchOp(op.text), value.text)
        except InvalidSeries as e:
            self._fail(str(e), value)

    def _grouping(self) -> Tuple[Tuple[str, ...], bool]:
        without = self._advance().text == "without"
        self._expect("punct", "(")
        labels: List[str] = []
        while not self._at("punct", ")"):
            if not self._at("ident"):
                self._fail("expected label name in grouping")
            labels.append(self._advance().text)
            if self._at("punct", ","):
                self._advance()
            elif not self._at("punct", ")"):
                self._fail("expected ',' or ')' in grouping")
        self._advance()
        return tuple(labels), without

    def _aggregate(self) -> Expr:
        op = self._advance()
        grouping: Tuple[str, ...] = ()
        without = False
        has_grouping = False
        if self._at("ident", "by") or self._at("ident", "without"):
            grouping, without = self._grouping()
            has_grouping = True
        self._expect("punct", "(")
        arg = self._binary(1)
        close = self._expect("punct", ")")
        end = close.end
        if not has_grouping and (self._at("ident", "by") or self._at("ident", "without")):
            grouping, without = self._grouping()
            has_grouping = True
            end = self.tokens[self.pos - 1].end
        return Aggregate(op.text, arg, grouping, without, has_grouping, span=(op.start, end))

    def _call(self) -> Expr:
        name = self._advance()
        if name.text not in FUNCTIONS:
            self._fail(f"unknown function '{name.text}'", name)
        self._expect("punct", "(")
        args: List[Expr] = []
        while not self._at("punct", ")"):
            args.append(self._binary(1))
            if self._at("punct", ","):
                self._advance()
            elif not self._at("punct", ")"):
                self._fail("expected ',' or ')' in argument list")
        close = self._advance()
        return FnCall(name.text, tuple(args), span=(name.start, close.end))


def type_of(expr: Expr, diagnostics: List[Diagnostic]) -> str:
    """Static type of ``expr``; problems are appended to ``diagnostics``."""
    if isinstance(expr, NumberLiteral):
        return SCALAR
    if isinstance(expr, VectorSelector):
        return VECTOR
    if isinstance(expr, RangeSelector):
        return MATRIX
    if isinstance(expr, Paren):
        return type_of(expr.expr, diagnostics)
    if isinstance(expr, UnaryOp):
        kind = type_of(expr.arg, diagnostics)
        if kind == MATRIX:
            diagnostics.append(Diagnostic.error(expr.span, "unary operator on a range vector"))
        return kind
    if isinstance(expr, Aggregate):
        if type_of(expr.arg, diagnostics) != VECTOR:
            diagnostics.append(Diagnostic.error(expr.arg.span, f"{expr.op} expects an instant vector"))
        return VECTOR
    if isinstance(expr, FnCall):
        return _check_call(expr, diagnostics)
    if isinstance(expr, BinaryOp):
        lhs = type_of(expr.lhs, diagnostics)
        rhs = type_of(expr.rhs, diagnostics)
        if MATRIX in (lhs, rhs):
            diagnostics.append(Diagnostic.error(expr.span, f"operator '{expr.op}' on a range vector"))
            return VECTOR
        if lhs == SCALAR and rhs == SCALAR:
            if expr.is_comparison and not expr.bool_modifier:
                diagnostics.append(Diagnostic.error(expr.span, "comparisons between scalars must use bool"))
            return SCALAR
        return VECTOR
    raise TypeError(f"Unknown node {type(expr).__name__}")


def _check_call(expr: FnCall, diagnostics: List[Diagnostic]) -> str:
    arity = {"rate": 1, "increase": 1, "histogram_quantile": 2, "clamp_min": 2, "clamp_max": 2}[expr.name]
    if len(expr.args) != arity:
        diagnostics.append(
            Diagnostic.error(expr.span, f"{expr.name} expects {arity} argument(s), got {len(expr.args)}")
        )
        return VECTOR
    if expr.name in ("rate", "increase"):
        if not isinstance(expr.args[0], RangeSelector):
            diagnostics.append(Diagnostic.error(expr.args[0].span, f"{expr.name} expects a range vector selector"))
        return VECTOR
    if expr.name == "histogram_quantile":
        phi, buckets = expr.args
        if not isinstance(phi, NumberLiteral):
            diagnostics.append(Diagnostic.error(phi.span, "quantile must be a number literal"))
        elif not 0.0 <= phi.value <= 1.0:
            diagnostics.append(Diagnostic.error(phi.span, f"quantile {phi.value:g} outside [0,1]"))
        if type_of(buckets, diagnostics) != VECTOR:
            diagnostics.append(Diagnostic.error(buckets.span, "histogram_quantile expects an instant vector"))
        return VECTOR
    vector, bound = expr.args
    if type_of(vector, diagnostics) != VECTOR:
        diagnostics.append(Diagnostic.error(vector.span, f"{expr.name} expects an instant vector"))
    if type_of(bound, diagnostics) != SCALAR:
        diagnostics.append(Diagnostic.error(bound.span, f"{expr.name} bound must be a scalar"))
    return VECTOR


def parse_with_diagnostics(query: str) -> Tuple[Optional[Expr], List[Diagnostic]]:
    """Parse and type check; the expression is None whenever an error was found."""
    tokens, diagnostics = tokenize(query)
    if has_errors(diagnostics):
        return None, diagnostics
    try:
        expr = _Parser(query, tokens).parse()
    except _Abort as abort:
        return None, [abort.diagnostic]
    checks: List[Diagnostic] = []
    type_of(expr, checks)
    if has_errors(checks):
        return None, checks
    return expr, checks


def parse(query: str) -> Expr:
    """
    Parse a query string into an AST.

    Args:
        query (str): Query text

    Returns:
        Expr: Root node

    Raises:
        ParseError: With the diagnostics; no partial AST is returned
    """
    expr, diagnostics = parse_with_diagnostics(query)
    if expr is None:
        logger.debug(f"Rejected query {query!r}: {[d.render() for d in diagnostics]}")
        raise ParseError(diagnostics)
    return expr
