"""Query AST nodes and the pretty-printer."""
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple, Union

from src.metrics.types import LabelMatcher, SeriesMatcher
from src.utils.durations import format_duration

Span = Tuple[int, int]

FUNCTIONS = ("rate", "increase", "histogram_quantile", "clamp_min", "clamp_max")
AGGREGATIONS = ("sum", "avg", "min", "max", "count")
COMPARISONS = (">", "<", ">=", "<=", "==", "!=")
ARITHMETIC = ("+", "-", "*", "/")

# binding power, low to high
PRECEDENCE = {op: 1 for op in COMPARISONS}
PRECEDENCE.update({"+": 2, "-": 2, "*": 3, "/": 3})


def _span_field():
    return field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class NumberLiteral:
    value: float
    span: Span = _span_field()


@dataclass(frozen=True)
class VectorSelector:
    name: Optional[str]
    matchers: Tuple[LabelMatcher, ...] = ()
    span: Span = _span_field()

    def series_matcher(self) -> SeriesMatcher:
        return SeriesMatcher(self.name, self.matchers)


@dataclass(frozen=True)
class RangeSelector:
    selector: VectorSelector
    window_s: int
    span: Span = _span_field()


@dataclass(frozen=True)
class FnCall:
    name: str
    args: Tuple["Expr", ...]
    span: Span = _span_field()


@dataclass(frozen=True)
class Aggregate:
    op: str
    arg: "Expr"
    grouping: Tuple[str, ...] = ()
    without: bool = False
    has_grouping: bool = False
    span: Span = _span_field()


@dataclass(frozen=True)
class BinaryOp:
    op: str
    lhs: "Expr"
    rhs: "Expr"
    bool_modifier: bool = False
    span: Span = _span_field()

    @property
    def is_comparison(self) -> bool:
        return self.op in COMPARISONS


@dataclass(frozen=True)
class UnaryOp:
    op: str
    arg: "Expr"
    span: Span = _span_field()


@dataclass(frozen=True)
class Paren:
    expr: "Expr"
    span: Span = _span_field()


Expr = Union[NumberLiteral, VectorSelector, RangeSelector, FnCall, Aggregate, BinaryOp, UnaryOp, Paren]


def _format_number(value: float) -> str:
    if math.isnan(value):
        return "NaN"
    if math.isinf(value):
        return "Inf" if value > 0 else "-Inf"
    if float(value).is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


def _format_selector(node: VectorSelector) -> str:
    inner = ",".join(m.render() for m in node.matchers)
    if node.name is None:
        return "{" + inner + "}"
    return node.name + ("{" + inner + "}" if inner else "")


def pretty(expr: Expr) -> str:
    """Render an expression as query text that parses back to the same AST."""
    if isinstance(expr, NumberLiteral):
        return _format_number(expr.value)
    if isinstance(expr, VectorSelector):
        return _format_selector(expr)
    if isinstance(expr, RangeSelector):
        return f"{_format_selector(expr.selector)}[{format_duration(expr.window_s)}]"
    if isinstance(expr, FnCall):
        return f"{expr.name}({', '.join(pretty(a) for a in expr.args)})"
    if isinstance(expr, Aggregate):
        head = expr.op
        if expr.has_grouping:
            keyword = "without" if expr.without else "by"
            head += f" {keyword} ({', '.join(expr.grouping)})"
        return f"{head} ({pretty(expr.arg)})"
    if isinstance(expr, BinaryOp):
        op = f"{expr.op} bool" if expr.bool_modifier else expr.op
        return f"{pretty(expr.lhs)} {op} {pretty(expr.rhs)}"
    if isinstance(expr, UnaryOp):
        return f"{expr.op}{pretty(expr.arg)}"
    if isinstance(expr, Paren):
        return f"({pretty(expr.expr)})"
    raise TypeError(f"Unknown node {type(expr).__name__}")


def with_range_window(expr: Expr, window_s: int) -> Expr:
    """Copy of ``expr`` with every range selector set to ``window_s`` seconds."""
    if isinstance(expr, RangeSelector):
        return replace(expr, window_s=window_s)
    if isinstance(expr, FnCall):
        return replace(expr, args=tuple(with_range_window(a, window_s) for a in expr.args))
    if isinstance(expr, Aggregate):
        return replace(expr, arg=with_range_window(expr.arg, window_s))
    if isinstance(expr, BinaryOp):
        return replace(expr, lhs=with_range_window(expr.lhs, window_s), rhs=with_range_window(expr.rhs, window_s))
    if isinstance(expr, UnaryOp):
        return replace(expr, arg=with_range_window(expr.arg, window_s))
    if isinstance(expr, Paren):
        return replace(expr, expr=with_range_window(expr.expr, window_s))
    return expr


def walk(expr: Expr):
    """Yield every node, parents first."""
    yield expr
    if isinstance(expr, RangeSelector):
        yield expr.selector
    elif isinstance(expr, FnCall):
        for arg in expr.args:
            yield from walk(arg)
    elif isinstance(expr, (Aggregate, UnaryOp)):
        yield from walk(expr.arg)
    elif isinstance(expr, BinaryOp):
        yield from walk(expr.lhs)
        yield from walk(expr.rhs)
    elif isinstance(expr, Paren):
        yield from walk(expr.expr)
