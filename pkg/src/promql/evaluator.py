"""Query evaluation against a store snapshot.

Range functions use the samples with ``t - w <= ts <= t``. ``rate`` is the
sum of positive deltas divided by the window in seconds, with a negative
delta (counter reset) counting as the current value; there is no
extrapolation to the window edges. ``increase`` is ``rate * w``.
"""
import logging
import math
import operator
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple, Union

from src.errors import EvalError, InvalidRange
from src.metrics.store import StoreSnapshot, TimeSeriesStore
from src.metrics.types import SeriesKey
from src.promql.ast import (
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
from src.promql.parser import parse

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Scalar:
    value: float


@dataclass
class InstantVector:
    samples: List[Tuple[SeriesKey, float]] = field(default_factory=list)

    def as_dict(self) -> Dict[SeriesKey, float]:
        return dict(self.samples)

    def values(self) -> List[float]:
        return [value for _, value in self.samples]

    def __len__(self) -> int:
        return len(self.samples)


@dataclass
class Matrix:
    series: Dict[SeriesKey, List[Tuple[int, float]]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.series)


QueryValue = Union[Scalar, InstantVector, Matrix]
Store = Union[TimeSeriesStore, StoreSnapshot]


def _safe_div(a: float, b: float) -> float:
    if b == 0:
        if a == 0 or math.isnan(a):
            return math.nan
        return math.copysign(math.inf, a) * math.copysign(1.0, b)
    return a / b


_ARITHMETIC: Dict[str, Callable[[float, float], float]] = {
    "+": operator.add,
    "-": operator.sub,
    "*": operator.mul,
    "/": _safe_div,
}
_COMPARISON: Dict[str, Callable[[float, float], bool]] = {
    ">": operator.gt,
    "<": operator.lt,
    ">=": operator.ge,
    "<=": operator.le,
    "==": operator.eq,
    "!=": operator.ne,
}


def _snapshot(store: Store) -> StoreSnapshot:
    return store if isinstance(store, StoreSnapshot) else store.snapshot()


def _vector(samples: List[Tuple[SeriesKey, float]]) -> InstantVector:
    samples.sort(key=lambda item: item[0])
    for previous, current in zip(samples, samples[1:]):
        if previous[0] == current[0]:
            raise EvalError(f"vector contains duplicate series {current[0]} after dropping the metric name")
    return InstantVector(samples)


def counter_increase(values: List[float]) -> float:
    """Sum of deltas; a negative delta is a reset and counts as the current value."""
    total = 0.0
    for previous, current in zip(values, values[1:]):
        delta = current - previous
        total += current if delta < 0 else delta
    return total


class Evaluator:
    """Evaluates one expression tree at a single timestamp."""

    def __init__(self, snapshot: StoreSnapshot, t: int):
        self.snapshot = snapshot
        self.t = t

    def eval(self, expr: Expr) -> QueryValue:
        if isinstance(expr, NumberLiteral):
            return Scalar(expr.value)
        if isinstance(expr, Paren):
            return self.eval(expr.expr)
        if isinstance(expr, VectorSelector):
            return self._select(expr)
        if isinstance(expr, RangeSelector):
            return Matrix(self._range(expr))
        if isinstance(expr, FnCall):
            return self._call(expr)
        if isinstance(expr, Aggregate):
            return self._aggregate(expr)
        if isinstance(expr, UnaryOp):
            return self._unary(expr)
        if isinstance(expr, BinaryOp):
            return self._binary(expr)
        raise EvalError(f"Unknown node {type(expr).__name__}")

    def _expect_vector(self, value: QueryValue, where: str) -> InstantVector:
        if not isinstance(value, InstantVector):
            raise EvalError(f"{where} expects an instant vector, got {type(value).__name__}")
        return value

    # selectors

    def _select(self, node: VectorSelector) -> InstantVector:
        samples = []
        for key in self.snapshot.matching(node.series_matcher()):
            point = self.snapshot.latest(key, self.t)
            if point is not None:
                samples.append((key, point[1]))
        return InstantVector(samples)

    def _range(self, node: RangeSelector) -> Dict[SeriesKey, List[Tuple[int, float]]]:
        start = self.t - node.window_s * 1000
        out = {}
        for key in self.snapshot.matching(node.selector.series_matcher()):
            timestamps, values = self.snapshot.points(key, start, self.t)
            if timestamps:
                out[key] = list(zip(timestamps, values))
        return out

    # functions

    def rate(self, node: RangeSelector) -> InstantVector:
        samples = []
        for key, points in self._range(node).items():
            if len(points) < 2:
                continue
            increase = counter_increase([value for _, value in points])
            samples.append((key.without_name(), increase / node.window_s))
        return _vector(samples)

    def _call(self, node: FnCall) -> QueryValue:
        if node.name in ("rate", "increase"):
            arg = node.args[0] if len(node.args) == 1 else None
            if not isinstance(arg, RangeSelector):
                raise EvalError(f"{node.name} expects a range vector selector")
            rates = self.rate(arg)
            if node.name == "rate":
                return rates
            return InstantVector([(key, value * arg.window_s) for key, value in rates.samples])
        if node.name == "histogram_quantile":
            phi = self.eval(node.args[0])
            if not isinstance(phi, Scalar):
                raise EvalError("histogram_quantile expects a scalar quantile")
            buckets = self._expect_vector(self.eval(node.args[1]), "histogram_quantile")
            return histogram_quantile(phi.value, buckets)
        if node.name in ("clamp_min", "clamp_max"):
            vector = self._expect_vector(self.eval(node.args[0]), node.name)
            bound = self.eval(node.args[1])
            if not isinstance(bound, Scalar):
                raise EvalError(f"{node.name} expects a scalar bound")
            pick = max if node.name == "clamp_min" else min
            return _vector([
                (key.without_name(), value if math.isnan(value) else pick(value, bound.value))
                for key, value in vector.samples
            ])
        raise EvalError(f"Unknown function {node.name}")

    # aggregation

    def _aggregate(self, node: Aggregate) -> InstantVector:
        vector = self._expect_vector(self.eval(node.arg), node.op)
        groups: Dict[SeriesKey, List[float]] = {}
        for key, value in sorted(vector.samples, key=lambda item: item[0]):
            if node.without:
                drop = set(node.grouping)
                labels = {n: v for n, v in key.labels if n not in drop}
            else:
                keep = set(node.grouping)
                labels = {n: v for n, v in key.labels if n in keep}
            group = groups.setdefault(SeriesKey.of("", labels), [])
            if not math.isnan(value):
                group.append(value)

        samples = []
        for group_key, values in groups.items():
            if not values:
                continue
            if node.op == "sum":
                result = math.fsum(values)
            elif node.op == "avg":
                result = math.fsum(values) / len(values)
            elif node.op == "min":
                result = min(values)
            elif node.op == "max":
                result = max(values)
            elif node.op == "count":
                result = float(len(values))
            else:
                raise EvalError(f"Unknown aggregation {node.op}")
            samples.append((group_key, result))
        return _vector(samples)

    # operators

    def _unary(self, node: UnaryOp) -> QueryValue:
        value = self.eval(node.arg)
        if node.op == "+":
            return value
        if isinstance(value, Scalar):
            return Scalar(-value.value)
        vector = self._expect_vector(value, "unary minus")
        return _vector([(key.without_name(), -v) for key, v in vector.samples])

    def _binary(self, node: BinaryOp) -> QueryValue:
        lhs = self.eval(node.lhs)
        rhs = self.eval(node.rhs)
        if isinstance(lhs, Matrix) or isinstance(rhs, Matrix):
            raise EvalError(f"operator '{node.op}' on a range vector")

        if isinstance(lhs, Scalar) and isinstance(rhs, Scalar):
            if node.is_comparison:
                return Scalar(1.0 if _COMPARISON[node.op](lhs.value, rhs.value) else 0.0)
            return Scalar(_ARITHMETIC[node.op](lhs.value, rhs.value))

        if isinstance(lhs, Scalar) or isinstance(rhs, Scalar):
            return self._vector_scalar(node, lhs, rhs)
        return self._vector_vector(node, lhs, rhs)

    def _apply(self, node: BinaryOp, key: SeriesKey, a: float, b: float, keep: float) -> Optional[Tuple[SeriesKey, float]]:
        if not node.is_comparison:
            return key.without_name(), _ARITHMETIC[node.op](a, b)
        hit = _COMPARISON[node.op](a, b)
        if node.bool_modifier:
            return key.without_name(), 1.0 if hit else 0.0
        return (key, keep) if hit else None

    def _vector_scalar(self, node: BinaryOp, lhs: QueryValue, rhs: QueryValue) -> InstantVector:
        samples = []
        if isinstance(lhs, InstantVector):
            for key, value in lhs.samples:
                item = self._apply(node, key, value, rhs.value, value)
                if item is not None:
                    samples.append(item)
        else:
            for key, value in rhs.samples:
                item = self._apply(node, key, lhs.value, value, value)
                if item is not None:
                    samples.append(item)
        return _vector(samples)

    def _vector_vector(self, node: BinaryOp, lhs: InstantVector, rhs: InstantVector) -> InstantVector:
        right: Dict[SeriesKey, float] = {}
        for key, value in rhs.samples:
            signature = key.without_name()
            if signature in right:
                raise EvalError(f"many-to-many matching: duplicate series {signature} on the right-hand side")
            right[signature] = value
        seen = set()
        samples = []
        for key, value in lhs.samples:
            signature = key.without_name()
            if signature in seen:
                raise EvalError(f"many-to-many matching: duplicate series {signature} on the left-hand side")
            seen.add(signature)
            if signature not in right:
                continue
            item = self._apply(node, key, value, right[signature], value)
            if item is not None:
                samples.append(item)
        return _vector(samples)


def histogram_quantile(phi: float, buckets: InstantVector) -> InstantVector:
    """Quantile estimate by linear interpolation inside the bucket holding the rank."""
    groups: Dict[SeriesKey, List[Tuple[float, float]]] = {}
    for key, value in buckets.samples:
        le = key.get("le")
        if le is None:
            continue
        try:
            bound = float(le)
        except ValueError:
            continue
        labels = {n: v for n, v in key.labels if n != "le"}
        groups.setdefault(SeriesKey.of("", labels), []).append((bound, value))

    samples = []
    for group_key, points in groups.items():
        samples.append((group_key, _bucket_quantile(phi, sorted(points))))
    return _vector(samples)


def _bucket_quantile(phi: float, points: List[Tuple[float, float]]) -> float:
    if not points or not math.isinf(points[-1][0]):
        return math.nan
    bounds = [bound for bound, _ in points]
    counts = []
    running = 0.0
    for _, count in points:
        running = max(running, count)
        counts.append(running)
    total = counts[-1]
    if total <= 0 or math.isnan(total):
        return math.nan
    rank = phi * total
    idx = next(i for i, count in enumerate(counts) if count >= rank)
    if math.isinf(bounds[idx]):
        return bounds[idx - 1] if idx > 0 else math.nan
    lower = bounds[idx - 1] if idx > 0 else 0.0
    below = counts[idx - 1] if idx > 0 else 0.0
    width = counts[idx] - below
    if width <= 0:
        return lower
    return lower + (bounds[idx] - lower) * (rank - below) / width


def eval_instant(expr: Union[Expr, str], t: int, store: Store) -> QueryValue:
    """
    Evaluate a query at timestamp ``t`` (ms).

    Args:
        expr (Expr | str): Parsed expression or query text
        t (int): Evaluation time in milliseconds
        store: TimeSeriesStore or a snapshot of one

    Returns:
        QueryValue: Scalar, InstantVector or Matrix
    """
    if isinstance(expr, str):
        expr = parse(expr)
    return Evaluator(_snapshot(store), t).eval(expr)


def eval_range(expr: Union[Expr, str], start: int, end: int, step: int, store: Store) -> Matrix:
    """Evaluate at ``start, start + step, ... <= end`` (all ms) and assemble per series."""
    if start > end:
        raise InvalidRange(f"start {start} > end {end}")
    if step <= 0:
        raise InvalidRange(f"step must be positive, got {step}")
    if isinstance(expr, str):
        expr = parse(expr)
    snapshot = _snapshot(store)
    result: Dict[SeriesKey, List[Tuple[int, float]]] = {}
    t = start
    while t <= end:
        value = Evaluator(snapshot, t).eval(expr)
        if isinstance(value, Scalar):
            result.setdefault(SeriesKey(""), []).append((t, value.value))
        elif isinstance(value, InstantVector):
            for key, v in value.samples:
                result.setdefault(key, []).append((t, v))
        else:
            raise EvalError("range evaluation of a range vector expression")
        t += step
    return Matrix(dict(sorted(result.items())))
