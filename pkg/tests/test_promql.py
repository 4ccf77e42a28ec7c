import math
import random

import pytest

from src.errors import EvalError, InvalidRange, ParseError
from src.metrics.types import LabelMatcher, MatchOp, MetricKind
from src.promql import Scalar, eval_instant, eval_range, parse, parse_with_diagnostics, pretty, validate
from src.promql.ast import Aggregate, BinaryOp, FnCall, NumberLiteral, Paren, RangeSelector, VectorSelector
from tests.conftest import add_points, series

QUERY_CORPUS = [
    'sum(rate(http_requests_total{code=~"5.."}[5m]))',
    "histogram_quantile(0.99, sum by (le) (rate(latency_bucket[5m])))",
    'sum(rate(vault_requests_total{code!~"5.."}[30d])) / sum(rate(vault_requests_total[30d]))',
    "(1 - sum(rate(a_bucket{le=\"1\"}[1h])) / sum(rate(a_count[1h]))) / 0.01 > bool 14.4",
    "a + b * c - d / e",
    "-x > 3",
    "sum without (instance) (up)",
    "count(up == 1)",
    "clamp_min(avg by (path, code) (queue_depth), 0)",
    "increase(jobs_total[90s])",
    '{__name__="up", service!="vault"}',
    "max(cpu) by (host)",
]


def brute_increase(points, t, window_s):
    values = [v for ts, v in points if t - window_s * 1000 <= ts <= t]
    if len(values) < 2:
        return None
    total = 0.0
    for previous, current in zip(values, values[1:]):
        delta = current - previous
        total += current if delta < 0 else delta
    return total


def random_counters(store, seed, count=3, length=20):
    rng = random.Random(seed)
    fixture = {}
    for code in ("200", "404", "500")[:count]:
        key = series("requests_total", code=code)
        value, points = 0.0, []
        for i in range(length):
            value = rng.uniform(0, 5) if rng.random() < 0.1 else value + rng.randint(0, 30)
            points.append((10 * i, value))
        add_points(store, key, points)
        fixture[key] = [(int(ts * 1000), v) for ts, v in points]
    return fixture


def test_parse_sum_of_rate_shape():
    expr = parse('sum(rate(http_requests_total{code=~"5.."}[5m]))')

    assert isinstance(expr, Aggregate) and expr.op == "sum"
    call = expr.arg
    assert isinstance(call, FnCall) and call.name == "rate"
    (window,) = call.args
    assert isinstance(window, RangeSelector)
    assert window.window_s == 300
    assert window.selector == VectorSelector("http_requests_total", (LabelMatcher("code", MatchOp.RE, "5.."),))


def test_parse_histogram_quantile_query():
    expr = parse("histogram_quantile(0.99, sum by (le) (rate(latency_bucket[5m])))")
    assert isinstance(expr, FnCall)
    assert expr.args[0] == NumberLiteral(0.99)
    assert expr.args[1].grouping == ("le",)


def test_parse_error_points_at_offending_token():
    expr, diagnostics = parse_with_diagnostics("rate(x[5m)")
    assert expr is None
    assert len(diagnostics) == 1
    assert diagnostics[0].span[0] == 9
    with pytest.raises(ParseError):
        parse("rate(x[5m)")


def test_operator_precedence():
    expr = parse("a > b + c * d")
    assert isinstance(expr, BinaryOp) and expr.op == ">"
    assert expr.rhs.op == "+"
    assert expr.rhs.rhs.op == "*"

    grouped = parse("(a + b) * c")
    assert grouped.op == "*"
    assert isinstance(grouped.lhs, Paren)


def test_duration_units():
    assert parse("x[90s]").window_s == 90
    assert parse("x[2h]").window_s == 7200
    assert parse("x[30d]").window_s == 30 * 86400


@pytest.mark.parametrize("query", QUERY_CORPUS)
def test_pretty_round_trip(query):
    expr = parse(query)
    assert parse(pretty(expr)) == expr


def test_rate_of_linear_counter(store):
    add_points(store, series("c"), [(0, 0), (60, 60)])
    result = eval_instant("rate(c[60s])", 60_000, store)
    assert result.values() == [1.0]


def test_increase_with_counter_reset(store):
    add_points(store, series("c"), [(0, 10), (30, 4)])
    result = eval_instant("increase(c[60s])", 30_000, store)
    assert result.values() == [pytest.approx(4.0, abs=1e-12)]
    assert brute_increase([(0, 10.0), (30_000, 4.0)], 30_000, 60) == 4.0


def test_histogram_quantile_interpolation(store):
    for le, count in (("0.1", 50), ("1", 90), ("+Inf", 100)):
        add_points(store, series("latency_seconds_bucket", le=le), [(0, count)])

    median = eval_instant("histogram_quantile(0.5, latency_seconds_bucket)", 0, store)
    assert median.values() == [0.1]

    quantiles = [eval_instant(f"histogram_quantile({q}, latency_seconds_bucket)", 0, store).values()[0]
                 for q in (0.1, 0.5, 0.7, 0.9, 0.95, 0.99)]
    assert quantiles == sorted(quantiles)
    # rank 70 sits 20/40 of the way through the (0.1, 1] bucket
    assert quantiles[2] == pytest.approx(0.1 + 0.9 * 0.5)


def test_selector_respects_lookback(store):
    add_points(store, series("g"), [(0, 5)])
    assert eval_instant("g", 60_000, store).values() == [5.0]
    assert eval_instant("g", 301_000, store).values() == []


def test_eval_range_constant_gauge(store):
    add_points(store, series("g"), [(0, 5), (30, 5), (60, 5)])
    matrix = eval_range("g", 0, 60_000, 30_000, store)
    (points,) = matrix.series.values()
    assert points == [(0, 5.0), (30_000, 5.0), (60_000, 5.0)]


def test_eval_range_empty_store(store):
    assert len(eval_range("g", 0, 60_000, 15_000, store)) == 0


def test_eval_range_rejects_bad_bounds(store):
    with pytest.raises(InvalidRange):
        eval_range("g", 10, 0, 1, store)
    with pytest.raises(InvalidRange):
        eval_range("g", 0, 10, 0, store)


def test_eval_range_matches_repeated_instant(store):
    random_counters(store, seed=5)
    query = "sum by (code) (rate(requests_total[1m]))"
    matrix = eval_range(query, 0, 190_000, 10_000, store)
    for key, points in matrix.series.items():
        for t, value in points:
            assert eval_instant(query, t, store).as_dict()[key] == value


def test_increase_is_rate_times_window(store):
    random_counters(store, seed=9)
    rates = eval_instant("rate(requests_total[1m])", 150_000, store).as_dict()
    increases = eval_instant("increase(requests_total[1m])", 150_000, store).as_dict()
    assert rates.keys() == increases.keys()
    for key, rate in rates.items():
        assert rate >= 0
        assert increases[key] == rate * 60


@pytest.mark.parametrize("seed", range(30))
def test_rate_and_sum_match_brute_force(store, seed):
    fixture = random_counters(store, seed=seed)
    rng = random.Random(seed)
    t = rng.choice(range(20_000, 190_001, 10_000))
    window_s = rng.choice((30, 60, 120))

    rates = eval_instant(f"rate(requests_total[{window_s}s])", t, store).as_dict()
    expected = {}
    for key, points in fixture.items():
        increase = brute_increase(points, t, window_s)
        if increase is not None:
            expected[key.without_name()] = increase / window_s
    assert rates == expected

    total = eval_instant(f"sum(increase(requests_total[{window_s}s]))", t, store).values()
    brute_total = math.fsum(v * window_s for v in expected.values())
    assert total == [pytest.approx(brute_total, rel=1e-12)]


BUCKET_BOUNDS = ("0.05", "0.1", "0.25", "0.5", "1", "2.5", "+Inf")


def brute_bucket_quantile(phi, cumulative):
    """Smallest x whose piecewise-linear bucket CDF reaches phi * total, found by bisection."""
    bounds = [float(b) for b in BUCKET_BOUNDS[:-1]]
    counts = cumulative[:-1]
    rank = phi * cumulative[-1]
    if rank > counts[-1]:
        return bounds[-1]

    def cdf(x):
        lower, below = 0.0, 0.0
        for bound, count in zip(bounds, counts):
            if x <= bound:
                return below + (count - below) * (x - lower) / (bound - lower)
            lower, below = bound, count
        return counts[-1]

    lo, hi = 0.0, bounds[-1]
    for _ in range(200):
        mid = (lo + hi) / 2
        if cdf(mid) >= rank:
            hi = mid
        else:
            lo = mid
    return hi


@pytest.mark.parametrize("seed", range(30))
def test_histogram_quantile_matches_brute_force(store, seed):
    rng = random.Random(seed)
    expected = {}
    phi = round(rng.uniform(0.01, 0.99), 3)
    for host in ("h0", "h1", "h2"):
        running, cumulative = 0, []
        for _ in BUCKET_BOUNDS:
            running += rng.randint(0, 20)
            cumulative.append(running)
        cumulative[-1] += 1
        for le, count in zip(BUCKET_BOUNDS, cumulative):
            add_points(store, series("latency_seconds_bucket", host=host, le=le), [(0, count)])
        expected[host] = brute_bucket_quantile(phi, cumulative)

    result = eval_instant(f"histogram_quantile({phi}, latency_seconds_bucket)", 0, store)

    got = {key.get("host"): value for key, value in result.samples}
    assert got.keys() == expected.keys()
    for host, value in expected.items():
        assert got[host] == pytest.approx(value, abs=1e-9)


@pytest.mark.parametrize("seed", range(30))
def test_one_to_one_matching_matches_brute_force(store, seed):
    rng = random.Random(seed)
    lhs, rhs = {}, {}
    for host in ("h0", "h1", "h2", "h3", "h4"):
        for code in ("200", "500"):
            labels = {"host": host, "code": code}
            if rng.random() < 0.8:
                lhs[tuple(sorted(labels.items()))] = rng.uniform(1, 100)
            if rng.random() < 0.8:
                if rng.random() < 0.2:
                    labels = dict(labels, zone="b")
                rhs[tuple(sorted(labels.items()))] = rng.uniform(1, 100)
    for labels, value in lhs.items():
        add_points(store, series("a", **dict(labels)), [(0, value)])
    for labels, value in rhs.items():
        add_points(store, series("b", **dict(labels)), [(0, value)])
    matched = lhs.keys() & rhs.keys()

    arithmetic = {"+": lambda x, y: x + y, "-": lambda x, y: x - y, "*": lambda x, y: x * y, "/": lambda x, y: x / y}
    for op, fn in arithmetic.items():
        got = {key.labels: v for key, v in eval_instant(f"a {op} b", 0, store).samples}
        assert got == pytest.approx({labels: fn(lhs[labels], rhs[labels]) for labels in matched})

    filtered = eval_instant("a > b", 0, store)
    assert {key.labels: v for key, v in filtered.samples} == {k: lhs[k] for k in matched if lhs[k] > rhs[k]}
    assert {key.metric_name for key, _ in filtered.samples} <= {"a"}

    flags = {key.labels: v for key, v in eval_instant("a > bool b", 0, store).samples}
    assert flags == {k: 1.0 if lhs[k] > rhs[k] else 0.0 for k in matched}


def test_aggregation_identities(counter_store):
    t = 600_000
    grouped = {
        op: eval_instant(f"{op} by (code) (rate(requests_total[5m]))", t, counter_store).as_dict()
        for op in ("sum", "avg", "count")
    }
    for key, total in grouped["sum"].items():
        assert total == pytest.approx(grouped["avg"][key] * grouped["count"][key])

    ungrouped = eval_instant("sum(rate(requests_total[5m]))", t, counter_store).values()
    assert ungrouped == [pytest.approx(1.0 + 0.5 + 0.1)]


def test_regex_matchers_are_anchored(store):
    add_points(store, series("requests_total", code="500"), [(0, 1)])
    add_points(store, series("requests_total", code="5000"), [(0, 1)])
    result = eval_instant('requests_total{code=~"5.."}', 0, store)
    assert [key.get("code") for key, _ in result.samples] == ["500"]


def test_vector_matching_drops_metric_name(counter_store):
    result = eval_instant(
        'rate(requests_total{code="404"}[5m]) / rate(requests_total{code="404"}[5m])', 600_000, counter_store
    )
    assert result.values() == [1.0]

    unmatched = eval_instant(
        'rate(requests_total{code="404"}[5m]) / rate(requests_total{code="200"}[5m])', 600_000, counter_store
    )
    assert len(unmatched) == 0


def test_comparison_filter_and_bool(counter_store):
    filtered = eval_instant("rate(requests_total[5m]) > 0.4", 600_000, counter_store)
    assert sorted(key.get("code") for key, _ in filtered.samples) == ["200", "201"]

    flags = eval_instant("rate(requests_total[5m]) > bool 0.4", 600_000, counter_store).as_dict()
    assert sorted(flags.values()) == [0.0, 1.0, 1.0]


def test_scalar_arithmetic(store):
    value = eval_instant("2 * 3 + 4 > bool 9", 0, store)
    assert value == Scalar(1.0)


def test_nan_samples_are_skipped_by_aggregation(store):
    add_points(store, series("g", host="a"), [(0, float("nan"))])
    add_points(store, series("g", host="b"), [(0, 2)])
    assert eval_instant("sum(g)", 0, store).values() == [2.0]
    assert eval_instant("sum by (host) (g)", 0, store).as_dict().keys() == {series("", host="b")}


def test_rate_over_instant_vector_is_rejected():
    _, diagnostics = parse_with_diagnostics("rate(x)")
    assert diagnostics and diagnostics[0].severity.value == "error"


def test_duplicate_series_after_name_drop(store):
    add_points(store, series("a", x="1"), [(0, 1)])
    add_points(store, series("b", x="1"), [(0, 2)])
    with pytest.raises(EvalError):
        eval_instant('-{x="1"}', 0, store)


def test_validate_ratio_query_ok():
    query = 'sum(rate(vault_requests_total{code!~"5.."}[30d])) / sum(rate(vault_requests_total[30d]))'
    assert validate(query).ok


def test_validate_quantile_out_of_range():
    result = validate("histogram_quantile(2, v)")
    assert not result.ok
    assert "outside [0,1]" in result.errors[0].message


def test_validate_unknown_kind_is_warning_only():
    result = validate("rate(gauge_metric[5m])")
    assert result.ok
    assert len(result.warnings) == 1

    known = validate("rate(queue_depth[5m])", known_kinds={"queue_depth": MetricKind.GAUGE})
    assert known.ok and known.warnings
