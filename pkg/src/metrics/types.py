"""Core metric types: series keys, samples, families and matchers."""
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Mapping, Optional, Tuple

from src.errors import InvalidSeries

METRIC_NAME_RE = re.compile(r"^[a-zA-Z_:][a-zA-Z0-9_:]*$")
LABEL_NAME_RE = re.compile(r"^[a-zA-Z_][a-zA-Z0-9_]*$")


def escape_label_value(value: str) -> str:
    return value.replace("\\", "\\\\").replace("\"", "\\\"").replace("\n", "\\n")


@dataclass(frozen=True, order=True)
class SeriesKey:
    """Metric name plus labels sorted by label name.

    An empty metric name marks a derived series (a query result whose name
    was dropped by a function, an aggregation or arithmetic).
    """
    metric_name: str
    labels: Tuple[Tuple[str, str], ...] = ()

    def __post_init__(self):
        if self.metric_name and not METRIC_NAME_RE.match(self.metric_name):
            raise InvalidSeries(f"Invalid metric name: {self.metric_name!r}")
        names = [name for name, _ in self.labels]
        if len(set(names)) != len(names):
            raise InvalidSeries(f"Duplicate label names in {self.metric_name}: {names}")
        for name in names:
            if not LABEL_NAME_RE.match(name):
                raise InvalidSeries(f"Invalid label name: {name!r}")
        if names != sorted(names):
            object.__setattr__(self, "labels", tuple(sorted(self.labels)))

    @classmethod
    def of(cls, metric_name: str, labels: Optional[Mapping[str, str]] = None) -> "SeriesKey":
        return cls(metric_name, tuple(sorted((labels or {}).items())))

    @property
    def label_map(self) -> Dict[str, str]:
        return dict(self.labels)

    def get(self, label: str, default: Optional[str] = None) -> Optional[str]:
        for name, value in self.labels:
            if name == label:
                return value
        return default

    def without_name(self) -> "SeriesKey":
        return SeriesKey("", self.labels)

    def canonical(self) -> str:
        """``name{a="x",b="y"}`` with exposition-format escapes."""
        if not self.labels:
            return self.metric_name
        inner = ",".join(f'{name}="{escape_label_value(value)}"' for name, value in self.labels)
        return f"{self.metric_name}{{{inner}}}"

    def __str__(self) -> str:
        return self.canonical()


@dataclass(frozen=True)
class MetricSample:
    series: SeriesKey
    timestamp: int
    value: float


class MetricKind(str, Enum):
    COUNTER = "counter"
    GAUGE = "gauge"
    HISTOGRAM = "histogram"


@dataclass(frozen=True)
class MetricFamily:
    name: str
    kind: MetricKind
    help: Optional[str] = None


class MatchOp(str, Enum):
    EQ = "="
    NEQ = "!="
    RE = "=~"
    NRE = "!~"


@dataclass(frozen=True)
class LabelMatcher:
    """One label condition; regexes are anchored at both ends."""
    name: str
    op: MatchOp
    value: str
    _pattern: Optional[re.Pattern] = field(default=None, compare=False, repr=False, hash=False)

    def __post_init__(self):
        if self.op in (MatchOp.RE, MatchOp.NRE):
            try:
                object.__setattr__(self, "_pattern", re.compile(self.value))
            except re.error as e:
                raise InvalidSeries(f"Invalid regex {self.value!r}: {e}")

    def matches(self, value: str) -> bool:
        if self.op == MatchOp.EQ:
            return value == self.value
        if self.op == MatchOp.NEQ:
            return value != self.value
        hit = self._pattern.fullmatch(value) is not None
        return hit if self.op == MatchOp.RE else not hit

    def render(self) -> str:
        return f'{self.name}{self.op.value}"{escape_label_value(self.value)}"'


@dataclass(frozen=True)
class SeriesMatcher:
    """Selects series by optional metric name and label matchers.

    A missing label matches as the empty string, as in PromQL.
    """
    metric_name: Optional[str] = None
    matchers: Tuple[LabelMatcher, ...] = ()

    @classmethod
    def by_name(cls, metric_name: str, **labels: str) -> "SeriesMatcher":
        return cls(metric_name, tuple(LabelMatcher(k, MatchOp.EQ, v) for k, v in sorted(labels.items())))

    def matches(self, key: SeriesKey) -> bool:
        if self.metric_name is not None and key.metric_name != self.metric_name:
            return False
        for matcher in self.matchers:
            if matcher.name == "__name__":
                if not matcher.matches(key.metric_name):
                    return False
            elif not matcher.matches(key.get(matcher.name, "")):
                return False
        return True
