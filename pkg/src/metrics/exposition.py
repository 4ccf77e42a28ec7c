"""Text exposition format: line parser and serializer.

Grammar handled per line::

    # HELP <name> <text>
    # TYPE <name> counter|gauge|histogram|untyped
    # any other comment
    <name>[{<label>="<value>",...}] <value> [<timestamp ms>]

Label values support the ``\\\\``, ``\\"`` and ``\\n`` escapes. A malformed line
produces a diagnostic and parsing continues with the next line.
"""
import logging
import math
import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

from src.errors import EncodingError, InvalidSeries
from src.metrics.types import (
    MetricFamily,
    MetricKind,
    MetricSample,
    SeriesKey,
    escape_label_value,
)

logger = logging.getLogger(__name__)

_NAME_RE = re.compile(r"[a-zA-Z_:][a-zA-Z0-9_:]*")
_LABEL_RE = re.compile(r"[a-zA-Z_][a-zA-Z0-9_]*")
_HISTOGRAM_SUFFIXES = ("_bucket", "_sum", "_count")
_KINDS = {
    "counter": MetricKind.COUNTER,
    "gauge": MetricKind.GAUGE,
    "histogram": MetricKind.HISTOGRAM,
    "untyped": MetricKind.GAUGE,
}


@dataclass(frozen=True)
class ParseDiagnostic:
    line: int
    message: str
    text: str = ""

    def render(self) -> str:
        return f"line {self.line}: {self.message}"


@dataclass
class ParseResult:
    samples: List[Tuple[MetricFamily, MetricSample]] = field(default_factory=list)
    diagnostics: List[ParseDiagnostic] = field(default_factory=list)

    @property
    def families(self) -> Dict[str, MetricFamily]:
        return {family.name: family for family, _ in self.samples}

    def metric_samples(self) -> List[MetricSample]:
        return [sample for _, sample in self.samples]


class _LineError(Exception):
    pass


def _unescape(raw: str) -> str:
    out = []
    i = 0
    while i < len(raw):
        ch = raw[i]
        if ch == "\\" and i + 1 < len(raw):
            nxt = raw[i + 1]
            out.append({"n": "\n", "\\": "\\", "\"": "\""}.get(nxt, "\\" + nxt))
            i += 2
            continue
        out.append(ch)
        i += 1
    return "".join(out)


def _scan_series(line: str) -> Tuple[str, Dict[str, str], int]:
    """Read ``name{labels}`` from the start of ``line``; return name, labels, end offset."""
    match = _NAME_RE.match(line)
    if not match:
        raise _LineError("expected metric name")
    name = match.group(0)
    pos = match.end()
    labels: Dict[str, str] = {}
    if pos < len(line) and line[pos] == "{":
        pos += 1
        while True:
            while pos < len(line) and line[pos] in " \t":
                pos += 1
            if pos >= len(line):
                raise _LineError("unterminated label set")
            if line[pos] == "}":
                pos += 1
                break
            label_match = _LABEL_RE.match(line, pos)
            if not label_match:
                raise _LineError(f"invalid label name at column {pos + 1}")
            label = label_match.group(0)
            pos = label_match.end()
            while pos < len(line) and line[pos] in " \t":
                pos += 1
            if pos >= len(line) or line[pos] != "=":
                raise _LineError(f"expected '=' after label {label}")
            pos += 1
            while pos < len(line) and line[pos] in " \t":
                pos += 1
            if pos >= len(line) or line[pos] != "\"":
                raise _LineError(f"expected quoted value for label {label}")
            pos += 1
            start = pos
            while pos < len(line) and line[pos] != "\"":
                pos += 2 if line[pos] == "\\" else 1
            if pos >= len(line):
                raise _LineError(f"unterminated value for label {label}")
            if label in labels:
                raise _LineError(f"duplicate label {label}")
            labels[label] = _unescape(line[start:pos])
            pos += 1
            while pos < len(line) and line[pos] in " \t":
                pos += 1
            if pos < len(line) and line[pos] == ",":
                pos += 1
            elif pos < len(line) and line[pos] == "}":
                continue
            else:
                raise _LineError("expected ',' or '}' in label set")
    return name, labels, pos


def parse_series_key(text: str) -> SeriesKey:
    """Parse the canonical ``name{labels}`` form back into a SeriesKey."""
    try:
        name, labels, end = _scan_series(text)
    except _LineError as e:
        raise InvalidSeries(f"Invalid series key {text!r}: {e}")
    if end != len(text):
        raise InvalidSeries(f"Trailing characters in series key {text!r}")
    return SeriesKey.of(name, labels)


def _parse_value(token: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise _LineError(f"invalid sample value {token!r}")


class _FamilyTable:
    def __init__(self):
        self.kinds: Dict[str, Optional[MetricKind]] = {}
        self.helps: Dict[str, str] = {}

    def declare(self, name: str, kind_token: str) -> None:
        kind = _KINDS.get(kind_token)
        if kind is None:
            self.kinds[name] = None
            raise _LineError(f"unsupported metric type {kind_token!r}")
        self.kinds[name] = kind

    def resolve(self, sample_name: str) -> Tuple[str, Optional[MetricKind], bool]:
        """Return (family name, kind, declared)."""
        if sample_name in self.kinds:
            return sample_name, self.kinds[sample_name], True
        for suffix in _HISTOGRAM_SUFFIXES:
            if sample_name.endswith(suffix):
                base = sample_name[: -len(suffix)]
                if base in self.kinds and self.kinds[base] in (MetricKind.HISTOGRAM, None):
                    return base, self.kinds[base], True
        if sample_name.endswith("_total"):
            base = sample_name[: -len("_total")]
            if base in self.kinds and self.kinds[base] in (MetricKind.COUNTER, None):
                return base, self.kinds[base], True
        return sample_name, MetricKind.GAUGE, False

    def family(self, name: str, kind: MetricKind) -> MetricFamily:
        return MetricFamily(name=name, kind=kind, help=self.helps.get(name))


def parse_exposition(text: bytes, scrape_time: int) -> ParseResult:
    """
    Parse a text exposition document.

    Args:
        text (bytes): Raw document, must be UTF-8
        scrape_time (int): Timestamp (ms) given to samples without one

    Returns:
        ParseResult: Samples in input order plus per-line diagnostics
    """
    if isinstance(text, str):
        decoded = text
    else:
        try:
            decoded = text.decode("utf-8")
        except UnicodeDecodeError as e:
            raise EncodingError(f"Exposition body is not valid UTF-8: {e}")

    result = ParseResult()
    table = _FamilyTable()

    for number, raw_line in enumerate(decoded.split("\n"), start=1):
        line = raw_line.rstrip("\r").strip()
        if not line:
            continue
        try:
            if line.startswith("#"):
                _parse_comment(line, table)
                continue
            result.samples.append(_parse_sample_line(line, table, scrape_time))
        except _LineError as e:
            result.diagnostics.append(ParseDiagnostic(line=number, message=str(e), text=raw_line))

    if result.diagnostics:
        logger.debug(f"Exposition parse produced {len(result.diagnostics)} diagnostics")
    return result


def _parse_comment(line: str, table: _FamilyTable) -> None:
    parts = line[1:].strip().split(None, 2)
    if len(parts) < 2 or parts[0] not in ("HELP", "TYPE"):
        return
    keyword, name = parts[0], parts[1]
    if not _NAME_RE.fullmatch(name):
        raise _LineError(f"invalid metric name in # {keyword}: {name!r}")
    if keyword == "HELP":
        table.helps[name] = _unescape(parts[2]) if len(parts) > 2 else ""
        return
    if len(parts) < 3:
        raise _LineError("missing type in # TYPE line")
    table.declare(name, parts[2].strip())


def _parse_sample_line(line: str, table: _FamilyTable, scrape_time: int) -> Tuple[MetricFamily, MetricSample]:
    name, labels, pos = _scan_series(line)
    if pos < len(line) and line[pos] not in " \t":
        raise _LineError("expected whitespace before sample value")
    tokens = line[pos:].split()
    if not tokens:
        raise _LineError("missing sample value")
    if len(tokens) > 2:
        raise _LineError("unexpected trailing tokens")
    value = _parse_value(tokens[0])
    timestamp = scrape_time
    if len(tokens) == 2:
        try:
            timestamp = int(tokens[1])
        except ValueError:
            raise _LineError(f"invalid timestamp {tokens[1]!r}")
        if timestamp < 0:
            raise _LineError("timestamp must be >= 0")

    family_name, kind, _ = table.resolve(name)
    if kind is None:
        raise _LineError(f"sample of unsupported family {family_name}")
    if kind == MetricKind.HISTOGRAM and name.endswith("_bucket") and "le" not in labels:
        raise _LineError("histogram bucket without 'le' label")
    if kind == MetricKind.COUNTER and value < 0:
        raise _LineError("counter value must be non-negative")

    try:
        key = SeriesKey.of(name, labels)
    except InvalidSeries as e:
        raise _LineError(str(e))
    return table.family(family_name, kind), MetricSample(series=key, timestamp=timestamp, value=value)


def format_value(value: float) -> str:
    if math.isnan(value):
        return "NaN"
    if math.isinf(value):
        return "+Inf" if value > 0 else "-Inf"
    return repr(float(value))


def format_le(bound: float) -> str:
    """Bucket bound as used in ``le`` labels: ``1``, ``0.25``, ``+Inf``."""
    if math.isinf(bound):
        return "+Inf"
    return format(float(bound), "g") if float(bound).is_integer() else repr(float(bound))


def _escape_help(text: str) -> str:
    return text.replace("\\", "\\\\").replace("\n", "\\n")


def serialize_exposition(
    families: Iterable[Tuple[MetricFamily, Iterable[MetricSample]]],
    include_timestamps: bool = True,
) -> str:
    """Render families and their samples as a text exposition document."""
    lines: List[str] = []
    for family, samples in families:
        if family.help is not None:
            lines.append(f"# HELP {family.name} {_escape_help(family.help)}")
        lines.append(f"# TYPE {family.name} {family.kind.value}")
        for sample in samples:
            key = sample.series
            if key.labels:
                inner = ",".join(f'{n}="{escape_label_value(v)}"' for n, v in key.labels)
                series = f"{key.metric_name}{{{inner}}}"
            else:
                series = key.metric_name
            line = f"{series} {format_value(sample.value)}"
            if include_timestamps:
                line += f" {sample.timestamp}"
            lines.append(line)
    return "\n".join(lines) + ("\n" if lines else "")
