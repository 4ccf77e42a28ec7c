"""Static query validation used as the generation gate. Never reads the store."""
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from src.metrics.types import MetricKind
from src.promql.ast import FnCall, RangeSelector, walk
from src.promql.diagnostics import Diagnostic, Severity
from src.promql.parser import parse_with_diagnostics

COUNTER_SUFFIXES = ("_total", "_count", "_sum", "_bucket")


@dataclass
class Validation:
    diagnostics: List[Diagnostic] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not any(d.severity == Severity.ERROR for d in self.diagnostics)

    @property
    def errors(self) -> List[Diagnostic]:
        return [d for d in self.diagnostics if d.severity == Severity.ERROR]

    @property
    def warnings(self) -> List[Diagnostic]:
        return [d for d in self.diagnostics if d.severity == Severity.WARNING]


def _family_of(series_name: str) -> List[str]:
    names = [series_name]
    for suffix in COUNTER_SUFFIXES:
        if series_name.endswith(suffix):
            names.append(series_name[: -len(suffix)])
    return names


def validate(query: str, known_kinds: Optional[Dict[str, MetricKind]] = None) -> Validation:
    """
    Parse and statically check a query.

    ``rate``/``increase`` over a series that is not known to be a counter only
    produces a warning: metric kinds are usually unknown at generation time.

    Args:
        query (str): Query text
        known_kinds (Dict[str, MetricKind], optional): Family name -> kind

    Returns:
        Validation: ``ok`` is False when any error diagnostic is present
    """
    expr, diagnostics = parse_with_diagnostics(query)
    result = Validation(list(diagnostics))
    if expr is None:
        return result

    for node in walk(expr):
        if not (isinstance(node, FnCall) and node.name in ("rate", "increase")):
            continue
        arg = node.args[0]
        if not isinstance(arg, RangeSelector) or arg.selector.name is None:
            continue
        name = arg.selector.name
        kinds = known_kinds or {}
        kind = next((kinds[n] for n in _family_of(name) if n in kinds), None)
        if kind is None:
            if not name.endswith(COUNTER_SUFFIXES):
                result.diagnostics.append(
                    Diagnostic.warning(arg.span, f"{node.name} over '{name}' whose kind is unknown; expected a counter")
                )
        elif kind == MetricKind.GAUGE:
            result.diagnostics.append(Diagnostic.warning(arg.span, f"{node.name} over gauge '{name}'"))
    return result
