"""SLI/SLO records, error budgets and alert rules."""
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Dict, Optional, Tuple

from src.config import Config
from src.errors import InvalidSlo
from src.utils.durations import parse_duration


class SliKind(str, Enum):
    AVAILABILITY = "availability"
    LATENCY = "latency"


class Severity(str, Enum):
    PAGE = "page"
    TICKET = "ticket"


@dataclass(frozen=True)
class SliSpec:
    service: str
    name: str
    kind: SliKind
    good_query: str
    total_query: str
    threshold_seconds: Optional[float] = None
    histogram_metric: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["kind"] = self.kind.value
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SliSpec":
        threshold = data.get("threshold_seconds")
        return cls(
            service=data["service"],
            name=data["name"],
            kind=SliKind(data["kind"]),
            good_query=data["good_query"],
            total_query=data["total_query"],
            threshold_seconds=None if threshold is None else float(threshold),
            histogram_metric=data.get("histogram_metric"),
        )


@dataclass(frozen=True)
class SloSpec:
    sli: SliSpec
    target: float
    window: str
    description: str = ""

    @property
    def slo_id(self) -> str:
        return f"{self.sli.service}/{self.sli.name}/{self.window}"

    @property
    def window_s(self) -> int:
        return parse_duration(self.window)

    @property
    def budget_fraction(self) -> float:
        return 1.0 - self.target

    def check(self, allowed_windows: Tuple[str, ...] = Config.SLO_WINDOWS) -> None:
        if not 0.0 < self.target < 1.0:
            raise InvalidSlo(f"target must lie in (0, 1), got {self.target}")
        if self.window not in allowed_windows:
            raise InvalidSlo(f"window {self.window} is not one of {', '.join(allowed_windows)}")
        if self.sli.kind == SliKind.LATENCY and not self.sli.threshold_seconds:
            raise InvalidSlo("latency SLIs need threshold_seconds")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "sli": self.sli.to_dict(),
            "target": self.target,
            "window": self.window,
            "description": self.description,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SloSpec":
        return cls(SliSpec.from_dict(data["sli"]), float(data["target"]), data["window"], data.get("description", ""))


@dataclass(frozen=True)
class ErrorBudget:
    slo_id: str
    budget_fraction: float
    consumed_fraction: float = 0.0
    remaining_fraction: Optional[float] = None

    def __post_init__(self):
        if self.remaining_fraction is None:
            object.__setattr__(self, "remaining_fraction", self.budget_fraction)


@dataclass(frozen=True)
class AlertRule:
    name: str
    slo_id: str
    expr: str
    for_duration: str
    severity: Severity
    burn_rate_threshold: float
    windows: Tuple[str, str]
    budget_fraction: float

    @property
    def bad_fraction_threshold(self) -> float:
        return self.burn_rate_threshold * self.budget_fraction

    @property
    def for_s(self) -> int:
        return parse_duration(self.for_duration)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "slo_id": self.slo_id,
            "expr": self.expr,
            "for_duration": self.for_duration,
            "severity": self.severity.value,
            "burn_rate_threshold": self.burn_rate_threshold,
            "windows": list(self.windows),
            "budget_fraction": self.budget_fraction,
        }


@dataclass(frozen=True)
class Objective:
    """What the operator asks for: kind, target and window (plus a latency threshold)."""
    kind: SliKind
    target: float
    window: str
    threshold_seconds: Optional[float] = None
    description: str = ""
    name: str = ""

    @property
    def sli_name(self) -> str:
        return self.name or self.kind.value


@dataclass(frozen=True)
class SliMetric:
    name: str
    kind: str = "counter"


@dataclass
class Prompt:
    template_id: str
    text: str
    slots: Dict[str, Any] = field(default_factory=dict)
