"""Alert state machine: inactive -> pending -> firing -> resolved."""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence

from src.errors import PlatformError
from src.metrics.store import TimeSeriesStore
from src.promql.evaluator import InstantVector, Scalar, eval_instant
from src.slogen.types import AlertRule, Severity

logger = logging.getLogger(__name__)


class AlertState(str, Enum):
    INACTIVE = "inactive"
    PENDING = "pending"
    FIRING = "firing"
    RESOLVED = "resolved"


@dataclass(frozen=True)
class Alert:
    """One state transition of one rule."""
    rule_name: str
    slo_id: str
    fired_at: int
    severity: Severity
    value: float
    state: AlertState

    def to_dict(self) -> Dict[str, Any]:
        return {
            "type": "alert",
            "rule_name": self.rule_name,
            "slo_id": self.slo_id,
            "fired_at": self.fired_at,
            "severity": self.severity.value,
            "value": None if math.isnan(self.value) else self.value,
            "state": self.state.value,
        }


@dataclass
class RuleState:
    state: AlertState = AlertState.INACTIVE
    active_since: Optional[int] = None
    value: float = math.nan


@dataclass
class AlertTracker:
    """Per-rule state carried between evaluation ticks."""
    rules: Dict[str, RuleState] = field(default_factory=dict)
    errors: Dict[str, str] = field(default_factory=dict)

    def get(self, rule_name: str) -> RuleState:
        return self.rules.setdefault(rule_name, RuleState())

    def firing(self) -> List[str]:
        return sorted(name for name, s in self.rules.items() if s.state == AlertState.FIRING)


def breach_value(rule: AlertRule, store, now: int) -> Optional[float]:
    """Largest value of the rule expression at ``now``, or None when nothing breaches."""
    result = eval_instant(rule.expr, now, store)
    if isinstance(result, Scalar):
        return result.value if result.value and not math.isnan(result.value) else None
    if isinstance(result, InstantVector):
        values = [v for v in result.values() if not math.isnan(v)]
        return max(values) if values else None
    return None


def _step(rule: AlertRule, current: RuleState, value: Optional[float], now: int) -> List[Alert]:
    def emit(state: AlertState, v: float) -> Alert:
        current.state = state
        return Alert(rule.name, rule.slo_id, now, rule.severity, v, state)

    transitions = []
    breaching = value is not None
    if current.state in (AlertState.INACTIVE, AlertState.RESOLVED):
        if breaching:
            current.active_since = now
            current.value = value
            transitions.append(emit(AlertState.PENDING, value))
    elif not breaching:
        current.active_since = None
        transitions.append(emit(AlertState.RESOLVED, current.value))
        return transitions
    else:
        current.value = value

    if current.state == AlertState.PENDING and now - current.active_since >= rule.for_s * 1000:
        transitions.append(emit(AlertState.FIRING, value))
    return transitions


def check_alerts(rules: Sequence[AlertRule], store, now: int, alert_state: AlertTracker) -> List[Alert]:
    """
    Evaluate every rule at ``now`` and advance its state.

    A rule whose evaluation fails keeps its previous state; the error is
    logged and recorded in ``alert_state.errors``.

    Returns:
        List[Alert]: Transitions that happened at this tick, in rule order
    """
    snapshot = store.snapshot() if isinstance(store, TimeSeriesStore) else store
    transitions: List[Alert] = []
    for rule in rules:
        try:
            value = breach_value(rule, snapshot, now)
        except PlatformError as e:
            logger.error(f"Error evaluating alert rule {rule.name}: {str(e)}")
            alert_state.errors[rule.name] = str(e)
            continue
        alert_state.errors.pop(rule.name, None)
        for alert in _step(rule, alert_state.get(rule.name), value, now):
            logger.info(f"Alert {alert.rule_name} -> {alert.state.value} at {now} (value {alert.value})")
            transitions.append(alert)
    return transitions
