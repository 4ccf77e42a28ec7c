"""Error budgets and multi-window multi-burn-rate alert rules."""
import logging
from dataclasses import dataclass
from typing import List, Tuple

from src.errors import GenerationFailed
from src.promql.ast import pretty, with_range_window
from src.promql.parser import parse
from src.promql.validate import validate
from src.slogen.types import AlertRule, ErrorBudget, Severity, SloSpec
from src.utils.durations import parse_duration

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BurnPolicy:
    burn_rate: float
    long_window: str
    short_window: str
    severity: Severity
    for_duration: str


BURN_POLICIES: Tuple[BurnPolicy, ...] = (
    BurnPolicy(14.4, "1h", "5m", Severity.PAGE, "2m"),
    BurnPolicy(6.0, "6h", "30m", Severity.PAGE, "15m"),
    BurnPolicy(1.0, "3d", "6h", Severity.TICKET, "1h"),
)


def derive_error_budget(slo: SloSpec) -> ErrorBudget:
    """Unevaluated budget: ``budget_fraction = 1 - target``."""
    return ErrorBudget(slo_id=slo.slo_id, budget_fraction=slo.budget_fraction)


def _retarget(query: str, window: str) -> str:
    return pretty(with_range_window(parse(query), parse_duration(window)))


def bad_fraction_query(slo: SloSpec, window: str) -> str:
    """``1 - good/total`` with every range selector set to ``window``."""
    good = _retarget(slo.sli.good_query, window)
    total = _retarget(slo.sli.total_query, window)
    return f"1 - ({good}) / ({total})"


def burn_rate_query(slo: SloSpec, window: str) -> str:
    return f"({bad_fraction_query(slo, window)}) / {repr(float(slo.budget_fraction))}"


def _format_threshold(value: float) -> str:
    return repr(float(value))


def alert_expr(slo: SloSpec, policy: BurnPolicy) -> str:
    """
    Long-window burn gated by the short window.

    ``(long) * (short > bool T) > T`` keeps the long-window burn only when
    both windows exceed T; NaN (no traffic) never passes a comparison.
    """
    threshold = _format_threshold(policy.burn_rate)
    long_burn = burn_rate_query(slo, policy.long_window)
    short_burn = burn_rate_query(slo, policy.short_window)
    return f"({long_burn}) * ({short_burn} > bool {threshold}) > {threshold}"


def rule_name(slo: SloSpec, policy: BurnPolicy) -> str:
    return f"{slo.slo_id}:burn{policy.burn_rate:g}:{policy.long_window}"


def derive_alert_rules(slo: SloSpec) -> List[AlertRule]:
    """
    Page at burn 14.4 over (1h, 5m) and 6 over (6h, 30m); ticket at 1 over (3d, 6h).

    Args:
        slo (SloSpec): A validated SLO

    Returns:
        List[AlertRule]: One rule per burn policy, fastest first
    """
    rules = []
    for policy in BURN_POLICIES:
        expr = alert_expr(slo, policy)
        result = validate(expr)
        if not result.ok:
            raise GenerationFailed(
                f"Alert expression for {slo.slo_id} does not validate: "
                f"{'; '.join(d.render() for d in result.errors)}"
            )
        rules.append(AlertRule(
            name=rule_name(slo, policy),
            slo_id=slo.slo_id,
            expr=expr,
            for_duration=policy.for_duration,
            severity=policy.severity,
            burn_rate_threshold=policy.burn_rate,
            windows=(policy.long_window, policy.short_window),
            budget_fraction=slo.budget_fraction,
        ))
    logger.info(f"Derived {len(rules)} burn-rate alert rules for {slo.slo_id}")
    return rules
