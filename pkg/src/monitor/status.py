"""Error budget status of an SLO at one instant."""
import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Tuple

from src.config import Config
from src.errors import EvalError, ParseError, SloEvaluationError
from src.metrics.store import StoreSnapshot, TimeSeriesStore
from src.promql.ast import pretty, with_range_window
from src.promql.evaluator import InstantVector, Scalar, eval_instant
from src.promql.parser import parse
from src.slogen.types import SloSpec
from src.utils.durations import parse_duration

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BudgetStatus:
    slo_id: str
    evaluated_at: int
    bad_fraction: float
    burn_rate: float
    budget_fraction: float
    consumed_fraction: float
    remaining_fraction: float
    healthy: bool
    no_traffic: bool = False
    window: str = ""
    current_burn_rate: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "type": "status",
            "slo_id": self.slo_id,
            "evaluated_at": self.evaluated_at,
            "bad_fraction": self.bad_fraction,
            "burn_rate": self.burn_rate,
            "budget_fraction": self.budget_fraction,
            "consumed_fraction": self.consumed_fraction,
            "remaining_fraction": self.remaining_fraction,
            "healthy": self.healthy,
            "no_traffic": self.no_traffic,
            "window": self.window,
            "current_burn_rate": self.current_burn_rate,
        }


def _total(value) -> float:
    if isinstance(value, Scalar):
        return value.value
    if isinstance(value, InstantVector):
        return math.fsum(v for v in value.values() if not math.isnan(v))
    raise EvalError(f"SLI query returned {type(value).__name__}; expected a vector or scalar")


def _ratio(good_query: str, total_query: str, snapshot: StoreSnapshot, now: int) -> Tuple[float, bool]:
    """(bad fraction, no traffic) from a good/total query pair."""
    total = _total(eval_instant(total_query, now, snapshot))
    if total <= 0:
        return 0.0, True
    good = _total(eval_instant(good_query, now, snapshot))
    bad = 1.0 - good / total
    return min(1.0, max(0.0, bad)), False


def _over(query: str, window: str) -> str:
    return pretty(with_range_window(parse(query), parse_duration(window)))


def evaluate(
    slo: SloSpec,
    store,
    now: int,
    current_window: str = Config.CURRENT_BURN_WINDOW,
) -> BudgetStatus:
    """
    Budget status of ``slo`` at ``now`` (ms) over its window.

    No traffic counts as healthy with ``no_traffic`` set. ``current_burn_rate``
    is the burn over ``current_window`` and feeds the exhaustion predictor.

    Raises:
        SloEvaluationError: A query failed to evaluate
    """
    snapshot = store.snapshot() if isinstance(store, TimeSeriesStore) else store
    budget = slo.budget_fraction
    try:
        bad, no_traffic = _ratio(slo.sli.good_query, slo.sli.total_query, snapshot, now)
        current_bad, _ = _ratio(
            _over(slo.sli.good_query, current_window), _over(slo.sli.total_query, current_window), snapshot, now
        )
    except (EvalError, ParseError) as e:
        logger.error(f"Error evaluating SLO {slo.slo_id}: {str(e)}")
        raise SloEvaluationError(slo.slo_id, e) from e

    burn = bad / budget
    remaining = max(0.0, budget - bad)
    return BudgetStatus(
        slo_id=slo.slo_id,
        evaluated_at=now,
        bad_fraction=bad,
        burn_rate=burn,
        budget_fraction=budget,
        consumed_fraction=burn,
        remaining_fraction=remaining,
        healthy=remaining > 0,
        no_traffic=no_traffic,
        window=slo.window,
        current_burn_rate=current_bad / budget,
    )
