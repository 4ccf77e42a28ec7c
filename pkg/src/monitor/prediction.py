"""Budget exhaustion forecasts: analytic burn model next to the federated predictor."""
import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np

from src.config import Config
from src.errors import StaleStatus
from src.fedlearn.features import FeatureSpec, apply_normalization, window_stats
from src.fedlearn.model import predict_violation
from src.metrics.store import TimeSeriesStore
from src.monitor.status import BudgetStatus
from src.promql.parser import parse
from src.utils.durations import parse_duration, parse_duration_ms

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PredictionReport:
    slo_id: str
    evaluated_at: int
    time_to_exhaustion_s: float
    fl_probability: Optional[float]
    horizon: str

    @property
    def exhausts_within_horizon(self) -> bool:
        return self.time_to_exhaustion_s <= parse_duration(self.horizon)

    @property
    def exhaustion_at(self) -> Optional[int]:
        if math.isinf(self.time_to_exhaustion_s):
            return None
        return self.evaluated_at + int(round(self.time_to_exhaustion_s * 1000))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "type": "prediction",
            "slo_id": self.slo_id,
            "evaluated_at": self.evaluated_at,
            "time_to_exhaustion_s": None if math.isinf(self.time_to_exhaustion_s) else self.time_to_exhaustion_s,
            "fl_probability": self.fl_probability,
            "horizon": self.horizon,
        }


class FlPredictor:
    """Scores the current window of candidate metrics with the sealed federated model."""

    def __init__(self, params: np.ndarray, spec: FeatureSpec):
        self.params = np.asarray(params, dtype=float)
        self.spec = spec
        self._queries = [parse(c.query) for c in spec.candidates]

    def features(self, store, t: int) -> Optional[np.ndarray]:
        snapshot = store.snapshot() if isinstance(store, TimeSeriesStore) else store
        row = []
        for query in self._queries:
            stats = window_stats(snapshot, query, t, parse_duration_ms(self.spec.window), parse_duration_ms(self.spec.step))
            if stats is None:
                return None
            row.extend(stats)
        X = np.asarray([row], dtype=float)
        if self.spec.normalization is not None:
            X = apply_normalization(X, self.spec.normalization)
        return X[0]

    def probability(self, store, t: int) -> Optional[float]:
        row = self.features(store, t)
        if row is None:
            return None
        return predict_violation(self.params, row)


def time_to_exhaustion_s(status: BudgetStatus) -> float:
    """Remaining budget over the current consumption speed, in seconds; inf when nothing burns.

    The short-window burn is used while it is positive; otherwise the window burn rate.
    """
    if status.burn_rate <= 0:
        return math.inf
    burn = status.current_burn_rate if status.current_burn_rate > 0 else status.burn_rate
    window_s = parse_duration(status.window)
    return (status.remaining_fraction / status.budget_fraction) * window_s / burn


def predict_exhaustion(
    status: BudgetStatus,
    now: Optional[int] = None,
    max_age_ms: Optional[int] = None,
    fl_probability: Optional[float] = None,
    horizon: str = Config.MONITOR_HORIZON,
) -> PredictionReport:
    """
    Analytic exhaustion forecast for a fresh status.

    Args:
        status (BudgetStatus): Output of evaluate
        now (int, optional): Current time in ms; freshness is checked when given
        max_age_ms (int, optional): Oldest acceptable status; defaults to two monitor intervals
        fl_probability (float, optional): Federated predictor output, reported alongside

    Returns:
        PredictionReport: Seconds until the window budget is gone (inf when burn is 0)
    """
    if now is not None:
        limit = max_age_ms if max_age_ms is not None else 2 * parse_duration_ms(Config.MONITOR_INTERVAL)
        if now - status.evaluated_at > limit:
            raise StaleStatus(f"status of {status.slo_id} is {now - status.evaluated_at} ms old (limit {limit} ms)")
    tte = time_to_exhaustion_s(status)
    if fl_probability is not None and not 0.0 <= fl_probability <= 1.0:
        raise ValueError(f"fl_probability must lie in [0, 1], got {fl_probability}")
    return PredictionReport(status.slo_id, status.evaluated_at, tte, fl_probability, horizon)
