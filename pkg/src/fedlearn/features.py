"""Turning stored metrics into labelled feature rows."""
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.config import Config
from src.errors import DimensionMismatch, EmptyDataset
from src.metrics.store import StoreSnapshot, TimeSeriesStore
from src.promql.evaluator import InstantVector, Scalar, eval_instant
from src.promql.parser import parse
from src.utils.durations import parse_duration, parse_duration_ms

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CandidateMetric:
    """A candidate SLI: a name plus the instant query that measures it."""
    name: str
    query: str


@dataclass(frozen=True)
class FeatureSpec:
    candidates: Tuple[CandidateMetric, ...]
    window: str = "5m"
    step: str = Config.SCRAPE_INTERVAL
    normalization: Optional[Tuple[Tuple[float, float], ...]] = None

    @property
    def feature_names(self) -> List[str]:
        names = []
        for candidate in self.candidates:
            names += [f"{candidate.name}:mean", f"{candidate.name}:slope"]
        return names

    @property
    def dimension(self) -> int:
        return 2 * len(self.candidates)

    def with_normalization(self, normalization: Sequence[Tuple[float, float]]) -> "FeatureSpec":
        return replace(self, normalization=tuple((float(lo), float(hi)) for lo, hi in normalization))


@dataclass(frozen=True)
class DegradationRule:
    """label(t) = 1 iff error ratio > theta or p99 latency > lambda."""
    error_ratio_query: str
    latency_query: Optional[str] = None
    error_ratio_threshold: float = Config.ERROR_RATIO_THRESHOLD
    latency_threshold_s: float = Config.LATENCY_THRESHOLD_S
    rule_id: str = "error-ratio-or-p99"

    @classmethod
    def for_service(cls, metric_prefix: str, window: str = "5m", **kwargs) -> "DegradationRule":
        requests = f"{metric_prefix}_requests_total"
        error_ratio = (
            f'sum(rate({requests}{{code=~"5.."}}[{window}])) / sum(rate({requests}[{window}]))'
        )
        latency = (
            f"histogram_quantile(0.99, sum by (le) (rate({metric_prefix}_latency_seconds_bucket[{window}])))"
        )
        return cls(error_ratio, latency, **kwargs)

    def fires(self, snapshot: StoreSnapshot, t: int) -> bool:
        ratio = _scalar_or_sum(eval_instant(self.error_ratio_query, t, snapshot))
        if ratio is not None and not math.isnan(ratio) and ratio > self.error_ratio_threshold:
            return True
        if self.latency_query:
            p99 = _scalar_or_sum(eval_instant(self.latency_query, t, snapshot))
            if p99 is not None and not math.isnan(p99) and p99 > self.latency_threshold_s:
                return True
        return False


@dataclass(frozen=True)
class RuleSet:
    """Degraded when any member rule fires (one rule per service)."""
    rules: Tuple[DegradationRule, ...]
    rule_id: str = "any-service-degraded"

    def fires(self, snapshot: StoreSnapshot, t: int) -> bool:
        return any(rule.fires(snapshot, t) for rule in self.rules)


@dataclass
class LocalDataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: List[str]
    peer_id: str = ""
    rule_id: str = ""
    skipped: int = 0

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        self.X = np.asarray(self.X, dtype=float)
        if self.X.size == 0:
            self.X = self.X.reshape(len(self.y), len(self.feature_names))
        if self.X.ndim != 2 or self.X.shape != (len(self.y), len(self.feature_names)):
            raise DimensionMismatch(
                f"dataset of shape {self.X.shape} does not match {len(self.y)} labels x {len(self.feature_names)} features"
            )

    def __len__(self) -> int:
        return len(self.y)

    @property
    def dimension(self) -> int:
        return self.X.shape[1]

    def split(self, train_fraction: float = 0.7) -> Tuple["LocalDataset", "LocalDataset"]:
        cut = int(round(len(self) * train_fraction))
        head = replace(self, X=self.X[:cut], y=self.y[:cut])
        tail = replace(self, X=self.X[cut:], y=self.y[cut:])
        return head, tail

    def normalized(self, normalization: Sequence[Tuple[float, float]]) -> "LocalDataset":
        return replace(self, X=apply_normalization(self.X, normalization))

    def to_csv(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame = pd.DataFrame(self.X, columns=self.feature_names)
        frame["label"] = self.y.astype(int)
        frame.to_csv(path, index=False, float_format="%.17g")
        return path

    @classmethod
    def from_csv(cls, path: Path, peer_id: str = "") -> "LocalDataset":
        frame = pd.read_csv(path)
        names = [c for c in frame.columns if c != "label"]
        return cls(frame[names].to_numpy(dtype=float), frame["label"].to_numpy(dtype=float), names, peer_id)


def _scalar_or_sum(value) -> Optional[float]:
    if isinstance(value, Scalar):
        return value.value
    if isinstance(value, InstantVector):
        values = [v for v in value.values() if not math.isnan(v)]
        return float(sum(values)) if values else None
    return None


def least_squares_slope(times_s: np.ndarray, values: np.ndarray) -> float:
    """Closed-form ordinary least-squares slope of values over time."""
    centered = times_s - times_s.mean()
    denominator = float(np.dot(centered, centered))
    if denominator == 0.0:
        return 0.0
    return float(np.dot(centered, values - values.mean()) / denominator)


def window_stats(snapshot: StoreSnapshot, query, t: int, window_ms: int, step_ms: int) -> Optional[Tuple[float, float]]:
    """(mean, slope per second) of a query sampled over ``(t - window, t]``."""
    times = []
    values = []
    point = t - window_ms + step_ms
    while point <= t:
        value = _scalar_or_sum(eval_instant(query, point, snapshot))
        if value is not None and not math.isnan(value):
            times.append(point / 1000.0)
            values.append(value)
        point += step_ms
    if len(values) < 2:
        return None
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), least_squares_slope(np.asarray(times, dtype=float), arr)


def fit_normalization(X: np.ndarray) -> Tuple[Tuple[float, float], ...]:
    X = np.asarray(X, dtype=float)
    return tuple((float(lo), float(hi)) for lo, hi in zip(X.min(axis=0), X.max(axis=0)))


def apply_normalization(X: np.ndarray, normalization: Sequence[Tuple[float, float]]) -> np.ndarray:
    """Min-max scaling; a constant training column maps to 0."""
    X = np.asarray(X, dtype=float)
    out = np.zeros_like(X)
    for j, (lo, hi) in enumerate(normalization):
        if hi > lo:
            out[:, j] = (X[:, j] - lo) / (hi - lo)
    return out


def featurize(
    store,
    spec: FeatureSpec,
    times: Sequence[int],
    rule: Optional[DegradationRule] = None,
    peer_id: str = "",
) -> LocalDataset:
    """
    Build one row per evaluation time.

    Features are the (mean, slope) of every candidate over the window, scaled
    with ``spec.normalization`` when present. Rows where any candidate has no
    data are skipped and counted.

    Args:
        store: TimeSeriesStore or snapshot
        spec (FeatureSpec): Candidates, window and normalization
        times (Sequence[int]): Evaluation timestamps in ms
        rule (DegradationRule, optional): Label rule; labels are 0 without one

    Returns:
        LocalDataset: Rows in time order
    """
    snapshot = store.snapshot() if isinstance(store, TimeSeriesStore) else store
    window_ms = parse_duration_ms(spec.window)
    step_ms = parse_duration_ms(spec.step)
    if step_ms <= 0 or parse_duration(spec.window) <= 0:
        raise ValueError("window and step must be positive")
    queries = [parse(candidate.query) for candidate in spec.candidates]

    rows: List[List[float]] = []
    labels: List[float] = []
    skipped = 0
    for t in times:
        row: List[float] = []
        for query in queries:
            stats = window_stats(snapshot, query, t, window_ms, step_ms)
            if stats is None:
                break
            row.extend(stats)
        if len(row) != spec.dimension:
            skipped += 1
            continue
        rows.append(row)
        labels.append(1.0 if rule is not None and rule.fires(snapshot, t) else 0.0)

    if not rows:
        raise EmptyDataset(f"All {len(times)} rows were skipped for peer {peer_id or '-'}")
    if skipped:
        logger.info(f"Featurize skipped {skipped} of {len(times)} rows for peer {peer_id or '-'}")

    X = np.asarray(rows, dtype=float)
    if spec.normalization is not None:
        X = apply_normalization(X, spec.normalization)
    return LocalDataset(X, np.asarray(labels), spec.feature_names, peer_id, rule.rule_id if rule else "", skipped)
