"""Periodic evaluation of SLO budgets, alert rules and exhaustion forecasts."""
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from src.config import Config
from src.errors import PlatformError, PlatformValidationError
from src.metrics.store import StoreSnapshot, TimeSeriesStore
from src.metrics.types import MetricSample, SeriesKey
from src.monitor.alerts import Alert, AlertTracker, check_alerts
from src.monitor.prediction import FlPredictor, PredictionReport, predict_exhaustion
from src.monitor.sinks import MemorySink, Sink
from src.monitor.status import BudgetStatus, evaluate
from src.slogen.types import AlertRule, SloSpec
from src.utils.clock import WallClock
from src.utils.durations import parse_duration, parse_duration_ms

logger = logging.getLogger(__name__)

HEARTBEAT_PREFIX = "monitor:"
HEARTBEAT_METRIC = f"{HEARTBEAT_PREFIX}heartbeat"
ERRORS_METRIC = f"{HEARTBEAT_PREFIX}evaluation_errors"


@dataclass
class TickResult:
    tick: int
    at: int
    statuses: List[BudgetStatus] = field(default_factory=list)
    alerts: List[Alert] = field(default_factory=list)
    predictions: List[PredictionReport] = field(default_factory=list)
    errors: Dict[str, str] = field(default_factory=dict)


class Monitor:
    """
    Evaluates every SLO and rule against one store snapshot per tick.

    A failing SLO is logged and skipped; the others are still evaluated.
    Sink writes happen on the calling thread, in SLO order.
    """

    def __init__(
        self,
        slos: Sequence[SloSpec],
        rules: Sequence[AlertRule],
        store: TimeSeriesStore,
        sink: Optional[Sink] = None,
        clock=None,
        interval: str = Config.MONITOR_INTERVAL,
        predictors: Optional[Dict[str, FlPredictor]] = None,
        horizon: str = Config.MONITOR_HORIZON,
        current_window: str = Config.CURRENT_BURN_WINDOW,
        write_heartbeat: bool = True,
        workers: int = 1,
    ):
        if parse_duration(interval) < 1:
            raise PlatformValidationError(f"Monitor interval must be >= 1s, got {interval}")
        self.slos = list(slos)
        self.rules = list(rules)
        self.store = store
        self.sink = sink or MemorySink()
        self.clock = clock or WallClock()
        self.interval = interval
        self.interval_ms = parse_duration_ms(interval)
        self.predictors = predictors or {}
        self.horizon = horizon
        self.current_window = current_window
        self.write_heartbeat = write_heartbeat
        self.workers = workers
        self.alert_state = AlertTracker()
        self.ticks = 0
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    def _evaluate_one(self, slo: SloSpec, snapshot: StoreSnapshot, now: int) -> Tuple[Optional[BudgetStatus], Optional[PredictionReport], Optional[str]]:
        try:
            status = evaluate(slo, snapshot, now, self.current_window)
            predictor = self.predictors.get(slo.sli.service)
            probability = predictor.probability(snapshot, now) if predictor is not None else None
            prediction = predict_exhaustion(status, now, fl_probability=probability, horizon=self.horizon)
            return status, prediction, None
        except PlatformError as e:
            logger.error(f"Error monitoring SLO {slo.slo_id}: {str(e)}")
            return None, None, str(e)

    def tick(self, now: Optional[int] = None) -> TickResult:
        now = self.clock.now_ms() if now is None else now
        snapshot = self.store.snapshot()
        result = TickResult(self.ticks, now)

        if self.workers > 1 and len(self.slos) > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                outcomes = list(pool.map(lambda s: self._evaluate_one(s, snapshot, now), self.slos))
        else:
            outcomes = [self._evaluate_one(slo, snapshot, now) for slo in self.slos]

        for slo, (status, prediction, error) in zip(self.slos, outcomes):
            if error is not None:
                result.errors[slo.slo_id] = error
                self.sink.emit({"type": "error", "slo_id": slo.slo_id, "at": now, "message": error})
                continue
            result.statuses.append(status)
            result.predictions.append(prediction)
            self.sink.emit(status.to_dict())
            self.sink.emit(prediction.to_dict())

        result.alerts = check_alerts(self.rules, snapshot, now, self.alert_state)
        for alert in result.alerts:
            self.sink.emit(alert.to_dict())
        result.errors.update({f"rule:{name}": message for name, message in self.alert_state.errors.items()})

        self.sink.emit({"type": "heartbeat", "tick": self.ticks, "at": now, "slos": len(self.slos), "errors": len(result.errors)})
        if self.write_heartbeat:
            self.store.ingest([
                MetricSample(SeriesKey(HEARTBEAT_METRIC), now, float(len(result.statuses))),
                MetricSample(SeriesKey(ERRORS_METRIC), now, float(len(result.errors))),
            ])
        self.ticks += 1
        return result

    def run(self, ticks: Optional[int] = None, on_tick: Optional[Callable[[TickResult], None]] = None) -> List[TickResult]:
        """Tick, then sleep one interval on the monitor's clock; stops after ``ticks`` or stop()."""
        results = []
        while not self._stop.is_set() and (ticks is None or len(results) < ticks):
            result = self.tick()
            results.append(result)
            if on_tick is not None:
                on_tick(result)
            self.clock.sleep(self.interval_ms / 1000.0)
        return results

    def start(self) -> None:
        self._stop.clear()
        self._thread = threading.Thread(target=self.run, name="monitor-loop", daemon=True)
        self._thread.start()

    def stop(self, timeout: float = 5.0) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout)
            self._thread = None


def run_loop(
    slos: Sequence[SloSpec],
    rules: Sequence[AlertRule],
    interval: str,
    store: TimeSeriesStore,
    sink: Sink,
    clock=None,
    ticks: Optional[int] = None,
    **kwargs,
) -> List[TickResult]:
    """
    Run the monitor for ``ticks`` evaluations (forever when None).

    Args:
        slos (Sequence[SloSpec]): SLOs to evaluate
        rules (Sequence[AlertRule]): Alert rules to check
        interval (str): Tick interval, at least 1s
        store (TimeSeriesStore): Metrics source
        sink (Sink): Record destination

    Returns:
        List[TickResult]: One result per tick
    """
    monitor = Monitor(slos, rules, store, sink, clock, interval, **kwargs)
    logger.info(f"Monitoring {len(monitor.slos)} SLOs and {len(monitor.rules)} rules every {interval}")
    return monitor.run(ticks)
