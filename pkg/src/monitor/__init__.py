from src.monitor.alerts import Alert, AlertState, AlertTracker, check_alerts
from src.monitor.loop import HEARTBEAT_PREFIX, Monitor, TickResult, run_loop
from src.monitor.prediction import FlPredictor, PredictionReport, predict_exhaustion
from src.monitor.sinks import CompositeSink, JsonlSink, MemorySink, WebhookSink
from src.monitor.status import BudgetStatus, evaluate
