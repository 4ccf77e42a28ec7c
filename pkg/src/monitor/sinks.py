"""Where monitoring records go: JSON-lines files, webhooks, memory."""
import logging
import threading
from pathlib import Path
from typing import Any, Dict, List, Optional, Protocol, Sequence

import requests

from src.config import Config
from src.utils.canonical import canonical_json

logger = logging.getLogger(__name__)

Record = Dict[str, Any]


class Sink(Protocol):
    def emit(self, record: Record) -> None:
        ...


class MemorySink:
    def __init__(self):
        self.records: List[Record] = []
        self._lock = threading.Lock()

    def emit(self, record: Record) -> None:
        with self._lock:
            self.records.append(dict(record))

    def of_type(self, record_type: str) -> List[Record]:
        return [r for r in self.records if r.get("type") == record_type]


class JsonlSink:
    """Appends one canonical JSON record per line."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def emit(self, record: Record) -> None:
        line = canonical_json(record)
        with self._lock, open(self.path, "a", encoding="utf-8") as f:
            f.write(line + "\n")


class WebhookSink:
    """
    POSTs every firing alert to ``url``.

    Body: ``{"rule_name", "slo_id", "fired_at", "severity", "value", "state"}``
    (the alert record without its ``type``). Other records are ignored;
    delivery failures are logged and dropped.
    """

    def __init__(self, url: str, session: Optional[requests.Session] = None, timeout: float = 5.0):
        self.url = url
        self.session = session or requests.Session()
        self.timeout = timeout
        self.delivered = 0
        self.failed = 0

    def emit(self, record: Record) -> None:
        if record.get("type") != "alert" or record.get("state") != "firing":
            return
        body = {k: v for k, v in record.items() if k != "type"}
        try:
            response = self.session.post(self.url, json=body, timeout=self.timeout)
            response.raise_for_status()
            self.delivered += 1
        except requests.RequestException as e:
            self.failed += 1
            logger.error(f"Error posting alert {record.get('rule_name')} to {self.url}: {str(e)}")


class CompositeSink:
    """Fans records out to several sinks, serialized under one lock."""

    def __init__(self, sinks: Sequence[Sink]):
        self.sinks = list(sinks)
        self._lock = threading.Lock()

    def emit(self, record: Record) -> None:
        with self._lock:
            for sink in self.sinks:
                try:
                    sink.emit(record)
                except Exception as e:
                    logger.error(f"Error in sink {type(sink).__name__}: {str(e)}")


def default_sink(log_path: Optional[Path] = None, webhook_url: Optional[str] = Config.WEBHOOK_URL) -> CompositeSink:
    sinks: List[Sink] = []
    if log_path is not None:
        sinks.append(JsonlSink(log_path))
    if webhook_url:
        sinks.append(WebhookSink(webhook_url))
    return CompositeSink(sinks)
