"""Scraping of text exposition endpoints into the store."""
import logging
import threading
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Protocol

import requests

from src.config import Config
from src.errors import TargetDisabled, UnknownService, PlatformValidationError
from src.metrics.exposition import parse_exposition
from src.metrics.store import IngestReport, TimeSeriesStore
from src.metrics.types import MetricSample, SeriesKey
from src.utils.clock import WallClock
from src.utils.durations import parse_duration

logger = logging.getLogger(__name__)

UP_METRIC = "up"


@dataclass(frozen=True)
class ScrapeTarget:
    service_name: str
    url: str
    interval: str = Config.SCRAPE_INTERVAL
    enabled: bool = True

    def __post_init__(self):
        if parse_duration(self.interval) < 1:
            raise PlatformValidationError(f"Scrape interval must be >= 1s, got {self.interval}")

    @property
    def interval_s(self) -> int:
        return parse_duration(self.interval)


class Fetcher(Protocol):
    def fetch(self, target: ScrapeTarget) -> bytes:
        ...


class HttpFetcher:
    """GETs the target URL with a requests session."""

    def __init__(self, session: Optional[requests.Session] = None, timeout: float = Config.SCRAPE_TIMEOUT_S):
        self.session = session or requests.Session()
        self.timeout = timeout

    def fetch(self, target: ScrapeTarget) -> bytes:
        response = self.session.get(target.url, timeout=self.timeout)
        response.raise_for_status()
        return response.content


class Scraper:
    """Performs scrapes and records a synthetic ``up{service=...}`` gauge per attempt."""

    def __init__(
        self,
        store: TimeSeriesStore,
        fetcher: Optional[Fetcher] = None,
        clock=None,
        is_registered: Optional[Callable[[str], bool]] = None,
    ):
        self.store = store
        self.fetcher = fetcher or HttpFetcher()
        self.clock = clock or WallClock()
        self.is_registered = is_registered

    def scrape_once(self, target: ScrapeTarget) -> IngestReport:
        """
        Fetch, parse and ingest one target.

        Args:
            target (ScrapeTarget): Enabled target

        Returns:
            IngestReport: Counts include the ``up`` sample
        """
        if not target.enabled:
            raise TargetDisabled(f"Target {target.service_name} is disabled")

        scrape_time = self.clock.now_ms()
        samples: List[MetricSample] = []
        up = 1.0
        try:
            body = self.fetcher.fetch(target)
            parsed = parse_exposition(body, scrape_time=scrape_time)
            for diagnostic in parsed.diagnostics:
                logger.warning(f"Scrape of {target.service_name}: {diagnostic.render()}")
            self.store.register_families(parsed.families.values())
            samples = parsed.metric_samples()
        except Exception as e:
            logger.warning(f"Scrape of {target.service_name} at {target.url} failed: {str(e)}")
            up = 0.0

        samples.append(MetricSample(SeriesKey.of(UP_METRIC, {"service": target.service_name}), scrape_time, up))
        report = self.store.ingest(samples)
        logger.debug(f"Scraped {target.service_name}: accepted={report.accepted} rejected={len(report.rejected)}")
        return report


class ScrapeLoop:
    """Background thread scraping each target on its own interval (service mode)."""

    def __init__(self, scraper: Scraper, targets: List[ScrapeTarget]):
        self.scraper = scraper
        self.targets = list(targets)
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self.reports: Dict[str, IngestReport] = {}

    def add_target(self, target: ScrapeTarget) -> None:
        self._check_registered(target)
        self.targets.append(target)

    def _check_registered(self, target: ScrapeTarget) -> None:
        lookup = self.scraper.is_registered
        if lookup is not None and not lookup(target.service_name):
            raise UnknownService(f"Service {target.service_name} is not in the service registry")

    def run_pending(self, now_ms: int, last_run: Dict[str, int]) -> None:
        for target in self.targets:
            if not target.enabled:
                continue
            previous = last_run.get(target.service_name)
            if previous is None or now_ms - previous >= target.interval_s * 1000:
                last_run[target.service_name] = now_ms
                self.reports[target.service_name] = self.scraper.scrape_once(target)

    def start(self) -> None:
        for target in self.targets:
            self._check_registered(target)
        self._thread = threading.Thread(target=self._run, name="scrape-loop", daemon=True)
        self._thread.start()
        logger.info(f"Scrape loop started for {len(self.targets)} targets")

    def _run(self) -> None:
        last_run: Dict[str, int] = {}
        while not self._stop.is_set():
            try:
                self.run_pending(self.scraper.clock.now_ms(), last_run)
            except Exception as e:
                logger.error(f"Error in scrape loop: {str(e)}")
            self._stop.wait(1.0)

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5)
