"""Synthetic services with seeded traffic, fault schedules and a text exposition endpoint.

Naming convention for a service ``name`` (prefix = name with non-alphanumerics as ``_``):

    <prefix>_requests_total{path, code}        counter, code 200 or 500
    <prefix>_latency_seconds_bucket{path, le}  histogram (plus _sum and _count)
    <prefix>_cpu_utilization                   gauge, noise in [0, 1]
    <prefix>_queue_depth                       gauge, Poisson noise
"""
import logging
import socket
import threading
import zlib
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import uvicorn
from fastapi import FastAPI
from fastapi.responses import PlainTextResponse
from tqdm import tqdm

from src.errors import PortUnavailable
from src.harness.scenario import EndpointConfig, ServiceConfig
from src.metrics.exposition import format_le, serialize_exposition
from src.metrics.scraper import ScrapeTarget
from src.metrics.types import MetricFamily, MetricKind, MetricSample, SeriesKey
from src.utils.clock import SimulatedClock
from src.utils.durations import parse_duration, parse_duration_ms
from src.utils.helpers import metric_safe

logger = logging.getLogger(__name__)

LATENCY_BUCKETS = (0.05, 0.1, 0.25, 0.5, 1.0, 2.5, 5.0, float("inf"))
CODES = ("200", "500")
TRACE_COLUMNS = ["t_ms", "service", "path", "requests", "errors", "error_ratio", "latency_scale", "fault_active"]
EXPOSITION_CONTENT_TYPE = "text/plain; version=0.0.4; charset=utf-8"
IN_PROCESS_SCHEME = "inproc"


class SyntheticService:
    """One service: per-endpoint request counters, a latency histogram and two noise gauges."""

    def __init__(self, config: ServiceConfig, seed: int = 0):
        self.config = config
        self.name = config.name
        self.prefix = metric_safe(config.name)
        self.rng = np.random.default_rng([seed, zlib.crc32(config.name.encode("utf-8"))])
        self._lock = threading.Lock()
        self.requests: Dict[Tuple[str, str], int] = {
            (e.path, code): 0 for e in config.endpoints for code in CODES
        }
        self.bucket_counts: Dict[str, np.ndarray] = {
            e.path: np.zeros(len(LATENCY_BUCKETS), dtype=np.int64) for e in config.endpoints
        }
        self.latency_sum: Dict[str, float] = {e.path: 0.0 for e in config.endpoints}
        self.cpu = 0.0
        self.queue_depth = 0.0
        self.app = self._build_app()

    def _build_app(self) -> FastAPI:
        app = FastAPI(title=f"{self.name} simulator")

        @app.get("/metrics", response_class=PlainTextResponse)
        def metrics():
            return PlainTextResponse(self.exposition(), media_type=EXPOSITION_CONTENT_TYPE)

        @app.get("/healthz")
        def healthz():
            return {"service": self.name, "status": "ok"}

        return app

    def _effective(self, endpoint: EndpointConfig, elapsed_s: float) -> Tuple[float, float, bool]:
        ratio, scale, active = endpoint.error_ratio, 1.0, False
        for fault in self.config.fault_schedule:
            if fault.active(elapsed_s, endpoint.path):
                active = True
                if fault.error_ratio_override is not None:
                    ratio = fault.error_ratio_override
                if fault.latency_scale is not None:
                    scale *= fault.latency_scale
        return ratio, scale, active

    def step(self, elapsed_s: float, dt_s: float, t_ms: int) -> List[dict]:
        """Advance by ``dt_s`` seconds of traffic starting ``elapsed_s`` into the run."""
        rows = []
        with self._lock:
            for endpoint in self.config.endpoints:
                ratio, scale, active = self._effective(endpoint, elapsed_s)
                n = int(self.rng.poisson(endpoint.base_rate * dt_s))
                errors = int(self.rng.binomial(n, ratio)) if n else 0
                latencies = self.rng.lognormal(endpoint.latency_mu, endpoint.latency_sigma, size=n) * scale
                self.requests[(endpoint.path, "200")] += n - errors
                self.requests[(endpoint.path, "500")] += errors
                buckets = np.searchsorted(np.asarray(LATENCY_BUCKETS), latencies, side="left")
                self.bucket_counts[endpoint.path] += np.bincount(buckets, minlength=len(LATENCY_BUCKETS))
                self.latency_sum[endpoint.path] += float(latencies.sum())
                rows.append({
                    "t_ms": t_ms,
                    "service": self.name,
                    "path": endpoint.path,
                    "requests": n,
                    "errors": errors,
                    "error_ratio": ratio,
                    "latency_scale": scale,
                    "fault_active": active,
                })
            self.cpu = float(self.rng.uniform(0.2, 0.6))
            self.queue_depth = float(self.rng.poisson(5))
        return rows

    def families(self, t_ms: int = 0) -> List[Tuple[MetricFamily, List[MetricSample]]]:
        with self._lock:
            requests = [
                MetricSample(SeriesKey.of(f"{self.prefix}_requests_total", {"path": path, "code": code}), t_ms, float(v))
                for (path, code), v in sorted(self.requests.items())
            ]
            histogram = []
            for path in sorted(self.bucket_counts):
                cumulative = np.cumsum(self.bucket_counts[path])
                for bound, count in zip(LATENCY_BUCKETS, cumulative):
                    key = SeriesKey.of(f"{self.prefix}_latency_seconds_bucket", {"path": path, "le": format_le(bound)})
                    histogram.append(MetricSample(key, t_ms, float(count)))
                histogram.append(MetricSample(SeriesKey.of(f"{self.prefix}_latency_seconds_sum", {"path": path}), t_ms, self.latency_sum[path]))
                histogram.append(MetricSample(SeriesKey.of(f"{self.prefix}_latency_seconds_count", {"path": path}), t_ms, float(cumulative[-1])))
            gauges = [
                (MetricFamily(f"{self.prefix}_cpu_utilization", MetricKind.GAUGE, "CPU share in use"),
                 [MetricSample(SeriesKey(f"{self.prefix}_cpu_utilization"), t_ms, self.cpu)]),
                (MetricFamily(f"{self.prefix}_queue_depth", MetricKind.GAUGE, "Requests waiting"),
                 [MetricSample(SeriesKey(f"{self.prefix}_queue_depth"), t_ms, self.queue_depth)]),
            ]
        return [
            (MetricFamily(f"{self.prefix}_requests_total", MetricKind.COUNTER, "Requests by path and status code"), requests),
            (MetricFamily(f"{self.prefix}_latency_seconds", MetricKind.HISTOGRAM, "Request latency"), histogram),
        ] + gauges

    def exposition(self) -> str:
        return serialize_exposition(self.families(), include_timestamps=False)


def check_port(host: str, port: int) -> None:
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as sock:
        try:
            sock.bind((host, port))
        except OSError as e:
            raise PortUnavailable(f"Port {port} on {host} is not available: {e}") from e


class Simulator:
    """Steps every synthetic service on a shared clock and records a trace."""

    def __init__(
        self,
        services: Sequence[ServiceConfig],
        seed: int = 0,
        clock=None,
        step: str = "15s",
        start_ms: Optional[int] = None,
    ):
        self.clock = clock or SimulatedClock()
        self.step_ms = parse_duration_ms(step)
        self.start_ms = self.clock.now_ms() if start_ms is None else start_ms
        self.services: Dict[str, SyntheticService] = {s.name: SyntheticService(s, seed) for s in services}
        self.trace: List[dict] = []
        self._servers: List[Tuple[uvicorn.Server, threading.Thread]] = []

    @property
    def elapsed_s(self) -> float:
        return (self.clock.now_ms() - self.start_ms) / 1000.0

    def step(self) -> int:
        """Generate one step of traffic, then advance the clock by one step."""
        elapsed = self.elapsed_s
        t_ms = self.clock.now_ms() + self.step_ms
        for service in self.services.values():
            self.trace.extend(service.step(elapsed, self.step_ms / 1000.0, t_ms))
        self.clock.advance_to(t_ms)
        return t_ms

    def run(self, duration: str, on_step=None, show_progress: bool = False) -> None:
        steps = parse_duration_ms(duration) // self.step_ms
        for _ in tqdm(range(steps), desc="Simulating", disable=not show_progress):
            t_ms = self.step()
            if on_step is not None:
                on_step(t_ms)

    def trace_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.trace, columns=TRACE_COLUMNS)

    def write_trace(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.trace_frame().to_csv(path, index=False)
        logger.info(f"Wrote {len(self.trace)} trace rows to {path}")
        return path

    def targets(self, host: str = "127.0.0.1", interval: str = "15s") -> List[ScrapeTarget]:
        targets = []
        for service in self.services.values():
            port = service.config.port
            if self._servers and port:
                url = f"http://{host}:{port}/metrics"
            else:
                url = f"{IN_PROCESS_SCHEME}://{service.name}/metrics"
            targets.append(ScrapeTarget(service.name, url, interval))
        return targets

    def serve(self, host: str = "127.0.0.1") -> None:
        """Start one HTTP server per service on its configured port."""
        for service in self.services.values():
            check_port(host, service.config.port)
        for service in self.services.values():
            server = uvicorn.Server(uvicorn.Config(service.app, host=host, port=service.config.port, log_level="warning"))
            thread = threading.Thread(target=server.run, name=f"sim-{service.name}", daemon=True)
            thread.start()
            self._servers.append((server, thread))
            logger.info(f"Serving {service.name} metrics on http://{host}:{service.config.port}/metrics")

    def stop(self) -> None:
        for server, thread in self._servers:
            server.should_exit = True
            thread.join(timeout=5)
        self._servers = []


class InProcessFetcher:
    """Fetcher for ``inproc://<service>/metrics`` targets; reads the simulator directly."""

    def __init__(self, simulator: Simulator):
        self.simulator = simulator

    def fetch(self, target: ScrapeTarget) -> bytes:
        service = self.simulator.services.get(target.service_name)
        if service is None:
            raise KeyError(f"No simulated service {target.service_name}")
        return service.exposition().encode("utf-8")


def simulate(
    services: Sequence[ServiceConfig],
    duration: str,
    seed: int = 0,
    step: str = "15s",
    trace_path: Optional[Path] = None,
    serve: bool = False,
    host: str = "127.0.0.1",
    clock=None,
) -> Simulator:
    """
    Run the synthetic services for ``duration``.

    With ``serve`` the metrics endpoints stay up on their ports until
    ``Simulator.stop``; the clock should then be a WallClock.

    Raises:
        PortUnavailable: A configured port is already bound
    """
    simulator = Simulator(services, seed=seed, clock=clock, step=step)
    if serve:
        simulator.serve(host)
    if parse_duration(duration) > 0:
        simulator.run(duration)
    if trace_path is not None:
        simulator.write_trace(trace_path)
    return simulator
