"""HTTP read-model over a pipeline's ledger and metrics store."""
import logging
import time
from typing import List, Optional

from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from prometheus_client import CONTENT_TYPE_LATEST, CollectorRegistry, Counter, Gauge, Histogram, generate_latest
from pydantic import BaseModel, Field

from src.config import API_ALLOWED_ORIGINS, Config
from src.errors import PlatformError, PlatformValidationError
from src.harness.pipeline import Pipeline
from src.metrics.scraper import ScrapeLoop, ScrapeTarget
from src.nft.registry import find_token, verify

logger = logging.getLogger(__name__)


class ScrapeTargetRequest(BaseModel):
    service_name: str
    url: str
    interval: str = Field(default_factory=lambda: Config.SCRAPE_INTERVAL)


class ApiTelemetry:
    """Self-telemetry on a private registry so several apps can coexist in one process."""

    def __init__(self):
        self.registry = CollectorRegistry()
        self.requests = Counter(
            "slo_ledger_api_requests_total", "API requests", ["method", "endpoint", "status"], registry=self.registry
        )
        self.duration = Histogram(
            "slo_ledger_api_request_duration_seconds", "API request duration", ["method", "endpoint"], registry=self.registry
        )
        self.chain_height = Gauge("slo_ledger_chain_height", "Blocks on the primary peer", registry=self.registry)
        self.tokens = Gauge("slo_ledger_tokens", "Minted s-528 tokens", registry=self.registry)
        self.samples = Gauge("slo_ledger_store_samples", "Samples held by the primary store", registry=self.registry)

    def refresh(self, platform: Pipeline) -> None:
        if platform.network is not None:
            self.chain_height.set(platform.network.primary.height)
            self.tokens.set(len(platform.network.primary.state.tokens))
        if platform.stores:
            self.samples.set(platform.primary_store.sample_count())


def _require_ledger(platform: Pipeline) -> None:
    if platform.network is None:
        raise HTTPException(status_code=503, detail="The ledger has not been started")


def create_app(platform: Pipeline, scrape_loop: Optional[ScrapeLoop] = None, allowed_origins: Optional[List[str]] = None) -> FastAPI:
    """
    Build the API for a pipeline that has run at least its ``simulate`` stage.

    Args:
        platform (Pipeline): Source of the chain, the store and the monitor
        scrape_loop (ScrapeLoop, optional): Receives targets posted to /scrape-targets
        allowed_origins (List[str], optional): CORS origins; defaults to API_ALLOWED_ORIGINS
    """
    app = FastAPI(title="slo-ledger")
    telemetry = ApiTelemetry()
    app.state.platform = platform
    app.state.telemetry = telemetry

    app.add_middleware(
        CORSMiddleware,
        allow_origins=allowed_origins if allowed_origins is not None else API_ALLOWED_ORIGINS,
        allow_methods=["GET", "POST"],
        allow_headers=["*"],
    )

    @app.middleware("http")
    async def record_request(request: Request, call_next):
        started = time.perf_counter()
        response = await call_next(request)
        route = request.scope.get("route")
        endpoint = route.path if route is not None else request.url.path
        telemetry.requests.labels(request.method, endpoint, str(response.status_code)).inc()
        telemetry.duration.labels(request.method, endpoint).observe(time.perf_counter() - started)
        return response

    @app.get("/metrics")
    def metrics():
        telemetry.refresh(platform)
        return Response(generate_latest(telemetry.registry), media_type=CONTENT_TYPE_LATEST)

    @app.get("/slos")
    def list_slos():
        _require_ledger(platform)
        records = platform.network.primary.state.slos
        return {"slos": [{"slo_id": slo_id, **record} for slo_id, record in sorted(records.items())]}

    @app.get("/tokens/{token_id}")
    def get_token(token_id: str):
        _require_ledger(platform)
        peer = platform.network.primary
        token = find_token(peer.state, token_id)
        if token is None:
            raise HTTPException(status_code=404, detail=f"Unknown token {token_id}")
        record = peer.state.tokens[token_id]
        verification = verify(token_id, peer.chain)
        return {
            "token": token.to_dict(),
            "owner": record["owner"],
            "height": record["height"],
            "tx_id": record["tx_id"],
            "verified": verification.valid,
            "reason": verification.reason.value if verification.reason else None,
        }

    @app.post("/scrape-targets", status_code=201)
    def add_scrape_target(body: ScrapeTargetRequest):
        _require_ledger(platform)
        try:
            target = ScrapeTarget(body.service_name, body.url, body.interval)
        except PlatformValidationError as e:
            raise HTTPException(status_code=422, detail=str(e))

        services = platform.network.primary.state.services
        height = None
        if target.service_name not in services:
            receipt = platform.operator.register_service(target.service_name, target.url)
            if not receipt.ok:
                raise HTTPException(status_code=409, detail=receipt.error)
            height = receipt.height
        elif services[target.service_name].get("metrics_endpoint") != target.url:
            raise HTTPException(status_code=409, detail=f"Service {target.service_name} is registered with another endpoint")

        if scrape_loop is not None:
            try:
                scrape_loop.add_target(target)
            except PlatformError as e:
                raise HTTPException(status_code=409, detail=str(e))
        logger.info(f"Scrape target {target.service_name} -> {target.url} every {target.interval}")
        return {"service_name": target.service_name, "url": target.url, "interval": target.interval, "registered_at": height}

    @app.get("/alerts")
    def list_alerts(state: Optional[str] = None):
        alerts = [a.to_dict() for a in platform.alerts]
        if state is not None:
            alerts = [a for a in alerts if a["state"] == state]
        firing = platform.monitor.alert_state.firing() if platform.monitor is not None else []
        return {"alerts": alerts, "firing": firing}

    return app
