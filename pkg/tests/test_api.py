import pytest
from fastapi.testclient import TestClient
from prometheus_client.parser import text_string_to_metric_families

from src.api.main import create_app
from src.config import Config
from src.harness import scenario
from src.harness.pipeline import Pipeline, pipeline_run
from src.metrics.scraper import ScrapeLoop, Scraper
from src.metrics.store import TimeSeriesStore

ORIGIN = "http://dashboard.test"


def api_scenario():
    return scenario.from_dict({
        "schema_version": 1,
        "name": "api",
        "duration": "15m",
        "services": [{"name": "vault", "endpoints": [{"path": "/v1/secret", "base_rate": 5, "error_ratio": 0.01}]}],
        "fl": {"peers": 1, "rounds": 1, "epochs": 5, "permutations": 2},
        "slos": [{"service": "vault", "kind": "availability", "target": 0.99, "window": "30d"}],
        "ledger": {"peer_count": 2},
        "monitor": {"ticks": 2},
    })


@pytest.fixture(scope="module")
def platform():
    _, pipeline = pipeline_run(api_scenario())
    return pipeline


@pytest.fixture
def client(platform):
    return TestClient(create_app(platform, allowed_origins=[ORIGIN]))


def test_list_slos(client):
    response = client.get("/slos")

    assert response.status_code == 200
    (slo,) = response.json()["slos"]
    assert slo["slo_id"].startswith("vault")
    assert slo["slo"]["target"] == 0.99


def test_get_token_is_verified(client, platform):
    token = next(t for t in platform.tokens if t.kind.value == "slo")

    body = client.get(f"/tokens/{token.token_id}").json()

    assert body["verified"] is True
    assert body["reason"] is None
    assert body["owner"] == "operator"
    assert body["token"]["token_id"] == token.token_id


def test_unknown_token_is_404(client):
    assert client.get(f"/tokens/{'ab' * 32}").status_code == 404


def test_register_scrape_target(client, platform):
    response = client.post("/scrape-targets", json={"service_name": "amf", "url": "http://amf:9100/metrics"})

    assert response.status_code == 201
    assert response.json()["registered_at"] is not None
    assert platform.network.primary.state.services["amf"]["metrics_endpoint"] == "http://amf:9100/metrics"

    again = client.post("/scrape-targets", json={"service_name": "amf", "url": "http://amf:9100/metrics"})
    assert again.status_code == 201
    assert again.json()["registered_at"] is None


def test_scrape_target_conflicts_and_validation(client):
    conflict = client.post("/scrape-targets", json={"service_name": "vault", "url": "http://elsewhere:1/metrics"})
    assert conflict.status_code == 409

    invalid = client.post("/scrape-targets", json={"service_name": "smf", "url": "http://smf/metrics", "interval": "fast"})
    assert invalid.status_code == 422
    assert client.post("/scrape-targets", json={"url": "http://smf/metrics"}).status_code == 422


def test_posted_target_joins_the_scrape_loop(platform):
    loop = ScrapeLoop(Scraper(TimeSeriesStore(), is_registered=lambda name: name in platform.network.primary.state.services), [])
    client = TestClient(create_app(platform, scrape_loop=loop))

    response = client.post("/scrape-targets", json={"service_name": "udm", "url": "http://udm:9100/metrics", "interval": "30s"})

    assert response.status_code == 201
    assert [(t.service_name, t.interval) for t in loop.targets] == [("udm", "30s")]


def test_posted_target_defaults_to_configured_interval(platform, monkeypatch):
    monkeypatch.setattr(Config, "SCRAPE_INTERVAL", "45s")
    loop = ScrapeLoop(Scraper(TimeSeriesStore(), is_registered=lambda name: True), [])
    client = TestClient(create_app(platform, scrape_loop=loop))

    response = client.post("/scrape-targets", json={"service_name": "ausf", "url": "http://ausf:9100/metrics"})

    assert response.status_code == 201
    assert [(t.service_name, t.interval) for t in loop.targets] == [("ausf", "45s")]


def test_alerts_endpoint(client, platform):
    body = client.get("/alerts").json()

    assert len(body["alerts"]) == len(platform.alerts)
    assert client.get("/alerts", params={"state": "no-such-state"}).json()["alerts"] == []
    assert isinstance(body["firing"], list)


def test_metrics_endpoint_parses(client, platform):
    client.get("/slos")

    response = client.get("/metrics")
    families = {f.name: f for f in text_string_to_metric_families(response.text)}

    (height,) = families["slo_ledger_chain_height"].samples
    assert height.value == platform.network.primary.height
    requests_seen = [
        s for s in families["slo_ledger_api_requests"].samples
        if s.name.endswith("_total") and s.labels["endpoint"] == "/slos"
    ]
    assert requests_seen[0].value >= 1
    assert families["slo_ledger_tokens"].samples[0].value == len(platform.tokens)


def test_cors_headers(client):
    response = client.get("/slos", headers={"Origin": ORIGIN})
    assert response.headers["access-control-allow-origin"] == ORIGIN


def test_ledger_not_started_is_503():
    client = TestClient(create_app(Pipeline(api_scenario())))
    assert client.get("/slos").status_code == 503
    assert client.get("/alerts").json() == {"alerts": [], "firing": []}
