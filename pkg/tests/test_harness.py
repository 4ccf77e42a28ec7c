import json
import logging
import socket

import pandas as pd
import pytest
import requests
from click.testing import CliRunner

from src.errors import ConfigError, PipelineError, PortUnavailable
from src.harness import scenario
from src.harness.cli import cli
from src.harness.pipeline import STAGES, pipeline_run
from src.harness.simulator import TRACE_COLUMNS, InProcessFetcher, Simulator, check_port, simulate
from src.metrics.exposition import parse_exposition
from src.metrics.scraper import Scraper
from src.metrics.store import TimeSeriesStore
from src.visualization.plots import PlatformPlots


def small_scenario(**overrides):
    """One vault service, two FL peers, a two-node ledger; a few seconds of work end to end."""
    data = {
        "schema_version": 1,
        "name": "small",
        "seed": 3,
        "duration": "30m",
        "scrape_interval": "15s",
        "services": [{
            "name": "vault",
            "endpoints": [{"path": "/v1/secret", "base_rate": 10, "error_ratio": 0.005}],
            "fault_schedule": [{"start": "12m", "duration": "8m", "error_ratio_override": 0.3}],
        }],
        "fl": {"peers": 2, "rounds": 1, "epochs": 20, "window": "5m", "sample_every": "1m", "permutations": 5},
        "slos": [{"service": "vault", "kind": "availability", "target": 0.99, "window": "30d"}],
        "ledger": {"peer_count": 2},
        "monitor": {"ticks": 3},
    }
    data.update(overrides)
    return data


class UnreachableSession:
    def post(self, url, json=None, timeout=None):
        raise requests.ConnectionError("connection refused")


@pytest.fixture
def restore_logging():
    """The CLI reconfigures the root logger; put pytest's handlers back afterwards."""
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


def test_default_scenario_loads():
    config = scenario.load("default")
    assert config.name == "default"
    assert [s.name for s in config.services] == ["vault", "identity-storage"]
    assert config.slos[1].threshold_seconds == 1.0
    assert config.monitor.ticks == 30


def test_dump_then_load_round_trips(tmp_path):
    config = scenario.load("default")
    path = tmp_path / "scenario.yaml"

    scenario.dump(config, path)

    assert scenario.load(path) == config


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigError):
        scenario.from_dict(small_scenario(bogus=1))
    with pytest.raises(ConfigError):
        scenario.from_dict(small_scenario(fl={"peers": 2, "learning_rate": 0.1}))


def test_semantic_config_errors():
    latency = {"service": "vault", "kind": "latency", "target": 0.99, "window": "30d"}
    with pytest.raises(ConfigError):
        scenario.from_dict(small_scenario(slos=[latency]))
    with pytest.raises(ConfigError):
        scenario.from_dict(small_scenario(slos=[{**latency, "service": "nobody", "kind": "availability"}]))
    services = small_scenario()["services"]
    with pytest.raises(ConfigError):
        scenario.from_dict(small_scenario(services=services + services))
    with pytest.raises(ConfigError):
        scenario.load("does-not-exist.yaml")


def test_simulator_is_deterministic_under_a_seed():
    services = scenario.from_dict(small_scenario()).services

    first = simulate(services, "5m", seed=11)
    second = simulate(services, "5m", seed=11)
    other = simulate(services, "5m", seed=12)

    pd.testing.assert_frame_equal(first.trace_frame(), second.trace_frame())
    assert first.services["vault"].exposition() == second.services["vault"].exposition()
    assert not first.trace_frame().equals(other.trace_frame())
    assert list(first.trace_frame().columns) == TRACE_COLUMNS
    assert len(first.trace) == 20


def test_counters_match_the_trace():
    config = scenario.from_dict(small_scenario())
    simulator = simulate(config.services, "30m", seed=1)
    trace = simulator.trace_frame()
    service = simulator.services["vault"]

    assert service.requests[("/v1/secret", "500")] == trace["errors"].sum()
    assert sum(service.requests.values()) == trace["requests"].sum()
    assert 0.8 * 10 * 1800 < trace["requests"].sum() < 1.2 * 10 * 1800


def test_fault_window_overrides_error_ratio():
    trace = simulate(scenario.from_dict(small_scenario()).services, "30m", seed=1).trace_frame()
    # a row covers the step that ends at t_ms
    elapsed_s = trace["t_ms"] / 1000 - 15
    in_fault = (elapsed_s >= 12 * 60) & (elapsed_s < 20 * 60)

    assert trace.loc[in_fault, "fault_active"].all()
    assert (trace.loc[in_fault, "error_ratio"] == 0.3).all()
    assert not trace.loc[~in_fault, "fault_active"].any()
    assert (trace.loc[~in_fault, "error_ratio"] == 0.005).all()
    assert trace.loc[in_fault, "errors"].sum() > 10 * trace.loc[~in_fault, "errors"].sum()


def test_zero_rate_endpoint_exposes_zero_series():
    data = small_scenario()
    data["services"][0]["endpoints"] = [{"path": "/idle", "base_rate": 0, "error_ratio": 0.0}]
    simulator = simulate(scenario.from_dict(data).services, "2m", seed=0)

    parsed = parse_exposition(simulator.services["vault"].exposition().encode("utf-8"), 0)
    counts = {s.series.get("code"): s.value for _, s in parsed.samples if s.series.metric_name == "vault_requests_total"}

    assert parsed.diagnostics == []
    assert counts == {"200": 0.0, "500": 0.0}
    assert simulator.trace_frame()["requests"].sum() == 0


def test_in_process_scrape_fills_the_store(clock):
    services = scenario.from_dict(small_scenario()).services
    simulator = Simulator(services, seed=0, clock=clock)
    store = TimeSeriesStore()
    scraper = Scraper(store, InProcessFetcher(simulator), clock)
    (target,) = simulator.targets()

    simulator.run("5m", on_step=lambda _t: scraper.scrape_once(target))

    assert target.url == "inproc://vault/metrics"
    assert "vault_cpu_utilization" in store.families()
    assert store.sample_count() > 0


def test_check_port_reports_a_bound_port():
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as sock:
        sock.bind(("127.0.0.1", 0))
        sock.listen(1)
        with pytest.raises(PortUnavailable):
            check_port("127.0.0.1", sock.getsockname()[1])


def test_pipeline_is_deterministic(tmp_path):
    config = scenario.from_dict(small_scenario())

    first, _ = pipeline_run(config, tmp_path / "a")
    second, _ = pipeline_run(scenario.from_dict(small_scenario()), tmp_path / "b")

    assert first.stages == list(STAGES)
    assert first.to_json() == second.to_json()
    assert first.chain["state_hash"] == second.chain["state_hash"]
    assert first.chain["verified"] and first.chain["peers_agree"]
    assert (tmp_path / "a" / "report.json").read_text() == (tmp_path / "b" / "report.json").read_text()
    for name in ("trace.csv", "fl_history.csv", "slos.jsonl", "rules.yaml", "monitor.jsonl", "chain.jsonl"):
        assert (tmp_path / "a" / name).exists()


def test_pipeline_mints_sli_and_slo_tokens():
    report, pipeline = pipeline_run(scenario.from_dict(small_scenario()))

    assert [t["kind"] for t in report.slo_tokens] == ["sli", "slo"]
    assert len(pipeline.rules) == 3
    assert pipeline.monitor.ticks == 3
    assert not report.fallback_used


def test_injected_error_fault_ranks_error_ratio_first():
    data = small_scenario(duration="40m")
    data["services"][0]["fault_schedule"] = [{"start": "10m", "duration": "15m", "error_ratio_override": 0.3}]
    data["fl"] = {"peers": 2, "rounds": 2, "epochs": 300, "lr": 1.0, "window": "5m", "sample_every": "1m", "permutations": 10}

    report, _ = pipeline_run(scenario.from_dict(data), until="discover")

    assert report.sli_ranking[0]["metric"] == "vault:error_ratio"
    assert report.fl["positives"]["fl-0"] > 0
    assert report.stages == ["simulate", "scrape", "discover"]


def test_unreachable_llm_falls_back_to_templates():
    data = small_scenario(backend={"kind": "llm", "endpoint": "http://llm.test/api/generate"})

    report, pipeline = pipeline_run(scenario.from_dict(data), llm_session=UnreachableSession(), until="generate")

    assert report.fallback_used
    assert report.slos[0]["backend"] == "template"
    assert pipeline.slos[0].sli.good_query == 'sum(rate(vault_requests_total{code!~"5.."}[30d]))'


def test_failing_stage_is_labelled():
    data = small_scenario(slos=[{"service": "vault", "kind": "availability", "target": 0.99, "window": "1h"}])

    with pytest.raises(PipelineError) as raised:
        pipeline_run(scenario.from_dict(data))

    assert raised.value.stage == "generate"
    assert raised.value.report.stages == ["simulate", "scrape", "discover"]


def test_run_report_plots_fl_curves_and_budget(tmp_path):
    _, pipeline = pipeline_run(scenario.from_dict(small_scenario()), tmp_path / "run")

    written = PlatformPlots().create_run_report(pipeline.out_dir)

    figures = tmp_path / "run" / "figures"
    assert written == [figures / "fl_curves.png", figures / "error_budget.png"]
    assert all(path.stat().st_size > 0 for path in written)


def test_budget_plot_needs_status_records():
    plots = PlatformPlots()
    with pytest.raises(ValueError):
        plots.plot_budget([])
    with pytest.raises(ValueError):
        plots.plot_budget([{"type": "alert", "slo_id": "vault/availability/30d"}])


def test_cli_bench_ledger_writes_summary(tmp_path, restore_logging):
    out = tmp_path / "bench.csv"

    result = CliRunner().invoke(cli, [
        "--log-level", "WARNING", "bench-ledger", "--peers", "2", "--tx-rate", "10", "--duration-s", "1", "--out", str(out), "--plots",
    ])

    assert result.exit_code == 0, result.output
    summary = pd.read_csv(out)
    assert list(summary["peer_count"]) == [1, 2]
    assert (tmp_path / "bench_peers2.csv").exists()
    assert (tmp_path / "figures" / "block_times.png").exists()


def test_cli_run_audit_and_verify(tmp_path, restore_logging):
    config_path = tmp_path / "small.yaml"
    scenario.dump(scenario.from_dict(small_scenario()), config_path)
    run_dir = tmp_path / "run"
    runner = CliRunner()

    result = runner.invoke(cli, ["--log-level", "WARNING", "run", "--config", str(config_path), "--out", str(run_dir), "--plots"])
    assert result.exit_code == 0, result.output
    assert (run_dir / "figures" / "error_budget.png").exists()

    chain = run_dir / "chain.jsonl"
    audit = runner.invoke(cli, ["audit", "--service", "vault", "--chain", str(chain)])
    assert audit.exit_code == 0
    assert "2 record(s) for vault" in audit.output

    report = json.loads((run_dir / "report.json").read_text())
    (slo_token,) = [t["token_id"] for t in report["slo_tokens"] if t["kind"] == "slo"]
    verified = runner.invoke(cli, ["verify", slo_token, "--chain", str(chain)])
    assert verified.exit_code == 0
    assert "valid slo token for vault" in verified.output

    tampered = tmp_path / "tampered.jsonl"
    tampered.write_text(chain.read_text().replace("0.99", "0.98"))
    rejected = runner.invoke(cli, ["verify", slo_token, "--chain", str(tampered)])
    assert rejected.exit_code == 2
    assert "HashMismatch" in rejected.output


def test_cli_invalid_config_exits_with_validation_code(tmp_path, restore_logging):
    path = tmp_path / "bad.yaml"
    path.write_text("schema_version: 1\nservices: []\n")

    result = CliRunner().invoke(cli, ["run", "--config", str(path), "--out", str(tmp_path / "run")])

    assert result.exit_code == 1
    assert "Error:" in result.output
