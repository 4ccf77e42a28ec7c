"""Command-line entry point (``slo-ledger``)."""
import functools
import json
import logging
import sys
from pathlib import Path
from typing import Optional

import click

from src.config import Config
from src.errors import PipelineError, PlatformError, PlatformValidationError
from src.harness import scenario as scenario_io
from src.harness.pipeline import Pipeline, RunReport
from src.harness.simulator import simulate as run_simulation
from src.ledger.chain import load_chain
from src.ledger.network import bench_summary, sweep_peers
from src.nft.registry import audit_query, verify as verify_token
from src.utils.clock import WallClock
from src.utils.helpers import setup_logging
from src.visualization.plots import PlatformPlots

logger = logging.getLogger(__name__)

EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def _exit_code(error: PlatformError) -> int:
    cause = error.cause if isinstance(error, PipelineError) else error
    return EXIT_VALIDATION if isinstance(cause, PlatformValidationError) else EXIT_RUNTIME


def handle_errors(command):
    """Map platform errors to exit codes: 1 for invalid input, 2 for runtime failures."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except PlatformError as e:
            logger.debug(f"Command failed: {str(e)}", exc_info=True)
            click.echo(f"Error: {e}", err=True)
            sys.exit(_exit_code(e))

    return wrapper


def run_dir(config: scenario_io.ScenarioConfig, out: Optional[str]) -> Path:
    return Path(out) if out else Config.DATA_DIR / "runs" / config.name


def _chain_path(config_path: str, chain: Optional[str]) -> Path:
    if chain:
        return Path(chain)
    return run_dir(scenario_io.load(config_path), None) / "chain.jsonl"


def _load_blocks(path: Path):
    try:
        return load_chain(path)
    except OSError as e:
        raise PlatformValidationError(f"Cannot read chain {path}: {e}") from e


config_option = click.option(
    "--config", "config_path", default="default", show_default=True,
    help="Scenario file, or 'default' for the built-in scenario",
)
out_option = click.option("--out", default=None, help="Output directory (defaults to data/runs/<scenario>)")


def _run_until(config_path: str, out: Optional[str], until: str, backend: Optional[str] = None) -> Pipeline:
    config = scenario_io.load(config_path)
    if backend:
        config.backend.kind = backend
    pipeline = Pipeline(config, out_dir=run_dir(config, out), show_progress=True)
    pipeline.run(until)
    return pipeline


@click.group()
@click.option("--log-level", default=Config.LOG_LEVEL, show_default=True)
@click.option("--json-logs/--text-logs", default=Config.LOG_JSON, help="Structured JSON log records")
def cli(log_level: str, json_logs: bool):
    """SLO discovery, generation and tokenization on a simulated permissioned ledger."""
    setup_logging(log_level, json_logs)


@cli.command()
@config_option
@click.option("--duration", default=None, help="Simulated duration (defaults to the scenario's)")
@click.option("--trace", "trace_path", default=None, help="Trace CSV path")
@click.option("--serve", is_flag=True, help="Serve /metrics per service on the wall clock")
@handle_errors
def simulate(config_path: str, duration: Optional[str], trace_path: Optional[str], serve: bool):
    """Run the synthetic services and write the request trace."""
    config = scenario_io.load(config_path)
    trace = Path(trace_path) if trace_path else run_dir(config, None) / "trace.csv"
    simulator = run_simulation(
        config.services,
        duration or config.duration,
        seed=config.seed,
        step=config.scrape_interval,
        trace_path=trace,
        serve=serve,
        clock=WallClock() if serve else None,
    )
    simulator.stop()
    click.echo(f"Simulated {len(simulator.services)} services; trace written to {trace}")


@cli.command()
@config_option
@out_option
@handle_errors
def scrape(config_path: str, out: Optional[str]):
    """Simulate and scrape every service into the store."""
    pipeline = _run_until(config_path, out, "scrape")
    click.echo(f"Stored {pipeline.primary_store.sample_count()} samples in {len(pipeline.primary_store.series_keys())} series")


@cli.command()
@config_option
@out_option
@handle_errors
def discover(config_path: str, out: Optional[str]):
    """Federated training over the ledger, then SLI ranking."""
    pipeline = _run_until(config_path, out, "discover")
    for position, (metric, importance) in enumerate(pipeline.ranking, start=1):
        click.echo(f"{position:>2}. {metric:<40} {importance:.6f}")


@cli.command()
@config_option
@out_option
@click.option("--backend", type=click.Choice(["template", "llm"]), default=None)
@handle_errors
def generate(config_path: str, out: Optional[str], backend: Optional[str]):
    """Generate SLOs and burn-rate alert rules from the ranked SLIs."""
    pipeline = _run_until(config_path, out, "generate", backend)
    for entry in pipeline.report.slos:
        suffix = " (fallback)" if entry["fallback"] else ""
        click.echo(f"{entry['slo_id']} via {entry['backend']}{suffix}")
    click.echo(f"{len(pipeline.rules)} alert rules")


@cli.command()
@config_option
@out_option
@handle_errors
def mint(config_path: str, out: Optional[str]):
    """Generate SLOs and mint them as s-528 tokens."""
    pipeline = _run_until(config_path, out, "mint")
    for entry in pipeline.report.slo_tokens:
        click.echo(f"{entry['token_id']} {entry['kind']} {entry['service']}/{entry['name']} v{entry['version']} @ {entry['height']}")


@cli.command()
@click.argument("token_id")
@config_option
@click.option("--chain", default=None, help="Chain dump (defaults to the scenario's run directory)")
@handle_errors
def verify(token_id: str, config_path: str, chain: Optional[str]):
    """Recompute a token's hashes and check the chain up to head."""
    path = _chain_path(config_path, chain)
    try:
        blocks = load_chain(path)
    except OSError as e:
        raise PlatformValidationError(f"Cannot read chain {path}: {e}") from e
    except (ValueError, KeyError) as e:
        click.echo(f"HashMismatch: chain dump {path} is corrupt ({e})", err=True)
        sys.exit(EXIT_RUNTIME)
    result = verify_token(token_id, blocks)
    if not result.valid:
        click.echo(f"{result.reason.value}: {result.detail}", err=True)
        sys.exit(EXIT_RUNTIME)
    click.echo(f"valid {result.token.kind.value} token for {result.token.service} at height {result.block_height}")


@cli.command()
@click.option("--service", required=True)
@config_option
@click.option("--chain", default=None, help="Chain dump (defaults to the scenario's run directory)")
@handle_errors
def audit(service: str, config_path: str, chain: Optional[str]):
    """List the tokens minted for a service, oldest first."""
    blocks = _load_blocks(_chain_path(config_path, chain))
    records = audit_query(blocks, service)
    for record in records:
        click.echo(
            f"{record.block_height:>6} {record.kind:<4} {record.name} v{record.version} "
            f"{record.token_id} owner={record.current_owner}"
        )
    click.echo(f"{len(records)} record(s) for {service}")


@cli.command()
@config_option
@out_option
@handle_errors
def monitor(config_path: str, out: Optional[str]):
    """Run the pipeline and evaluate budgets, alerts and predictions per tick."""
    pipeline = _run_until(config_path, out, "monitor")
    firing = [a for a in pipeline.alerts if a.state.value == "firing"]
    click.echo(f"{pipeline.monitor.ticks} ticks, {len(firing)} firing alert transition(s)")
    for prediction in pipeline.report.predictions:
        click.echo(json.dumps(prediction, sort_keys=True))


@cli.command("bench-ledger")
@config_option
@click.option("--peers", default=7, show_default=True, type=click.IntRange(1))
@click.option("--latency-ms", default=Config.NETWORK_LATENCY_MS, show_default=True, type=click.IntRange(0))
@click.option("--tx-rate", default=20.0, show_default=True, type=float)
@click.option("--duration-s", default=5.0, show_default=True, type=float)
@click.option("--out", "out_path", default=None, help="Summary CSV (defaults to data/reports/bench_ledger.csv)")
@click.option("--plots", is_flag=True, help="Also plot latency by peer count")
@handle_errors
def bench_ledger(config_path: str, peers: int, latency_ms: int, tx_rate: float, duration_s: float, out_path: Optional[str], plots: bool):
    """Block acceptance latency for 1..N peers."""
    config = scenario_io.load(config_path)
    reports = sweep_peers(
        peers,
        latency_ms=latency_ms,
        tx_rate=tx_rate,
        duration_s=duration_s,
        block_interval_ms=config.ledger.block_interval_ms,
        max_block_txs=config.ledger.max_block_txs,
    )
    path = Path(out_path) if out_path else Config.REPORTS_DIR / "bench_ledger.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    summary = bench_summary(reports)
    summary.to_csv(path, index=False)
    for report in reports:
        report.to_csv(path.with_name(f"{path.stem}_peers{report.peer_count}.csv"))
    if plots:
        PlatformPlots().plot_block_times(summary, save=True, save_dir=str(path.parent / "figures"))
    click.echo(summary.drop(columns=["state_hash"]).to_string(index=False))
    click.echo(f"Wrote {path}")


@cli.command()
@config_option
@out_option
@click.option("--backend", type=click.Choice(["template", "llm"]), default=None)
@click.option("--plots", is_flag=True, help="Plot FL curves and error budgets into the run directory")
@handle_errors
def run(config_path: str, out: Optional[str], backend: Optional[str], plots: bool):
    """The full pipeline: simulate, scrape, discover, generate, mint, monitor."""
    pipeline = _run_until(config_path, out, "monitor", backend)
    report: RunReport = pipeline.report
    if report.fallback_used:
        click.echo("LLM backend unavailable; SLOs were generated from templates", err=True)
    click.echo(
        f"{len(report.slo_tokens)} tokens, {len(report.alerts)} alert transitions, "
        f"chain height {report.chain['height']} verified={report.chain['verified']}"
    )
    if plots:
        PlatformPlots().create_run_report(pipeline.out_dir)
    click.echo(f"Report written to {pipeline.out_dir / 'report.json'}")


def main():
    cli()


if __name__ == "__main__":
    main()
