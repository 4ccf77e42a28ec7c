"""End-to-end pipeline: simulate -> scrape -> discover -> generate -> mint -> monitor."""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from src.config import Config
from src.errors import PipelineError, PlatformValidationError
from src.fedlearn.evaluation import evaluate_model
from src.fedlearn.features import (
    CandidateMetric,
    DegradationRule,
    FeatureSpec,
    LocalDataset,
    RuleSet,
    featurize,
    fit_normalization,
)
from src.fedlearn.model import init_params
from src.fedlearn.ranking import rank_sli
from src.fedlearn.rounds import FLPeer, FederatedResult, run_federated
from src.harness.scenario import ScenarioConfig
from src.harness.simulator import InProcessFetcher, Simulator
from src.ledger.chain import dump_chain, verify_chain
from src.ledger.client import LedgerClient
from src.ledger.network import LedgerNetwork
from src.ledger.types import Contract
from src.metrics.scraper import Scraper, ScrapeTarget
from src.metrics.store import TimeSeriesStore
from src.metrics.types import MetricKind
from src.monitor.alerts import Alert
from src.monitor.loop import Monitor
from src.monitor.prediction import FlPredictor
from src.monitor.sinks import CompositeSink, JsonlSink, MemorySink
from src.nft.registry import mint, next_version
from src.nft.token import Provenance, S528Token, TokenKind, encode_s528
from src.slogen.alerts import derive_alert_rules, derive_error_budget
from src.slogen.export import export_jsonl, export_rules_yaml
from src.slogen.generator import GenerationContext, GenerationResult, generate_slo, make_backend
from src.slogen.prompts import build_prompt
from src.slogen.types import AlertRule, Objective, SliKind, SliMetric, SliSpec, SloSpec
from src.utils.canonical import canonical_json
from src.utils.clock import SimulatedClock
from src.utils.durations import parse_duration_ms
from src.utils.helpers import metric_safe

logger = logging.getLogger(__name__)

STAGES = ("simulate", "scrape", "discover", "generate", "mint", "monitor")
OPERATOR = "operator"


def candidate_metrics(service: str, window: str = "1m") -> List[Tuple[CandidateMetric, SliMetric]]:
    """The four candidate SLIs of a synthetic service and the raw metric behind each."""
    p = metric_safe(service)
    requests = f"{p}_requests_total"
    return [
        (CandidateMetric(f"{service}:error_ratio",
                         f'sum(rate({requests}{{code=~"5.."}}[{window}])) / sum(rate({requests}[{window}]))'),
         SliMetric(requests, MetricKind.COUNTER.value)),
        (CandidateMetric(f"{service}:p99_latency",
                         f"histogram_quantile(0.99, sum by (le) (rate({p}_latency_seconds_bucket[{window}])))"),
         SliMetric(f"{p}_latency_seconds_bucket", MetricKind.HISTOGRAM.value)),
        (CandidateMetric(f"{service}:cpu", f"{p}_cpu_utilization"),
         SliMetric(f"{p}_cpu_utilization", MetricKind.GAUGE.value)),
        (CandidateMetric(f"{service}:queue_depth", f"{p}_queue_depth"),
         SliMetric(f"{p}_queue_depth", MetricKind.GAUGE.value)),
    ]


def _finite(value: float) -> Optional[float]:
    return None if value is None or math.isnan(value) or math.isinf(value) else float(value)


@dataclass
class RunReport:
    scenario: str
    seed: int
    stages: List[str] = field(default_factory=list)
    sli_ranking: List[Dict[str, Any]] = field(default_factory=list)
    fl: Dict[str, Any] = field(default_factory=dict)
    slos: List[Dict[str, Any]] = field(default_factory=list)
    slo_tokens: List[Dict[str, Any]] = field(default_factory=list)
    alerts: List[Dict[str, Any]] = field(default_factory=list)
    predictions: List[Dict[str, Any]] = field(default_factory=list)
    chain: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "stages": self.stages,
            "sli_ranking": self.sli_ranking,
            "fl": self.fl,
            "slos": self.slos,
            "slo_tokens": self.slo_tokens,
            "alerts": self.alerts,
            "predictions": self.predictions,
            "chain": self.chain,
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    def write(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json() + "\n", encoding="utf-8")
        return path

    @property
    def fallback_used(self) -> bool:
        return any(s.get("fallback") for s in self.slos)


class Pipeline:
    """
    Runs a scenario stage by stage; every stage reads the outputs of the previous ones.

    Each FL peer operates its own replica of the synthetic services (seed
    ``scenario.seed + index``); the first peer's store backs monitoring.
    """

    def __init__(
        self,
        config: ScenarioConfig,
        out_dir: Optional[Path] = None,
        llm_session=None,
        show_progress: bool = False,
    ):
        if config.clock != "simulated":
            raise PlatformValidationError("The pipeline runs on the simulated clock; use service mode for wall time")
        self.config = config
        self.out_dir = Path(out_dir) if out_dir else None
        self.llm_session = llm_session
        self.show_progress = show_progress
        self.report = RunReport(config.name, config.seed)

        self.fl_ids = [f"fl-{i}" for i in range(config.fl.peers)]
        self.simulators: Dict[str, Simulator] = {}
        self.stores: Dict[str, TimeSeriesStore] = {}
        self.scrapers: Dict[str, Scraper] = {}
        self.targets: Dict[str, List[ScrapeTarget]] = {}
        self.network: Optional[LedgerNetwork] = None
        self.operator: Optional[LedgerClient] = None
        self.spec: Optional[FeatureSpec] = None
        self.raw_metrics: Dict[str, SliMetric] = {}
        self.datasets: Dict[str, LocalDataset] = {}
        self.fl_result: Optional[FederatedResult] = None
        self.ranking: List[Tuple[str, float]] = []
        self.generations: List[GenerationResult] = []
        self.slos: List[SloSpec] = []
        self.rules: List[AlertRule] = []
        self.tokens: List[S528Token] = []
        self.monitor: Optional[Monitor] = None
        self.sink = MemorySink()
        self.alerts: List[Alert] = []

    # helpers

    @property
    def primary_store(self) -> TimeSeriesStore:
        return self.stores[self.fl_ids[0]]

    @property
    def primary_simulator(self) -> Simulator:
        return self.simulators[self.fl_ids[0]]

    def _artifact(self, name: str) -> Optional[Path]:
        return self.out_dir / name if self.out_dir else None

    def _scrape_peer(self, fl_id: str) -> None:
        for target in self.targets[fl_id]:
            self.scrapers[fl_id].scrape_once(target)

    # stages

    def simulate(self) -> None:
        cfg = self.config
        end_ms = cfg.start_ms + parse_duration_ms(cfg.duration)
        ledger_clock = SimulatedClock(end_ms)
        self.network = LedgerNetwork(
            cfg.ledger.peer_count,
            latency_ms=cfg.ledger.latency_ms,
            block_interval_ms=cfg.ledger.block_interval_ms,
            max_block_txs=cfg.ledger.max_block_txs,
            clock=ledger_clock,
        )
        self.operator = LedgerClient(self.network, OPERATOR, self.network.peer_ids[0])
        self.operator.register_identity(role="operator")

        for index, fl_id in enumerate(self.fl_ids):
            clock = SimulatedClock(cfg.start_ms)
            simulator = Simulator(cfg.services, seed=cfg.seed + index, clock=clock, step=cfg.scrape_interval)
            store = TimeSeriesStore()
            self.simulators[fl_id] = simulator
            self.stores[fl_id] = store
            self.scrapers[fl_id] = Scraper(store, InProcessFetcher(simulator), clock, self._is_registered)
            self.targets[fl_id] = simulator.targets(interval=cfg.scrape_interval)

        for target in self.targets[self.fl_ids[0]]:
            self.operator.register_service(target.service_name, target.url)
        logger.info(f"Deployed {len(cfg.services)} services on {len(self.fl_ids)} peer replicas")

    def _is_registered(self, service: str) -> bool:
        return service in self.network.primary.state.services

    def scrape(self) -> None:
        for fl_id, simulator in self.simulators.items():
            self._scrape_peer(fl_id)
            simulator.run(
                self.config.duration,
                on_step=lambda _t, fl_id=fl_id: self._scrape_peer(fl_id),
                show_progress=self.show_progress,
            )
        trace = self._artifact("trace.csv")
        if trace is not None:
            self.primary_simulator.write_trace(trace)
        logger.info(f"Scraped {self.primary_store.sample_count()} samples into the primary store")

    def discover(self) -> None:
        cfg = self.config
        pairs = [pair for service in cfg.services for pair in candidate_metrics(service.name)]
        self.spec = FeatureSpec(tuple(c for c, _ in pairs), window=cfg.fl.window, step=cfg.scrape_interval)
        self.raw_metrics = {c.name: m for c, m in pairs}
        rule = RuleSet(tuple(DegradationRule.for_service(metric_safe(s.name), cfg.fl.window) for s in cfg.services))

        window_ms = parse_duration_ms(cfg.fl.window)
        every_ms = parse_duration_ms(cfg.fl.sample_every)
        end_ms = cfg.start_ms + parse_duration_ms(cfg.duration)
        times = list(range(cfg.start_ms + window_ms + every_ms, end_ms + 1, every_ms))

        raw = {fl_id: featurize(self.stores[fl_id], self.spec, times, rule, fl_id) for fl_id in self.fl_ids}
        normalization = fit_normalization(raw[self.fl_ids[0]].X)
        self.spec = self.spec.with_normalization(normalization)
        self.datasets = {fl_id: ds.normalized(normalization) for fl_id, ds in raw.items()}

        peers = []
        for index, fl_id in enumerate(self.fl_ids):
            node = self.network.peer_ids[index % len(self.network.peer_ids)]
            client = LedgerClient(self.network, fl_id, node)
            client.register_identity(role="fl-peer")
            peers.append(FLPeer(fl_id, self.datasets[fl_id], client))

        init = init_params(self.spec.dimension, cfg.fl.hidden_units, seed=cfg.fl.seed)
        self.fl_result = run_federated(
            self.network, peers, self.operator, init,
            rounds=cfg.fl.rounds, epochs=cfg.fl.epochs, lr=cfg.fl.lr, seed=cfg.fl.seed,
            normalization=normalization, feature_names=self.spec.feature_names,
            hidden_units=cfg.fl.hidden_units, show_progress=self.show_progress,
        )
        primary = self.datasets[self.fl_ids[0]]
        self.ranking = rank_sli(self.fl_result.params, primary, cfg.fl.permutations, seed=cfg.fl.seed)
        metrics = evaluate_model(self.fl_result.params, primary)

        last = self.fl_result.rounds[-1][self.fl_ids[0]]
        self.report.sli_ranking = [{"metric": name, "importance": _finite(imp)} for name, imp in self.ranking]
        self.report.fl = {
            "rounds": cfg.fl.rounds,
            "peers": list(self.fl_ids),
            "rows": {fl_id: len(ds) for fl_id, ds in self.datasets.items()},
            "positives": {fl_id: int(ds.y.sum()) for fl_id, ds in self.datasets.items()},
            "aggregate_digest": last.digest,
            "height": last.height,
            "loss": _finite(metrics["loss"]),
            "accuracy": _finite(metrics["accuracy"]),
            "auc": _finite(metrics["auc"]),
        }
        history = self._artifact("fl_history.csv")
        if history is not None:
            history.parent.mkdir(parents=True, exist_ok=True)
            self.fl_result.history.to_csv(history, index=False)
        logger.info(f"SLI ranking: {self.ranking[:3]}")

    def ranked_metrics(self, service: str) -> List[SliMetric]:
        """Raw metrics of ``service`` in FL ranking order."""
        prefix = f"{service}:"
        ranked = [name for name, _ in self.ranking if name.startswith(prefix)]
        if not ranked:
            return [metric for _, metric in candidate_metrics(service)]
        return [self.raw_metrics[name] for name in ranked]

    def generate(self) -> None:
        cfg = self.config
        backend = make_backend(
            cfg.backend.kind, cfg.backend.endpoint, cfg.backend.model, cfg.backend.max_repair_attempts,
            session=self.llm_session,
        )
        context = GenerationContext(known_kinds=self.primary_store.families(), allowed_windows=Config.SLO_WINDOWS)
        for objective_cfg in cfg.slos:
            objective = Objective(
                kind=SliKind(objective_cfg.kind),
                target=objective_cfg.target,
                window=objective_cfg.window,
                threshold_seconds=objective_cfg.threshold_seconds,
                description=objective_cfg.description,
                name=objective_cfg.name,
            )
            prompt = build_prompt(objective_cfg.service, self.ranked_metrics(objective_cfg.service), objective)
            result = generate_slo(backend, prompt, context)
            slo = result.slo
            self.generations.append(result)
            self.slos.append(slo)
            self.rules.extend(derive_alert_rules(slo))
            receipt = self.operator.commit(Contract.LLM, "record_slo", {
                "slo_id": slo.slo_id,
                "slo": slo.to_dict(),
                "provenance": {"backend": result.backend_used.value, "repairs": result.repairs},
            })
            self.report.slos.append({
                "slo_id": slo.slo_id,
                "backend": result.backend_used.value,
                "fallback": result.fallback,
                "repairs": result.repairs,
                "warnings": list(result.warnings),
                "budget_fraction": derive_error_budget(slo).budget_fraction,
                "good_query": slo.sli.good_query,
                "total_query": slo.sli.total_query,
                "height": receipt.height,
            })
        export = self._artifact("slos.jsonl")
        if export is not None:
            export_jsonl(self.slos, self.rules, export)
            export_rules_yaml(self.rules, self._artifact("rules.yaml"))

    def mint(self) -> None:
        fl_round = self.config.fl.rounds - 1
        state = self.network.primary.state
        for slo, result in zip(self.slos, self.generations):
            for obj in (slo.sli, slo):
                kind = TokenKind.SLI if isinstance(obj, SliSpec) else TokenKind.SLO
                version = next_version(state, kind, slo.sli.service, slo.sli.name)
                provenance = Provenance(fl_round, result.backend_used.value, self.network.clock.now_ms(), OPERATOR)
                token = encode_s528(obj, provenance, version)
                tx_id = mint(token, self.operator)
                record = state.tokens[token.token_id]
                self.tokens.append(token)
                self.report.slo_tokens.append({
                    "token_id": token.token_id,
                    "kind": token.kind.value,
                    "service": token.service,
                    "name": token.name,
                    "version": token.version,
                    "tx_id": tx_id,
                    "height": record["height"],
                })

    def monitor_stage(self) -> None:
        cfg = self.config
        predictor = FlPredictor(self.fl_result.params, self.spec) if self.fl_result is not None else None
        predictors = {s.name: predictor for s in cfg.services} if predictor is not None else {}
        sink = self.sink
        log = self._artifact("monitor.jsonl")
        if log is not None:
            sink = CompositeSink([self.sink, JsonlSink(log)])
        simulator = self.primary_simulator
        self.monitor = Monitor(
            self.slos, self.rules, self.primary_store, sink, simulator.clock,
            interval=cfg.monitor.interval, predictors=predictors, horizon=cfg.monitor.horizon,
            current_window=cfg.monitor.current_window,
        )
        steps_per_tick = max(1, self.monitor.interval_ms // simulator.step_ms)
        height = self.network.primary.height
        for _ in range(cfg.monitor.ticks):
            for _ in range(steps_per_tick):
                simulator.step()
                self._scrape_peer(self.fl_ids[0])
            tick = self.monitor.tick()
            self.alerts.extend(tick.alerts)
            self.report.alerts += [{**a.to_dict(), "chain_height": height} for a in tick.alerts]
            if tick.predictions:
                self.report.predictions = [{**p.to_dict(), "chain_height": height} for p in tick.predictions]

    def finish(self) -> None:
        chain = self.network.primary.chain
        verification = verify_chain(chain, self.network.peer_ids)
        self.report.chain = {
            "height": self.network.primary.height,
            "head_hash": chain[-1].block_hash if chain else None,
            "state_hash": self.network.primary.state.state_hash(),
            "peers_agree": self.network.chains_identical(),
            "verified": verification.ok,
        }
        if self.out_dir is not None:
            dump_chain(chain, self.out_dir / "chain.jsonl")
            self.report.write(self.out_dir / "report.json")

    def run(self, until: str = "monitor") -> RunReport:
        """
        Run stages in order up to and including ``until``.

        Raises:
            PipelineError: Labelled with the failing stage; ``report`` holds earlier outputs
        """
        if until not in STAGES:
            raise PlatformValidationError(f"Unknown stage {until}; expected one of {', '.join(STAGES)}")
        actions = {
            "simulate": self.simulate,
            "scrape": self.scrape,
            "discover": self.discover,
            "generate": self.generate,
            "mint": self.mint,
            "monitor": self.monitor_stage,
        }
        for stage in STAGES:
            try:
                logger.info(f"Pipeline stage '{stage}'")
                actions[stage]()
            except Exception as e:
                logger.error(f"Error in pipeline stage {stage}: {str(e)}")
                if self.network is not None:
                    self.finish()
                raise PipelineError(stage, e, self.report) from e
            self.report.stages.append(stage)
            if stage == until:
                break
        self.finish()
        return self.report


def pipeline_run(config: ScenarioConfig, out_dir: Optional[Path] = None, llm_session=None, until: str = "monitor") -> Tuple[RunReport, Pipeline]:
    pipeline = Pipeline(config, out_dir=out_dir, llm_session=llm_session)
    return pipeline.run(until), pipeline
