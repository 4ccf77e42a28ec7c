from src.harness.pipeline import STAGES, Pipeline, RunReport, candidate_metrics, pipeline_run
from src.harness.scenario import ScenarioConfig, dump, from_dict, load
from src.harness.simulator import InProcessFetcher, Simulator, SyntheticService, simulate
