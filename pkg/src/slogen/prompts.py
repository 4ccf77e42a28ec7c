"""Prompt rendering from the versioned templates in ``templates/``."""
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Union

from jinja2 import Environment, FileSystemLoader, StrictUndefined

from src.config import Config
from src.slogen.types import Objective, Prompt, SliKind, SliMetric

logger = logging.getLogger(__name__)

TEMPLATE_DIR = Path(__file__).parent / "templates"
DEFAULT_TEMPLATE = "slo_prompt_v1"

_env = Environment(
    loader=FileSystemLoader(str(TEMPLATE_DIR)),
    undefined=StrictUndefined,
    keep_trailing_newline=True,
    autoescape=False,
)


def format_target(target: float) -> str:
    return repr(float(target))


def threshold_text(seconds: float) -> str:
    if seconds == 1:
        return "1 second"
    return f"{seconds:g} seconds"


def objective_sentence(service: str, objective: Objective) -> str:
    percent = f"{objective.target * 100:g}%"
    if objective.kind == SliKind.LATENCY:
        return (
            f"{percent} of {service} requests are served within "
            f"{threshold_text(objective.threshold_seconds)} over {objective.window}."
        )
    return f"{percent} of {service} requests succeed over {objective.window}."


def _as_metric(metric: Union[str, SliMetric]) -> SliMetric:
    if isinstance(metric, SliMetric):
        return metric
    if metric.endswith("_bucket") or metric.endswith("_seconds"):
        return SliMetric(metric, "histogram")
    if metric.endswith("_total"):
        return SliMetric(metric, "counter")
    return SliMetric(metric, "gauge")


def build_prompt(
    service: str,
    sli_metrics: Sequence[Union[str, SliMetric]],
    objective: Objective,
    template_id: str = DEFAULT_TEMPLATE,
    code_label: str = Config.GOOD_CODE_LABEL,
) -> Prompt:
    """
    Render the SLO generation prompt.

    Args:
        service (str): Service name
        sli_metrics (Sequence): Ranked metric names or SliMetric entries
        objective (Objective): Kind, target, window and optional description

    Returns:
        Prompt: Rendered text plus the slots it was rendered from
    """
    if not sli_metrics:
        raise ValueError("build_prompt needs at least one SLI metric")
    metrics = [_as_metric(m) for m in sli_metrics]
    slots = {
        "service": service,
        "metrics": [{"name": m.name, "kind": m.kind} for m in metrics],
        "kind": objective.kind.value,
        "target": format_target(objective.target),
        "window": objective.window,
        "threshold_seconds": objective.threshold_seconds,
        "threshold_text": threshold_text(objective.threshold_seconds) if objective.threshold_seconds else "",
        "objective_sentence": objective.description.strip() or objective_sentence(service, objective),
        "name": objective.sli_name,
        "code_label": code_label,
        "feedback": [],
    }
    return render(template_id, slots)


def render(template_id: str, slots: dict) -> Prompt:
    text = _env.get_template(f"{template_id}.j2").render(**slots)
    return Prompt(template_id=template_id, text=text, slots=dict(slots))


def with_feedback(prompt: Prompt, feedback: List[str]) -> Prompt:
    """Same prompt with the rejection reasons of the previous answer appended."""
    slots = dict(prompt.slots)
    slots["feedback"] = list(feedback)
    return render(prompt.template_id, slots)


def objective_from_slots(slots: dict) -> Objective:
    threshold: Optional[float] = slots.get("threshold_seconds")
    return Objective(
        kind=SliKind(slots["kind"]),
        target=float(slots["target"]),
        window=slots["window"],
        threshold_seconds=threshold,
        description=slots.get("objective_sentence", ""),
        name=slots.get("name", ""),
    )
