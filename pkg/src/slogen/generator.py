"""SLO generation backends: deterministic templates and an LLM with validate-and-repair."""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple, Union

import jsonschema

from src.config import Config
from src.errors import GenerationFailed, InvalidSlo, LlmUnavailable
from src.metrics.exposition import format_le
from src.metrics.types import MetricKind
from src.promql.validate import validate
from src.slogen.llm_client import LlmClient, extract_object
from src.slogen.prompts import objective_from_slots, with_feedback
from src.slogen.types import Prompt, SliKind, SliSpec, SloSpec

logger = logging.getLogger(__name__)

SLO_OBJECT_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["sli", "target", "window"],
    "properties": {
        "sli": {
            "type": "object",
            "additionalProperties": False,
            "required": ["service", "name", "kind", "good_query", "total_query"],
            "properties": {
                "service": {"type": "string", "minLength": 1},
                "name": {"type": "string", "minLength": 1},
                "kind": {"enum": [k.value for k in SliKind]},
                "good_query": {"type": "string", "minLength": 1},
                "total_query": {"type": "string", "minLength": 1},
                "threshold_seconds": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "histogram_metric": {"type": ["string", "null"]},
            },
        },
        "target": {"type": "number"},
        "window": {"type": "string"},
        "description": {"type": "string"},
    },
}


class BackendKind(str, Enum):
    TEMPLATE = "template"
    LLM = "llm"


@dataclass
class GenerationContext:
    """Known metric kinds (for validation warnings) and the SLO window whitelist."""
    known_kinds: Dict[str, MetricKind] = field(default_factory=dict)
    allowed_windows: Tuple[str, ...] = Config.SLO_WINDOWS


@dataclass
class GenerationResult:
    slo: SloSpec
    backend_used: BackendKind
    attempts: int = 1
    repairs: int = 0
    warnings: List[str] = field(default_factory=list)

    @property
    def fallback(self) -> bool:
        return bool(self.warnings) and self.backend_used == BackendKind.TEMPLATE


def slo_problems(slo: SloSpec, context: GenerationContext) -> List[str]:
    """Everything wrong with an SLO; an empty list means it may be returned."""
    problems = []
    try:
        slo.check(context.allowed_windows)
    except InvalidSlo as e:
        problems.append(str(e))
    for label, query in (("good_query", slo.sli.good_query), ("total_query", slo.sli.total_query)):
        result = validate(query, context.known_kinds)
        problems += [f"{label}: {d.render()}" for d in result.errors]
    return problems


def _pick(metrics: List[Dict[str, str]], kind: str) -> str:
    for metric in metrics:
        if metric["kind"] == kind:
            return metric["name"]
    return metrics[0]["name"]


def _histogram_base(name: str) -> str:
    for suffix in ("_bucket", "_count", "_sum"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return name


class TemplateBackend:
    """Pure expansion of the prompt slots into ratio-of-rates queries."""

    kind = BackendKind.TEMPLATE

    def expand(self, prompt: Prompt) -> SloSpec:
        slots = prompt.slots
        objective = objective_from_slots(slots)
        service, window = slots["service"], slots["window"]
        metrics = slots["metrics"]
        if objective.kind == SliKind.LATENCY:
            if not objective.threshold_seconds:
                raise InvalidSlo("latency objectives need threshold_seconds")
            base = _histogram_base(_pick(metrics, MetricKind.HISTOGRAM.value))
            le = format_le(objective.threshold_seconds)
            sli = SliSpec(
                service=service,
                name=objective.sli_name,
                kind=SliKind.LATENCY,
                good_query=f'sum(rate({base}_bucket{{le="{le}"}}[{window}]))',
                total_query=f"sum(rate({base}_count[{window}]))",
                threshold_seconds=float(objective.threshold_seconds),
                histogram_metric=base,
            )
        else:
            metric = _pick(metrics, MetricKind.COUNTER.value)
            code = slots.get("code_label", Config.GOOD_CODE_LABEL)
            sli = SliSpec(
                service=service,
                name=objective.sli_name,
                kind=SliKind.AVAILABILITY,
                good_query=f'sum(rate({metric}{{{code}!~"5.."}}[{window}]))',
                total_query=f"sum(rate({metric}[{window}]))",
            )
        return SloSpec(sli=sli, target=objective.target, window=window, description=objective.description)

    def generate(self, prompt: Prompt, context: GenerationContext) -> GenerationResult:
        slo = self.expand(prompt)
        problems = slo_problems(slo, context)
        if problems:
            # the template only emits validated query shapes
            raise GenerationFailed(f"Template backend produced an invalid SLO: {'; '.join(problems)}")
        return GenerationResult(slo=slo, backend_used=BackendKind.TEMPLATE)


class LlmBackend:
    """Asks the LLM, validates its answer and re-prompts with the problems found."""

    kind = BackendKind.LLM

    def __init__(
        self,
        client: Optional[LlmClient] = None,
        max_repair_attempts: int = Config.MAX_REPAIR_ATTEMPTS,
        fallback: Optional[TemplateBackend] = None,
    ):
        self.client = client or LlmClient()
        self.max_repair_attempts = max_repair_attempts
        self.fallback = fallback or TemplateBackend()

    def _read_answer(self, text: str, prompt: Prompt, context: GenerationContext) -> Tuple[Optional[SloSpec], List[str]]:
        try:
            obj = extract_object(text)
            jsonschema.validate(obj, SLO_OBJECT_SCHEMA)
        except ValueError as e:
            return None, [str(e)]
        except jsonschema.ValidationError as e:
            path = "/".join(str(p) for p in e.absolute_path) or "<root>"
            return None, [f"{path}: {e.message}"]

        slo = SloSpec.from_dict(obj)
        problems = slo_problems(slo, context)
        slots = prompt.slots
        if slo.sli.service != slots["service"]:
            problems.append(f"sli.service must be '{slots['service']}'")
        if slo.sli.kind.value != slots["kind"]:
            problems.append(f"sli.kind must be '{slots['kind']}'")
        if slo.target != float(slots["target"]):
            problems.append(f"target must be {slots['target']}")
        if slo.window != slots["window"]:
            problems.append(f"window must be '{slots['window']}'")
        return slo, problems

    def _fall_back(self, prompt: Prompt, context: GenerationContext, attempts: int, repairs: int, reason: str) -> GenerationResult:
        logger.warning(f"Falling back to the template backend for {prompt.slots['service']}: {reason}")
        result = self.fallback.generate(prompt, context)
        result.attempts, result.repairs = attempts, repairs
        result.warnings.append(reason)
        return result

    def generate(self, prompt: Prompt, context: GenerationContext) -> GenerationResult:
        key = f"{prompt.slots['service']}/{prompt.slots.get('name') or prompt.slots['kind']}/{prompt.slots['window']}"
        attempts, repairs = 0, 0
        current = prompt
        with self.client.conversation_lock(key):
            for attempt in range(self.max_repair_attempts + 1):
                attempts += 1
                try:
                    text = self.client.complete(current.text)
                except LlmUnavailable as e:
                    return self._fall_back(prompt, context, attempts, repairs, f"LLM backend unavailable: {e}")

                slo, problems = self._read_answer(text, prompt, context)
                if not problems:
                    logger.info(f"LLM generated SLO {slo.slo_id} after {repairs} repair(s)")
                    return GenerationResult(slo=slo, backend_used=BackendKind.LLM, attempts=attempts, repairs=repairs)

                logger.info(f"LLM answer for {key} rejected (attempt {attempts}): {problems}")
                if attempt < self.max_repair_attempts:
                    repairs += 1
                    current = with_feedback(prompt, problems)

        return self._fall_back(
            prompt, context, attempts, repairs,
            f"LLM answer still invalid after {repairs} repair attempt(s)",
        )


Backend = Union[TemplateBackend, LlmBackend]


def make_backend(kind: Union[BackendKind, str], endpoint: str = Config.LLM_ENDPOINT, model: str = Config.LLM_MODEL,
                 max_repair_attempts: int = Config.MAX_REPAIR_ATTEMPTS, session=None) -> Backend:
    if BackendKind(kind) == BackendKind.TEMPLATE:
        return TemplateBackend()
    return LlmBackend(LlmClient(endpoint, model, session=session), max_repair_attempts)


def generate_slo(backend: Backend, prompt: Prompt, context: Optional[GenerationContext] = None) -> GenerationResult:
    """
    Generate a validated SLO from a rendered prompt.

    Args:
        backend: TemplateBackend or LlmBackend
        prompt (Prompt): Output of build_prompt
        context (GenerationContext, optional): Known metric kinds and window whitelist

    Returns:
        GenerationResult: The SLO plus which backend produced it, attempts, repairs and warnings
    """
    context = context or GenerationContext()
    try:
        return backend.generate(prompt, context)
    except Exception as e:
        logger.error(f"Error generating SLO for {prompt.slots.get('service')}: {str(e)}")
        raise
