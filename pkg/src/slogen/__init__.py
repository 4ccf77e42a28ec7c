from src.slogen.alerts import BURN_POLICIES, derive_alert_rules, derive_error_budget
from src.slogen.generator import (
    BackendKind,
    GenerationContext,
    GenerationResult,
    LlmBackend,
    TemplateBackend,
    generate_slo,
    make_backend,
)
from src.slogen.llm_client import LlmClient
from src.slogen.prompts import build_prompt
from src.slogen.types import AlertRule, ErrorBudget, Objective, Prompt, Severity, SliKind, SliMetric, SliSpec, SloSpec
