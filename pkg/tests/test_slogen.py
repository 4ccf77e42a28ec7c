import json
import random

import pytest
import requests
import yaml

from src.errors import GenerationFailed
from src.promql import eval_instant, validate
from src.slogen import (
    BackendKind,
    LlmBackend,
    LlmClient,
    Objective,
    SliKind,
    TemplateBackend,
    build_prompt,
    derive_alert_rules,
    derive_error_budget,
    generate_slo,
    make_backend,
)
from src.slogen.export import export_jsonl, export_rules_yaml
from src.slogen.generator import GenerationContext, slo_problems
from src.slogen.llm_client import extract_object
from src.utils.canonical import canonical_json
from tests.conftest import add_points, series

AVAILABILITY = Objective(SliKind.AVAILABILITY, 0.99, "30d")
GOOD = 'sum(rate(vault_requests_total{code!~"5.."}[30d]))'
TOTAL = "sum(rate(vault_requests_total[30d]))"


class FakeResponse:
    def __init__(self, text):
        self.text = text

    def raise_for_status(self):
        pass

    def json(self):
        return {"response": self.text}


class ScriptedSession:
    """Answers each POST with the next scripted completion."""

    def __init__(self, *answers):
        self.answers = list(answers)
        self.prompts = []

    def post(self, url, json=None, timeout=None):
        self.prompts.append(json["prompt"])
        answer = self.answers.pop(0) if len(self.answers) > 1 else self.answers[0]
        if isinstance(answer, Exception):
            raise answer
        return FakeResponse(answer)


def answer(good=GOOD, total=TOTAL, target=0.99, window="30d", prose="Here is the SLO."):
    obj = {
        "sli": {"service": "vault", "name": "availability", "kind": "availability",
                "good_query": good, "total_query": total},
        "target": target,
        "window": window,
        "description": "99% of vault requests succeed over 30d.",
    }
    return f"{prose}\n```json\n{json.dumps(obj)}\n```\nDone."


def llm_backend(session, max_repair_attempts=2):
    return LlmBackend(LlmClient("http://llm.test/api/generate", "llama3", session=session), max_repair_attempts)


def vault_prompt():
    return build_prompt("vault", ["vault_requests_total"], AVAILABILITY)


def test_prompt_contains_slots_and_default_sentence():
    prompt = build_prompt("vault", ["secret_create_requests_total"], AVAILABILITY)

    for value in ("vault", "0.99", "30d", "secret_create_requests_total (counter)"):
        assert value in prompt.text
    assert "99% of vault requests succeed over 30d." in prompt.text
    assert "```json" in prompt.text
    assert prompt.slots["target"] == "0.99"


def test_latency_prompt_mentions_one_second():
    objective = Objective(SliKind.LATENCY, 0.99, "30d", threshold_seconds=1.0)
    prompt = build_prompt("identity-storage", ["identity_storage_latency_seconds_bucket"], objective)
    assert "within 1 second" in prompt.text
    assert "(histogram)" in prompt.text


def test_prompt_needs_metrics():
    with pytest.raises(ValueError):
        build_prompt("vault", [], AVAILABILITY)


def test_template_availability_slo():
    prompt = build_prompt("vault", ["vault_secret_create_requests_total"], AVAILABILITY)
    result = generate_slo(TemplateBackend(), prompt)

    slo = result.slo
    assert result.backend_used == BackendKind.TEMPLATE
    assert slo.target == 0.99 and slo.window == "30d"
    assert slo.sli.good_query == 'sum(rate(vault_secret_create_requests_total{code!~"5.."}[30d]))'
    assert slo.sli.total_query == "sum(rate(vault_secret_create_requests_total[30d]))"
    assert validate(slo.sli.good_query).ok and validate(slo.sli.total_query).ok


def test_template_latency_slo_uses_le_one():
    objective = Objective(SliKind.LATENCY, 0.99, "30d", threshold_seconds=1.0)
    prompt = build_prompt("identity-storage", ["identity_storage_latency_seconds_bucket"], objective)

    slo = generate_slo(TemplateBackend(), prompt).slo

    assert slo.sli.good_query == 'sum(rate(identity_storage_latency_seconds_bucket{le="1"}[30d]))'
    assert slo.sli.total_query == "sum(rate(identity_storage_latency_seconds_count[30d]))"
    assert slo.sli.histogram_metric == "identity_storage_latency_seconds"


def test_template_backend_is_pure():
    first = generate_slo(TemplateBackend(), vault_prompt()).slo
    second = generate_slo(TemplateBackend(), vault_prompt()).slo
    assert first == second
    assert canonical_json(first.to_dict()) == canonical_json(second.to_dict())


def test_template_queries_evaluate_on_fixture(store):
    for code, per_minute in (("200", 90), ("404", 6), ("500", 4)):
        add_points(store, series("vault_requests_total", code=code), [(60 * i, per_minute * i) for i in range(11)])
    slo = generate_slo(TemplateBackend(), vault_prompt()).slo

    good = eval_instant(slo.sli.good_query, 600_000, store).values()[0]
    total = eval_instant(slo.sli.total_query, 600_000, store).values()[0]

    assert good / total == pytest.approx(0.96)


def test_window_outside_whitelist_fails():
    prompt = build_prompt("vault", ["vault_requests_total"], Objective(SliKind.AVAILABILITY, 0.99, "1h"))
    with pytest.raises(GenerationFailed):
        generate_slo(TemplateBackend(), prompt)


@pytest.mark.parametrize("target, budget", [(0.99, 0.01), (0.999, 0.001), (0.5, 0.5)])
def test_error_budget(target, budget):
    slo = generate_slo(TemplateBackend(), build_prompt(
        "vault", ["vault_requests_total"], Objective(SliKind.AVAILABILITY, target, "30d"))).slo
    error_budget = derive_error_budget(slo)
    assert error_budget.budget_fraction == pytest.approx(budget)
    assert error_budget.budget_fraction + target == 1.0
    assert error_budget.remaining_fraction == error_budget.budget_fraction


def test_alert_rules_for_99_percent():
    slo = generate_slo(TemplateBackend(), vault_prompt()).slo
    rules = derive_alert_rules(slo)

    assert [r.burn_rate_threshold for r in rules] == [14.4, 6.0, 1.0]
    assert [r.windows for r in rules] == [("1h", "5m"), ("6h", "30m"), ("3d", "6h")]
    assert [r.severity.value for r in rules] == ["page", "page", "ticket"]
    assert rules[0].bad_fraction_threshold == pytest.approx(0.144)
    for rule in rules:
        assert rule.bad_fraction_threshold == rule.burn_rate_threshold * slo.budget_fraction
        assert validate(rule.expr).ok


def test_alert_thresholds_scale_with_target():
    prompt = build_prompt("vault", ["vault_requests_total"], Objective(SliKind.AVAILABILITY, 0.999, "30d"))
    rules = derive_alert_rules(generate_slo(TemplateBackend(), prompt).slo)
    assert rules[0].bad_fraction_threshold == pytest.approx(0.0144)
    assert rules[2].bad_fraction_threshold == pytest.approx(0.001)


def test_two_percent_errors_fire_only_the_ticket(store):
    """Test that a steady 2% error rate burns at 2x: both pages stay silent, the ticket fires"""
    horizon_s = 3 * 86400
    times = range(0, horizon_s + 1, 300)
    add_points(store, series("vault_requests_total", code="200"), [(t, 98 * t) for t in times])
    add_points(store, series("vault_requests_total", code="500"), [(t, 2 * t) for t in times])
    rules = derive_alert_rules(generate_slo(TemplateBackend(), vault_prompt()).slo)

    fired = {rule.burn_rate_threshold: len(eval_instant(rule.expr, horizon_s * 1000, store)) for rule in rules}

    assert fired == {14.4: 0, 6.0: 0, 1.0: 1}
    (burn,) = eval_instant(rules[2].expr, horizon_s * 1000, store).values()
    assert burn == pytest.approx(2.0)


def test_llm_repairs_invalid_query_once():
    session = ScriptedSession(answer(good="sum(rate(vault_requests_total[30d)"), answer())

    result = generate_slo(llm_backend(session), vault_prompt())

    assert result.backend_used == BackendKind.LLM
    assert result.repairs == 1 and result.attempts == 2
    assert result.slo.sli.good_query == GOOD
    assert "Your previous answer was rejected" in session.prompts[1]
    assert "Your previous answer was rejected" not in session.prompts[0]


def test_llm_unreachable_falls_back_to_template():
    session = ScriptedSession(requests.ConnectionError("connection refused"))

    result = generate_slo(llm_backend(session), vault_prompt())

    assert result.backend_used == BackendKind.TEMPLATE
    assert result.fallback
    assert "unavailable" in result.warnings[0]


def test_llm_never_valid_falls_back_after_repairs():
    session = ScriptedSession(answer(target=0.9))

    result = generate_slo(llm_backend(session, max_repair_attempts=2), vault_prompt())

    assert result.backend_used == BackendKind.TEMPLATE
    assert result.attempts == 3 and result.repairs == 2
    assert len(session.prompts) == 3


@pytest.mark.parametrize("seed", range(20))
def test_llm_backend_only_returns_validated_slos(seed):
    rng = random.Random(seed)
    bad_answers = [
        answer(good="sum(rate(vault_requests_total[30d)"),
        answer(window="1h"),
        answer(target=1.5),
        "no fenced block at all",
        "```json\n[1, 2]\n```",
        "```json\n{\"sli\": {}}\n```",
        answer(total="histogram_quantile(2, x)"),
    ]
    transcript = [rng.choice(bad_answers + [answer()]) for _ in range(4)]

    result = generate_slo(llm_backend(ScriptedSession(*transcript)), vault_prompt())

    assert slo_problems(result.slo, GenerationContext()) == []
    assert result.slo.target == 0.99 and result.slo.window == "30d"


def test_extract_object_ignores_prose():
    assert extract_object("Sure!\n```json\n{\"a\": 1}\n```\nbye") == {"a": 1}
    with pytest.raises(ValueError):
        extract_object("{\"a\": 1}")


def test_make_backend_kinds():
    assert isinstance(make_backend("template"), TemplateBackend)
    backend = make_backend(BackendKind.LLM, max_repair_attempts=1, session=ScriptedSession(answer()))
    assert isinstance(backend, LlmBackend) and backend.max_repair_attempts == 1


def test_export_jsonl_and_rules_file(tmp_path):
    slo = generate_slo(TemplateBackend(), vault_prompt()).slo
    rules = derive_alert_rules(slo)

    lines = export_jsonl([slo], rules, tmp_path / "slos.jsonl").read_text().splitlines()
    document = yaml.safe_load(export_rules_yaml(rules, tmp_path / "rules.yaml").read_text())

    assert [json.loads(line)["type"] for line in lines] == ["slo", "alert_rule", "alert_rule", "alert_rule"]
    (group,) = document["groups"]
    assert group["name"] == slo.slo_id
    assert [r["for"] for r in group["rules"]] == ["2m", "15m", "1h"]
    assert group["rules"][0]["labels"]["severity"] == "page"
