"""Export of generated SLOs and alert rules."""
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

import yaml

from src.slogen.types import AlertRule, SloSpec
from src.utils.canonical import canonical_json

logger = logging.getLogger(__name__)


def export_jsonl(slos: Sequence[SloSpec], rules: Sequence[AlertRule], path: Path) -> Path:
    """One canonical JSON object per line, tagged with ``type`` (``slo`` or ``alert_rule``)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [canonical_json({"type": "slo", "slo_id": s.slo_id, **s.to_dict()}) for s in slos]
    lines += [canonical_json({"type": "alert_rule", **r.to_dict()}) for r in rules]
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    logger.info(f"Exported {len(slos)} SLOs and {len(rules)} alert rules to {path}")
    return path


def rules_document(rules: Iterable[AlertRule]) -> Dict[str, List[dict]]:
    """Rules-file layout: one group per SLO, each rule with alert/expr/for/labels/annotations."""
    groups: Dict[str, List[dict]] = {}
    for rule in rules:
        groups.setdefault(rule.slo_id, []).append({
            "alert": rule.name,
            "expr": rule.expr,
            "for": rule.for_duration,
            "labels": {"severity": rule.severity.value, "slo_id": rule.slo_id},
            "annotations": {
                "summary": (
                    f"{rule.slo_id} burning error budget at more than {rule.burn_rate_threshold:g}x "
                    f"over {rule.windows[0]} and {rule.windows[1]}"
                ),
            },
        })
    return {"groups": [{"name": slo_id, "rules": items} for slo_id, items in groups.items()]}


def export_rules_yaml(rules: Sequence[AlertRule], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(rules_document(rules), f, sort_keys=False, default_flow_style=False)
    logger.info(f"Wrote rules file with {len(rules)} rules to {path}")
    return path
