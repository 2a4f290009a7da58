"""JSON persistence for reports and attributions."""

from __future__ import annotations

import json
from pathlib import Path

from .amortized import BoundAudit
from .attribution import Attribution
from .evaluation import EvalReport
from .exact import HessianReport

__all__ = ["SCHEMA_VERSION", "persist_report", "load_report", "report_to_document"]

SCHEMA_VERSION = 1

_TYPES = {
    "attribution": Attribution,
    "eval_report": EvalReport,
    "hessian_report": HessianReport,
    "bound_audit": BoundAudit,
}


def report_to_document(report) -> dict:
    for name, cls in _TYPES.items():
        if isinstance(report, cls):
            return {"schema_version": SCHEMA_VERSION, "type": name, **report.to_dict()}
    raise TypeError(f"cannot persist {type(report).__name__}")


def persist_report(report, path) -> None:
    doc = report_to_document(report)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_report(path):
    doc = json.loads(Path(path).read_text())
    if "schema_version" not in doc:
        raise ValueError(f"{path}: missing schema_version")
    kind = doc.pop("type")
    doc.pop("schema_version")
    if kind == "bound_audit":
        return BoundAudit(**doc)
    return _TYPES[kind].from_dict(doc)
