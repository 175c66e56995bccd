"""Structured outcome of a single check."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Any

CSV_FIELDS = ["check", "status", "worst", "location", "tolerance", "samples", "params"]


def _plain(v):
    if hasattr(v, "item"):
        return v.item()
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    return v


@dataclass
class VerificationReport:
    """Worst violation found by a check, with pass/fail against its tolerance.

    ``passed`` is ``None`` when the check did not apply (``skipped``).
    """

    check: str
    params: dict = field(default_factory=dict)
    worst: float = 0.0
    location: Any = None
    tolerance: float = 0.0
    passed: bool | None = True
    samples: int = 0
    details: dict = field(default_factory=dict)

    @property
    def skipped(self) -> bool:
        return self.passed is None

    @property
    def status(self) -> str:
        return "skipped" if self.passed is None else ("pass" if self.passed else "fail")

    def __bool__(self) -> bool:
        return self.passed is not False

    @classmethod
    def skip(cls, check: str, reason: str, **params) -> "VerificationReport":
        return cls(check, params, passed=None, details={"reason": reason})

    def to_dict(self) -> dict:
        d = _plain(asdict(self))
        d["status"] = self.status
        return d

    def to_line(self) -> str:
        """One JSON object per line; keys sorted so output is byte-stable."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def to_csv_row(self) -> dict:
        d = self.to_dict()
        return {"check": d["check"], "status": d["status"], "worst": repr(float(d["worst"])),
                "location": json.dumps(d["location"]), "tolerance": repr(float(d["tolerance"])),
                "samples": d["samples"], "params": json.dumps(d["params"], sort_keys=True)}


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow(r.to_csv_row())
    return buf.getvalue()
