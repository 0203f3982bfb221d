"""Shared JSON serialization for the CLI and the HTTP service.

Floats are rounded to 12 significant digits before serialization: below
solver tolerance, above arithmetic noise, and it makes replayed transcripts
byte-identical. Every payload the CLI prints must round-trip through these
helpers so its schema matches the service bit for bit.
"""

from __future__ import annotations

import dataclasses
import json
import math
from typing import Any

import numpy as np

SIG_DIGITS = 12


def round_sig(x: float) -> float:
    if x == 0 or not math.isfinite(x):
        return x
    return float(f"{x:.{SIG_DIGITS}g}")


def to_jsonable(obj: Any) -> Any:
    """Recursively convert engine objects to JSON-ready structures."""
    if isinstance(obj, (bool, str)) or obj is None:
        return obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return round_sig(v)
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {k: to_jsonable(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    return obj


def dumps(obj: Any, indent: int | None = None) -> str:
    return json.dumps(to_jsonable(obj), indent=indent, sort_keys=False)


def residual_report_payload(report) -> dict:
    """The wire format for a ResidualReport: entries carry exactly the
    fields {identity, point, lhs, rhs, residual, pass}."""
    return {
        "entries": [
            {
                "identity": e.identity,
                "point": to_jsonable(e.point),
                "lhs": to_jsonable(e.lhs),
                "rhs": to_jsonable(e.rhs),
                "residual": to_jsonable(e.residual),
                "pass": bool(e.passed),
            }
            for e in report.entries
        ],
        "tolerance": to_jsonable(report.tolerance),
        "seed": report.seed,
        "sample_count": report.sample_count,
        "excluded": report.excluded,
        "failures": len(report.failures),
        "failed_identities": list(report.failed_identities),
    }


def gap_report_payload(report) -> dict:
    return {
        "primal_value": to_jsonable(report.primal_value),
        "dual_value": to_jsonable(report.dual_value),
        "gap": to_jsonable(report.gap),
        "relative_gap": to_jsonable(report.relative_gap),
    }


def info_loss_payload(report) -> dict:
    return {
        "probes": to_jsonable(report.probes),
        "original_u_values": to_jsonable(report.original_u_values),
        "recovered_u_values": to_jsonable(report.recovered_u_values),
        "ranking_flips": to_jsonable(report.ranking_flips),
        "convexified": bool(report.convexified),
        "tolerance": to_jsonable(report.tolerance),
        "ambiguous_probes": to_jsonable(report.ambiguous_probes),
    }


def residual_report_table(report) -> str:
    """Plain-text table for terminal output."""
    lines = [
        f"{'identity':<24} {'residual':>12} {'pass':>6}  point",
        "-" * 78,
    ]
    for e in report.entries:
        pt = json.dumps(to_jsonable(e.point))
        if len(pt) > 40:
            pt = pt[:37] + "..."
        residual = to_jsonable(e.residual)
        lines.append(
            f"{e.identity:<24} {residual!s:>12} {'ok' if e.passed else 'FAIL':>6}  {pt}"
        )
    lines.append("-" * 78)
    lines.append(
        f"{len(report.entries)} entries, {len(report.failures)} failures, "
        f"{report.excluded} excluded (corner/filtered), tolerance {report.tolerance}"
    )
    return "\n".join(lines)
