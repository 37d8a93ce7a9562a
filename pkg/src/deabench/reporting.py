"""Canonical payloads shared by the CLI and the HTTP service.

Both surfaces serialize through :func:`canonical_json`, so identical
requests produce byte-identical documents.  Wall-clock times are kept out
of the payloads for that reason.
"""

from __future__ import annotations

import csv
import io
import json

import numpy as np

from .analytics import BatchReport, ChangeStats
from .counterfactual import CounterfactualResult
from .dea import EfficiencyResult
from .model import Panel


def canonical_json(payload) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"),
                      allow_nan=False)


def _floats(arr) -> list[float]:
    return [float(v) for v in np.asarray(arr).ravel()]


def result_payload(res: CounterfactualResult) -> dict:
    ver = res.verification
    return {
        "firm": res.dmu_id,
        "orientation": res.orient.value,
        "technology": res.tech.value,
        "base_score": float(res.base_score),
        "e_target": float(res.e_target),
        "achieved": float(res.achieved),
        "internal_score": float(res.internal_score),
        "plan": {
            "inputs": _floats(res.plan_inputs),
            "outputs": _floats(res.plan_outputs),
        },
        "cost": {
            "l0": res.cost.l0,
            "l1": float(res.cost.l1),
            "l2sq": float(res.cost.l2sq),
            "weighted": float(res.cost.weighted),
        },
        "active_peers": list(res.active_peers),
        "input_row_binding": [int(v) for v in res.input_slack_free],
        "output_row_binding": [int(v) for v in res.output_slack_free],
        "changed": [int(v) for v in res.changed],
        "solver": {
            "status": res.solver_status,
            "nodes": int(res.solver_nodes),
            "gap": float(res.solver_gap) if np.isfinite(res.solver_gap) else None,
        },
        "verification": {
            "feasible": bool(ver.feasible),
            "rescore_delta": float(ver.rescore_delta),
            "big_m_passed": bool(ver.big_m.passed),
            "big_m_warnings": [
                {"kind": r.kind, "index": r.index, "value": r.value, "cap": r.cap}
                for r in ver.big_m.rows if r.status != "pass"
            ],
            "verified": bool(ver.verified),
        },
    }


def efficiency_payload(panel: Panel, tech, orient,
                       results: list[EfficiencyResult]) -> dict:
    rows = []
    for dmu_id, res in zip(panel.dmu_ids, results):
        row = {
            "id": dmu_id,
            "score": float(res.score),
            "peers": [panel.dmu_ids[p] for p in res.peers],
        }
        if res.expansion is not None:
            row["expansion"] = float(res.expansion)
        rows.append(row)
    return {
        "technology": tech.value,
        "orientation": orient.value,
        "scores": rows,
    }


def efficiency_csv(panel: Panel, results: list[EfficiencyResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "score", "peers"])
    for dmu_id, res in zip(panel.dmu_ids, results):
        w.writerow([dmu_id, f"{res.score:.6f}",
                    ";".join(panel.dmu_ids[p] for p in res.peers)])
    return buf.getvalue()


def batch_payload(report: BatchReport) -> dict:
    entries = []
    for e in report.entries:
        item = {"id": e.dmu_id, "base_score": float(e.base_score),
                "skipped": bool(e.skipped)}
        if e.error:
            item["error"] = e.error
        if e.result is not None:
            item["result"] = result_payload(e.result)
        entries.append(item)
    return {
        "e_target": float(report.e_target),
        "technology": report.tech.value,
        "orientation": report.orient.value,
        "weights": {"nu0": report.weights.nu0, "nu1": report.weights.nu1,
                    "nu2": report.weights.nu2},
        "entries": entries,
        "n_analyzed": len(report.analyzed),
        "n_skipped": len(report.skipped_ids),
        "failures": [{"id": i, "error": m} for i, m in report.failures],
    }


def stats_payload(freq: ChangeStats, mag: ChangeStats) -> dict:
    return {
        "features": list(freq.feature_names),
        "change_frequency": _floats(freq.frequency),
        "mean_l0": float(freq.mean_l0),
        "mean_relative_change": [None if np.isnan(v) else float(v)
                                 for v in mag.mean_rel_change],
        "mean_l2_relative": float(mag.mean_l2_rel),
    }
