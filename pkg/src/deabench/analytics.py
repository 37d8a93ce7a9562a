"""Batch counterfactual runs and aggregate change statistics.

Produces the per-feature change-frequency and change-magnitude tables, the
firms-by-features change heatmap, per-firm spider payloads (ratios of new to
original values), and a seeded synthetic panel generator for scale testing.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import dea
from .counterfactual import (
    CounterfactualRequest,
    CounterfactualResult,
    SolveFailure,
    explain,
)
from .miqp import MiqpOptions
from .model import CostWeights, Orientation, Panel, Technology, build_panel

CHANGE_TOL = 1e-7


@dataclass
class BatchEntry:
    dmu_id: str
    firm: int
    base_score: float
    skipped: bool
    result: CounterfactualResult | None = None
    error: str | None = None


@dataclass
class BatchReport:
    """One counterfactual per inefficient firm, plus skip markers.

    Entries are ordered by DMU id; every firm appears exactly once.
    """

    entries: list[BatchEntry]
    e_target: float
    weights: CostWeights
    tech: Technology
    orient: Orientation
    input_names: tuple[str, ...]
    output_names: tuple[str, ...]

    @property
    def analyzed(self) -> list[BatchEntry]:
        return [e for e in self.entries if not e.skipped and e.result is not None]

    @property
    def skipped_ids(self) -> list[str]:
        return [e.dmu_id for e in self.entries if e.skipped]

    @property
    def failures(self) -> list[tuple[str, str]]:
        return [(e.dmu_id, e.error) for e in self.entries if e.error]

    @property
    def feature_names(self) -> tuple[str, ...]:
        return self.input_names if self.orient is Orientation.INPUT else self.output_names


@dataclass
class ChangeStats:
    """Per-feature aggregates; entries for features nobody changed are NaN."""

    feature_names: tuple[str, ...]
    frequency: np.ndarray | None = None
    mean_l0: float | None = None
    mean_rel_change: np.ndarray | None = None
    mean_l2_rel: float | None = None


def batch_explain(panel: Panel, e_target: float, weights: CostWeights,
                  tech: Technology = Technology.CRS,
                  orient: Orientation = Orientation.INPUT,
                  options: MiqpOptions | None = None,
                  request_defaults: CounterfactualRequest | None = None,
                  workers: int = 1) -> BatchReport:
    """Run one counterfactual per firm whose score is below the target.

    Firms already at or above the target are recorded as skipped.  Per-firm
    failures are captured in the report and the batch continues.  Entries
    come back ordered by DMU id regardless of ``workers``.
    """
    order = sorted(range(panel.n_dmus), key=lambda k: panel.dmu_ids[k])
    scores = {k: dea.efficiency(panel, k, tech, orient).score for k in order}

    def run(k: int) -> BatchEntry:
        dmu_id = panel.dmu_ids[k]
        base = scores[k]
        if base >= e_target - 1e-9:
            return BatchEntry(dmu_id, k, base, skipped=True)
        if request_defaults is not None:
            req = replace(request_defaults, firm=k, e_target=e_target,
                          weights=weights, tech=tech, orient=orient)
        else:
            req = CounterfactualRequest(firm=k, e_target=e_target, weights=weights,
                                        tech=tech, orient=orient)
        try:
            res = explain(panel, req, options=options)
            return BatchEntry(dmu_id, k, base, skipped=False, result=res)
        except (SolveFailure, ValueError) as exc:
            return BatchEntry(dmu_id, k, base, skipped=False, error=str(exc))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(run, order))
    else:
        entries = [run(k) for k in order]
    return BatchReport(entries, e_target, weights, tech, orient,
                       panel.input_names, panel.output_names)


def _changed_matrix(report: BatchReport) -> np.ndarray:
    names = report.feature_names
    mat = np.zeros((len(report.entries), len(names)), dtype=bool)
    for r, entry in enumerate(report.entries):
        if entry.result is not None:
            mat[r] = entry.result.changed.astype(bool)
    return mat


def change_frequency(report: BatchReport) -> ChangeStats:
    """How often each feature changes across the analyzed firms."""
    analyzed = report.analyzed
    if not analyzed:
        raise ValueError("no firms were analyzed")
    changed = np.array([e.result.changed for e in analyzed], dtype=bool)
    return ChangeStats(feature_names=report.feature_names,
                       frequency=changed.mean(axis=0),
                       mean_l0=float(changed.sum(axis=1).mean()))


def _relative_changes(entry: BatchEntry, orient: Orientation, panel_row) -> np.ndarray:
    res = entry.result
    if orient is Orientation.INPUT:
        orig = panel_row
        return (orig - res.plan_inputs) / orig
    orig = panel_row
    with np.errstate(divide="ignore", invalid="ignore"):
        r = (res.plan_outputs - orig) / orig
    return np.where(np.isfinite(r), r, 0.0)


def change_magnitude(report: BatchReport, panel: Panel) -> ChangeStats:
    """How much each feature changes, relative to its original value.

    The per-feature mean runs over the firms that changed that feature (NaN
    when nobody did); the l2 summary averages the relative-change vector
    norm over all analyzed firms.
    """
    analyzed = report.analyzed
    if not analyzed:
        raise ValueError("no firms were analyzed")
    side = panel.inputs if report.orient is Orientation.INPUT else panel.outputs
    rel = np.array([_relative_changes(e, report.orient, side[e.firm])
                    for e in analyzed])
    changed = np.array([e.result.changed for e in analyzed], dtype=bool)
    n_feat = rel.shape[1]
    means = np.full(n_feat, np.nan)
    for i in range(n_feat):
        movers = changed[:, i]
        if movers.any():
            means[i] = rel[movers, i].mean()
    return ChangeStats(feature_names=report.feature_names,
                       mean_rel_change=means,
                       mean_l2_rel=float(np.linalg.norm(rel, axis=1).mean()))


def heatmap_matrix(report: BatchReport) -> dict:
    """Firms-by-features boolean change grid; skipped firms give empty rows."""
    mat = _changed_matrix(report)
    return {
        "firms": [e.dmu_id for e in report.entries],
        "features": list(report.feature_names),
        "changed": mat.tolist(),
    }


def spider_payload(panel: Panel, firm: int,
                   results: dict[str, CounterfactualResult]) -> dict:
    """Per-feature ratios of new to original values, one series per config.

    Ratios equal 1 on unchanged features; the original plan is the unit ring.
    """
    for label, res in results.items():
        if res.firm != firm:
            raise ValueError(f"result {label!r} belongs to firm {res.firm}, not {firm}")
    series = {}
    for label, res in results.items():
        if res.orient is Orientation.INPUT:
            ratios = res.plan_inputs / panel.inputs[firm]
            axes = list(panel.input_names)
        else:
            ratios = res.plan_outputs / panel.outputs[firm]
            axes = list(panel.output_names)
        series[label] = [float(v) for v in ratios]
    first = next(iter(results.values()), None)
    if first is None or first.orient is Orientation.INPUT:
        axes = list(panel.input_names)
    else:
        axes = list(panel.output_names)
    return {
        "firm": panel.dmu_ids[firm],
        "axes": axes,
        "original": [1.0] * len(axes),
        "series": series,
    }


def synth_panel(seed: int, n_dmus: int, n_inputs: int, n_outputs: int,
                spread: float = 0.6, jitter: float = 0.0) -> Panel:
    """Deterministic synthetic panel: efficient anchors plus inflated copies.

    Anchors are drawn, scored, and only frontier ones kept; every other firm
    is an anchor with its inputs inflated by a factor in [1, 1+spread] (and
    optionally jittered per coordinate), so clone scores are known radially.
    """
    if n_dmus < 2 or n_inputs < 1 or n_outputs < 1:
        raise ValueError("need at least 2 DMUs and 1 input/output")
    rng = np.random.default_rng(seed)
    n_anchor_goal = max(2, (n_dmus + 3) // 4)
    candidates = max(2 * n_anchor_goal, 4)
    mix = rng.uniform(0.2, 1.0, size=(n_outputs, n_inputs))
    cand_x = rng.uniform(1.0, 5.0, size=(candidates, n_inputs))
    tilt = rng.uniform(0.7, 1.3, size=(candidates, n_outputs))
    cand_y = (cand_x @ mix.T) * tilt
    rows = [(f"c{i}", list(cand_x[i]) + list(cand_y[i])) for i in range(candidates)]
    cand_panel, _ = build_panel(rows, n_inputs, n_outputs)
    scores = dea.all_efficiencies(cand_panel)
    keep = [i for i in range(candidates) if scores[i] >= 1.0 - 1e-9]
    if not keep:
        keep = [int(np.argmax(scores))]
    keep = keep[:n_anchor_goal]
    anchors_x = cand_x[keep]
    anchors_y = cand_y[keep]
    n_anchors = min(len(keep), n_dmus)

    xs, ys = [], []
    for i in range(n_anchors):
        xs.append(anchors_x[i])
        ys.append(anchors_y[i])
    for i in range(n_dmus - n_anchors):
        a = int(rng.integers(0, n_anchors))
        factor = 1.0 + spread * rng.random()
        coord = 1.0 + jitter * (rng.random(n_inputs) - 0.5) if jitter > 0 else 1.0
        xs.append(anchors_x[a] * factor * coord)
        ys.append(anchors_y[a].copy())
    width = len(str(n_dmus))
    rows = [(f"dmu{str(i + 1).zfill(width)}", list(xs[i]) + list(ys[i]))
            for i in range(n_dmus)]
    panel, _ = build_panel(rows, n_inputs, n_outputs,
                           [f"x{i + 1}" for i in range(n_inputs)],
                           [f"y{o + 1}" for o in range(n_outputs)])
    return panel


def panel_summary(panel: Panel) -> list[dict]:
    """Mean/min/max/std per column, inputs first."""
    out = []
    for name, col in zip(panel.input_names, panel.inputs.T):
        out.append({"section": "INPUTS", "name": name, "mean": float(col.mean()),
                    "min": float(col.min()), "max": float(col.max()),
                    "std": float(col.std(ddof=1)) if col.size > 1 else 0.0})
    for name, col in zip(panel.output_names, panel.outputs.T):
        out.append({"section": "OUTPUTS", "name": name, "mean": float(col.mean()),
                    "min": float(col.min()), "max": float(col.max()),
                    "std": float(col.std(ddof=1)) if col.size > 1 else 0.0})
    return out


def summary_text(panel: Panel) -> str:
    rows = panel_summary(panel)
    lines = [f"{'':<20}{'Mean':>10}{'Min':>10}{'Max':>10}{'Std. dev.':>12}"]
    section = None
    for r in rows:
        if r["section"] != section:
            section = r["section"]
            lines.append(section)
        lines.append(f"{r['name']:<20}{r['mean']:>10.2f}{r['min']:>10.2f}"
                     f"{r['max']:>10.2f}{r['std']:>12.2f}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def stats_to_csv(freq: ChangeStats, mag: ChangeStats) -> tuple[str, str]:
    """CSV texts for the frequency and magnitude tables."""
    buf_f = io.StringIO()
    w = csv.writer(buf_f, lineterminator="\n")
    w.writerow(["feature", "change_frequency"])
    for name, val in zip(freq.feature_names, freq.frequency):
        w.writerow([name, f"{val:.6g}"])
    w.writerow(["mean_l0", f"{freq.mean_l0:.6g}"])
    buf_m = io.StringIO()
    w = csv.writer(buf_m, lineterminator="\n")
    w.writerow(["feature", "mean_relative_change"])
    for name, val in zip(mag.feature_names, mag.mean_rel_change):
        w.writerow([name, "" if np.isnan(val) else f"{val:.6g}"])
    w.writerow(["mean_l2_relative", f"{mag.mean_l2_rel:.6g}"])
    return buf_f.getvalue(), buf_m.getvalue()
