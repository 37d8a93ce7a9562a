"""Batch analytics tests: golden 4-firm aggregates and synthetic panels."""

import time

import numpy as np
import pytest

from deabench import dea
from deabench.analytics import (
    BatchEntry,
    BatchReport,
    batch_explain,
    change_frequency,
    change_magnitude,
    heatmap_matrix,
    panel_summary,
    spider_payload,
    stats_to_csv,
    summary_text,
    synth_panel,
)
from deabench.counterfactual import CounterfactualRequest, explain
from deabench.model import CostWeights, Orientation, Technology, build_panel

L2 = CostWeights(0.0, 0.0, 1.0)
L0L2 = CostWeights(1.0, 0.0, 1.0)
L0_SMALL = CostWeights(1.0, 0.0, 1e-3)


@pytest.fixture(scope="module")
def four_firm_batch():
    rows = [("1", [0.50, 1.00, 1.0]), ("2", [1.50, 0.50, 1.0]),
            ("3", [1.75, 1.25, 1.0]), ("4", [2.50, 1.25, 1.0])]
    panel, _ = build_panel(rows, 2, 1, ["x1", "x2"], ["y"])
    report = batch_explain(panel, 0.8, L2)
    return panel, report


def test_batch_analysis_set(four_firm_batch):
    panel, report = four_firm_batch
    assert report.skipped_ids == ["1", "2"]
    assert [e.dmu_id for e in report.analyzed] == ["3", "4"]
    assert report.failures == []
    assert len(report.entries) == 4  # every firm exactly once


def test_batch_skips_everyone_when_target_low(four_firm_batch):
    panel, _ = four_firm_batch
    report = batch_explain(panel, 0.4, L2)
    assert len(report.analyzed) == 0
    with pytest.raises(ValueError):
        change_frequency(report)


def test_change_frequency_golden(four_firm_batch):
    _, report = four_firm_batch
    stats = change_frequency(report)
    assert stats.frequency == pytest.approx([0.5, 1.0])
    assert stats.mean_l0 == pytest.approx(1.5)


def test_change_magnitude_golden(four_firm_batch):
    panel, report = four_firm_batch
    stats = change_magnitude(report, panel)
    # third firm moves both inputs, fourth only the second
    assert stats.mean_rel_change[0] == pytest.approx(0.225 / 1.75, abs=1e-3)
    assert stats.mean_rel_change[1] == pytest.approx((0.36 + 0.5) / 2, abs=1e-3)
    r3 = np.linalg.norm([0.225 / 1.75, 0.45 / 1.25])
    assert stats.mean_l2_rel == pytest.approx((r3 + 0.5) / 2, abs=1e-3)


def test_magnitude_absent_feature_is_nan():
    rows = [("1", [0.50, 1.00, 1.0]), ("2", [1.50, 0.50, 1.0]),
            ("4", [2.50, 1.25, 1.0])]
    panel, _ = build_panel(rows, 2, 1)
    report = batch_explain(panel, 0.8, L2)  # only the clone of firm 4 moves x2
    stats = change_magnitude(report, panel)
    assert np.isnan(stats.mean_rel_change[0])
    assert stats.mean_rel_change[1] == pytest.approx(0.5, abs=1e-3)


def test_zero_frequency_for_unchanged_analyzed_firm(four_firm_batch):
    panel, _ = four_firm_batch
    e0 = dea.efficiency(panel, 3).score
    res = explain(panel, CounterfactualRequest(firm=3, e_target=e0, weights=L2))
    entry = BatchEntry("4", 3, e0, skipped=False, result=res)
    report = BatchReport([entry], e0, L2, Technology.CRS, Orientation.INPUT,
                         panel.input_names, panel.output_names)
    stats = change_frequency(report)
    assert stats.frequency == pytest.approx([0.0, 0.0])
    assert stats.mean_l0 == 0.0


def test_heatmap_golden(four_firm_batch):
    _, report = four_firm_batch
    heat = heatmap_matrix(report)
    assert heat["firms"] == ["1", "2", "3", "4"]
    mat = np.array(heat["changed"])
    assert not mat[0].any() and not mat[1].any()   # efficient firms: empty rows
    assert mat[2].tolist() == [True, True]
    assert mat[3].tolist() == [False, True]
    assert int(mat.sum()) == 3


def test_heatmap_consistent_with_frequency(four_firm_batch):
    _, report = four_firm_batch
    heat = np.array(heatmap_matrix(report)["changed"])
    analyzed_rows = [i for i, e in enumerate(report.entries)
                     if not e.skipped and e.result is not None]
    stats = change_frequency(report)
    assert np.array_equal(heat[analyzed_rows].mean(axis=0), stats.frequency)


def test_spider_payload_golden(four_firm_batch):
    panel, _ = four_firm_batch
    sparse = explain(panel, CounterfactualRequest(firm=2, e_target=0.8, weights=L0L2))
    payload = spider_payload(panel, 2, {"l0+l2": sparse})
    assert payload["axes"] == ["x1", "x2"]
    assert payload["original"] == [1.0, 1.0]
    assert payload["series"]["l0+l2"][0] == pytest.approx(1.0, abs=1e-6)
    assert payload["series"]["l0+l2"][1] == pytest.approx(0.55, abs=1e-2)


def test_spider_farrell_is_radial(four_firm_batch):
    panel, _ = four_firm_batch
    xhat = dea.farrell_projection(panel, 2, 0.8)
    ratios = xhat / panel.inputs[2]
    assert abs(ratios[0] - ratios[1]) < 1e-9
    rel = (panel.inputs[2] - xhat) / panel.inputs[2]
    assert np.ptp(rel) < 1e-9


def test_spider_rejects_mismatched_firm(four_firm_batch):
    panel, _ = four_firm_batch
    res = explain(panel, CounterfactualRequest(firm=2, e_target=0.8, weights=L2))
    with pytest.raises(ValueError):
        spider_payload(panel, 3, {"l2": res})


def test_synth_panel_deterministic():
    a = synth_panel(7, 15, 3, 2)
    b = synth_panel(7, 15, 3, 2)
    assert a.dmu_ids == b.dmu_ids
    assert np.array_equal(a.inputs, b.inputs)
    assert np.array_equal(a.outputs, b.outputs)


def test_synth_panel_clone_scores_radially():
    panel = synth_panel(3, 12, 2, 1, spread=0.8)
    scores = dea.all_efficiencies(panel)
    assert scores.max() == pytest.approx(1.0, abs=1e-9)
    # append an exact 2x clone of an efficient firm: score must be one half
    eff = int(np.argmax(scores))
    rows = [(panel.dmu_ids[i], list(panel.inputs[i]) + list(panel.outputs[i]))
            for i in range(panel.n_dmus)]
    rows.append(("clone", list(panel.inputs[eff] * 2.0) + list(panel.outputs[eff])))
    bigger, _ = build_panel(rows, panel.n_inputs, panel.n_outputs)
    assert dea.efficiency(bigger, bigger.n_dmus - 1).score == pytest.approx(0.5, abs=1e-9)


def test_synth_panel_scale_timing():
    t0 = time.perf_counter()
    panel = synth_panel(11, 267, 5, 3, spread=0.7, jitter=0.1)
    elapsed = time.perf_counter() - t0
    assert panel.n_dmus == 267
    assert elapsed < 1.0
    rows = panel_summary(panel)
    assert len(rows) == 8
    text = summary_text(panel)
    assert "INPUTS" in text and "OUTPUTS" in text


def test_batch_synthetic_all_verified():
    panel = synth_panel(19, 14, 2, 1, spread=0.7, jitter=0.15)
    report = batch_explain(panel, 0.85, L2)
    assert report.failures == []
    assert len(report.analyzed) >= 3
    for entry in report.analyzed:
        assert entry.result.verification.verified


def test_mean_l0_ordering_sparse_vs_euclidean():
    panel = synth_panel(23, 10, 2, 1, spread=0.8, jitter=0.2)
    rep_sparse = batch_explain(panel, 0.85, L0_SMALL)
    rep_l2 = batch_explain(panel, 0.85, L2)
    f_sparse = change_frequency(rep_sparse)
    f_l2 = change_frequency(rep_l2)
    assert f_sparse.mean_l0 <= f_l2.mean_l0 + 1e-9


def test_stats_csv_serialization(four_firm_batch):
    panel, report = four_firm_batch
    freq = change_frequency(report)
    mag = change_magnitude(report, panel)
    csv_f, csv_m = stats_to_csv(freq, mag)
    assert csv_f.splitlines()[0] == "feature,change_frequency"
    assert "mean_l0" in csv_f
    assert "mean_l2_relative" in csv_m


def test_batch_parallel_matches_serial():
    panel = synth_panel(5, 8, 2, 1, spread=0.6)
    serial = batch_explain(panel, 0.9, L2, workers=1)
    parallel = batch_explain(panel, 0.9, L2, workers=4)
    assert [e.dmu_id for e in serial.entries] == [e.dmu_id for e in parallel.entries]
    for a, b in zip(serial.analyzed, parallel.analyzed):
        assert a.result.plan_inputs == pytest.approx(b.result.plan_inputs, abs=1e-9)
