"""Acceptance gate: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
report.  Tolerances are pinned here and nowhere else.
"""

import time

import numpy as np
import pytest

from deabench import dea
from deabench.analytics import (
    batch_explain,
    change_frequency,
    change_magnitude,
    heatmap_matrix,
    synth_panel,
)
from deabench.counterfactual import (
    CounterfactualRequest,
    build_crs_input_program,
    explain,
    oracle_explain,
)
from deabench.miqp import MiqpOptions, enumerate_binaries, solve_miqp
from deabench.model import (
    CostWeights,
    Orientation,
    Technology,
    build_panel,
    normalize_max,
)
from tests.conftest import random_panel
from tests.test_miqp import random_miqp

L2 = CostWeights(0.0, 0.0, 1.0)
L0L2 = CostWeights(1.0, 0.0, 1.0)
L0_SMALL = CostWeights(1.0, 0.0, 1e-3)


def _report(name):
    print(f"\nACCEPTANCE PASS: {name}")


def _four_firms():
    rows = [("1", [0.50, 1.00, 1.0]), ("2", [1.50, 0.50, 1.0]),
            ("3", [1.75, 1.25, 1.0]), ("4", [2.50, 1.25, 1.0])]
    panel, _ = build_panel(rows, 2, 1, ["x1", "x2"], ["y"])
    return panel


def test_criterion_golden_scores():
    t0 = time.perf_counter()
    panel = _four_firms()
    scores = dea.all_efficiencies(panel)
    elapsed = time.perf_counter() - t0
    assert scores == pytest.approx([1.0, 1.0, 0.59, 0.50], abs=5e-3)
    assert elapsed < 0.1, f"scoring took {elapsed:.3f}s"
    _report(f"four-firm golden scores within ±0.005, runtime {elapsed * 1e3:.1f} ms")


def test_criterion_golden_third_firm():
    panel = _four_firms()
    t0 = time.perf_counter()

    farrell = dea.farrell_projection(panel, 2, 0.8)
    f_l2sq = float(np.sum((panel.inputs[2] - farrell) ** 2))
    assert farrell == pytest.approx([1.29, 0.92], abs=1e-2)
    assert f_l2sq == pytest.approx(0.32, abs=1e-2)

    sparse = explain(panel, CounterfactualRequest(firm=2, e_target=0.8, weights=L0L2))
    assert sparse.plan_inputs == pytest.approx([1.75, 0.69], abs=1e-2)
    assert sparse.cost.l2sq == pytest.approx(0.31, abs=1e-2)
    assert sparse.cost.l0 == 1

    euclid = explain(panel, CounterfactualRequest(firm=2, e_target=0.8, weights=L2))
    assert euclid.plan_inputs == pytest.approx([1.53, 0.80], abs=1e-2)
    assert euclid.cost.l2sq == pytest.approx(0.25, abs=1e-2)

    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0
    _report(f"third-firm golden counterfactuals, runtime {elapsed:.2f} s")


def test_criterion_golden_fourth_firm():
    panel = _four_firms()
    farrell = dea.farrell_projection(panel, 3, 0.8)
    f_l2sq = float(np.sum((panel.inputs[3] - farrell) ** 2))
    f_l0 = int(np.sum(np.abs(panel.inputs[3] - farrell) > 1e-7))
    assert farrell == pytest.approx([1.56, 0.78], abs=1e-2)
    assert f_l2sq == pytest.approx(1.10, abs=1e-2)
    assert f_l0 == 2
    for weights in (L0L2, L2):
        res = explain(panel, CounterfactualRequest(firm=3, e_target=0.8, weights=weights))
        assert res.plan_inputs == pytest.approx([2.50, 0.63], abs=1e-2)
        assert res.cost.l2sq == pytest.approx(0.39, abs=1e-2)
        assert res.cost.l0 == 1
    _report("fourth-firm golden counterfactuals")


def test_criterion_structural_counts():
    panel = _four_firms()
    pnorm, _ = normalize_max(panel)
    prog = build_crs_input_program(pnorm, CounterfactualRequest(firm=2, e_target=0.8,
                                                                weights=L2))
    i_dim, o_dim, k = 2, 1, 3
    assert prog.vmap.n_continuous == 3 * i_dim + k + 2 + o_dim
    assert prog.vmap.n_binary == 2 * i_dim + o_dim + k + 1

    synth = synth_panel(99, 20, 3, 2, spread=0.7)
    snorm, _ = normalize_max(synth)
    firm = int(np.argmin(dea.all_efficiencies(synth)))
    prog2 = build_crs_input_program(snorm, CounterfactualRequest(firm=firm, e_target=0.9,
                                                                 weights=L2))
    i_dim, o_dim, k = 3, 2, 19
    assert prog2.vmap.n_continuous == 3 * i_dim + k + 2 + o_dim
    assert prog2.vmap.n_binary == 2 * i_dim + o_dim + k + 1
    _report("structural counts: 3I+K+2+O continuous, 2I+O+K+1 binary")


def test_criterion_oracle_suite_counterfactuals():
    rng = np.random.default_rng(20240612)
    weights_cycle = (L2, L0L2, L0_SMALL)
    done = 0
    worst = 0.0
    while done < 50:
        panel = random_panel(rng, int(rng.integers(4, 9)), 2, 1)
        scores = dea.all_efficiencies(panel)
        firms = [k for k in range(panel.n_dmus) if scores[k] < 0.88]
        if not firms:
            continue
        k = firms[int(rng.integers(0, len(firms)))]
        req = CounterfactualRequest(firm=k, e_target=0.93,
                                    weights=weights_cycle[done % 3])
        a = explain(panel, req)
        b = oracle_explain(panel, req)
        gap = abs(a.cost.weighted - b.cost.weighted)
        worst = max(worst, gap)
        assert gap <= 1e-3, f"panel {done}: explain {a.cost.weighted} vs oracle {b.cost.weighted}"
        assert a.cost.weighted <= b.cost.weighted + 1e-3
        done += 1
    _report(f"50-panel grid-oracle agreement, worst gap {worst:.2e}")


def test_criterion_oracle_suite_miqp():
    rng = np.random.default_rng(777)
    worst = 0.0
    for i in range(100):
        n_bin = int(rng.integers(1, 13))
        prob = random_miqp(rng, n_cont=int(rng.integers(1, 4)), n_bin=n_bin,
                           n_rows=int(rng.integers(1, 6)), with_eq=(i % 7 == 0))
        sol = solve_miqp(prob)
        ref = enumerate_binaries(prob)
        assert sol.status == ref.status
        if ref.status == "Optimal":
            gap = abs(sol.objective - ref.objective)
            worst = max(worst, gap)
            assert gap <= 1e-6
    _report(f"100-instance enumeration agreement, worst gap {worst:.2e}")


def test_criterion_feasibility_consistency():
    panel = _four_firms()
    golden = []
    for firm, weights in ((2, L2), (2, L0L2), (2, L0_SMALL), (3, L2), (3, L0L2)):
        golden.append(explain(panel, CounterfactualRequest(firm=firm, e_target=0.8,
                                                           weights=weights)))
    rng = np.random.default_rng(4242)
    for _ in range(5):
        rp = random_panel(rng, 6, 2, 2)
        scores = dea.all_efficiencies(rp)
        for k in range(rp.n_dmus):
            if scores[k] < 0.9:
                golden.append(explain(rp, CounterfactualRequest(firm=k, e_target=0.95,
                                                                weights=L2)))
                break
    for res in golden:
        assert res.achieved >= res.e_target - 1e-6
        assert abs(res.internal_score - res.achieved) <= 1e-6
        assert res.verification.big_m.passed
        assert res.verification.verified
    _report(f"feasibility/consistency on {len(golden)} instances incl. big-M audits")


def test_criterion_invariance_suite():
    rng = np.random.default_rng(31337)
    # per-column rescaling leaves scores unchanged
    for _ in range(5):
        panel = random_panel(rng, 6, 2, 2)
        sx = rng.uniform(0.2, 8.0, 2)
        sy = rng.uniform(0.2, 8.0, 2)
        scaled, _ = build_panel(
            [(panel.dmu_ids[i], list(panel.inputs[i] * sx) + list(panel.outputs[i] * sy))
             for i in range(panel.n_dmus)], 2, 2)
        for tech in (Technology.CRS, Technology.VRS):
            drift = np.max(np.abs(dea.all_efficiencies(panel, tech)
                                  - dea.all_efficiencies(scaled, tech)))
            assert drift <= 1e-9
    # VRS dominates CRS on 20 random panels
    for _ in range(20):
        panel = random_panel(rng, int(rng.integers(3, 8)), 2, int(rng.integers(1, 3)))
        crs = dea.all_efficiencies(panel, Technology.CRS)
        vrs = dea.all_efficiencies(panel, Technology.VRS)
        assert np.all(vrs >= crs - 1e-9)
    # cost is nondecreasing in the target
    panel = _four_firms()
    for firm, weights in ((3, L2), (2, L0L2)):
        costs = [explain(panel, CounterfactualRequest(firm=firm, e_target=t,
                                                      weights=weights)).cost.weighted
                 for t in (0.7, 0.8, 0.9, 1.0)]
        assert all(b >= a - 1e-9 for a, b in zip(costs, costs[1:]))
    _report("invariance suite: rescaling, VRS >= CRS (20 panels), monotone cost")


def test_criterion_desk_scale_batch():
    t0 = time.perf_counter()
    panel = synth_panel(42, 40, 5, 3, spread=0.8, jitter=0.15)
    opts = MiqpOptions(time_limit=12.0)

    rep_sparse = batch_explain(panel, 0.8, L0_SMALL, options=opts)
    rep_l2 = batch_explain(panel, 0.8, L2, options=opts)

    for rep in (rep_sparse, rep_l2):
        assert rep.failures == []
        assert len(rep.analyzed) > 0
        for entry in rep.analyzed:
            assert entry.result.verification.verified, entry.dmu_id

    freq_sparse = change_frequency(rep_sparse)
    freq_l2 = change_frequency(rep_l2)
    mag = change_magnitude(rep_l2, panel)
    heat_sparse = heatmap_matrix(rep_sparse)
    heat_l2 = heatmap_matrix(rep_l2)
    assert freq_sparse.mean_l0 <= freq_l2.mean_l0 + 1e-9
    assert np.array(heat_sparse["changed"]).sum() <= np.array(heat_l2["changed"]).sum()
    assert np.isfinite(mag.mean_l2_rel)

    elapsed = time.perf_counter() - t0
    assert elapsed < 600.0, f"pipeline took {elapsed:.0f}s"
    statuses = [e.result.solver_status for e in rep_sparse.analyzed + rep_l2.analyzed]
    _report(
        f"40-firm pipeline in {elapsed:.0f}s: {len(rep_l2.analyzed)} firms/config, "
        f"{statuses.count('Optimal')} proven optimal, "
        f"{statuses.count('TimeLimit')} at the per-firm budget, "
        f"mean_l0 {freq_sparse.mean_l0:.2f} <= {freq_l2.mean_l0:.2f}")
