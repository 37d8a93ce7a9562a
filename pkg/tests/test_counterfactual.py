"""Counterfactual program tests: golden values, structure, and invariants."""

import numpy as np
import pytest

from deabench import dea
from deabench.counterfactual import (
    BoundsError,
    CounterfactualRequest,
    SolveFailure,
    TargetError,
    audit_big_m,
    build_crs_input_program,
    build_output_program,
    build_program,
    build_vrs_input_program,
    explain,
    oracle_explain,
    warm_start_certificates,
)
from deabench.miqp import solve_miqp
from deabench.model import (
    BigMConfig,
    CostWeights,
    Orientation,
    Technology,
    build_panel,
    normalize_max,
)
from tests.conftest import random_panel

L2 = CostWeights(0.0, 0.0, 1.0)
L0L2 = CostWeights(1.0, 0.0, 1.0)
L0_SMALL = CostWeights(1.0, 0.0, 1e-3)


def _req(firm, target, weights=L2, **kw):
    return CounterfactualRequest(firm=firm, e_target=target, weights=weights, **kw)


# ---------------------------------------------------------------------------
# structure
# ---------------------------------------------------------------------------

def test_structural_counts_four_firms(four_firms):
    pnorm, _ = normalize_max(four_firms)
    prog = build_crs_input_program(pnorm, _req(2, 0.8))
    i_dim, o_dim, k = 2, 1, 3  # K+1 = 4 firms
    assert prog.vmap.n_continuous == 3 * i_dim + k + 2 + o_dim
    assert prog.vmap.n_binary == 2 * i_dim + o_dim + k + 1
    assert prog.problem.a.shape[0] == 7 * i_dim + 3 * o_dim + 3 * k + 5


def test_structural_counts_random_panel():
    rng = np.random.default_rng(8)
    panel = random_panel(rng, 12, 3, 2)
    pnorm, _ = normalize_max(panel)
    firm = int(np.argmin(dea.all_efficiencies(panel)))
    prog = build_crs_input_program(pnorm, _req(firm, 0.95))
    i_dim, o_dim, k = 3, 2, 11
    assert prog.vmap.n_continuous == 3 * i_dim + k + 2 + o_dim
    assert prog.vmap.n_binary == 2 * i_dim + o_dim + k + 1


def test_locked_feature_pins_value(four_firms):
    res = explain(four_firms, _req(2, 0.8, L2, locked=frozenset({0})))
    assert res.plan_inputs[0] == pytest.approx(1.75, abs=1e-9)
    assert res.achieved >= 0.8 - 1e-6


def test_zero_quadratic_weight_gives_pure_milp(four_firms):
    pnorm, _ = normalize_max(four_firms)
    prog = build_crs_input_program(pnorm, _req(2, 0.8, CostWeights(1.0, 0.0, 0.0),
                                               nudge=False))
    assert np.all(prog.problem.q == 0.0)


def test_vrs_kappa_present_once(four_firms):
    pnorm, _ = normalize_max(four_firms)
    req = _req(2, 0.8, L2, tech=Technology.VRS)
    prog = build_vrs_input_program(pnorm, req)
    assert prog.vmap.kappa is not None
    assert prog.vmap.n_continuous == build_crs_input_program(pnorm, _req(2, 0.8)).vmap.n_continuous + 1


def test_vrs_reduces_to_crs_when_kappa_zero(four_firms):
    pnorm, _ = normalize_max(four_firms)
    crs = build_crs_input_program(pnorm, _req(2, 0.8))
    vrs = build_vrs_input_program(pnorm, _req(2, 0.8, L2, tech=Technology.VRS))
    kap = vrs.vmap.kappa
    keep_cols = [j for j in range(vrs.problem.n_vars) if j != kap]
    # drop the convexity row (the one equality involving beta and the score)
    rows = vrs.problem.a
    conv = [i for i in range(rows.shape[0])
            if vrs.problem.senses[i] == "=" and abs(rows[i, vrs.vmap.score] + 1.0) < 1e-12]
    assert len(conv) == 1
    keep_rows = [i for i in range(rows.shape[0]) if i != conv[0]]
    reduced = rows[np.ix_(keep_rows, keep_cols)]
    assert reduced.shape == crs.problem.a.shape
    assert np.allclose(reduced, crs.problem.a)


# ---------------------------------------------------------------------------
# golden solutions
# ---------------------------------------------------------------------------

def test_third_firm_golden_table(four_firms):
    farrell = dea.farrell_projection(four_firms, 2, 0.8)
    assert farrell == pytest.approx([1.29, 0.92], abs=1e-2)
    assert np.sum((four_firms.inputs[2] - farrell) ** 2) == pytest.approx(0.32, abs=1e-2)

    sparse = explain(four_firms, _req(2, 0.8, L0L2))
    assert sparse.plan_inputs == pytest.approx([1.75, 0.69], abs=1e-2)
    assert sparse.cost.l2sq == pytest.approx(0.31, abs=1e-2)
    assert sparse.cost.l0 == 1

    euclid = explain(four_firms, _req(2, 0.8, L2))
    assert euclid.plan_inputs == pytest.approx([1.53, 0.80], abs=1e-2)
    assert euclid.cost.l2sq == pytest.approx(0.25, abs=1e-2)
    assert euclid.cost.l0 == 2


def test_fourth_firm_golden_table(four_firms):
    farrell = dea.farrell_projection(four_firms, 3, 0.8)
    assert farrell == pytest.approx([1.56, 0.78], abs=1e-2)
    assert np.sum((four_firms.inputs[3] - farrell) ** 2) == pytest.approx(1.10, abs=1e-2)

    for weights in (L0L2, L2):
        res = explain(four_firms, _req(3, 0.8, weights))
        assert res.plan_inputs == pytest.approx([2.50, 0.63], abs=1e-2)
        assert res.cost.l2sq == pytest.approx(0.39, abs=1e-2)
        assert res.cost.l0 == 1


def test_small_quadratic_config_prefers_sparsity(four_firms):
    res = explain(four_firms, _req(2, 0.8, L0_SMALL))
    assert res.cost.l0 == 1
    assert res.plan_inputs[0] == pytest.approx(1.75, abs=1e-6)


def test_paper_peer_sets(four_firms):
    # under the euclidean cost, the third firm leans on both efficient firms,
    # the fourth only on the second
    r3 = explain(four_firms, _req(2, 0.8, L2))
    assert set(r3.active_peers) >= {0, 1}
    r4 = explain(four_firms, _req(3, 0.8, L2))
    assert 1 in r4.active_peers and 0 not in r4.active_peers


# ---------------------------------------------------------------------------
# request validation and degenerate targets
# ---------------------------------------------------------------------------

def test_target_below_score_errors(four_firms):
    with pytest.raises(TargetError):
        explain(four_firms, _req(3, 0.4))


def test_target_equal_score_zero_change(four_firms):
    e0 = dea.efficiency(four_firms, 3).score
    res = explain(four_firms, _req(3, e0))
    assert np.allclose(res.plan_inputs, four_firms.inputs[3])
    assert res.cost.weighted == 0.0
    assert res.verification.verified


def test_request_validation():
    with pytest.raises(ValueError):
        CounterfactualRequest(firm=0, e_target=0.0)
    with pytest.raises(ValueError):
        CounterfactualRequest(firm=0, e_target=1.2)
    with pytest.raises(ValueError):
        CounterfactualRequest(firm=0, e_target=0.5, metric="weird")


def test_inconsistent_bounds_error(four_firms):
    with pytest.raises(BoundsError):
        explain(four_firms, _req(2, 0.8, L2,
                                 lower_bounds=np.array([2.0, 2.0]),
                                 upper_bounds=np.array([1.0, 1.0])))


def test_m_zero_validation_on_raw_panel(four_firms):
    # raw inputs exceed 1, so the default change cap is too small un-normalized
    with pytest.raises(BoundsError):
        build_crs_input_program(four_firms, _req(2, 0.8))
    prog = build_crs_input_program(four_firms, _req(2, 0.8, L2,
                                                    big_m=BigMConfig(m_zero=5.0)))
    assert prog.problem.n_vars == 21


def test_output_locked_full_target_infeasible(four_firms):
    with pytest.raises(SolveFailure):
        explain(four_firms, _req(2, 1.0, L2, orient=Orientation.OUTPUT,
                                 locked=frozenset({0})))


# ---------------------------------------------------------------------------
# output orientation
# ---------------------------------------------------------------------------

def test_output_single_radial_linearity(four_firms):
    e0 = dea.efficiency(four_firms, 2).score
    for weights in (L2, L0L2, CostWeights(0.0, 1.0, 0.0)):
        res = explain(four_firms, _req(2, 0.8, weights, orient=Orientation.OUTPUT))
        assert res.plan_outputs[0] == pytest.approx(0.8 / e0, abs=1e-4)
        assert res.achieved >= 0.8 - 1e-6


def test_output_multi_dimensional_verifies():
    rng = np.random.default_rng(21)
    panel = random_panel(rng, 6, 2, 2)
    for k in range(panel.n_dmus):
        e0 = dea.efficiency(panel, k).score
        if e0 > 0.9:
            continue
        res = explain(panel, _req(k, min(1.0, e0 + 0.1), L2, orient=Orientation.OUTPUT))
        assert res.verification.verified
        assert res.achieved >= res.e_target - 1e-6
        assert np.allclose(res.plan_inputs, panel.inputs[k])


# ---------------------------------------------------------------------------
# verification invariants
# ---------------------------------------------------------------------------

def _inefficient_firms(panel, cap=0.92):
    scores = dea.all_efficiencies(panel)
    return [k for k in range(panel.n_dmus) if scores[k] < cap]


def test_feasibility_and_consistency_random_crs():
    rng = np.random.default_rng(100)
    for _ in range(6):
        panel = random_panel(rng, int(rng.integers(4, 9)), 2, int(rng.integers(1, 3)))
        for k in _inefficient_firms(panel)[:3]:
            for weights in (L2, L0L2):
                res = explain(panel, _req(k, 0.95, weights))
                assert res.achieved >= 0.95 - 1e-6
                assert abs(res.internal_score - res.achieved) <= 1e-6
                assert res.verification.verified


def test_feasibility_vrs_random():
    rng = np.random.default_rng(200)
    for _ in range(4):
        panel = random_panel(rng, 5, 2, 1)
        vrs_scores = dea.all_efficiencies(panel, Technology.VRS)
        for k in range(panel.n_dmus):
            if vrs_scores[k] >= 0.9:
                continue
            res = explain(panel, _req(k, 0.95, L2, tech=Technology.VRS))
            audited = dea.efficiency_of_plan(panel, res.plan_inputs,
                                             panel.outputs[k], Technology.VRS)
            assert audited.score >= 0.95 - 1e-6
            assert res.verification.verified


def test_monotone_cost_in_target(four_firms):
    for weights in (L2, L0L2):
        costs = [explain(four_firms, _req(3, t, weights)).cost.weighted
                 for t in (0.7, 0.8, 0.9, 1.0)]
        assert all(b >= a - 1e-9 for a, b in zip(costs, costs[1:]))


def test_change_indicator_matches_deviations(four_firms):
    pnorm, _ = normalize_max(four_firms)
    req = _req(2, 0.8, L0L2)
    prog = build_program(pnorm, req)
    sol = solve_miqp(prog.problem, warm_starts=warm_start_certificates(prog, req))
    vm = prog.vmap
    dev = np.abs(pnorm.inputs[2] - sol.x[vm.feature])
    xi = sol.x[vm.xi]
    for i in range(2):
        assert (xi[i] > 0.5) == (dev[i] > 1e-7)


def test_active_peer_dual_rows_tight(four_firms):
    pnorm, _ = normalize_max(four_firms)
    req = _req(2, 0.8, L2)
    prog = build_program(pnorm, req)
    sol = solve_miqp(prog.problem, warm_starts=warm_start_certificates(prog, req))
    vm = prog.vmap
    g_i, g_o = sol.x[vm.gamma_i], sol.x[vm.gamma_o]
    for k in range(4):
        if sol.x[vm.w[k]] > 0.5:
            resid = g_i @ pnorm.inputs[k] - g_o @ pnorm.outputs[k]
            assert resid <= 1e-6


def test_big_m_audit_passes_on_golden(four_firms):
    res = explain(four_firms, _req(2, 0.8, L2))
    assert res.verification.big_m.passed
    assert all(r.status == "pass" for r in res.verification.big_m.rows)


def test_big_m_audit_warns_near_cap(four_firms):
    pnorm, _ = normalize_max(four_firms)
    req = _req(2, 0.8, L2)
    prog = build_program(pnorm, req)
    sol = solve_miqp(prog.problem)
    xvec = sol.x.copy()
    # force a deviation that saturates the change cap
    xvec[prog.vmap.feature[0]] = pnorm.inputs[2][0] - prog.big_m.m_zero
    audit = audit_big_m(prog, xvec)
    assert not audit.passed
    assert any(r.kind == "xi" and r.status == "warn" for r in audit.rows)


# ---------------------------------------------------------------------------
# oracle agreement
# ---------------------------------------------------------------------------

def test_oracle_matches_explain_on_goldens(four_firms):
    for firm, weights in ((2, L2), (2, L0L2), (3, L2)):
        a = explain(four_firms, _req(firm, 0.8, weights))
        b = oracle_explain(four_firms, _req(firm, 0.8, weights))
        assert a.cost.weighted == pytest.approx(b.cost.weighted, abs=1e-3)


def test_oracle_agreement_random_panels():
    rng = np.random.default_rng(11)
    done = 0
    while done < 8:
        panel = random_panel(rng, int(rng.integers(4, 9)), 2, 1)
        firms = _inefficient_firms(panel, cap=0.85)
        if not firms:
            continue
        k = firms[0]
        weights = (L2, L0L2, L0_SMALL)[done % 3]
        req = _req(k, 0.9, weights)
        a = explain(panel, req)
        b = oracle_explain(panel, req)
        assert a.cost.weighted <= b.cost.weighted + 1e-3
        assert abs(a.cost.weighted - b.cost.weighted) <= 1e-3
        done += 1


def test_oracle_zero_change_and_boxed_out(four_firms):
    e0 = dea.efficiency(four_firms, 2).score
    res = oracle_explain(four_firms, _req(2, e0))
    assert res.cost.weighted == 0.0
    with pytest.raises(SolveFailure):
        oracle_explain(four_firms, _req(2, 1.0, L2,
                                        lower_bounds=np.array([1.9, 0.0]),
                                        locked=frozenset({1})))


def test_oracle_rejects_high_dimension():
    rng = np.random.default_rng(5)
    panel = random_panel(rng, 5, 3, 1)
    firms = _inefficient_firms(panel)
    with pytest.raises(ValueError):
        oracle_explain(panel, _req(firms[0], 0.97))


# ---------------------------------------------------------------------------
# metric and normalization interplay
# ---------------------------------------------------------------------------

def test_raw_metric_default_reproduces_unnormalized_solution(four_firms):
    with_norm = explain(four_firms, _req(2, 0.8, L2))
    without = explain(four_firms, _req(2, 0.8, L2, normalize=False,
                                       big_m=BigMConfig(m_zero=5.0)))
    assert with_norm.plan_inputs == pytest.approx(without.plan_inputs, abs=1e-5)


def test_normalized_metric_changes_the_optimum(four_firms):
    raw = explain(four_firms, _req(2, 0.8, L2))
    norm = explain(four_firms, _req(2, 0.8, L2, metric="normalized"))
    assert not np.allclose(raw.plan_inputs, norm.plan_inputs, atol=1e-3)
    # normalized-metric optimum: equal weight per relative change
    assert norm.achieved >= 0.8 - 1e-6


def test_per_feature_weights_steer_the_change(four_firms):
    # make deviations in the second input expensive: the sparse optimum flips
    # from changing x2 (golden) to changing x1
    heavy_x2 = CostWeights(1.0, 0.0, 1.0, per_feature=np.array([1.0, 50.0]))
    res = explain(four_firms, _req(2, 0.8, heavy_x2))
    assert res.changed.tolist() == [1, 0]
    assert res.plan_inputs[1] == pytest.approx(1.25, abs=1e-6)
    assert res.achieved >= 0.8 - 1e-6
