"""Least-cost counterfactual targets for DEA efficiency.

The bilevel problem (pick the cheapest new plan whose re-scored efficiency
reaches a target) is rewritten as a single level by replacing the scoring LP
with its optimality conditions: primal feasibility, dual feasibility, the
dual normalization, and complementarity, the last encoded with big-M rows
and indicator binaries.

Input orientation works on the reciprocal scale (F = 1/E with intensities
rescaled accordingly) so that every row is linear; output orientation keeps
the natural scale, which is already linear in the new outputs.  The cost is
a weighted mix of the change count, absolute deviations, and squared
deviations; the squares sit on the absolute-deviation variables, which match
|x0 - xhat| at any optimum with a positive l1/l2 weight, keeping the Hessian
diagonal.

Solutions are independently verified: the plan is re-scored against the
original panel, the internal efficiency variable is compared with that
re-score, and every big-M row is audited for near-saturation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import dea
from .lp import INFEASIBLE, OPTIMAL, LinearProgram, solve_lp
from .miqp import MiqpOptions, MiqpProblem, solve_miqp
from .model import (
    BigMConfig,
    CostWeights,
    Orientation,
    Panel,
    Technology,
    normalize_max,
)

CHANGE_TOL = 1e-7


class TargetError(ValueError):
    """Desired efficiency is below the firm's current score."""


class BoundsError(ValueError):
    """Inconsistent feasible-space options."""


@dataclass(frozen=True)
class CounterfactualRequest:
    """What-if query: make ``firm`` at least ``e_target`` efficient, changing
    the oriented side of its plan as cheaply as the weights dictate."""

    firm: int
    e_target: float
    weights: CostWeights = field(default_factory=lambda: CostWeights(0.0, 0.0, 1.0))
    tech: Technology = Technology.CRS
    orient: Orientation = Orientation.INPUT
    big_m: BigMConfig | None = None
    lower_bounds: np.ndarray | None = None
    upper_bounds: np.ndarray | None = None
    locked: frozenset = frozenset()
    nudge: bool = True          # hidden tie-break quadratic when nu2 == 0
    normalize: bool = True      # max-normalize the oriented side before solving
    metric: str = "raw"         # deviations measured in "raw" or "normalized" units

    def __post_init__(self):
        if not 0.0 < self.e_target <= 1.0 + 1e-12:
            raise ValueError("target efficiency must lie in (0, 1]")
        if self.metric not in ("raw", "normalized"):
            raise ValueError("metric must be 'raw' or 'normalized'")
        object.__setattr__(self, "locked", frozenset(int(i) for i in self.locked))


@dataclass
class VariableMap:
    """Column layout of one assembled program."""

    feature: np.ndarray         # xhat (input case) or yhat (output case)
    score: int                  # F (input case) or E (output case)
    beta: np.ndarray            # intensity weights (rescaled under input orientation)
    gamma_i: np.ndarray
    gamma_o: np.ndarray
    eta: np.ndarray
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    xi: np.ndarray
    kappa: int | None = None

    @property
    def n_continuous(self) -> int:
        n = self.feature.size + 1 + self.beta.size + self.gamma_i.size \
            + self.gamma_o.size + self.eta.size
        return n + (1 if self.kappa is not None else 0)

    @property
    def n_binary(self) -> int:
        return self.u.size + self.v.size + self.w.size + self.xi.size


@dataclass
class CounterfactualProgram:
    problem: MiqpProblem
    vmap: VariableMap
    big_m: BigMConfig
    panel: Panel                # solver-space panel
    firm: int
    orient: Orientation
    tech: Technology


@dataclass
class BigMAuditRow:
    kind: str
    index: int
    value: float
    cap: float
    status: str                 # "pass" or "warn"


@dataclass
class BigMAudit:
    rows: list[BigMAuditRow]

    @property
    def passed(self) -> bool:
        return all(r.status == "pass" for r in self.rows)


@dataclass
class CostReport:
    l0: int
    l1: float
    l2sq: float
    weighted: float


@dataclass
class Verification:
    feasible: bool
    rescore_delta: float
    big_m: BigMAudit
    verified: bool


@dataclass
class CounterfactualResult:
    dmu_id: str
    firm: int
    orient: Orientation
    tech: Technology
    plan_inputs: np.ndarray
    plan_outputs: np.ndarray
    base_score: float
    e_target: float
    achieved: float
    internal_score: float
    cost: CostReport
    active_peers: list[int]
    input_slack_free: np.ndarray    # u: 1 means the input row binds (no slack)
    output_slack_free: np.ndarray   # v
    changed: np.ndarray             # xi on the oriented side
    solver_status: str
    solver_nodes: int
    solver_gap: float
    wall_time: float
    verification: Verification


def _feature_weights(req: CounterfactualRequest, n_feat: int,
                     metric_scale: np.ndarray):
    """Objective coefficients in solver units.

    ``metric_scale`` converts a solver-space deviation into the metric the
    cost is stated in; the l1 weight picks up one factor, the quadratic two,
    and the change count none.
    """
    rho = req.weights.feature_weights(n_feat)
    w0 = req.weights.nu0 * rho
    w1 = req.weights.nu1 * rho * metric_scale
    w2 = req.weights.nu2 * rho * metric_scale ** 2
    nudge = np.zeros(n_feat)
    if req.nudge and req.weights.nu2 == 0.0:
        nudge = 1e-9 * rho
    return w0, w1, w2, nudge


def _solver_box(req: CounterfactualRequest, base: np.ndarray):
    """Feasible box for the changed features, in the panel's units."""
    n = base.size
    lo = np.zeros(n)
    hi = np.full(n, np.inf)
    if req.lower_bounds is not None:
        lb = np.asarray(req.lower_bounds, dtype=float)
        if lb.size != n:
            raise BoundsError("lower_bounds length mismatch")
        lo = np.maximum(lo, lb)
    if req.upper_bounds is not None:
        ub = np.asarray(req.upper_bounds, dtype=float)
        if ub.size != n:
            raise BoundsError("upper_bounds length mismatch")
        hi = np.minimum(hi, ub)
    for i in req.locked:
        if not 0 <= i < n:
            raise BoundsError(f"locked feature {i} out of range")
        lo[i] = hi[i] = base[i]
    if np.any(lo > hi + 1e-12):
        raise BoundsError("inconsistent feature bounds")
    return lo, hi


def _validate_m_zero(big_m: BigMConfig, base: np.ndarray, lo, hi):
    """m_zero must dominate every attainable |deviation| inside the box."""
    need = 0.0
    for i in range(base.size):
        down = base[i] - lo[i]
        need = max(need, down)
        if np.isfinite(hi[i]):
            need = max(need, hi[i] - base[i])
        elif lo[i] > base[i]:
            need = max(need, lo[i] - base[i])
    if need > big_m.m_zero + 1e-9:
        raise BoundsError(
            f"m_zero={big_m.m_zero} cannot cover a feasible change of {need:.4g}; "
            "pass a larger m_zero in the big-M configuration")


def _max_output_gain(panel: Panel, firm: int, tech: Technology) -> np.ndarray:
    """Per-output ceiling reachable at the firm's inputs (for m_zero sizing)."""
    x0 = panel.inputs[firm]
    k1 = panel.n_dmus
    caps = np.zeros(panel.n_outputs)
    for o in range(panel.n_outputs):
        rows = [panel.inputs[:, i] for i in range(panel.n_inputs)]
        senses = ["<="] * panel.n_inputs
        rhs = list(x0)
        if tech is Technology.VRS:
            rows.append(np.ones(k1))
            senses.append("=")
            rhs.append(1.0)
        sol = solve_lp(LinearProgram(c=panel.outputs[:, o], a=np.array(rows),
                                     senses=senses, b=np.array(rhs), maximize=True))
        caps[o] = sol.objective if sol.is_optimal else panel.outputs[firm, o]
    return caps


def default_big_m(panel: Panel, req: CounterfactualRequest) -> BigMConfig:
    """Paper-style defaults; the change cap is auto-sized on the output side,
    where targets can exceed the observed maxima."""
    if req.orient is Orientation.INPUT:
        return BigMConfig()
    caps = _max_output_gain(panel, req.firm, req.tech)
    gain = float(np.max(caps - panel.outputs[req.firm]))
    return BigMConfig(m_zero=max(1.0, 1.05 * gain))


def _assemble(panel, firm, req, feature_box, metric_scale, big_m, orient_input, vrs,
              confine_score=False):
    """Shared assembly for the input- and output-side programs."""
    x = panel.inputs
    y = panel.outputs
    k1 = panel.n_dmus
    i_dim, o_dim = panel.n_inputs, panel.n_outputs
    x0, y0 = x[firm], y[firm]
    n_feat = i_dim if orient_input else o_dim
    base = x0 if orient_input else y0

    # column layout: features, score, intensities, duals, eta, [kappa], binaries
    off = 0
    def take(k):
        nonlocal off
        idx = np.arange(off, off + k)
        off += k
        return idx
    feat = take(n_feat)
    score = int(take(1)[0])
    beta = take(k1)
    g_i = take(i_dim)
    g_o = take(o_dim)
    eta = take(n_feat)
    kappa = int(take(1)[0]) if vrs else None
    u = take(i_dim)
    v = take(o_dim)
    w = take(k1)
    xi = take(n_feat)
    n = off
    vmap = VariableMap(feat, score, beta, g_i, g_o, eta, u, v, w, xi, kappa)

    w0, w1, w2, nudge = _feature_weights(req, n_feat, metric_scale)
    c = np.zeros(n)
    q = np.zeros(n)
    c[eta] = w1
    c[xi] = w0
    q[eta] = w2 + nudge

    lo = np.zeros(n)
    hi = np.full(n, np.inf)
    lo[feat], hi[feat] = feature_box
    hi[u] = hi[v] = hi[w] = hi[xi] = 1.0
    if req.weights.nu0 == 0.0:
        lo[xi] = 1.0  # change indicators are free riders; pin them
    if confine_score:
        # the reciprocal score cannot drop below 1 (resp. rise above 1)
        # unless the feasible box forces the plan beyond the frontier
        if orient_input:
            lo[score] = 1.0
        else:
            hi[score] = 1.0
    if kappa is not None:
        if orient_input:
            lo[kappa] = 1.0 - big_m.m_output * float(np.sum(y0))
            hi[kappa] = 1.0
        else:
            span = big_m.m_frontier + big_m.m_input * float(np.max(x.sum(axis=1))) \
                + big_m.m_output * float(np.max(y.sum(axis=1)))
            lo[kappa] = -span
            hi[kappa] = span

    rows: list[np.ndarray] = []
    senses: list[str] = []
    rhs: list[float] = []

    def add(row, sense, b):
        rows.append(row)
        senses.append(sense)
        rhs.append(float(b))

    # score target: F <= F* (input) or E >= E* (output)
    row = np.zeros(n)
    row[score] = 1.0
    if orient_input:
        add(row, "<=", 1.0 / req.e_target)
    else:
        add(row, ">=", req.e_target)

    # primal feasibility of the scoring problem
    for i in range(i_dim):
        row = np.zeros(n)
        row[beta] = x[:, i]
        if orient_input:
            row[feat[i]] = -1.0
            add(row, "<=", 0.0)
        else:
            row[score] = -x0[i]
            add(row, "<=", 0.0)
    for o in range(o_dim):
        row = np.zeros(n)
        row[beta] = -y[:, o]
        if orient_input:
            row[score] = y0[o]
            add(row, "<=", 0.0)
        else:
            row[feat[o]] = 1.0
            add(row, "<=", 0.0)

    # dual normalization and dual feasibility
    row = np.zeros(n)
    if orient_input:
        row[g_o] = y0
        if kappa is not None:
            row[kappa] = 1.0
    else:
        row[g_i] = x0
    add(row, "=", 1.0)
    for k in range(k1):
        row = np.zeros(n)
        row[g_o] = y[k]
        row[g_i] = -x[k]
        if kappa is not None:
            row[kappa] = 1.0 if orient_input else -1.0
        add(row, "<=", 0.0)

    # complementarity: input rows vs their duals
    for i in range(i_dim):
        row = np.zeros(n)
        row[g_i[i]] = 1.0
        row[u[i]] = -big_m.m_input
        add(row, "<=", 0.0)
        row = np.zeros(n)  # slack of primal input row i
        row[beta] = -x[:, i]
        if orient_input:
            row[feat[i]] = 1.0
        else:
            row[score] = x0[i]
        row[u[i]] = big_m.m_input
        add(row, "<=", big_m.m_input)

    # complementarity: output rows vs their duals
    for o in range(o_dim):
        row = np.zeros(n)
        row[g_o[o]] = 1.0
        row[v[o]] = -big_m.m_output
        add(row, "<=", 0.0)
        row = np.zeros(n)
        if orient_input:
            row[beta] = y[:, o]
            row[score] = -y0[o]
        else:
            row[beta] = y[:, o]
            row[feat[o]] = -1.0
        row[v[o]] = big_m.m_output
        add(row, "<=", big_m.m_output)

    # complementarity: intensities vs dual-row slacks
    for k in range(k1):
        row = np.zeros(n)
        row[beta[k]] = 1.0
        row[w[k]] = -big_m.m_frontier
        add(row, "<=", 0.0)
        row = np.zeros(n)
        row[g_i] = x[k]
        row[g_o] = -y[k]
        if kappa is not None:
            row[kappa] = -1.0 if orient_input else 1.0
        row[w[k]] = big_m.m_frontier
        add(row, "<=", big_m.m_frontier)

    # change indicators and absolute deviations
    for t in range(n_feat):
        row = np.zeros(n)
        row[feat[t]] = 1.0
        row[xi[t]] = -big_m.m_zero
        add(row, "<=", base[t])
        row = np.zeros(n)
        row[feat[t]] = -1.0
        row[xi[t]] = -big_m.m_zero
        add(row, "<=", -base[t])
        row = np.zeros(n)
        row[feat[t]] = -1.0
        row[eta[t]] = -1.0
        add(row, "<=", -base[t])
        row = np.zeros(n)
        row[feat[t]] = 1.0
        row[eta[t]] = -1.0
        add(row, "<=", base[t])

    # technology constraint on the intensity scale
    if vrs and orient_input:
        row = np.zeros(n)
        row[beta] = 1.0
        row[score] = -1.0
        add(row, "=", 0.0)
    elif vrs:
        row = np.zeros(n)
        row[beta] = 1.0
        add(row, "=", 1.0)

    binary = np.concatenate([u, v, w, xi])
    problem = MiqpProblem(c=c, q=q, a=np.array(rows), senses=senses,
                          b=np.array(rhs), lower=lo, upper=hi, binary=binary)
    expect_cont = 3 * n_feat + k1 + 1 + (o_dim if orient_input else i_dim) \
        + (1 if vrs else 0)
    expect_rows = 1 + i_dim + o_dim + 1 + k1 + 2 * i_dim + 2 * o_dim + 2 * k1 \
        + 4 * n_feat + (1 if vrs else 0)
    if vmap.n_continuous != expect_cont or len(rows) != expect_rows:
        raise AssertionError("internal: variable or row count mismatch")
    return CounterfactualProgram(problem, vmap, big_m, panel, firm, req.orient, req.tech)


def _prep(panel, req, feature_scale):
    base = panel.inputs[req.firm] if req.orient is Orientation.INPUT else panel.outputs[req.firm]
    scale = np.ones(base.size) if feature_scale is None else np.asarray(feature_scale, dtype=float)
    box = _solver_box(req, base)
    big_m = req.big_m or default_big_m(panel, req)
    _validate_m_zero(big_m, base, *box)
    return box, scale, big_m


def _score_domain_safe(panel, req, box) -> bool:
    """True when the least-change box point stays inside the technology, so
    the internal score variable can be confined to the reciprocal domain
    (F >= 1, resp. E <= 1).  A box that forces the plan beyond the frontier
    makes the confinement invalid."""
    lo, hi = box
    if req.orient is Orientation.INPUT:
        plan = np.clip(panel.inputs[req.firm], lo, hi)
        res = dea.efficiency_of_plan(panel, np.maximum(plan, 1e-12),
                                     panel.outputs[req.firm], req.tech,
                                     Orientation.INPUT)
    else:
        plan = np.clip(panel.outputs[req.firm], lo, hi)
        res = dea.efficiency_of_plan(panel, panel.inputs[req.firm], plan,
                                     req.tech, Orientation.INPUT)
    return res.is_optimal and res.score <= 1.0 + 1e-9


def build_crs_input_program(panel: Panel, req: CounterfactualRequest,
                            feature_scale=None) -> CounterfactualProgram:
    """Input-side program under constant returns to scale.

    Carries exactly 3I+K+2+O continuous and 2I+O+K+1 binary variables and
    7I+3O+3K+5 rows for a plain request.
    """
    if req.orient is not Orientation.INPUT:
        raise ValueError("input-side builder requires input orientation")
    box, scale, big_m = _prep(panel, req, feature_scale)
    return _assemble(panel, req.firm, req, box, scale, big_m,
                     orient_input=True, vrs=False,
                     confine_score=_score_domain_safe(panel, req, box))


def build_vrs_input_program(panel: Panel, req: CounterfactualRequest,
                            feature_scale=None) -> CounterfactualProgram:
    """Input-side program under variable returns to scale: adds the convexity
    row on the rescaled intensities and its dual variable.

    The dual of the convexity row is free: plans whose reference point sits
    in the decreasing-returns region need it negative.
    """
    if req.orient is not Orientation.INPUT:
        raise ValueError("input-side builder requires input orientation")
    box, scale, big_m = _prep(panel, req, feature_scale)
    return _assemble(panel, req.firm, req, box, scale, big_m,
                     orient_input=True, vrs=True,
                     confine_score=_score_domain_safe(panel, req, box))


def build_output_program(panel: Panel, req: CounterfactualRequest,
                         feature_scale=None) -> CounterfactualProgram:
    """Output-side program: inputs stay put, outputs grow to the target."""
    if req.orient is not Orientation.OUTPUT:
        raise ValueError("output-side builder requires output orientation")
    box, scale, big_m = _prep(panel, req, feature_scale)
    return _assemble(panel, req.firm, req, box, scale, big_m,
                     orient_input=False, vrs=(req.tech is Technology.VRS),
                     confine_score=_score_domain_safe(panel, req, box))


# ---------------------------------------------------------------------------
# warm-start certificates
# ---------------------------------------------------------------------------

def _dual_multipliers(panel, plan, req, vrs):
    """Optimal duals of the scoring problem for ``plan``, in the same sign
    convention as the assembled rows.  Returns (gamma_i, gamma_o, kappa, value)
    or None when the dual solve fails."""
    x, y = panel.inputs, panel.outputs
    k1 = panel.n_dmus
    i_dim, o_dim = panel.n_inputs, panel.n_outputs
    nk = 1 if vrs else 0
    n = i_dim + o_dim + nk
    rows, senses, rhs = [], [], []
    if req.orient is Orientation.INPUT:
        y0 = panel.outputs[req.firm]
        row = np.zeros(n)
        row[i_dim:i_dim + o_dim] = y0
        if vrs:
            row[-1] = 1.0
        rows.append(row)
        senses.append("=")
        rhs.append(1.0)
        for k in range(k1):
            row = np.zeros(n)
            row[:i_dim] = x[k]
            row[i_dim:i_dim + o_dim] = -y[k]
            if vrs:
                row[-1] = -1.0
            rows.append(row)
            senses.append(">=")
            rhs.append(0.0)
        c = np.zeros(n)
        c[:i_dim] = plan
        maximize = False
    else:
        x0 = panel.inputs[req.firm]
        row = np.zeros(n)
        row[:i_dim] = x0
        rows.append(row)
        senses.append("=")
        rhs.append(1.0)
        for k in range(k1):
            row = np.zeros(n)
            row[i_dim:i_dim + o_dim] = y[k]
            row[:i_dim] = -x[k]
            if vrs:
                row[-1] = -1.0
            rows.append(row)
            senses.append("<=")
            rhs.append(0.0)
        c = np.zeros(n)
        c[i_dim:i_dim + o_dim] = plan
        if vrs:
            c[-1] = -1.0
        maximize = True
    lower = np.zeros(n)
    if vrs:
        lower[-1] = -np.inf
    sol = solve_lp(LinearProgram(c=c, a=np.array(rows), senses=senses,
                                 b=np.array(rhs), lower=lower, maximize=maximize))
    if not sol.is_optimal:
        return None
    g_i = sol.x[:i_dim]
    g_o = sol.x[i_dim:i_dim + o_dim]
    kap = float(sol.x[-1]) if vrs else None
    return g_i, g_o, kap, sol.objective


def _certificate(program: CounterfactualProgram, req, plan):
    """Full variable vector certifying ``plan`` (solver units), or None."""
    panel = program.panel
    vrs = program.vmap.kappa is not None
    orient = req.orient
    firm = req.firm
    if orient is Orientation.INPUT:
        score = dea.efficiency_of_plan(panel, plan, panel.outputs[firm],
                                       req.tech, Orientation.INPUT)
    else:
        score = dea.efficiency_of_plan(panel, panel.inputs[firm], plan,
                                       req.tech, Orientation.INPUT)
    if not score.is_optimal or score.score < req.e_target - 1e-7:
        return None
    duals = _dual_multipliers(panel, plan, req, vrs)
    if duals is None:
        return None
    g_i, g_o, kap, _ = duals
    vm = program.vmap
    xvec = np.zeros(program.problem.n_vars)
    xvec[vm.feature] = plan
    lam = score.lambdas
    if orient is Orientation.INPUT:
        e_plan = score.score
        xvec[vm.score] = 1.0 / e_plan
        xvec[vm.beta] = lam / e_plan
    else:
        xvec[vm.score] = score.score
        xvec[vm.beta] = lam
    xvec[vm.gamma_i] = g_i
    xvec[vm.gamma_o] = g_o
    if vrs:
        xvec[vm.kappa] = kap
    base = panel.inputs[firm] if orient is Orientation.INPUT else panel.outputs[firm]
    dev = np.abs(base - plan)
    xvec[vm.eta] = dev
    xvec[vm.u] = (g_i > 1e-9).astype(float)
    xvec[vm.v] = (g_o > 1e-9).astype(float)
    xvec[vm.w] = (xvec[vm.beta] > 1e-9).astype(float)
    if req.weights.nu0 == 0.0:
        xvec[vm.xi] = 1.0
    else:
        xvec[vm.xi] = (dev > 1e-9).astype(float)
    return xvec


def _bisect_feature(score_fn, lo, hi, target, decreasing, iters=80):
    """Feature value where the monotone ``score_fn`` crosses ``target``."""
    a, b = lo, hi
    for _ in range(iters):
        mid = 0.5 * (a + b)
        s = score_fn(mid)
        if abs(s - target) <= 1e-10:
            return mid
        too_low = s < target
        if decreasing:
            # score falls as the value rises
            if too_low:
                b = mid
            else:
                a = mid
        else:
            if too_low:
                a = mid
            else:
                b = mid
        if b - a < 1e-14:
            break
    return a if decreasing else b


def _candidate_plans(program: CounterfactualProgram, req):
    """Cheap feasible plans: the radial projection plus single-feature moves."""
    panel = program.panel
    firm = req.firm
    lo = program.problem.lower[program.vmap.feature]
    hi = program.problem.upper[program.vmap.feature]
    plans = []
    if req.orient is Orientation.INPUT:
        base = np.clip(panel.inputs[firm], lo, hi)
        y0 = panel.outputs[firm]

        def score_at(plan):
            res = dea.efficiency_of_plan(panel, np.maximum(plan, 1e-12), y0,
                                         req.tech, Orientation.INPUT)
            return res.score if res.is_optimal else -np.inf

        try:
            radial = dea.farrell_projection(panel, firm, req.e_target, req.tech)
            if np.all(radial >= lo - 1e-12) and np.all(radial <= hi + 1e-12):
                plans.append(np.clip(radial, lo, hi))
        except ValueError:
            pass
        for i in range(base.size):
            if lo[i] >= base[i] - 1e-15 or i in req.locked:
                continue
            floor = max(lo[i], 1e-9)
            probe = base.copy()
            probe[i] = floor
            if score_at(probe) < req.e_target:
                continue

            def axis_score(val, i=i):
                p = base.copy()
                p[i] = val
                return score_at(p)

            best = _bisect_feature(axis_score, floor, base[i], req.e_target,
                                   decreasing=True)
            plan = base.copy()
            plan[i] = best
            plans.append(plan)
    else:
        base = np.clip(panel.outputs[firm], lo, hi)
        x0 = panel.inputs[firm]

        def score_at(plan):
            res = dea.efficiency_of_plan(panel, x0, np.maximum(plan, 0.0),
                                         req.tech, Orientation.INPUT)
            return res.score if res.is_optimal else -np.inf

        caps = _max_output_gain(panel, firm, req.tech)
        # radial expansion of all outputs
        t_hi = 2.0
        for _ in range(40):
            if score_at(base * t_hi) >= req.e_target or t_hi > 1e6:
                break
            t_hi *= 2.0
        if score_at(base * t_hi) >= req.e_target:
            t = _bisect_feature(lambda t: score_at(base * t), 1.0, t_hi,
                                req.e_target, decreasing=False)
            plan = np.clip(base * t, lo, hi)
            if score_at(plan) >= req.e_target - 1e-9:
                plans.append(plan)
        for o in range(base.size):
            if o in req.locked:
                continue
            ceil = min(hi[o], caps[o] * 1.0000001)
            if ceil <= base[o] + 1e-15:
                continue
            probe = base.copy()
            probe[o] = ceil
            if score_at(probe) < req.e_target:
                continue

            def axis_score(val, o=o):
                p = base.copy()
                p[o] = val
                return score_at(p)

            best = _bisect_feature(axis_score, base[o], ceil, req.e_target,
                                   decreasing=False)
            plan = base.copy()
            plan[o] = best
            plans.append(plan)
    return plans


def warm_start_certificates(program: CounterfactualProgram,
                            req: CounterfactualRequest) -> list[np.ndarray]:
    """Feasible full-variable vectors used to seed the incumbent."""
    out = []
    for plan in _candidate_plans(program, req):
        cert = _certificate(program, req, plan)
        if cert is not None:
            out.append(cert)
    return out


# ---------------------------------------------------------------------------
# solution extraction and verification
# ---------------------------------------------------------------------------

def audit_big_m(program: CounterfactualProgram, xvec: np.ndarray) -> BigMAudit:
    """Flag any big-M row whose active side sits within 1% of its cap, plus
    any deviation within 1% of the change cap."""
    vm = program.vmap
    panel = program.panel
    big_m = program.big_m
    x, y = panel.inputs, panel.outputs
    firm = program.firm
    orient_input = program.orient is Orientation.INPUT
    base = x[firm] if orient_input else y[firm]
    plan = xvec[vm.feature]
    score = xvec[vm.score]
    beta = xvec[vm.beta]
    g_i = xvec[vm.gamma_i]
    g_o = xvec[vm.gamma_o]
    kap = xvec[vm.kappa] if vm.kappa is not None else 0.0
    rows = []

    def judge(kind, idx, value, cap):
        status = "warn" if value >= 0.99 * cap else "pass"
        rows.append(BigMAuditRow(kind, idx, float(value), float(cap), status))

    for i in range(panel.n_inputs):
        if xvec[vm.u[i]] > 0.5:
            judge("u", i, g_i[i], big_m.m_input)
        else:
            if orient_input:
                slack = plan[i] - beta @ x[:, i]
            else:
                slack = score * x[firm, i] - beta @ x[:, i]
            judge("u", i, slack, big_m.m_input)
    for o in range(panel.n_outputs):
        if xvec[vm.v[o]] > 0.5:
            judge("v", o, g_o[o], big_m.m_output)
        else:
            if orient_input:
                slack = beta @ y[:, o] - score * y[firm, o]
            else:
                slack = beta @ y[:, o] - plan[o]
            judge("v", o, slack, big_m.m_output)
    for k in range(panel.n_dmus):
        if xvec[vm.w[k]] > 0.5:
            judge("w", k, beta[k], big_m.m_frontier)
        else:
            dual_slack = g_i @ x[k] - g_o @ y[k]
            dual_slack += -kap if orient_input else kap
            judge("w", k, dual_slack, big_m.m_frontier)
    for t in range(plan.size):
        judge("xi", t, abs(base[t] - plan[t]), big_m.m_zero)
    return BigMAudit(rows)


def _cost_report(req: CounterfactualRequest, dev_solver: np.ndarray,
                 metric_scale: np.ndarray) -> CostReport:
    changed = np.abs(dev_solver) > CHANGE_TOL
    dev_m = np.abs(dev_solver) * metric_scale
    rho = req.weights.feature_weights(dev_solver.size)
    weighted = float(req.weights.nu0 * rho @ changed
                     + req.weights.nu1 * rho @ dev_m
                     + req.weights.nu2 * rho @ dev_m ** 2)
    return CostReport(l0=int(changed.sum()), l1=float(dev_m.sum()),
                      l2sq=float(dev_m @ dev_m), weighted=weighted)


def _zero_change_result(panel, req, base_score, dmu_id) -> CounterfactualResult:
    x0 = panel.inputs[req.firm].copy()
    y0 = panel.outputs[req.firm].copy()
    n_feat = x0.size if req.orient is Orientation.INPUT else y0.size
    cost = CostReport(0, 0.0, 0.0, 0.0)
    ver = Verification(True, 0.0, BigMAudit([]), True)
    return CounterfactualResult(
        dmu_id=dmu_id, firm=req.firm, orient=req.orient, tech=req.tech,
        plan_inputs=x0, plan_outputs=y0, base_score=base_score,
        e_target=req.e_target, achieved=base_score, internal_score=base_score,
        cost=cost, active_peers=[], input_slack_free=np.zeros(panel.n_inputs, dtype=int),
        output_slack_free=np.zeros(panel.n_outputs, dtype=int),
        changed=np.zeros(n_feat, dtype=int), solver_status=OPTIMAL,
        solver_nodes=0, solver_gap=0.0, wall_time=0.0, verification=ver)


def _extract(program, req, miqp_sol, original_panel, record, metric_scale,
             base_score, dmu_id) -> CounterfactualResult:
    vm = program.vmap
    xvec = miqp_sol.x
    plan_solver = xvec[vm.feature]
    plan_raw = record.invert_vector(plan_solver) if record is not None else plan_solver.copy()
    firm = req.firm
    if req.orient is Orientation.INPUT:
        plan_inputs = plan_raw
        plan_outputs = original_panel.outputs[firm].copy()
        base_solver = program.panel.inputs[firm]
        internal = 1.0 / xvec[vm.score]
    else:
        plan_inputs = original_panel.inputs[firm].copy()
        plan_outputs = plan_raw
        base_solver = program.panel.outputs[firm]
        internal = float(xvec[vm.score])

    rescored = dea.efficiency_of_plan(original_panel, np.maximum(plan_inputs, 1e-12),
                                      plan_outputs, req.tech, Orientation.INPUT)
    achieved = rescored.score if rescored.is_optimal else float("nan")
    dev_solver = base_solver - plan_solver
    cost = _cost_report(req, dev_solver, metric_scale)
    audit = audit_big_m(program, xvec)
    delta = abs(internal - achieved) if np.isfinite(achieved) else float("inf")
    feasible = np.isfinite(achieved) and achieved >= req.e_target - 1e-6
    ver = Verification(feasible=feasible, rescore_delta=float(delta),
                       big_m=audit,
                       verified=bool(feasible and audit.passed and delta <= 1e-6))
    return CounterfactualResult(
        dmu_id=dmu_id, firm=firm, orient=req.orient, tech=req.tech,
        plan_inputs=plan_inputs, plan_outputs=plan_outputs,
        base_score=base_score, e_target=req.e_target, achieved=float(achieved),
        internal_score=float(internal), cost=cost,
        active_peers=[int(k) for k in np.where(xvec[vm.w] > 0.5)[0]],
        input_slack_free=(xvec[vm.u] > 0.5).astype(int),
        output_slack_free=(xvec[vm.v] > 0.5).astype(int),
        changed=(np.abs(dev_solver) > CHANGE_TOL).astype(int),
        solver_status=miqp_sol.status, solver_nodes=miqp_sol.nodes,
        solver_gap=float(miqp_sol.gap), wall_time=miqp_sol.wall_time,
        verification=ver)


def build_program(panel: Panel, req: CounterfactualRequest,
                  feature_scale=None) -> CounterfactualProgram:
    """Dispatch to the right builder for the request's technology/orientation."""
    if req.orient is Orientation.INPUT:
        if req.tech is Technology.CRS:
            return build_crs_input_program(panel, req, feature_scale)
        return build_vrs_input_program(panel, req, feature_scale)
    return build_output_program(panel, req, feature_scale)


def explain(panel: Panel, req: CounterfactualRequest,
            options: MiqpOptions | None = None,
            warm_start: bool = True) -> CounterfactualResult:
    """Build, solve, and verify the counterfactual program for one firm.

    The oriented side is max-normalized before solving (unless disabled); by
    default the cost metric stays in the original units, with the objective
    weights compensated per column.  Feature bounds in the request are always
    stated in original units.
    """
    if not 0 <= req.firm < panel.n_dmus:
        raise IndexError(f"firm index {req.firm} out of range")
    dmu_id = panel.dmu_ids[req.firm]
    base = dea.efficiency(panel, req.firm, req.tech, req.orient)
    base_score = base.score
    if req.e_target < base_score - 1e-9:
        raise TargetError(
            f"target {req.e_target} is below the current score {base_score:.6f}")
    if req.e_target <= base_score + 1e-9:
        return _zero_change_result(panel, req, base_score, dmu_id)

    side = Orientation.INPUT if req.orient is Orientation.INPUT else Orientation.OUTPUT
    if req.normalize:
        panel_s, record = normalize_max(panel, side)
        factors = record.factors
    else:
        panel_s, record, factors = panel, None, np.ones(
            panel.n_inputs if side is Orientation.INPUT else panel.n_outputs)

    # bounds arrive in original units; the solver works post-normalization
    req_s = req
    if record is not None and (req.lower_bounds is not None or req.upper_bounds is not None):
        lb = None if req.lower_bounds is None else np.asarray(req.lower_bounds, float) / factors
        ub = None if req.upper_bounds is None else np.asarray(req.upper_bounds, float) / factors
        req_s = replace(req, lower_bounds=lb, upper_bounds=ub)

    if req.metric == "raw":
        metric_scale = factors.copy()
    else:
        colmax = (panel.inputs if side is Orientation.INPUT else panel.outputs).max(axis=0)
        metric_scale = factors / colmax

    program = build_program(panel_s, req_s, feature_scale=metric_scale)
    starts = warm_start_certificates(program, req_s) if warm_start else None
    opts = options or MiqpOptions()
    if opts.branch_priority is None:
        # resolve the input/output complementarities before peer selection;
        # this is what lets the bound climb on larger panels
        prio = np.ones(program.problem.n_binary)
        prio[:program.vmap.u.size + program.vmap.v.size] = 10.0
        opts = replace(opts, branch_priority=prio)
    sol = solve_miqp(program.problem, opts, warm_starts=starts)
    if sol.x is None:
        raise SolveFailure(sol.status, req.firm, dmu_id)
    return _extract(program, req_s, sol, panel, record, metric_scale,
                    base_score, dmu_id)


class SolveFailure(RuntimeError):
    """Solver finished without any feasible counterfactual."""

    def __init__(self, status, firm, dmu_id):
        super().__init__(f"no counterfactual for DMU {dmu_id!r}: solver status {status}")
        self.status = status
        self.firm = firm
        self.dmu_id = dmu_id


# ---------------------------------------------------------------------------
# independent grid-search oracle
# ---------------------------------------------------------------------------

def _grid_axis(lo, hi, base, n):
    pts = np.linspace(lo, hi, n)
    if lo - 1e-15 <= base <= hi + 1e-15:
        pts = np.union1d(pts, [base])
    return pts


def oracle_explain(panel: Panel, req: CounterfactualRequest,
                   base_points: int = 51, refine_points: int = 41,
                   final_step: float = 1e-4) -> CounterfactualResult:
    """Counterfactual by dense search over the feature box, with every
    candidate re-scored against the panel by the plain DEA LP.

    One coordinate sweeps a grid (refined around the best cell until the
    step is at most ``final_step``); the other is bisected onto the target
    boundary, where the cost is minimal for that column.  Exact within the
    grid, and entirely independent of the single-level encoding.  Only
    usable when at most two features may move.
    """
    if not 0 <= req.firm < panel.n_dmus:
        raise IndexError(f"firm index {req.firm} out of range")
    dmu_id = panel.dmu_ids[req.firm]
    orient_input = req.orient is Orientation.INPUT
    base = (panel.inputs if orient_input else panel.outputs)[req.firm].copy()
    n_feat = base.size
    base_eff = dea.efficiency(panel, req.firm, req.tech, req.orient)
    if req.e_target < base_eff.score - 1e-9:
        raise TargetError(
            f"target {req.e_target} is below the current score {base_eff.score:.6f}")
    if req.e_target <= base_eff.score + 1e-9:
        return _zero_change_result(panel, req, base_eff.score, dmu_id)

    lo, hi = _solver_box(req, base)
    if orient_input:
        hi = np.minimum(hi, np.maximum(base, lo))  # raising inputs never helps
        lo = np.maximum(lo, 1e-9)
    else:
        caps = _max_output_gain(panel, req.firm, req.tech) * (1 + 1e-9)
        hi = np.minimum(hi, np.maximum(caps, lo))
        lo = np.maximum(lo, base)                  # cutting outputs never helps
    movable = [t for t in range(n_feat) if hi[t] - lo[t] > 1e-12]
    if len(movable) > 2:
        raise ValueError("grid oracle supports at most two movable features")

    if req.metric == "raw":
        metric_scale = np.ones(n_feat)
    else:
        metric_scale = 1.0 / (panel.inputs if orient_input else panel.outputs).max(axis=0)

    fixed = np.clip(base, lo, hi)
    target = req.e_target

    def score_of(plan):
        if orient_input:
            res = dea.efficiency_of_plan(panel, plan, panel.outputs[req.firm],
                                         req.tech, Orientation.INPUT)
        else:
            res = dea.efficiency_of_plan(panel, panel.inputs[req.firm], plan,
                                         req.tech, Orientation.INPUT)
        return res.score if res.is_optimal else -np.inf

    def cost_of(plan):
        return _cost_report(req, base - plan, metric_scale).weighted

    def boundary_value(plan, t):
        """Least deviation of coordinate ``t`` making ``plan`` hit the target,
        or None if even the extreme value falls short."""
        easy = plan.copy()
        easy[t] = base[t] if lo[t] <= base[t] <= hi[t] else fixed[t]
        if score_of(easy) >= target - 1e-10:
            return easy[t]
        hard = plan.copy()
        hard[t] = lo[t] if orient_input else hi[t]
        if score_of(hard) < target - 1e-10:
            return None

        def axis_score(val):
            p = plan.copy()
            p[t] = val
            return score_of(p)

        if orient_input:
            return _bisect_feature(axis_score, hard[t], easy[t], target,
                                   decreasing=True)
        return _bisect_feature(axis_score, easy[t], hard[t], target,
                               decreasing=False)

    candidates: list[np.ndarray] = []
    if not movable:
        if score_of(fixed) >= target - 1e-9:
            candidates.append(fixed.copy())
    elif len(movable) == 1:
        t = movable[0]
        val = boundary_value(fixed, t)
        if val is not None:
            plan = fixed.copy()
            plan[t] = val
            candidates.append(plan)
    else:
        # sweep each coordinate, bisect the other onto the boundary
        for sweep, other in (movable, movable[::-1]):
            window = (lo[sweep], hi[sweep])
            n_pts = base_points
            best_local = None
            for _ in range(8):
                axis = _grid_axis(window[0], window[1], base[sweep], n_pts)
                for val in axis:
                    plan = fixed.copy()
                    plan[sweep] = val
                    bval = boundary_value(plan, other)
                    if bval is None:
                        continue
                    plan[other] = bval
                    c = cost_of(plan)
                    if best_local is None or c < best_local[0] - 1e-15:
                        best_local = (c, plan.copy())
                step = (window[1] - window[0]) / max(n_pts - 1, 1)
                if best_local is None or step <= final_step:
                    break
                centre = best_local[1][sweep]
                window = (max(lo[sweep], centre - 2 * step),
                          min(hi[sweep], centre + 2 * step))
                n_pts = refine_points
            if best_local is not None:
                candidates.append(best_local[1])

    feasible = [(cost_of(p), i) for i, p in enumerate(candidates)
                if score_of(p) >= target - 1e-6]
    if not feasible:
        raise SolveFailure(INFEASIBLE, req.firm, dmu_id)
    best_plan = candidates[min(feasible)[1]]

    achieved = score_of(best_plan)
    cost = _cost_report(req, base - best_plan, metric_scale)
    if orient_input:
        plan_inputs, plan_outputs = best_plan, panel.outputs[req.firm].copy()
    else:
        plan_inputs, plan_outputs = panel.inputs[req.firm].copy(), best_plan
    ver = Verification(feasible=achieved >= target - 1e-6,
                       rescore_delta=0.0, big_m=BigMAudit([]),
                       verified=achieved >= target - 1e-6)
    return CounterfactualResult(
        dmu_id=dmu_id, firm=req.firm, orient=req.orient, tech=req.tech,
        plan_inputs=plan_inputs, plan_outputs=plan_outputs,
        base_score=base_eff.score, e_target=req.e_target,
        achieved=float(achieved), internal_score=float(achieved), cost=cost,
        active_peers=[], input_slack_free=np.zeros(panel.n_inputs, dtype=int),
        output_slack_free=np.zeros(panel.n_outputs, dtype=int),
        changed=(np.abs(base - best_plan) > CHANGE_TOL).astype(int),
        solver_status="GridOracle", solver_nodes=0, solver_gap=0.0,
        wall_time=0.0, verification=ver)
