"""Classical DEA scoring and frontier exploration.

Farrell input/output efficiency under constant or variable returns to scale,
scoring of arbitrary plans against a fixed technology, directional distance
(the excess problem), and radial projections to a desired efficiency level.
All operations are pure functions over an immutable panel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lp import INFEASIBLE, OPTIMAL, UNBOUNDED, LinearProgram, solve_lp
from .model import Orientation, Panel, Technology

PEER_TOL = 1e-7


@dataclass
class EfficiencyResult:
    """Farrell score with the intensity weights behind it.

    ``score`` is always on the E scale (1 = frontier); output-oriented runs
    additionally carry the expansion factor F = 1/E.
    """

    status: str
    score: float | None = None
    expansion: float | None = None
    lambdas: np.ndarray | None = None
    peers: list[int] = field(default_factory=list)
    input_slacks: np.ndarray | None = None
    output_slacks: np.ndarray | None = None

    @property
    def is_optimal(self) -> bool:
        return self.status == OPTIMAL


@dataclass(frozen=True)
class DirectionalRequest:
    """Improvement direction: shrink inputs along d_x, grow outputs along d_y."""

    d_x: np.ndarray
    d_y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "d_x", np.asarray(self.d_x, dtype=float))
        object.__setattr__(self, "d_y", np.asarray(self.d_y, dtype=float))
        if np.any(self.d_x < 0) or np.any(self.d_y < 0):
            raise ValueError("direction components must be nonnegative")
        if self.d_x.max(initial=0.0) <= 0 and self.d_y.max(initial=0.0) <= 0:
            raise ValueError("direction must have a positive component")


@dataclass
class DirectionalResult:
    status: str
    excess: float | None = None
    target_inputs: np.ndarray | None = None
    target_outputs: np.ndarray | None = None
    lambdas: np.ndarray | None = None


def _build_score_lp(panel, x0, y0, tech, orient, cap_score) -> LinearProgram:
    """Scoring LP for plan (x0, y0) against the panel technology.

    Input orientation: min E s.t. sum(lam x) <= E x0, sum(lam y) >= y0.
    Output orientation: max F s.t. sum(lam x) <= x0, sum(lam y) >= F y0.
    """
    k1 = panel.n_dmus
    n = 1 + k1
    i_dim, o_dim = panel.n_inputs, panel.n_outputs
    rows, senses, rhs = [], [], []
    for i in range(i_dim):
        row = np.zeros(n)
        row[1:] = panel.inputs[:, i]
        if orient is Orientation.INPUT:
            row[0] = -x0[i]
            rhs.append(0.0)
        else:
            row[0] = 0.0
            rhs.append(x0[i])
        rows.append(row)
        senses.append("<=")
    for o in range(o_dim):
        row = np.zeros(n)
        row[1:] = panel.outputs[:, o]
        if orient is Orientation.INPUT:
            row[0] = 0.0
            rhs.append(y0[o])
        else:
            row[0] = -y0[o]
            rhs.append(0.0)
        rows.append(row)
        senses.append(">=")
    if tech is Technology.VRS:
        row = np.zeros(n)
        row[1:] = 1.0
        rows.append(row)
        senses.append("=")
        rhs.append(1.0)
    c = np.zeros(n)
    c[0] = 1.0
    upper = np.full(n, np.inf)
    if cap_score and orient is Orientation.INPUT:
        upper[0] = 1.0
    return LinearProgram(c=c, a=np.array(rows), senses=senses, b=np.array(rhs),
                         upper=upper, maximize=(orient is Orientation.OUTPUT))


def _score_lp(panel, x0, y0, tech, orient, cap_score):
    return solve_lp(_build_score_lp(panel, x0, y0, tech, orient, cap_score))


def _result_from(panel, sol, x0, y0, orient):
    lam = sol.x[1:]
    theta = sol.x[0]
    if orient is Orientation.INPUT:
        score, expansion = theta, None
        in_slack = theta * x0 - panel.inputs.T @ lam
        out_slack = panel.outputs.T @ lam - y0
    else:
        score, expansion = (1.0 / theta if theta > 0 else None), theta
        in_slack = x0 - panel.inputs.T @ lam
        out_slack = panel.outputs.T @ lam - theta * y0
    peers = [int(i) for i in np.where(lam > PEER_TOL)[0]]
    return EfficiencyResult(OPTIMAL, score, expansion, lam, peers,
                            np.maximum(in_slack, 0.0), np.maximum(out_slack, 0.0))


def _max_slack_stage(panel, x0, y0, tech, orient, theta):
    """Second stage: maximize total slack at the fixed score."""
    k1 = panel.n_dmus
    i_dim, o_dim = panel.n_inputs, panel.n_outputs
    n = k1 + i_dim + o_dim
    rows, senses, rhs = [], [], []
    x_cap = theta * x0 if orient is Orientation.INPUT else x0
    y_floor = y0 if orient is Orientation.INPUT else theta * y0
    for i in range(i_dim):
        row = np.zeros(n)
        row[:k1] = panel.inputs[:, i]
        row[k1 + i] = 1.0
        rows.append(row)
        senses.append("=")
        rhs.append(x_cap[i])
    for o in range(o_dim):
        row = np.zeros(n)
        row[:k1] = panel.outputs[:, o]
        row[k1 + i_dim + o] = -1.0
        rows.append(row)
        senses.append("=")
        rhs.append(y_floor[o])
    if tech is Technology.VRS:
        row = np.zeros(n)
        row[:k1] = 1.0
        rows.append(row)
        senses.append("=")
        rhs.append(1.0)
    c = np.zeros(n)
    c[k1:] = 1.0
    sol = solve_lp(LinearProgram(c=c, a=np.array(rows), senses=senses,
                                 b=np.array(rhs), maximize=True))
    if not sol.is_optimal:
        return None
    lam = sol.x[:k1]
    return lam, sol.x[k1:k1 + i_dim], sol.x[k1 + i_dim:]


def efficiency(panel: Panel, k: int, tech: Technology = Technology.CRS,
               orient: Orientation = Orientation.INPUT,
               max_slacks: bool = False) -> EfficiencyResult:
    """Farrell efficiency of observed DMU ``k`` (which spans the technology
    along with every other panel DMU)."""
    if not 0 <= k < panel.n_dmus:
        raise IndexError(f"DMU index {k} out of range")
    x0, y0 = panel.inputs[k], panel.outputs[k]
    sol = _score_lp(panel, x0, y0, tech, orient, cap_score=True)
    if not sol.is_optimal:
        raise RuntimeError(f"scoring LP for observed DMU {k} returned {sol.status}")
    res = _result_from(panel, sol, x0, y0, orient)
    if max_slacks:
        theta = sol.x[0]
        stage = _max_slack_stage(panel, x0, y0, tech, orient, theta)
        if stage is not None:
            lam, s_in, s_out = stage
            res.lambdas = lam
            res.peers = [int(i) for i in np.where(lam > PEER_TOL)[0]]
            res.input_slacks = s_in
            res.output_slacks = s_out
    return res


def efficiency_of_plan(panel: Panel, x: np.ndarray, y: np.ndarray,
                       tech: Technology = Technology.CRS,
                       orient: Orientation = Orientation.INPUT) -> EfficiencyResult:
    """Score an arbitrary plan against the technology spanned by the panel.

    The plan itself does not enter the technology.  Plans whose outputs are
    not producible at any feasible scale come back Infeasible; plans beyond
    the frontier report a score above 1 (input orientation).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != panel.n_inputs or y.size != panel.n_outputs:
        raise ValueError("plan dimensions do not match the panel")
    if np.any(x <= 0):
        raise ValueError("plan inputs must be strictly positive")
    if np.any(y < 0):
        raise ValueError("plan outputs must be nonnegative")
    sol = _score_lp(panel, x, y, tech, orient, cap_score=False)
    if sol.status == INFEASIBLE:
        return EfficiencyResult(INFEASIBLE)
    if sol.status == UNBOUNDED:
        return EfficiencyResult(UNBOUNDED)
    return _result_from(panel, sol, x, y, orient)


def all_efficiencies(panel: Panel, tech: Technology = Technology.CRS,
                     orient: Orientation = Orientation.INPUT) -> np.ndarray:
    """Scores of every DMU, in panel order."""
    return np.array([efficiency(panel, k, tech, orient).score
                     for k in range(panel.n_dmus)])


def directional_distance(panel: Panel, k: int, request: DirectionalRequest,
                         tech: Technology = Technology.CRS) -> DirectionalResult:
    """Largest step e with (x - e*d_x, y + e*d_y) inside the technology."""
    if not 0 <= k < panel.n_dmus:
        raise IndexError(f"DMU index {k} out of range")
    x0, y0 = panel.inputs[k], panel.outputs[k]
    if request.d_x.size != panel.n_inputs or request.d_y.size != panel.n_outputs:
        raise ValueError("direction dimensions do not match the panel")
    k1 = panel.n_dmus
    n = 1 + k1
    rows, senses, rhs = [], [], []
    for i in range(panel.n_inputs):
        row = np.zeros(n)
        row[0] = request.d_x[i]
        row[1:] = panel.inputs[:, i]
        rows.append(row)
        senses.append("<=")
        rhs.append(x0[i])
    for o in range(panel.n_outputs):
        row = np.zeros(n)
        row[0] = -request.d_y[o]
        row[1:] = panel.outputs[:, o]
        rows.append(row)
        senses.append(">=")
        rhs.append(y0[o])
    if tech is Technology.VRS:
        row = np.zeros(n)
        row[1:] = 1.0
        rows.append(row)
        senses.append("=")
        rhs.append(1.0)
    c = np.zeros(n)
    c[0] = 1.0
    sol = solve_lp(LinearProgram(c=c, a=np.array(rows), senses=senses,
                                 b=np.array(rhs), maximize=True))
    if sol.status == UNBOUNDED:
        return DirectionalResult(UNBOUNDED)
    if sol.status != OPTIMAL:
        return DirectionalResult(sol.status)
    e = sol.x[0]
    return DirectionalResult(OPTIMAL, e, x0 - e * request.d_x, y0 + e * request.d_y,
                             sol.x[1:])


def farrell_projection(panel: Panel, k: int, e_target: float,
                       tech: Technology = Technology.CRS) -> np.ndarray:
    """Inputs of the radial plan scoring exactly ``e_target``.

    Under CRS this is the closed form (E_k / e_target) * x_k; under VRS the
    shrink factor is found by bisection to 1e-7 on the re-scored efficiency.
    """
    base = efficiency(panel, k, tech, Orientation.INPUT)
    e0 = base.score
    if e_target > 1.0 + 1e-12:
        raise ValueError("target efficiency cannot exceed 1")
    if e_target < e0 - 1e-9:
        raise ValueError(f"target efficiency {e_target} is below the current score {e0:.6f}")
    x0 = panel.inputs[k]
    if e_target <= e0 + 1e-12:
        return x0.copy()
    if tech is Technology.CRS:
        return (e0 / e_target) * x0
    y0 = panel.outputs[k]
    lo_t, hi_t = e0, 1.0  # score(theta*x) falls from 1 to e0 as theta rises
    for _ in range(100):
        mid = 0.5 * (lo_t + hi_t)
        res = efficiency_of_plan(panel, mid * x0, y0, tech, Orientation.INPUT)
        score = res.score if res.is_optimal else np.inf
        if abs(score - e_target) <= 1e-9:
            return mid * x0
        if score > e_target:
            lo_t = mid
        else:
            hi_t = mid
        if hi_t - lo_t < 1e-13:
            break
    return 0.5 * (lo_t + hi_t) * x0
