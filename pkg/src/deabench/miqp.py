"""Branch-and-bound for mixed-binary programs with a diagonal convex
quadratic objective and linear constraints.

Node relaxations are solved by the diagonal-Hessian QP module (which itself
delegates to the LP kernel when the quadratic vanishes).  Node selection is
best-bound first, branching picks the most fractional binary with lowest
index as the tie-break, and integral candidates are polished by re-solving
the continuous problem with the binaries fixed.

A light presolve tightens big-M coefficients: implied activity bounds are
propagated through the rows, and any row containing a single binary has both
of its indicator faces shrunk to the implied bound.  Nothing else is touched.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field

import numpy as np

from .lp import INFEASIBLE, OPTIMAL, UNBOUNDED
from .qp import QpSolution, solve_qp

NODE_LIMIT = "NodeLimit"
TIME_LIMIT = "TimeLimit"


class MiqpError(ValueError):
    """Raised for malformed problems or unbounded relaxations."""


@dataclass
class MiqpProblem:
    """min c@x + sum(q_i x_i^2) + offset  s.t.  a@x (<=,=,>=) b, bounds,
    with the variables in ``binary`` restricted to {0, 1}."""

    c: np.ndarray
    q: np.ndarray
    a: np.ndarray
    senses: list[str]
    b: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    binary: np.ndarray | None = None
    offset: float = 0.0

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = self.c.size
        self.q = np.zeros(n) if self.q is None else np.asarray(self.q, dtype=float)
        self.a = np.atleast_2d(np.asarray(self.a, dtype=float)) if np.size(self.a) else np.zeros((0, n))
        if self.a.size == 0:
            self.a = self.a.reshape(0, n)
        self.b = np.asarray(self.b, dtype=float)
        self.lower = np.zeros(n) if self.lower is None else np.asarray(self.lower, dtype=float)
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        self.binary = (np.zeros(0, dtype=int) if self.binary is None
                       else np.asarray(self.binary, dtype=int))
        if np.any(self.q < -1e-12):
            raise MiqpError("negative quadratic coefficient: objective is non-convex")
        self.q = np.maximum(self.q, 0.0)
        if self.binary.size:
            if self.binary.min() < 0 or self.binary.max() >= n:
                raise MiqpError("binary index out of range")
            self.lower[self.binary] = np.maximum(self.lower[self.binary], 0.0)
            self.upper[self.binary] = np.minimum(self.upper[self.binary], 1.0)

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_binary(self) -> int:
        return self.binary.size

    @property
    def n_continuous(self) -> int:
        return self.n_vars - self.n_binary

    def objective_at(self, x: np.ndarray) -> float:
        return float(self.c @ x + self.q @ (x * x)) + self.offset

    def max_violation(self, x: np.ndarray) -> float:
        """Largest constraint/bound violation of ``x``."""
        res = 0.0
        if self.a.shape[0]:
            ax = self.a @ x
            for i, s in enumerate(self.senses):
                if s == "<=":
                    res = max(res, ax[i] - self.b[i])
                elif s == ">=":
                    res = max(res, self.b[i] - ax[i])
                else:
                    res = max(res, abs(ax[i] - self.b[i]))
        res = max(res, float(np.max(self.lower - x, initial=0.0)))
        res = max(res, float(np.max(x - self.upper, initial=0.0)))
        return res


@dataclass
class MiqpOptions:
    gap_abs: float = 1e-6
    integrality_tol: float = 1e-6
    node_limit: int = 500_000
    time_limit: float = float("inf")
    tighten_big_m: bool = True
    track_bounds: bool = False
    branch_priority: np.ndarray | None = None  # per-binary score multiplier


@dataclass
class MiqpSolution:
    status: str
    x: np.ndarray | None = None
    objective: float | None = None
    bound: float | None = None
    nodes: int = 0
    wall_time: float = 0.0
    bound_history: list[float] = field(default_factory=list)

    @property
    def gap(self) -> float:
        if self.objective is None or self.bound is None:
            return float("inf")
        return max(0.0, (self.objective - self.bound) / max(1.0, abs(self.objective)))

    @property
    def is_optimal(self) -> bool:
        return self.status == OPTIMAL


def _implied_activity_bounds(a, senses, b, lower, upper, passes=3):
    """Per-variable bounds implied by single-row reasoning (internal only)."""
    lo = lower.copy()
    hi = upper.copy()
    m, n = a.shape
    rows_le = []
    for i, s in enumerate(senses):
        if s in ("<=", "="):
            rows_le.append((a[i], b[i]))
        if s in (">=", "="):
            rows_le.append((-a[i], -b[i]))
    with np.errstate(all="ignore"):
        for _ in range(passes):
            changed = False
            for row, rhs in rows_le:
                nz = np.nonzero(row)[0]
                contrib_min = np.where(row[nz] > 0, row[nz] * lo[nz], row[nz] * hi[nz])
                n_inf = int(np.sum(~np.isfinite(contrib_min)))
                if n_inf > 1:
                    continue
                total_finite = contrib_min[np.isfinite(contrib_min)].sum()
                for pos, j in enumerate(nz):
                    if n_inf == 1 and np.isfinite(contrib_min[pos]):
                        continue  # some other contribution is unbounded
                    others = total_finite - (contrib_min[pos] if n_inf == 0 else 0.0)
                    cap = rhs - others
                    if row[pos] > 0:
                        new_hi = cap / row[pos]
                        if new_hi < hi[j] - 1e-12:
                            hi[j] = new_hi
                            changed = True
                    else:
                        new_lo = cap / row[pos]
                        if new_lo > lo[j] + 1e-12:
                            lo[j] = new_lo
                            changed = True
            if not changed:
                break
    return lo, hi


def tighten_big_m(problem: MiqpProblem) -> MiqpProblem:
    """Shrink indicator faces of single-binary rows to their implied bounds.

    Returns a new problem with identical feasible set (over the binaries'
    {0,1} values) and identical row/variable counts.
    """
    if problem.n_binary == 0 or problem.a.shape[0] == 0:
        return problem
    lo, hi = _implied_activity_bounds(problem.a, problem.senses, problem.b,
                                      problem.lower, problem.upper)
    a = problem.a.copy()
    b = problem.b.copy()
    is_bin = np.zeros(problem.n_vars, dtype=bool)
    is_bin[problem.binary] = True
    for i, s in enumerate(problem.senses):
        if s == "=":
            continue
        row = a[i] if s == "<=" else -a[i]
        rhs = b[i] if s == "<=" else -b[i]
        nz = np.nonzero(row)[0]
        bins = nz[is_bin[nz]]
        if bins.size != 1:
            continue
        y = int(bins[0])
        gamma = row[y]
        rest = nz[nz != y]
        ub_expr = 0.0
        ok = True
        for j in rest:
            cap = row[j] * hi[j] if row[j] > 0 else row[j] * lo[j]
            if not np.isfinite(cap):
                ok = False
                break
            ub_expr += cap
        if not ok:
            continue
        face0 = min(rhs, ub_expr)
        face1 = min(rhs - gamma, ub_expr)
        new_rhs, new_gamma = face0, face0 - face1
        if abs(new_rhs - rhs) < 1e-12 and abs(new_gamma - gamma) < 1e-12:
            continue
        if s == "<=":
            a[i, y] = new_gamma
            b[i] = new_rhs
        else:
            a[i, y] = -new_gamma
            b[i] = -new_rhs
    return MiqpProblem(c=problem.c.copy(), q=problem.q.copy(), a=a,
                       senses=list(problem.senses), b=b,
                       lower=problem.lower.copy(), upper=problem.upper.copy(),
                       binary=problem.binary.copy(), offset=problem.offset)


def solve_qp_relaxation(problem: MiqpProblem, lower=None, upper=None,
                        fast=False) -> QpSolution:
    """Continuous relaxation of ``problem`` (binaries relaxed to [0, 1]).

    ``fast`` trades exactness for speed inside branch and bound: the
    active-set iteration cap is lowered and the tangent fallback runs only a
    few rounds.  Either way the reported bound stays valid."""
    lo = problem.lower if lower is None else lower
    hi = problem.upper if upper is None else upper
    if fast:
        return solve_qp(problem.c, problem.q, problem.a, problem.senses, problem.b,
                        lower=lo, upper=hi, max_iter=150, fallback_rounds=5)
    return solve_qp(problem.c, problem.q, problem.a, problem.senses, problem.b,
                    lower=lo, upper=hi)


def _polish(problem, lo, hi, xbin_rounded):
    """Solve the continuous problem with the binaries fixed at a 0/1 point."""
    lo2 = lo.copy()
    hi2 = hi.copy()
    lo2[problem.binary] = xbin_rounded
    hi2[problem.binary] = xbin_rounded
    return solve_qp(problem.c, problem.q, problem.a, problem.senses, problem.b,
                    lower=lo2, upper=hi2, max_iter=500, fallback_rounds=15)


class _DisjunctionScorer:
    """Branching scores from single-binary indicator rows.

    A row ``expr + g*y <= rhs`` caps ``expr`` at ``rhs`` when y=0 and at
    ``rhs - g`` when y=1.  When the relaxation violates both caps of some
    binary's rows at once, that disjunction is genuinely unresolved; the
    binary with the largest two-sided violation is the branch variable.
    The most-fractional rule remains as the tie-break and fallback.
    """

    def __init__(self, problem: MiqpProblem):
        is_bin = np.zeros(problem.n_vars, dtype=bool)
        is_bin[problem.binary] = True
        pos_of = {int(v): k for k, v in enumerate(problem.binary)}
        rows, owners, f0, f1 = [], [], [], []
        for i, s in enumerate(problem.senses):
            if s == "=":
                continue
            row = problem.a[i] if s == "<=" else -problem.a[i]
            rhs = problem.b[i] if s == "<=" else -problem.b[i]
            nz = np.nonzero(row)[0]
            bins = nz[is_bin[nz]]
            if bins.size != 1:
                continue
            y = int(bins[0])
            expr = row.copy()
            expr[y] = 0.0
            rows.append(expr)
            owners.append(pos_of[y])
            f0.append(rhs)
            f1.append(rhs - row[y])
        self.n_binary = problem.n_binary
        self.active = bool(rows)
        if self.active:
            self.mat = np.array(rows)
            self.owners = np.array(owners, dtype=int)
            self.f0 = np.array(f0)
            self.f1 = np.array(f1)

    def scores(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros(self.n_binary)
        if not self.active:
            return out
        vals = self.mat @ x
        v0 = np.maximum(vals - self.f0, 0.0)
        v1 = np.maximum(vals - self.f1, 0.0)
        worst0 = np.zeros(self.n_binary)
        worst1 = np.zeros(self.n_binary)
        np.maximum.at(worst0, self.owners, v0)
        np.maximum.at(worst1, self.owners, v1)
        return np.minimum(worst0, worst1)


def solve_miqp(problem: MiqpProblem, options: MiqpOptions | None = None,
               warm_starts: list[np.ndarray] | None = None) -> MiqpSolution:
    """Solve to global optimality (within ``gap_abs``) by branch and bound.

    ``warm_starts`` may carry candidate solutions; feasible integral ones
    seed the incumbent.  Deterministic for fixed inputs and options.
    """
    opts = options or MiqpOptions()
    t0 = time.perf_counter()
    work = tighten_big_m(problem) if opts.tighten_big_m else problem

    incumbent = None
    incumbent_val = np.inf
    for cand in warm_starts or []:
        cand = np.asarray(cand, dtype=float)
        if cand.size != work.n_vars:
            continue
        xb = cand[work.binary]
        if np.max(np.abs(xb - np.round(xb)), initial=0.0) > opts.integrality_tol:
            continue
        if work.max_violation(cand) > 1e-7:
            continue
        val = work.objective_at(cand)
        if val < incumbent_val:
            incumbent, incumbent_val = cand.copy(), val

    nodes = 0
    seq = 0
    scorer = _DisjunctionScorer(work)
    # best bound first; among equal bounds prefer the deepest node (diving
    # resolves indicator chains and turns up incumbents early)
    heap: list[tuple[float, int, int, np.ndarray, np.ndarray]] = []
    root_bound = -np.inf
    heapq.heappush(heap, (root_bound, 0, seq, work.lower.copy(), work.upper.copy()))
    best_bound_seen = -np.inf
    history: list[float] = []

    def finish(status, bound):
        sol = MiqpSolution(status=status, x=incumbent,
                           objective=None if incumbent is None else incumbent_val,
                           bound=bound, nodes=nodes,
                           wall_time=time.perf_counter() - t0)
        if opts.track_bounds:
            sol.bound_history = history
        return sol

    while heap:
        node_bound, negdepth, _, lo, hi = heapq.heappop(heap)
        best_bound_seen = max(best_bound_seen, node_bound)
        if opts.track_bounds:
            history.append(best_bound_seen if np.isfinite(best_bound_seen) else node_bound)
        if node_bound >= incumbent_val - opts.gap_abs:
            return finish(OPTIMAL if incumbent is not None else INFEASIBLE,
                          min(node_bound, incumbent_val))
        if nodes >= opts.node_limit:
            return finish(NODE_LIMIT if incumbent is not None else NODE_LIMIT, node_bound)
        if time.perf_counter() - t0 > opts.time_limit:
            return finish(TIME_LIMIT, node_bound)

        nodes += 1
        rel = solve_qp_relaxation(work, lo, hi, fast=True)
        if rel.status == INFEASIBLE:
            continue
        out_of_time = time.perf_counter() - t0 > opts.time_limit
        if rel.status == UNBOUNDED:
            raise MiqpError("relaxation is unbounded; problem is ill-posed")
        bound = max(rel.bound + work.offset, node_bound)
        if bound >= incumbent_val - 1e-9:
            continue
        x = rel.x
        xb = x[work.binary] if work.n_binary else np.zeros(0)
        frac = np.abs(xb - np.round(xb))
        if work.n_binary == 0 or frac.max(initial=0.0) <= opts.integrality_tol:
            rounded = np.round(xb)
            pol = (_polish(work, lo, hi, rounded)
                   if work.n_binary and not out_of_time else rel)
            if pol.status == OPTIMAL:
                cand = pol.x
                val = work.objective_at(cand)
                if work.max_violation(cand) <= 1e-7 and val < incumbent_val:
                    incumbent, incumbent_val = cand.copy(), val
                continue
            # knife-edge: polish infeasible although relaxation looked integral
            if work.n_binary == 0:
                continue
            j = int(np.argmax(frac))
        else:
            # cheap dive: try the rounded pattern as an incumbent candidate
            rounded = np.round(xb)
            trial = x.copy()
            trial[work.binary] = rounded
            if work.max_violation(trial) <= 1e-9 and not out_of_time:
                val = work.objective_at(trial)
                if val < incumbent_val:
                    pol = _polish(work, lo, hi, rounded)
                    if pol.status == OPTIMAL and work.max_violation(pol.x) <= 1e-7:
                        cand_val = work.objective_at(pol.x)
                        if cand_val < incumbent_val:
                            incumbent, incumbent_val = pol.x.copy(), cand_val
            dscores = scorer.scores(x)
            if opts.branch_priority is not None:
                dscores = dscores * opts.branch_priority
            if dscores.max(initial=0.0) > 1e-7:
                j = int(np.argmax(dscores))
            else:
                j = int(np.argmax(frac))

        var = int(work.binary[j])
        for side in (0.0, 1.0):
            lo2, hi2 = lo.copy(), hi.copy()
            if side == 0.0:
                hi2[var] = 0.0
            else:
                lo2[var] = 1.0
            if lo2[var] > hi2[var]:
                continue
            seq += 1
            heapq.heappush(heap, (bound, negdepth - 1, seq, lo2, hi2))

    if incumbent is None:
        return finish(INFEASIBLE, np.inf)
    return finish(OPTIMAL, incumbent_val)


def enumerate_binaries(problem: MiqpProblem, limit: int = 22) -> MiqpSolution:
    """Exact optimum by exhausting all binary patterns (test oracle)."""
    nb = problem.n_binary
    if nb > limit:
        raise MiqpError(f"{nb} binaries exceed the enumeration limit of {limit}")
    t0 = time.perf_counter()
    best = None
    best_val = np.inf
    count = 0
    for mask in range(2 ** nb):
        pattern = np.array([(mask >> k) & 1 for k in range(nb)], dtype=float)
        lo = problem.lower.copy()
        hi = problem.upper.copy()
        lo[problem.binary] = pattern
        hi[problem.binary] = pattern
        if np.any(lo > hi + 1e-12):
            continue
        count += 1
        rel = solve_qp_relaxation(problem, lo, hi)
        if rel.status == UNBOUNDED:
            raise MiqpError("relaxation is unbounded; problem is ill-posed")
        if rel.status != OPTIMAL:
            continue
        val = problem.objective_at(rel.x)
        if val < best_val:
            best, best_val = rel.x.copy(), val
    if best is None:
        return MiqpSolution(INFEASIBLE, nodes=count, wall_time=time.perf_counter() - t0)
    return MiqpSolution(OPTIMAL, x=best, objective=best_val, bound=best_val,
                        nodes=count, wall_time=time.perf_counter() - t0)
