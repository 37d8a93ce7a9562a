"""Dense linear programming kernel.

Two-phase primal simplex on an explicit tableau, with Dantzig pricing and a
Bland's-rule fallback once degenerate pivoting is detected.  Problems are
stated with arbitrary row senses and per-variable bounds; internally they are
reduced to standard equality form (shifts for finite lower bounds, mirroring
for upper-bounded-only variables, splits for free variables, explicit rows
for finite upper bounds).

Solutions report primal values, per-row dual values (sensitivities of the
objective to the right-hand side), reduced costs, and the objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"
UNBOUNDED = "Unbounded"

FEAS_TOL = 1e-8
COST_TOL = 1e-9
PIVOT_TOL = 1e-10

_SENSES = ("<=", "=", ">=")


class LpError(ValueError):
    """Raised for malformed linear programs."""


@dataclass
class LinearProgram:
    """min (or max) c@x  s.t.  a@x (<=,=,>=) b,  lower <= x <= upper.

    ``lower`` defaults to 0 and ``upper`` to +inf for every variable.
    """

    c: np.ndarray
    a: np.ndarray
    senses: list[str]
    b: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    maximize: bool = False

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.a = np.atleast_2d(np.asarray(self.a, dtype=float))
        self.b = np.asarray(self.b, dtype=float)
        n = self.c.size
        if self.a.size == 0:
            self.a = self.a.reshape(0, n)
        m = self.a.shape[0]
        if self.a.shape[1] != n:
            raise LpError(f"matrix has {self.a.shape[1]} columns, objective has {n}")
        if self.b.size != m or len(self.senses) != m:
            raise LpError("row count mismatch between a, b and senses")
        for s in self.senses:
            if s not in _SENSES:
                raise LpError(f"unknown row sense {s!r}")
        self.lower = np.zeros(n) if self.lower is None else np.asarray(self.lower, dtype=float)
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        if self.lower.size != n or self.upper.size != n:
            raise LpError("bound vectors must match the variable count")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.a)) and np.all(np.isfinite(self.b))):
            raise LpError("non-finite coefficient in objective, matrix or rhs")
        if np.any(self.lower > self.upper + 1e-12):
            raise LpError("lower bound exceeds upper bound")

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.a.shape[0]


@dataclass
class LpSolution:
    """Solver output; ``x``/``duals``/``reduced_costs`` are None unless Optimal.

    ``duals[i]`` is the sensitivity d(objective)/d(b[i]) for the problem as
    posed (max problems report sensitivities of the max objective).
    """

    status: str
    objective: float | None = None
    x: np.ndarray | None = None
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    iterations: int = 0

    @property
    def is_optimal(self) -> bool:
        return self.status == OPTIMAL


@dataclass
class _Standardized:
    """Equality-form problem plus the bookkeeping to map a solution back."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    n_struct: int               # structural columns (before slacks)
    col_of_var: list[list[tuple[int, float]]]  # per orig var: (col, sign)
    offsets: np.ndarray         # x_orig = offsets + sum(sign * x_std[col])
    obj_const: float
    row_of_orig: np.ndarray     # std row index per original row
    row_flip: np.ndarray        # +-1 per original row
    slack_cols: np.ndarray      # std column of slack/surplus per std row, -1 if none


def _standardize(lp: LinearProgram) -> _Standardized:
    n = lp.n_vars
    m = lp.n_rows
    c = -lp.c if lp.maximize else lp.c

    cols: list[np.ndarray] = []
    ccost: list[float] = []
    col_of_var: list[list[tuple[int, float]]] = [[] for _ in range(n)]
    offsets = np.zeros(n)
    obj_const = 0.0
    upper_rows: list[tuple[int, float]] = []  # (std column, rhs)

    acols = [lp.a[:, j].copy() for j in range(n)]
    b = lp.b.copy().astype(float)

    for j in range(n):
        lo, hi = lp.lower[j], lp.upper[j]
        if np.isfinite(lo) and abs(hi - lo) <= 1e-15:
            # fixed variable: substitute the constant
            offsets[j] = lo
            b -= acols[j] * lo
            obj_const += c[j] * lo
            continue
        if np.isfinite(lo):
            # shift so the working variable is nonnegative
            offsets[j] = lo
            if lo != 0.0:
                b -= acols[j] * lo
                obj_const += c[j] * lo
            k = len(cols)
            cols.append(acols[j])
            ccost.append(c[j])
            col_of_var[j].append((k, 1.0))
            if np.isfinite(hi):
                upper_rows.append((k, hi - lo))
        elif np.isfinite(hi):
            # mirror: x = hi - t with t >= 0
            offsets[j] = hi
            b -= acols[j] * hi
            obj_const += c[j] * hi
            k = len(cols)
            cols.append(-acols[j])
            ccost.append(-c[j])
            col_of_var[j].append((k, -1.0))
        else:
            # free: split into difference of nonnegatives
            k = len(cols)
            cols.append(acols[j])
            ccost.append(c[j])
            cols.append(-acols[j])
            ccost.append(-c[j])
            col_of_var[j].append((k, 1.0))
            col_of_var[j].append((k + 1, -1.0))

    n_struct = len(cols)
    m_std = m + len(upper_rows)
    a_std = np.zeros((m_std, n_struct))
    if n_struct:
        a_std[:m, :] = np.column_stack(cols) if cols else np.zeros((m, 0))
    b_std = np.concatenate([b, np.array([r for _, r in upper_rows], dtype=float)])
    senses = list(lp.senses) + ["<="] * len(upper_rows)
    for r, (k, _) in enumerate(upper_rows):
        a_std[m + r, k] = 1.0

    # slack / surplus columns make every row an equality
    slack_cols = np.full(m_std, -1, dtype=int)
    extra = []
    for i, s in enumerate(senses):
        if s == "=":
            continue
        col = np.zeros(m_std)
        col[i] = 1.0 if s == "<=" else -1.0
        slack_cols[i] = n_struct + len(extra)
        extra.append(col)
    if extra:
        a_std = np.hstack([a_std, np.column_stack(extra)])
    c_std = np.concatenate([np.array(ccost, dtype=float), np.zeros(len(extra))])

    # nonnegative rhs; remember flips for dual recovery
    row_flip = np.ones(m_std)
    neg = b_std < 0
    a_std[neg, :] *= -1.0
    b_std[neg] *= -1.0
    row_flip[neg] = -1.0

    return _Standardized(
        a=a_std, b=b_std, c=c_std, n_struct=n_struct, col_of_var=col_of_var,
        offsets=offsets, obj_const=obj_const,
        row_of_orig=np.arange(m), row_flip=row_flip[:m] if m else np.ones(0),
        slack_cols=slack_cols,
    )


def _run_simplex(tab: np.ndarray, basis: np.ndarray, allowed: np.ndarray,
                 max_iter: int, bland_after: int) -> tuple[str, int]:
    """Pivot until optimal/unbounded.  ``tab`` has the cost row last and the
    rhs column last; ``allowed`` masks the columns eligible to enter."""
    m = tab.shape[0] - 1
    it = 0
    degenerate = 0
    use_bland = False
    cost = tab[-1, :-1]
    while it < max_iter:
        eligible = np.where(allowed & (cost < -COST_TOL))[0]
        if eligible.size == 0:
            return OPTIMAL, it
        if use_bland:
            j = int(eligible[0])
        else:
            j = int(eligible[np.argmin(cost[eligible])])
        col = tab[:m, j]
        pos = np.where(col > PIVOT_TOL)[0]
        if pos.size == 0:
            return UNBOUNDED, it
        ratios = tab[pos, -1] / col[pos]
        best = ratios.min()
        ties = pos[ratios <= best + 1e-12]
        if use_bland:
            r = int(ties[np.argmin(basis[ties])])
        else:
            r = int(ties[0])
        if best <= PIVOT_TOL:
            degenerate += 1
            if degenerate > bland_after:
                use_bland = True
        piv = tab[r, j]
        tab[r, :] /= piv
        colvals = tab[:, j].copy()
        colvals[r] = 0.0
        tab -= np.outer(colvals, tab[r, :])
        tab[:, j] = 0.0
        tab[r, j] = 1.0
        basis[r] = j
        it += 1
    raise RuntimeError("simplex iteration limit exceeded (cycling?)")


def solve_lp(lp: LinearProgram) -> LpSolution:
    """Solve ``lp``; deterministic for a fixed input.

    Returns an :class:`LpSolution` whose duals follow the sensitivity
    convention (d objective / d rhs) for the problem as posed.
    """
    std = _standardize(lp)
    a, b, c = std.a, std.b, std.c
    m, n = a.shape

    if n == 0:
        # every variable fixed; only feasibility remains
        ok = np.all(np.abs(b) <= FEAS_TOL * (1.0 + np.abs(b)))
        if not ok:
            return LpSolution(INFEASIBLE)
        obj = std.obj_const
        x = std.offsets.copy()
        return LpSolution(OPTIMAL, -obj if lp.maximize else obj, x,
                          np.zeros(lp.n_rows), lp.c.copy(), 0)

    # initial basis: unit slack columns where available, artificials elsewhere
    basis = np.full(m, -1, dtype=int)
    for i in range(m):
        sc = std.slack_cols[i]
        if sc >= 0 and a[i, sc] > 0.5:
            basis[i] = sc
    need_art = np.where(basis < 0)[0]
    n_art = need_art.size
    a_full = np.hstack([a, np.zeros((m, n_art))])
    for t, i in enumerate(need_art):
        a_full[i, n + t] = 1.0
        basis[i] = n + t

    max_iter = 2000 + 200 * (m + n)
    bland_after = 5 * (m + n)
    iterations = 0

    if n_art:
        tab = np.zeros((m + 1, n + n_art + 1))
        tab[:m, :-1] = a_full
        tab[:m, -1] = b
        # phase-1 reduced costs for min(sum of artificials)
        tab[-1, :] = -tab[need_art, :].sum(axis=0)
        tab[-1, n:-1] = 0.0
        allowed = np.ones(n + n_art, dtype=bool)
        allowed[n:] = False  # artificials never re-enter
        status, it1 = _run_simplex(tab, basis, allowed, max_iter, bland_after)
        iterations += it1
        if status != OPTIMAL or tab[-1, -1] < -FEAS_TOL:
            return LpSolution(INFEASIBLE, iterations=iterations)
        # drive any basic artificials out, or drop their (redundant) rows
        drop_rows: list[int] = []
        for r in range(m):
            if basis[r] >= n:
                cand = np.where(np.abs(tab[r, :n]) > PIVOT_TOL)[0]
                if cand.size == 0:
                    drop_rows.append(r)
                    continue
                j = int(cand[0])
                piv = tab[r, j]
                tab[r, :] /= piv
                colvals = tab[:, j].copy()
                colvals[r] = 0.0
                tab -= np.outer(colvals, tab[r, :])
                tab[:, j] = 0.0
                tab[r, j] = 1.0
                basis[r] = j
        keep = np.array([r for r in range(m) if r not in set(drop_rows)], dtype=int)
        body = tab[keep][:, :n]
        rhs = tab[keep][:, -1:]
        basis = basis[keep]
        kept_rows = keep
        tab = np.hstack([body, rhs])
        tab = np.vstack([tab, np.zeros((1, n + 1))])
    else:
        tab = np.zeros((m + 1, n + 1))
        tab[:m, :n] = a_full[:, :n]
        tab[:m, -1] = b
        kept_rows = np.arange(m)

    # phase 2: install the true cost row, reduced against the current basis
    mm = tab.shape[0] - 1
    tab[-1, :n] = c
    tab[-1, -1] = 0.0
    for r in range(mm):
        cj = c[basis[r]]
        if cj != 0.0:
            tab[-1, :] -= cj * tab[r, :]
    allowed = np.ones(n, dtype=bool)
    status, it2 = _run_simplex(tab, basis, allowed, max_iter, bland_after)
    iterations += it2
    if status == UNBOUNDED:
        return LpSolution(UNBOUNDED, iterations=iterations)

    # recompute the basic solution and duals from the original data for a
    # clean answer (the tableau accumulates roundoff)
    a_kept = a[kept_rows]
    b_kept = b[kept_rows]
    bmat = a_kept[:, basis]
    try:
        xb = np.linalg.solve(bmat, b_kept)
        y_kept = np.linalg.solve(bmat.T, c[basis])
    except np.linalg.LinAlgError:
        xb = tab[:mm, -1]
        y_kept = np.linalg.lstsq(bmat.T, c[basis], rcond=None)[0]
    x_std = np.zeros(n)
    x_std[basis] = xb
    x_std = np.maximum(x_std, 0.0)

    x = std.offsets.copy()
    for j, parts in enumerate(std.col_of_var):
        for col, sign in parts:
            x[j] += sign * x_std[col]
    obj_min = float(c @ x_std + std.obj_const)

    y_std = np.zeros(m)
    y_std[kept_rows] = y_kept
    duals = std.row_flip * y_std[std.row_of_orig] if lp.n_rows else np.zeros(0)
    if lp.maximize:
        duals = -duals
    rc = lp.c - lp.a.T @ duals if lp.n_rows else lp.c.copy()
    objective = -obj_min if lp.maximize else obj_min
    return LpSolution(OPTIMAL, objective, x, duals, rc, iterations)


def dual_objective(lp: LinearProgram, sol: LpSolution) -> float:
    """Objective of the dual solution carried by ``sol`` (for duality checks)."""
    if not sol.is_optimal:
        raise ValueError("dual objective requires an Optimal solution")
    y, rc = sol.duals, sol.reduced_costs
    total = float(y @ lp.b)
    lo = np.where(np.isfinite(lp.lower), lp.lower, 0.0)
    hi = np.where(np.isfinite(lp.upper), lp.upper, 0.0)
    if lp.maximize:
        lo_mult = np.where(np.isfinite(lp.lower), np.minimum(rc, 0.0), 0.0)
        hi_mult = np.where(np.isfinite(lp.upper), np.maximum(rc, 0.0), 0.0)
    else:
        lo_mult = np.where(np.isfinite(lp.lower), np.maximum(rc, 0.0), 0.0)
        hi_mult = np.where(np.isfinite(lp.upper), np.minimum(rc, 0.0), 0.0)
    return total + float(lo_mult @ lo) + float(hi_mult @ hi)


def primal_residual(lp: LinearProgram, x: np.ndarray) -> float:
    """Largest constraint/bound violation of ``x``."""
    res = 0.0
    if lp.n_rows:
        ax = lp.a @ x
        for i, s in enumerate(lp.senses):
            if s == "<=":
                res = max(res, ax[i] - lp.b[i])
            elif s == ">=":
                res = max(res, lp.b[i] - ax[i])
            else:
                res = max(res, abs(ax[i] - lp.b[i]))
    res = max(res, float(np.max(lp.lower - x, initial=0.0)))
    res = max(res, float(np.max(x - lp.upper, initial=0.0)))
    return res
