"""Convex quadratic programming with a diagonal Hessian.

Minimizes ``c@x + sum(q_i * x_i**2)`` (``q >= 0``) over linear constraints
and bounds.  The primary method is a primal active-set iteration whose
equality-constrained subproblems are solved in the constraint null space;
the working-set QR factorization is updated incrementally, and the reduced
Hessian is handled through the (typically few) coordinates with positive
curvature, so zero-curvature (linear) directions are detected exactly.

If the active-set iteration stalls, a tangent-cut (outer approximation)
refinement over the LP kernel takes over; its bound is valid at every stage,
which is what the branch-and-bound layer relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import qr, qr_delete, qr_insert, solve_triangular

from .lp import INFEASIBLE, OPTIMAL, UNBOUNDED, LinearProgram, solve_lp

STEP_TOL = 1e-11
CURV_TOL = 1e-12
MULT_TOL = 1e-8


@dataclass
class QpSolution:
    status: str
    objective: float | None = None  # value of the returned point
    bound: float | None = None      # valid lower bound on the optimum
    x: np.ndarray | None = None
    iterations: int = 0
    from_fallback: bool = False

    @property
    def is_optimal(self) -> bool:
        return self.status == OPTIMAL


def _objective(c, q, x):
    return float(c @ x + q @ (x * x))


class _Polyhedron:
    """Rows normalized to G x <= h plus E x = e; bounds become G rows."""

    def __init__(self, a, senses, b, lower, upper):
        n = lower.size
        g_rows, h_vals, e_rows, e_vals = [], [], [], []
        for i, s in enumerate(senses):
            if s == "<=":
                g_rows.append(a[i])
                h_vals.append(b[i])
            elif s == ">=":
                g_rows.append(-a[i])
                h_vals.append(-b[i])
            else:
                e_rows.append(a[i])
                e_vals.append(b[i])
        eye = np.eye(n)
        for j in range(n):
            if np.isfinite(upper[j]):
                g_rows.append(eye[j])
                h_vals.append(upper[j])
            if np.isfinite(lower[j]):
                g_rows.append(-eye[j])
                h_vals.append(-lower[j])
        self.g = np.array(g_rows) if g_rows else np.zeros((0, n))
        self.h = np.array(h_vals) if h_vals else np.zeros(0)
        self.e = np.array(e_rows) if e_rows else np.zeros((0, n))
        self.ev = np.array(e_vals) if e_vals else np.zeros(0)


class _WorkingSet:
    """Equalities plus selected active inequality rows, with an incrementally
    maintained full QR of the transposed constraint matrix."""

    def __init__(self, poly: _Polyhedron, x: np.ndarray, tol: float = 1e-8):
        self.poly = poly
        n = x.size
        self.n = n
        self.rows: list[int] = []       # inequality indices, after the equalities
        # greedy independent subset (Gram-Schmidt): equalities first, then
        # the active inequalities
        basis = np.zeros((n, 0))
        self.eq_rows: list[int] = []

        def try_add(col) -> bool:
            nonlocal basis
            r = col - basis @ (basis.T @ col)
            r -= basis @ (basis.T @ r)  # second pass for orthogonality
            nr = np.linalg.norm(r)
            if nr > tol * (1.0 + np.linalg.norm(col)):
                basis = np.hstack([basis, (r / nr)[:, None]])
                return True
            return False

        for i in range(poly.e.shape[0]):
            if try_add(poly.e[i].astype(float)):
                self.eq_rows.append(i)
        self.n_eq = len(self.eq_rows)
        if poly.g.size:
            resid = poly.h - poly.g @ x
            active = np.where(resid <= tol * (1.0 + np.abs(poly.h)))[0]
            for i in active:
                if basis.shape[1] >= n:
                    break
                if try_add(poly.g[i].astype(float)):
                    self.rows.append(int(i))
        mat = self._matrix()
        if mat.shape[0]:
            self.qmat, self.rmat = qr(mat.T, mode="full")
        else:
            self.qmat = np.eye(n)
            self.rmat = np.zeros((n, 0))

    def _matrix(self) -> np.ndarray:
        parts = []
        if self.n_eq:
            parts.append(self.poly.e[self.eq_rows])
        if self.rows:
            parts.append(self.poly.g[self.rows])
        return np.vstack(parts) if parts else np.zeros((0, self.n))

    @property
    def size(self) -> int:
        return self.n_eq + len(self.rows)

    def null_basis(self) -> np.ndarray:
        return self.qmat[:, self.size:]

    def add(self, i: int):
        col = self.poly.g[i]
        self.qmat, self.rmat = qr_insert(self.qmat, self.rmat, col, self.size,
                                         which="col")
        self.rows.append(int(i))

    def drop(self, pos: int):
        """Drop the inequality at working-set position ``pos`` (0-based among
        the inequality rows)."""
        col_idx = self.n_eq + pos
        self.qmat, self.rmat = qr_delete(self.qmat, self.rmat, col_idx,
                                         which="col")
        self.rows.pop(pos)

    def multipliers(self, g: np.ndarray) -> np.ndarray | None:
        """Solve A_W^T lam = -g through the QR factors."""
        k = self.size
        if k == 0:
            return np.zeros(0)
        rhs = self.qmat[:, :k].T @ (-g)
        rk = self.rmat[:k, :k]
        diag = np.abs(np.diag(rk))
        if diag.size and diag.min() <= 1e-12 * max(1.0, diag.max()):
            lam, *_ = np.linalg.lstsq(self._matrix().T, -g, rcond=None)
            return lam
        return solve_triangular(rk, rhs, lower=False)


def _max_step(poly, skip, x, d):
    """Largest feasible step along ``d`` and the blocking row (or -1)."""
    if poly.g.shape[0] == 0:
        return np.inf, -1
    gd = poly.g @ d
    resid = poly.h - poly.g @ x
    mask = gd > 1e-12
    if skip:
        mask[list(skip)] = False
    if not mask.any():
        return np.inf, -1
    idx = np.where(mask)[0]
    steps = np.maximum(resid[idx] / gd[idx], 0.0)
    k = int(np.argmin(steps))
    return float(steps[k]), int(idx[k])


def _eqp_direction(work: _WorkingSet, q, g):
    """Minimize g@p + p@diag(q)@p over the working-set null space.

    Returns (p, ray): a finite Newton step, or a descent ray along a
    zero-curvature direction (ray is None when the step is finite).
    """
    z = work.null_basis()
    nz = z.shape[1]
    n = z.shape[0]
    if nz == 0:
        return np.zeros(n), None
    g_r = z.T @ g
    pos = np.where(q > 0.0)[0]
    if pos.size == 0:
        nrm = np.linalg.norm(g_r)
        if nrm > 1e-9 * (1.0 + np.linalg.norm(g)):
            return None, -(z @ g_r) / nrm
        return np.zeros(n), None
    m = np.sqrt(q[pos])[:, None] * z[pos, :]
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    rank = int(np.sum(s > CURV_TOL * max(1.0, s[0] if s.size else 0.0)))
    vt = vt[:rank]
    s = s[:rank]
    coords = vt @ g_r
    g_null = g_r - vt.T @ coords
    nrm = np.linalg.norm(g_null)
    if nrm > 1e-9 * (1.0 + np.linalg.norm(g)):
        return None, -(z @ g_null) / nrm
    zz = -vt.T @ (coords / (2.0 * s * s))
    return z @ zz, None


def solve_qp(c, q, a, senses, b, lower=None, upper=None, max_iter=None,
             fallback_rounds=80) -> QpSolution:
    """Global minimum of the diagonal convex QP; delegates to the LP kernel
    when every quadratic coefficient is zero."""
    c = np.asarray(c, dtype=float)
    q = np.asarray(q, dtype=float)
    n = c.size
    a = np.atleast_2d(np.asarray(a, dtype=float)) if np.size(a) else np.zeros((0, n))
    if a.size == 0:
        a = a.reshape(0, n)
    b = np.asarray(b, dtype=float)
    lower = np.zeros(n) if lower is None else np.asarray(lower, dtype=float)
    upper = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float)
    if np.any(q < -1e-12):
        raise ValueError("negative quadratic coefficient: problem is non-convex")
    q = np.maximum(q, 0.0)

    fixed = np.isfinite(lower) & (upper - lower <= 1e-13)
    if fixed.any():
        return _solve_qp_reduced(c, q, a, senses, b, lower, upper, fixed,
                                 max_iter, fallback_rounds)

    if not np.any(q > 0.0):
        lp = LinearProgram(c=c, a=a, senses=list(senses), b=b, lower=lower, upper=upper)
        sol = solve_lp(lp)
        return QpSolution(sol.status, sol.objective, sol.objective, sol.x, sol.iterations)

    # feasible start: optimum of the linear part when bounded, otherwise any
    # feasible point (zero objective)
    lp = LinearProgram(c=c, a=a, senses=list(senses), b=b, lower=lower, upper=upper)
    start = solve_lp(lp)
    if start.status == INFEASIBLE:
        return QpSolution(INFEASIBLE)
    if start.status == UNBOUNDED:
        feas = solve_lp(LinearProgram(c=np.zeros(n), a=a, senses=list(senses), b=b,
                                      lower=lower, upper=upper))
        if feas.status != OPTIMAL:
            return QpSolution(feas.status)
        x = feas.x.copy()
    else:
        x = start.x.copy()

    poly = _Polyhedron(a, senses, b, lower, upper)
    work = _WorkingSet(poly, x)
    if max_iter is None:
        max_iter = 200 + 30 * n
    it = 0
    while it < max_iter:
        it += 1
        g = c + 2.0 * q * x
        p, ray = _eqp_direction(work, q, g)

        if ray is not None:
            step, blocker = _max_step(poly, work.rows, x, ray)
            if not np.isfinite(step):
                return QpSolution(UNBOUNDED, iterations=it)
            x = x + step * ray
            work.add(blocker)
            continue

        if np.linalg.norm(p) <= STEP_TOL * (1.0 + np.linalg.norm(x)):
            lam = work.multipliers(g)
            mults = lam[work.n_eq:] if lam is not None else np.zeros(0)
            tol = MULT_TOL * (1.0 + np.linalg.norm(g))
            if mults.size == 0 or mults.min() >= -tol:
                val = _objective(c, q, x)
                return QpSolution(OPTIMAL, val, val, x, it)
            work.drop(int(np.argmin(mults)))
            continue

        step, blocker = _max_step(poly, work.rows, x, p)
        if step >= 1.0:
            x = x + p
        else:
            x = x + step * p
            work.add(blocker)

    return _tangent_refinement(c, q, a, senses, b, lower, upper, iterations=it,
                               max_rounds=fallback_rounds)


def _tangent_refinement(c, q, a, senses, b, lower, upper, iterations=0,
                        max_rounds=80, tol=1e-9) -> QpSolution:
    """Outer approximation of the quadratic terms by tangent cuts.

    The LP value is a lower bound on the QP optimum at every round, so even
    an early exit returns something branch-and-bound can trust.
    """
    n = c.size
    quad = np.where(q > 0.0)[0]
    nq = quad.size
    n_tot = n + nq
    c_ext = np.concatenate([c, np.ones(nq)])
    lo = np.concatenate([lower, np.zeros(nq)])
    hi = np.concatenate([upper, np.full(nq, np.inf)])
    rows = [np.concatenate([a[i], np.zeros(nq)]) for i in range(a.shape[0])]
    rws = list(senses)
    rhs = list(b)

    best = None
    for rnd in range(max_rounds):
        lp = LinearProgram(c=c_ext, a=np.array(rows) if rows else np.zeros((0, n_tot)),
                           senses=rws, b=np.array(rhs), lower=lo, upper=hi)
        sol = solve_lp(lp)
        iterations += sol.iterations
        if sol.status != OPTIMAL:
            return QpSolution(sol.status, iterations=iterations, from_fallback=True)
        x = sol.x[:n]
        t = sol.x[n:]
        true_val = _objective(c, q, x)
        bound = sol.objective
        best = QpSolution(OPTIMAL, true_val, min(bound, true_val), x,
                          iterations, from_fallback=True)
        gaps = q[quad] * x[quad] ** 2 - t
        if gaps.size == 0 or gaps.max() <= tol * (1.0 + abs(true_val)):
            return best
        for pos, j in enumerate(quad):
            if gaps[pos] > tol * (1.0 + abs(true_val)):
                # t_j >= 2 q_j xbar x_j - q_j xbar^2
                row = np.zeros(n_tot)
                row[j] = 2.0 * q[j] * x[j]
                row[n + pos] = -1.0
                rows.append(row)
                rws.append("<=")
                rhs.append(q[j] * x[j] ** 2)
    return best


def _solve_qp_reduced(c, q, a, senses, b, lower, upper, fixed, max_iter,
                      fallback_rounds) -> QpSolution:
    """Substitute variables fixed by their bounds, solve the rest, reassemble."""
    vals = lower[fixed]
    keep = ~fixed
    const = float(c[fixed] @ vals + q[fixed] @ (vals * vals))
    b2 = b - a[:, fixed] @ vals if a.size else b
    if not keep.any():
        ok = True
        for i, s in enumerate(senses):
            resid = -b2[i]
            if (s == "<=" and resid > 1e-9) or (s == ">=" and resid < -1e-9) \
                    or (s == "=" and abs(resid) > 1e-9):
                ok = False
                break
        if not ok:
            return QpSolution(INFEASIBLE)
        x = lower.copy()
        return QpSolution(OPTIMAL, const, const, x, 0)
    sol = solve_qp(c[keep], q[keep], a[:, keep], senses, b2,
                   lower[keep], upper[keep], max_iter=max_iter,
                   fallback_rounds=fallback_rounds)
    if sol.x is None:
        return sol
    x = np.empty(c.size)
    x[fixed] = vals
    x[keep] = sol.x
    return QpSolution(sol.status, sol.objective + const,
                      None if sol.bound is None else sol.bound + const,
                      x, sol.iterations, sol.from_fallback)
