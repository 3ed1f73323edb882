"""Two-phase bounded-variable primal simplex on a dense tableau.

Every row ``a @ x (<=|==|>=) b`` gets a slack ``s`` with ``a @ x + s = b`` and
sign-restricted bounds, so the working problem is ``Full @ z = b`` with box
bounds on every column. Nonbasic columns sit at a finite bound (free columns
at zero). Phase 1 adds one artificial per row whose slack cannot absorb the
initial residual and minimizes their sum.

Pricing is Dantzig's largest reduced cost with a Harris two-pass ratio test;
after ``BLAND_AFTER`` degenerate pivots the phase switches to Bland's rule for
the rest of the solve.
"""

from __future__ import annotations

import math
from collections import OrderedDict

import numpy as np
from scipy.linalg.blas import dger

from ..milp import EQ, GE, LE, LpSolution, MilpModel

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
BLAND_AFTER = 1000
REFACTOR_EVERY = 100
DEFAULT_PIVOT_LIMIT = 50_000

_LOWER, _UPPER, _FREE, _BASIC = 0, 1, 2, -1


class _IterationLimit(Exception):
    pass


class _Tableau:
    def __init__(self, full: np.ndarray, b: np.ndarray, lb: np.ndarray, ub: np.ndarray,
                 x: np.ndarray, head: np.ndarray, eye: int | None = None,
                 T: np.ndarray | None = None, since: int = 0):
        self.full = full
        self.b = b
        self.lb = lb
        self.ub = ub
        self.x = x
        self.head = head
        m, ncol = full.shape
        self.where = np.full(ncol, _LOWER, dtype=np.int8)
        for j in range(ncol):
            if lb[j] == -math.inf and ub[j] == math.inf:
                self.where[j] = _FREE
            elif x[j] == ub[j] and lb[j] != ub[j]:
                self.where[j] = _UPPER
        self.where[head] = _BASIC
        self.movable = lb < ub
        self.pivots = 0
        self.degenerate = 0
        # columns eye..eye+m of ``full`` hold an identity, so T there is B^-1
        self.eye = eye
        if T is not None and eye is not None and since < REFACTOR_EVERY:
            self.T = np.array(T, order="F")
            self.since_refactor = since
            self.refresh_x()
        else:
            self.refactor()

    def refresh_x(self):
        """Recompute the basic values from the current tableau."""
        if self.eye is None:
            self.refactor()
            return
        m = self.full.shape[0]
        nonbasic = self.where != _BASIC
        rhs = self.b - self.full[:, nonbasic] @ self.x[nonbasic]
        self.x[self.head] = self.T[:, self.eye:self.eye + m] @ rhs

    def refactor(self):
        B = self.full[:, self.head]
        self.T = np.asfortranarray(np.linalg.solve(B, self.full))
        nonbasic = self.where != _BASIC
        rhs = self.b - self.full[:, nonbasic] @ self.x[nonbasic]
        self.x[self.head] = np.linalg.solve(B, rhs)
        self.since_refactor = 0

    def reduced_costs(self, cost: np.ndarray) -> np.ndarray:
        return cost - cost[self.head] @ self.T

    def pivot(self, r: int, q: int):
        T = self.T
        col = T[:, q].copy()
        prow = T[r, :] / col[r]
        col[r] = 0.0
        nz = np.flatnonzero(col)
        if nz.size:
            if nz.size * 4 < T.shape[0]:
                T[nz, :] -= np.outer(col[nz], prow)
            else:
                dger(-1.0, col, prow, a=T, overwrite_a=True)
        T[r, :] = prow
        self.since_refactor += 1

    def run(self, cost: np.ndarray, pivot_limit: int) -> tuple[str, int | None, int]:
        """Optimize ``cost`` from the current basis. Returns (status, q, dir)."""
        d = self.reduced_costs(cost)
        bland = self.degenerate >= BLAND_AFTER
        while True:
            where = self.where
            can_inc = self.movable & ((where == _LOWER) | (where == _FREE)) & (d < -OPT_TOL)
            can_dec = self.movable & ((where == _UPPER) | (where == _FREE)) & (d > OPT_TOL)
            if bland:
                elig = np.flatnonzero(can_inc | can_dec)
                if elig.size == 0:
                    return "optimal", None, 0
                q = int(elig[0])
            else:
                score = np.where(can_inc, -d, 0.0) + np.where(can_dec, d, 0.0)
                q = int(np.argmax(score))
                if score[q] <= 0.0:
                    return "optimal", None, 0
            dirn = 1 if can_inc[q] else -1
            if self.pivots >= pivot_limit:
                raise _IterationLimit()

            alpha = self.T[:, q] * dirn
            head = self.head
            xB = self.x[head]
            lbB = self.lb[head]
            ubB = self.ub[head]
            pos = alpha > PIVOT_TOL
            neg = alpha < -PIVOT_TOL
            with np.errstate(divide="ignore", invalid="ignore"):
                room_dn = np.where(pos, xB - lbB, math.inf)
                room_up = np.where(neg, ubB - xB, math.inf)
                ratio = np.where(pos, room_dn / alpha, np.where(neg, room_up / -alpha, math.inf))
                ratio = np.where(np.isnan(ratio), math.inf, ratio)
                if bland:
                    theta_max = ratio.min() if ratio.size else math.inf
                else:
                    relaxed = np.where(pos, (room_dn + FEAS_TOL) / alpha,
                                       np.where(neg, (room_up + FEAS_TOL) / -alpha, math.inf))
                    relaxed = np.where(np.isnan(relaxed), math.inf, relaxed)
                    theta_max = relaxed.min() if relaxed.size else math.inf
            flip = self.ub[q] - self.lb[q]
            if theta_max == math.inf and flip == math.inf:
                return "unbounded", q, dirn

            self.pivots += 1
            if flip <= theta_max:
                theta = flip
                self.x[q] = self.ub[q] if dirn > 0 else self.lb[q]
                self.where[q] = _UPPER if dirn > 0 else _LOWER
                self.x[head] = xB - theta * alpha
                if theta <= 1e-12:
                    self.degenerate += 1
                continue

            if bland:
                cand = np.flatnonzero(ratio <= theta_max + 1e-12)
                r = int(cand[np.argmin(head[cand])])
            else:
                cand = np.flatnonzero(ratio <= theta_max)
                r = int(cand[np.argmax(np.abs(alpha[cand]))])
            theta = max(float(ratio[r]), 0.0)
            if theta <= 1e-12:
                self.degenerate += 1
                if not bland and self.degenerate >= BLAND_AFTER:
                    bland = True
            leave = int(head[r])
            self.x[head] = xB - theta * alpha
            self.x[q] = self.x[q] + dirn * theta
            if alpha[r] > 0:
                self.x[leave] = self.lb[leave]
                self.where[leave] = _LOWER
            else:
                self.x[leave] = self.ub[leave]
                self.where[leave] = _UPPER
            if self.lb[leave] == -math.inf and self.ub[leave] == math.inf:
                self.where[leave] = _FREE
            self.where[q] = _BASIC
            head[r] = q
            dq = d[q]
            self.pivot(r, q)
            d = d - dq * self.T[r, :]
            d[q] = 0.0
            if self.since_refactor >= REFACTOR_EVERY:
                self.refactor()
                d = self.reduced_costs(cost)


    def dual_run(self, cost: np.ndarray, pivot_limit: int) -> str:
        """Dual simplex from a dual feasible basis; returns ``optimal`` or ``infeasible``."""
        d = self.reduced_costs(cost)
        while True:
            head = self.head
            xB = self.x[head]
            below = self.lb[head] - xB
            above = xB - self.ub[head]
            viol = np.maximum(below, above)
            r = int(np.argmax(viol))
            if viol[r] <= FEAS_TOL:
                return "optimal"
            if self.pivots >= pivot_limit:
                raise _IterationLimit()
            raise_r = below[r] > above[r]
            row = self.T[r, :]
            a = row if not raise_r else -row
            where = self.where
            # moving nonbasic j by dx changes x_r by -row[j] dx
            up_ok = self.movable & ((where == _LOWER) | (where == _FREE)) & (a > PIVOT_TOL)
            dn_ok = self.movable & ((where == _UPPER) | (where == _FREE)) & (a < -PIVOT_TOL)
            elig = np.flatnonzero(up_ok | dn_ok)
            if elig.size == 0:
                return "infeasible"
            ae = np.abs(a[elig])
            de = np.abs(d[elig])
            theta = np.min((de + OPT_TOL) / ae)
            cand = elig[de / ae <= theta]
            q = int(cand[np.argmax(np.abs(a[cand]))])
            leave = int(head[r])
            bound = self.lb[leave] if raise_r else self.ub[leave]
            col = self.T[:, q].copy()
            dxq = (xB[r] - bound) / row[q]
            self.x[head] = xB - col * dxq
            self.x[q] += dxq
            self.x[leave] = bound
            self.where[leave] = _LOWER if raise_r else _UPPER
            if self.lb[leave] == self.ub[leave]:
                self.where[leave] = _LOWER
            self.where[q] = _BASIC
            head[r] = q
            self.pivots += 1
            if abs(dxq) <= 1e-12:
                self.degenerate += 1
            dq = d[q]
            self.pivot(r, q)
            d = d - dq * self.T[r, :]
            d[q] = 0.0
            if self.since_refactor >= REFACTOR_EVERY:
                self.refactor()
                d = self.reduced_costs(cost)


def _slack_bounds(sense: str) -> tuple[float, float]:
    if sense == LE:
        return 0.0, math.inf
    if sense == GE:
        return -math.inf, 0.0
    return 0.0, 0.0


def simplex(c, A, senses, b, lb, ub, pivot_limit: int = DEFAULT_PIVOT_LIMIT) -> LpSolution:
    """Minimize ``c @ x`` over rows ``A x (senses) b`` and ``lb <= x <= ub``."""
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float).reshape(len(senses), len(c))
    b = np.asarray(b, dtype=float)
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    n = len(c)
    if np.any(lb > ub):
        j = int(np.flatnonzero(lb > ub)[0])
        return LpSolution("infeasible", certificate=f"empty bounds on column {j}")

    # fixed columns never enter; fold them into the right-hand side
    fixed = lb == ub
    keep = np.flatnonzero(~fixed)
    x_full = np.where(fixed, lb, 0.0)
    b_red = b - A[:, fixed] @ lb[fixed] if fixed.any() else b.copy()
    A_red = A[:, keep]
    active = np.any(A_red != 0.0, axis=1)
    for i in np.flatnonzero(~active):
        s = senses[i]
        viol = (s == LE and b_red[i] < -1e-9) or (s == GE and b_red[i] > 1e-9) or \
            (s == EQ and abs(b_red[i]) > 1e-9)
        if viol:
            return LpSolution("infeasible", certificate=f"row {i} violated by fixed columns ({b_red[i]:+.3g})")
    rows = np.flatnonzero(active)
    sol = _solve_core(c[keep], A_red[rows], [senses[i] for i in rows], b_red[rows],
                      lb[keep], ub[keep], pivot_limit)
    if sol.x is not None:
        x_full[keep] = sol.x
        sol.x = x_full
        sol.objective = float(c @ x_full)
        if sol.duals is not None:
            y = np.zeros(len(senses))
            y[rows] = sol.duals
            sol.duals = y
    return sol


def _solve_core(c, A, senses, b, lb, ub, pivot_limit) -> LpSolution:
    m, n = A.shape
    if m == 0:
        # bounds only
        x = np.where(c > 0, lb, np.where(c < 0, ub, np.where(np.isfinite(lb), lb, np.where(np.isfinite(ub), ub, 0.0))))
        if np.any(~np.isfinite(x)):
            j = int(np.flatnonzero(~np.isfinite(x))[0])
            return LpSolution("unbounded", certificate=f"ray along column {j}")
        return LpSolution("optimal", float(c @ x), x, duals=np.zeros(0))

    slb = np.empty(m)
    sub = np.empty(m)
    for i, s in enumerate(senses):
        slb[i], sub[i] = _slack_bounds(s)
    x0 = np.where(np.isfinite(lb), lb, np.where(np.isfinite(ub), ub, 0.0))
    resid = b - A @ x0

    head = np.empty(m, dtype=np.int64)
    xs = np.empty(m)
    art_rows, art_sign, art_val = [], [], []
    for i in range(m):
        if slb[i] - FEAS_TOL <= resid[i] <= sub[i] + FEAS_TOL:
            xs[i] = min(max(resid[i], slb[i]), sub[i])
            head[i] = n + i
        else:
            xs[i] = sub[i] if resid[i] > sub[i] else slb[i]
            rem = resid[i] - xs[i]
            art_rows.append(i)
            art_sign.append(1.0 if rem > 0 else -1.0)
            art_val.append(abs(rem))
    k = len(art_rows)
    art = np.zeros((m, k))
    for a, (i, sgn) in enumerate(zip(art_rows, art_sign)):
        art[i, a] = sgn
        head[i] = n + m + a
    full = np.hstack([A, np.eye(m), art])
    lb_all = np.concatenate([lb, slb, np.zeros(k)])
    ub_all = np.concatenate([ub, sub, np.full(k, math.inf)])
    x_all = np.concatenate([x0, xs, np.array(art_val)])
    tab = _Tableau(full, b, lb_all, ub_all, x_all, head)

    try:
        if k:
            cost1 = np.zeros(n + m + k)
            cost1[n + m:] = 1.0
            status, _, _ = tab.run(cost1, pivot_limit)
            tab.refactor()
            infeas = float(np.sum(np.abs(tab.x[n + m:])))
            if infeas > 1e-7 * (1.0 + float(np.max(np.abs(b), initial=0.0))):
                y = -tab.reduced_costs(cost1)[n:n + m]
                return LpSolution("infeasible", certificate=f"phase-1 residual {infeas:.3g}; farkas y={np.round(y, 6).tolist()}",
                                  iterations=tab.pivots)
            _drive_out_artificials(tab, n, m, k)
            tab.lb[n + m:] = 0.0
            tab.ub[n + m:] = 0.0
            tab.movable[n + m:] = False
        cost2 = np.concatenate([c, np.zeros(m + k)])
        status, q, dirn = tab.run(cost2, pivot_limit)
    except _IterationLimit:
        return LpSolution("iteration-limit", iterations=tab.pivots,
                          certificate=f"pivot limit {pivot_limit} reached")
    if status == "unbounded":
        return LpSolution("unbounded", certificate=f"improving ray along column {q} (direction {dirn:+d})",
                          iterations=tab.pivots)
    tab.refactor()
    x = tab.x[:n].copy()
    # snap values within tolerance of their bounds
    x = np.where(np.abs(x - lb) <= FEAS_TOL, lb, x)
    x = np.where(np.abs(x - ub) <= FEAS_TOL, ub, x)
    duals = -tab.reduced_costs(cost2)[n:n + m]
    return LpSolution("optimal", float(c @ x), x, iterations=tab.pivots, duals=duals)


def _drive_out_artificials(tab: _Tableau, n: int, m: int, k: int) -> None:
    for r in range(m):
        j = int(tab.head[r])
        if j < n + m:
            continue
        row = tab.T[r, :n + m]
        ok = np.flatnonzero((np.abs(row) > 1e-7) & (tab.where[:n + m] != _BASIC))
        if ok.size == 0:
            continue  # redundant row; artificial stays basic at zero
        q = int(ok[np.argmax(np.abs(row[ok]))])
        tab.x[j] = 0.0
        tab.where[j] = _LOWER
        tab.where[q] = _BASIC
        tab.head[r] = q
        tab.pivot(r, q)
    tab.refactor()


def solve_lp(model: MilpModel, pivot_limit: int = DEFAULT_PIVOT_LIMIT) -> LpSolution:
    """Solve the continuous relaxation of ``model``."""
    c, A, senses, b, lb, ub, _ = model.arrays()
    sol = simplex(c, A, senses, b, lb, ub, pivot_limit)
    if sol.x is not None:
        sol.objective += model.obj_offset
    return sol


class WarmLp:
    """One constraint matrix re-solved under changing column bounds.

    Rows get slacks as in :func:`simplex`; a basis is the pair (basic column
    per row, nonbasic status per column). Tightening bounds keeps a basis
    dual feasible, so children of a branch-and-bound node restart from the
    parent's final basis with the dual simplex.
    """

    CACHE_SIZE = 24

    def __init__(self, c, A, senses, b):
        self._tableaux: OrderedDict[bytes, tuple[np.ndarray, int]] = OrderedDict()
        self.c = np.asarray(c, dtype=float)
        A = np.asarray(A, dtype=float).reshape(len(senses), len(self.c))
        self.m, self.n = A.shape
        self.full = np.hstack([A, np.eye(self.m)])
        self.b = np.asarray(b, dtype=float)
        self.slb = np.empty(self.m)
        self.sub = np.empty(self.m)
        for i, s in enumerate(senses):
            self.slb[i], self.sub[i] = _slack_bounds(s)
        self.cost = np.concatenate([self.c, np.zeros(self.m)])

    def initial_basis(self, lb, ub):
        """All-slack basis with every column at its cheaper bound, or None when
        some column with a cost has no finite bound on that side."""
        where = np.full(self.n + self.m, _BASIC, dtype=np.int8)
        for j in range(self.n):
            c, lo, hi = self.c[j], lb[j], ub[j]
            if c > 0 or (c == 0 and math.isfinite(lo)):
                if not math.isfinite(lo):
                    return None
                where[j] = _LOWER
            elif c < 0 or math.isfinite(hi):
                if not math.isfinite(hi):
                    return None
                where[j] = _UPPER
            else:
                where[j] = _FREE
        head = np.arange(self.n, self.n + self.m)
        return head, where

    def solve(self, lb, ub, basis, pivot_limit: int = DEFAULT_PIVOT_LIMIT):
        """Returns ``(solution, final basis)``; the basis is None when unusable."""
        lb = np.asarray(lb, dtype=float)
        ub = np.asarray(ub, dtype=float)
        if np.any(lb > ub):
            j = int(np.flatnonzero(lb > ub)[0])
            return LpSolution("infeasible", certificate=f"empty bounds on column {j}"), basis
        head, where = basis
        lb_all = np.concatenate([lb, self.slb])
        ub_all = np.concatenate([ub, self.sub])
        x = np.zeros(self.n + self.m)
        at_lo = where == _LOWER
        at_hi = where == _UPPER
        x[at_lo] = lb_all[at_lo]
        x[at_hi] = ub_all[at_hi]
        if not np.all(np.isfinite(x)):
            return simplex(self.c, self.full[:, :self.n], _senses_of(self.slb, self.sub), self.b,
                           lb, ub, pivot_limit), None
        key = head.tobytes()
        cached = self._tableaux.get(key)
        if cached is None and np.array_equal(head, np.arange(self.n, self.n + self.m)):
            cached = (self.full, 0)
        T, since = cached if cached is not None else (None, 0)
        try:
            tab = _Tableau(self.full, self.b, lb_all, ub_all, x, head.copy(), self.n, T, since)
        except np.linalg.LinAlgError:
            return simplex(self.c, self.full[:, :self.n], _senses_of(self.slb, self.sub), self.b,
                           lb, ub, pivot_limit), None
        try:
            status = tab.dual_run(self.cost, pivot_limit)
            if status == "infeasible":
                return LpSolution("infeasible", certificate="dual ray", iterations=tab.pivots), \
                    (tab.head.copy(), tab.where.copy())
            status, q, dirn = tab.run(self.cost, pivot_limit)
        except _IterationLimit:
            return LpSolution("iteration-limit", iterations=tab.pivots,
                              certificate=f"pivot limit {pivot_limit} reached"), None
        if status == "unbounded":
            return LpSolution("unbounded", certificate=f"improving ray along column {q} (direction {dirn:+d})",
                              iterations=tab.pivots), None
        tab.refresh_x()
        xs = tab.x[:self.n].copy()
        xs = np.where(np.abs(xs - lb) <= FEAS_TOL, lb, xs)
        xs = np.where(np.abs(xs - ub) <= FEAS_TOL, ub, xs)
        resid = self.full[:, :self.n] @ xs - self.b
        if np.any(resid > -self.slb + 1e-6) or np.any(resid < -self.sub - 1e-6):
            # numerical trouble; fall back to a cold solve
            return simplex(self.c, self.full[:, :self.n], _senses_of(self.slb, self.sub), self.b,
                           lb, ub, pivot_limit), None
        duals = -tab.reduced_costs(self.cost)[self.n:]
        sol = LpSolution("optimal", float(self.c @ xs), xs, iterations=tab.pivots, duals=duals)
        self._remember(tab)
        return sol, (tab.head.copy(), tab.where.copy())

    def _remember(self, tab: _Tableau) -> None:
        key = tab.head.tobytes()
        self._tableaux[key] = (tab.T, tab.since_refactor)
        self._tableaux.move_to_end(key)
        while len(self._tableaux) > self.CACHE_SIZE:
            self._tableaux.popitem(last=False)


def _senses_of(slb, sub) -> list[str]:
    out = []
    for lo, hi in zip(slb, sub):
        out.append(EQ if lo == hi else (LE if lo == 0.0 else GE))
    return out
