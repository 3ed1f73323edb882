"""Mixed-integer encoding of MTL sub-task problems.

Every subformula ``phi`` evaluated at step ``t`` is represented by an affine
expression ``K_t^phi`` over model variables. Halfspace indicators ``b`` are
binary; conjunction, disjunction, the temporal windows and until introduce
continuous ``K`` variables in ``[0, 1]`` that the linear rows force to the
Boolean value of their children whenever those children are integral.
Negation of an atom is the expression ``1 - K``, so it costs no variable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dynamics import DT, INPUT_NAMES, NU, NX, STATE_NAMES, LinearMode, discretize_zoh
from .milp import EQ, GE, LE, MilpModel
from .mtl import (Always, And, Atom, Eventually, Formula, Next, Not, Or, TrueF, Until, bind_horizon,
                  horizon_of, is_nnf, to_string)
from .workspace import TOL, Box, ConvexPolytope, Halfspace, Workspace


class EncodingError(ValueError):
    pass


class BigMTooSmall(EncodingError):
    pass


class HorizonTooShort(EncodingError):
    pass


@dataclass(frozen=True)
class BigMConfig:
    """Big-M constants of the indicator rows.

    ``M=None`` derives a constant per halfspace (twice the workspace diagonal
    scaled by the normal); with ``tighten`` the constant shrinks to the
    exact range of ``h.x - a`` over the reachable box at each step, and
    indicators whose value the box already decides are fixed. ``margin``
    pushes "inside" a little inward so that labels recomputed from the
    solution agree with the indicators.
    """

    M: float | None = None
    epsilon: float = 1e-6
    margin: float = 0.0
    tighten: bool = True

    def __post_init__(self):
        if self.M is not None and self.M <= 0:
            raise ValueError("M must be positive")
        if not 0 < self.epsilon < 1e-2:
            raise ValueError("epsilon must be a small positive number")
        if self.margin < 0:
            raise ValueError("margin must be nonnegative")


class LinExpr:
    """``const + sum(coef * var)``."""

    __slots__ = ("terms", "const")

    def __init__(self, terms: dict[int, float] | None = None, const: float = 0.0):
        self.terms = terms or {}
        self.const = float(const)

    @classmethod
    def var(cls, vid: int) -> "LinExpr":
        return cls({vid: 1.0})

    @property
    def is_const(self) -> bool:
        return not self.terms

    def complement(self) -> "LinExpr":
        return LinExpr({v: -c for v, c in self.terms.items()}, 1.0 - self.const)

    def key(self):
        return (tuple(sorted(self.terms.items())), self.const)

    def value(self, x) -> float:
        return self.const + sum(c * x[v] for v, c in self.terms.items())

    def __repr__(self):
        return f"LinExpr({self.terms}, {self.const})"


ONE = LinExpr(const=1.0)
ZERO = LinExpr(const=0.0)


def _row(model: MilpModel, parts: Sequence[tuple[float, LinExpr]], sense: str, rhs: float, name: str = ""):
    """Add ``sum(w * expr) sense rhs``; constant-only rows are checked, not added."""
    terms: dict[int, float] = {}
    const = 0.0
    for w, e in parts:
        const += w * e.const
        for v, c in e.terms.items():
            terms[v] = terms.get(v, 0.0) + w * c
    terms = {v: c for v, c in terms.items() if c != 0.0}
    rhs -= const
    if not terms:
        ok = (rhs >= -1e-12 if sense == LE else rhs <= 1e-12 if sense == GE else abs(rhs) <= 1e-12)
        if not ok:
            mark_infeasible(model, f"constant row {name or '?'} violated")
        return
    model.add_constr(terms, sense, rhs, name)


def mark_infeasible(model: MilpModel, reason: str) -> None:
    """Make ``model`` infeasible with a single contradictory row."""
    reasons = model.info.setdefault("infeasible", [])
    reasons.append(reason)
    vid = model.add_var(f"infeasible{len(reasons)}", 0.0, 0.0)
    model.add_constr({vid: 1.0}, GE, 1.0, f"infeasible{len(reasons)}")


@dataclass
class FormulaEncoder:
    """Encodes formulas over the position variables of one UAV.

    ``positions[t]`` are the ids of ``x, y, z`` at local step ``t``;
    ``boxes[t]`` bounds them (the reachable box), or is ``None`` for the
    workspace box.
    """

    model: MilpModel
    workspace: Workspace
    positions: Sequence[Sequence[int]]
    cfg: BigMConfig = field(default_factory=BigMConfig)
    boxes: Sequence[tuple[np.ndarray, np.ndarray]] | None = None
    prefix: str = ""

    def __post_init__(self):
        self._b: dict = {}
        self._props: dict = {}
        self._nodes: dict = {}
        self._node_ids: dict = {}
        self._aux = 0
        self.binaries: list[int] = []
        self.fixed_binaries = 0
        bounds = self.workspace.bounds
        self._wbox = (np.array(bounds.lo), np.array(bounds.hi))

    @property
    def horizon(self) -> int:
        return len(self.positions) - 1

    def box_at(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        if self.boxes is None:
            return self._wbox
        return self.boxes[t]

    # -- halfspace indicators ----------------------------------------------
    def indicator(self, hs: Halfspace, t: int) -> LinExpr:
        """``b_t = 1`` iff ``h.x(t) <= a`` (inside by ``margin``, outside by ``epsilon``)."""
        key = (hs.h, hs.a, t)
        if key in self._b:
            return self._b[key]
        cfg = self.cfg
        name = f"{self.prefix}b{len(self._b)}_t{t}"
        vid = self.model.add_var(name, 0.0, 1.0, binary=True)
        self.binaries.append(vid)
        wlo, whi = self._wbox
        wmin, wmax = hs.range_over(wlo, whi)
        need_in, need_out = wmax + cfg.margin, cfg.epsilon - wmin
        if cfg.M is not None:
            if cfg.M < max(need_in, need_out):
                raise BigMTooSmall(f"M={cfg.M} does not dominate halfspace {hs} over the workspace "
                                   f"(needs {max(need_in, need_out):.6g})")
            m_in = m_out = cfg.M
        else:
            m_in = m_out = 2.0 * self.workspace.bounds.diagonal * float(np.linalg.norm(hs.h))
        if cfg.tighten:
            lo, hi = self.box_at(t)
            vmin, vmax = hs.range_over(lo, hi)
            if np.array_equal(lo, hi):
                # a known position is labeled exactly as the oracle labels it
                inside = vmax <= TOL
                self.model.fix(vid, 1.0 if inside else 0.0)
                self.fixed_binaries += 1
                self._b[key] = ONE if inside else ZERO
                return self._b[key]
            if vmax <= -cfg.margin:
                self.model.fix(vid, 1.0)
                self.fixed_binaries += 1
                self._b[key] = ONE
                return ONE
            if vmin >= cfg.epsilon:
                self.model.fix(vid, 0.0)
                self.fixed_binaries += 1
                self._b[key] = ZERO
                return ZERO
            m_in = min(m_in, vmax + cfg.margin)
            m_out = min(m_out, cfg.epsilon - vmin)
        px = self.positions[t]
        terms = {px[k]: hs.h[k] for k in range(3) if hs.h[k] != 0.0}
        # h.x <= a - margin + M (1 - b)
        row = dict(terms)
        row[vid] = m_in
        self.model.add_constr(row, LE, hs.a - cfg.margin + m_in, f"{name}_in")
        # h.x >= a + epsilon - M b
        row = dict(terms)
        row[vid] = m_out
        self.model.add_constr(row, GE, hs.a + cfg.epsilon, f"{name}_out")
        expr = LinExpr.var(vid)
        self._b[key] = expr
        return expr

    def polytope(self, part: ConvexPolytope, t: int) -> LinExpr:
        return self.conjunction([self.indicator(h, t) for h in part.halfspaces], f"P{t}")

    def proposition(self, name: str, t: int) -> LinExpr:
        key = (name, t)
        if key not in self._props:
            try:
                parts = self.workspace.parts_for(name)
            except KeyError:
                raise EncodingError(f"proposition {name!r} has no region") from None
            self._props[key] = self.disjunction([self.polytope(p, t) for p in parts], f"R{t}")
        return self._props[key]

    # -- Boolean connectives -------------------------------------------------
    def _new_k(self, tag: str) -> int:
        self._aux += 1
        return self.model.add_var(f"{self.prefix}K{self._aux}_{tag}", 0.0, 1.0)

    @staticmethod
    def _unique(exprs):
        seen, out = set(), []
        for e in exprs:
            k = e.key()
            if k not in seen:
                seen.add(k)
                out.append(e)
        return out

    def conjunction(self, exprs: Sequence[LinExpr], tag: str = "and") -> LinExpr:
        if any(e.is_const and e.const <= 0.5 for e in exprs):
            return ZERO
        exprs = self._unique(e for e in exprs if not e.is_const)
        if not exprs:
            return ONE
        if len(exprs) == 1:
            return exprs[0]
        k = self._new_k(tag)
        K = LinExpr.var(k)
        for e in exprs:
            _row(self.model, [(1.0, K), (-1.0, e)], LE, 0.0)
        _row(self.model, [(1.0, K)] + [(-1.0, e) for e in exprs], GE, -(len(exprs) - 1))
        return K

    def disjunction(self, exprs: Sequence[LinExpr], tag: str = "or") -> LinExpr:
        if any(e.is_const and e.const >= 0.5 for e in exprs):
            return ONE
        exprs = self._unique(e for e in exprs if not e.is_const)
        if not exprs:
            return ZERO
        if len(exprs) == 1:
            return exprs[0]
        k = self._new_k(tag)
        K = LinExpr.var(k)
        for e in exprs:
            _row(self.model, [(1.0, K), (-1.0, e)], GE, 0.0)
        _row(self.model, [(1.0, K)] + [(-1.0, e) for e in exprs], LE, 0.0)
        return K

    # -- formulas ------------------------------------------------------------
    def encode(self, f: Formula, t: int = 0) -> LinExpr:
        key = (f, t)
        if key in self._nodes:
            return self._nodes[key]
        if t + horizon_of(f) > self.horizon:
            raise HorizonTooShort(f"{to_string(f)} at t={t} needs horizon {t + horizon_of(f)} > {self.horizon}")
        tag = f"n{self._node_ids.setdefault(f, len(self._node_ids))}t{t}"
        if isinstance(f, TrueF):
            out = ONE
        elif isinstance(f, Atom):
            out = self.proposition(f.name, t)
        elif isinstance(f, Not):
            if isinstance(f.arg, TrueF):
                out = ZERO
            elif isinstance(f.arg, Atom):
                out = self.proposition(f.arg.name, t).complement()
            else:
                raise EncodingError("formula is not in negation normal form")
        elif isinstance(f, And):
            out = self.conjunction([self.encode(a, t) for a in f.args], tag)
        elif isinstance(f, Or):
            out = self.disjunction([self.encode(a, t) for a in f.args], tag)
        elif isinstance(f, Next):
            out = self.encode(f.arg, t + 1)
        elif isinstance(f, (Eventually, Always)):
            if not f.interval.bounded:
                raise EncodingError("unbounded window; bind the formula to a horizon first")
            window = [self.encode(f.arg, t + s) for s in range(f.interval.lo, f.interval.hi + 1)]
            out = (self.disjunction(window, tag) if isinstance(f, Eventually)
                   else self.conjunction(window, tag))
        elif isinstance(f, Until):
            # c_tj = right at j and left on t..j-1; K = OR_j c_tj
            witnesses = []
            for j in range(f.interval.lo, f.interval.hi + 1):
                parts = [self.encode(f.right, t + j)] + [self.encode(f.left, t + l) for l in range(j)]
                witnesses.append(self.conjunction(parts, f"{tag}c{j}"))
            out = self.disjunction(witnesses, tag)
        else:
            raise TypeError(f"not a formula: {f!r}")
        self._nodes[key] = out
        return out

    def require(self, expr: LinExpr, name: str = "root") -> None:
        """Satisfaction constraint ``K_0^phi = 1``."""
        if expr.is_const:
            if expr.const < 0.5:
                mark_infeasible(self.model, f"{name} is false on every reachable trajectory")
            return
        _row(self.model, [(1.0, expr)], EQ, 1.0, name)


def encode_halfspace_indicators(model: MilpModel, part: ConvexPolytope, positions, workspace: Workspace,
                                cfg: BigMConfig = BigMConfig()) -> list[LinExpr]:
    """Indicator rows of every halfspace of ``part`` at every step, plus the part's
    conjunction ``K_t`` per step (returned)."""
    enc = FormulaEncoder(model, workspace, positions, cfg)
    return [enc.polytope(part, t) for t in range(len(positions))]


def encode_formula(model: MilpModel, f: Formula, workspace: Workspace, positions, cfg: BigMConfig = BigMConfig(),
                   boxes=None, require: bool = True) -> tuple[LinExpr, FormulaEncoder]:
    """Encode NNF ``f`` at t=0 over the given position variables.

    Unbounded windows are bound to the available horizon. Returns the root
    expression ``K_0^phi`` (already required to equal 1 unless ``require``
    is false) and the encoder holding the indicator bookkeeping.
    """
    if not is_nnf(f):
        raise EncodingError("formula is not in negation normal form")
    horizon = len(positions) - 1
    if horizon_of(f) > horizon:
        raise HorizonTooShort(f"horizon {horizon} is shorter than the formula horizon {horizon_of(f)}")
    bound = bind_horizon(f, horizon)
    enc = FormulaEncoder(model, workspace, positions, cfg, boxes)
    root = enc.encode(bound, 0)
    if require:
        enc.require(root)
    return root, enc


# -- sub-task problems ----------------------------------------------------------

@dataclass
class SubtaskEncoding:
    model: MilpModel
    x: np.ndarray  # (T+1, NX) variable ids
    up: np.ndarray  # (T, NU) ids of the positive input parts
    um: np.ndarray  # (T, NU) ids of the negative input parts
    boxes: list
    formula_encoder: FormulaEncoder
    root: LinExpr
    avoidance: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return self.x.shape[0] - 1

    def states(self, sol_x) -> np.ndarray:
        sol_x = np.asarray(sol_x)
        return sol_x[self.x]

    def inputs(self, sol_x) -> np.ndarray:
        sol_x = np.asarray(sol_x)
        return sol_x[self.up] - sol_x[self.um]


def reach_boxes(mode: LinearMode, Ad: np.ndarray, Bd: np.ndarray, x0: np.ndarray, T: int, bounds: Box,
                dt: float = DT) -> list[tuple[np.ndarray, np.ndarray]]:
    """Boxes containing the position at each step.

    Step 1 is exact interval arithmetic on ``Ad x0 + Bd u``; later steps add
    the per-step displacement bounds that the encoding imposes.
    """
    wlo, whi = np.array(bounds.lo), np.array(bounds.hi)
    zlo, zhi = max(wlo[2], mode.x_lo[2]), min(whi[2], mode.x_hi[2])
    clip_lo = np.array([wlo[0], wlo[1], zlo])
    clip_hi = np.array([whi[0], whi[1], zhi])
    p0 = np.asarray(x0[:3], dtype=float)
    boxes = [(p0.copy(), p0.copy())]
    if T == 0:
        return boxes
    center = Ad[:3] @ x0
    Bp = Bd[:3]
    spread_lo = np.where(Bp > 0, Bp * mode.u_lo, Bp * mode.u_hi).sum(axis=1)
    spread_hi = np.where(Bp > 0, Bp * mode.u_hi, Bp * mode.u_lo).sum(axis=1)
    lo = np.maximum(center + spread_lo, clip_lo)
    hi = np.minimum(center + spread_hi, clip_hi)
    boxes.append((lo, hi))
    step_lo, step_hi = displacement_bounds(mode, dt)
    for _ in range(2, T + 1):
        lo = np.maximum(lo + step_lo, clip_lo)
        hi = np.minimum(hi + step_hi, clip_hi)
        boxes.append((lo, hi))
    return boxes


def _axis_chains(Ad: np.ndarray, Bd: np.ndarray) -> list[tuple[list[int], list[int]]]:
    """States and inputs coupled to each position coordinate through the dynamics."""
    n = Ad.shape[0]
    adj = (Ad != 0) | (Ad.T != 0)
    chains = []
    for k in range(3):
        seen, todo = {k}, [k]
        while todo:
            i = todo.pop()
            for j in np.flatnonzero(adj[i]):
                if int(j) not in seen:
                    seen.add(int(j))
                    todo.append(int(j))
        states = sorted(seen)
        inputs = sorted(int(j) for j in np.flatnonzero(np.any(Bd[states] != 0, axis=0)))
        if np.any(Ad[np.ix_(states, [i for i in range(n) if i not in seen])] != 0):
            raise EncodingError("position chains are not decoupled")
        chains.append((states, inputs))
    return chains


def exact_reach_boxes(mode: LinearMode, Ad: np.ndarray, Bd: np.ndarray, x0: np.ndarray, T: int, bounds: Box,
                      dt: float = DT) -> list[tuple[np.ndarray, np.ndarray]]:
    """Smallest boxes containing the position at each step.

    Each coordinate evolves in its own chain of states (position, velocity,
    tilt, rate) driven by one input, so its extreme values at step ``t``
    come from two small LPs over the chain with the mode's state and input
    bounds, the workspace box and the per-step displacement rows.
    """
    from .solver.simplex import simplex

    x0 = np.asarray(x0, dtype=float)
    loose = reach_boxes(mode, Ad, Bd, x0, T, bounds, dt)
    lo_all = np.array([b[0] for b in loose])
    hi_all = np.array([b[1] for b in loose])
    if T <= 1 or np.any(lo_all > hi_all + 1e-12):
        return loose
    wlo, whi = np.array(bounds.lo), np.array(bounds.hi)
    step_lo, step_hi = displacement_bounds(mode, dt)
    for k, (states, inputs) in enumerate(_axis_chains(Ad, Bd)):
        ns, ni = len(states), len(inputs)
        pos = states.index(k)
        for t in range(2, T + 1):
            # variables: chain states at steps 1..t, then inputs at steps 0..t-1
            nv = t * ns + t * ni
            sx = lambda s, i: (s - 1) * ns + i
            su = lambda s, j: t * ns + s * ni + j
            rows, rhs, senses = [], [], []
            for s in range(t):
                for a, i in enumerate(states):
                    row = np.zeros(nv)
                    row[sx(s + 1, a)] = 1.0
                    const = 0.0
                    for b, i2 in enumerate(states):
                        if Ad[i, i2] == 0:
                            continue
                        if s == 0:
                            const += Ad[i, i2] * x0[i2]
                        else:
                            row[sx(s, b)] -= Ad[i, i2]
                    for c, j in enumerate(inputs):
                        row[su(s, c)] -= Bd[i, j]
                    rows.append(row)
                    rhs.append(const)
                    senses.append(EQ)
            for s in range(1, t):
                row = np.zeros(nv)
                row[sx(s + 1, pos)] = 1.0
                row[sx(s, pos)] = -1.0
                if np.isfinite(step_hi[k]):
                    rows.append(row)
                    rhs.append(step_hi[k])
                    senses.append(LE)
                if np.isfinite(step_lo[k]):
                    rows.append(row.copy())
                    rhs.append(step_lo[k])
                    senses.append(GE)
            lb = np.empty(nv)
            ub = np.empty(nv)
            for s in range(1, t + 1):
                for a, i in enumerate(states):
                    lb[sx(s, a)], ub[sx(s, a)] = mode.x_lo[i], mode.x_hi[i]
                    if i < 3:
                        lb[sx(s, a)] = max(lb[sx(s, a)], wlo[i])
                        ub[sx(s, a)] = min(ub[sx(s, a)], whi[i])
            for s in range(t):
                for c, j in enumerate(inputs):
                    lb[su(s, c)], ub[su(s, c)] = mode.u_lo[j], mode.u_hi[j]
            A = np.array(rows)
            for sign in (1.0, -1.0):
                cvec = np.zeros(nv)
                cvec[sx(t, pos)] = sign
                sol = simplex(cvec, A, senses, np.array(rhs), lb, ub)
                if sol.status == "infeasible":
                    lo_all[t:, k], hi_all[t:, k] = np.inf, -np.inf
                    break
                if sol.status != "optimal":
                    continue
                # pad by a hair so rounding never cuts off a reachable point
                v = sol.x[sx(t, pos)]
                if sign > 0:
                    lo_all[t, k] = max(lo_all[t, k], v - 1e-9)
                else:
                    hi_all[t, k] = min(hi_all[t, k], v + 1e-9)
    return [(lo_all[t].copy(), hi_all[t].copy()) for t in range(T + 1)]


def displacement_bounds(mode: LinearMode, dt: float = DT) -> tuple[np.ndarray, np.ndarray]:
    """Per-step position change allowed after the first step (speed bound times dt)."""
    return mode.x_lo[3:6] * dt, mode.x_hi[3:6] * dt


# state components pinned to zero at the final step
TERMINAL_ZERO = {
    None: frozenset(),
    "level": frozenset({5, 6, 7, 8, 9}),
    "rest": frozenset({3, 4, 5, 6, 7, 8, 9}),
    "slow": frozenset({5, 6, 7, 8, 9}),
}
# horizontal speed cap at the final step for the "slow" terminal
SLOW_SPEED = 0.5


def encode_subtask_problem(formula: Formula, mode: LinearMode, x0, T: int, workspace: Workspace,
                           cfg: BigMConfig = BigMConfig(), dt: float = DT, name: str = "subtask",
                           discrete: tuple[np.ndarray, np.ndarray] | None = None,
                           terminal: str | None = "level", boxes=None) -> SubtaskEncoding:
    """Problem 2 for one sub-task: dynamics, bounds, formula and the input cost.

    ``x(0) = x0`` is fixed; ``x(t+1) = Ad x(t) + Bd u(t)``; state bounds of
    the mode hold for ``t >= 1``; ``sum |u|`` is linearized by splitting each
    input into nonnegative parts ``u = u+ - u-``.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (NX,):
        raise EncodingError(f"initial state must have {NX} entries, got {x0.shape}")
    if mode.state_dim != NX or mode.input_dim != NU:
        raise EncodingError("mode dimensions do not match the hover state space")
    if T < horizon_of(formula):
        raise HorizonTooShort(f"horizon {T} is shorter than the formula horizon {horizon_of(formula)}")
    Ad, Bd = discrete if discrete is not None else discretize_zoh(mode.A, mode.B, dt)
    model = MilpModel(name)
    if boxes is None:
        boxes = reach_boxes(mode, Ad, Bd, x0, T, workspace.bounds, dt)
    elif len(boxes) < T + 1:
        raise EncodingError(f"{len(boxes)} reach boxes for horizon {T}")
    boxes = list(boxes[:T + 1])
    empty = [t for t, (lo, hi) in enumerate(boxes) if np.any(lo > hi + 1e-12)]
    x = np.empty((T + 1, NX), dtype=int)
    for t in range(T + 1):
        for i, sname in enumerate(STATE_NAMES):
            if t == 0:
                lb = ub = x0[i]
            elif i < 3:
                lo, hi = boxes[t]
                lb, ub = (lo[i], hi[i]) if lo[i] <= hi[i] else (lo[i], lo[i])
            elif t == T and i in TERMINAL_ZERO[terminal]:
                lb = ub = 0.0
            elif t == T and terminal == "slow" and i in (3, 4):
                lb, ub = max(mode.x_lo[i], -SLOW_SPEED), min(mode.x_hi[i], SLOW_SPEED)
            else:
                lb, ub = mode.x_lo[i], mode.x_hi[i]
            x[t, i] = model.add_var(f"{sname}_t{t}", lb, ub)
            model.meta[int(x[t, i])] = (name, t, sname)
    up = np.empty((T, NU), dtype=int)
    um = np.empty((T, NU), dtype=int)
    for t in range(T):
        for j, uname in enumerate(INPUT_NAMES):
            up[t, j] = model.add_var(f"{uname}p_t{t}", 0.0, max(mode.u_hi[j], 0.0))
            um[t, j] = model.add_var(f"{uname}m_t{t}", 0.0, max(-mode.u_lo[j], 0.0))
            model.meta[int(up[t, j])] = (name, t, uname + "+")
            model.meta[int(um[t, j])] = (name, t, uname + "-")
            model.add_objective(int(up[t, j]), 1.0)
            model.add_objective(int(um[t, j]), 1.0)
            if mode.u_lo[j] > 0 or mode.u_hi[j] < 0:
                raise EncodingError("input bounds must contain zero")
    if empty:
        mark_infeasible(model, f"no reachable position at step {empty[0]}")
    # dynamics
    for t in range(T):
        for i in range(NX):
            terms = {int(x[t + 1, i]): 1.0}
            for k in np.flatnonzero(Ad[i]):
                terms[int(x[t, k])] = terms.get(int(x[t, k]), 0.0) - Ad[i, k]
            for j in np.flatnonzero(Bd[i]):
                terms[int(up[t, j])] = -Bd[i, j]
                terms[int(um[t, j])] = Bd[i, j]
            model.add_constr(terms, EQ, 0.0, f"dyn_{STATE_NAMES[i]}_t{t}")
    # per-step displacement after the first step
    step_lo, step_hi = displacement_bounds(mode, dt)
    for t in range(1, T):
        for k in range(3):
            pair = {int(x[t + 1, k]): 1.0, int(x[t, k]): -1.0}
            if np.isfinite(step_hi[k]):
                model.add_constr(pair, LE, step_hi[k], f"step_{STATE_NAMES[k]}_hi_t{t}")
            if np.isfinite(step_lo[k]):
                model.add_constr(pair, GE, step_lo[k], f"step_{STATE_NAMES[k]}_lo_t{t}")
    positions = [tuple(int(v) for v in x[t, :3]) for t in range(T + 1)]
    root, enc = encode_formula(model, formula, workspace, positions, cfg, boxes if cfg.tighten else None)
    model.info.update(horizon=T, mode=mode.mode.value, formula=to_string(formula))
    return SubtaskEncoding(model, x, up, um, boxes, enc, root)


def encode_neighbor_avoidance(enc: SubtaskEncoding, other: Sequence[np.ndarray] | np.ndarray, rho: float,
                              r_safe: float, cfg: BigMConfig = BigMConfig(), tag: str = "nb") -> dict:
    """Keep ``||p(t) - q(t)||_inf >= 2 r_safe`` against another UAV's positions.

    ``other[t]`` is the other UAV's position at local step ``t``. At each
    step the forbidden box around ``q(t)`` is escaped through one of six
    halfspaces chosen by binaries with ``sum >= 1``. Steps where the other
    UAV is farther than ``rho`` from the reachable box, or where some escape
    halfspace holds on the whole box, add nothing. Step 0 is the given
    initial state and is left alone.
    """
    other = np.asarray(other, dtype=float)
    T = enc.horizon
    if other.shape != (T + 1, 3):
        raise EncodingError(f"other trajectory must cover local steps 0..{T}, got shape {other.shape}")
    model = enc.model
    d = 2.0 * r_safe
    stats = {"steps": 0, "pruned_far": 0, "pruned_separated": 0, "binaries": 0}
    for t in range(1, T + 1):
        q = other[t]
        lo, hi = enc.boxes[t]
        gap = np.maximum(np.maximum(lo - q, q - hi), 0.0)
        if float(np.linalg.norm(gap)) > rho:
            stats["pruned_far"] += 1
            continue
        # escape k: sign * (p_k - q_k) >= d + margin
        escapes = []
        surely = False
        for k in range(3):
            for sign in (1.0, -1.0):
                need = d + cfg.margin
                best = (hi[k] - q[k]) if sign > 0 else (q[k] - lo[k])
                worst = (lo[k] - q[k]) if sign > 0 else (q[k] - hi[k])
                if worst >= need:
                    surely = True
                if best >= need:
                    escapes.append((k, sign, need - worst))
        if surely:
            stats["pruned_separated"] += 1
            continue
        stats["steps"] += 1
        if not escapes:
            mark_infeasible(model, f"{tag}: no separating direction at step {t}")
            continue
        ids = []
        for k, sign, M in escapes:
            e = model.add_var(f"{tag}_e{k}{'p' if sign > 0 else 'm'}_t{t}", 0.0, 1.0, binary=True)
            ids.append(e)
            pv = int(enc.x[t, k])
            # sign (p - q) >= need - M (1 - e)
            model.add_constr({pv: sign, e: -M}, GE, sign * q[k] + d + cfg.margin - M, f"{tag}_sep{k}_t{t}")
        model.add_constr({e: 1.0 for e in ids}, GE, 1.0, f"{tag}_any_t{t}")
        stats["binaries"] += len(ids)
    enc.avoidance[tag] = stats
    return stats
