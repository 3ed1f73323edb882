"""Divide-and-conquer mission planning.

Each sub-task is solved as its own MILP from the state where the previous one
ended. A sub-task runs until the first step its reach obligation can be met
(the smallest feasible deadline), so its trajectory is as short as the
dynamics allow. UAVs are planned in list order; every earlier plan is a
moving obstacle for later ones, and UAVs not planned yet are parked on their
start pads. When another UAV blocks a sub-task that would be feasible alone,
the UAV hovers for one step and retries, paying the wait out of the
sub-task's budget.
"""

from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .dynamics import NX, HybridModel, ModeId, QuadParams, grasp_sequence, hybrid_model
from .encoder import (BigMConfig, EncodingError, SubtaskEncoding, encode_neighbor_avoidance,
                      encode_subtask_problem, exact_reach_boxes)
from .milp import LpSolution, MilpModel
from .mission import Mission, SubTask, Trajectory
from .mtl import (Always, And, Atom, Eventually, Formula, Interval, Not, TrueF, atoms, bind_horizon, conj,
                  evaluate_at, first_violation, horizon_of, shift, to_string)
from .solver.bnb import solve_milp
from .solver.lpformat import export_lp_text
from .workspace import Workspace, label_point

SEPARATION_TOL = 1e-9
WAIT_LOOKAHEAD = 5


@dataclass(frozen=True)
class PlannerConfig:
    gap: float = 1e-6
    time_budget: float = 60.0
    pivot_limit: int = 50_000
    bigm: BigMConfig = BigMConfig(margin=1e-5)
    export_lp_dir: str | None = None
    params: QuadParams = QuadParams()


# -- decomposition ----------------------------------------------------------------

@dataclass(frozen=True)
class DecompositionReport:
    ok: bool
    total: int
    budget: int
    problems: tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return self.ok


def validate_decomposition(m: Mission) -> DecompositionReport:
    """Sub-task budgets must fit the mission budget, one mode per sub-task."""
    total = sum(st.horizon for st in m.subtasks)
    problems = []
    if total > m.total_steps:
        problems.append(f"sub-task budgets sum to {total} > mission budget {m.total_steps} "
                        f"(excess {total - m.total_steps})")
    for st in m.subtasks:
        if not isinstance(st.mode, ModeId):
            problems.append(f"sub-task {st.label!r} has no single dynamical mode")
        if st.horizon < horizon_of(st.formula):
            problems.append(f"sub-task {st.label!r}: budget {st.horizon} < formula horizon {horizon_of(st.formula)}")
    return DecompositionReport(not problems, total, m.total_steps, tuple(problems))


# -- trajectories ------------------------------------------------------------------

class ContinuityError(ValueError):
    pass


def compose_trajectories(parts: Sequence[Trajectory], tol: float = 1e-7) -> Trajectory:
    """Concatenate parts; the end state of each must equal the next start state."""
    if not parts:
        raise ValueError("nothing to compose")
    states = [parts[0].states]
    inputs = [parts[0].inputs]
    modes = list(parts[0].modes)
    for k in range(1, len(parts)):
        gap = float(np.max(np.abs(parts[k - 1].states[-1] - parts[k].states[0])))
        if gap > tol:
            raise ContinuityError(f"junction {k}: state jump of {gap:.3g} between parts {k - 1} and {k}")
        states.append(parts[k].states[1:])
        inputs.append(parts[k].inputs)
        modes.extend(parts[k].modes)
    return Trajectory(np.vstack(states), np.vstack(inputs), tuple(modes), parts[0].start, parts[0].dt)


def others_positions(others: Sequence[Trajectory], start: int, steps: int) -> list[np.ndarray]:
    """Positions of each other UAV at absolute steps ``start .. start+steps``."""
    return [np.array([o.position_at(start + t) for t in range(steps + 1)]) for o in others]


@dataclass(frozen=True)
class VerifyReport:
    ok: bool
    violation_time: int | None = None
    message: str = ""

    def __bool__(self) -> bool:
        return self.ok


def trajectory_trace(tr: Trajectory, w: Workspace, length: int | None = None) -> list[frozenset]:
    labels = [label_point(w, p) for p in tr.positions]
    if length is not None and length > len(labels):
        labels += [labels[-1]] * (length - len(labels))
    return labels


def verify_trajectory(tr: Trajectory, f: Formula | None, w: Workspace, others: Sequence[Trajectory] = (),
                      r_safe: float = QuadParams().r_safe, pad: bool = False) -> VerifyReport:
    """Check ``f`` at the first state by the labeling semantics, then separation.

    Unbounded windows of ``f`` are bound to the trajectory length. With
    ``pad`` the last labels are held when ``f`` looks further ahead than the
    trajectory reaches (the UAV stays where it stopped).
    """
    if f is not None:
        n = tr.steps
        need = horizon_of(f)
        if need > n and not pad:
            return VerifyReport(False, n, f"trajectory of {n} steps is shorter than the formula horizon {need}")
        try:
            g = bind_horizon(f, n)
        except ValueError:
            g = bind_horizon(f, max(n, need))
        trace = trajectory_trace(tr, w, max(n, need) + 1)
        bad = first_violation(g, trace, 0)
        if bad is not None:
            return VerifyReport(False, tr.start + bad, f"{to_string(f)} violated at step {tr.start + bad}")
    for o in others:
        for k in range(tr.steps + 1):
            t = tr.start + k
            d = float(np.max(np.abs(tr.states[k, :3] - o.position_at(t))))
            if d < 2 * r_safe - SEPARATION_TOL:
                return VerifyReport(False, t, f"separation {d:.4f} < {2 * r_safe} at step {t}")
    for k, p in enumerate(tr.positions):
        if not w.bounds.contains(p, 1e-7):
            return VerifyReport(False, tr.start + k, f"position {p} outside the workspace at step {tr.start + k}")
    return VerifyReport(True)


def min_separation(trajs: Sequence[Trajectory]) -> float:
    """Smallest infinity-norm distance between any two UAVs at any step."""
    best = math.inf
    if len(trajs) < 2:
        return best
    horizon = max(t.end for t in trajs)
    for i in range(len(trajs)):
        for j in range(i + 1, len(trajs)):
            for t in range(horizon + 1):
                d = float(np.max(np.abs(trajs[i].position_at(t) - trajs[j].position_at(t))))
                best = min(best, d)
    return best


# -- sub-task planning ---------------------------------------------------------------

class PlanningError(RuntimeError):
    pass


@dataclass
class SubtaskResult:
    label: str
    mode: ModeId
    bound: int
    feasible: bool
    trajectory: Trajectory | None
    steps: int = 0
    execution_steps: int | None = None
    waits: int = 0
    solve_seconds: float = 0.0
    objective: float = 0.0
    milps: int = 0
    status: str = ""
    lp_texts: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.feasible and self.execution_steps is not None and self.execution_steps <= self.bound


class _SolveCache:
    """Memoizes solves by model content; identical models give identical answers."""

    def __init__(self):
        self._store: dict[bytes, LpSolution] = {}
        self._reach: dict = {}

    def reach(self, hybrid: HybridModel, mode: ModeId, x0, T: int, w: Workspace) -> list:
        """Exact reach boxes from ``x0``, computed once per start state and extended on demand."""
        m = hybrid.modes[mode]
        key = (mode, np.asarray(x0, dtype=float).tobytes(), w.bounds.lo, w.bounds.hi, hybrid.dt,
               *(v.tobytes() for v in (m.A, m.B, m.x_lo, m.x_hi, m.u_lo, m.u_hi)))
        boxes = self._reach.get(key)
        if boxes is None or len(boxes) < T + 1:
            Ad, Bd = hybrid.discrete(mode)
            boxes = exact_reach_boxes(hybrid.modes[mode], Ad, Bd, x0, max(T, 10), w.bounds, hybrid.dt)
            self._reach[key] = boxes
        return boxes

    @staticmethod
    def key(model: MilpModel, cfg: PlannerConfig) -> bytes:
        c, A, senses, b, lb, ub, isb = model.arrays()
        h = hashlib.sha1()
        for arr in (c, A, b, lb, ub, isb.astype(np.int8)):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update("".join(senses).encode())
        h.update(repr((cfg.gap, cfg.pivot_limit)).encode())
        return h.digest()

    def solve(self, model: MilpModel, cfg: PlannerConfig, time_budget: float) -> LpSolution:
        k = self.key(model, cfg)
        if k in self._store:
            return self._store[k]
        sol = solve_milp(model, gap=cfg.gap, time_budget=time_budget, pivot_limit=cfg.pivot_limit)
        if sol.status in ("optimal", "infeasible"):
            self._store[k] = sol
        return sol


@dataclass
class _Ctx:
    w: Workspace
    hybrid: HybridModel
    cfg: PlannerConfig
    cache: _SolveCache
    deadline: float
    milps: int = 0
    lp_texts: list = field(default_factory=list)


def _split_reach(f: Formula) -> tuple[Eventually | None, list[Formula]]:
    """Top-level reach obligation and the remaining conjuncts."""
    args = list(f.args) if isinstance(f, And) else [f]
    for k, a in enumerate(args):
        if isinstance(a, Eventually) and a.interval.bounded:
            return a, args[:k] + args[k + 1:]
    return None, args


def _with_deadline(f: Formula, e: int) -> Formula:
    reach, rest = _split_reach(f)
    if reach is None:
        return f
    clipped = Eventually(Interval(reach.interval.lo, min(reach.interval.hi, e)), reach.arg)
    return conj(clipped, *rest)


def _terminal(mode: ModeId, next_mode: ModeId | None = None) -> str:
    """End state of a sub-task: at rest before touching down, slow before a grasp, level otherwise."""
    if ModeId.LAND in (mode, next_mode):
        return "rest"
    return "slow" if next_mode == ModeId.GRASP else "level"


def _encode(ctx: _Ctx, f: Formula, mode: ModeId, x0, e: int, others: Sequence[Trajectory],
            start: int, tag: str, terminal: str = "level") -> SubtaskEncoding | None:
    """MILP for ``f`` bound to horizon ``e`` from ``x0``, avoiding ``others``."""
    try:
        g = bind_horizon(f, e)
    except ValueError:
        return None
    if horizon_of(g) > e:
        return None
    p = ctx.cfg.params
    enc = encode_subtask_problem(g, ctx.hybrid.modes[mode], x0, e, ctx.w, ctx.cfg.bigm, ctx.hybrid.dt,
                                 name=tag, discrete=ctx.hybrid.discrete(mode), terminal=terminal,
                                 boxes=ctx.cache.reach(ctx.hybrid, mode, x0, e, ctx.w))
    for k, q in enumerate(others_positions(others, start, e)):
        encode_neighbor_avoidance(enc, q, p.rho, p.r_safe, ctx.cfg.bigm, tag=f"nb{k}")
    return enc


def _solve(ctx: _Ctx, enc: SubtaskEncoding) -> LpSolution:
    remaining = max(ctx.deadline - time.perf_counter(), 0.0)
    ctx.milps += 1
    return ctx.cache.solve(enc.model, ctx.cfg, remaining)


def _solve_fixed(ctx: _Ctx, f: Formula, mode: ModeId, x0, e: int, others: Sequence[Trajectory],
                 start: int, tag: str, terminal: str = "level") -> tuple[LpSolution, SubtaskEncoding] | None:
    enc = _encode(ctx, f, mode, x0, e, others, start, tag, terminal)
    return None if enc is None else (_solve(ctx, enc), enc)


def _separated(tr: Trajectory, others: Sequence[Trajectory], r_safe: float) -> bool:
    for o in others:
        for k in range(tr.steps + 1):
            if np.max(np.abs(tr.states[k, :3] - o.position_at(tr.start + k))) < 2 * r_safe - SEPARATION_TOL:
                return False
    return True


def _piece(enc: SubtaskEncoding, sol: LpSolution, mode: ModeId, start: int, tag: str) -> Trajectory:
    states = enc.states(sol.x)
    inputs = enc.inputs(sol.x)
    return Trajectory(states, inputs, (mode,) * enc.horizon, start, labels=(tag,) * enc.horizon)


def _hold_formula(w: Workspace, x) -> Formula:
    """Stay inside the regions currently occupied and out of obstacles."""
    here = sorted(p for p in label_point(w, x[:3]) if p in {r.name for r in w.regions} and p not in w.obstacles)
    parts = [Always(Interval(0, None), Atom(p)) for p in here]
    parts += [Always(Interval(0, None), Not(Atom(o))) for o in w.obstacles]
    return conj(*parts) if parts else TrueF()


def _wait_step(ctx: _Ctx, x0, others: Sequence[Trajectory], start: int, budget: int, tag: str):
    """One Hover step taken from a short plan that stays put and can stop."""
    hold = _hold_formula(ctx.w, x0)
    for look in range(min(WAIT_LOOKAHEAD, max(budget, 1)), 0, -1):
        out = _solve_fixed(ctx, hold, ModeId.HOVER, x0, look, others, start, f"{tag}_wait", "rest")
        if out is None:
            continue
        sol, enc = out
        if sol.ok:
            full = _piece(enc, sol, ModeId.HOVER, start, "wait")
            return Trajectory(full.states[:2], full.inputs[:1], full.modes[:1], start, labels=("wait",)), sol
    return None, None


def _reach_step(tr: Trajectory, reach: Eventually | None, w: Workspace) -> int | None:
    """First local step at which the reach proposition holds."""
    if reach is None:
        return tr.steps
    labels = trajectory_trace(tr, w)
    need = horizon_of(reach.arg)
    for t in range(len(labels) - need):
        if evaluate_at(reach.arg, labels, t):
            return t
    return None


def _plan_reach(ctx: _Ctx, f: Formula, mode: ModeId, x0, budget: int, others: Sequence[Trajectory],
                start: int, tag: str, terminal: str = "level", allow_wait: bool = True):
    """Smallest-deadline search with wait-and-retry.

    Returns ``(parts, waits, objective, status)``; ``parts`` is None on failure.
    """
    reach, _ = _split_reach(f)
    # without a reach obligation the sub-task simply runs its full budget
    e = reach.interval.lo if reach is not None else budget
    parts: list[Trajectory] = []
    waits = 0
    x = np.asarray(x0, dtype=float)
    t_abs = start
    objective = 0.0
    while waits + e <= budget:
        if time.perf_counter() > ctx.deadline:
            return None, waits, objective, "time budget exhausted"
        g = _with_deadline(f, e)
        # the problem without neighbors relaxes the one with them: if it is
        # infeasible so is the full problem, and if its optimum keeps clear of
        # everybody it is the full optimum too
        solo = _solve_fixed(ctx, g, mode, x, e, (), t_abs, tag, terminal)
        if solo is None or not solo[0].ok:
            e += 1
            continue
        sol, enc = solo
        piece = _piece(enc, sol, mode, t_abs, tag)
        if others and not _separated(piece, others, ctx.cfg.params.r_safe):
            enc = _encode(ctx, g, mode, x, e, others, t_abs, tag, terminal)
            sol = _solve(ctx, enc)
            piece = _piece(enc, sol, mode, t_abs, tag) if sol.ok else None
        if piece is not None:
            parts.append(piece)
            if ctx.cfg.export_lp_dir:
                full = _encode(ctx, g, mode, x, e, others, t_abs, tag, terminal) if others else enc
                ctx.lp_texts.append((tag, export_lp_text(full.model)))
            return parts, waits, objective + sol.objective, "optimal" if sol.status == "optimal" else sol.status
        if not allow_wait:
            e += 1
            continue
        if waits + 1 + e > budget:
            break
        step, sol = _wait_step(ctx, x, others, t_abs, budget - waits, tag)
        if step is None:
            e += 1
            continue
        parts.append(step)
        objective += float(np.abs(step.inputs).sum())
        waits += 1
        t_abs += 1
        x = step.states[-1]
    return None, waits, objective, "infeasible within budget"


def plan_subtask(st: SubTask, x0, w: Workspace, others: Sequence[Trajectory] = (), start: int = 0,
                 cfg: PlannerConfig = PlannerConfig(), hybrid: HybridModel | None = None,
                 cache: _SolveCache | None = None, uav: str = "uav",
                 next_mode: ModeId | None = None) -> SubtaskResult:
    """Solve one sub-task from ``x0`` at absolute step ``start``.

    The returned trajectory is checked against the formula by the labeling
    semantics and against every other trajectory for separation; a
    disagreement raises :class:`PlanningError`.
    """
    hybrid = hybrid or hybrid_model(cfg.params)
    ctx = _Ctx(w, hybrid, cfg, cache or _SolveCache(), time.perf_counter() + cfg.time_budget)
    t0 = time.perf_counter()
    x0 = np.asarray(x0, dtype=float)
    tag = f"{uav}_{_safe(st.label)}"
    exec_steps = None
    if st.mode == ModeId.GRASP:
        parts, waits, objective, status, exec_steps = _plan_grasp(ctx, st, x0, others, start, tag)
    else:
        parts, waits, objective, status = _plan_reach(ctx, st.formula, st.mode, x0, st.horizon, others, start, tag,
                                                      _terminal(st.mode, next_mode))
    elapsed = time.perf_counter() - t0
    if parts is None:
        return SubtaskResult(st.label, st.mode, st.horizon, False, None, waits=waits, solve_seconds=elapsed,
                             milps=ctx.milps, status=status)
    tr = compose_trajectories(parts)
    if st.mode != ModeId.GRASP:
        reach, _ = _split_reach(st.formula)
        local = _reach_step(Trajectory(tr.states[waits:], tr.inputs[waits:], tr.modes[waits:], tr.start + waits),
                            reach, w)
        exec_steps = None if local is None else waits + local
    check = verify_trajectory(tr, st.formula, w, others, cfg.params.r_safe, pad=True)
    if not check:
        raise PlanningError(f"{uav} sub-task {st.label}: solver plan rejected by the semantic check: {check.message}")
    return SubtaskResult(st.label, st.mode, st.horizon, True, tr, tr.steps, exec_steps, waits, elapsed, objective,
                         ctx.milps, status, list(ctx.lp_texts))


def _safe(label: str) -> str:
    return "".join(ch if ch.isalnum() else "_" for ch in label)


def _plan_grasp(ctx: _Ctx, st: SubTask, x0, others, start: int, tag: str):
    """Grasp as Hover (one step), Land onto the object, TakeOff with it."""
    reach, hold = _split_reach(st.formula)
    if reach is None or not isinstance(reach.arg, Atom) or not reach.arg.primed:
        raise PlanningError(f"grasp sub-task {st.label!r} must reach a primed region")
    goal = reach.arg
    stay = conj(*hold) if hold else TrueF()
    seq = grasp_sequence()
    budget = st.horizon
    used = 0
    x = np.asarray(x0, dtype=float)
    parts: list[Trajectory] = []
    waits_total = 0
    objective = 0.0
    exec_steps = None
    for k, step in enumerate(seq):
        remaining = budget - used
        if step.mode == ModeId.HOVER:
            f = stay
            e = 1
            out = _solve_fixed(ctx, bind_horizon(f, e), ModeId.HOVER, x, e, others, start + used, f"{tag}_h")
            if out is None or not out[0].ok:
                return None, waits_total, objective, "hover above the object infeasible", None
            sol, enc = out
            piece = [_piece(enc, sol, ModeId.HOVER, start + used, "grasp-hover")]
            w_k, obj = 0, sol.objective
        else:
            target = Not(goal) if step.mode == ModeId.LAND else goal
            f = conj(stay, Eventually(Interval(0, remaining), target))
            piece, w_k, obj, status = _plan_reach(ctx, f, step.mode, x, remaining, others, start + used,
                                                  f"{tag}_{step.mode.value.lower()}", _terminal(step.mode))
            if piece is None:
                return None, waits_total, objective, f"{step.mode.value} phase: {status}", None
        tr = compose_trajectories(piece)
        if step.mode == ModeId.TAKEOFF:
            local = _reach_step(tr, Eventually(Interval(0, tr.steps), goal), ctx.w)
            exec_steps = used + (tr.steps if local is None else local)
        parts.append(tr)
        used += tr.steps
        waits_total += w_k
        objective += obj
        x = tr.states[-1]
    return parts, waits_total, objective, "optimal", exec_steps


# -- fleets -------------------------------------------------------------------------

@dataclass
class FleetPlan:
    missions: list
    trajectories: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)
    starts: dict = field(default_factory=dict)

    @property
    def success(self) -> bool:
        return not self.failures

    def rows(self):
        for m in self.missions:
            for r in self.results.get(m.uav, []):
                yield m.uav, r


def plan_fleet(missions: Sequence[Mission], w: Workspace, cfg: PlannerConfig = PlannerConfig(),
               cache: _SolveCache | None = None, progress=None) -> FleetPlan:
    """Plan missions in list order; failures are recorded, not raised."""
    hybrid = hybrid_model(cfg.params)
    cache = cache or _SolveCache()
    plan = FleetPlan(list(missions))
    for i, m in enumerate(missions):
        report = validate_decomposition(m)
        if not report:
            plan.failures[m.uav] = "; ".join(report.problems)
            plan.trajectories[m.uav] = Trajectory.stationary(m.x0)
            plan.results[m.uav] = []
            plan.starts[m.uav] = []
            continue
        parked = [Trajectory.stationary(o.x0) for o in missions[i + 1:]]
        others = [plan.trajectories[o.uav] for o in missions[:i]] + parked
        x = m.x0
        t = 0
        parts = []
        results = []
        starts = []
        for k, st in enumerate(m.subtasks):
            nxt = m.subtasks[k + 1].mode if k + 1 < len(m.subtasks) else None
            res = plan_subtask(st, x, w, others, t, cfg, hybrid, cache, uav=m.uav, next_mode=nxt)
            results.append(res)
            starts.append(t)
            if progress:
                progress(m.uav, res)
            if not res.feasible or not res.passed:
                plan.failures[m.uav] = st.label
                break
            parts.append(res.trajectory)
            x = res.trajectory.states[-1]
            t = res.trajectory.end
        plan.trajectories[m.uav] = compose_trajectories(parts) if parts else Trajectory.stationary(m.x0)
        plan.results[m.uav] = results
        plan.starts[m.uav] = starts
    return plan


def mission_formula(m: Mission, plan: FleetPlan) -> Formula:
    """Conjunction of the sub-task formulas, each anchored at its start step and
    with unbounded windows closed at the step the sub-task ended."""
    parts = []
    for st, res, s in zip(m.subtasks, plan.results[m.uav], plan.starts[m.uav]):
        if not res.feasible:
            break
        parts.append(shift(_bind_executed(st.formula, res.steps), s))
    return conj(*parts) if parts else TrueF()


def _bind_executed(f: Formula, steps: int) -> Formula:
    try:
        return bind_horizon(f, steps)
    except ValueError:
        return bind_horizon(f, horizon_of(f))


def verify_fleet(plan: FleetPlan, w: Workspace, r_safe: float = QuadParams().r_safe) -> dict[str, VerifyReport]:
    """Composed-specification and pairwise-separation check of every UAV."""
    out = {}
    uavs = [m.uav for m in plan.missions]
    for m in plan.missions:
        tr = plan.trajectories[m.uav]
        others = [plan.trajectories[u] for u in uavs if u != m.uav]
        f = mission_formula(m, plan)
        out[m.uav] = verify_trajectory(tr, f, w, others, r_safe, pad=True)
    return out


@dataclass(frozen=True)
class SweepResult:
    capacity: int
    failing_uav: str | None
    failing_subtask: str | None
    plans: tuple


def capacity_sweep(n_max: int, cfg: PlannerConfig = PlannerConfig(), builder=None, progress=None) -> SweepResult:
    """Add UAVs one at a time until some mission misses its budget."""
    from .workspace import build_rescue_workspace

    builder = builder or build_rescue_workspace
    cache = _SolveCache()
    plans = []
    for n in range(1, n_max + 1):
        w, missions = builder(n)
        plan = plan_fleet(missions, w, cfg, cache, progress)
        plans.append(plan)
        if plan.failures:
            uav = next(m.uav for m in missions if m.uav in plan.failures)
            return SweepResult(n - 1, uav, plan.failures[uav], tuple(plans))
    return SweepResult(n_max, None, None, tuple(plans))
