"""Best-bound branch and bound over binary variables."""

from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..milp import LpSolution, MilpModel
from .simplex import DEFAULT_PIVOT_LIMIT, WarmLp, simplex

INT_TOL = 1e-7
DEFAULT_GAP = 1e-6
DEFAULT_TIME_BUDGET = 60.0


class BoundViolation(AssertionError):
    pass


@dataclass
class BnBNode:
    """Local binary bounds as two sorted tuples of fixed-to-0 / fixed-to-1 ids."""

    zeros: tuple[int, ...]
    ones: tuple[int, ...]
    bound: float
    depth: int
    basis: tuple | None = field(default=None, compare=False, repr=False)


def _gap(incumbent: float, bound: float) -> float:
    if incumbent == math.inf:
        return math.inf
    return max(incumbent - bound, 0.0) / max(abs(incumbent), 1e-10)


def solve_milp(model: MilpModel, gap: float = DEFAULT_GAP, time_budget: float = DEFAULT_TIME_BUDGET,
               pivot_limit: int = DEFAULT_PIVOT_LIMIT, node_limit: int | None = None) -> LpSolution:
    """Minimize ``model`` with binaries integral.

    Branches on the most fractional binary (lowest id on ties) and expands the
    open node with the smallest relaxation bound; equal bounds go deeper
    first, then oldest first. Status is ``optimal`` (gap closed), ``infeasible``
    (proven), ``time-limit`` (incumbent returned, gap open) or
    ``budget-infeasible`` (budget spent with no incumbent).
    """
    c, A, senses, b, lb0, ub0, is_bin = model.arrays()
    bins = np.flatnonzero(is_bin)
    start = time.perf_counter()
    counter = itertools.count()
    stats = {"lp_solves": 0, "pivots": 0, "max_depth": 0}

    warm = WarmLp(c, A, senses, b)
    root_basis = warm.initial_basis(lb0, ub0) if A.shape[0] else None

    def relax(node: BnBNode) -> LpSolution:
        lb = lb0.copy()
        ub = ub0.copy()
        if node.zeros:
            ub[list(node.zeros)] = 0.0
        if node.ones:
            lb[list(node.ones)] = 1.0
        if root_basis is None:
            sol = simplex(c, A, senses, b, lb, ub, pivot_limit)
        else:
            sol, basis = warm.solve(lb, ub, node.basis or root_basis, pivot_limit)
            sol.basis = basis
        stats["lp_solves"] += 1
        stats["pivots"] += sol.iterations
        return sol

    incumbent = math.inf
    best_x = None
    root = BnBNode((), (), -math.inf, 0)
    heap = [(-math.inf, 0, next(counter), root)]
    nodes = 0
    timed_out = False
    lp_limit_hit = False
    global_bound = -math.inf

    while heap:
        bound, _, _, node = heap[0]
        global_bound = bound
        if _gap(incumbent, bound) <= gap:
            break
        if time.perf_counter() - start > time_budget or (node_limit is not None and nodes >= node_limit):
            timed_out = True
            break
        heapq.heappop(heap)
        nodes += 1
        sol = relax(node)
        if sol.status == "iteration-limit":
            lp_limit_hit = True
            continue
        if sol.status == "unbounded":
            return LpSolution("unbounded", certificate="relaxation unbounded" + (" at root" if node.depth == 0 else ""),
                              nodes=nodes, stats=stats)
        if sol.status != "optimal":
            continue
        value = sol.objective
        scale = 1e-6 * (1.0 + abs(value))
        if value < node.bound - scale:
            raise BoundViolation(f"child relaxation {value} below parent bound {node.bound}")
        if value >= incumbent - 1e-12 * (1.0 + abs(incumbent)):
            continue
        xb = sol.x[bins]
        frac = np.abs(xb - np.round(xb))
        if bins.size == 0 or frac.max() <= INT_TOL:
            polished = _polish(node, sol, bins, relax)
            if polished is not None and polished.objective < incumbent:
                incumbent = polished.objective
                best_x = polished.x
            elif polished is None:
                _branch(heap, counter, node, value, bins, frac, xb, force=True, basis=sol.basis)
            continue
        _branch(heap, counter, node, value, bins, frac, xb, basis=sol.basis)
        stats["max_depth"] = max(stats["max_depth"], node.depth + 1)

    if not heap:
        global_bound = incumbent
    stats["elapsed"] = time.perf_counter() - start
    stats["open_nodes"] = len(heap)
    offset = model.obj_offset
    if best_x is None:
        if timed_out or lp_limit_hit:
            return LpSolution("budget-infeasible", nodes=nodes, stats=stats,
                              certificate="budget exhausted before any integral solution")
        return LpSolution("infeasible", nodes=nodes, stats=stats,
                          certificate=f"search tree exhausted after {nodes} nodes")
    status = "time-limit" if timed_out and _gap(incumbent, global_bound) > gap else "optimal"
    return LpSolution(status, incumbent + offset, best_x, nodes=nodes, stats=stats,
                      bound=min(global_bound, incumbent) + offset,
                      certificate=f"gap {_gap(incumbent, global_bound):.2e}")


def _branch(heap, counter, node: BnBNode, value: float, bins, frac, xb, force: bool = False, basis=None):
    if force:
        free = [i for i in range(bins.size) if bins[i] not in node.zeros and bins[i] not in node.ones]
        if not free:
            return
        k = free[0]
    else:
        # most fractional; argmax returns the lowest id on ties
        k = int(np.argmax(frac))
    var = int(bins[k])
    down = BnBNode(tuple(sorted(node.zeros + (var,))), node.ones, value, node.depth + 1, basis)
    up = BnBNode(node.zeros, tuple(sorted(node.ones + (var,))), value, node.depth + 1, basis)
    # the child on the side the relaxation leans to is expanded first on ties
    first, second = (up, down) if xb[k] >= 0.5 else (down, up)
    for child in (first, second):
        heapq.heappush(heap, (value, -child.depth, next(counter), child))


def _polish(node: BnBNode, sol: LpSolution, bins, relax) -> LpSolution | None:
    """Re-solve with every binary fixed to its rounded value."""
    rounded = np.round(sol.x[bins])
    if np.all(sol.x[bins] == rounded):
        return sol
    zeros = tuple(int(v) for v, r in zip(bins, rounded) if r == 0.0)
    ones = tuple(int(v) for v, r in zip(bins, rounded) if r == 1.0)
    fixed = relax(BnBNode(zeros, ones, sol.objective, node.depth, sol.basis))
    return fixed if fixed.status == "optimal" else None
