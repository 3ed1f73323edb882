"""Randomized agreement check between the MILP encoding and the labeling semantics.

Positions are fixed numbers, so the MILP with the root constrained to one is
feasible exactly when the formula holds on the labeled trace. The workspace
is a line with two overlapping intervals ``P`` and ``Q``; sampled positions
keep clear of the interval ends so the ``epsilon``/``margin`` layer never
matters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .encoder import BigMConfig, encode_formula
from .milp import MilpModel
from .mtl import (Always, And, Atom, Eventually, Formula, Interval, Next, Not, Or, TrueF, Until,
                  bind_horizon, evaluate_at, horizon_of, to_string)
from .solver.bnb import solve_milp
from .workspace import Box, ConvexPolytope, Region, Workspace, label_point

LINE = Box((0.0, 0.0, 0.0), (2.0, 1.0, 1.0))
P_SPAN = (0.0, 1.2)
Q_SPAN = (0.8, 2.0)
CLEARANCE = 0.05


def line_workspace() -> Workspace:
    """Two overlapping intervals along ``x`` of a 2 m x 1 m x 1 m box."""
    regions = []
    for name, (lo, hi) in (("P", P_SPAN), ("Q", Q_SPAN)):
        regions.append(Region(name, (ConvexPolytope.box((lo, 0.0, 0.0), (hi, 1.0, 1.0), LINE),)))
    return Workspace(LINE, tuple(regions))


def random_line_positions(rng: np.random.Generator, n: int) -> np.ndarray:
    """``n`` points on the line at least ``CLEARANCE`` from every interval end."""
    ends = np.array([P_SPAN[1], Q_SPAN[0]])
    out = np.empty((n, 3))
    for k in range(n):
        while True:
            x = rng.uniform(CLEARANCE, LINE.hi[0] - CLEARANCE)
            if np.min(np.abs(ends - x)) >= CLEARANCE:
                break
        out[k] = (x, 0.5, 0.5)
    return out


def random_nnf_formula(rng: np.random.Generator, depth: int, props=("P", "Q"), max_window: int = 3) -> Formula:
    """Random NNF formula with operator nesting at most ``depth``."""
    if depth == 0 or rng.random() < 0.2:
        r = rng.random()
        if r < 0.05:
            return TrueF()
        atom = Atom(str(rng.choice(props)))
        return Not(atom) if r < 0.4 else atom
    op = rng.integers(0, 7)

    def iv():
        lo = int(rng.integers(0, max_window))
        hi = lo + int(rng.integers(0, max_window))
        return Interval(lo, hi)

    sub = lambda: random_nnf_formula(rng, depth - 1, props, max_window)
    if op == 0:
        return And((sub(), sub()))
    if op == 1:
        return Or((sub(), sub()))
    if op == 2:
        return Next(sub())
    if op == 3:
        return Eventually(iv(), sub())
    if op == 4:
        return Always(iv() if rng.random() < 0.8 else Interval(0, None), sub())
    if op == 5:
        return Until(iv(), sub(), sub())
    return Eventually(Interval(0, None), sub()) if rng.random() < 0.3 else Always(iv(), sub())


@dataclass
class AgreementReport:
    pairs: int = 0
    agree: int = 0
    satisfied: int = 0
    mismatches: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.pairs > 0 and self.agree == self.pairs


def milp_feasible(f: Formula, positions: np.ndarray, w: Workspace, cfg: BigMConfig) -> bool:
    """Feasibility of ``K_0 = 1`` with every position pinned to the given numbers."""
    model = MilpModel("check")
    ids = []
    for t, p in enumerate(positions):
        ids.append([model.add_var(f"p{t}_{k}", float(p[k]), float(p[k])) for k in range(3)])
    boxes = [(np.asarray(p, dtype=float), np.asarray(p, dtype=float)) for p in positions] if cfg.tighten else None
    encode_formula(model, f, w, ids, cfg, boxes)
    sol = solve_milp(model)
    if sol.status not in ("optimal", "infeasible"):
        raise RuntimeError(f"solver returned {sol.status} on a fixed-position model")
    return sol.status == "optimal"


def encoder_oracle_agreement(pairs: int = 500, seed: int = 0, tighten: bool = False, max_depth: int = 3,
                             max_horizon: int = 8, max_length: int = 10) -> AgreementReport:
    """Sample ``pairs`` (formula, trace) pairs and compare the two verdicts."""
    rng = np.random.default_rng(seed)
    w = line_workspace()
    cfg = BigMConfig(tighten=tighten)
    report = AgreementReport()
    while report.pairs < pairs:
        f = random_nnf_formula(rng, int(rng.integers(1, max_depth + 1)))
        h = horizon_of(f)
        if h > max_horizon:
            continue
        length = int(rng.integers(h + 1, max_length + 1))
        positions = random_line_positions(rng, length)
        labels = [label_point(w, p) for p in positions]
        truth = evaluate_at(bind_horizon(f, length - 1), labels, 0)
        got = milp_feasible(f, positions, w, cfg)
        report.pairs += 1
        report.satisfied += truth
        if got == truth:
            report.agree += 1
        else:
            report.mismatches.append((to_string(f), positions[:, 0].round(3).tolist(), truth, got))
    return report
