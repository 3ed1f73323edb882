"""Acceptance gate: one test per criterion, each recording a single pass/fail line.

The lines are printed in the terminal summary (see ``conftest.py``) and, when
run with ``-s``, as each test finishes.
"""

import csv
import time

import numpy as np

from mtlplan.checks import encoder_oracle_agreement
from mtlplan.cli import main
from mtlplan.dynamics import ModeId, QuadParams, discretize_zoh, hover_matrices, hybrid_model, transition_allowed
from mtlplan.mission import Mission
from mtlplan.planner import (
    PlannerConfig, capacity_sweep, mission_formula, min_separation, validate_decomposition, verify_fleet,
    verify_trajectory,
)
from mtlplan.solver.bnb import solve_milp
from mtlplan.solver.simplex import solve_lp
from mtlplan.workspace import label_point

from reference import REFERENCES, brute_force, oracle, random_milp

RESULTS: dict[int, str] = {}


def record(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})"
    RESULTS[n] = line
    print(line)
    assert ok, line


def test_criterion_1_encoder_oracle_agreement():
    t0 = time.perf_counter()
    reports = {tighten: encoder_oracle_agreement(pairs=500, seed=2024, tighten=tighten) for tighten in (False, True)}
    elapsed = time.perf_counter() - t0
    ok = all(r.ok and r.pairs >= 500 for r in reports.values()) and elapsed < 120
    detail = ", ".join(f"tighten={k}: {r.agree}/{r.pairs}" for k, r in reports.items())
    record(1, ok, f"{detail}; {elapsed:.1f}s")


def test_criterion_2_two_uav_rescue(tmp_path):
    code = main(["plan", "--builtin", "rescue", "-N", "2", "--out", str(tmp_path)])
    with open(tmp_path / "timings.csv", newline="") as fh:
        timings = [float(r["seconds"]) for r in csv.DictReader(fh)]
    report = (tmp_path / "report.txt").read_text()
    lines = report.splitlines()
    start = next(i for i, ln in enumerate(lines) if ln.startswith("---")) + 1
    rows = [ln for ln in lines[start:] if ln.startswith("uav")]
    ok = (code == 0 and len(rows) == 12 and all(r.endswith("pass") for r in rows)
          and len(timings) == 12 and max(timings) < 60.0)
    record(2, ok, f"exit {code}, {sum(r.endswith('pass') for r in rows)}/12 sub-tasks within bounds, "
                  f"slowest sub-task {max(timings):.1f}s")


def test_criterion_3_safety(rescue2, fleet2):
    w, missions = rescue2
    r_safe = QuadParams().r_safe
    sep = min_separation(list(fleet2.trajectories.values()))
    pairwise = [verify_trajectory(fleet2.trajectories[m.uav], None, w,
                                  [fleet2.trajectories[o.uav] for o in missions if o is not m], r_safe)
                for m in missions]
    in_obstacle = sum("O" in label_point(w, p) for tr in fleet2.trajectories.values() for p in tr.positions)
    ok = fleet2.success and sep >= 2 * r_safe - 1e-9 and all(pairwise) and in_obstacle == 0
    record(3, ok, f"min separation {sep:.3f} >= {2 * r_safe}, {in_obstacle} states in O")


def test_criterion_4_composition(rescue2, fleet2):
    w, missions = rescue2
    reports = verify_fleet(fleet2, w)
    per_uav = [verify_trajectory(fleet2.trajectories[m.uav], mission_formula(m, fleet2), w, pad=True)
               for m in missions]
    accepted = all(validate_decomposition(m) for m in missions)
    m = missions[0]
    mutated = Mission(m.uav, m.subtasks, sum(st.horizon for st in m.subtasks) - 1, m.start)
    rejected = not validate_decomposition(mutated)
    ok = fleet2.success and all(reports.values()) and all(per_uav) and accepted and rejected
    record(4, ok, f"composed specs hold for {sum(map(bool, per_uav))}/{len(missions)} UAVs, "
                  f"builtin accepted={accepted}, mutated rejected={rejected}")


def test_criterion_5_capacity():
    res = capacity_sweep(10, PlannerConfig())
    ok = (res.failing_uav is not None and 3 <= res.capacity <= 10
          and res.failing_subtask is not None and res.failing_subtask.startswith("C-"))
    record(5, ok, f"N* = {res.capacity}, failure at N={res.capacity + 1}: {res.failing_uav} {res.failing_subtask}")


def test_criterion_6_solver():
    bad = []
    for ref in REFERENCES:
        status, value = oracle(ref)
        model = ref.build()
        sol = solve_milp(model) if model.num_binaries else solve_lp(model)
        if sol.status != status or (status == "optimal" and abs(sol.objective - value) > 1e-6 * max(1, abs(value))):
            bad.append(ref.name)
    rng = np.random.default_rng(6)
    brute_bad = 0
    for _ in range(40):
        model = random_milp(rng, int(rng.integers(1, 13)), int(rng.integers(0, 4)), int(rng.integers(1, 6)))
        status, value = brute_force(model)
        sol = solve_milp(model)
        if sol.status != status or (status == "optimal" and abs(sol.objective - value) > 1e-6 * max(1, abs(value))):
            brute_bad += 1
    model = random_milp(np.random.default_rng(4), 12, 3, 6)
    nodes = {solve_milp(model).nodes for _ in range(3)}
    ok = len(REFERENCES) >= 20 and not bad and brute_bad == 0 and len(nodes) == 1 and min(nodes) > 1
    record(6, ok, f"{len(REFERENCES) - len(bad)}/{len(REFERENCES)} references, brute force mismatches {brute_bad}/40, "
                  f"node counts {sorted(nodes)}")


def test_criterion_7_dynamics():
    A, B = hover_matrices(QuadParams())
    nil = not np.linalg.matrix_power(A, 4).any()
    A1, B1 = discretize_zoh(A, B, 0.1)
    A2, B2 = discretize_zoh(A, B, 0.2)
    err = max(np.max(np.abs(A1 @ A1 - A2)), np.max(np.abs(A1 @ B1 + B1 - B2)))
    rejected = not transition_allowed(hybrid_model(), ModeId.LAND, ModeId.HOVER)
    ok = nil and err <= 1e-12 and rejected
    record(7, ok, f"A^4 = 0: {nil}, semigroup error {err:.1e}, Land->Hover rejected: {rejected}")
