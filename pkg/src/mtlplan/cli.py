"""Command-line entry point: ``mtlplan plan | check-trace | export-lp | prop-suite``."""

from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .encoder import BigMConfig
from .mtl import MTLError, bind_horizon, first_violation, horizon_of, parse_mtl, to_nnf, to_string
from .planner import (FleetPlan, PlannerConfig, capacity_sweep, min_separation, plan_fleet, verify_fleet)
from .scenario import Scenario, ScenarioError, builtin_scenario, load_scenario
from .solver.simplex import DEFAULT_PIVOT_LIMIT
from .workspace import WorkspaceError, label_point

CSV_HEADER = ("uav", "t", "x", "y", "z", "mode")
EXIT_OK, EXIT_FAILURES, EXIT_ERROR = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class ReportRow:
    uav: str
    label: str
    formula: str
    mode: str
    seconds: float
    steps: int | None
    bound: int
    waits: int

    @property
    def passed(self) -> bool:
        return self.steps is not None and self.steps <= self.bound


@dataclass
class RunReport:
    scenario: str
    rows: list = field(default_factory=list)
    failures: dict = field(default_factory=dict)
    min_separation: float = float("inf")
    verified: bool = True
    config: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows) and not self.failures and self.verified

    def table(self, times: bool = True) -> str:
        head = ["UAV", "Sub-task", "Formula", "Mode"] + (["Time (s)"] if times else []) + \
            ["Execution (steps)", "Bound", "Waits", "Pass"]
        body = []
        for r in self.rows:
            steps = "-" if r.steps is None else str(r.steps)
            cells = [r.uav, r.label, r.formula, r.mode] + ([f"{r.seconds:.2f}"] if times else []) + \
                [f"{steps} <= {r.bound}" if r.passed else f"{steps} > {r.bound}" if r.steps is not None else "-",
                 str(r.bound), str(r.waits), "pass" if r.passed else "FAIL"]
            body.append(cells)
        widths = [max(len(h), *(len(b[k]) for b in body)) if body else len(h) for k, h in enumerate(head)]
        line = lambda cells: "  ".join(c.ljust(wd) for c, wd in zip(cells, widths)).rstrip()
        out = [f"scenario: {self.scenario}"]
        out += [f"{k}: {v}" for k, v in self.config.items()]
        out += [line(head), line(["-" * wd for wd in widths])]
        out += [line(b) for b in body]
        sep = "n/a" if self.min_separation == float("inf") else f"{self.min_separation:.4f}"
        out.append(f"minimum separation: {sep}")
        out.append(f"semantic check: {'pass' if self.verified else 'FAIL'}")
        for uav, label in self.failures.items():
            out.append(f"failure: {uav} at sub-task {label}")
        out.append(f"summary: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(out) + "\n"


def build_report(s: Scenario, plan: FleetPlan, config: dict) -> RunReport:
    rep = RunReport(s.name, config=config)
    for m in s.missions:
        for st, res in zip(m.subtasks, plan.results.get(m.uav, [])):
            rep.rows.append(ReportRow(m.uav, st.label, st.text, st.mode.value, res.solve_seconds,
                                      res.execution_steps if res.feasible else None, st.horizon, res.waits))
    rep.failures = dict(plan.failures)
    rep.min_separation = min_separation([plan.trajectories[m.uav] for m in s.missions])
    checks = verify_fleet(plan, s.workspace, s.params.r_safe)
    rep.verified = all(bool(v) for v in checks.values())
    return rep


def trajectories_csv(s: Scenario, plan: FleetPlan) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(CSV_HEADER)
    for m in s.missions:
        tr = plan.trajectories[m.uav]
        for k in range(tr.steps + 1):
            x, y, z = tr.states[k, :3]
            wr.writerow([m.uav, tr.start + k, f"{x:.9f}", f"{y:.9f}", f"{z:.9f}", tr.mode_at(k).value])
    return buf.getvalue()


def read_trace_csv(path: str | Path) -> dict[str, list[tuple[int, np.ndarray]]]:
    """Rows grouped by UAV; raises UsageError on any schema problem."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise UsageError(f"{path}: expected header {','.join(CSV_HEADER)}")
    out: dict[str, list] = {}
    for n, row in enumerate(rows[1:], start=2):
        if len(row) != len(CSV_HEADER):
            raise UsageError(f"{path}:{n}: expected {len(CSV_HEADER)} fields, got {len(row)}")
        try:
            t = int(row[1])
            p = np.array([float(v) for v in row[2:5]])
        except ValueError:
            raise UsageError(f"{path}:{n}: malformed number") from None
        seq = out.setdefault(row[0], [])
        if seq and t != seq[-1][0] + 1:
            raise UsageError(f"{path}:{n}: time {t} does not follow {seq[-1][0]}")
        seq.append((t, p))
    if not out:
        raise UsageError(f"{path}: no trajectory rows")
    return out


# -- commands -------------------------------------------------------------------

def _scenario(args) -> Scenario:
    if bool(args.scenario) == bool(args.builtin):
        raise UsageError("give exactly one of --scenario FILE or --builtin NAME")
    if args.scenario:
        return load_scenario(args.scenario)
    return builtin_scenario(args.builtin, args.N)


def _config(args) -> PlannerConfig:
    return PlannerConfig(gap=args.gap, time_budget=args.time_budget, pivot_limit=args.pivot_limit,
                         bigm=BigMConfig(margin=1e-5), export_lp_dir=getattr(args, "export_lp", None))


def _echo(args) -> dict:
    return {"N": args.N, "seed": args.seed, "gap": args.gap, "time budget (s)": args.time_budget,
            "pivot limit": args.pivot_limit}


def _write_lps(plan: FleetPlan, s: Scenario, out: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for m in s.missions:
        for k, res in enumerate(plan.results.get(m.uav, []), start=1):
            for j, (tag, text) in enumerate(res.lp_texts):
                path = out / f"{tag}_{j}.lp" if len(res.lp_texts) > 1 else out / f"{tag}.lp"
                path.write_text(text)
                written.append(path)
    return written


def cmd_plan(args) -> int:
    if args.capacity_sweep:
        return _sweep(args)
    s = _scenario(args)
    cfg = replace(_config(args), params=s.params)
    log = (lambda uav, r: print(f"  {uav} {r.label}: {r.status} ({r.solve_seconds:.2f}s)", file=sys.stderr)) \
        if args.verbose else None
    plan = plan_fleet(list(s.missions), s.workspace, cfg, progress=log)
    report = build_report(s, plan, _echo(args))
    sys.stdout.write(report.table(times=True))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "trajectories.csv").write_text(trajectories_csv(s, plan))
        (out / "report.txt").write_text(report.table(times=False))
        (out / "timings.csv").write_text("uav,subtask,seconds\n" + "".join(
            f"{r.uav},{r.label},{r.seconds:.3f}\n" for r in report.rows))
    if args.export_lp:
        _write_lps(plan, s, Path(args.export_lp))
    return EXIT_OK if report.passed else EXIT_FAILURES


def _sweep(args) -> int:
    if not args.builtin:
        raise UsageError("--capacity-sweep works on a builtin scenario")
    cfg = _config(args)
    log = (lambda uav, r: print(f"  {uav} {r.label}: {r.status} ({r.solve_seconds:.2f}s)", file=sys.stderr)) \
        if args.verbose else None
    res = capacity_sweep(args.N, cfg, builder=lambda n: _builder(args.builtin, n), progress=log)
    for n, plan in enumerate(res.plans, start=1):
        verdict = "feasible" if plan.success else "FAIL " + ", ".join(f"{u} at {l}" for u, l in plan.failures.items())
        print(f"N={n}: {verdict}")
    if res.failing_uav is None:
        print(f"all fleets up to N={args.N} feasible; no capacity limit found within the sweep")
        return EXIT_FAILURES
    print(f"largest feasible N: {res.capacity}")
    print(f"first failure at N={res.capacity + 1}: {res.failing_uav} sub-task {res.failing_subtask}")
    return EXIT_OK


def _builder(name: str, n: int):
    s = builtin_scenario(name, n)
    return s.workspace, list(s.missions)


def cmd_export_lp(args) -> int:
    if not args.out:
        raise UsageError("export-lp needs --out DIR")
    s = _scenario(args)
    cfg = replace(_config(args), params=s.params, export_lp_dir=args.out)
    plan = plan_fleet(list(s.missions), s.workspace, cfg)
    for path in _write_lps(plan, s, Path(args.out)):
        print(path)
    return EXIT_OK if plan.success else EXIT_FAILURES


def cmd_check_trace(args) -> int:
    s = _scenario(args)
    traces = read_trace_csv(args.csv)
    uav = args.uav or next(iter(traces))
    if uav not in traces:
        raise UsageError(f"no rows for UAV {uav!r}")
    rows = traces[uav]
    try:
        f = to_nnf(parse_mtl(args.formula, s.workspace.propositions))
    except MTLError as exc:
        raise UsageError(f"formula: {exc}") from None
    try:
        labels = [label_point(s.workspace, p) for _, p in rows]
    except WorkspaceError as exc:
        raise UsageError(str(exc)) from None
    n = len(labels) - 1
    need = horizon_of(f)
    if need > n:
        labels += [labels[-1]] * (need - n)
    g = bind_horizon(f, max(n, need))
    bad = first_violation(g, labels, 0)
    t0 = rows[0][0]
    if bad is None:
        print(f"pass: {uav} satisfies {to_string(f)}")
        return EXIT_OK
    print(f"fail: {uav} violates {to_string(f)}; first violation at t={t0 + bad}")
    return EXIT_FAILURES


def cmd_prop_suite(args) -> int:
    from .checks import encoder_oracle_agreement

    ok = True
    for tighten in (False, True):
        rep = encoder_oracle_agreement(args.pairs, args.seed, tighten)
        status = "pass" if rep.ok else "FAIL"
        print(f"encoder/semantics agreement (tighten={tighten}): {rep.agree}/{rep.pairs} "
              f"({rep.satisfied} satisfied) {status}")
        for m in rep.mismatches[:5]:
            print(f"  mismatch: {m}")
        ok &= rep.ok
    return EXIT_OK if ok else EXIT_FAILURES


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mtlplan", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, solver=True):
        p.add_argument("--scenario", metavar="FILE")
        p.add_argument("--builtin", metavar="NAME")
        p.add_argument("-N", type=int, default=2, help="number of UAVs for builtin scenarios")
        p.add_argument("--seed", type=int, default=0)
        if solver:
            p.add_argument("--gap", type=float, default=1e-6)
            p.add_argument("--time-budget", type=float, default=60.0, help="seconds per sub-task")
            p.add_argument("--pivot-limit", type=int, default=DEFAULT_PIVOT_LIMIT)
            p.add_argument("--out", metavar="DIR")
            p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("plan", help="plan a scenario and report per-sub-task results")
    common(p)
    p.add_argument("--export-lp", metavar="DIR")
    p.add_argument("--capacity-sweep", action="store_true", help="add UAVs one at a time up to N")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("export-lp", help="write the solved sub-task MILPs as LP files")
    common(p)
    p.set_defaults(func=cmd_export_lp, export_lp=None)

    p = sub.add_parser("check-trace", help="check a trajectory CSV against a formula")
    common(p, solver=False)
    p.add_argument("--csv", required=True)
    p.add_argument("--formula", required=True)
    p.add_argument("--uav")
    p.set_defaults(func=cmd_check_trace)

    p = sub.add_parser("prop-suite", help="random encoder/semantics agreement check")
    p.add_argument("--pairs", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_prop_suite)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    try:
        return args.func(args)
    except (UsageError, ScenarioError, WorkspaceError, MTLError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
