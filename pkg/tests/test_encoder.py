import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mtlplan.checks import encoder_oracle_agreement, line_workspace, random_line_positions
from mtlplan.dynamics import ModeId, discretize_zoh, hybrid_model
from mtlplan.encoder import (
    BigMConfig, BigMTooSmall, EncodingError, HorizonTooShort, encode_formula, encode_halfspace_indicators,
    encode_neighbor_avoidance, encode_subtask_problem, exact_reach_boxes, reach_boxes,
)
from mtlplan.milp import MilpModel
from mtlplan.mtl import Always, Atom, Eventually, Interval, Not, TrueF, Until, evaluate_at, parse_mtl
from mtlplan.solver.bnb import solve_milp
from mtlplan.solver.lpformat import export_lp_text, parse_lp_text
from mtlplan.workspace import Box, ConvexPolytope, Halfspace, Region, Workspace, label_point

from conftest import nnf_formulas

LOOSE = BigMConfig(tighten=False)
UNIT = Box((0, 0, 0), (2, 1, 1))


def unit_workspace(*regions):
    return Workspace(UNIT, tuple(regions))


def fixed_positions(model, points):
    return [[model.add_var(f"p{t}_{k}", float(p[k]), float(p[k])) for k in range(3)] for t, p in enumerate(points)]


def feasible(model):
    return solve_milp(model).status == "optimal"


def extremes(model, expr):
    """Min and max of a single-variable expression over the feasible set."""
    (vid, coef), = expr.terms.items()
    out = []
    for sign in (1.0, -1.0):
        m = model.copy()
        m.add_objective(vid, sign)
        sol = solve_milp(m)
        assert sol.status == "optimal"
        out.append(expr.value(sol.x))
    return tuple(out)


# -- indicators -----------------------------------------------------------------

def _single(a, x):
    w = unit_workspace()
    model = MilpModel()
    pos = fixed_positions(model, [(x, 0.5, 0.5)])
    (k,) = encode_halfspace_indicators(model, ConvexPolytope((Halfspace((1, 0, 0), a),)), pos, w, LOOSE)
    (vid, _), = k.terms.items()
    return model, vid


def test_indicator_on_forbids_point_outside():
    model, b = _single(1.0, 1.1)
    model.fix(b, 1.0)
    assert not feasible(model)


def test_indicator_off_forbids_point_inside():
    model, b = _single(1.0, 0.9)
    model.fix(b, 0.0)
    assert not feasible(model)


def test_indicator_unique_assignment_inside_interval():
    w = unit_workspace()
    part = ConvexPolytope((Halfspace((1, 0, 0), 1.0), Halfspace((-1, 0, 0), 0.0)))
    model = MilpModel()
    pos = fixed_positions(model, [(0.5, 0.5, 0.5)])
    (K,) = encode_halfspace_indicators(model, part, pos, w, LOOSE)
    bins = [i for i, b in enumerate(model.is_binary) if b]
    assert len(bins) == 2
    good = []
    for assignment in itertools.product((0.0, 1.0), repeat=2):
        m = model.copy()
        for vid, v in zip(bins, assignment):
            m.fix(vid, v)
        sol = solve_milp(m)
        if sol.status == "optimal":
            good.append(assignment)
            assert K.value(sol.x) == pytest.approx(1.0)
    assert good == [(1.0, 1.0)]


def test_big_m_too_small_is_detected():
    with pytest.raises(BigMTooSmall):
        _single_with(BigMConfig(M=0.1, tighten=False))


def _single_with(cfg):
    model = MilpModel()
    pos = fixed_positions(model, [(0.5, 0.5, 0.5)])
    encode_halfspace_indicators(model, ConvexPolytope((Halfspace((1, 0, 0), 1.0),)), pos, unit_workspace(), cfg)
    return model, pos


def test_big_m_config_validation():
    with pytest.raises(ValueError):
        BigMConfig(M=-1.0)
    with pytest.raises(ValueError):
        BigMConfig(epsilon=0.0)


# -- formulas -------------------------------------------------------------------

def _region(name, lo, hi):
    return Region(name, (ConvexPolytope.box((lo, 0, 0), (hi, 1, 1), UNIT),))


def test_atomic_formula_is_its_region_indicator():
    w = unit_workspace(_region("p", 0.0, 1.0))
    model = MilpModel()
    pos = fixed_positions(model, [(0.5, 0.5, 0.5)])
    root, enc = encode_formula(model, Atom("p"), w, pos, LOOSE, require=False)
    assert root.key() == enc.proposition("p", 0).key()


def test_always_with_true_leaves_forces_one():
    w = unit_workspace(_region("p", 0.0, 1.0))
    model = MilpModel()
    pos = fixed_positions(model, [(0.5, 0.5, 0.5)] * 3)
    root, _ = encode_formula(model, Always(Interval(0, 2), Atom("p")), w, pos, LOOSE, require=False)
    assert extremes(model, root) == pytest.approx((1.0, 1.0))


def test_until_hand_expansion():
    # p holds at 0 only, q at 1 only
    w = unit_workspace(_region("p", 0.0, 0.8), _region("q", 1.2, 2.0))
    model = MilpModel()
    pos = fixed_positions(model, [(0.5, 0.5, 0.5), (1.5, 0.5, 0.5)])
    root, _ = encode_formula(model, Until(Interval(0, 1), Atom("p"), Atom("q")), w, pos, LOOSE, require=False)
    assert extremes(model, root) == pytest.approx((1.0, 1.0))


def test_encoder_rejects_bad_input():
    w = unit_workspace(_region("p", 0.0, 1.0))
    model = MilpModel()
    pos = fixed_positions(model, [(0.5, 0.5, 0.5)] * 2)
    with pytest.raises(EncodingError):
        encode_formula(model, Not(Eventually(Interval(0, 1), Atom("p"))), w, pos)
    with pytest.raises(HorizonTooShort):
        encode_formula(model, Eventually(Interval(0, 3), Atom("p")), w, pos)
    with pytest.raises(EncodingError):
        encode_formula(model, Atom("zz"), w, pos)


@settings(max_examples=40)
@given(nnf_formulas(max_leaves=4), st.integers(0, 10**6), st.booleans())
def test_fixed_positions_pin_the_root(f, seed, tighten):
    """With leaves integral the root equals the truth value of the formula."""
    from mtlplan.mtl import horizon_of

    f = _rename(f)
    w = line_workspace()
    rng = np.random.default_rng(seed)
    points = random_line_positions(rng, horizon_of(f) + 2)
    model = MilpModel()
    pos = fixed_positions(model, points)
    cfg = BigMConfig(tighten=tighten)
    boxes = [(p, p) for p in points] if tighten else None
    root, _ = encode_formula(model, f, w, pos, cfg, boxes, require=False)
    truth = evaluate_at(f, [label_point(w, p) for p in points], 0)
    if root.is_const:
        assert root.const == float(truth)
    else:
        assert extremes(model, root) == pytest.approx((float(truth),) * 2)


def _rename(f):
    from mtlplan.mtl import to_string

    return parse_mtl(to_string(f).replace("p", "P").replace("q", "Q"))


def test_oracle_agreement_small_sample():
    for tighten in (False, True):
        report = encoder_oracle_agreement(pairs=60, seed=11, tighten=tighten)
        assert report.ok, report.mismatches[:3]


def test_binaries_grow_linearly_with_horizon():
    w = unit_workspace(_region("p", 0.5, 1.5))
    counts = []
    for T in (2, 4, 6):
        model = MilpModel()
        pos = [[model.add_var(f"p{t}_{k}", 0.0, 2.0 if k == 0 else 1.0) for k in range(3)] for t in range(T + 1)]
        encode_formula(model, Eventually(Interval(0, T), Atom("p")), w, pos, LOOSE)
        counts.append(model.num_binaries)
    assert counts == [2 * 3, 2 * 5, 2 * 7]


# -- sub-task problems --------------------------------------------------------------

def _mode(mid):
    return hybrid_model().modes[mid]


def test_stay_put_costs_nothing(rescue2):
    w, missions = rescue2
    x0 = missions[0].x0
    enc = encode_subtask_problem(parse_mtl("G[0,4] A", w.propositions), _mode(ModeId.HOVER), x0, 4, w)
    sol = solve_milp(enc.model)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(0.0, abs=1e-9)


def test_reach_staging_within_budget(rescue2):
    w, missions = rescue2
    x0 = missions[0].x0
    x0[2] = 0.5
    f = parse_mtl("F[0,5] C & G !O", w.propositions)
    enc = encode_subtask_problem(f, _mode(ModeId.STEER), x0, 5, w)
    sol = solve_milp(enc.model)
    assert sol.status == "optimal"
    states = enc.states(sol.x)
    labels = [label_point(w, s[:3]) for s in states]
    assert any("C" in lab for lab in labels)
    assert not any("O" in lab for lab in labels)
    # the states obey the discrete dynamics
    Ad, Bd = discretize_zoh(_mode(ModeId.STEER).A, _mode(ModeId.STEER).B)
    u = enc.inputs(sol.x)
    for t in range(5):
        assert np.allclose(states[t + 1], Ad @ states[t] + Bd @ u[t], atol=1e-7)
    assert sol.objective == pytest.approx(np.abs(u).sum(), rel=1e-6)


def test_zero_step_reach_is_infeasible(rescue2):
    w, missions = rescue2
    enc = encode_subtask_problem(parse_mtl("F[0,0] C", w.propositions), _mode(ModeId.STEER), missions[0].x0, 0, w)
    assert solve_milp(enc.model).status == "infeasible"


def test_subtask_checks_inputs(rescue2):
    w, missions = rescue2
    f = parse_mtl("F[0,5] C", w.propositions)
    with pytest.raises(HorizonTooShort):
        encode_subtask_problem(f, _mode(ModeId.STEER), missions[0].x0, 3, w)
    with pytest.raises(EncodingError):
        encode_subtask_problem(f, _mode(ModeId.STEER), np.zeros(3), 5, w)


def test_subtask_model_survives_lp_roundtrip(rescue2):
    w, missions = rescue2
    enc = encode_subtask_problem(parse_mtl("F[0,3] A_prime & G A", w.propositions), _mode(ModeId.TAKEOFF),
                                 missions[0].x0, 3, w)
    back = parse_lp_text(export_lp_text(enc.model))
    a, b = solve_milp(enc.model), solve_milp(back)
    assert a.status == b.status == "optimal"
    assert a.objective == pytest.approx(b.objective, rel=1e-9, abs=1e-12)


# -- neighbor avoidance ---------------------------------------------------------------

def test_far_neighbor_adds_nothing(rescue2):
    w, missions = rescue2
    x0 = missions[0].x0
    enc = encode_subtask_problem(parse_mtl("G[0,3] A", w.propositions), _mode(ModeId.HOVER), x0, 3, w)
    before = len(enc.model.constraints)
    stats = encode_neighbor_avoidance(enc, np.tile([9.5, 9.5, 2.5], (4, 1)), rho=2.0, r_safe=0.35)
    assert stats["binaries"] == 0 and stats["steps"] == 0
    assert len(enc.model.constraints) == before


def test_same_point_is_infeasible(rescue2):
    w, missions = rescue2
    x0 = missions[0].x0
    enc = encode_subtask_problem(TrueF(), _mode(ModeId.HOVER), x0, 1, w)
    encode_neighbor_avoidance(enc, np.tile(x0[:3], (2, 1)), rho=2.0, r_safe=0.35)
    assert solve_milp(enc.model).status == "infeasible"


def test_avoidance_keeps_separation(rescue2):
    w, missions = rescue2
    x0 = missions[0].x0.copy()
    x0[2] = 0.5
    # the neighbor creeps toward the start and ends 0.4 m away
    other = np.array([x0[:3] + [d, 0.0, 0.0] for d in np.linspace(1.0, 0.4, 7)])
    enc = encode_subtask_problem(TrueF(), _mode(ModeId.STEER), x0, 6, w, terminal=None)
    encode_neighbor_avoidance(enc, other, rho=2.0, r_safe=0.35)
    sol = solve_milp(enc.model)
    assert sol.status == "optimal"
    pos = enc.states(sol.x)[:, :3]
    for t in range(1, 7):
        assert np.max(np.abs(pos[t] - other[t])) >= 0.7 - 1e-7


def test_avoidance_checks_window(rescue2):
    w, missions = rescue2
    enc = encode_subtask_problem(TrueF(), _mode(ModeId.HOVER), missions[0].x0, 2, w)
    with pytest.raises(EncodingError):
        encode_neighbor_avoidance(enc, np.zeros((2, 3)), rho=2.0, r_safe=0.35)


# -- reach boxes -----------------------------------------------------------------------

@settings(max_examples=30)
@given(st.integers(0, 10**6), st.sampled_from([ModeId.STEER, ModeId.TAKEOFF, ModeId.HOVER]))
def test_reach_boxes_contain_simulated_positions(seed, mid):
    """Random admissible input sequences never leave the boxes."""
    rng = np.random.default_rng(seed)
    mode = _mode(mid)
    Ad, Bd = discretize_zoh(mode.A, mode.B)
    bounds = Box((0, 0, 0), (10, 10, 3))
    x0 = np.zeros(10)
    x0[:3] = (5.0, 5.0, 1.0)
    T = 5
    exact = exact_reach_boxes(mode, Ad, Bd, x0, T, bounds)
    loose = reach_boxes(mode, Ad, Bd, x0, T, bounds)
    for (elo, ehi), (llo, lhi) in zip(exact, loose):
        assert np.all(elo >= llo - 1e-9) and np.all(ehi <= lhi + 1e-9)
    x = x0.copy()
    step_lo, step_hi = mode.x_lo[3:6] * 0.2, mode.x_hi[3:6] * 0.2
    for t in range(1, T + 1):
        # shrink the input until the next state respects the mode bounds
        u = rng.uniform(mode.u_lo, mode.u_hi)
        for _ in range(40):
            nxt = Ad @ x + Bd @ u
            moved = nxt[:3] - x[:3]
            ok = (np.all(nxt >= mode.x_lo - 1e-12) and np.all(nxt <= mode.x_hi + 1e-12)
                  and bounds.contains(nxt[:3])
                  and (t == 1 or (np.all(moved >= step_lo - 1e-12) and np.all(moved <= step_hi + 1e-12))))
            if ok:
                break
            u = u * 0.5
        else:
            return
        x = nxt
        lo, hi = exact[t]
        assert np.all(x[:3] >= lo - 1e-7) and np.all(x[:3] <= hi + 1e-7)
