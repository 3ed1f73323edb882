import itertools

import pytest
from hypothesis import HealthCheck, settings, strategies as st

from mtlplan.mtl import Always, And, Atom, Eventually, Interval, Next, Not, Or, TrueF, Until

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

PROPS = ("p", "q")


def all_traces(length: int, props=PROPS):
    """Every labeling of ``length`` steps over ``props``."""
    subsets = [frozenset(c) for r in range(len(props) + 1) for c in itertools.combinations(props, r)]
    return [list(tr) for tr in itertools.product(subsets, repeat=length)]


def _interval():
    return st.tuples(st.integers(0, 2), st.integers(0, 2)).map(lambda p: Interval(p[0], p[0] + p[1]))


def formulas(max_leaves: int = 6, negations: bool = True):
    """Bounded formulas over ``p`` and ``q``; negation may sit above any operator but until."""
    leaf = st.sampled_from([Atom("p"), Atom("q"), TrueF()])

    def extend(children):
        ops = [
            st.tuples(children, children).map(lambda ab: And(ab)),
            st.tuples(children, children).map(lambda ab: Or(ab)),
            children.map(Next),
            st.tuples(_interval(), children).map(lambda a: Eventually(*a)),
            st.tuples(_interval(), children).map(lambda a: Always(*a)),
        ]
        if negations:
            ops.append(children.filter(lambda f: not isinstance(f, Until)).map(Not))
        return st.one_of(*ops)

    return st.recursive(leaf, extend, max_leaves=max_leaves)


def nnf_formulas(max_leaves: int = 6):
    """Bounded NNF formulas including until."""
    lit = st.sampled_from([Atom("p"), Atom("q"), Not(Atom("p")), Not(Atom("q")), TrueF()])

    def extend(children):
        return st.one_of(
            st.tuples(children, children).map(lambda ab: And(ab)),
            st.tuples(children, children).map(lambda ab: Or(ab)),
            children.map(Next),
            st.tuples(_interval(), children).map(lambda a: Eventually(*a)),
            st.tuples(_interval(), children).map(lambda a: Always(*a)),
            st.tuples(_interval(), children, children).map(lambda a: Until(*a)),
        )

    return st.recursive(lit, extend, max_leaves=max_leaves)


def label_sets(props=PROPS):
    return st.frozensets(st.sampled_from(props))


@pytest.fixture(scope="session")
def rescue2():
    from mtlplan.workspace import build_rescue_workspace

    return build_rescue_workspace(2)


@pytest.fixture(scope="session")
def fleet2(rescue2):
    """The two-UAV rescue plan, computed once per session."""
    from mtlplan.planner import PlannerConfig, plan_fleet

    w, missions = rescue2
    return plan_fleet(missions, w, PlannerConfig())


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
