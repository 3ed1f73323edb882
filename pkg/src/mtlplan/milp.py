"""Mixed-integer linear model container shared by the encoder and the solvers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

LE, EQ, GE = "<=", "==", ">="
_SENSES = {"<=": LE, "<": LE, "==": EQ, "=": EQ, ">=": GE, ">": GE}


@dataclass(frozen=True)
class MilpVar:
    id: int
    name: str
    kind: str  # "continuous" | "binary"
    lower: float
    upper: float


@dataclass(frozen=True)
class LinConstraint:
    index: tuple[int, ...]
    coef: tuple[float, ...]
    sense: str
    rhs: float
    name: str = ""


class MilpModel:
    """Minimize ``c @ x`` subject to linear rows and variable bounds.

    Variables are addressed by integer id. ``meta`` maps ids of state and
    input variables to ``(uav, t, component)`` tuples; ``info`` carries free
    form bookkeeping from the encoder.
    """

    def __init__(self, name: str = "model"):
        self.name = name
        self._names: list[str] = []
        self._name_set: set[str] = set()
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.is_binary: list[bool] = []
        self.constraints: list[LinConstraint] = []
        self.objective: dict[int, float] = {}
        self.obj_offset = 0.0
        self.meta: dict[int, tuple] = {}
        self.info: dict = {}

    # -- variables -------------------------------------------------------
    @property
    def num_vars(self) -> int:
        return len(self._names)

    @property
    def num_binaries(self) -> int:
        return sum(self.is_binary)

    def add_var(self, name: str | None = None, lb: float = 0.0, ub: float = math.inf,
                binary: bool = False) -> int:
        vid = len(self._names)
        if name is None:
            name = f"v{vid}"
        if name in self._name_set:
            raise ValueError(f"duplicate variable name {name!r}")
        if binary:
            lb, ub = max(0.0, lb), min(1.0, ub)
        if lb > ub:
            raise ValueError(f"variable {name!r} has empty bounds [{lb}, {ub}]")
        self._names.append(name)
        self._name_set.add(name)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.is_binary.append(bool(binary))
        return vid

    def var(self, vid: int) -> MilpVar:
        return MilpVar(vid, self._names[vid], "binary" if self.is_binary[vid] else "continuous",
                       self.lb[vid], self.ub[vid])

    def name_of(self, vid: int) -> str:
        return self._names[vid]

    @property
    def names(self) -> list[str]:
        return list(self._names)

    def fix(self, vid: int, value: float) -> None:
        self.lb[vid] = self.ub[vid] = float(value)

    def set_bounds(self, vid: int, lb: float, ub: float) -> None:
        if lb > ub:
            raise ValueError(f"empty bounds for {self._names[vid]!r}")
        self.lb[vid], self.ub[vid] = float(lb), float(ub)

    # -- rows --------------------------------------------------------------
    def add_constr(self, terms: Mapping[int, float] | Iterable[tuple[int, float]], sense: str,
                   rhs: float, name: str = "") -> int:
        if sense not in _SENSES:
            raise ValueError(f"unknown sense {sense!r}")
        merged: dict[int, float] = {}
        items = terms.items() if isinstance(terms, Mapping) else terms
        for vid, c in items:
            if not 0 <= vid < self.num_vars:
                raise KeyError(f"constraint {name!r} references undeclared variable {vid}")
            merged[vid] = merged.get(vid, 0.0) + float(c)
        merged = {k: v for k, v in merged.items() if v != 0.0}
        if not merged:
            raise ValueError(f"constraint {name!r} has no nonzero coefficient")
        idx = tuple(sorted(merged))
        row = LinConstraint(idx, tuple(merged[i] for i in idx), _SENSES[sense], float(rhs), name)
        self.constraints.append(row)
        return len(self.constraints) - 1

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)

    def add_objective(self, vid: int, coef: float) -> None:
        if not 0 <= vid < self.num_vars:
            raise KeyError(f"objective references undeclared variable {vid}")
        self.objective[vid] = self.objective.get(vid, 0.0) + float(coef)

    # -- dense export ------------------------------------------------------
    def arrays(self):
        """``(c, A, senses, b, lb, ub, binary_mask)`` as numpy arrays."""
        n, m = self.num_vars, self.num_constraints
        c = np.zeros(n)
        for vid, coef in self.objective.items():
            c[vid] = coef
        A = np.zeros((m, n))
        b = np.empty(m)
        senses = []
        for i, row in enumerate(self.constraints):
            A[i, list(row.index)] = row.coef
            b[i] = row.rhs
            senses.append(row.sense)
        return (c, A, senses, b, np.array(self.lb, dtype=float), np.array(self.ub, dtype=float),
                np.array(self.is_binary, dtype=bool))

    def evaluate(self, x) -> float:
        return self.obj_offset + sum(c * x[v] for v, c in self.objective.items())

    def violation(self, x) -> float:
        """Largest bound or row violation of assignment ``x``."""
        x = np.asarray(x, dtype=float)
        worst = float(np.max(np.maximum(np.array(self.lb) - x, x - np.array(self.ub)), initial=0.0))
        for row in self.constraints:
            act = float(np.dot(row.coef, x[list(row.index)]))
            if row.sense == LE:
                worst = max(worst, act - row.rhs)
            elif row.sense == GE:
                worst = max(worst, row.rhs - act)
            else:
                worst = max(worst, abs(act - row.rhs))
        return worst

    def copy(self) -> "MilpModel":
        other = MilpModel(self.name)
        other._names = list(self._names)
        other._name_set = set(self._name_set)
        other.lb, other.ub = list(self.lb), list(self.ub)
        other.is_binary = list(self.is_binary)
        other.constraints = list(self.constraints)
        other.objective = dict(self.objective)
        other.obj_offset = self.obj_offset
        other.meta = dict(self.meta)
        other.info = dict(self.info)
        return other

    def relaxed(self) -> "MilpModel":
        other = self.copy()
        other.is_binary = [False] * self.num_vars
        return other


@dataclass
class LpSolution:
    status: str  # optimal | infeasible | unbounded | iteration-limit | time-limit | budget-infeasible
    objective: float = math.nan
    x: np.ndarray | None = None
    certificate: str = ""
    iterations: int = 0
    nodes: int = 0
    bound: float = math.nan
    duals: np.ndarray | None = None
    stats: dict = field(default_factory=dict)
    basis: tuple | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.x is not None and self.status in ("optimal", "time-limit")
