"""Sub-tasks, missions and timed trajectories."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .dynamics import DT, NU, NX, ModeId
from .mtl import Formula, horizon_of, is_nnf, parse_mtl, to_nnf, to_string


@dataclass(frozen=True)
class SubTask:
    """One formula paired with one dynamical mode and a step budget."""

    label: str
    formula: Formula
    mode: ModeId
    horizon: int

    def __post_init__(self):
        object.__setattr__(self, "mode", ModeId(self.mode))
        if not is_nnf(self.formula):
            object.__setattr__(self, "formula", to_nnf(self.formula))
        if self.horizon < horizon_of(self.formula):
            raise ValueError(f"sub-task {self.label!r}: budget {self.horizon} is shorter than the formula horizon "
                             f"{horizon_of(self.formula)}")

    @classmethod
    def from_text(cls, label: str, text: str, mode: str | ModeId, horizon: int,
                  pi: Iterable[str] | None = None) -> "SubTask":
        mode = mode if isinstance(mode, ModeId) else ModeId.parse(mode)
        return cls(label, to_nnf(parse_mtl(text, pi)), mode, int(horizon))

    @property
    def text(self) -> str:
        return to_string(self.formula)


@dataclass(frozen=True)
class Mission:
    uav: str
    subtasks: tuple[SubTask, ...]
    total_steps: int
    start: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "subtasks", tuple(self.subtasks))
        object.__setattr__(self, "start", tuple(float(v) for v in self.start))

    @property
    def x0(self) -> np.ndarray:
        x = np.zeros(NX)
        x[:3] = self.start
        return x


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States ``x(start) .. x(start+n)`` with inputs and the mode of each step.

    ``modes[t]`` is the mode driving the step from ``t`` to ``t+1``.
    """

    states: np.ndarray
    inputs: np.ndarray
    modes: tuple[ModeId, ...]
    start: int = 0
    dt: float = DT
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        states = np.atleast_2d(np.asarray(self.states, dtype=float))
        inputs = np.asarray(self.inputs, dtype=float).reshape(-1, NU)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "modes", tuple(ModeId(m) for m in self.modes))
        if states.shape[1] != NX:
            raise ValueError(f"states must have {NX} columns")
        if inputs.shape[0] != states.shape[0] - 1 or len(self.modes) != inputs.shape[0]:
            raise ValueError("a trajectory needs one input and one mode per step")

    @property
    def steps(self) -> int:
        return self.inputs.shape[0]

    @property
    def end(self) -> int:
        return self.start + self.steps

    @property
    def positions(self) -> np.ndarray:
        return self.states[:, :3]

    def position_at(self, t_abs: int) -> np.ndarray:
        """Position at absolute step ``t_abs``; held constant outside the trajectory."""
        k = min(max(t_abs - self.start, 0), self.steps)
        return self.states[k, :3]

    def mode_at(self, k: int) -> ModeId:
        if not self.modes:
            return ModeId.HOVER
        return self.modes[min(k, self.steps - 1)]

    @classmethod
    def stationary(cls, x0, start: int = 0) -> "Trajectory":
        return cls(np.asarray(x0, dtype=float)[None, :], np.zeros((0, NU)), (), start)
