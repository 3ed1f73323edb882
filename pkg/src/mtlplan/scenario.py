"""Scenario files: workspace, quadrotor parameters and missions in one JSON document.

Layout::

    {
      "name": "...",
      "workspace": {"bounds": ..., "regions": [...], "obstacles": [...]},
      "quad_params": {"r_safe": 0.35, ...},
      "missions": [
        {"uav": "uav1", "start": [x, y, z], "total_steps": 45,
         "subtasks": [{"label": "A-C", "formula": "F[0,5] C & G !O",
                       "mode": "Steer", "horizon": 5}, ...]}
      ]
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .dynamics import QuadParams
from .mission import Mission, SubTask
from .mtl import MTLError
from .workspace import Workspace, build_rescue_workspace, workspace_from_dict

BUILTINS = ("rescue",)


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    name: str
    workspace: Workspace
    missions: tuple[Mission, ...]
    params: QuadParams = field(default_factory=QuadParams)


def _mission_from_dict(data: dict, pi, where: str) -> Mission:
    try:
        subtasks = tuple(SubTask.from_text(s.get("label", f"s{k + 1}"), s["formula"], s["mode"], int(s["horizon"]), pi)
                         for k, s in enumerate(data["subtasks"]))
        start = tuple(float(v) for v in data["start"])
        if len(start) != 3:
            raise ScenarioError(f"{where}: start must be a 3-vector")
        return Mission(str(data["uav"]), subtasks, int(data["total_steps"]), start)
    except KeyError as exc:
        raise ScenarioError(f"{where}: missing field {exc.args[0]!r}") from None
    except MTLError as exc:
        raise ScenarioError(f"{where}: {exc}") from None


def scenario_from_dict(data: dict) -> Scenario:
    if "workspace" not in data or "missions" not in data:
        raise ScenarioError("a scenario needs 'workspace' and 'missions'")
    w = workspace_from_dict(data["workspace"])
    params = QuadParams.from_dict(data.get("quad_params", {}))
    missions = tuple(_mission_from_dict(m, w.propositions, f"mission {k}") for k, m in enumerate(data["missions"]))
    uavs = [m.uav for m in missions]
    if len(set(uavs)) != len(uavs):
        raise ScenarioError("duplicate UAV ids")
    return Scenario(str(data.get("name", "scenario")), w, missions, params)


def load_scenario(path: str | Path) -> Scenario:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: not valid JSON ({exc})") from None
    return scenario_from_dict(data)


def builtin_scenario(name: str, n_uavs: int) -> Scenario:
    if name != "rescue":
        raise ScenarioError(f"unknown builtin scenario {name!r}; available: {', '.join(BUILTINS)}")
    w, missions = build_rescue_workspace(n_uavs)
    return Scenario(f"rescue-N{n_uavs}", w, tuple(missions))


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "name": s.name,
        "workspace": s.workspace.to_dict(),
        "quad_params": {k: getattr(s.params, k) for k in s.params.__dataclass_fields__},
        "missions": [{"uav": m.uav, "start": list(m.start), "total_steps": m.total_steps,
                      "subtasks": [{"label": st.label, "formula": st.text, "mode": st.mode.value,
                                    "horizon": st.horizon} for st in m.subtasks]}
                     for m in s.missions],
    }
