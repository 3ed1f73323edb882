"""Bounded 3D workspaces made of labeled polytopic regions."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .mtl import PRIME_SUFFIX

TOL = 1e-9


class WorkspaceError(ValueError):
    pass


@dataclass(frozen=True)
class Halfspace:
    """The set ``{x : h . x <= a}``."""

    h: tuple[float, float, float]
    a: float

    def __post_init__(self):
        h = tuple(float(v) for v in self.h)
        if len(h) != 3:
            raise WorkspaceError(f"halfspace normal must have 3 entries, got {len(h)}")
        if not any(h):
            raise WorkspaceError("halfspace normal must be nonzero")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "a", float(self.a))

    def value(self, x) -> float:
        return self.h[0] * x[0] + self.h[1] * x[1] + self.h[2] * x[2] - self.a

    def contains(self, x, tol: float = TOL) -> bool:
        return self.value(x) <= tol

    def range_over(self, lo, hi) -> tuple[float, float]:
        """Min and max of ``h . x - a`` over the box ``[lo, hi]``."""
        h = np.asarray(self.h)
        lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        vmin = float(np.sum(np.where(h > 0, h * lo, h * hi))) - self.a
        vmax = float(np.sum(np.where(h > 0, h * hi, h * lo))) - self.a
        return vmin, vmax


@dataclass(frozen=True)
class Box:
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != 3 or len(hi) != 3 or any(l > h for l, h in zip(lo, hi)):
            raise WorkspaceError(f"malformed box {lo} .. {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def contains(self, x, tol: float = TOL) -> bool:
        return all(l - tol <= v <= h + tol for l, v, h in zip(self.lo, x, self.hi))

    @property
    def center(self) -> np.ndarray:
        return (np.asarray(self.lo) + np.asarray(self.hi)) / 2

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(np.subtract(self.hi, self.lo)))

    def halfspaces(self) -> tuple[Halfspace, ...]:
        out = []
        for k in range(3):
            e = [0.0, 0.0, 0.0]
            e[k] = 1.0
            out.append(Halfspace(tuple(e), self.hi[k]))
            e[k] = -1.0
            out.append(Halfspace(tuple(e), -self.lo[k]))
        return tuple(out)


@dataclass(frozen=True)
class ConvexPolytope:
    halfspaces: tuple[Halfspace, ...]

    def __post_init__(self):
        hs = tuple(self.halfspaces)
        if not hs:
            raise WorkspaceError("a polytope needs at least one halfspace")
        object.__setattr__(self, "halfspaces", hs)

    @classmethod
    def box(cls, lo: Sequence[float], hi: Sequence[float], bounds: Box | None = None) -> "ConvexPolytope":
        """Box polytope; faces lying on ``bounds`` are redundant and skipped."""
        hs = []
        for k in range(3):
            e = [0.0, 0.0, 0.0]
            if bounds is None or hi[k] < bounds.hi[k]:
                e[k] = 1.0
                hs.append(Halfspace(tuple(e), hi[k]))
            if bounds is None or lo[k] > bounds.lo[k]:
                e = [0.0, 0.0, 0.0]
                e[k] = -1.0
                hs.append(Halfspace(tuple(e), -lo[k]))
        return cls(tuple(hs))

    def contains(self, x, tol: float = TOL) -> bool:
        return all(h.contains(x, tol) for h in self.halfspaces)

    def with_halfspace(self, extra: Halfspace) -> "ConvexPolytope":
        return ConvexPolytope(self.halfspaces + (extra,))

    def is_empty_within(self, bounds: Box) -> bool:
        """LP feasibility of the polytope intersected with ``bounds``."""
        from .solver.simplex import simplex

        A = np.array([h.h for h in self.halfspaces])
        b = np.array([h.a for h in self.halfspaces])
        sol = simplex(np.zeros(3), A, ["<="] * len(b), b, np.array(bounds.lo), np.array(bounds.hi))
        return sol.status == "infeasible"


@dataclass(frozen=True)
class Region:
    """Union of convex parts; ``z_prime`` defines the primed (raised) variant."""

    name: str
    parts: tuple[ConvexPolytope, ...]
    z_prime: float | None = None

    def __post_init__(self):
        if not self.name:
            raise WorkspaceError("region name must be nonempty")
        parts = tuple(self.parts)
        if not parts:
            raise WorkspaceError(f"region {self.name!r} has no parts")
        object.__setattr__(self, "parts", parts)

    @property
    def primed_name(self) -> str:
        return self.name + PRIME_SUFFIX

    def primed_parts(self) -> tuple[ConvexPolytope, ...]:
        if self.z_prime is None:
            raise WorkspaceError(f"region {self.name!r} has no primed variant")
        floor = Halfspace((0.0, 0.0, -1.0), -self.z_prime)
        return tuple(p.with_halfspace(floor) for p in self.parts)

    def contains(self, x, tol: float = TOL) -> bool:
        return any(p.contains(x, tol) for p in self.parts)


@dataclass(frozen=True)
class Workspace:
    bounds: Box
    regions: tuple[Region, ...]
    obstacles: tuple[str, ...] = ()

    def __post_init__(self):
        regions = tuple(self.regions)
        object.__setattr__(self, "regions", regions)
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        names = [r.name for r in regions]
        if len(set(names)) != len(names):
            raise WorkspaceError("duplicate region names")
        for r in regions:
            if r.name.endswith(PRIME_SUFFIX):
                raise WorkspaceError(f"region name {r.name!r} clashes with the primed suffix")
            for k, part in enumerate(r.parts):
                if part.is_empty_within(self.bounds):
                    raise WorkspaceError(f"region {r.name!r} part {k} is empty inside the workspace bounds")
        for o in self.obstacles:
            if o not in names:
                raise WorkspaceError(f"obstacle {o!r} is not a region")

    @property
    def propositions(self) -> tuple[str, ...]:
        out = []
        for r in self.regions:
            out.append(r.name)
            if r.z_prime is not None:
                out.append(r.primed_name)
        return tuple(out)

    def region(self, name: str) -> Region:
        for r in self.regions:
            if r.name == name:
                return r
        raise KeyError(name)

    def parts_for(self, proposition: str) -> tuple[ConvexPolytope, ...]:
        """Convex parts whose union is the set labeled ``proposition``."""
        if proposition.endswith(PRIME_SUFFIX):
            base = proposition[: -len(PRIME_SUFFIX)]
            try:
                return self.region(base).primed_parts()
            except KeyError:
                pass
        try:
            return self.region(proposition).parts
        except KeyError:
            raise KeyError(f"unknown proposition {proposition!r}") from None

    def label_point(self, x, tol: float = TOL) -> frozenset:
        return label_point(self, x, tol)

    def to_dict(self) -> dict:
        regions = []
        for r in self.regions:
            entry = {"name": r.name,
                     "parts": [{"halfspaces": [{"h": list(h.h), "a": h.a} for h in p.halfspaces]}
                               for p in r.parts]}
            if r.z_prime is not None:
                entry["z_prime"] = r.z_prime
            regions.append(entry)
        return {"bounds": {"lo": list(self.bounds.lo), "hi": list(self.bounds.hi)},
                "regions": regions, "obstacles": list(self.obstacles)}


def label_point(w: Workspace, x, tol: float = TOL) -> frozenset:
    """Propositions whose region contains ``x`` (primed ones when high enough)."""
    x = tuple(float(v) for v in x)
    if len(x) != 3:
        raise WorkspaceError("label_point expects a 3-vector")
    if not w.bounds.contains(x, 1e-7):
        raise WorkspaceError(f"point {x} lies outside the workspace bounds")
    out = set()
    for r in w.regions:
        if r.contains(x, tol):
            out.add(r.name)
            if r.z_prime is not None and x[2] >= r.z_prime - tol:
                out.add(r.primed_name)
    return frozenset(out)


# -- loading ------------------------------------------------------------------

def _part_from_dict(data: dict, bounds: Box, where: str) -> ConvexPolytope:
    if "box" in data:
        lo, hi = data["box"]["lo"], data["box"]["hi"]
        box = Box(lo, hi)
        if not all(bl - TOL <= l and h <= bh + TOL for l, h, bl, bh in zip(box.lo, box.hi, bounds.lo, bounds.hi)):
            raise WorkspaceError(f"{where}: box exceeds the workspace bounds")
        return ConvexPolytope.box(box.lo, box.hi, bounds)
    if "halfspaces" in data:
        return ConvexPolytope(tuple(Halfspace(tuple(h["h"]), h["a"]) for h in data["halfspaces"]))
    raise WorkspaceError(f"{where}: part needs 'halfspaces' or 'box'")


def workspace_from_dict(data: dict) -> Workspace:
    try:
        bounds = Box(data["bounds"]["lo"], data["bounds"]["hi"])
        regions = []
        for entry in data["regions"]:
            name = entry["name"]
            if "parts" in entry:
                raw_parts = entry["parts"]
            elif "halfspaces" in entry:
                raw_parts = [{"halfspaces": entry["halfspaces"]}]
            else:
                raise WorkspaceError(f"region {name!r} lists no parts")
            parts = tuple(_part_from_dict(p, bounds, f"region {name!r}") for p in raw_parts)
            regions.append(Region(name, parts, entry.get("z_prime")))
        return Workspace(bounds, tuple(regions), tuple(data.get("obstacles", ())))
    except WorkspaceError as exc:
        raise exc
    except (KeyError, TypeError, ValueError) as exc:
        raise WorkspaceError(f"malformed scenario: {exc}") from exc


def load_workspace(path: str | Path) -> Workspace:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise WorkspaceError(f"{path}: invalid JSON ({exc})") from exc
    return workspace_from_dict(data)


# -- builtin rescue layout ------------------------------------------------------

BOUNDS = Box((0.0, 0.0, 0.0), (10.0, 10.0, 3.0))
WALL_Y = (4.8, 5.2)
WINDOW_X = (4.7, 5.3)
WINDOW_Z = (0.3, 0.9)
STAGING = ((3.5, 4.0), (6.5, 4.8))
PAD_HALF = 0.4
PAD_Z_PRIME = 0.12
TARGET_Z_PRIME = 0.3
SAFE_TOP = 0.4
SAFE_Z_PRIME = 0.1
# start pads in priority order, nearest the staging area first
PAD_CENTERS = ((4.55, 3.5), (5.45, 3.5), (3.65, 3.5), (6.35, 3.5), (2.95, 4.4),
               (7.05, 4.4), (2.75, 3.5), (7.25, 3.5), (3.65, 2.6), (6.35, 2.6))
TARGET_BOXES = (((3.6, 5.6), (4.6, 6.6)), ((5.4, 5.6), (6.4, 6.6)), ((2.5, 5.6), (3.5, 6.6)),
                ((6.5, 5.6), (7.5, 6.6)), ((1.4, 5.6), (2.4, 6.6)), ((7.6, 5.6), (8.6, 6.6)),
                ((0.3, 5.6), (1.3, 6.6)), ((8.7, 5.6), (9.7, 6.6)), ((3.0, 8.6), (4.0, 9.6)),
                ((6.0, 8.6), (7.0, 9.6)))
SAFE_BOXES = tuple(((lo[0], lo[1] + 1.4), (hi[0], hi[1] + 1.4)) for lo, hi in TARGET_BOXES)
MAX_UAVS = len(PAD_CENTERS)

# (label, formula template, mode, budget); {S} start pad, {T} target, {H} safe zone
RESCUE_SUBTASKS = (
    ("{S}-{S}'", "G {S} & F[0,5] {S}_prime", "TakeOff", 5),
    ("{S}-C", "F[0,5] C & G !O", "Steer", 5),
    ("C-{T}", "F[0,10] {T} & G !O", "Steer", 10),
    ("{T}-{T}'", "G {T} & F[0,10] {T}_prime", "Grasp", 10),
    ("{T}-{H}", "F[0,10] {H} & G !O", "Steer", 10),
    ("{H}-{H}'", "G {H} & F[0,5] !{H}_prime", "Land", 5),
)


def rescue_names(n: int) -> tuple[list[str], list[str], list[str]]:
    """Start pad, target and safe-zone names for ``n`` UAVs."""
    if n == 2:
        return ["A", "B"], ["F", "G"], ["H1", "H2"]
    return ([f"A{i}" for i in range(1, n + 1)], [f"F{i}" for i in range(1, n + 1)],
            [f"H{i}" for i in range(1, n + 1)])


def _box_region(name, lo, hi, z_prime=None) -> Region:
    return Region(name, (ConvexPolytope.box(lo, hi, BOUNDS),), z_prime)


def build_rescue_workspace(n_uavs: int):
    """Rescue layout for ``n_uavs`` UAVs and their six-step missions.

    An interior wall at ``y`` in ``WALL_Y`` splits the area; its only opening
    is the window ``E`` (0.6 m wide and 0.6 m tall, narrower than two safety
    radii, so UAVs pass one at a time). Start pads sit around the staging
    box ``C`` on the near side; targets ``F_i`` and safe zones ``H_i`` lie
    beyond the wall. Pad, target and zone positions of UAV ``i`` do not
    depend on ``n_uavs``.
    """
    from .mission import Mission, SubTask

    if not 1 <= n_uavs <= MAX_UAVS:
        raise ValueError(f"the rescue layout supports 1..{MAX_UAVS} UAVs")
    top = BOUNDS.hi[2]
    wall_lo, wall_hi = WALL_Y
    slab = (Halfspace((0.0, 1.0, 0.0), wall_hi), Halfspace((0.0, -1.0, 0.0), -wall_lo))
    walls = Region("O", (
        ConvexPolytope(slab + (Halfspace((1.0, 0.0, 0.0), WINDOW_X[0]),)),
        ConvexPolytope(slab + (Halfspace((-1.0, 0.0, 0.0), -WINDOW_X[1]),)),
        ConvexPolytope(slab + (Halfspace((0.0, 0.0, 1.0), WINDOW_Z[0]),)),
        ConvexPolytope(slab + (Halfspace((0.0, 0.0, -1.0), -WINDOW_Z[1]),)),
    ))
    starts, targets, safes = rescue_names(n_uavs)
    regions = []
    for name, (cx, cy) in zip(starts, PAD_CENTERS):
        regions.append(_box_region(name, (cx - PAD_HALF, cy - PAD_HALF, 0.0),
                                   (cx + PAD_HALF, cy + PAD_HALF, top), PAD_Z_PRIME))
    regions.append(_box_region("C", (*STAGING[0], 0.0), (*STAGING[1], top)))
    regions.append(_box_region("E", (WINDOW_X[0], wall_lo, WINDOW_Z[0]), (WINDOW_X[1], wall_hi, WINDOW_Z[1])))
    for name, (lo, hi) in zip(targets, TARGET_BOXES):
        regions.append(_box_region(name, (*lo, 0.0), (*hi, top), TARGET_Z_PRIME))
    for name, (lo, hi) in zip(safes, SAFE_BOXES):
        regions.append(_box_region(name, (*lo, 0.0), (*hi, SAFE_TOP), SAFE_Z_PRIME))
    regions.append(walls)
    w = Workspace(BOUNDS, tuple(regions), ("O",))
    pi = w.propositions
    missions = []
    for i in range(n_uavs):
        names = {"S": starts[i], "T": targets[i], "H": safes[i]}
        subtasks = tuple(SubTask.from_text(lbl.format(**names), text.format(**names), mode, bound, pi)
                         for lbl, text, mode, bound in RESCUE_SUBTASKS)
        cx, cy = PAD_CENTERS[i]
        missions.append(Mission(f"uav{i + 1}", subtasks, sum(s[3] for s in RESCUE_SUBTASKS), (cx, cy, 0.0)))
    return w, missions
