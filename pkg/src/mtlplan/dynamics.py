"""Hybrid quadrotor model linearized about hover.

State order is ``x, y, z, vx, vy, vz, phi, theta, omega_phi, omega_theta``
(yaw and yaw rate are identically zero at the operating point and dropped);
inputs are ``F - m g, tau_x, tau_y``. Every mode shares this structure; the
modes differ in their operating point and in the box bounds imposed on
velocity, attitude, altitude and input.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

STATE_NAMES = ("x", "y", "z", "vx", "vy", "vz", "phi", "theta", "wphi", "wtheta")
INPUT_NAMES = ("dF", "tau_x", "tau_y")
NX, NU = len(STATE_NAMES), len(INPUT_NAMES)
POS = slice(0, 3)
VEL = slice(3, 6)
ATT = slice(6, 8)
RATE = slice(8, 10)
DT = 0.2


class ModeId(str, enum.Enum):
    TAKEOFF = "TakeOff"
    LAND = "Land"
    HOVER = "Hover"
    STEER = "Steer"
    GRASP = "Grasp"

    @classmethod
    def parse(cls, text: str) -> "ModeId":
        key = text.replace("_", "").replace(" ", "").lower()
        for m in cls:
            if m.value.lower() == key:
                return m
        raise ValueError(f"unknown mode {text!r}")


@dataclass(frozen=True)
class QuadParams:
    mass: float = 1.0
    inertia: tuple[tuple[float, ...], ...] = ((0.01, 0.0, 0.0), (0.0, 0.01, 0.0), (0.0, 0.0, 0.02))
    gravity: float = 9.81
    altitude_cap: float = 1.5
    r_safe: float = 0.35
    rho: float = 2.0
    max_speed_xy: float = 2.5
    max_speed_z: float = 0.5
    max_tilt: float = 0.5
    max_torque: float = 0.3
    thrust_margin: float = 0.5

    def __post_init__(self):
        J = np.asarray(self.inertia, dtype=float)
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if J.shape != (3, 3) or not np.allclose(J, J.T):
            raise ValueError("inertia must be a symmetric 3x3 matrix")
        if np.min(np.linalg.eigvalsh(J)) <= 0:
            raise ValueError("inertia must be positive definite")
        if self.rho < 2 * self.r_safe:
            raise ValueError("neighborhood radius must be at least twice the safety radius")

    @property
    def J(self) -> np.ndarray:
        return np.asarray(self.inertia, dtype=float)

    @classmethod
    def from_dict(cls, data: dict) -> "QuadParams":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown quad_params fields {sorted(extra)}")
        kw = dict(data)
        if "inertia" in kw:
            J = np.asarray(kw["inertia"], dtype=float)
            if J.ndim == 1:
                J = np.diag(J)
            kw["inertia"] = tuple(tuple(float(v) for v in row) for row in J)
        return cls(**kw)


@dataclass(frozen=True, eq=False)
class LinearMode:
    """Continuous-time ``xdot = A x + B u`` with box bounds.

    ``x_lo``/``x_hi`` bound velocity, attitude and altitude (position rows
    other than altitude are left to the workspace box); ``u_lo``/``u_hi``
    bound the inputs. ``operating_point`` maps component names to trim
    values of the linearization.
    """

    mode: ModeId
    A: np.ndarray
    B: np.ndarray
    x_lo: np.ndarray
    x_hi: np.ndarray
    u_lo: np.ndarray
    u_hi: np.ndarray
    operating_point: dict = field(default_factory=dict)

    def __post_init__(self):
        n, m = self.B.shape
        if self.A.shape != (n, n):
            raise ValueError("A and B dimensions disagree")
        if self.x_lo.shape != (n,) or self.x_hi.shape != (n,):
            raise ValueError("state bounds have the wrong length")
        if self.u_lo.shape != (m,) or self.u_hi.shape != (m,):
            raise ValueError("input bounds have the wrong length")

    @property
    def state_dim(self) -> int:
        return self.A.shape[0]

    @property
    def input_dim(self) -> int:
        return self.B.shape[1]


def hover_matrices(p: QuadParams) -> tuple[np.ndarray, np.ndarray]:
    A = np.zeros((NX, NX))
    A[POS, VEL] = np.eye(3)
    A[VEL, ATT] = [[0.0, p.gravity], [-p.gravity, 0.0], [0.0, 0.0]]
    A[ATT, RATE] = np.eye(2)
    B = np.zeros((NX, NU))
    B[5, 0] = 1.0 / p.mass
    Jinv = np.linalg.inv(p.J)  # raises LinAlgError for singular J
    B[RATE, 1:] = Jinv[:2, :2]
    return A, B


def _bounds(p: QuadParams, vz: tuple[float, float], z_cap: float):
    inf = math.inf
    x_lo = np.array([-inf, -inf, 0.0, -p.max_speed_xy, -p.max_speed_xy, vz[0],
                     -p.max_tilt, -p.max_tilt, -inf, -inf])
    x_hi = np.array([inf, inf, z_cap, p.max_speed_xy, p.max_speed_xy, vz[1],
                     p.max_tilt, p.max_tilt, inf, inf])
    dF = p.thrust_margin * p.mass * p.gravity
    u_lo = np.array([-dF, -p.max_torque, -p.max_torque])
    u_hi = -u_lo
    return x_lo, x_hi, u_lo, u_hi


def hover_mode(p: QuadParams | None = None) -> LinearMode:
    p = p or QuadParams()
    A, B = hover_matrices(p)
    vmax = p.max_speed_z
    return LinearMode(ModeId.HOVER, A, B, *_bounds(p, (-vmax, vmax), p.altitude_cap),
                      operating_point={"thrust": p.mass * p.gravity, "vz": 0.0})


def steer_takeoff_land_modes(p: QuadParams | None = None) -> dict[ModeId, LinearMode]:
    """Steer, TakeOff and Land share the hover structure.

    TakeOff and Land are linearized about a steady climb / descent at
    ``max_speed_z``; since the trim keeps the thrust at ``m g`` and the
    model works in absolute coordinates, only the admissible vertical
    velocity sign changes. Their altitude is bounded by the workspace box
    alone so that the climb out of a landing zone is not capped.
    """
    p = p or QuadParams()
    A, B = hover_matrices(p)
    vmax = p.max_speed_z
    trim = p.mass * p.gravity
    return {
        ModeId.STEER: LinearMode(ModeId.STEER, A, B, *_bounds(p, (-vmax, vmax), p.altitude_cap),
                                 operating_point={"thrust": trim, "vz": 0.0}),
        ModeId.TAKEOFF: LinearMode(ModeId.TAKEOFF, A.copy(), B.copy(), *_bounds(p, (0.0, vmax), math.inf),
                                   operating_point={"thrust": trim, "vz": vmax}),
        ModeId.LAND: LinearMode(ModeId.LAND, A.copy(), B.copy(), *_bounds(p, (-vmax, 0.0), math.inf),
                                operating_point={"thrust": trim, "vz": -vmax}),
    }


def discretize_zoh(A: np.ndarray, B: np.ndarray, dt: float = DT) -> tuple[np.ndarray, np.ndarray]:
    """Exact zero-order hold for nilpotent ``A``.

    ``A_d = sum_k (A dt)^k / k!`` and ``B_d = sum_k A^k dt^(k+1) / (k+1)! B``;
    both series stop at the first vanishing power of ``A``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = A.shape[0]
    Ad = np.zeros_like(A, dtype=float)
    S = np.zeros_like(A, dtype=float)
    Ak = np.eye(n)
    for k in range(n + 1):
        if k > 0 and not Ak.any():
            break
        Ad += Ak * dt**k / math.factorial(k)
        S += Ak * dt ** (k + 1) / math.factorial(k + 1)
        Ak = Ak @ A
    else:
        raise ValueError("A is not nilpotent; closed-form hold does not apply")
    return Ad, S @ B


def nilpotency_index(A: np.ndarray) -> int:
    """Smallest k with A^k = 0 (exactly), or 0 if A is not nilpotent."""
    Ak = np.eye(A.shape[0])
    for k in range(1, A.shape[0] + 1):
        Ak = Ak @ A
        if not Ak.any():
            return k
    return 0


# -- hybrid structure ---------------------------------------------------------

EDGES = frozenset({
    (ModeId.TAKEOFF, ModeId.HOVER), (ModeId.TAKEOFF, ModeId.STEER),
    (ModeId.HOVER, ModeId.STEER), (ModeId.HOVER, ModeId.LAND),
    (ModeId.HOVER, ModeId.GRASP), (ModeId.HOVER, ModeId.HOVER),
    (ModeId.STEER, ModeId.HOVER), (ModeId.STEER, ModeId.STEER), (ModeId.STEER, ModeId.GRASP),
    (ModeId.GRASP, ModeId.HOVER), (ModeId.GRASP, ModeId.STEER),
    (ModeId.LAND, ModeId.TAKEOFF),
})

GUARDS = {
    (ModeId.TAKEOFF, ModeId.HOVER): "airborne above the start pad",
    (ModeId.TAKEOFF, ModeId.STEER): "airborne above the start pad",
    (ModeId.HOVER, ModeId.STEER): "next waypoint region released",
    (ModeId.HOVER, ModeId.LAND): "above the landing zone",
    (ModeId.HOVER, ModeId.GRASP): "above the object",
    (ModeId.HOVER, ModeId.HOVER): "wait one step",
    (ModeId.STEER, ModeId.HOVER): "waypoint region reached",
    (ModeId.STEER, ModeId.STEER): "next waypoint",
    (ModeId.STEER, ModeId.GRASP): "object region reached",
    (ModeId.GRASP, ModeId.HOVER): "payload secured",
    (ModeId.GRASP, ModeId.STEER): "payload secured",
    (ModeId.LAND, ModeId.TAKEOFF): "on the ground",
}


@dataclass(frozen=True, eq=False)
class HybridModel:
    modes: dict
    edges: frozenset = EDGES
    dt: float = DT

    def transition_allowed(self, src: ModeId, dst: ModeId) -> bool:
        return transition_allowed(self, src, dst)

    def discrete(self, mode: ModeId) -> tuple[np.ndarray, np.ndarray]:
        m = self.modes[mode]
        return discretize_zoh(m.A, m.B, self.dt)


def hybrid_model(p: QuadParams | None = None, dt: float = DT) -> HybridModel:
    p = p or QuadParams()
    modes = {ModeId.HOVER: hover_mode(p), **steer_takeoff_land_modes(p)}
    return HybridModel(modes, EDGES, dt)


def transition_allowed(h: HybridModel, src: ModeId, dst: ModeId) -> bool:
    return (src, dst) in h.edges


@dataclass(frozen=True)
class GraspStep:
    mode: ModeId
    guard: str


def grasp_sequence() -> list[GraspStep]:
    """Grasp as hover over the object, land (touchdown grasps it), take off."""
    return [
        GraspStep(ModeId.HOVER, "hold position above the object"),
        GraspStep(ModeId.LAND, "touchdown on the object; grasp is instantaneous"),
        GraspStep(ModeId.TAKEOFF, "lift off carrying the payload"),
    ]
