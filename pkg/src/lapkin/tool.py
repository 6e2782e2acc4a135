"""Passive kinematic chain of a manually-wristed laparoscopic instrument.

Given the pose of handle 1 (held rigidly by the robot hand) and the RCM point
the shaft passes through, the handle-2 position, both passive handle angles
and the tool-tip pose follow in closed form.

Angle conventions used throughout:

* ``theta1_raw`` is the interior angle at handle 2 of the triangle
  (handle 1, handle 2, RCM); the working ``theta1`` is its deflection from
  ``theta1_neutral`` (pi/2 by default).
* ``theta2`` is the angle between the handle-1 -> handle-2 offset and the
  handle x axis; its neutral value is 0.
* The two passive rotations act about local axes picked by
  :class:`AxisConvention` (first letter: axis of the theta1 rotation,
  second: axis of the theta2 rotation).
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometry, InvalidInput, Unreachable
from .se3 import Pose, rot_x, rot_y, rot_z

THETA_MAX_DEG = 45.0
GEARING_RATIO = 2.0
JAW_MAX_DEG = 60.0

ACOS_CLAMP_WINDOW = 1e-9
PARALLEL_EPS = 1e-10


class SignConvention(str, enum.Enum):
    WORLD_Z = "world_z"
    HANDLE_Z = "handle_z"


class AxisConvention(str, enum.Enum):
    YZ = "yz"
    XZ = "xz"


_ELEMENTARY = {"x": rot_x, "y": rot_y, "z": rot_z}


@dataclass(frozen=True)
class ToolGeometry:
    l0: float = 0.30
    l12: float = 0.05
    l1: float = 0.36
    k: float = GEARING_RATIO
    theta_max: float = math.radians(THETA_MAX_DEG)
    theta1_neutral: float = math.pi / 2
    sign_convention: SignConvention = SignConvention.WORLD_Z
    axis_convention: AxisConvention = AxisConvention.YZ

    def __post_init__(self):
        object.__setattr__(self, "sign_convention", SignConvention(self.sign_convention))
        object.__setattr__(self, "axis_convention", AxisConvention(self.axis_convention))
        for name in ("l0", "l12", "l1", "k"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise InvalidInput(f"{name} must be a positive finite number, got {v}")
        if not (0.0 < self.theta_max <= math.pi / 2):
            raise InvalidInput("theta_max must lie in (0, pi/2]")

    def rot_a(self, angle: float) -> np.ndarray:
        return _ELEMENTARY[self.axis_convention.value[0]](angle)

    def rot_b(self, angle: float) -> np.ndarray:
        return _ELEMENTARY[self.axis_convention.value[1]](angle)


@dataclass(frozen=True)
class RcmConfig:
    x_rcm: np.ndarray
    tolerance: float = 1e-4

    def __post_init__(self):
        x = np.array(self.x_rcm, dtype=float).reshape(3)
        x.setflags(write=False)
        object.__setattr__(self, "x_rcm", x)
        if not self.tolerance > 0:
            raise InvalidInput("RCM tolerance must be positive")


@dataclass(frozen=True)
class JawCommand:
    opening: float  # degrees
    clamped: bool = False

    def __post_init__(self):
        if not (0.0 <= self.opening <= JAW_MAX_DEG):
            raise InvalidInput(f"jaw opening {self.opening} outside [0, {JAW_MAX_DEG}]")


@dataclass(frozen=True)
class PassiveState:
    theta1_raw: float
    theta1: float
    theta2: float
    theta1_signed: float
    theta2_signed: float
    theta3: float
    theta4: float
    x_h2: np.ndarray = field(repr=False)
    x_tt: np.ndarray = field(repr=False)
    R_tt: np.ndarray = field(repr=False)


def _sign(x: float) -> float:
    return -1.0 if x < 0 else 1.0


def _cross(a, b) -> np.ndarray:
    return np.array([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])


def _clamped_acos(arg: float) -> float:
    if arg > 1.0 + ACOS_CLAMP_WINDOW or arg < -1.0 - ACOS_CLAMP_WINDOW:
        raise Unreachable(f"arccos argument {arg:.6g} outside [-1, 1]")
    return math.acos(min(1.0, max(-1.0, arg)))


def handle1_from_ee(P_ee: Pose, T_ee_h1: Pose) -> Pose:
    return P_ee @ T_ee_h1


def theta1_interior(x_h1, x_rcm, geom: ToolGeometry) -> float:
    """Law-of-cosines angle at handle 2, from the handle-1 to RCM distance."""
    diff = np.asarray(x_rcm, dtype=float) - np.asarray(x_h1, dtype=float)
    d2 = float(diff @ diff)
    if d2 <= 0.0:
        raise DegenerateGeometry("handle 1 coincides with the RCM")
    arg = (geom.l12**2 + geom.l0**2 - d2) / (2.0 * geom.l12 * geom.l0)
    return _clamped_acos(arg)


def solve_handle2(P_h1: Pose, x_rcm, geom: ToolGeometry) -> np.ndarray:
    """Handle-2 position: l12 away from handle 1, perpendicular to its z axis,
    on the side opposite the RCM's lateral offset."""
    return _handle2(P_h1.rotation[:, 2], P_h1.translation, np.asarray(x_rcm, dtype=float), geom.l12)


def _handle2(n1, x_h1, x_rcm, l12: float) -> np.ndarray:
    n2 = x_rcm - x_h1
    c = _cross(n1, n2)
    cn = math.sqrt(c @ c)
    if cn < PARALLEL_EPS:
        raise DegenerateGeometry("shaft direction is parallel to the handle axis")
    m = _cross(n1, c)
    return x_h1 + (l12 / math.sqrt(m @ m)) * m


def tool_tip_position(x_h2, x_rcm, geom: ToolGeometry) -> np.ndarray:
    x_h2 = np.asarray(x_h2, dtype=float)
    shaft = np.asarray(x_rcm, dtype=float) - x_h2
    if math.sqrt(shaft @ shaft) <= PARALLEL_EPS:
        raise DegenerateGeometry("handle 2 coincides with the RCM")
    # nominal l0 as divisor, not the actual distance
    return x_h2 + (geom.l1 / geom.l0) * shaft


def theta2_from_vectors(P_h1: Pose, x_h2) -> float:
    v1 = P_h1.translation - np.asarray(x_h2, dtype=float)
    n = math.sqrt(v1 @ v1)
    if n <= PARALLEL_EPS:
        raise DegenerateGeometry("handle 2 coincides with handle 1")
    v2 = P_h1.rotation[:, 0]
    return _clamped_acos(float(v1 @ v2) / (n * math.sqrt(v2 @ v2)))


def _theta1_sign(R_h1, x_h1, x_rcm, geom: ToolGeometry) -> float:
    if geom.sign_convention is SignConvention.WORLD_Z:
        return _sign(x_h1[2] - x_rcm[2])
    return _sign(float((x_h1 - x_rcm) @ R_h1[:, 2]))


def signed_angles(P_h1: Pose, x_h2, x_rcm, theta1: float, theta2: float, geom: ToolGeometry):
    """Signed (theta1', theta2'); sign(0) counts as +1."""
    x_h1, R = P_h1.translation, P_h1.rotation
    x_rcm = np.asarray(x_rcm, dtype=float)
    s1 = _theta1_sign(R, x_h1, x_rcm, geom)
    v1 = x_h1 - np.asarray(x_h2, dtype=float)
    s2 = _sign(float(_cross(v1, R[:, 0]) @ (x_rcm - x_h1)))
    return s1 * theta1, s2 * theta2


def _tip_rotation(R_h1, t1s: float, t2s: float, t3: float, t4: float, geom: ToolGeometry) -> np.ndarray:
    return (
        R_h1
        @ geom.rot_b(-t2s)
        @ geom.rot_a(-t1s)
        @ geom.rot_a(t3 * _sign(t1s))
        @ geom.rot_b(t4 * _sign(t2s))
    )


def forward(P_h1: Pose, x_rcm, geom: ToolGeometry) -> PassiveState:
    """Full passive-chain forward pass from a handle-1 pose."""
    R, x_h1 = P_h1.rotation, P_h1.translation
    x_rcm = np.asarray(x_rcm, dtype=float)
    # degeneracy is checked before reachability
    x_h2 = _handle2(R[:, 2], x_h1, x_rcm, geom.l12)
    t1_raw = theta1_interior(x_h1, x_rcm, geom)
    t1 = t1_raw - geom.theta1_neutral
    x_tt = tool_tip_position(x_h2, x_rcm, geom)
    t2 = theta2_from_vectors(P_h1, x_h2)
    t1s, t2s = signed_angles(P_h1, x_h2, x_rcm, t1, t2, geom)
    t3 = geom.k * abs(t1)
    t4 = geom.k * abs(t2)
    R_tt = _tip_rotation(R, t1s, t2s, t3, t4, geom)
    return PassiveState(t1_raw, t1, t2, t1s, t2s, t3, t4, x_h2, x_tt, R_tt)


def tool_tip_pose(P_h1: Pose, x_rcm, geom: ToolGeometry) -> tuple[Pose, PassiveState]:
    st = forward(P_h1, x_rcm, geom)
    return Pose(st.R_tt, st.x_tt), st


def validate_consistency(P_h1: Pose, x_h2, x_rcm, geom: ToolGeometry) -> tuple[float, float]:
    """Residuals of the two link-length constraints: (|h1-h2| - l12, |rcm-h2| - l0)."""
    x_h2 = np.asarray(x_h2, dtype=float)
    r1 = float(np.linalg.norm(P_h1.translation - x_h2)) - geom.l12
    r2 = float(np.linalg.norm(np.asarray(x_rcm, dtype=float) - x_h2)) - geom.l0
    return r1, r2


def shaft_rcm_distance(x_h2, x_tt, x_rcm) -> float:
    """Distance from the RCM to the line through handle 2 and the tip."""
    x_h2 = np.asarray(x_h2, dtype=float)
    d = np.asarray(x_tt, dtype=float) - x_h2
    n = math.sqrt(d @ d)
    if n == 0.0:
        return float(np.linalg.norm(np.asarray(x_rcm) - x_h2))
    return float(np.linalg.norm(_cross(d, np.asarray(x_rcm, dtype=float) - x_h2))) / n


def jaw_map(grip: float) -> JawCommand:
    """Linear map of a normalized grip in [0, 1] to a jaw opening in degrees."""
    if not math.isfinite(grip):
        raise InvalidInput("grip must be finite")
    clamped = not (0.0 <= grip <= 1.0)
    if clamped:
        warnings.warn(f"grip {grip} outside [0, 1]; clamping", RuntimeWarning, stacklevel=2)
        grip = min(1.0, max(0.0, grip))
    return JawCommand(JAW_MAX_DEG * grip, clamped)
