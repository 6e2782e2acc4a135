"""Generic serial-chain forward kinematics (axis + origin joints, URDF-style)."""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidInput
from .se3 import Pose, rot_exp


class JointKind(str, enum.Enum):
    REVOLUTE = "revolute"
    PRISMATIC = "prismatic"


class LimitViolationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class JointSpec:
    kind: JointKind
    axis: np.ndarray
    origin: Pose = field(default_factory=Pose.identity)
    limits: Optional[tuple[float, float]] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", JointKind(self.kind))
        axis = np.array(self.axis, dtype=float).reshape(3)
        if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
            raise InvalidInput(f"joint axis must be unit length, got {axis}")
        axis.setflags(write=False)
        object.__setattr__(self, "axis", axis)
        if self.limits is not None:
            lo, hi = self.limits
            if not lo < hi:
                raise InvalidInput(f"joint limits must satisfy min < max, got {self.limits}")
            object.__setattr__(self, "limits", (float(lo), float(hi)))

    def motion(self, q: float) -> Pose:
        if self.kind is JointKind.REVOLUTE:
            return Pose(rot_exp(self.axis * q), np.zeros(3))
        return Pose(np.eye(3), self.axis * q)


@dataclass(frozen=True)
class ChainModel:
    joints: tuple[JointSpec, ...]
    ee_offset: Pose = field(default_factory=Pose.identity)

    def __post_init__(self):
        object.__setattr__(self, "joints", tuple(self.joints))
        if not self.joints:
            raise InvalidInput("a chain needs at least one joint")

    @property
    def dof(self) -> int:
        return len(self.joints)


@dataclass(frozen=True)
class ChainFkResult:
    pose: Pose
    limit_violations: tuple[int, ...] = ()


def chain_fk(model: ChainModel, q: Sequence[float]) -> ChainFkResult:
    """End-effector pose: origin_1 * motion_1(q_1) * ... * origin_n * motion_n(q_n) * ee_offset.

    Out-of-limit joint values do not raise; their indices are reported in
    the result and a LimitViolationWarning is emitted.
    """
    q = np.asarray(q, dtype=float).reshape(-1)
    if q.size != model.dof:
        raise DimensionMismatch(f"expected {model.dof} joint values, got {q.size}")
    if not np.all(np.isfinite(q)):
        raise InvalidInput("joint values must be finite")
    P = Pose.identity()
    violations = []
    for i, (joint, qi) in enumerate(zip(model.joints, q)):
        if joint.limits is not None and not (joint.limits[0] <= qi <= joint.limits[1]):
            violations.append(i)
        P = P @ joint.origin @ joint.motion(float(qi))
    P = P @ model.ee_offset
    if violations:
        warnings.warn(f"joints {violations} outside their limits", LimitViolationWarning, stacklevel=2)
    return ChainFkResult(P, tuple(violations))


def revolute(axis, origin: Pose | None = None, limits=None) -> JointSpec:
    return JointSpec(JointKind.REVOLUTE, axis, origin or Pose.identity(), limits)


def prismatic(axis, origin: Pose | None = None, limits=None) -> JointSpec:
    return JointSpec(JointKind.PRISMATIC, axis, origin or Pose.identity(), limits)
