"""Rotation and rigid-transform algebra.

Rotations are plain 3x3 float arrays; `Pose` bundles one with a translation.
Everything is in radians and meters. Quaternions (w, x, y, z) appear only at
the serialization boundary.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation as _ScipyRotation

from .errors import InvalidInput, NonOrthonormal

_SMALL_ANGLE = 1e-10
_ORTHO_TOL = 1e-6


def hat(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(W: np.ndarray) -> np.ndarray:
    return 0.5 * np.array([W[2, 1] - W[1, 2], W[0, 2] - W[2, 0], W[1, 0] - W[0, 1]])


def _finite_vec(v, n: int, what: str) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.shape != (n,):
        raise InvalidInput(f"{what}: expected shape ({n},), got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInput(f"{what}: non-finite value")
    return a


def check_rotation(R, tol: float = _ORTHO_TOL) -> np.ndarray:
    """Return R as a float array, raising NonOrthonormal if it is not in SO(3)."""
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise NonOrthonormal("rotation must be a finite 3x3 matrix")
    if np.linalg.norm(R.T @ R - np.eye(3)) > tol or abs(np.linalg.det(R) - 1.0) > tol:
        raise NonOrthonormal("matrix is not a proper rotation")
    return R


def rot_exp(v) -> np.ndarray:
    """Rodrigues map from a rotation vector (axis * angle) to a matrix."""
    v = _finite_vec(v, 3, "rot_exp")
    th = math.sqrt(v @ v)
    W = hat(v)
    if th < _SMALL_ANGLE:
        return np.eye(3) + W + 0.5 * (W @ W)
    A = math.sin(th) / th
    B = (1.0 - math.cos(th)) / (th * th)
    return np.eye(3) + A * W + B * (W @ W)


def _log_unchecked(R: np.ndarray) -> np.ndarray:
    w = vee(R)  # sin(th) * axis
    s = math.sqrt(w @ w)
    c = 0.5 * (R[0, 0] + R[1, 1] + R[2, 2] - 1.0)
    th = math.atan2(s, c)
    if th < 1e-7:
        # th/sin(th) ~ 1 + th^2/6
        return w * (1.0 + th * th / 6.0)
    if c > 0.0 or s > 1e-3:
        return w * (th / s)
    # near pi: axis from the symmetric part, largest diagonal first
    S = 0.5 * (R + R.T) - c * np.eye(3)
    i = int(np.argmax(np.diag(S)))
    axis = S[:, i] / math.sqrt(max(S[i, i], 1e-300))
    axis /= np.linalg.norm(axis)
    d = axis @ w
    if abs(d) > 1e-14:
        if d < 0:
            axis = -axis
    else:
        # exactly pi: first nonzero component positive
        for comp in axis:
            if abs(comp) > 1e-12:
                if comp < 0:
                    axis = -axis
                break
    return axis * th


def rot_log(R) -> np.ndarray:
    """Rotation vector of R with norm in [0, pi]."""
    return _log_unchecked(check_rotation(R))


def rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_angle(R_a: np.ndarray, R_b: np.ndarray) -> float:
    """Geodesic distance between two rotations, in radians."""
    return float(np.linalg.norm(_log_unchecked(R_a.T @ R_b)))


def quat_from_matrix(R) -> np.ndarray:
    """Unit quaternion (w, x, y, z) with w >= 0."""
    x, y, z, w = _ScipyRotation.from_matrix(check_rotation(R)).as_quat()
    q = np.array([w, x, y, z])
    return -q if w < 0 else q


def matrix_from_quat(q) -> np.ndarray:
    q = _finite_vec(q, 4, "quaternion")
    n = np.linalg.norm(q)
    if n < 1e-12:
        raise InvalidInput("zero quaternion")
    w, x, y, z = q / n
    return _ScipyRotation.from_quat([x, y, z, w]).as_matrix()


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform: x_world = rotation @ x_local + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float)
        t = np.array(self.translation, dtype=float).reshape(3)
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> Pose:
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_translation(cls, t) -> Pose:
        return cls(np.eye(3), t)

    @classmethod
    def from_matrix(cls, T) -> Pose:
        T = np.asarray(T, dtype=float)
        return cls(check_rotation(T[:3, :3]), T[:3, 3])

    @classmethod
    def from_quat(cls, pos, quat_wxyz) -> Pose:
        return cls(matrix_from_quat(quat_wxyz), _finite_vec(pos, 3, "position"))

    @property
    def x_axis(self) -> np.ndarray:
        return self.rotation[:, 0]

    @property
    def y_axis(self) -> np.ndarray:
        return self.rotation[:, 1]

    @property
    def z_axis(self) -> np.ndarray:
        return self.rotation[:, 2]

    def as_matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def quat(self) -> np.ndarray:
        return quat_from_matrix(self.rotation)

    def apply(self, p) -> np.ndarray:
        return self.rotation @ np.asarray(p, dtype=float) + self.translation

    def __matmul__(self, other: Pose) -> Pose:
        return compose(self, other)

    def __repr__(self) -> str:
        return f"Pose(t={self.translation.tolist()}, q={self.quat().round(6).tolist()})"


def compose(a: Pose, b: Pose) -> Pose:
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def inverse(p: Pose) -> Pose:
    Rt = p.rotation.T
    return Pose(Rt, -(Rt @ p.translation))


def retract(p: Pose, delta) -> Pose:
    """Move along the local chart: translation additive, rotation right-multiplied.

    `delta` is (dt_x, dt_y, dt_z, dr_x, dr_y, dr_z).
    """
    d = _finite_vec(delta, 6, "twist")
    return Pose(p.rotation @ rot_exp(d[3:]), p.translation + d[:3])


def local_coordinates(p: Pose, q: Pose) -> np.ndarray:
    """Twist taking `p` to `q` under `retract`; exact inverse for |rot| < pi."""
    return np.concatenate([q.translation - p.translation, _log_unchecked(p.rotation.T @ q.rotation)])
