"""Independent oracles used to check the forward chain and the IK solver.

`random_handle_state` builds handle poses *from* chosen passive angles, so
the ground truth it returns never goes through `lapkin.tool.forward`.
`batch_forward` is a separate vectorized transcription of the chain used by
the brute-force `oracle_ik`.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial.transform import Rotation as _R

from ..errors import DegenerateGeometry
from ..se3 import Pose
from ..solver import IkWeights, seed_handle_pose
from ..tool import SignConvention, ToolGeometry


@dataclass(frozen=True)
class HandleState:
    pose: Pose
    x_rcm: np.ndarray
    x_h2: np.ndarray
    x_tt: np.ndarray
    R_tt: np.ndarray
    theta1: float
    theta1_signed: float
    theta2_signed: float

    @property
    def tip(self) -> Pose:
        return Pose(self.R_tt, self.x_tt)


def _elem(axis: str, a: float) -> np.ndarray:
    return _R.from_rotvec(a * np.eye(3)["xyz".index(axis)]).as_matrix()


def random_handle_state(rng: np.random.Generator, geom: ToolGeometry, x_rcm=(0.0, 0.0, 0.0),
                        max_deflection_deg: float = 40.0, lean_deg=(10.0, 60.0),
                        min_height_ratio: float = 0.3) -> HandleState:
    """Handle pose with random deflections, plus its tip pose computed by construction.

    theta1 and the signed theta2 are drawn uniformly in +-max_deflection_deg;
    see `handle_state_from_angles` for the rest.
    """
    lim = math.radians(max_deflection_deg)
    t1 = rng.uniform(-lim, lim)
    t2s = rng.uniform(-lim, lim)
    lean = math.radians(rng.uniform(*lean_deg))
    return handle_state_from_angles(rng, geom, t1, t2s, lean, x_rcm, min_height_ratio)


def handle_state_from_angles(rng: np.random.Generator, geom: ToolGeometry, theta1: float, theta2_signed: float,
                             lean: float = math.radians(30.0), x_rcm=(0.0, 0.0, 0.0),
                             min_height_ratio: float = 0.3) -> HandleState:
    """Handle pose realizing the given deflections, with its tip pose by construction.

    `lean` is the angle between the handle z axis and the handle-1 -> RCM
    direction. The overall orientation is random, subject to the RCM lying
    ahead of the handle (positive along its z axis) and below it in world z
    by at least ``min_height_ratio`` times their distance.
    """
    x_rcm = np.asarray(x_rcm, dtype=float)
    t1, t2s = float(theta1), float(theta2_signed)
    raw = geom.theta1_neutral + t1
    d = math.sqrt(geom.l12**2 + geom.l0**2 - 2 * geom.l12 * geom.l0 * math.cos(raw))
    # offset handle1 - handle2 sits at angle -theta2' from the handle x axis
    v1_dir = np.array([math.cos(-t2s), math.sin(-t2s), 0.0])
    n2_local = d * (math.sin(lean) * v1_dir + math.cos(lean) * np.array([0.0, 0.0, 1.0]))
    while True:
        R = _R.random(random_state=rng).as_matrix()
        n2 = R @ n2_local
        if -n2[2] > min_height_ratio * d:
            break
    x_h1 = x_rcm - n2
    x_h2 = x_h1 - geom.l12 * (R @ v1_dir)
    x_tt = x_h2 + (geom.l1 / geom.l0) * (x_rcm - x_h2)
    s1 = 1.0 if geom.sign_convention is SignConvention.WORLD_Z else -1.0
    t1s = s1 * t1
    a, b = geom.axis_convention.value
    R_tt = R @ _elem(b, -t2s) @ _elem(a, (geom.k - 1.0) * t1s) @ _elem(b, geom.k * t2s)
    return HandleState(Pose(R, x_h1), x_rcm, x_h2, x_tt, R_tt, t1, t1s, t2s)


def _mm(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    # batched 3x3 product; faster than np.matmul for many tiny matrices
    return np.einsum("...ij,...jk->...ik", A, B)


def _rodrigues(rv: np.ndarray) -> np.ndarray:
    th = np.linalg.norm(rv, axis=-1)
    safe = np.where(th < 1e-12, 1.0, th)
    k = rv / safe[..., None]
    K = np.zeros(rv.shape[:-1] + (3, 3))
    K[..., 0, 1], K[..., 0, 2] = -k[..., 2], k[..., 1]
    K[..., 1, 0], K[..., 1, 2] = k[..., 2], -k[..., 0]
    K[..., 2, 0], K[..., 2, 1] = -k[..., 1], k[..., 0]
    s, c = np.sin(th)[..., None, None], np.cos(th)[..., None, None]
    return np.eye(3) + s * K + (1 - c) * _mm(K, K)


def _euler_bab(a: str, p, alpha, q):
    """Entries of R_b(p) R_a(alpha) R_b(q) for b = z and a in {x, y}, as a 3x3 nested list."""
    cp, sp, ca, sa, cq, sq = np.cos(p), np.sin(p), np.cos(alpha), np.sin(alpha), np.cos(q), np.sin(q)
    if a == "y":
        return [[cp * ca * cq - sp * sq, -cp * ca * sq - sp * cq, cp * sa],
                [sp * ca * cq + cp * sq, -sp * ca * sq + cp * cq, sp * sa],
                [-sa * cq, sa * sq, ca]]
    return [[cp * cq - sp * ca * sq, -cp * sq - sp * ca * cq, sp * sa],
            [sp * cq + cp * ca * sq, -sp * sq + cp * ca * cq, -cp * sa],
            [sa * sq, sa * cq, ca]]


def _chain(R: np.ndarray, x_h1: np.ndarray, x_rcm: np.ndarray, geom: ToolGeometry):
    """Component-wise passive chain; R is (..., 3, 3), x_h1 is (..., 3), broadcasting."""
    l12, l0 = geom.l12, geom.l0
    n1x, n1y, n1z = R[..., 0, 2], R[..., 1, 2], R[..., 2, 2]
    v2x, v2y, v2z = R[..., 0, 0], R[..., 1, 0], R[..., 2, 0]
    hx, hy, hz = x_h1[..., 0], x_h1[..., 1], x_h1[..., 2]
    ax, ay, az = x_rcm[0] - hx, x_rcm[1] - hy, x_rcm[2] - hz          # n2
    cx, cy, cz = n1y * az - n1z * ay, n1z * ax - n1x * az, n1x * ay - n1y * ax
    valid = np.sqrt(cx * cx + cy * cy + cz * cz) >= 1e-10
    mx, my, mz = n1y * cz - n1z * cy, n1z * cx - n1x * cz, n1x * cy - n1y * cx
    scale = l12 / np.where(valid, np.sqrt(mx * mx + my * my + mz * mz), 1.0)
    ux, uy, uz = scale * mx, scale * my, scale * mz                     # x_h2 - x_h1
    d2 = ax * ax + ay * ay + az * az
    arg = (l12 * l12 + l0 * l0 - d2) / (2 * l12 * l0)
    valid = valid & (np.abs(arg) <= 1.0 + 1e-9)
    t1 = np.arccos(np.clip(arg, -1, 1)) - geom.theta1_neutral
    f = geom.l1 / l0
    # x_tt = x_h2 + f (x_rcm - x_h2), with x_rcm - x_h2 = n2 - u
    x_tt = np.stack([hx + ux + f * (ax - ux), hy + uy + f * (ay - uy), hz + uz + f * (az - uz)], axis=-1)
    # v1 = -u
    t2 = np.arccos(np.clip(-(ux * v2x + uy * v2y + uz * v2z) / l12, -1, 1))
    if geom.sign_convention is SignConvention.WORLD_Z:
        s1 = np.where(-az < 0, -1.0, 1.0)
    else:
        s1 = np.where(-(ax * n1x + ay * n1y + az * n1z) < 0, -1.0, 1.0)
    # (v1 x v2) . n2 with v1 = -u
    trip = -((uy * v2z - uz * v2y) * ax + (uz * v2x - ux * v2z) * ay + (ux * v2y - uy * v2x) * az)
    s2 = np.where(trip < 0, -1.0, 1.0)
    t1s, t2s = s1 * t1, s2 * t2
    alpha = -t1s + geom.k * np.abs(t1) * np.where(t1s < 0, -1.0, 1.0)
    beta = geom.k * t2 * np.where(t2s < 0, -1.0, 1.0)
    return x_tt, t1, t2, -t2s, alpha, beta, valid


def batch_forward(R: np.ndarray, x_h1: np.ndarray, x_rcm: np.ndarray, geom: ToolGeometry):
    """Vectorized passive chain. Returns (x_tt, R_tt, theta1, theta2, valid).

    `R` and `x_h1` broadcast against each other (e.g. (1, M, 3, 3) with (N, 1, 3)).
    The two rotations about the first passive axis share that axis and are
    merged into one angle.
    """
    x_tt, t1, t2, p, alpha, q, valid = _chain(R, x_h1, np.asarray(x_rcm, dtype=float), geom)
    E = _euler_bab(geom.axis_convention.value[0], p, alpha, q)
    inner = np.stack([np.stack(row, axis=-1) for row in E], axis=-2)
    R_tt = np.einsum("...ij,...jk->...ik", np.broadcast_to(R, inner.shape), inner)
    return x_tt, R_tt, t1, t2, valid


def _batch_cost(R, x, target: Pose, x_rcm, geom, weights: IkWeights, G=None):
    """Squared residual norm; G = R^T R_target per rotation may be precomputed."""
    x_tt, t1, t2, p, alpha, q, valid = _chain(R, x, x_rcm, geom)
    if G is None:
        G = np.einsum("...ji,jk->...ik", R, target.rotation)
    E = _euler_bab(geom.axis_convention.value[0], p, alpha, q)
    tr = sum(E[i][j] * G[..., i, j] for i in range(3) for j in range(3))  # trace(R_tt^T R*)
    ang = np.arccos(np.clip(0.5 * (tr - 1.0), -1, 1))
    dp = x_tt - target.translation
    perr2 = np.sum(dp * dp, axis=-1)
    p1 = weights.w_a * np.maximum(0, np.abs(t1) - weights.theta_max)
    p2 = weights.w_a * np.maximum(0, np.abs(t2) - weights.theta_max)
    cost = weights.w_t**2 * perr2 + ang**2 + p1**2 + p2**2
    return np.where(valid, cost, np.inf), np.sqrt(perr2), ang


@dataclass
class OracleResult:
    pose: Optional[Pose]
    residual_norm: float
    tip_position_error: float
    tip_orientation_error: float
    evaluations: int

    @property
    def feasible(self) -> bool:
        return self.pose is not None


def oracle_ik(target: Pose, x_rcm, geom: ToolGeometry, grid_resolution: int = 15,
              weights: IkWeights = IkWeights(), half_width=(0.01, 0.15), refinements: int = 2) -> OracleResult:
    """Brute-force minimizer of the IK residual over a 6-D box around the seed.

    The box spans +-half_width[0] meters in translation and +-half_width[1]
    radians in rotation (chart coordinates of the seed pose). Each refinement
    pass re-centers on the best cell and shrinks the box to two grid spacings.
    """
    x_rcm = np.asarray(x_rcm, dtype=float)
    try:
        center = seed_handle_pose(target, x_rcm, geom, weights)
    except DegenerateGeometry:
        return OracleResult(None, math.inf, math.inf, math.inf, 0)
    n = grid_resolution
    ht, hr = half_width
    best = (math.inf, None, math.inf, math.inf)
    evals = 0
    for _ in range(refinements + 1):
        lin = np.linspace(-1.0, 1.0, n)
        cube = np.array(list(itertools.product(lin, repeat=3)))  # (n^3, 3)
        Rg = center.rotation @ _rodrigues(cube * hr)              # all rotations of this pass
        Gg = np.einsum("...ji,jk->...ik", Rg, target.rotation)[None]
        pass_best = (math.inf, None, math.inf, math.inf)
        for a0 in lin:
            # one chunk: n^2 translations x n^3 rotations
            tr = np.empty((n * n, 3))
            tr[:, 0] = a0 * ht
            tr[:, 1:] = cube[: n * n, 1:] * ht
            x = (center.translation + tr)[:, None, :]
            cost, perr, oerr = _batch_cost(Rg[None], x, target, x_rcm, geom, weights, Gg)
            evals += cost.size
            i, j = np.unravel_index(int(np.argmin(cost)), cost.shape)
            if cost[i, j] < pass_best[0]:
                pass_best = (float(cost[i, j]), Pose(Rg[j], x[i, 0]), float(perr[i, j]), float(oerr[i, j]))
        if pass_best[1] is None:
            break
        if pass_best[0] < best[0]:
            best = pass_best
        center = best[1]
        ht, hr = 4 * ht / (n - 1), 4 * hr / (n - 1)
    if best[1] is None:
        return OracleResult(None, math.inf, math.inf, math.inf, evals)
    return OracleResult(best[1], math.sqrt(best[0]), best[2], best[3], evals)
