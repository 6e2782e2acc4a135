"""Synthetic bimanual peg-transfer trajectories in tool-tip space.

Board layout, seen from above with +x to the right and +y away from the
operator:

    BL ---- BR
    |   C    |
    FL ---- FR

Rings start on FL and BR. The left arm carries the front ring to the
center and hands it to the right arm, which places it on FR. The roles then
swap for the back ring: the right arm lifts it from BR and the left arm
places it on BL. Both streams share one clock. Grip is 1.0 open, 0.0 closed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import InvalidInput
from ..se3 import Pose, rot_x, rot_y, rot_z
from ..teleop import Side, TrajectorySample
from ..tool import ToolGeometry

PEG_SPACING_M = 0.040
LIFT_HEIGHT_M = 0.030
# RCM height above the centroid of each arm's waypoints in the demo scenario
RCM_DEPTH_M = 0.185
# Instrument inserted deeper than the library default (handle 2 at 0.20 m
# from the keyhole instead of 0.30 m): the tip then sweeps a shell around the
# RCM thick enough to hold the whole 40 mm board plus the lift.
SCENARIO_GEOMETRY = ToolGeometry(l0=0.20, l12=0.05, l1=0.36)

OPEN, CLOSED = 1.0, 0.0
MIRROR = np.diag([-1.0, 1.0, 1.0])


@dataclass(frozen=True)
class PegBoard:
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    spacing: float = PEG_SPACING_M
    # tip height above the board surface when grasping a ring on its peg
    grasp_height: float = 0.010
    ring_starts: tuple[str, ...] = ("FL", "BR")

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(3))
        if self.spacing <= 0:
            raise InvalidInput("peg spacing must be positive")
        if any(name not in ("FL", "FR", "BL", "BR") for name in self.ring_starts):
            raise InvalidInput(f"unknown peg in ring_starts: {self.ring_starts}")

    @property
    def pegs(self) -> dict[str, np.ndarray]:
        h = 0.5 * self.spacing
        offsets = {"FL": (-h, -h), "FR": (h, -h), "BL": (-h, h), "BR": (h, h)}
        return {k: self.center + np.array([dx, dy, 0.0]) for k, (dx, dy) in offsets.items()}


def smoothstep(u: np.ndarray) -> np.ndarray:
    """Cubic ease with zero end velocities; s(1 - u) = 1 - s(u)."""
    return u * u * (3.0 - 2.0 * u)


def mirror_rotation(R: np.ndarray) -> np.ndarray:
    """Reflect an orientation across the board's x = const center plane.

    The reflected frame is followed by a half turn about the tip z axis: the
    jaws look the same either way, but the instrument linkage is chiral and
    can only reach the rolled version.
    """
    return MIRROR @ R @ MIRROR @ rot_z(np.pi)


# One entry per time slot: (start waypoint, end waypoint, grip at start, grip at end).
# Waypoint names: H home, C hand-off, <peg> grasp height, a<peg> lifted above it.
_LEFT_PLAN = [
    ("H", "aFL", OPEN, OPEN), ("aFL", "FL", OPEN, OPEN), ("FL", "FL", OPEN, CLOSED),
    ("FL", "aFL", CLOSED, CLOSED), ("aFL", "C", CLOSED, CLOSED), ("C", "C", CLOSED, CLOSED),
    ("C", "C", CLOSED, OPEN), ("C", "H", OPEN, OPEN),
    *[("H", "H", OPEN, OPEN)] * 8,
    ("H", "C", OPEN, OPEN), ("C", "C", OPEN, CLOSED), ("C", "C", CLOSED, CLOSED),
    ("C", "aBL", CLOSED, CLOSED), ("aBL", "BL", CLOSED, CLOSED), ("BL", "BL", CLOSED, OPEN),
    ("BL", "aBL", OPEN, OPEN), ("aBL", "H", OPEN, OPEN),
]
_RIGHT_PLAN = [
    *[("H", "H", OPEN, OPEN)] * 4,
    ("H", "C", OPEN, OPEN), ("C", "C", OPEN, CLOSED), ("C", "C", CLOSED, CLOSED),
    ("C", "aFR", CLOSED, CLOSED), ("aFR", "FR", CLOSED, CLOSED), ("FR", "FR", CLOSED, OPEN),
    ("FR", "aFR", OPEN, OPEN), ("aFR", "H", OPEN, OPEN), ("H", "aBR", OPEN, OPEN),
    ("aBR", "BR", OPEN, OPEN), ("BR", "BR", OPEN, CLOSED), ("BR", "aBR", CLOSED, CLOSED),
    ("aBR", "C", CLOSED, CLOSED), ("C", "C", CLOSED, CLOSED), ("C", "C", CLOSED, OPEN),
    ("C", "H", OPEN, OPEN),
    *[("H", "H", OPEN, OPEN)] * 4,
]


def waypoints(board: PegBoard, side: Side, lift_height: float = LIFT_HEIGHT_M) -> dict[str, np.ndarray]:
    up = np.array([0.0, 0.0, 1.0])
    grasp = {k: p + board.grasp_height * up for k, p in board.pegs.items()}
    wp = dict(grasp)
    wp.update({"a" + k: p + lift_height * up for k, p in grasp.items()})
    wp["C"] = board.center + (board.grasp_height + lift_height) * up
    sx = -1.0 if Side(side) is Side.LEFT else 1.0
    wp["H"] = wp["C"] + np.array([sx * board.spacing, 0.0, 0.0])
    return wp


DEFAULT_TILT_DEG = 20.0


def default_orientation() -> np.ndarray:
    """Left-tip orientation: jaw axis pointing down, tilted toward +x.

    A tip axis exactly along the vertical is not reachable with a vertical
    shaft (the handle axis always leans off the shaft), hence the tilt.
    """
    return rot_y(np.radians(DEFAULT_TILT_DEG)) @ rot_x(np.pi)


def gen_peg_transfer(board: Optional[PegBoard] = None, lift_height: float = LIFT_HEIGHT_M,
                     samples_per_segment: int = 20, dt: float = 0.02,
                     orientation_left: Optional[np.ndarray] = None) -> tuple[list, list]:
    """Left and right tip trajectories; the right one mirrors the left's geometry.

    Each slot emits `samples_per_segment` samples including both endpoints;
    the endpoint shared by consecutive slots is emitted once.
    """
    if samples_per_segment < 2:
        raise InvalidInput("samples_per_segment must be at least 2")
    board = board or PegBoard()
    R_left = default_orientation() if orientation_left is None else np.asarray(orientation_left, float)
    R = {Side.LEFT: R_left, Side.RIGHT: mirror_rotation(R_left)}
    plans = {Side.LEFT: _LEFT_PLAN, Side.RIGHT: _RIGHT_PLAN}
    assert len(_LEFT_PLAN) == len(_RIGHT_PLAN)

    u_all = np.linspace(0.0, 1.0, samples_per_segment)
    streams = {}
    for side, plan in plans.items():
        wp = waypoints(board, side, lift_height)
        out = []
        for i, (a, b, g0, g1) in enumerate(plan):
            us = u_all if i == 0 else u_all[1:]
            for u in us:
                s = float(smoothstep(u))
                # exact at both ends: s = 0 gives wp[a], s = 1 gives wp[b]
                pos = (1.0 - s) * wp[a] + s * wp[b]
                n = len(out)
                out.append(TrajectorySample(
                    t=round(n * dt, 9), pose=Pose(R[side], pos),
                    grip=g0 + (g1 - g0) * float(u), clutch=False, side=side,
                ))
        streams[side] = out
    return streams[Side.LEFT], streams[Side.RIGHT]


def scenario_rcm(board: PegBoard, side: Side, lift_height: float = LIFT_HEIGHT_M,
                 depth: float = RCM_DEPTH_M) -> np.ndarray:
    """Keyhole placement that keeps one arm's whole task inside the tool workspace.

    The tip of the instrument stays within a shell around the RCM, so the
    keyhole is put straight above the centroid of that arm's waypoints.
    """
    pts = np.array(list(waypoints(board, side, lift_height).values()))
    return pts.mean(axis=0) + np.array([0.0, 0.0, depth])
