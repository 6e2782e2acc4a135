"""Console stream -> robot command pipeline, one independent instance per side.

Position is mapped scaled-relative to the anchor captured at the last clutch
release; orientation is absolute, composed with the offset captured at that
same release. `step` is a pure function of (state, sample, config).
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Optional

import numpy as np

from .errors import InvalidInput, OutOfOrderSample
from .se3 import Pose, inverse
from .solver import IkOptions, IkResult, IkStatus, IkWeights, solve_ik
from .tool import JawCommand, RcmConfig, ToolGeometry, forward, jaw_map, shaft_rcm_distance

log = logging.getLogger(__name__)


class Side(str, enum.Enum):
    LEFT = "L"
    RIGHT = "R"


@dataclass(frozen=True)
class ConsoleSample:
    t: float
    pose: Pose
    grip: float
    clutch: bool
    side: Side

    def __post_init__(self):
        object.__setattr__(self, "side", Side(self.side))


# trajectory files use the same record shape as the console stream
TrajectorySample = ConsoleSample


@dataclass(frozen=True)
class TeleopConfig:
    rcm_left: RcmConfig
    rcm_right: RcmConfig
    geometry: ToolGeometry = field(default_factory=ToolGeometry)
    weights: IkWeights = field(default_factory=IkWeights)
    options: IkOptions = field(default_factory=IkOptions)
    scale: float = 1.0
    registration: Pose = field(default_factory=Pose.identity)
    t_offset: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not (0.0 < self.scale <= 1.0):
            raise InvalidInput(f"motion scale must lie in (0, 1], got {self.scale}")

    def rcm(self, side: Side) -> RcmConfig:
        return self.rcm_left if Side(side) is Side.LEFT else self.rcm_right


@dataclass(frozen=True)
class RobotCommand:
    t: float
    side: Side
    ee_pose: Pose
    jaw: JawCommand
    ik_status: IkStatus
    rcm_distance: float

    def __post_init__(self):
        object.__setattr__(self, "side", Side(self.side))
        object.__setattr__(self, "ik_status", IkStatus(self.ik_status))
        if self.rcm_distance < 0:
            raise InvalidInput("rcm_distance must be non-negative")


@dataclass(frozen=True)
class TeleopState:
    side: Side
    last_t: Optional[float] = None
    clutched: bool = False
    anchor_console: Optional[np.ndarray] = None
    anchor_tip: Optional[np.ndarray] = None
    orientation_offset: Optional[np.ndarray] = None
    # last commanded tip target and the handle pose that realized it
    target: Optional[Pose] = None
    solution: Optional[Pose] = None
    last_result: Optional[IkResult] = None
    degraded: int = 0

    @classmethod
    def initial(cls, side: Side, target: Optional[Pose] = None, solution: Optional[Pose] = None) -> TeleopState:
        return cls(Side(side), target=target, solution=solution)


def register_workspace(console_probe: Pose, task_probe: Pose) -> Pose:
    """Rigid transform T (console -> task) with T * console_probe = task_probe."""
    return task_probe @ inverse(console_probe)


def _target_pose(state: TeleopState, registered: Pose, scale: float) -> Pose:
    pos = state.anchor_tip + scale * (registered.translation - state.anchor_console)
    return Pose(registered.rotation @ state.orientation_offset, pos)


def step(state: TeleopState, sample: ConsoleSample, config: TeleopConfig) -> tuple[TeleopState, Optional[RobotCommand]]:
    if sample.side is not state.side:
        raise InvalidInput(f"sample for side {sample.side.value} fed to the {state.side.value} pipeline")
    if state.last_t is not None and not sample.t > state.last_t:
        raise OutOfOrderSample(f"t={sample.t} does not follow t={state.last_t} on side {state.side.value}")
    state = replace(state, last_t=sample.t)
    if sample.clutch:
        return replace(state, clutched=True), None

    registered = config.registration @ sample.pose
    if state.anchor_console is None or state.clutched:
        if state.target is not None:
            tip_pos, tip_rot = state.target.translation, state.target.rotation
        else:
            tip_pos, tip_rot = registered.translation, registered.rotation
        state = replace(
            state,
            clutched=False,
            anchor_console=registered.translation.copy(),
            anchor_tip=np.array(tip_pos),
            orientation_offset=registered.rotation.T @ tip_rot,
        )

    target = _target_pose(state, registered, config.scale)
    rcm = config.rcm(state.side)
    options = replace(config.options, warm_start=state.solution)
    result = solve_ik(target, rcm.x_rcm, config.geometry, config.weights, options, config.t_offset)
    if result.status is IkStatus.DEGENERATE:
        log.warning("IK degenerate at t=%s on side %s; command withheld", sample.t, state.side.value)
        return replace(state, degraded=state.degraded + 1, last_result=result), None

    st = forward(result.handle1_pose, rcm.x_rcm, config.geometry)
    cmd = RobotCommand(
        t=sample.t,
        side=state.side,
        ee_pose=result.ee_pose,
        jaw=jaw_map(sample.grip),
        ik_status=result.status,
        rcm_distance=shaft_rcm_distance(st.x_h2, st.x_tt, rcm.x_rcm),
    )
    return replace(state, target=target, solution=result.handle1_pose, last_result=result), cmd


@dataclass(frozen=True)
class StepRecord:
    """A command plus the target and solver diagnostics behind it."""

    command: RobotCommand
    target: Pose
    result: IkResult


def run_stream(samples: Iterable[ConsoleSample], config: TeleopConfig,
               states: Optional[dict] = None) -> Iterator[StepRecord]:
    """Feed a (possibly interleaved) two-sided stream through per-side pipelines."""
    states = states if states is not None else {}
    for sample in samples:
        st = states.get(sample.side) or TeleopState.initial(sample.side)
        st, cmd = step(st, sample, config)
        states[sample.side] = st
        if cmd is not None:
            yield StepRecord(cmd, st.target, st.last_result)
