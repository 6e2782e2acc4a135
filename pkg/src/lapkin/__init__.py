"""Passive kinematics and RCM-constrained inverse mapping for wristed laparoscopic tools."""
from .errors import (
    DegenerateGeometry,
    DimensionMismatch,
    InvalidInput,
    LapkinError,
    NonOrthonormal,
    OutOfOrderSample,
    Unreachable,
)
from .se3 import Pose, compose, inverse, retract, rot_exp, rot_log
from .solver import IkOptions, IkResult, IkStatus, IkWeights, ik_residual, seed_handle_pose, solve_ik
from .tool import PassiveState, RcmConfig, ToolGeometry, jaw_map, tool_tip_pose

__version__ = "0.1.0"
