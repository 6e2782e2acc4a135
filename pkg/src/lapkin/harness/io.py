"""JSON config and JSONL record formats. Degrees at this boundary, radians inside."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Any, Callable, Iterable, Iterator, Optional

import numpy as np

from ..chain import ChainModel, JointKind, JointSpec
from ..errors import InvalidInput
from ..se3 import Pose
from ..solver import IkOptions, IkStatus, IkWeights
from ..teleop import ConsoleSample, RobotCommand, Side, TeleopConfig
from ..tool import JawCommand, RcmConfig, ToolGeometry
from .scoring import ErrorKind, TrialEvent


class RecordError(ValueError):
    """Malformed input record; `line` is 1-based (0 for whole-document errors)."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


@dataclass(frozen=True)
class HarnessConfig:
    geometry: ToolGeometry = field(default_factory=ToolGeometry)
    rcm_left: RcmConfig = field(default_factory=lambda: RcmConfig(np.zeros(3)))
    rcm_right: RcmConfig = field(default_factory=lambda: RcmConfig(np.zeros(3)))
    weights: IkWeights = field(default_factory=IkWeights)
    options: IkOptions = field(default_factory=IkOptions)
    t_offset: tuple = (0.0, 0.0, 0.0)
    scale: float = 1.0
    registration: Pose = field(default_factory=Pose.identity)
    chain: Optional[ChainModel] = None

    def teleop(self) -> TeleopConfig:
        return TeleopConfig(
            rcm_left=self.rcm_left, rcm_right=self.rcm_right, geometry=self.geometry,
            weights=self.weights, options=self.options, scale=self.scale,
            registration=self.registration, t_offset=tuple(self.t_offset),
        )

    def rcm(self, side: Side = Side.LEFT) -> RcmConfig:
        return self.rcm_left if Side(side) is Side.LEFT else self.rcm_right


def _vec(v, n: int, what: str) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.shape != (n,) or not np.all(np.isfinite(a)):
        raise InvalidInput(f"{what}: expected {n} finite numbers, got {v!r}")
    return a


def pose_from_json(pos, quat) -> Pose:
    return Pose.from_quat(_vec(pos, 3, "pos"), _vec(quat, 4, "quat"))


def pose_to_json(p: Pose) -> tuple[list, list]:
    return p.translation.tolist(), p.quat().tolist()


# --- config -----------------------------------------------------------------

def _rcm_from_dict(d: dict) -> RcmConfig:
    return RcmConfig(_vec(d["x_rcm_m"], 3, "x_rcm_m"), float(d.get("tolerance_m", 1e-4)))


def _joint_from_dict(d: dict) -> JointSpec:
    kind = JointKind(d["kind"])
    limits = d.get("limits")
    if limits is not None:
        lo, hi = map(float, limits)
        if kind is JointKind.REVOLUTE:
            lo, hi = math.radians(lo), math.radians(hi)
        limits = (lo, hi)
    origin = pose_from_json(d.get("origin_pos", [0, 0, 0]), d.get("origin_quat", [1, 0, 0, 0]))
    return JointSpec(kind, _vec(d["axis"], 3, "axis"), origin, limits)


def _joint_to_dict(j: JointSpec) -> dict:
    pos, quat = pose_to_json(j.origin)
    limits = None
    if j.limits is not None:
        limits = [math.degrees(v) for v in j.limits] if j.kind is JointKind.REVOLUTE else list(j.limits)
    return {"kind": j.kind.value, "axis": j.axis.tolist(), "origin_pos": pos, "origin_quat": quat, "limits": limits}


def config_from_dict(d: dict) -> HarnessConfig:
    """Build a config; every section and key is optional and defaults apply."""
    if not isinstance(d, dict):
        raise InvalidInput("config must be a JSON object")
    g = d.get("geometry", {})
    geom_defaults = ToolGeometry()
    geometry = ToolGeometry(
        l0=float(g.get("l0_m", geom_defaults.l0)),
        l12=float(g.get("l12_m", geom_defaults.l12)),
        l1=float(g.get("l1_m", geom_defaults.l1)),
        k=float(g.get("k", geom_defaults.k)),
        theta_max=math.radians(float(g.get("theta_max_deg", math.degrees(geom_defaults.theta_max)))),
        theta1_neutral=math.radians(float(g.get("theta1_neutral_deg", math.degrees(geom_defaults.theta1_neutral)))),
        sign_convention=g.get("sign_convention", geom_defaults.sign_convention.value),
        axis_convention=g.get("axis_convention", geom_defaults.axis_convention.value),
    )
    r = d.get("rcm", {"x_rcm_m": [0.0, 0.0, 0.0]})
    if "left" in r or "right" in r:
        rcm_left, rcm_right = _rcm_from_dict(r["left"]), _rcm_from_dict(r["right"])
    else:
        rcm_left = rcm_right = _rcm_from_dict(r)

    ik = d.get("ik", {})
    wd, od = IkWeights(), IkOptions()
    weights = IkWeights(
        w_t=float(ik.get("w_t", wd.w_t)), w_a=float(ik.get("w_a", wd.w_a)),
        theta_max=math.radians(float(ik.get("theta_max_deg", math.degrees(wd.theta_max)))),
    )
    options = IkOptions(
        max_iterations=int(ik.get("max_iterations", od.max_iterations)),
        residual_tolerance=float(ik.get("residual_tol", od.residual_tolerance)),
        step_tolerance=float(ik.get("step_tol", od.step_tolerance)),
        initial_trust_radius=float(ik.get("trust_radius", od.initial_trust_radius)),
    )
    t_offset = tuple(_vec(ik.get("t_offset_m", [0, 0, 0]), 3, "t_offset_m").tolist())

    t = d.get("teleop", {})
    registration = pose_from_json(t.get("registration_pos", [0, 0, 0]), t.get("registration_quat", [1, 0, 0, 0]))
    chain = None
    if d.get("chain"):
        c = d["chain"]
        joints = c["joints"] if isinstance(c, dict) else c
        ee = c.get("ee_offset", {}) if isinstance(c, dict) else {}
        chain = ChainModel(
            tuple(_joint_from_dict(j) for j in joints),
            pose_from_json(ee.get("pos", [0, 0, 0]), ee.get("quat", [1, 0, 0, 0])),
        )
    return HarnessConfig(geometry, rcm_left, rcm_right, weights, options, t_offset,
                         float(t.get("scale", 1.0)), registration, chain)


def config_to_dict(cfg: HarnessConfig) -> dict:
    g = cfg.geometry

    def rcm(r: RcmConfig) -> dict:
        return {"x_rcm_m": np.asarray(r.x_rcm).tolist(), "tolerance_m": r.tolerance}

    same = np.array_equal(cfg.rcm_left.x_rcm, cfg.rcm_right.x_rcm) and cfg.rcm_left.tolerance == cfg.rcm_right.tolerance
    reg_pos, reg_quat = pose_to_json(cfg.registration)
    out = {
        "geometry": {
            "l0_m": g.l0, "l12_m": g.l12, "l1_m": g.l1, "k": g.k,
            "theta_max_deg": math.degrees(g.theta_max), "theta1_neutral_deg": math.degrees(g.theta1_neutral),
            "sign_convention": g.sign_convention.value, "axis_convention": g.axis_convention.value,
        },
        "rcm": rcm(cfg.rcm_left) if same else {"left": rcm(cfg.rcm_left), "right": rcm(cfg.rcm_right)},
        "ik": {
            "w_t": cfg.weights.w_t, "w_a": cfg.weights.w_a,
            "theta_max_deg": math.degrees(cfg.weights.theta_max),
            "max_iterations": cfg.options.max_iterations, "residual_tol": cfg.options.residual_tolerance,
            "step_tol": cfg.options.step_tolerance, "trust_radius": cfg.options.initial_trust_radius,
            "t_offset_m": list(cfg.t_offset),
        },
        "teleop": {"scale": cfg.scale, "registration_pos": reg_pos, "registration_quat": reg_quat},
    }
    if cfg.chain is not None:
        pos, quat = pose_to_json(cfg.chain.ee_offset)
        out["chain"] = {"joints": [_joint_to_dict(j) for j in cfg.chain.joints],
                        "ee_offset": {"pos": pos, "quat": quat}}
    return out


def load_config(path) -> HarnessConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise RecordError(exc.lineno, f"malformed JSON: {exc.msg}") from exc
    try:
        return config_from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInput(f"invalid config: {exc}") from exc


# --- records ----------------------------------------------------------------

def sample_to_record(s: ConsoleSample) -> dict:
    pos, quat = pose_to_json(s.pose)
    return {"t": s.t, "side": s.side.value, "pos": pos, "quat": quat, "grip": s.grip, "clutch": s.clutch}


def sample_from_record(d: dict) -> ConsoleSample:
    grip = float(d["grip"])
    if not 0.0 <= grip <= 1.0:
        raise InvalidInput(f"grip must lie in [0, 1], got {grip}")
    clutch = d.get("clutch", False)
    if not isinstance(clutch, bool):
        raise InvalidInput("clutch must be a boolean")
    return ConsoleSample(float(d["t"]), pose_from_json(d["pos"], d["quat"]), grip, clutch, Side(d["side"]))


def command_to_record(c: RobotCommand) -> dict:
    pos, quat = pose_to_json(c.ee_pose)
    return {"t": c.t, "side": c.side.value, "ee_pos": pos, "ee_quat": quat,
            "jaw_deg": c.jaw.opening, "ik_status": c.ik_status.value, "rcm_dist_m": c.rcm_distance}


def command_from_record(d: dict) -> RobotCommand:
    return RobotCommand(float(d["t"]), Side(d["side"]), pose_from_json(d["ee_pos"], d["ee_quat"]),
                        JawCommand(float(d["jaw_deg"])), IkStatus(d["ik_status"]), float(d["rcm_dist_m"]))


def event_to_record(e: TrialEvent) -> dict:
    return {"t": e.t, "kind": e.kind.value}


def event_from_record(d: dict) -> TrialEvent:
    return TrialEvent(float(d["t"]), ErrorKind(d["kind"]))


def read_jsonl(stream: IO[str], parse: Callable[[dict], Any]) -> Iterator[Any]:
    """Parse one record per non-blank line; errors carry the 1-based line number."""
    for n, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
        except json.JSONDecodeError as exc:
            raise RecordError(n, f"malformed JSON: {exc.msg}") from exc
        if not isinstance(d, dict):
            raise RecordError(n, "record must be a JSON object")
        try:
            yield parse(d)
        except (KeyError, TypeError, ValueError) as exc:
            raise RecordError(n, f"invalid record: {exc!r}") from exc


def write_jsonl(stream: IO[str], records: Iterable[dict]) -> None:
    for rec in records:
        stream.write(json.dumps(rec) + "\n")
