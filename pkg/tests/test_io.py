import io as stdio
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lapkin.chain import prismatic, revolute, ChainModel
from lapkin.errors import InvalidInput
from lapkin.harness import io
from lapkin.harness.scoring import ErrorKind, TrialEvent
from lapkin.se3 import Pose, rotation_angle
from lapkin.solver import IkOptions, IkStatus, IkWeights
from lapkin.teleop import ConsoleSample, RobotCommand, Side
from lapkin.tool import JawCommand, RcmConfig, ToolGeometry

coord = st.floats(-10, 10, allow_nan=False)
vec3 = st.tuples(coord, coord, coord)
quat = st.tuples(*[st.floats(-1, 1)] * 4).filter(lambda q: np.linalg.norm(q) > 0.1)
poses = st.builds(lambda p, q: Pose.from_quat(p, q), vec3, quat)


def assert_pose_equal(a: Pose, b: Pose):
    np.testing.assert_allclose(a.translation, b.translation, atol=1e-12)
    assert rotation_angle(a.rotation, b.rotation) < 1e-9


def through_jsonl(records, parse):
    buf = stdio.StringIO()
    io.write_jsonl(buf, records)
    buf.seek(0)
    return list(io.read_jsonl(buf, parse))


@given(st.floats(0, 1e4), poses, st.floats(0, 1), st.booleans(), st.sampled_from(list(Side)))
def test_sample_round_trip(t, pose, grip, clutch, side):
    s = ConsoleSample(t, pose, grip, clutch, side)
    (back,) = through_jsonl([io.sample_to_record(s)], io.sample_from_record)
    assert (back.t, back.grip, back.clutch, back.side) == (t, grip, clutch, side)
    assert_pose_equal(back.pose, pose)


@given(st.floats(0, 1e4), poses, st.floats(0, 60), st.sampled_from(list(IkStatus)), st.floats(0, 1))
def test_command_round_trip(t, pose, jaw, status, dist):
    c = RobotCommand(t, Side.RIGHT, pose, JawCommand(jaw), status, dist)
    (back,) = through_jsonl([io.command_to_record(c)], io.command_from_record)
    assert (back.t, back.jaw.opening, back.ik_status, back.rcm_distance) == (t, jaw, status, dist)
    assert_pose_equal(back.ee_pose, pose)


def test_command_jaw_in_degrees():
    c = RobotCommand(0.0, Side.LEFT, Pose.identity(), JawCommand(60.0), IkStatus.CONVERGED, 0.0)
    assert io.command_to_record(c)["jaw_deg"] == 60.0


@given(st.floats(0, 1e4), st.sampled_from(list(ErrorKind)))
def test_event_round_trip(t, kind):
    (back,) = through_jsonl([io.event_to_record(TrialEvent(t, kind))], io.event_from_record)
    assert back == TrialEvent(t, kind)


def assert_nested_close(a, b):
    if isinstance(a, dict):
        assert a.keys() == b.keys()
        for k in a:
            assert_nested_close(a[k], b[k])
    elif isinstance(a, (list, tuple)):
        assert len(a) == len(b)
        for x, y in zip(a, b):
            assert_nested_close(x, y)
    elif isinstance(a, float):
        assert math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-15)
    else:
        assert a == b


def full_config():
    chain = ChainModel(
        (revolute([0, 0, 1], Pose.from_translation([0, 0, 0.1]), limits=(-math.pi / 2, math.pi / 2)),
         prismatic([1, 0, 0], limits=(0.0, 0.2))),
        Pose.from_quat([0, 0, 0.05], [0.9, 0.1, 0.2, 0.3]),
    )
    return io.HarnessConfig(
        geometry=ToolGeometry(l0=0.25, l12=0.04, l1=0.4, sign_convention="handle_z", axis_convention="xz"),
        rcm_left=RcmConfig([0.1, 0, 0.2], 2e-4), rcm_right=RcmConfig([-0.1, 0, 0.2], 2e-4),
        weights=IkWeights(w_t=50.0, w_a=5.0), options=IkOptions(max_iterations=50, residual_tolerance=1e-9),
        t_offset=(0.0, 0.0, -0.02), scale=0.5,
        registration=Pose.from_quat([0.1, 0.2, 0.3], [0.8, 0.0, 0.6, 0.0]), chain=chain,
    )


def test_config_round_trip():
    cfg = full_config()
    d = io.config_to_dict(cfg)
    back = io.config_from_dict(json.loads(json.dumps(d)))
    assert back.geometry.l0 == 0.25 and back.geometry.sign_convention.value == "handle_z"
    assert math.isclose(back.geometry.theta_max, cfg.geometry.theta_max, rel_tol=1e-15)
    np.testing.assert_array_equal(back.rcm_right.x_rcm, [-0.1, 0, 0.2])
    assert back.rcm_left.tolerance == 2e-4
    assert back.weights == cfg.weights
    assert back.options == cfg.options
    assert back.t_offset == cfg.t_offset and back.scale == 0.5
    assert_pose_equal(back.registration, cfg.registration)
    assert back.chain.dof == 2
    assert math.isclose(back.chain.joints[0].limits[1], math.pi / 2, rel_tol=1e-15)
    assert back.chain.joints[1].limits == (0.0, 0.2)
    assert_nested_close(io.config_to_dict(back), d)


def test_config_degrees_at_boundary():
    d = io.config_to_dict(io.HarnessConfig())
    assert d["geometry"]["theta_max_deg"] == pytest.approx(45.0)
    assert d["ik"]["theta_max_deg"] == pytest.approx(45.0)
    assert io.config_from_dict({"geometry": {"theta_max_deg": 30}}).geometry.theta_max == pytest.approx(math.pi / 6)


def test_config_defaults_and_single_rcm():
    cfg = io.config_from_dict({"rcm": {"x_rcm_m": [1, 2, 3]}})
    assert cfg.geometry == ToolGeometry()
    np.testing.assert_array_equal(cfg.rcm(Side.LEFT).x_rcm, cfg.rcm(Side.RIGHT).x_rcm)


def test_load_config_errors(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{\n  "geometry": {\n    "l0_m": oops\n  }\n}\n')
    with pytest.raises(io.RecordError) as exc:
        io.load_config(p)
    assert exc.value.line == 3
    p.write_text('{"geometry": {"l0_m": -1}}')
    with pytest.raises(InvalidInput):
        io.load_config(p)


def test_read_jsonl_reports_line_numbers():
    good = json.dumps({"t": 0.0, "kind": "drop"})
    text = "\n".join([good, "", good, "{not json", good])
    with pytest.raises(io.RecordError) as exc:
        list(io.read_jsonl(stdio.StringIO(text), io.event_from_record))
    assert exc.value.line == 4 and "line 4" in str(exc.value)


def test_read_jsonl_invalid_fields():
    bad = [
        {"t": 0, "side": "L", "pos": [0, 0, 0], "quat": [1, 0, 0, 0], "grip": 1.5, "clutch": False},
        {"t": 0, "side": "L", "pos": [0, 0, 0], "quat": [1, 0, 0, 0], "grip": 0.5, "clutch": "yes"},
        {"t": 0, "side": "X", "pos": [0, 0, 0], "quat": [1, 0, 0, 0], "grip": 0.5},
        {"t": 0, "side": "L", "pos": [0, 0], "quat": [1, 0, 0, 0], "grip": 0.5},
        {"side": "L", "pos": [0, 0, 0], "quat": [1, 0, 0, 0], "grip": 0.5},
    ]
    for rec in bad:
        with pytest.raises(io.RecordError) as exc:
            list(io.read_jsonl(stdio.StringIO("\n" + json.dumps(rec) + "\n"), io.sample_from_record))
        assert exc.value.line == 2
    with pytest.raises(io.RecordError):
        list(io.read_jsonl(stdio.StringIO("[1, 2]\n"), io.event_from_record))
