import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from lapkin.errors import InvalidInput, OutOfOrderSample
from lapkin.harness.oracle import random_handle_state
from lapkin.harness.peg import SCENARIO_GEOMETRY
from lapkin.se3 import Pose, rot_exp, rotation_angle
from lapkin.solver import IkStatus
from lapkin.teleop import (
    ConsoleSample, Side, TeleopConfig, TeleopState, register_workspace, run_stream, step,
)
from lapkin.tool import RcmConfig, forward, jaw_map

GEOM = SCENARIO_GEOMETRY
CONSOLE0 = Pose(Rotation.from_rotvec([0.2, -0.1, 0.4]).as_matrix(), [0.1, 0.2, 0.3])


def setup(rng, scale=1.0, side=Side.LEFT):
    """Config whose registration maps CONSOLE0 onto a reachable tip pose."""
    h = random_handle_state(rng, GEOM, max_deflection_deg=20)
    reg = register_workspace(CONSOLE0, h.tip)
    rcm = RcmConfig(h.x_rcm)
    return TeleopConfig(rcm, rcm, geometry=GEOM, scale=scale, registration=reg), h


def sample(t, pos, R=None, clutch=False, grip=0.5, side=Side.LEFT):
    return ConsoleSample(t, Pose(CONSOLE0.rotation if R is None else R, pos), grip, clutch, side)


def run(samples, cfg):
    return list(run_stream(samples, cfg))


def commanded_tip(rec, cfg):
    st = forward(rec.result.handle1_pose, cfg.rcm_left.x_rcm, cfg.geometry)
    return st.x_tt, st.R_tt


# --- register_workspace ------------------------------------------------------

def test_register_identical_probes():
    np.testing.assert_allclose(register_workspace(CONSOLE0, CONSOLE0).as_matrix(), np.eye(4), atol=1e-15)


def test_register_translation_offset():
    T = register_workspace(Pose.from_translation([1, 2, 3]), Pose.from_translation([1.5, 2, 2]))
    np.testing.assert_array_equal(T.rotation, np.eye(3))
    np.testing.assert_allclose(T.translation, [0.5, 0, -1], atol=1e-15)


def test_register_defining_equation(rng):
    for _ in range(50):
        a = Pose(Rotation.random(random_state=rng).as_matrix(), rng.normal(size=3))
        b = Pose(Rotation.random(random_state=rng).as_matrix(), rng.normal(size=3))
        np.testing.assert_allclose((register_workspace(a, b) @ a).as_matrix(), b.as_matrix(), atol=1e-12)


# --- step semantics -----------------------------------------------------------

def test_first_sample_anchors_at_registered_pose(rng):
    cfg, h = setup(rng)
    (rec,) = run([sample(0.0, CONSOLE0.translation)], cfg)
    np.testing.assert_allclose(rec.target.translation, h.x_tt, atol=1e-12)
    assert rotation_angle(rec.target.rotation, h.R_tt) < 1e-12
    assert rec.command.ik_status is IkStatus.CONVERGED
    x_tt, _ = commanded_tip(rec, cfg)
    np.testing.assert_allclose(x_tt, h.x_tt, atol=1e-9)


def test_clutch_emits_nothing_and_resumes_from_pre_clutch_target(rng):
    cfg, _ = setup(rng)
    p0 = CONSOLE0.translation
    samples = [sample(0.01 * i, p0 + [0.001 * i, 0, 0]) for i in range(5)]
    # clutched: the operator moves far away and rotates the handle
    samples += [sample(0.05 + 0.01 * i, p0 + [0.05, 0.02 * i, 0], rot_exp([0, 0, 0.1 * i]) @ CONSOLE0.rotation,
                       clutch=True) for i in range(10)]
    moved = p0 + [0.05, 0.2, 0.0]
    samples.append(sample(0.2, moved, rot_exp([0, 0, 0.9]) @ CONSOLE0.rotation))
    recs = run(samples, cfg)
    assert len(recs) == 6
    assert [r.command.t for r in recs] == [0.0, 0.01, 0.02, 0.03, 0.04, 0.2]
    before, after = recs[4], recs[5]
    assert np.linalg.norm(after.target.translation - before.target.translation) < 1e-9
    assert rotation_angle(after.target.rotation, before.target.rotation) < 1e-9
    x_b, _ = commanded_tip(before, cfg)
    x_a, _ = commanded_tip(after, cfg)
    assert np.linalg.norm(x_a - x_b) < 1e-9


def test_clutch_idempotent_without_motion(rng):
    cfg, _ = setup(rng)
    p = CONSOLE0.translation + [0.003, -0.002, 0.001]
    recs = run([sample(0.0, CONSOLE0.translation), sample(0.01, p), sample(0.02, p, clutch=True),
                sample(0.03, p)], cfg)
    a, b = recs[1].target, recs[2].target
    np.testing.assert_allclose(b.as_matrix(), a.as_matrix(), atol=1e-12, rtol=0)


@pytest.mark.parametrize("scale", [0.5, 1.0])
def test_scaling_along_registered_axis(rng, scale):
    cfg, _ = setup(rng, scale=scale)
    # console direction that the registration maps onto task +x
    d = cfg.registration.rotation.T @ np.array([1.0, 0.0, 0.0])
    recs = run([sample(0.0, CONSOLE0.translation), sample(0.01, CONSOLE0.translation + 0.010 * d)], cfg)
    disp = recs[1].target.translation - recs[0].target.translation
    np.testing.assert_allclose(disp, [0.010 * scale, 0, 0], atol=1e-12)
    x0, _ = commanded_tip(recs[0], cfg)
    x1, _ = commanded_tip(recs[1], cfg)
    assert np.linalg.norm((x1 - x0) - disp) < 1e-5


def test_orientation_is_absolute_with_release_offset(rng):
    cfg, _ = setup(rng)
    dR = rot_exp([0.05, -0.03, 0.08])  # rotation applied in the console frame
    R_console = dR @ CONSOLE0.rotation
    recs = run([sample(0.0, CONSOLE0.translation), sample(0.01, CONSOLE0.translation, R_console)], cfg)
    reg = cfg.registration.rotation
    expected = (reg @ dR @ reg.T) @ recs[0].target.rotation
    assert rotation_angle(recs[1].target.rotation, expected) < 1e-12


def test_jaw_follows_grip(rng):
    cfg, _ = setup(rng)
    recs = run([sample(0.0, CONSOLE0.translation, grip=0.25), sample(0.01, CONSOLE0.translation, grip=1.0)], cfg)
    assert [r.command.jaw for r in recs] == [jaw_map(0.25), jaw_map(1.0)]


def test_arc_replay_rcm_and_smoothness(rng):
    for scale in (1.0, 0.5):
        cfg, _ = setup(rng, scale=scale)
        n, radius = 200, 0.01
        pts = []
        for i in range(n):
            a = math.pi * i / (n - 1)
            pts.append(CONSOLE0.translation + radius * np.array([math.cos(a) - 1, math.sin(a), 0.3 * math.sin(a)]))
        recs = run([sample(0.01 * i, p) for i, p in enumerate(pts)], cfg)
        assert len(recs) == n
        assert max(r.command.rcm_distance for r in recs) < cfg.rcm_left.tolerance
        ee = np.array([r.command.ee_pose.translation for r in recs])
        ee_step = np.linalg.norm(np.diff(ee, axis=0), axis=1)
        console_step = np.linalg.norm(np.diff(np.array(pts), axis=0), axis=1)
        assert np.all(ee_step < 5 * scale * console_step)


def test_stream_determinism(rng):
    cfg, _ = setup(rng)
    samples = [sample(0.01 * i, CONSOLE0.translation + 0.004 * np.array([math.sin(i / 5), math.cos(i / 7) - 1, 0]))
               for i in range(30)]
    a, b = run(samples, cfg), run(samples, cfg)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.command.ee_pose.as_matrix(), y.command.ee_pose.as_matrix())
        assert (x.command.t, x.command.jaw, x.command.ik_status, x.command.rcm_distance) == \
            (y.command.t, y.command.jaw, y.command.ik_status, y.command.rcm_distance)


def test_step_is_pure(rng):
    cfg, _ = setup(rng)
    s0 = TeleopState.initial(Side.LEFT)
    st1, c1 = step(s0, sample(0.0, CONSOLE0.translation), cfg)
    st2, c2 = step(s0, sample(0.0, CONSOLE0.translation), cfg)
    assert s0.last_t is None and s0.anchor_console is None
    np.testing.assert_array_equal(c1.ee_pose.as_matrix(), c2.ee_pose.as_matrix())


def test_out_of_order_and_wrong_side(rng):
    cfg, _ = setup(rng)
    st, _ = step(TeleopState.initial(Side.LEFT), sample(1.0, CONSOLE0.translation), cfg)
    with pytest.raises(OutOfOrderSample):
        step(st, sample(1.0, CONSOLE0.translation), cfg)
    with pytest.raises(OutOfOrderSample):
        step(st, sample(0.5, CONSOLE0.translation), cfg)
    with pytest.raises(InvalidInput):
        step(st, sample(2.0, CONSOLE0.translation, side=Side.RIGHT), cfg)


def test_degenerate_target_withholds_command(rng):
    cfg, h = setup(rng)
    # a registration that sends the first console pose onto the RCM itself
    reg = register_workspace(CONSOLE0, Pose(h.R_tt, h.x_rcm))
    cfg = TeleopConfig(cfg.rcm_left, cfg.rcm_right, geometry=GEOM, registration=reg)
    st, cmd = step(TeleopState.initial(Side.LEFT), sample(0.0, CONSOLE0.translation), cfg)
    assert cmd is None
    assert st.degraded == 1
    assert st.last_result.status is IkStatus.DEGENERATE


def test_sides_are_independent(rng):
    cfg, h = setup(rng)
    left = [sample(0.01 * i, CONSOLE0.translation + [0.001 * i, 0, 0]) for i in range(5)]
    right = [sample(0.01 * i, CONSOLE0.translation - [0.001 * i, 0, 0], side=Side.RIGHT) for i in range(5)]
    merged = [s for pair in zip(left, right) for s in pair]
    both = run(merged, cfg)
    only_left = run(left, cfg)
    got_left = [r for r in both if r.command.side is Side.LEFT]
    for a, b in zip(got_left, only_left):
        np.testing.assert_array_equal(a.command.ee_pose.as_matrix(), b.command.ee_pose.as_matrix())


def test_config_validation(rng):
    rcm = RcmConfig([0, 0, 0])
    with pytest.raises(InvalidInput):
        TeleopConfig(rcm, rcm, scale=0.0)
    with pytest.raises(InvalidInput):
        TeleopConfig(rcm, rcm, scale=1.5)
