import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import least_squares
from scipy.spatial.transform import Rotation

from lapkin.errors import InvalidInput, NonOrthonormal
from lapkin.se3 import (
    Pose, check_rotation, compose, inverse, local_coordinates, matrix_from_quat, quat_from_matrix,
    retract, rot_exp, rot_log, rot_x, rot_z,
)

finite = st.floats(-3.0, 3.0, allow_nan=False)
vec3 = st.tuples(finite, finite, finite).map(np.array)
quat = st.tuples(*[st.floats(-1, 1)] * 4).filter(lambda q: np.linalg.norm(q) > 0.1).map(np.array)


def pose_from(q, t):
    return Pose(Rotation.from_quat(q).as_matrix(), t)


# --- rot_exp ----------------------------------------------------------------

def test_exp_zero_is_identity():
    np.testing.assert_array_equal(rot_exp([0, 0, 0]), np.eye(3))


def test_exp_quarter_turn_maps_x_to_y():
    np.testing.assert_allclose(rot_exp([0, 0, math.pi / 2]) @ [1, 0, 0], [0, 1, 0], atol=1e-15)


def test_exp_log_against_quaternion_oracle():
    v = np.array([0.3, -0.2, 0.1])
    np.testing.assert_allclose(rot_exp(v), Rotation.from_rotvec(v).as_matrix(), atol=1e-14)
    np.testing.assert_allclose(rot_log(rot_exp(v)), v, atol=1e-10)


@given(vec3)
def test_exp_matches_scipy(v):
    np.testing.assert_allclose(rot_exp(v), Rotation.from_rotvec(v).as_matrix(), atol=1e-12)


def test_exp_rejects_non_finite():
    with pytest.raises(InvalidInput):
        rot_exp([np.nan, 0, 0])


# --- rot_log ----------------------------------------------------------------

def test_log_identity():
    np.testing.assert_array_equal(rot_log(np.eye(3)), np.zeros(3))


def test_log_half_turn_about_x():
    np.testing.assert_allclose(rot_log(rot_x(math.pi)), [math.pi, 0, 0], atol=1e-12)


@pytest.mark.parametrize("axis", [[1, 0, 0], [0, 1, 0], [0, 0, 1], [0, -1, 1], [-1, -1, -1]])
def test_log_exact_half_turn_sign_convention(axis):
    a = np.array(axis, float) / np.linalg.norm(axis)
    R = 2 * np.outer(a, a) - np.eye(3)  # exact rotation by pi about a
    w = rot_log(R)
    assert abs(np.linalg.norm(w) - math.pi) < 1e-12
    first = next(c for c in w if abs(c) > 1e-9)
    assert first > 0
    np.testing.assert_allclose(np.abs(w), np.pi * np.abs(a), atol=1e-9)


def test_log_small_angle():
    np.testing.assert_allclose(rot_log(rot_exp([0.01, 0, 0])), [0.01, 0, 0], atol=1e-12)


def test_log_near_half_turn_matches_scipy():
    for eps in (1e-3, 1e-6, 1e-9):
        v = (math.pi - eps) * np.array([0.6, -0.8, 0.0])
        np.testing.assert_allclose(rot_log(Rotation.from_rotvec(v).as_matrix()), v, atol=1e-8)


def test_log_round_trip_1000_random(rng):
    Rs = Rotation.random(1000, random_state=rng).as_matrix()
    for R in Rs:
        w = rot_log(R)
        assert np.linalg.norm(w) <= math.pi + 1e-9
        assert np.linalg.norm(rot_exp(w) - R) < 1e-9


def test_log_rejects_non_rotation():
    with pytest.raises(NonOrthonormal):
        rot_log(np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(NonOrthonormal):
        check_rotation(np.eye(3) * 1.01)


# --- quaternions ------------------------------------------------------------

@given(quat)
def test_quat_round_trip(q):
    R = matrix_from_quat(q)
    q2 = quat_from_matrix(R)
    assert q2[0] >= 0
    np.testing.assert_allclose(matrix_from_quat(q2), R, atol=1e-12)
    qn = q / np.linalg.norm(q)
    assert min(np.linalg.norm(q2 - qn), np.linalg.norm(q2 + qn)) < 1e-9


def test_quat_rejects_zero():
    with pytest.raises(InvalidInput):
        matrix_from_quat([0, 0, 0, 0])


# --- Pose -------------------------------------------------------------------

@given(quat, vec3, quat, vec3, quat, vec3)
def test_compose_associative(q1, t1, q2, t2, q3, t3):
    a, b, c = pose_from(q1, t1), pose_from(q2, t2), pose_from(q3, t3)
    lhs, rhs = (a @ b) @ c, a @ (b @ c)
    np.testing.assert_allclose(lhs.as_matrix(), rhs.as_matrix(), atol=1e-9)


@given(quat, vec3, quat, vec3)
def test_compose_matches_matrix_product(q1, t1, q2, t2):
    a, b = pose_from(q1, t1), pose_from(q2, t2)
    np.testing.assert_allclose(compose(a, b).as_matrix(), a.as_matrix() @ b.as_matrix(), atol=1e-12)


@given(quat, vec3)
def test_inverse(q, t):
    p = pose_from(q, t)
    np.testing.assert_allclose((p @ inverse(p)).as_matrix(), np.eye(4), atol=1e-12)
    np.testing.assert_allclose(inverse(p).as_matrix(), np.linalg.inv(p.as_matrix()), atol=1e-12)


def test_pose_from_matrix_validates():
    T = np.eye(4)
    T[:3, :3] *= 2
    with pytest.raises(NonOrthonormal):
        Pose.from_matrix(T)


def test_pose_is_immutable():
    p = Pose.identity()
    with pytest.raises(ValueError):
        p.translation[0] = 1.0


# --- retract ----------------------------------------------------------------

def test_retract_zero_is_identity_map():
    p = Pose(rot_z(0.4), [1, 2, 3])
    q = retract(p, np.zeros(6))
    np.testing.assert_array_equal(q.as_matrix(), p.as_matrix())


def test_retract_pure_translation():
    q = retract(Pose.identity(), [1, 0, 0, 0, 0, 0])
    np.testing.assert_array_equal(q.translation, [1, 0, 0])
    np.testing.assert_array_equal(q.rotation, np.eye(3))


def test_retract_numerically_inverted(rng):
    # independent inversion: solve retract(P, d) = Q for d with a generic root finder
    for _ in range(20):
        P = Pose(Rotation.random(random_state=rng).as_matrix(), rng.normal(size=3))
        d_rot = rng.normal(size=3)
        d_rot *= rng.uniform(0, 0.5) / np.linalg.norm(d_rot)
        delta = np.concatenate([rng.normal(size=3), d_rot])
        Q = retract(P, delta)

        def gap(d):
            return (retract(P, d).as_matrix() - Q.as_matrix())[:3].ravel()

        sol = least_squares(gap, np.zeros(6), xtol=1e-15, ftol=1e-15, gtol=1e-15)
        np.testing.assert_allclose(sol.x, delta, atol=1e-8)
        np.testing.assert_allclose(local_coordinates(P, Q), delta, atol=1e-10)
