import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from conftest import random_pose, scene
from matchsum.geometry import (CameraIntrinsics, EpipolarModel, ModelKind, RelativePose,
                               decompose_essential, epipolar_residual,
                               essential_constraint_residual, essential_from_pose, hat,
                               normalize_match, pose_error, sampson_error,
                               select_pose_cheirality, symmetric_epipolar_distance)

E0 = np.array([[0.0, 0, 0], [0, 0, -1], [0, 1, 0]])
O = np.array([0.0, 0, 1])


def test_principal_point_maps_to_origin():
    K = CameraIntrinsics(800, 900, 320, 240)
    m = normalize_match((320, 240), (320 + 800, 240), K, K)
    assert np.allclose(m.n1, [0, 0, 1])
    assert np.allclose(m.n2, [1, 0, 1])


def test_normalize_round_trip(rng):
    K = CameraIntrinsics(700, 650, 300, 200, skew=2.0)
    p = rng.uniform(0, 600, (50, 2))
    n = K.normalize(p)
    back = n @ K.matrix.T
    assert np.allclose(back[:, :2], p, atol=1e-9)
    assert np.allclose(back[:, 2], 1)


def test_normalize_rejects_nonfinite():
    K = CameraIntrinsics(1, 1, 0, 0)
    with pytest.raises(ValueError):
        normalize_match((np.nan, 0), (0, 0), K, K)
    with pytest.raises(ValueError):
        CameraIntrinsics(0, 1, 0, 0)


def test_residual_hand_values():
    assert epipolar_residual(E0, O, O) == 0
    assert epipolar_residual(E0, np.array([0, 1.0, 1]), O) == 1
    assert sampson_error(E0, O, O) == 0
    assert sampson_error(E0, np.array([0, 1.0, 1]), O) == pytest.approx(0.5)
    assert symmetric_epipolar_distance(E0, O, O) == 0
    assert symmetric_epipolar_distance(E0, np.array([0, 1.0, 1]), O) == pytest.approx(2.0)


def test_sampson_degenerate_is_inf():
    # both points at the epipoles: all line coefficients vanish
    E = hat([0, 0, 1.0])
    assert np.isinf(sampson_error(E, O, O))


@given(st.floats(0.1, 100), st.integers(0, 1000))
@settings(max_examples=30, deadline=None)
def test_sampson_scale_invariant(lam, seed):
    r = np.random.default_rng(seed)
    E = r.normal(size=(3, 3))
    x1 = np.append(r.normal(size=2), 1)
    x2 = np.append(r.normal(size=2), 1)
    assert sampson_error(lam * E, x1, x2) == pytest.approx(sampson_error(E, x1, x2), rel=1e-10)


def test_noiseless_residual_zero(rng):
    R, t = random_pose(rng)
    x1, x2 = scene(rng, 100, R, t)
    E = essential_from_pose(R, t).matrix
    assert np.max(np.abs(epipolar_residual(E, x1, x2))) < 1e-12


def test_symmetric_distance_matches_lines(rng):
    E = rng.normal(size=(3, 3))
    x1 = np.append(rng.normal(size=2), 1)
    x2 = np.append(rng.normal(size=2), 1)
    l2 = E @ x1
    l1 = E.T @ x2
    d = (x2 @ l2) ** 2 / (l2[0] ** 2 + l2[1] ** 2) + (x1 @ l1) ** 2 / (l1[0] ** 2 + l1[1] ** 2)
    assert symmetric_epipolar_distance(E, x1, x2) == pytest.approx(d, rel=1e-12)


def test_essential_from_pose_examples():
    assert np.allclose(essential_from_pose(np.eye(3), [1, 0, 0]).matrix, E0)
    assert np.allclose(essential_from_pose(np.eye(3), [0, 0, 1]).matrix,
                       [[0, -1, 0], [1, 0, 0], [0, 0, 0]])
    assert essential_from_pose(RelativePose(np.eye(3), [2, 0, 0])).kind is ModelKind.ESSENTIAL


def test_essential_constraints(rng):
    for _ in range(20):
        E = essential_from_pose(*random_pose(rng)).matrix
        assert abs(np.linalg.det(E)) < 1e-12
        assert np.max(np.abs(essential_constraint_residual(E))) < 1e-12


def test_model_vec_is_column_major():
    E = np.arange(9.0).reshape(3, 3)
    v = EpipolarModel(E).vec
    assert v[1] == E[1, 0] and v[3] == E[0, 1]
    assert np.linalg.norm(EpipolarModel(E).normalized().matrix) == pytest.approx(1)


def test_decompose_simple():
    cands = decompose_essential(E0)
    ts = [c.t for c in cands if np.allclose(c.R, np.eye(3))]
    assert any(np.allclose(t, [1, 0, 0]) for t in ts)
    assert any(np.allclose(t, [-1, 0, 0]) for t in ts)


def test_decompose_round_trip(rng):
    for _ in range(200):
        R, t = random_pose(rng, 180)
        E = essential_from_pose(R, t).matrix
        En = E / np.linalg.norm(E)
        cands = decompose_essential(E)
        for c in cands:
            Ec = hat(c.t) @ c.R
            Ec = Ec / np.linalg.norm(Ec)
            assert min(np.linalg.norm(Ec - En), np.linalg.norm(Ec + En)) < 1e-9
        assert min(np.linalg.norm(c.R - R) + np.linalg.norm(c.t - t) for c in cands) < 1e-9


def test_decompose_rejects_rank_one():
    with pytest.raises(ValueError):
        decompose_essential(np.outer([1, 0, 0], [0, 1, 0]))


def test_cheirality_picks_ground_truth(rng):
    for _ in range(20):
        R, t = random_pose(rng)
        x1, x2 = scene(rng, 30, R, t)
        res = select_pose_cheirality(decompose_essential(essential_from_pose(R, t)), x1, x2)
        assert res.confident and res.n_in_front == 30
        assert np.allclose(res.pose.R, R, atol=1e-9) and np.allclose(res.pose.t, t, atol=1e-9)


def test_cheirality_single_point():
    R, t = np.eye(3), np.array([1.0, 0, 0])
    X = np.array([0.2, -0.1, 5.0])
    x1 = X / X[2]
    x2 = (X + t) / X[2]
    res = select_pose_cheirality(decompose_essential(essential_from_pose(R, t)), x1, x2)
    assert np.allclose(res.pose.t, t)


def test_cheirality_flags_mirrored_scene():
    cand = [RelativePose(np.eye(3), [1.0, 0, 0])]
    # point at negative depth in both cameras
    X = np.array([0.2, -0.1, -5.0])
    x1 = X / X[2]
    x2 = (X + [1.0, 0, 0]) / X[2]
    res = select_pose_cheirality(cand, x1, x2)
    assert not res.confident and res.n_in_front == 0


def test_pose_error_values(rng):
    R, t = random_pose(rng)
    gt = RelativePose(R, t)
    e = pose_error(gt, gt)
    assert e.rot_deg == pytest.approx(0, abs=1e-5) and e.trans_deg == pytest.approx(0, abs=1e-5)
    axis = rng.normal(size=3)
    dR = Rotation.from_rotvec(axis / np.linalg.norm(axis) * np.deg2rad(5)).as_matrix()
    e = pose_error(RelativePose(dR @ R, t), gt)
    assert e.max_deg == pytest.approx(5, abs=1e-6)


def test_pose_error_matches_quaternion_angle(rng):
    for _ in range(50):
        Ra, ta = random_pose(rng, 170)
        Rb, tb = random_pose(rng, 170)
        q = Rotation.from_matrix(Ra.T @ Rb).as_quat()
        ang = np.degrees(2 * np.arctan2(np.linalg.norm(q[:3]), abs(q[3])))
        e = pose_error(RelativePose(Ra, ta), RelativePose(Rb, tb))
        assert e.rot_deg == pytest.approx(ang, abs=1e-6)
        assert e.trans_deg == pytest.approx(np.degrees(np.arccos(np.clip(ta @ tb, -1, 1))), abs=1e-6)
