import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from conftest import random_pose, scene
from matchsum.geometry import (ModelKind, RelativePose, decompose_essential,
                               essential_from_pose, pose_error, sampson_error,
                               select_pose_cheirality)
from matchsum.harness.io import CalibrationRequired
from matchsum.harness.synth import SynthConfig, synth_pair
from matchsum.ransac import MethodSpec, RansacConfig, estimate, stopping_iterations
from matchsum.refine import Data, classify_inliers, refine
from matchsum.summarization import approx_residuals, summarize

METHODS = ["DDD", "CAD", "CCD", "CAA", "CCA", "CCC"]


def test_stopping_iterations():
    assert stopping_iterations(1.0, 5, 0.999, 100) == 100
    # ceil(log(0.001) / log(1 - 0.5 ** 5)) = ceil(217.57)
    assert stopping_iterations(0.5, 5, 0.999) == 218
    assert stopping_iterations(0.0, 5, 0.999, 0, 5000) == 5000
    with pytest.raises(ValueError):
        stopping_iterations(1.5, 5, 0.99)


def test_method_codes():
    assert MethodSpec.parse("cca").code == "CCA"
    assert MethodSpec.parse("DDD").dense_only
    for bad in ("CAC", "ADD", "XYZ", "CC"):
        with pytest.raises(ValueError):
            MethodSpec.parse(bad)
    assert MethodSpec.parse("AAA").sampling is Data.APPROX
    with pytest.raises(ValueError):
        RansacConfig(method="AAA", model=ModelKind.FUNDAMENTAL)
    with pytest.raises(ValueError):
        RansacConfig(confidence=1.0)


def noiseless_pair(index=0, **kw):
    cfg = SynthConfig(n_pairs=1, n_matches=kw.pop("n", 3000), noise_px=0.0,
                      outlier_frac=kw.pop("outliers", 0.0), seed=kw.pop("seed", 7), **kw)
    return synth_pair(cfg, index)


@pytest.mark.parametrize("method", METHODS)
def test_noiseless_any_method(method):
    pair = noiseless_pair()
    res = estimate(pair, config=RansacConfig(method=method, K=64))
    assert pose_error(res.pose, pair.gt.pose).max_deg < 1e-4
    assert res.score < 1e-12
    assert res.converged and not res.fallback


def test_deterministic():
    pair = synth_pair(SynthConfig(n_pairs=1, n_matches=2000), 0)
    cfg = RansacConfig(method="CCA", K=64, seed=3)
    a, b = estimate(pair, config=cfg), estimate(pair, config=cfg)
    assert np.array_equal(a.model.matrix, b.model.matrix)
    assert a.iterations == b.iterations and np.array_equal(a.inliers, b.inliers)


def test_fallback_when_few_matches():
    pair = noiseless_pair(n=50)
    res = estimate(pair, config=RansacConfig(method="CCA", K=128))
    assert res.fallback and res.method == "DDD"
    assert pose_error(res.pose, pair.gt.pose).max_deg < 1e-4


def test_calibration_required():
    pair = noiseless_pair(n=100)
    with pytest.raises(CalibrationRequired):
        estimate(pair.matches, config=RansacConfig(method="DDD"))
    with pytest.raises(ValueError):
        estimate(pair.matches[:3], intrinsics=(pair.K1, pair.K2))


def test_accepts_arrays_with_intrinsics():
    pair = noiseless_pair(n=500)
    res = estimate(pair.matches, intrinsics=(pair.K1, pair.K2), config=RansacConfig(method="DDD"))
    assert pose_error(res.pose, pair.gt.pose).max_deg < 1e-4


def test_fundamental_estimation():
    pair = synth_pair(SynthConfig(n_pairs=1, n_matches=2000, noise_px=0.5, outlier_frac=0.2), 0)
    K = pair.K1.matrix
    E = essential_from_pose(pair.gt.pose).matrix
    Kinv = np.linalg.inv(K)
    F_gt = Kinv.T @ E @ Kinv
    gt_in = sampson_error(F_gt, np.column_stack([pair.p1, np.ones(2000)]),
                          np.column_stack([pair.p2, np.ones(2000)])) < 4
    for method in ("DDD", "CCD", "CCC"):
        res = estimate(pair, config=RansacConfig(method=method, K=64, model="fundamental"))
        assert res.model.kind is ModelKind.FUNDAMENTAL
        assert abs(np.linalg.det(res.model.matrix)) < 1e-12
        # agrees with the ground truth on which matches are inliers
        assert np.mean(res.match_inliers == gt_in) > 0.9
        # and the reported pixel-space F explains those inliers
        p = np.column_stack([pair.matches, np.ones(2000)])
        err = sampson_error(res.model.matrix, p[:, [0, 1, 4]], p[:, [2, 3, 4]])
        assert np.median(err[gt_in]) < 1.0


def test_refine_stationary_at_truth(rng):
    R, t = random_pose(rng)
    x1, x2 = scene(rng, 200, R, t)
    E = refine(RelativePose(R, t), (x1, x2), "D", 1e-3).matrix
    E0 = essential_from_pose(R, t).matrix
    assert np.linalg.norm(E / np.linalg.norm(E) - E0 / np.linalg.norm(E0)) < 1e-10


def test_refine_converges_from_perturbation(rng):
    for _ in range(5):
        R, t = random_pose(rng)
        x1, x2 = scene(rng, 300, R, t)
        axis = rng.normal(size=3)
        dR = Rotation.from_rotvec(axis / np.linalg.norm(axis) * np.deg2rad(1)).as_matrix()
        E = refine(RelativePose(dR @ R, t), (x1, x2), "D", 0.05).matrix
        pose = select_pose_cheirality(decompose_essential(E), x1, x2).pose
        assert pose_error(pose, RelativePose(R, t)).max_deg < 1e-3


def test_refine_approx_singletons_match_dense(rng):
    R, t = random_pose(rng)
    x1, x2 = scene(rng, 300, R, t)
    x1[:, :2] += rng.normal(scale=1e-3, size=(300, 2))
    S = summarize(x1, x2, np.arange(300), np.arange(300))
    start = RelativePose(R, t + 0.05 * rng.normal(size=3))
    Ed = refine(start, (x1, x2), "D", 3e-3, max_steps=20).matrix
    Ea = refine(start, S, "A", 3e-3, max_steps=20).matrix
    assert np.linalg.norm(Ed - Ea) < 1e-9


def test_classify_inliers(rng):
    R, t = random_pose(rng)
    x1, x2 = scene(rng, 100, R, t)
    E = essential_from_pose(R, t).matrix
    assert classify_inliers(E, (x1, x2), "D", 1e-3).all()
    # a residual of exactly tau^2 = 0.25 is an outlier
    F = np.array([[0.0, 0, 0], [0, 0, -1], [0, 0, 0]])
    x1b = np.array([[0.0, 0, 1], [0, 0, 1]])
    x2b = np.array([[0.0, 0.5, 1], [0, 0.4, 1]])
    assert sampson_error(F, x1b[0], x2b[0]) == 0.25
    assert list(classify_inliers(F, (x1b, x2b), "D", 0.5)) == [False, True]


def test_classify_clusters_matches_exact_sums(rng):
    R, t = random_pose(rng)
    x1, x2 = scene(rng, 400, R, t)
    labels = np.arange(400) // 10
    S = summarize(x1, x2, labels, np.arange(0, 400, 10))
    model = essential_from_pose(R, t).matrix + 1e-3 * rng.normal(size=(3, 3))
    tau = 2e-3
    flags = classify_inliers(model, S, "A", tau)
    assert np.array_equal(flags, approx_residuals(model, S) < S.size * tau ** 2)
    assert classify_inliers(model, S, "C", tau).shape == (40,)


def test_pixel_threshold_scaling():
    # move one match 1 px off its epipolar line in image 2: Sampson distance ~0.7 px
    pair = noiseless_pair(n=500)
    E = essential_from_pose(pair.gt.pose).matrix
    K = pair.K1.matrix
    F = np.linalg.inv(K).T @ E @ np.linalg.inv(K)
    line = F @ np.append(pair.p1[0], 1)
    m = pair.matches.copy()
    m[0, 2:] += line[:2] / np.linalg.norm(line[:2])
    for tau, expect in ((1.5, True), (0.5, False)):
        res = estimate(m, intrinsics=(pair.K1, pair.K2),
                       config=RansacConfig(method="DDD", tau_px=tau))
        assert res.match_inliers[0] == expect and res.match_inliers[1:].all()
