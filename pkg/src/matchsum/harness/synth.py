"""Synthetic two-view scenes with known pose."""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from ..geometry import CameraIntrinsics
from .io import GroundTruth, PairRecord


@dataclass(frozen=True)
class SynthConfig:
    n_pairs: int = 100
    n_matches: int = 10_000
    noise_px: float = 1.0
    outlier_frac: float = 0.3
    focal_px: float = 1000.0
    image_size: tuple = (1024, 768)
    depth_range: tuple = (4.0, 12.0)
    baseline_range: tuple = (0.5, 2.0)
    max_rotation_deg: float = 30.0
    outlier_model: str = "uniform"
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.outlier_frac < 1:
            raise ValueError("outlier_frac must be in [0, 1)")
        if self.noise_px < 0:
            raise ValueError("noise_px must be nonnegative")
        if self.outlier_model not in ("uniform", "coherent"):
            raise ValueError("outlier_model must be 'uniform' or 'coherent'")
        if self.n_matches < 0 or self.n_pairs < 0:
            raise ValueError("counts must be nonnegative")


def _sample_points(rng, n, K, R, t, cfg):
    """Points uniform over image 1 at random depth, kept if visible in image 2."""
    W, H = cfg.image_size
    f, cx, cy = cfg.focal_px, K.cx, K.cy
    u = rng.uniform(0, W, n)
    v = rng.uniform(0, H, n)
    z = rng.uniform(*cfg.depth_range, n)
    X = np.stack([(u - cx) / f * z, (v - cy) / f * z, z], axis=1)
    X2 = X @ R.T + t
    with np.errstate(divide="ignore", invalid="ignore"):
        p2 = X2[:, :2] / X2[:, 2:] * f + [cx, cy]
    ok = (X2[:, 2] > 0.1) & (p2[:, 0] >= 0) & (p2[:, 0] < W) & (p2[:, 1] >= 0) & (p2[:, 1] < H)
    return np.stack([u, v], axis=1)[ok], p2[ok]


def _coherent_outliers(rng, p1, p2, n_out, W, H, n_regions=8):
    """Replace the matches nearest a few random image-1 sites by shifted copies.

    Each region gets one random displacement, so its wrong matches agree
    with each other the way failures of dense matchers tend to.
    """
    sites = np.stack([rng.uniform(0, W, n_regions), rng.uniform(0, H, n_regions)], axis=1)
    dist = np.linalg.norm(p1[:, None, :] - sites[None], axis=2)
    region = np.argmin(dist, axis=1)
    idx = np.argsort(dist.min(axis=1), kind="stable")[:n_out]
    shift = np.stack([rng.uniform(-W / 2, W / 2, n_regions),
                      rng.uniform(-H / 2, H / 2, n_regions)], axis=1)
    q = p2[idx] + shift[region[idx]]
    p2[idx] = np.mod(q, [W, H])
    return idx


def synth_pair(cfg, index):
    rng = np.random.default_rng([cfg.seed, index])
    W, H = cfg.image_size
    K = CameraIntrinsics(cfg.focal_px, cfg.focal_px, W / 2, H / 2)
    # redraw poses until a reasonable share of the view is shared
    while True:
        axis = rng.normal(size=3)
        angle = rng.uniform(0, np.deg2rad(cfg.max_rotation_deg))
        R = Rotation.from_rotvec(axis / np.linalg.norm(axis) * angle).as_matrix()
        d = rng.normal(size=3)
        center2 = d / np.linalg.norm(d) * rng.uniform(*cfg.baseline_range)
        t = -R @ center2
        p1, _ = _sample_points(rng, 2000, K, R, t, cfg)
        if len(p1) > 0.3 * 2000:
            break
    N = cfg.n_matches
    p1s, p2s, have = [], [], 0
    while have < N:
        a, b = _sample_points(rng, max(N, 100), K, R, t, cfg)
        p1s.append(a)
        p2s.append(b)
        have += len(a)
    p1 = np.concatenate(p1s)[:N]
    p2 = np.concatenate(p2s)[:N]
    if cfg.noise_px > 0:
        p1 = p1 + rng.normal(scale=cfg.noise_px, size=p1.shape)
        p2 = p2 + rng.normal(scale=cfg.noise_px, size=p2.shape)
    n_out = int(round(cfg.outlier_frac * N))
    if cfg.outlier_model == "uniform":
        idx = rng.permutation(N)[:n_out]
        p2[idx] = np.stack([rng.uniform(0, W, n_out), rng.uniform(0, H, n_out)], axis=1)
    elif n_out > 0:
        idx = _coherent_outliers(rng, p1, p2, n_out, W, H)
    return PairRecord(f"synth-{cfg.seed}-{index:04d}", K, K, np.hstack([p1, p2]),
                      GroundTruth(R, t))


def synth_pairs(cfg):
    """Deterministic stream of ``cfg.n_pairs`` synthetic PairRecords."""
    for i in range(cfg.n_pairs):
        yield synth_pair(cfg, i)
