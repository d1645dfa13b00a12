"""Epipolar geometry: residuals, essential-matrix construction and
decomposition, cheirality, and pose-error metrics.

Points are homogeneous with the last coordinate fixed to 1.  Residual
functions broadcast over leading axes, so ``x1``/``x2`` may be single 3-vectors
or ``(N, 3)`` arrays.  Relative poses map camera-1 coordinates to camera 2 as
``X2 = R @ X1 + t``.
"""

import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._jit import jit, mm, mtv, mv


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    skew: float = 0.0

    def __post_init__(self):
        vals = (self.fx, self.fy, self.cx, self.cy, self.skew)
        if not all(np.isfinite(vals)):
            raise ValueError("intrinsics must be finite")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")

    @classmethod
    def from_matrix(cls, K):
        K = np.asarray(K, dtype=float)
        return cls(K[0, 0], K[1, 1], K[0, 2], K[1, 2], K[0, 1])

    @property
    def matrix(self):
        return np.array([[self.fx, self.skew, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    @property
    def mean_focal(self):
        return 0.5 * (self.fx + self.fy)

    def normalize(self, pts):
        """Pixel coordinates (..., 2) -> calibrated homogeneous points (..., 3)."""
        pts = np.asarray(pts, dtype=float)
        y = (pts[..., 1] - self.cy) / self.fy
        x = (pts[..., 0] - self.cx - self.skew * y) / self.fx
        return np.stack([x, y, np.ones_like(x)], axis=-1)


class Match(NamedTuple):
    p1: np.ndarray
    p2: np.ndarray
    n1: np.ndarray
    n2: np.ndarray


def homogeneous(pts):
    pts = np.asarray(pts, dtype=float)
    return np.concatenate([pts, np.ones(pts.shape[:-1] + (1,))], axis=-1)


def normalize_match(p1, p2, K1, K2):
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    if not (np.all(np.isfinite(p1)) and np.all(np.isfinite(p2))):
        raise ValueError("match coordinates must be finite")
    return Match(p1, p2, K1.normalize(p1), K2.normalize(p2))


class ModelKind(enum.Enum):
    ESSENTIAL = "essential"
    FUNDAMENTAL = "fundamental"


@dataclass(frozen=True)
class EpipolarModel:
    matrix: np.ndarray
    kind: ModelKind = ModelKind.ESSENTIAL

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)

    @property
    def vec(self):
        """Column-major 9-vector, ``e[3 * j + i] = E[i, j]``."""
        return np.asarray(self.matrix, dtype=float).reshape(9, order="F")

    def normalized(self):
        m = np.asarray(self.matrix, dtype=float)
        return EpipolarModel(m / np.linalg.norm(m), self.kind)


@dataclass(frozen=True)
class RelativePose:
    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).reshape(3)
        n = np.linalg.norm(t)
        object.__setattr__(self, "R", np.asarray(self.R, dtype=float))
        # near-zero baselines stay unnormalized (direction unobservable)
        object.__setattr__(self, "t", t / n if n >= 1e-9 else t)


@dataclass(frozen=True)
class PoseError:
    rot_deg: float
    trans_deg: float

    @property
    def max_deg(self):
        return max(self.rot_deg, self.trans_deg)


def hat(t):
    return np.array([[0.0, -t[2], t[1]],
                     [t[2], 0.0, -t[0]],
                     [-t[1], t[0], 0.0]])


def epipolar_residual(E, x1, x2):
    """Algebraic residual ``x2^T E x1``."""
    E = np.asarray(E, dtype=float)
    return np.einsum("...i,ij,...j->...", x2, E, x1)


def _line_terms(E, x1, x2):
    E = np.asarray(E, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    l1 = x1 @ E.T          # E x1: epipolar lines in image 2
    l2 = x2 @ E            # E^T x2: epipolar lines in image 1
    num = np.sum(x2 * l1, axis=-1)
    d1 = l1[..., 0] ** 2 + l1[..., 1] ** 2
    d2 = l2[..., 0] ** 2 + l2[..., 1] ** 2
    return num, d1, d2


def sampson_error(E, x1, x2):
    """Squared Sampson error; ``inf`` where both points sit on the epipoles."""
    num, d1, d2 = _line_terms(E, x1, x2)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = num * num / (d1 + d2)
    return np.where(d1 + d2 > 0, out, np.inf)


def symmetric_epipolar_distance(E, x1, x2):
    """Sum of squared point-to-epipolar-line distances in both images."""
    num, d1, d2 = _line_terms(E, x1, x2)
    n2 = num * num
    with np.errstate(divide="ignore", invalid="ignore"):
        out = n2 / d1 + n2 / d2
    return np.where((d1 > 0) & (d2 > 0), out, np.inf)


def essential_from_pose(R, t=None):
    """``[t]_x R`` as an essential model; accepts a RelativePose or (R, t)."""
    if t is None:
        R, t = R.R, R.t
    return EpipolarModel(hat(np.asarray(t, dtype=float)) @ np.asarray(R, dtype=float),
                         ModelKind.ESSENTIAL)


def essential_constraint_residual(E):
    E = np.asarray(E, dtype=float)
    EEt = E @ E.T
    return 2.0 * EEt @ E - np.trace(EEt) * E


def decompose_essential(E):
    """The four (R, t) candidates of an essential matrix.

    Ordered ``(R1, t), (R1, -t), (R2, t), (R2, -t)``.
    """
    E = np.asarray(E, dtype=float)
    s = np.linalg.svd(E, compute_uv=False)
    if s[1] <= 1e-10 * s[0]:
        raise ValueError("essential matrix must have rank 2")
    out = np.empty((4, 3, 3))
    ts = np.empty((4, 3))
    _decompose(np.ascontiguousarray(E), out, ts)
    return [RelativePose(out[i], ts[i]) for i in range(4)]


@jit
def _orthonormalize(M):
    # closest rotation through the quaternion of the (near-)rotation M
    tr = M[0, 0] + M[1, 1] + M[2, 2]
    if tr > 0.0:
        s = 2.0 * np.sqrt(tr + 1.0)
        w = 0.25 * s
        x = (M[2, 1] - M[1, 2]) / s
        y = (M[0, 2] - M[2, 0]) / s
        z = (M[1, 0] - M[0, 1]) / s
    elif M[0, 0] > M[1, 1] and M[0, 0] > M[2, 2]:
        s = 2.0 * np.sqrt(max(1.0 + M[0, 0] - M[1, 1] - M[2, 2], 1e-300))
        w = (M[2, 1] - M[1, 2]) / s
        x = 0.25 * s
        y = (M[0, 1] + M[1, 0]) / s
        z = (M[0, 2] + M[2, 0]) / s
    elif M[1, 1] > M[2, 2]:
        s = 2.0 * np.sqrt(max(1.0 + M[1, 1] - M[0, 0] - M[2, 2], 1e-300))
        w = (M[0, 2] - M[2, 0]) / s
        x = (M[0, 1] + M[1, 0]) / s
        y = 0.25 * s
        z = (M[1, 2] + M[2, 1]) / s
    else:
        s = 2.0 * np.sqrt(max(1.0 + M[2, 2] - M[0, 0] - M[1, 1], 1e-300))
        w = (M[1, 0] - M[0, 1]) / s
        x = (M[0, 2] + M[2, 0]) / s
        y = (M[1, 2] + M[2, 1]) / s
        z = 0.25 * s
    n = np.sqrt(w * w + x * x + y * y + z * z)
    w /= n
    x /= n
    y /= n
    z /= n
    R = np.empty((3, 3))
    R[0, 0] = 1 - 2 * (y * y + z * z)
    R[0, 1] = 2 * (x * y - z * w)
    R[0, 2] = 2 * (x * z + y * w)
    R[1, 0] = 2 * (x * y + z * w)
    R[1, 1] = 1 - 2 * (x * x + z * z)
    R[1, 2] = 2 * (y * z - x * w)
    R[2, 0] = 2 * (x * z - y * w)
    R[2, 1] = 2 * (y * z + x * w)
    R[2, 2] = 1 - 2 * (x * x + y * y)
    return R


@jit
def _decompose(E, Rs, ts):
    """Closed-form four-fold decomposition (no SVD).

    With E scaled to ||E||_F^2 = 2 and t the unit left null vector,
    R = cof(E) -/+ [t]_x E gives the two rotations.
    """
    En = E * (np.sqrt(2.0) / np.sqrt(np.sum(E * E)))
    c0 = np.cross(En[:, 0], En[:, 1])
    c1 = np.cross(En[:, 1], En[:, 2])
    c2 = np.cross(En[:, 2], En[:, 0])
    n0 = np.sum(c0 * c0)
    n1 = np.sum(c1 * c1)
    n2 = np.sum(c2 * c2)
    t = c0
    nt = n0
    if n1 > nt:
        t = c1
        nt = n1
    if n2 > nt:
        t = c2
        nt = n2
    t = t / np.sqrt(nt)
    cof = np.empty((3, 3))
    cof[0] = np.cross(En[1], En[2])
    cof[1] = np.cross(En[2], En[0])
    cof[2] = np.cross(En[0], En[1])
    tx = np.zeros((3, 3))
    tx[0, 1] = -t[2]
    tx[0, 2] = t[1]
    tx[1, 0] = t[2]
    tx[1, 2] = -t[0]
    tx[2, 0] = -t[1]
    tx[2, 1] = t[0]
    txE = mm(tx, En)
    Ra = _orthonormalize(cof - txE)
    Rb = _orthonormalize(cof + txE)
    Rs[0] = Ra
    Rs[1] = Ra
    Rs[2] = Rb
    Rs[3] = Rb
    ts[0] = t
    ts[1] = -t
    ts[2] = t
    ts[3] = -t


@jit
def _midpoint_depths(R, t, x1, x2):
    """Depths of the midpoint triangulation in both cameras."""
    # camera-2 center c2 = -R^T t and ray d2 = R^T x2, in the camera-1 frame
    c0 = -(R[0, 0] * t[0] + R[1, 0] * t[1] + R[2, 0] * t[2])
    c1 = -(R[0, 1] * t[0] + R[1, 1] * t[1] + R[2, 1] * t[2])
    c2 = -(R[0, 2] * t[0] + R[1, 2] * t[1] + R[2, 2] * t[2])
    d0 = R[0, 0] * x2[0] + R[1, 0] * x2[1] + R[2, 0] * x2[2]
    d1 = R[0, 1] * x2[0] + R[1, 1] * x2[1] + R[2, 1] * x2[2]
    d2 = R[0, 2] * x2[0] + R[1, 2] * x2[1] + R[2, 2] * x2[2]
    a = x1[0] * x1[0] + x1[1] * x1[1] + x1[2] * x1[2]
    b = x1[0] * d0 + x1[1] * d1 + x1[2] * d2
    c = d0 * d0 + d1 * d1 + d2 * d2
    p = x1[0] * c0 + x1[1] * c1 + x1[2] * c2
    q = d0 * c0 + d1 * c1 + d2 * c2
    den = a * c - b * b
    if abs(den) <= 1e-15 * a * c:
        return -1.0, -1.0
    lam1 = (p * c - b * q) / den
    lam2 = (b * p - a * q) / den
    X0 = 0.5 * (lam1 * x1[0] + c0 + lam2 * d0)
    X1 = 0.5 * (lam1 * x1[1] + c1 + lam2 * d1)
    X2 = 0.5 * (lam1 * x1[2] + c2 + lam2 * d2)
    z2 = R[2, 0] * X0 + R[2, 1] * X1 + R[2, 2] * X2 + t[2]
    return X2, z2


@jit
def _count_in_front(R, t, x1, x2):
    n = 0
    for i in range(x1.shape[0]):
        z1, z2 = _midpoint_depths(R, t, x1[i], x2[i])
        if z1 > 0.0 and z2 > 0.0:
            n += 1
    return n


@jit
def _all_in_front(R, t, x1, x2):
    for i in range(x1.shape[0]):
        z1, z2 = _midpoint_depths(R, t, x1[i], x2[i])
        if not (z1 > 0.0 and z2 > 0.0):
            return False
    return True


def triangulate_midpoint(pose, x1, x2):
    """Midpoint-triangulated depths (z1, z2) for each correspondence."""
    x1 = np.atleast_2d(np.asarray(x1, dtype=float))
    x2 = np.atleast_2d(np.asarray(x2, dtype=float))
    out = np.empty((len(x1), 2))
    for i in range(len(x1)):
        out[i] = _midpoint_depths(pose.R, pose.t, x1[i], x2[i])
    return out


class CheiralityResult(NamedTuple):
    pose: RelativePose
    n_in_front: int
    confident: bool


def select_pose_cheirality(candidates, x1, x2):
    """Candidate with the most points in front of both cameras.

    Ties keep the earliest candidate; if no candidate puts any point in
    front, the first candidate is returned with ``confident=False``.
    """
    x1 = np.ascontiguousarray(np.atleast_2d(np.asarray(x1, dtype=float)))
    x2 = np.ascontiguousarray(np.atleast_2d(np.asarray(x2, dtype=float)))
    if len(x1) < 1:
        raise ValueError("need at least one match")
    counts = [_count_in_front(c.R, c.t, x1, x2) for c in candidates]
    best = int(np.argmax(counts))
    return CheiralityResult(candidates[best], counts[best], counts[best] > 0)


def rotation_angle_deg(R_a, R_b):
    c = (np.trace(np.asarray(R_a).T @ np.asarray(R_b)) - 1.0) / 2.0
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))


def pose_error(est, gt):
    rot = rotation_angle_deg(est.R, gt.R)
    t_gt = np.asarray(gt.t, dtype=float)
    t_est = np.asarray(est.t, dtype=float)
    n = np.linalg.norm(t_gt) * np.linalg.norm(t_est)
    if np.linalg.norm(t_gt) < 1e-9 or n == 0:
        trans = 0.0
    else:
        trans = float(np.degrees(np.arccos(np.clip(t_est @ t_gt / n, -1.0, 1.0))))
    return PoseError(rot, trans)
