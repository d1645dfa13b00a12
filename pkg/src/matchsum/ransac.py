"""LO-RANSAC over dense matches, cluster representatives or cluster summaries.

A method is named by three letters: the data used for sampling, scoring and
refinement, each one of D (all matches), C (cluster representatives) or A
(cluster summaries).  ``DDD`` is the plain dense baseline and ``CCA`` samples
and scores on representatives, then refines on the summaries.

The hypothesize-and-verify loop runs entirely in compiled code.  Each new
best model gets one local optimization on the scoring data; the final model
is refined once more on the refinement data.
"""

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._jit import jit
from .clustering import ClusterSpace, cluster
from .geometry import (CameraIntrinsics, EpipolarModel, Match, ModelKind,
                       _all_in_front, _decompose, decompose_essential,
                       select_pose_cheirality)
from .refine import APPROX, CENTER, DENSE, Data, _cost, _lm, classify_inliers
from .solvers import _five_point, _five_point_from_basis, _seven_point
from .summarization import pack_points, sampson_errors, summarize

EXHAUSTIVE = 3


@dataclass(frozen=True)
class MethodSpec:
    sampling: Data
    scoring: Data
    refinement: Data

    def __post_init__(self):
        if self.scoring is Data.APPROX and self.refinement is Data.CENTER:
            raise ValueError("approximate scoring with center refinement is not supported")
        if self.sampling is Data.APPROX and self.scoring is not Data.APPROX:
            raise ValueError("exhaustive summary sampling requires approximate scoring")

    @classmethod
    def parse(cls, code):
        code = str(code).strip().upper()
        if len(code) != 3 or any(c not in "DCA" for c in code):
            raise ValueError(f"bad method code {code!r}")
        return cls(Data(code[0]), Data(code[1]), Data(code[2]))

    @property
    def code(self):
        return self.sampling.value + self.scoring.value + self.refinement.value

    @property
    def dense_only(self):
        return self.code == "DDD"

    def __str__(self):
        return self.code


def as_method(m):
    return m if isinstance(m, MethodSpec) else MethodSpec.parse(m)


@dataclass(frozen=True)
class RansacConfig:
    method: MethodSpec = field(default_factory=lambda: MethodSpec.parse("CCA"))
    tau_px: float = 1.0
    max_iterations: int = 10_000
    min_iterations: int = 100
    confidence: float = 0.999
    seed: int = 0
    lo_max_steps: int = 25
    final_max_steps: int = 100
    K: int = 128
    cluster_space: ClusterSpace = ClusterSpace.MATCHES_4D
    kmeans_iters: int = 5
    rep_in_4d: bool = False
    model: ModelKind = ModelKind.ESSENTIAL

    def __post_init__(self):
        object.__setattr__(self, "method", as_method(self.method))
        object.__setattr__(self, "cluster_space", ClusterSpace(self.cluster_space))
        object.__setattr__(self, "model", ModelKind(self.model))
        if not 0 < self.confidence < 1:
            raise ValueError("confidence must be in (0, 1)")
        if not 0 <= self.min_iterations <= self.max_iterations:
            raise ValueError("need 0 <= min_iterations <= max_iterations")
        if not self.tau_px > 0:
            raise ValueError("tau_px must be positive")
        if self.K < 1:
            raise ValueError("K must be positive")
        if self.method.sampling is Data.APPROX and self.model is ModelKind.FUNDAMENTAL:
            raise ValueError("exhaustive summary sampling is only available for essential matrices")


@dataclass
class RansacResult:
    model: Optional[EpipolarModel]
    pose: object
    score: float
    inliers: np.ndarray
    iterations: int
    timings: dict
    converged: bool
    fallback: bool = False
    match_inliers: Optional[np.ndarray] = None
    method: str = ""
    models_scored: int = 0
    local_optimizations: int = 0

    @property
    def inlier_count(self):
        return int(np.count_nonzero(self.inliers))


# --- random sampling --------------------------------------------------------

_U1 = np.uint64(0x9E3779B97F4A7C15)
_U2 = np.uint64(0xBF58476D1CE4E5B9)
_U3 = np.uint64(0x94D049BB133111EB)


@jit
def _splitmix(x):
    z = x + _U1
    z = (z ^ (z >> np.uint64(30))) * _U2
    z = (z ^ (z >> np.uint64(27))) * _U3
    return z ^ (z >> np.uint64(31))


@jit
def _draw(seed, it, n, s, idx):
    """``s`` distinct indices in ``[0, n)`` determined by (seed, iteration)."""
    base = _splitmix(seed ^ _splitmix(np.uint64(it)))
    draw = 0
    got = 0
    while got < s:
        z = _splitmix(base + np.uint64(draw))
        draw += 1
        k = np.int64(np.float64(z >> np.uint64(11)) * (1.0 / 9007199254740992.0) * n)
        if k >= n:
            k = n - 1
        dup = False
        for j in range(got):
            if idx[j] == k:
                dup = True
        if not dup:
            idx[got] = k
            got += 1


@jit
def _stopping(w, s, confidence, lo, hi):
    if w <= 0.0:
        return hi
    if w >= 1.0:
        return lo
    p = w ** s
    denom = np.log1p(-p)
    if denom == 0.0:
        return hi
    n = np.ceil(np.log(1.0 - confidence) / denom)
    if n < lo:
        return lo
    if n > hi:
        return hi
    return np.int64(n)


def stopping_iterations(inlier_ratio, sample_size, confidence, min_iterations=0,
                        max_iterations=10_000):
    """Iterations needed to draw one all-inlier sample with the given confidence."""
    if not 0 <= inlier_ratio <= 1:
        raise ValueError("inlier_ratio must be in [0, 1]")
    return int(_stopping(float(inlier_ratio), int(sample_size), float(confidence),
                         int(min_iterations), int(max_iterations)))


# --- main loop ----------------------------------------------------------------

@jit
def _ransac(kind, samp_mode, spts, bases, score_mode, pts, packed, tau2, seed,
            confidence, min_it, max_it, lo_steps, best_E, best_R, best_t, stats):
    """Hypothesize-and-verify loop; fills best_* and ``stats``.

    stats = [iterations, best score, best inlier count, models scored,
             local optimizations, found]
    """
    s = 5 if kind == 0 else 7
    if score_mode == DENSE:
        units = pts.shape[1]
    else:
        units = packed.shape[1]
    n_samp = spts.shape[1]
    models = np.empty((10, 3, 3))
    Rs = np.empty((4, 3, 3))
    ts = np.empty((4, 3))
    idx = np.empty(s, dtype=np.int64)
    x1 = np.ones((s, 3))
    x2 = np.ones((s, 3))
    c1 = np.ones((1, 3))
    c2 = np.ones((1, 3))
    dummyF = np.eye(3)
    best = np.inf
    best_inl = 0
    n_scored = 0
    n_lo = 0
    found = False
    needed = max_it
    if samp_mode == EXHAUSTIVE:
        needed = min(bases.shape[0], max_it)
    elif n_samp < s:
        needed = 0
    it = 0
    while it < needed:
        if samp_mode == EXHAUSTIVE:
            nm = _five_point_from_basis(bases[it], models)
            c1[0, 0] = packed[45, it]
            c1[0, 1] = packed[46, it]
            c2[0, 0] = packed[47, it]
            c2[0, 1] = packed[48, it]
        else:
            _draw(seed, it, n_samp, s, idx)
            for j in range(s):
                x1[j, 0] = spts[0, idx[j]]
                x1[j, 1] = spts[1, idx[j]]
                x2[j, 0] = spts[2, idx[j]]
                x2[j, 1] = spts[3, idx[j]]
            if kind == 0:
                nm = _five_point(x1, x2, models)
            else:
                nm = _seven_point(x1, x2, models)
        it += 1
        for m in range(nm):
            E = models[m]
            R = dummyF
            t = np.zeros(3)
            if kind == 0:
                # cheirality on the minimal sample (or the representative)
                _decompose(E, Rs, ts)
                ok = False
                for c in range(4):
                    if samp_mode == EXHAUSTIVE:
                        front = _all_in_front(Rs[c], ts[c], c1, c2)
                    else:
                        front = _all_in_front(Rs[c], ts[c], x1, x2)
                    if front:
                        R = Rs[c].copy()
                        t = ts[c].copy()
                        ok = True
                        break
                if not ok:
                    continue
            sc, inl = _cost(E, score_mode, pts, packed, tau2)
            n_scored += 1
            if sc < best:
                R2, t2, E2, c2s, _ = _lm(kind, R, t, E.copy(), score_mode, pts, packed,
                                         tau2, lo_steps)
                n_lo += 1
                if c2s < sc:
                    sc, inl = _cost(E2, score_mode, pts, packed, tau2)
                    E = E2
                    R = R2
                    t = t2
                if sc < best:
                    best = sc
                    best_inl = inl
                    found = True
                    best_E[:, :] = E
                    best_R[:, :] = R
                    best_t[:] = t
                    if samp_mode != EXHAUSTIVE:
                        needed = _stopping(inl / units, s, confidence, min_it, max_it)
    stats[0] = it
    stats[1] = best
    stats[2] = best_inl
    stats[3] = n_scored
    stats[4] = n_lo
    stats[5] = 1.0 if found else 0.0


def _now():
    return time.perf_counter_ns()


def _prepare(matches, intrinsics):
    """Pixel points and (optionally) calibrated points from the accepted inputs."""
    K1 = K2 = None
    if intrinsics is not None:
        K1, K2 = intrinsics
    if hasattr(matches, "calibrated") and hasattr(matches, "matches"):
        # a PairRecord
        if K1 is None:
            K1, K2 = matches.K1, matches.K2
        p1, p2 = matches.p1, matches.p2
        n1 = n2 = None
    elif isinstance(matches, Match):
        p1, p2, n1, n2 = matches
    else:
        a = np.asarray(matches, dtype=float)
        p1, p2 = a[:, :2], a[:, 2:4]
        n1 = n2 = None
    p1 = np.asarray(p1, dtype=float).reshape(-1, 2)
    p2 = np.asarray(p2, dtype=float).reshape(-1, 2)
    if K1 is not None:
        K1 = K1 if isinstance(K1, CameraIntrinsics) else CameraIntrinsics.from_matrix(K1)
        K2 = K2 if isinstance(K2, CameraIntrinsics) else CameraIntrinsics.from_matrix(K2)
        n1, n2 = K1.normalize(p1), K2.normalize(p2)
    return p1, p2, n1, n2, K1, K2


def _pseudo_normalize(p1, p2):
    """Shared isotropic scale and per-image centering for fundamental estimation."""
    m1 = p1.mean(axis=0)
    m2 = p2.mean(axis=0)
    d = 0.5 * (np.mean(np.linalg.norm(p1 - m1, axis=1)) + np.mean(np.linalg.norm(p2 - m2, axis=1)))
    S = d / np.sqrt(2.0) if d > 0 else 1.0
    # T maps pixels to normalized points, so F_pixels = T2^T F T1
    T1 = np.array([[1 / S, 0, -m1[0] / S], [0, 1 / S, -m1[1] / S], [0, 0, 1.0]])
    T2 = np.array([[1 / S, 0, -m2[0] / S], [0, 1 / S, -m2[1] / S], [0, 0, 1.0]])
    q1 = np.column_stack([(p1 - m1) / S, np.ones(len(p1))])
    q2 = np.column_stack([(p2 - m2) / S, np.ones(len(p2))])
    return q1, q2, S, T1, T2


def estimate(matches, intrinsics=None, config=None, clustering=None):
    """Robustly estimate the two-view geometry of one image pair.

    ``matches`` may be a PairRecord, a batched Match or an ``(N, 4)`` pixel
    array.  Essential estimation needs intrinsics (from the record or the
    ``intrinsics`` pair).  A precomputed clustering may be supplied.
    """
    from .harness.io import CalibrationRequired
    config = config or RansacConfig()
    method = config.method
    essential = config.model is ModelKind.ESSENTIAL
    p1, p2, n1, n2, K1, K2 = _prepare(matches, intrinsics)
    N = len(p1)
    s = 5 if essential else 7
    if N < s:
        raise ValueError(f"need at least {s} matches, got {N}")
    if essential:
        if n1 is None or K1 is None:
            raise CalibrationRequired("essential estimation needs camera intrinsics")
        x1, x2 = n1, n2
        tau = config.tau_px / (0.5 * (K1.mean_focal + K2.mean_focal))
    else:
        x1, x2, S, T1, T2 = _pseudo_normalize(p1, p2)
        tau = config.tau_px / S
    tau2 = tau * tau

    timings = {"cluster": 0.0, "summarize": 0.0, "ransac": 0.0, "refine": 0.0}
    fallback = N < config.K and not method.dense_only
    if fallback or method.dense_only:
        samp, score, ref = DENSE, DENSE, DENSE
    else:
        samp = {Data.DENSE: DENSE, Data.CENTER: CENTER, Data.APPROX: EXHAUSTIVE}[method.sampling]
        score, ref = method.scoring.code, method.refinement.code

    pts = pack_points(x1, x2)
    summaries = None
    if score != DENSE or ref != DENSE or samp != DENSE:
        t0 = _now()
        if clustering is None:
            clustering = cluster(Match(p1, p2, x1, x2), config.K, config.cluster_space,
                                 config.kmeans_iters, config.seed, config.rep_in_4d)
        t1 = _now()
        summaries = summarize(x1, x2, clustering.assignment, clustering.representatives)
        t2 = _now()
        timings["cluster"] = (t1 - t0) / 1e3
        timings["summarize"] = (t2 - t1) / 1e3
        packed = summaries.packed
    else:
        packed = np.zeros((50, 1))

    t0 = _now()
    if samp == DENSE:
        spts = pts
    else:
        spts = np.ascontiguousarray(packed[45:49])
    bases = np.zeros((1, 4, 9))
    if samp == EXHAUSTIVE:
        _, _, vt = np.linalg.svd(summaries.M)
        bases = np.ascontiguousarray(vt[:, 5:, :])
    best_E = np.zeros((3, 3))
    best_R = np.eye(3)
    best_t = np.zeros(3)
    stats = np.zeros(6)
    _ransac(0 if essential else 1, samp, spts, bases, score, pts, packed, tau2,
            np.uint64(config.seed & 0xFFFFFFFFFFFFFFFF), config.confidence,
            config.min_iterations, config.max_iterations, config.lo_max_steps,
            best_E, best_R, best_t, stats)
    t1 = _now()
    timings["ransac"] = (t1 - t0) / 1e3

    found = stats[5] > 0
    pose = None
    model = None
    if found:
        R, t, E, _, _ = _lm(0 if essential else 1, best_R, best_t, best_E, ref, pts, packed,
                            tau2, config.final_max_steps)
        if essential:
            # cheirality over the sampling set's inliers
            u = spts
            err = sampson_errors(E, (u[:2].T, u[2:].T))
            keep = err < tau2
            if not np.any(keep):
                keep = np.ones(len(err), dtype=bool)
            c1 = np.column_stack([u[0, keep], u[1, keep], np.ones(keep.sum())])
            c2 = np.column_stack([u[2, keep], u[3, keep], np.ones(keep.sum())])
            pose = select_pose_cheirality(decompose_essential(E), c1, c2).pose
            model = EpipolarModel(E / np.linalg.norm(E), ModelKind.ESSENTIAL)
        else:
            model = EpipolarModel(E, ModelKind.FUNDAMENTAL)
    t2 = _now()
    timings["refine"] = (t2 - t1) / 1e3
    timings["total"] = timings["ransac"] + timings["refine"]

    score_data = Data({DENSE: "D", CENTER: "C", APPROX: "A"}[score])
    if model is not None:
        sc = float(_cost(np.ascontiguousarray(model.matrix), score, pts, packed, tau2)[0])
        inl = classify_inliers(model, (x1, x2) if score == DENSE else summaries, score_data, tau)
        match_inl = sampson_errors(model, (x1, x2)) < tau2
        if not essential:
            F = T2.T @ model.matrix @ T1
            model = EpipolarModel(F / np.linalg.norm(F), ModelKind.FUNDAMENTAL)
    else:
        sc = float("inf")
        inl = np.zeros(N if score == DENSE else len(summaries), dtype=bool)
        match_inl = np.zeros(N, dtype=bool)
    return RansacResult(model, pose, sc, inl, int(stats[0]), timings, bool(found),
                        fallback, match_inl, method.code if not fallback else "DDD",
                        int(stats[3]), int(stats[4]))
