"""Pose and fundamental-matrix accuracy metrics."""

import numpy as np

from ..geometry import homogeneous, symmetric_epipolar_distance


def auc(errors, thresholds=(5.0, 10.0, 20.0)):
    """Area under the recall curve of ``errors`` up to each threshold, normalized to [0, 1].

    The recall curve is a step function, so the integral is exact:
    ``AUC@t = mean(max(0, t - e)) / t``.
    """
    e = np.asarray(errors, dtype=float).ravel()
    if e.size == 0:
        return []
    e = np.where(np.isfinite(e), e, 180.0)
    return [float(np.mean(np.maximum(0.0, t - e)) / t) for t in thresholds]


def epipolar_distance_px(F, gt_matches):
    """Root of the summed squared point-to-line distances, in pixels."""
    m = np.asarray(gt_matches, dtype=float).reshape(-1, 4)
    return np.sqrt(symmetric_epipolar_distance(np.asarray(F, dtype=float),
                                               homogeneous(m[:, :2]), homogeneous(m[:, 2:])))


def wxbs_recall(model, gt_matches, threshold_px=10.0):
    """Share of ground-truth matches whose epipolar distance is below the threshold."""
    d = epipolar_distance_px(model, gt_matches)
    if d.size == 0:
        raise ValueError("need at least one ground-truth match")
    return float(np.mean(d < threshold_px))
