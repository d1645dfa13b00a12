"""Robust two-view estimation with cluster summaries of dense matches."""

from .clustering import ClusterSpace, Clustering, cluster, grid_cluster, kmeans, select_representatives
from .geometry import (CameraIntrinsics, EpipolarModel, Match, ModelKind, RelativePose,
                       decompose_essential, essential_from_pose, pose_error, sampson_error,
                       select_pose_cheirality)
from .ransac import MethodSpec, RansacConfig, RansacResult, estimate, stopping_iterations
from .refine import Data, refine
from .solvers import essential_5pt, essential_from_summary, fundamental_7pt
from .summarization import (ClusterSummary, SummarySet, cost_approx, cost_center, cost_dense,
                            summarize, summarize_cluster)

__all__ = [
    "CameraIntrinsics", "ClusterSpace", "ClusterSummary", "Clustering", "Data", "EpipolarModel",
    "Match", "MethodSpec", "ModelKind", "RansacConfig", "RansacResult", "RelativePose",
    "SummarySet", "cluster", "cost_approx", "cost_center", "cost_dense", "decompose_essential",
    "essential_5pt", "essential_from_pose", "essential_from_summary", "estimate",
    "fundamental_7pt", "grid_cluster", "kmeans", "pose_error", "refine", "sampson_error",
    "select_pose_cheirality", "select_representatives", "stopping_iterations", "summarize",
    "summarize_cluster",
]
