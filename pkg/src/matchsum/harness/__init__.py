"""Data ingestion, synthetic scenes, benchmarks and reports."""

from .bench import (BenchRecord, approx_error_eval, cluster_ablation, emit_report,
                    load_report, run_benchmark)
from .io import CalibrationRequired, DataError, GroundTruth, PairRecord, emit_pairs, load_pairs
from .metrics import auc, wxbs_recall
from .synth import SynthConfig, synth_pairs

__all__ = [
    "BenchRecord", "CalibrationRequired", "DataError", "GroundTruth", "PairRecord",
    "SynthConfig", "approx_error_eval", "auc", "cluster_ablation", "emit_pairs",
    "emit_report", "load_pairs", "load_report", "run_benchmark", "synth_pairs",
    "wxbs_recall",
]
