"""Benchmark runs over the method matrix, approximation statistics and reports."""

import csv
import json
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from ..clustering import ClusterSpace, cluster
from ..geometry import Match, ModelKind, essential_from_pose, pose_error
from ..ransac import RansacConfig, _pseudo_normalize, as_method, estimate
from ..summarization import (_approx_cost, _dense_cost, approx_residuals, pack_points,
                             sampson_errors, summarize)
from .io import CalibrationRequired
from .metrics import auc, wxbs_recall

FAILED_DEG = 180.0
AUC_THRESHOLDS = (5.0, 10.0, 20.0)


@dataclass
class BenchRecord:
    pair_id: str
    method: str
    seed: int
    pose_err_deg: float = math.nan
    rot_err_deg: float = math.nan
    trans_err_deg: float = math.nan
    recall: float = math.nan
    score: float = math.nan
    iterations: int = 0
    inlier_count: int = 0
    fallback: bool = False
    t_cluster_us: float = 0.0
    t_summarize_us: float = 0.0
    t_ransac_us: float = 0.0
    t_refine_us: float = 0.0
    t_total_us: float = 0.0
    t_pipeline_us: float = 0.0
    error: str = ""

    def __post_init__(self):
        for f in fields(self):
            if f.name.startswith("t_") and getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} must be nonnegative")


COLUMNS = [f.name for f in fields(BenchRecord)]
AGGREGATE_COLUMNS = ["method", "n", "auc5", "auc10", "auc20", "median_pose_err_deg",
                     "mean_pose_err_deg", "mean_recall", "median_total_us", "mean_total_us",
                     "median_pipeline_us", "speedup_vs_ddd"]
# columns that depend on wall-clock time; everything else is deterministic
TIMING_COLUMNS = {c for c in COLUMNS if c.startswith("t_")} | {
    "median_total_us", "mean_total_us", "median_pipeline_us", "speedup_vs_ddd"}


def _points_for(pair, essential):
    """Pixel and estimation-space points, as ``estimate`` sees them."""
    p1, p2 = pair.p1, pair.p2
    if essential:
        m = pair.calibrated()
        return Match(p1, p2, m.n1, m.n2)
    q1, q2, *_ = _pseudo_normalize(p1, p2)
    return Match(p1, p2, q1, q2)


def _one_pair(pair, methods, config, seeds):
    essential = config.model is ModelKind.ESSENTIAL
    out = []
    for seed in seeds:
        cfg = replace(config, seed=seed)
        shared, t_cluster = None, 0.0
        # the clustering is identical for every method of this (pair, seed)
        if any(not m.dense_only for m in methods) and len(pair) >= cfg.K:
            try:
                t0 = time.perf_counter_ns()
                shared = cluster(_points_for(pair, essential), cfg.K, cfg.cluster_space,
                                 cfg.kmeans_iters, seed, cfg.rep_in_4d)
                t_cluster = (time.perf_counter_ns() - t0) / 1e3
            except (CalibrationRequired, ValueError):
                shared = None
        for m in methods:
            rec = BenchRecord(pair.pair_id, m.code, seed)
            try:
                res = estimate(pair, config=replace(cfg, method=m),
                               clustering=None if m.dense_only else shared)
            except (CalibrationRequired, ValueError, np.linalg.LinAlgError) as err:
                rec.error = f"{type(err).__name__}: {err}"
                if essential:
                    rec.pose_err_deg = rec.rot_err_deg = rec.trans_err_deg = FAILED_DEG
                else:
                    rec.recall = 0.0
                out.append(rec)
                continue
            tm = res.timings
            rec.score = res.score
            rec.iterations = res.iterations
            rec.inlier_count = int(np.count_nonzero(res.match_inliers))
            rec.fallback = res.fallback
            rec.t_cluster_us = t_cluster if (shared is not None and not m.dense_only
                                             and not res.fallback) else tm["cluster"]
            rec.t_summarize_us = tm["summarize"]
            rec.t_ransac_us = tm["ransac"]
            rec.t_refine_us = tm["refine"]
            # total is ransac + refine; pipeline adds the clustering and summaries
            rec.t_total_us = tm["total"]
            rec.t_pipeline_us = rec.t_cluster_us + rec.t_summarize_us + rec.t_total_us
            if essential:
                if res.pose is None:
                    rec.error = "no model found"
                    rec.pose_err_deg = rec.rot_err_deg = rec.trans_err_deg = FAILED_DEG
                elif pair.gt is not None:
                    pe = pose_error(res.pose, pair.gt.pose)
                    rec.rot_err_deg, rec.trans_err_deg = pe.rot_deg, pe.trans_deg
                    rec.pose_err_deg = pe.max_deg
            elif pair.gt_matches is not None and len(pair.gt_matches):
                rec.recall = 0.0 if res.model is None else wxbs_recall(res.model, pair.gt_matches)
            out.append(rec)
    return out


def run_benchmark(pairs, methods, config=None, repeats=1, workers=1):
    """Run every method on every pair, with seeds ``seed .. seed + repeats - 1``.

    Pairs are processed by a pool of ``workers`` threads; records come back in
    pair order whatever the schedule.  Failures become records with an error
    marker (180 degrees pose error) instead of aborting the run.
    """
    methods = [as_method(m) for m in methods]
    if not methods:
        raise ValueError("need at least one method")
    if repeats < 1:
        raise ValueError("repeats must be positive")
    config = config or RansacConfig()
    seeds = [config.seed + r for r in range(repeats)]
    pairs = list(pairs)
    if workers <= 1:
        chunks = [_one_pair(p, methods, config, seeds) for p in pairs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(lambda p: _one_pair(p, methods, config, seeds), pairs))
    return [r for chunk in chunks for r in chunk]


# --- aggregation and reports ---------------------------------------------------

def aggregate(records):
    """Per-method summary rows in first-seen method order."""
    by = {}
    for r in records:
        by.setdefault(r.method, []).append(r)
    med = {m: float(np.median([r.t_total_us for r in rs])) for m, rs in by.items()}
    rows = []
    for m, rs in by.items():
        err = np.array([r.pose_err_deg for r in rs], dtype=float)
        err = err[~np.isnan(err)]
        rec = np.array([r.recall for r in rs], dtype=float)
        rec = rec[~np.isnan(rec)]
        a = auc(err, AUC_THRESHOLDS) if err.size else [math.nan] * 3
        sp = med["DDD"] / med[m] if "DDD" in med and med[m] > 0 else math.nan
        if m == "DDD":
            sp = 1.0
        rows.append({
            "method": m, "n": len(rs), "auc5": a[0], "auc10": a[1], "auc20": a[2],
            "median_pose_err_deg": float(np.median(err)) if err.size else math.nan,
            "mean_pose_err_deg": float(np.mean(err)) if err.size else math.nan,
            "mean_recall": float(np.mean(rec)) if rec.size else math.nan,
            "median_total_us": med[m],
            "mean_total_us": float(np.mean([r.t_total_us for r in rs])),
            "median_pipeline_us": float(np.median([r.t_pipeline_us for r in rs])),
            "speedup_vs_ddd": sp,
        })
    return rows


def _sig(v):
    """Six significant digits; ints, bools and strings pass through."""
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if not math.isfinite(v) else float(f"{v:.6g}")
    return v


def _cell(v):
    v = _sig(v)
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _rounded(row):
    return {k: _sig(v) for k, v in row.items()}


def emit_report(records, fmt, path):
    """Write records plus a per-method aggregate block as CSV or JSON.

    Floats carry six significant digits.  An empty record list gives a
    header-only CSV or an empty JSON report.
    """
    records = list(records)
    rows = [_rounded(asdict(r)) for r in records]
    agg = [_rounded(a) for a in aggregate(records)] if records else []
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            if fmt == "json":
                json.dump({"records": rows, "aggregate": agg}, fh, indent=1)
                fh.write("\n")
            elif fmt == "csv":
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(COLUMNS)
                for r in rows:
                    w.writerow([_cell(r[c]) for c in COLUMNS])
                if agg:
                    fh.write("\n# aggregate\n")
                    w.writerow(AGGREGATE_COLUMNS)
                    for a in agg:
                        w.writerow([_cell(a[c]) for c in AGGREGATE_COLUMNS])
            else:
                raise ValueError(f"unknown report format {fmt!r}")
    except OSError as err:
        raise OSError(f"cannot write report {path}: {err.strerror}") from err


def load_report(path):
    """Records and aggregate rows of a JSON report."""
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    return [BenchRecord(**r) for r in d["records"]], d["aggregate"]


def strip_timings(path):
    """Report text with every timing column removed, for determinism checks."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        d = json.loads(text)
        for block in d.values():
            for row in block:
                for c in TIMING_COLUMNS:
                    row.pop(c, None)
        return json.dumps(d, sort_keys=True)
    out, keep = [], None
    for line in text.splitlines():
        if not line or line.startswith("#"):
            out.append(line)
            keep = None
            continue
        cells = next(csv.reader([line]))
        if keep is None:
            keep = [i for i, c in enumerate(cells) if c not in TIMING_COLUMNS]
        out.append(",".join(cells[i] for i in keep))
    return "\n".join(out)


def write_rows(rows, fmt, path, extra=None):
    """Plain table writer for the evaluation and ablation reports."""
    rows = [_rounded(r) for r in rows]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if fmt == "json":
            json.dump({"rows": rows, **(extra or {})}, fh, indent=1)
            fh.write("\n")
            return
        cols = list(rows[0]) if rows else []
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_cell(r[c]) for c in cols])
        for name, block in (extra or {}).items():
            fh.write(f"\n# {name}\n")
            if isinstance(block, dict):
                for k, v in block.items():
                    w.writerow([k] + ([_cell(x) for x in v] if isinstance(v, list) else [_cell(v)]))


# --- approximation error ----------------------------------------------------------

@dataclass
class ApproxEval:
    """Per-cluster exact and approximate average Sampson errors at the gt model.

    ``eps_s`` and ``eps_a`` are square roots of per-cluster mean residuals,
    multiplied by the mean focal length so they read as pixels.
    """
    eps_s: np.ndarray
    eps_a: np.ndarray
    sizes: np.ndarray
    hist_counts: np.ndarray
    hist_edges: np.ndarray
    table: list
    skipped: list

    @property
    def diff(self):
        return self.eps_s - self.eps_a

    def fraction_within(self, tol=0.1):
        d = self.diff
        return float(np.mean(np.abs(d) < tol)) if d.size else math.nan

    def summary(self):
        d = self.diff
        fin = d[np.isfinite(d)]
        return {"clusters": int(d.size), "within_0.1px": self.fraction_within(0.1),
                "median_diff_px": float(np.median(fin)) if fin.size else math.nan,
                "mean_abs_diff_px": float(np.mean(np.abs(fin))) if fin.size else math.nan}


def _time_us(fn, reps):
    ts = np.empty(reps)
    for i in range(reps):
        t0 = time.perf_counter_ns()
        fn()
        ts[i] = time.perf_counter_ns() - t0
    return float(np.median(ts)) / 1e3


def _cluster_eps(E, x1, x2, labels, summaries, scale):
    err = sampson_errors(E, (x1, x2))
    sizes = summaries.size
    eps_s = np.sqrt(np.bincount(labels, weights=err, minlength=len(sizes)) / sizes)
    eps_a = np.sqrt(approx_residuals(E, summaries) / sizes)
    return scale * eps_s, scale * eps_a, err


def approx_error_eval(pairs, config=None, Ks=(64, 128, 256, 512, 1024), bins=50,
                      timing_reps=50):
    """Exact vs approximate per-cluster Sampson error at the ground-truth model.

    The histogram covers ``eps_s - eps_a`` over all clusters at ``config.K``,
    clipped to its 1st-99th percentile range.  The table has one exact row
    (per-match inlier ratio, dense scoring time) and one row per K
    (per-cluster inlier ratio, summary scoring time).
    """
    config = config or RansacConfig()
    eps_s, eps_a, sizes, skipped = [], [], [], []
    exact_ratio, t_exact = [], []
    approx_ratio = {K: [] for K in Ks}
    t_approx = {K: [] for K in Ks}
    for pair in pairs:
        if pair.gt is None or pair.K1 is None or pair.K2 is None:
            warnings.warn(f"pair {pair.pair_id!r} has no ground truth or intrinsics; skipped")
            skipped.append(pair.pair_id)
            continue
        m = pair.calibrated()
        E = essential_from_pose(pair.gt.pose).matrix
        f = 0.5 * (pair.K1.mean_focal + pair.K2.mean_focal)
        tau2 = (config.tau_px / f) ** 2
        pts = pack_points(m.n1, m.n2)
        for K in sorted(set(Ks) | {config.K}):
            cl = cluster(m, K, config.cluster_space, config.kmeans_iters, config.seed,
                         config.rep_in_4d)
            S = summarize(m.n1, m.n2, cl.assignment, cl.representatives)
            es, ea, err = _cluster_eps(E, m.n1, m.n2, cl.assignment, S, f)
            if K == config.K:
                eps_s.append(es)
                eps_a.append(ea)
                sizes.append(S.size)
            if K in approx_ratio:
                approx_ratio[K].append(float(np.mean(ea < config.tau_px)))
                P = S.packed
                t_approx[K].append(_time_us(lambda: _approx_cost(E, P, tau2), timing_reps))
        exact_ratio.append(float(np.mean(err < tau2)))
        t_exact.append(_time_us(lambda: _dense_cost(E, pts, tau2), timing_reps))

    eps_s = np.concatenate(eps_s) if eps_s else np.zeros(0)
    eps_a = np.concatenate(eps_a) if eps_a else np.zeros(0)
    d = eps_s - eps_a
    fin = d[np.isfinite(d)]
    if fin.size:
        lo, hi = np.percentile(fin, [1, 99])
        if hi <= lo:
            lo, hi = lo - 0.5, hi + 0.5
        counts, edges = np.histogram(np.clip(fin, lo, hi), bins=bins, range=(lo, hi))
    else:
        counts, edges = np.zeros(bins, dtype=int), np.linspace(0, 1, bins + 1)

    def row(name, ratios, times, base):
        r = np.asarray(ratios, dtype=float)
        t = float(np.median(times)) if len(times) else math.nan
        return {"scoring": name,
                "median_inlier_ratio": float(np.median(r)) if r.size else math.nan,
                "mean_inlier_ratio": float(np.mean(r)) if r.size else math.nan,
                "runtime_us": t, "speedup": base / t if t > 0 else math.nan}

    base = float(np.median(t_exact)) if t_exact else math.nan
    table = [row("exact", exact_ratio, t_exact, base)]
    for K in sorted(Ks, reverse=True):
        table.append(row(f"approx K={K}", approx_ratio[K], t_approx[K], base))
    return ApproxEval(eps_s, eps_a, np.concatenate(sizes) if sizes else np.zeros(0),
                      counts, edges, table, skipped)


# --- cluster-space ablation ------------------------------------------------------

def cluster_ablation(pairs, config=None, spaces=tuple(ClusterSpace), Ks=(32, 64, 128, 256),
                     methods=("CCA",)):
    """Accuracy and runtime of each cluster space and K."""
    config = config or RansacConfig()
    pairs = list(pairs)
    rows = []
    for space in spaces:
        for K in Ks:
            cfg = replace(config, cluster_space=ClusterSpace(space), K=K)
            recs = run_benchmark(pairs, methods, cfg)
            for a in aggregate(recs):
                rs = [r for r in recs if r.method == a["method"]]
                rows.append({"space": ClusterSpace(space).value, "K": K, "method": a["method"],
                             "auc5": a["auc5"], "auc10": a["auc10"], "auc20": a["auc20"],
                             "median_pose_err_deg": a["median_pose_err_deg"],
                             "median_cluster_us": float(np.median([r.t_cluster_us for r in rs])),
                             "median_total_us": a["median_total_us"]})
    return rows
