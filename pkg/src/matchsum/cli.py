"""Command-line front end.

    matchsum synth --output pairs.jsonl --n-pairs 20
    matchsum bench --input pairs.jsonl --methods DDD,CCA --output report.csv
"""

import argparse
import itertools
import json
import sys

import numpy as np

from .clustering import ClusterSpace
from .geometry import ModelKind, pose_error
from .harness.bench import (aggregate, approx_error_eval, cluster_ablation, emit_report,
                            run_benchmark, write_rows)
from .harness.io import DataError, emit_pairs, load_pairs
from .harness.metrics import wxbs_recall
from .harness.synth import SynthConfig, synth_pairs
from .ransac import RansacConfig, as_method, estimate

USAGE, DATA, NUMERIC = 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE, f"{self.prog}: error: {message}\n")


def _int_list(s):
    return [int(x) for x in s.split(",") if x]


def _shared():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--input", help="JSON-lines pair file")
    p.add_argument("--output", help="output path (stdout summary only if omitted)")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--methods", default="DDD,CAD,CCD,CAA,CCA,CCC")
    p.add_argument("--k", type=int, default=128)
    p.add_argument("--cluster-space", choices=[s.value for s in ClusterSpace], default="4d")
    p.add_argument("--tau-px", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--model", choices=["essential", "fundamental"], default="essential")
    p.add_argument("--max-iters", type=int, default=10_000)
    p.add_argument("--confidence", type=float, default=0.999)
    p.add_argument("--limit", type=int, help="use only the first N pairs")
    p.add_argument("--workers", type=int, default=1)
    return p


def build_parser():
    shared = _shared()
    ap = _Parser(prog="matchsum", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", parents=[shared], help="write synthetic pairs")
    s.add_argument("--n-pairs", type=int, default=100)
    s.add_argument("--n-matches", type=int, default=10_000)
    s.add_argument("--noise-px", type=float, default=1.0)
    s.add_argument("--outlier-frac", type=float, default=0.3)
    s.add_argument("--focal-px", type=float, default=1000.0)
    s.add_argument("--outlier-model", choices=["uniform", "coherent"], default="uniform")

    sub.add_parser("estimate", parents=[shared], help="estimate one pair").add_argument(
        "--pair", default="0", help="pair id or zero-based index (default: first)")
    sub.add_parser("bench", parents=[shared], help="methods x pairs x repeats")
    a = sub.add_parser("approx-eval", parents=[shared], help="approximation error statistics")
    a.add_argument("--ks", type=_int_list, default=[64, 128, 256, 512, 1024])
    a.add_argument("--bins", type=int, default=50)
    c = sub.add_parser("cluster-ablate", parents=[shared], help="sweep cluster spaces and K")
    c.add_argument("--ks", type=_int_list, default=[32, 64, 128, 256])
    c.add_argument("--spaces", default="2d,4d,9d,grid")
    return ap


def _config(args, method="CCA"):
    return RansacConfig(method=method, tau_px=args.tau_px, max_iterations=args.max_iters,
                        min_iterations=min(100, args.max_iters), confidence=args.confidence,
                        seed=args.seed, K=args.k, cluster_space=args.cluster_space,
                        model=ModelKind(args.model))


def _pairs(args):
    if not args.input:
        raise argparse.ArgumentTypeError("--input is required")
    pairs = load_pairs(args.input)
    return itertools.islice(pairs, args.limit) if args.limit else pairs


def _methods(args):
    return [as_method(m) for m in args.methods.split(",") if m]


def cmd_synth(args):
    if not args.output:
        raise argparse.ArgumentTypeError("--output is required")
    cfg = SynthConfig(n_pairs=args.n_pairs, n_matches=args.n_matches, noise_px=args.noise_px,
                      outlier_frac=args.outlier_frac, focal_px=args.focal_px,
                      outlier_model=args.outlier_model, seed=args.seed)
    emit_pairs(synth_pairs(cfg), args.output)
    print(f"wrote {cfg.n_pairs} pairs to {args.output}")


def cmd_estimate(args):
    pair = None
    for i, p in enumerate(_pairs(args)):
        if p.pair_id == args.pair or str(i) == args.pair:
            pair = p
            break
    if pair is None:
        raise DataError(f"pair {args.pair!r} not found")
    out = []
    for m in _methods(args):
        res = estimate(pair, config=_config(args, m))
        if res.model is None:
            raise FloatingPointError(f"{m.code}: no model found")
        d = {"pair_id": pair.pair_id, "method": res.method, "fallback": res.fallback,
             "model": res.model.matrix.tolist(), "score": res.score,
             "iterations": res.iterations, "inliers": int(np.count_nonzero(res.match_inliers)),
             "timings_us": res.timings}
        if res.pose is not None:
            d["R"] = res.pose.R.tolist()
            d["t"] = res.pose.t.tolist()
            if pair.gt is not None:
                pe = pose_error(res.pose, pair.gt.pose)
                d["rot_err_deg"], d["trans_err_deg"] = pe.rot_deg, pe.trans_deg
        if res.pose is None and pair.gt_matches is not None:
            d["recall_10px"] = wxbs_recall(res.model, pair.gt_matches)
        out.append(d)
    text = json.dumps(out, indent=1)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)


def _print_rows(rows, cols):
    print("  ".join(f"{c:>12}" for c in cols))
    for r in rows:
        print("  ".join(f"{r[c]:>12.4g}" if isinstance(r[c], float) else f"{str(r[c]):>12}"
                        for c in cols))


def cmd_bench(args):
    recs = run_benchmark(_pairs(args), _methods(args), _config(args), args.repeats, args.workers)
    if args.output:
        emit_report(recs, args.format, args.output)
    _print_rows(aggregate(recs), ["method", "n", "auc5", "auc10", "auc20",
                                  "median_pose_err_deg", "mean_recall", "median_total_us",
                                  "median_pipeline_us", "speedup_vs_ddd"])


def cmd_approx_eval(args):
    ev = approx_error_eval(_pairs(args), _config(args), Ks=args.ks, bins=args.bins)
    summary = ev.summary()
    if args.output:
        write_rows(ev.table, args.format, args.output,
                   {"summary": summary, "histogram": {"counts": ev.hist_counts.tolist(),
                                                      "edges": ev.hist_edges.tolist()}})
    for k, v in summary.items():
        print(f"{k}: {v:.6g}")
    _print_rows(ev.table, ["scoring", "median_inlier_ratio", "mean_inlier_ratio",
                           "runtime_us", "speedup"])


def cmd_cluster_ablate(args):
    spaces = [ClusterSpace(s) for s in args.spaces.split(",") if s]
    rows = cluster_ablation(_pairs(args), _config(args), spaces, args.ks, _methods(args))
    if args.output:
        write_rows(rows, args.format, args.output)
    _print_rows(rows, ["space", "K", "method", "auc5", "median_pose_err_deg",
                       "median_cluster_us", "median_total_us"])


COMMANDS = {"synth": cmd_synth, "estimate": cmd_estimate, "bench": cmd_bench,
            "approx-eval": cmd_approx_eval, "cluster-ablate": cmd_cluster_ablate}


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except DataError as err:
        print(f"matchsum: data error: {err}", file=sys.stderr)
        return DATA
    except (np.linalg.LinAlgError, ArithmeticError) as err:
        # LinAlgError subclasses ValueError, so it must be caught first
        print(f"matchsum: numerical failure: {err}", file=sys.stderr)
        return NUMERIC
    except (argparse.ArgumentTypeError, ValueError) as err:
        print(f"matchsum: error: {err}", file=sys.stderr)
        return USAGE
    except OSError as err:
        print(f"matchsum: {err}", file=sys.stderr)
        return DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
