"""Run every method code on a few synthetic pairs and print pose error and time.

A method code has three letters: sampling, scoring and refinement data, each
one of D (dense matches), C (cluster centers) or A (approximate summaries).
"""

import argparse

from matchsum.geometry import pose_error
from matchsum.harness import SynthConfig, synth_pairs
from matchsum.ransac import RansacConfig, estimate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pairs", type=int, default=3)
    ap.add_argument("--outliers", default="coherent", choices=["uniform", "coherent"])
    ap.add_argument("--methods", default="DDD,CAD,CCD,CAA,CCA,CCC")
    args = ap.parse_args()

    cfg = SynthConfig(n_pairs=args.pairs, outlier_model=args.outliers)
    pairs = list(synth_pairs(cfg))
    # first calls load the compiled kernels; keep that out of the timings
    for code in args.methods.split(","):
        estimate(pairs[0], config=RansacConfig(method=code, max_iterations=200))
    for pair in pairs:
        print(f"pair {pair.pair_id}: {len(pair)} matches")
        for code in args.methods.split(","):
            res = estimate(pair, config=RansacConfig(method=code))
            err = pose_error(res.pose, pair.gt.pose).max_deg if res.pose is not None else float("nan")
            t = res.timings
            print(f"  {res.method}  err {err:7.3f} deg  iters {res.iterations:5d}  "
                  f"ransac+refine {t['total'] / 1e3:7.1f} ms  clustering {t['cluster'] / 1e3:6.1f} ms")


if __name__ == "__main__":
    main()
