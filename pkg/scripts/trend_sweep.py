"""Mean optimality ratio of one or more algorithms across grid sizes.

Example::

    python3 scripts/trend_sweep.py --dims 30x20 90x60 150x100 --seeds 20 --out trend.csv
"""

import argparse
import csv
import sys
from collections import defaultdict
from fractions import Fraction

import numpy as np

from gridmrpp.bench import InstanceSpec, bench


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--dims", nargs="+", default=["30x20", "90x60", "150x100"])
    p.add_argument("--density", default="1/3")
    p.add_argument("--algo", nargs="+", default=["grh"])
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--out", help="also write the per-run rows as CSV")
    args = p.parse_args(argv)

    dims = [tuple(int(v) for v in d.split("x")) for d in args.dims]
    specs = [InstanceSpec(d, Fraction(args.density)) for d in dims]
    out = open(args.out, "w", newline="") if args.out else None
    try:
        rows = bench(specs, args.algo, range(args.seeds), out)
    finally:
        if out:
            out.close()

    by_digest = {s.digest(): "x".join(map(str, s.dims)) for s in specs}
    groups = defaultdict(list)
    for r in rows:
        if r["status"] == "ok":
            groups[(by_digest[r["spec_digest"]], r["algorithm"])].append(r)
    w = csv.writer(sys.stdout)
    w.writerow(["dims", "algorithm", "runs", "mean_ratio", "mean_makespan", "max_makespan", "all_within_bound"])
    for d in map(lambda t: "x".join(map(str, t)), dims):
        for a in args.algo:
            g = groups.get((d, a), [])
            if not g:
                w.writerow([d, a, 0, "", "", "", ""])
                continue
            ratio = np.mean([float(r["ratio"]) for r in g])
            spans = [int(r["makespan"]) for r in g]
            w.writerow([d, a, len(g), f"{ratio:.3f}", f"{np.mean(spans):.1f}", max(spans),
                        all(r["bound_ok"] for r in g)])


if __name__ == "__main__":
    main()
