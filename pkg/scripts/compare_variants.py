"""Makespan of GRH, GRH-LBA, GRH with refinement and iGRH on the same instances.

Example::

    python3 scripts/compare_variants.py --dims 60x60 --seeds 20
"""

import argparse
from fractions import Fraction

import numpy as np

from gridmrpp.bench import InstanceSpec, bench

VARIANTS = ["grh", "grh-lba", "grh-pr", "igrh"]


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--dims", default="60x60")
    p.add_argument("--density", default="1/3")
    p.add_argument("--seeds", type=int, default=20)
    args = p.parse_args(argv)

    spec = InstanceSpec(tuple(int(v) for v in args.dims.split("x")), Fraction(args.density))
    rows = bench([spec], VARIANTS, range(args.seeds))
    base = {r["seed"]: int(r["makespan"]) for r in rows if r["algorithm"] == "grh"}
    print(f"{'variant':<10} {'mean':>8} {'max':>6} {'vs grh':>8} {'runtime':>8}")
    for v in VARIANTS:
        sel = [r for r in rows if r["algorithm"] == v and r["status"] == "ok"]
        spans = np.array([int(r["makespan"]) for r in sel])
        red = np.mean([1 - int(r["makespan"]) / base[r["seed"]] for r in sel])
        rt = np.mean([float(r["runtime"]) for r in sel])
        print(f"{v:<10} {spans.mean():8.1f} {spans.max():6d} {-100 * red + 0.0:+7.1f}% {rt:7.2f}s")


if __name__ == "__main__":
    main()
