"""Normalized dissolved volume of the planar scenario over mesh, dt and rule.

    python3 scripts/planar_study.py --densities 10 20 40 --dts 1 0.1 --rules series parallel
"""
import argparse
import time

from ecmsim import presets
from ecmsim.verification import planar_normalized_volume, run_config


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--densities", type=int, nargs="+", default=[10, 20, 40, 80])
    ap.add_argument("--dts", type=float, nargs="+", default=[1.0, 0.1, 0.01])
    ap.add_argument("--rules", nargs="+", default=["series", "parallel"])
    ap.add_argument("--method", default="B")
    args = ap.parse_args()
    print(f"{'rule':<9} {'mesh':>7} {'dt':>7} {'V/V_ref':>12} {'wall s':>8}")
    for rule in args.rules:
        for n in args.densities:
            for dt in args.dts:
                t0 = time.perf_counter()
                r = run_config(presets.planar(density=n, dt=dt, rule=rule, method=args.method))
                v = planar_normalized_volume(r)
                print(f"{rule:<9} {n:>3}x{n:<3} {dt:>7g} {v:>12.7f} {time.perf_counter() - t0:>8.2f}",
                      flush=True)


if __name__ == "__main__":
    main()
