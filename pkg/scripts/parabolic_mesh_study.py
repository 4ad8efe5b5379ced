"""Final axis gap of the parabolic scenario over mesh density and method.

    python3 scripts/parabolic_mesh_study.py --densities 5 10 20 --methods A B
"""
import argparse
import time

from ecmsim import presets
from ecmsim.mesh import MM
from ecmsim.verification import run_config


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--densities", type=float, nargs="+", default=[5, 10, 20, 40])
    ap.add_argument("--methods", nargs="+", default=["B"])
    ap.add_argument("--rule", default="series")
    ap.add_argument("--dt-scale", type=float, default=1.0, help="divide dt, multiply steps")
    args = ap.parse_args()
    print(f"{'density':>7} {'method':>6} {'gap mm':>9} {'V_dis mm^3':>11} {'wall s':>8}")
    for n in args.densities:
        for method in args.methods:
            s = args.dt_scale
            cfg = presets.parabolic(density=n, method=method, rule=args.rule,
                                    dt=0.34483 / s, steps=int(round(500 * s)))
            t0 = time.perf_counter()
            r = run_config(cfg)
            print(f"{n:>7g} {method:>6} {r.series.gap[-1] / MM:>9.4f} "
                  f"{r.series.V_dis[-1] / MM ** 3:>11.4f} {time.perf_counter() - t0:>8.1f}", flush=True)


if __name__ == "__main__":
    main()
