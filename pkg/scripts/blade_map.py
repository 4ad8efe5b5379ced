"""ASCII map of the blade scenario's final state (T tool, # metal, . partly dissolved).

    python3 scripts/blade_map.py --density 2 --dt 4
"""
import argparse

import numpy as np

from ecmsim import presets
from ecmsim.verification import blade_cut_through, run_config


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--density", type=float, default=2)
    ap.add_argument("--dt", type=float, default=4.0)
    args = ap.parse_args()
    cfg = presets.blade(density=args.density, dt=args.dt)
    r = run_config(cfg)
    nx, ny = cfg.mesh.nx, cfg.mesh.ny
    d = r.state.d.reshape(ny, nx)
    metal = r.state.initially_metal.reshape(ny, nx)
    tool = cfg.cathode.contains_points(r.mesh.centroids, cfg.duration).reshape(ny, nx)
    for j in range(ny - 1, -1, -1):
        print("".join("T" if tool[j, i] else "#" if metal[j, i] and d[j, i] < 0.5
                      else "." if metal[j, i] and d[j, i] < 1 else " " for i in range(nx)))
    left, right = blade_cut_through(r)
    print(f"rows cut through: left {left:.2f}, right {right:.2f}; "
          f"V_dis {r.series.V_dis[-1] * 1e9:.3f} mm^3")


if __name__ == "__main__":
    main()
