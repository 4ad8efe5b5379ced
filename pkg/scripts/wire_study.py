"""Kerf width of the wire scenario over refinement and time step.

    python3 scripts/wire_study.py --refinements 0.5 1 --dts 0.4 0.1 [--anode-band]
"""
import argparse
import time

from ecmsim import presets
from ecmsim.driver import Simulation

UM = 1e-6


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--refinements", type=float, nargs="+", default=[0.5])
    ap.add_argument("--dts", type=float, nargs="+", default=[0.4])
    ap.add_argument("--anode-band", action="store_true")
    args = ap.parse_args()
    for ref in args.refinements:
        for dt in args.dts:
            cfg = presets.wire(refinement=ref, dt=dt, anode_band=args.anode_band)
            sim = Simulation(cfg)
            t0 = time.perf_counter()
            r = sim.run(snapshot_every=-1)
            wall = time.perf_counter() - t0
            k = [0.0 if x is None else x / UM for x in r.series.kerf]
            marks = k[:: max(1, len(k) // 10)]
            print(f"refinement {ref:g} dt {dt:g}: {r.mesh.n_elements} elements, "
                  f"kerf {k[-1]:.2f} um, wall {wall:.1f} s", flush=True)
            print("  kerf every 10%: " + " ".join(f"{x:.1f}" for x in marks))
            print("  phases: " + ", ".join(f"{a} {b:.1f} s" for a, b in r.phase_times.items()))


if __name__ == "__main__":
    main()
