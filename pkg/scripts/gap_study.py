"""Planar gap histories against the gap ODE, for several feeds and start gaps.

    python3 scripts/gap_study.py --feeds 0.005 0.015 --starts 0.25 0.4 --csv gaps.csv
"""
import argparse

import numpy as np

from ecmsim import presets
from ecmsim.driver import equilibrium_gap, gap_ode
from ecmsim.mesh import MM, MaterialSet
from ecmsim.verification import run_config


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--feeds", type=float, nargs="+", default=[0.005, 0.010, 0.015, 0.020])
    ap.add_argument("--starts", type=float, nargs="+", default=[0.25, 0.32, 0.40])
    ap.add_argument("--density", type=float, default=20)
    ap.add_argument("--dt", type=float, default=0.5)
    ap.add_argument("--duration", type=float, default=400.0)
    ap.add_argument("--csv", default=None, help="write t, s_fe, s_ode per run")
    args = ap.parse_args()
    mat = MaterialSet()
    rows = []
    print(f"{'feed':>6} {'s0':>5} {'s_eq':>8} {'s_end FE':>9} {'s_end ODE':>9} {'max |diff|':>10}")
    for feed in args.feeds:
        for s0 in args.starts:
            r = run_config(presets.planar(density=args.density, dt=args.dt,
                                          duration=args.duration, feed=feed, s_init=s0))
            t = np.array(r.series.t)
            g = np.array(r.series.gap)
            ode = gap_ode(mat.nu_dis, mat.k_electrolyte, 20.0, feed * MM, s0 * MM, t)
            s_eq = equilibrium_gap(mat.nu_dis, mat.k_electrolyte, 20.0, feed * MM)
            print(f"{feed:>6g} {s0:>5g} {s_eq / MM:>8.4f} {g[-1] / MM:>9.4f} {ode[-1] / MM:>9.4f} "
                  f"{np.max(np.abs(g - ode)) / MM:>10.4f}", flush=True)
            rows += [(feed, s0, ti, gi, oi) for ti, gi, oi in zip(t, g, ode)]
    if args.csv:
        np.savetxt(args.csv, np.array(rows), delimiter=",", fmt="%.9e",
                   header="feed_mm_s,s0_mm,t,s_fe,s_ode", comments="")


if __name__ == "__main__":
    main()
