"""Command-line entry point: run, preset, verify, bench.

Exit codes: 0 success, 1 runtime error, 2 usage or config error,
3 a verification check failed.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from . import __version__, io, presets, verification
from .driver import Simulation
from .errors import EcmError, ParseError

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_CHECK = 0, 1, 2, 3

log = logging.getLogger("ecmsim")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ecmsim", description="Fixed-mesh electrochemical machining simulator.")
    p.add_argument("--version", action="version", version=f"ecmsim {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run a scenario from a config file")
    r.add_argument("config", help="TOML config (preset reference or explicit form)")
    r.add_argument("--out", default=None, help="output directory (default: ./run-<name>)")
    r.add_argument("--snapshots", type=int, default=None, metavar="N",
                   help="write a snapshot every N steps (0: every 10%%, negative: none)")

    pr = sub.add_parser("preset", help="show or export a built-in scenario")
    pr.add_argument("name", choices=presets.NAMES)
    pr.add_argument("--emit-config", action="store_true",
                    help="write the fully resolved config as TOML")
    pr.add_argument("-o", "--output", default=None, help="file for --emit-config (default stdout)")

    v = sub.add_parser("verify", help="run a scenario's reference checks")
    v.add_argument("name", choices=presets.NAMES)
    v.add_argument("--quick", action="store_true", help="reduced-resolution variants")

    b = sub.add_parser("bench", help="compare wall-clock of cathode methods")
    b.add_argument("name", choices=presets.NAMES)
    b.add_argument("--methods", default="A,B", help="comma-separated, e.g. A,B")
    b.add_argument("--mesh", default=None, metavar="NxN", help="mesh density override")
    return p


def _cmd_run(args) -> int:
    # normalise through the emitted form so the manifest reruns bit for bit
    cfg = io.parse_config_text(io.emit_config(io.parse_config(args.config)))
    out = Path(args.out) if args.out else Path(f"run-{cfg.name}")
    out.mkdir(parents=True, exist_ok=True)
    sim = Simulation(cfg)

    def progress(s):
        if s.step_index % max(1, cfg.steps // 10) == 0:
            log.info("step %d/%d t=%.4g s", s.step_index, cfg.steps, s.time)

    result = sim.run(snapshot_every=args.snapshots, callback=progress)
    files = []
    io.write_config(cfg, out / "config.toml")
    files.append("config.toml")
    io.write_timeseries(result.series, out / "timeseries.csv")
    files.append("timeseries.csv")
    if result.snapshots:
        (out / "snapshots").mkdir(exist_ok=True)
        for snap in result.snapshots:
            name = f"snapshots/step_{snap.step:06d}.vtk"
            io.write_snapshot_from(snap, result.mesh, out / name)
            files.append(name)
    files.append("manifest.json")
    manifest = io.RunManifest(config=io.config_to_si(cfg), config_text=io.emit_config(cfg),
                              phase_times=result.phase_times, wall_time=result.wall_time,
                              steps=cfg.steps, files=files)
    manifest.write(out / "manifest.json")
    s = result.series
    print(f"{cfg.name}: {cfg.steps} steps on {result.mesh.n_elements} elements "
          f"in {result.wall_time:.2f} s")
    print(f"final V_dis = {s.V_dis[-1]:.6e} m^3" +
          (f", gap = {s.gap[-1] * 1e3:.5f} mm" if s.gap and s.gap[-1] is not None else "") +
          (f", kerf = {s.kerf[-1] * 1e6:.3f} um" if s.kerf and s.kerf[-1] is not None else ""))
    print(f"output in {out}/")
    return EXIT_OK


def _cmd_preset(args) -> int:
    cfg = presets.preset(args.name)
    if not args.emit_config:
        print(f"{cfg.name}: {cfg.steps} steps of {cfg.dt:g} s, method {cfg.method}, "
              f"rule {cfg.rule}, dv {cfg.dv:g} V, feed {cfg.feed * 1e3:g} mm/s")
        print("use --emit-config to export the full config")
        return EXIT_OK
    text = io.emit_config(cfg)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_verify(args) -> int:
    checks = verification.verify(args.name, quick=args.quick)
    failed = [c for c in checks if not c.passed and not c.informational]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return EXIT_CHECK if failed else EXIT_OK


def _cmd_bench(args) -> int:
    methods = [m.strip().upper() for m in args.methods.split(",") if m.strip()]
    if not methods or any(m not in ("A", "B") for m in methods):
        raise ParseError("--methods takes a comma-separated subset of A,B")
    kw = {"density": _density_of(args.name, args.mesh)} if args.mesh else {}
    rows = verification.bench(args.name, methods, **kw)
    print(verification.format_bench(rows))
    return EXIT_OK


def _density_of(name: str, mesh: str) -> float:
    m = io.MESH_RE.match(mesh)
    if m is None or name == "wire" or m.group(1) != m.group(2):
        raise ParseError(f"--mesh: expected NxN for {name!r}, got {mesh!r}")
    return float(m.group(1))


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": _cmd_run, "preset": _cmd_preset, "verify": _cmd_verify, "bench": _cmd_bench}
    try:
        return handlers[args.command](args)
    except ParseError as exc:
        print(f"ecmsim: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EcmError as exc:
        print(f"ecmsim: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"ecmsim: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
