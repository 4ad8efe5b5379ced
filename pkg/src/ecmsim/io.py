"""Config files, time-series CSV, legacy VTK snapshots and run manifests.

Config files are TOML in presentation units: lengths in mm, speeds in mm/s,
angles in degrees, times in s, potentials in V, conductivities in A/V/m and
nu_dis in m^3/(A s). Two forms are accepted. A preset reference

    scenario = "planar"
    mesh = "40x40"
    dt = 0.1

takes the preset's own arguments as overrides. The explicit form spells out
every table (see ``emit_config``); it is what ``preset --emit-config``
writes, and emit followed by parse reproduces the config exactly.
"""
from __future__ import annotations

import csv
import inspect
import json
import math
import platform
import re
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import tomli
import tomli_w

from . import __version__, presets
from .cathode import CathodeAssembly, Primitive
from .driver import AnodeSpec, MeshSpec, Probes, ScenarioConfig, Snapshot, TimeSeries
from .errors import EcmError, InvalidArgument, MeasurementError, ParseError
from .mesh import MaterialSet, Mesh

MM = 1e-3
DEG = math.pi / 180.0
CSV_FORMAT = "%.16e"


# -- unit conversion -----------------------------------------------------------

def _to_si(x: float, scale: float) -> float:
    return float(x) * scale


def _from_si(y: float, scale: float) -> float:
    """A presentation value that converts back to ``y``, exactly when possible.

    The shortest repr that converts back exactly is preferred. Some doubles
    are not the product of any double with ``scale``; those get the value
    whose product is nearest, which itself converts back exactly, so a
    second emit/parse cycle is a fixed point.
    """
    y = float(y)
    if y == 0 or not math.isfinite(y) or scale == 1.0:
        return y
    guess = y / scale
    for digits in (12, 15, 16, 17):
        x = float(f"{guess:.{digits}g}")
        if x * scale == y:
            return x
    best, x = guess, guess
    for _ in range(64):
        p = x * scale
        if p == y:
            return x
        if abs(p - y) < abs(best * scale - y):
            best = x
        x = math.nextafter(x, math.inf if p < y else -math.inf)
    return best


def _pair_si(v, scale, key):
    if not (isinstance(v, (list, tuple)) and len(v) == 2):
        raise ParseError(f"{key}: expected a pair of numbers")
    return tuple(_to_si(_num(x, key), scale) for x in v)


def _pair_out(v, scale):
    return [_from_si(x, scale) for x in v]


def _num(x, key) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ParseError(f"{key}: expected a number, got {x!r}")
    return float(x)


def _int(x, key) -> int:
    if isinstance(x, bool) or not isinstance(x, int):
        raise ParseError(f"{key}: expected an integer, got {x!r}")
    return int(x)


def _check_keys(table: dict, allowed, where: str):
    extra = sorted(set(table) - set(allowed))
    if extra:
        raise ParseError(f"{where}: unknown key(s) {', '.join(extra)}")


def _require(table: dict, keys, where: str):
    missing = [k for k in keys if k not in table]
    if missing:
        raise ParseError(f"{where}: missing required key(s) {', '.join(missing)}")


# -- primitives and assemblies ------------------------------------------------------

# key -> (Primitive field, scale)
_PRIM_SCALAR = {"a": MM, "b": MM, "c": 1.0 / MM, "alpha": DEG, "angle": DEG}


def _primitive_in(tab: dict, where: str) -> Primitive:
    if not isinstance(tab, dict):
        raise ParseError(f"{where}: a primitive must be a table")
    _check_keys(tab, ("kind", "position", "velocity", "inside", *_PRIM_SCALAR), where)
    _require(tab, ("kind",), where)
    kw: Dict[str, Any] = {"kind": tab["kind"]}
    for key, scale in _PRIM_SCALAR.items():
        if key in tab:
            kw[key] = _to_si(_num(tab[key], f"{where}.{key}"), scale)
    if "position" in tab:
        kw["position"] = _pair_si(tab["position"], MM, f"{where}.position")
    if "velocity" in tab:
        kw["velocity"] = _pair_si(tab["velocity"], MM, f"{where}.velocity")
    if "inside" in tab:
        if not isinstance(tab["inside"], bool):
            raise ParseError(f"{where}.inside: expected true or false")
        kw["inside"] = tab["inside"]
    try:
        return Primitive(**kw)
    except InvalidArgument as exc:
        raise ParseError(f"{where}: {exc}") from exc


def _primitive_out(p: Primitive) -> dict:
    out: Dict[str, Any] = {"kind": p.kind}
    for key, scale in _PRIM_SCALAR.items():
        val = getattr(p, key)
        if val != 0.0:
            out[key] = _from_si(val, scale)
    out["position"] = _pair_out(p.position, MM)
    if any(p.velocity):
        out["velocity"] = _pair_out(p.velocity, MM)
    if not p.inside:
        out["inside"] = False
    return out


def _assembly_in(tab, where: str) -> CathodeAssembly:
    if not isinstance(tab, dict):
        raise ParseError(f"{where}: expected a table with 'subsets'")
    _check_keys(tab, ("subsets", "time"), where)
    _require(tab, ("subsets",), where)
    subsets = tab["subsets"]
    if not isinstance(subsets, list):
        raise ParseError(f"{where}.subsets: expected a list of lists of primitives")
    subs = []
    for i, s in enumerate(subsets):
        if not isinstance(s, list) or not s:
            raise ParseError(f"{where}.subsets[{i}]: expected a non-empty list of primitives")
        subs.append(tuple(_primitive_in(p, f"{where}.subsets[{i}][{j}]") for j, p in enumerate(s)))
    time = _num(tab.get("time", 0.0), f"{where}.time")
    return CathodeAssembly(tuple(subs), time)


def _assembly_out(a: CathodeAssembly) -> dict:
    out: Dict[str, Any] = {"subsets": [[_primitive_out(p) for p in s] for s in a.subsets]}
    if a.time != 0.0:
        out["time"] = a.time
    return out


# -- tables -------------------------------------------------------------------------

_MESH_LENGTHS = ("width", "height", "thickness")
_MESH_KEYS = ("kind", *_MESH_LENGTHS, "origin", "nx", "ny", "n_coarse", "n_fine", "axis",
              "coarse_first", "x_segments", "y_segments")


def _mesh_in(tab, where="mesh") -> MeshSpec:
    if not isinstance(tab, dict):
        raise ParseError(f"{where}: expected a table")
    _check_keys(tab, _MESH_KEYS, where)
    kw: Dict[str, Any] = {}
    for key in _MESH_LENGTHS:
        if key in tab:
            kw[key] = _to_si(_num(tab[key], f"{where}.{key}"), MM)
    if "origin" in tab:
        kw["origin"] = _pair_si(tab["origin"], MM, f"{where}.origin")
    for key in ("nx", "ny"):
        if key in tab:
            kw[key] = _int(tab[key], f"{where}.{key}")
    for key in ("n_coarse", "n_fine"):
        if key in tab:
            kw[key] = _num(tab[key], f"{where}.{key}")
    for key in ("kind", "axis"):
        if key in tab:
            kw[key] = str(tab[key])
    if "coarse_first" in tab:
        kw["coarse_first"] = bool(tab["coarse_first"])
    for key in ("x_segments", "y_segments"):
        if key in tab:
            segs = []
            for i, s in enumerate(tab[key]):
                if not (isinstance(s, list) and len(s) == 3):
                    raise ParseError(f"{where}.{key}[{i}]: expected [length_mm, count, ratio]")
                segs.append((_to_si(_num(s[0], key), MM), _int(s[1], key), _num(s[2], key)))
            kw[key] = tuple(segs)
    try:
        return MeshSpec(**kw)
    except InvalidArgument as exc:
        raise ParseError(f"{where}: {exc}") from exc


def _mesh_out(m: MeshSpec) -> dict:
    out: Dict[str, Any] = {"kind": m.kind}
    if m.kind != "tensor":
        out["width"] = _from_si(m.width, MM)
        out["height"] = _from_si(m.height, MM)
    out["thickness"] = _from_si(m.thickness, MM)
    out["origin"] = _pair_out(m.origin, MM)
    if m.kind == "structured":
        out["nx"], out["ny"] = m.nx, m.ny
    elif m.kind == "graded":
        out.update(n_coarse=m.n_coarse, n_fine=m.n_fine, axis=m.axis, coarse_first=m.coarse_first)
    else:
        out["x_segments"] = [[_from_si(L, MM), n, r] for L, n, r in m.x_segments]
        out["y_segments"] = [[_from_si(L, MM), n, r] for L, n, r in m.y_segments]
    return out


_MATERIAL_KEYS = tuple(f.name for f in fields(MaterialSet))


def _materials_in(tab, where="materials") -> MaterialSet:
    if not isinstance(tab, dict):
        raise ParseError(f"{where}: expected a table")
    _check_keys(tab, _MATERIAL_KEYS, where)
    kw = {k: _num(v, f"{where}.{k}") for k, v in tab.items()}
    try:
        return MaterialSet(**kw)
    except InvalidArgument as exc:
        raise ParseError(f"{where}: {exc}") from exc


def _materials_out(m: MaterialSet) -> dict:
    return {k: float(getattr(m, k)) for k in _MATERIAL_KEYS}


def _anode_in(tab, where="anode") -> AnodeSpec:
    if not isinstance(tab, dict):
        raise ParseError(f"{where}: expected a table")
    _check_keys(tab, ("edges", "region", "pristine_only"), where)
    edges = tab.get("edges", ["left"])
    if not isinstance(edges, list) or not all(isinstance(e, str) for e in edges):
        raise ParseError(f"{where}.edges: expected a list of boundary names")
    region = _assembly_in(tab["region"], f"{where}.region") if "region" in tab else None
    return AnodeSpec(tuple(edges), region, bool(tab.get("pristine_only", False)))


def _anode_out(a: AnodeSpec) -> dict:
    out: Dict[str, Any] = {"edges": list(a.edges)}
    if a.region is not None:
        out["region"] = _assembly_out(a.region)
    if a.pristine_only:
        out["pristine_only"] = True
    return out


def _probes_in(tab, where="probes") -> Probes:
    if not isinstance(tab, dict):
        raise ParseError(f"{where}: expected a table")
    _check_keys(tab, ("gap_origin", "gap_direction", "kerf_station", "record_every"), where)
    kw: Dict[str, Any] = {}
    if "gap_origin" in tab:
        kw["gap_origin"] = _pair_si(tab["gap_origin"], MM, f"{where}.gap_origin")
    if "gap_direction" in tab:
        kw["gap_direction"] = _pair_si(tab["gap_direction"], 1.0, f"{where}.gap_direction")
    if "kerf_station" in tab:
        kw["kerf_station"] = _to_si(_num(tab["kerf_station"], f"{where}.kerf_station"), MM)
    if "record_every" in tab:
        kw["record_every"] = _int(tab["record_every"], f"{where}.record_every")
        if kw["record_every"] < 1:
            raise ParseError(f"{where}.record_every: must be >= 1")
    return Probes(**kw)


def _probes_out(p: Probes) -> dict:
    out: Dict[str, Any] = {}
    if p.gap_origin is not None:
        out["gap_origin"] = _pair_out(p.gap_origin, MM)
        out["gap_direction"] = list(p.gap_direction)
    if p.kerf_station is not None:
        out["kerf_station"] = _from_si(p.kerf_station, MM)
    out["record_every"] = p.record_every
    return out


# -- whole configs --------------------------------------------------------------------

_TOP_SCALARS = {"dt": float, "dv": float, "v_ca": float, "transient_factor": float,
                "cathode_tol": float, "steps": int, "snapshot_every": int, "pin_node": int}
_TOP_KEYS = ("name", "rule", "method", "settle", *_TOP_SCALARS,
             "mesh", "materials", "workpiece", "cathode", "anode", "probes")
_REQUIRED = ("mesh", "workpiece", "cathode", "dt", "steps", "dv")


def config_from_dict(doc: dict) -> ScenarioConfig:
    """Build a config from a parsed TOML document (preset or explicit form)."""
    if "scenario" in doc:
        return _preset_from_dict(doc)
    _check_keys(doc, _TOP_KEYS, "config")
    _require(doc, _REQUIRED, "config")
    kw: Dict[str, Any] = {"name": str(doc.get("name", "custom"))}
    for key, kind in _TOP_SCALARS.items():
        if key in doc:
            kw[key] = _int(doc[key], key) if kind is int else _num(doc[key], key)
    for key in ("rule", "method"):
        if key in doc:
            kw[key] = str(doc[key])
    if "settle" in doc:
        kw["settle"] = bool(doc["settle"])
    kw["mesh"] = _mesh_in(doc["mesh"])
    kw["workpiece"] = _assembly_in(doc["workpiece"], "workpiece")
    kw["cathode"] = _assembly_in(doc["cathode"], "cathode")
    if "materials" in doc:
        kw["materials"] = _materials_in(doc["materials"])
    if "anode" in doc:
        kw["anode"] = _anode_in(doc["anode"])
    if "probes" in doc:
        kw["probes"] = _probes_in(doc["probes"])
    try:
        return ScenarioConfig(**kw)
    except (InvalidArgument, TypeError) as exc:
        raise ParseError(f"config: {exc}") from exc


MESH_RE = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*[xX]\s*(\d+(?:\.\d+)?)\s*$")


def _preset_from_dict(doc: dict) -> ScenarioConfig:
    name = doc["scenario"]
    if name not in presets.NAMES:
        raise ParseError(f"scenario: unknown preset {name!r}; choose from {', '.join(presets.NAMES)}")
    builder = getattr(presets, name)
    params = [p for p in inspect.signature(builder).parameters.values()
              if p.kind is inspect.Parameter.POSITIONAL_OR_KEYWORD]
    allowed = {p.name for p in params}
    _check_keys(doc, {"scenario", "mesh", *allowed}, f"scenario {name!r}")
    kw = {k: v for k, v in doc.items() if k not in ("scenario", "mesh")}
    for key, val in kw.items():
        if isinstance(val, (dict, list)):
            raise ParseError(f"{key}: preset overrides must be scalars")
    if "mesh" in doc:
        m = MESH_RE.match(str(doc["mesh"]))
        if m is None:
            raise ParseError(f"mesh: expected 'NxM' in elements per mm, got {doc['mesh']!r}")
        a, b = float(m.group(1)), float(m.group(2))
        if "density" not in allowed:
            raise ParseError(f"mesh: preset {name!r} takes 'refinement' instead of a density")
        if name == "planar":
            kw["density"], kw["ny"] = a, int(b)
        elif a != b:
            raise ParseError(f"mesh: preset {name!r} needs equal densities, got {doc['mesh']!r}")
        else:
            kw["density"] = a
    try:
        return builder(**kw)
    except (InvalidArgument, TypeError) as exc:
        raise ParseError(f"scenario {name!r}: {exc}") from exc


def config_to_dict(cfg: ScenarioConfig) -> dict:
    """Explicit-form document in presentation units."""
    doc: Dict[str, Any] = {
        "name": cfg.name, "dt": cfg.dt, "steps": int(cfg.steps), "dv": cfg.dv,
        "rule": cfg.rule, "method": cfg.method, "v_ca": cfg.v_ca,
        "transient_factor": float(cfg.transient_factor), "cathode_tol": cfg.cathode_tol,
        "settle": cfg.settle, "snapshot_every": int(cfg.snapshot_every),
    }
    if cfg.pin_node is not None:
        doc["pin_node"] = int(cfg.pin_node)
    doc["mesh"] = _mesh_out(cfg.mesh)
    doc["materials"] = _materials_out(cfg.materials)
    doc["anode"] = _anode_out(cfg.anode)
    doc["probes"] = _probes_out(cfg.probes)
    doc["workpiece"] = _assembly_out(cfg.workpiece)
    doc["cathode"] = _assembly_out(cfg.cathode)
    return doc


HEADER = "# units: mm, mm/s, deg, s, V; conductivity A/V/m; nu_dis m^3/(A s)\n"


# an array of plain numbers/keywords that tomli_w spread over several lines
_SCALAR_ARRAY = re.compile(r"\[\n((?:[ \t]*[-+\w.\"]+,\n)+)[ \t]*\]")


def _join_scalar_array(m: re.Match) -> str:
    items = [x.strip().rstrip(",") for x in m.group(1).splitlines()]
    return "[" + ", ".join(items) + "]"


def emit_config(cfg: ScenarioConfig) -> str:
    return HEADER + _SCALAR_ARRAY.sub(_join_scalar_array, tomli_w.dumps(config_to_dict(cfg)))


def parse_config_text(text: str) -> ScenarioConfig:
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ParseError(f"TOML syntax: {exc}") from exc
    return config_from_dict(doc)


def parse_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from exc
    try:
        return parse_config_text(text)
    except ParseError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def write_config(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(emit_config(cfg))


# -- time series ---------------------------------------------------------------------

def _cell(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return CSV_FORMAT % x


def write_timeseries(ts: TimeSeries, path) -> None:
    """CSV with one row per recorded step; blank cells for absent probes.

    Floats use 17 significant digits so a read reproduces the series
    exactly. The dissolved volume must be non-decreasing.
    """
    v = np.array(ts.V_dis, dtype=float)
    if len(v) > 1:
        slack = 1e-12 * max(float(np.max(np.abs(v))), 1e-300)
        if np.any(np.diff(v) < -slack):
            raise MeasurementError("dissolved volume decreases in the time series")
    with open(path, "w", newline="") as fh:
        fh.write(",".join(TimeSeries.COLUMNS) + "\n")
        for i in range(len(ts)):
            fh.write(",".join(_cell(getattr(ts, c)[i]) for c in TimeSeries.COLUMNS) + "\n")


def read_timeseries(path) -> TimeSeries:
    ts = TimeSeries()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != TimeSeries.COLUMNS:
            raise ParseError(f"{path}: unexpected header {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ParseError(f"{path}:{lineno}: expected {len(header)} fields")
            vals = {}
            for name, cell in zip(header, row):
                if cell == "":
                    vals[name] = None
                elif name == "ndof":
                    vals[name] = int(cell)
                else:
                    vals[name] = float(cell)
            ts.append(**vals)
    return ts


# -- snapshots ---------------------------------------------------------------------------

def write_snapshot(mesh: Mesh, path, v=None, d=None, lam=None, j_norm=None,
                   title: str = "ecmsim snapshot") -> None:
    """Legacy ASCII VTK unstructured grid: quads (type 9) in the z=0 plane.

    Point data: ``v``; cell data: ``d``, ``lambda_cat``, ``j_norm``. Absent
    fields are left out.
    """
    n, ne = mesh.n_nodes, mesh.n_elements
    lines = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {n} double"]
    lines += [f"{x:.9e} {y:.9e} 0" for x, y in mesh.nodes]
    lines.append(f"CELLS {ne} {5 * ne}")
    lines += ["4 " + " ".join(map(str, q)) for q in mesh.elements]
    lines.append(f"CELL_TYPES {ne}")
    lines += ["9"] * ne

    def block(name, arr, size):
        arr = np.asarray(arr, dtype=float)
        if arr.shape != (size,):
            raise InvalidArgument(f"{name} needs {size} values")
        return [f"SCALARS {name} double 1", "LOOKUP_TABLE default"] + [f"{x:.9e}" for x in arr]

    if v is not None:
        lines.append(f"POINT_DATA {n}")
        lines += block("v", v, n)
    cells = [(k, a) for k, a in (("d", d), ("lambda_cat", lam), ("j_norm", j_norm)) if a is not None]
    if cells:
        lines.append(f"CELL_DATA {ne}")
        for name, arr in cells:
            lines += block(name, arr, ne)
    Path(path).write_text("\n".join(lines) + "\n")


def write_snapshot_from(snap: Snapshot, mesh: Mesh, path) -> None:
    write_snapshot(mesh, path, snap.v, snap.d, snap.lam, snap.j_norm,
                   title=f"step {snap.step} t={snap.t:.9e}")


def read_snapshot_cells(path) -> Dict[str, np.ndarray]:
    """Cell-data arrays of a file written by ``write_snapshot`` (for checks)."""
    tokens = Path(path).read_text().split("\n")
    out: Dict[str, np.ndarray] = {}
    ne = None
    i = 0
    section = None
    while i < len(tokens):
        line = tokens[i]
        if line.startswith("CELL_TYPES"):
            ne = int(line.split()[1])
        elif line.startswith("CELL_DATA"):
            section = "cell"
        elif line.startswith("POINT_DATA"):
            section = "point"
        elif line.startswith("SCALARS") and section == "cell":
            name = line.split()[1]
            out[name] = np.array([float(x) for x in tokens[i + 2:i + 2 + ne]])
            i += 1 + ne
        i += 1
    return out


# -- manifest ------------------------------------------------------------------------------

@dataclass
class RunManifest:
    config: dict                       # resolved config, SI units
    config_text: str = ""              # the same config as a parseable TOML document
    version: str = __version__
    phase_times: Dict[str, float] = field(default_factory=dict)
    wall_time: float = 0.0
    steps: int = 0
    files: List[str] = field(default_factory=list)
    python: str = platform.python_version()

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2) + "\n")

    @classmethod
    def read(cls, path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))

    def scenario(self) -> ScenarioConfig:
        """The echoed config, ready to run again."""
        return parse_config_text(self.config_text)


def config_to_si(cfg: ScenarioConfig) -> dict:
    """Plain SI echo of a config (nested dataclasses flattened to dicts)."""
    return json.loads(json.dumps(asdict(cfg), default=list))
