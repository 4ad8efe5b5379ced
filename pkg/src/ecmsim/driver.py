"""Scenario configuration, time loop and measurement probes.

Each step solves the field with the tool at t_n, dissolves for dt and
then moves the tool to t_{n+1}; probes are read at t_{n+1}. Solving with
the tool already advanced would shorten every gap by feed*dt and bias the
removal rate by the same relative amount.
"""
from __future__ import annotations

import logging
import math
import time as _time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp

from . import cathode as cat
from .cathode import CathodeAssembly
from .dissolution import (DissolutionState, RULES, effective_anode_params, initial_state,
                          propagate_activation, total_dissolved_volume, update_dissolution)
from .errors import (ConfigurationError, EcmError, InvalidArgument, MeasurementError,
                     NoEquilibriumError, StepError)
from .field import ConstraintSet, EffectiveParams, FieldSolver, FieldState, renumber
from .mesh import MaterialSet, Mesh, from_coordinates, generate_graded, generate_structured, segment_lines

log = logging.getLogger(__name__)

PHASES = ("geometry", "assembly", "solve", "dissolution", "probes")


# -- configuration ------------------------------------------------------------

@dataclass(frozen=True)
class MeshSpec:
    """Mesh recipe. Lengths in metres, densities in elements per mm."""

    kind: str = "structured"                 # structured | graded | tensor
    width: float = 1e-3
    height: float = 1e-3
    thickness: float = 1e-4
    origin: Tuple[float, float] = (0.0, 0.0)
    nx: int = 10
    ny: int = 10
    n_coarse: float = 10.0
    n_fine: float = 80.0
    axis: str = "y"
    coarse_first: bool = True
    x_segments: Tuple[Tuple[float, int, float], ...] = ()
    y_segments: Tuple[Tuple[float, int, float], ...] = ()

    def __post_init__(self):
        if self.kind not in ("structured", "graded", "tensor"):
            raise InvalidArgument(f"unknown mesh kind {self.kind!r}")
        if not self.thickness > 0:
            raise InvalidArgument("thickness must be positive")

    def build(self) -> Mesh:
        if self.kind == "structured":
            return generate_structured(self.nx, self.ny, self.width, self.height,
                                       self.thickness, self.origin)
        if self.kind == "graded":
            return generate_graded(self.n_coarse, self.n_fine, self.axis, self.width,
                                   self.height, self.thickness, self.coarse_first, self.origin)
        return from_coordinates(segment_lines(self.x_segments), segment_lines(self.y_segments),
                                self.thickness, self.origin)


@dataclass(frozen=True)
class AnodeSpec:
    """Nodes held at the anode potential.

    ``edges`` names boundary tags. ``region`` adds nodes inside a (possibly
    moving) region; with ``pristine_only`` a region node counts only while
    every element around it is undissolved metal.
    """

    edges: Tuple[str, ...] = ("left",)
    region: Optional[CathodeAssembly] = None
    pristine_only: bool = False


@dataclass(frozen=True)
class Probes:
    gap_origin: Optional[Tuple[float, float]] = None     # start point inside the tool
    gap_direction: Tuple[float, float] = (-1.0, 0.0)     # towards the workpiece
    kerf_station: Optional[float] = None                 # x of the kerf column (m)
    record_every: int = 1


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    mesh: MeshSpec
    workpiece: CathodeAssembly
    cathode: CathodeAssembly
    dt: float
    steps: int
    dv: float
    materials: MaterialSet = MaterialSet()
    rule: str = "series"
    method: str = "B"
    v_ca: float = 0.0
    anode: AnodeSpec = AnodeSpec()
    probes: Probes = Probes()
    transient_factor: float = 2.0
    cathode_tol: float = 1e-3
    settle: bool = True
    pin_node: Optional[int] = None
    snapshot_every: int = 0        # 0: every 10% of the steps

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidArgument("dt must be positive")
        if int(self.steps) != self.steps or self.steps < 1:
            raise InvalidArgument("steps must be an integer >= 1")
        if self.method not in ("A", "B"):
            raise InvalidArgument("method must be 'A' or 'B'")
        if self.rule not in RULES:
            raise InvalidArgument(f"rule must be one of {RULES}")
        if self.transient_factor not in (1, 2):
            raise InvalidArgument("transient_factor must be 1 or 2")
        if not 0 < self.cathode_tol <= 0.1:
            raise InvalidArgument("cathode_tol must lie in (0, 0.1]")

    @property
    def feed(self) -> float:
        """Tool speed (m/s) of the first moving primitive."""
        for p in self.cathode.primitives:
            v = math.hypot(*p.velocity)
            if v > 0:
                return v
        return 0.0

    @property
    def duration(self) -> float:
        return self.dt * self.steps


# -- analytic oracles --------------------------------------------------------------

def equilibrium_gap(nu_dis: float, k_el: float, dv: float, feed: float) -> float:
    """Steady gap nu*k*dv/feed of the one-dimensional process."""
    if feed == 0:
        raise NoEquilibriumError("no equilibrium gap without feed")
    if feed < 0:
        raise InvalidArgument("feed must be positive")
    return nu_dis * k_el * dv / feed


def gap_ode(nu_dis: float, k_el: float, dv: float, feed: float, s0: float,
            t_eval) -> np.ndarray:
    """Gap history from ds/dt = nu*k*dv/s - feed (RK45 at tight tolerance)."""
    t_eval = np.asarray(t_eval, dtype=float)
    rate = nu_dis * k_el * dv
    sol = solve_ivp(lambda t, s: rate / s - feed, (0.0, float(t_eval[-1])), [s0],
                    t_eval=t_eval, rtol=1e-11, atol=1e-16, method="RK45")
    return sol.y[0]


# -- probes ----------------------------------------------------------------------

def _cross(u, v):
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def ray_elements(mesh: Mesh, origin, direction, length: float):
    """Elements crossed by a ray segment, with entry/exit parameters.

    Returns ``(ids, t_in, t_out)`` sorted by entry; only chords of positive
    length are kept.
    """
    p0 = np.asarray(origin, dtype=float)
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    a = mesh.coords
    e = np.roll(a, -1, axis=1) - a
    denom = _cross(d, e)
    w = a - p0
    with np.errstate(divide="ignore", invalid="ignore"):
        t = _cross(w, e) / denom
        s = _cross(w, d) / denom
    eps = 1e-12
    hit = (np.abs(denom) > 0) & (s >= -eps) & (s <= 1 + eps) & (t >= 0) & (t <= length)
    tt = np.where(hit, t, np.nan)
    nh = hit.sum(axis=1)
    cand = np.nonzero(nh >= 1)[0]
    t_in = np.nanmin(tt[cand], axis=1)
    t_out = np.nanmax(tt[cand], axis=1)
    # ray starting inside an element: a single forward crossing
    w0 = a[cand] - p0
    inside = np.all(_cross(e[cand], -w0) >= 0, axis=1)
    t_in = np.where(inside, 0.0, t_in)
    keep = t_out - t_in > 1e-9 * max(length, 1e-300)
    ids, t_in, t_out = cand[keep], t_in[keep], t_out[keep]
    order = np.argsort(t_in, kind="stable")
    return ids[order], t_in[order], t_out[order]


def _line_spec(mesh: Mesh):
    lo = mesh.nodes.min(axis=0)
    hi = mesh.nodes.max(axis=0)
    return lo, hi, float(np.linalg.norm(hi - lo))


def gap_ray(mesh: Mesh, origin, direction):
    """Elements along a gap ray; reusable across steps on a fixed mesh."""
    p0 = np.asarray(origin, dtype=float)
    _, _, diag = _line_spec(mesh)
    length = diag + float(np.linalg.norm(p0 - mesh.nodes.min(axis=0)))
    return ray_elements(mesh, p0, direction, length) + (length,)


def measure_gap_width(state: DissolutionState, mesh: Mesh, assembly: CathodeAssembly,
                      origin, direction=(-1.0, 0.0), time: Optional[float] = None,
                      tol: float = 1e-9, ray=None) -> float:
    """Distance along a ray between the tool surface and the anode front.

    The ray starts inside the tool. The tool surface is found by bisection
    on membership; the anode front lies in the first anode element with
    d < 1 at entry + d * chord.
    """
    p0 = np.asarray(origin, dtype=float)
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    if ray is None:
        ray = gap_ray(mesh, p0, d)
    ids, t_in, t_out, length = ray
    if not cat.contains(assembly, p0, time):
        raise MeasurementError("gap ray must start inside the tool")
    step = mesh.min_edge_length / 4
    ts = np.arange(0.0, length + step, step)
    inside = assembly.contains_points(p0 + ts[:, None] * d, time)
    out = np.nonzero(~inside)[0]
    if len(out) == 0:
        raise MeasurementError("tool surface not found along the gap ray")
    lo, hi = ts[out[0] - 1], ts[out[0]]
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if cat.contains(assembly, p0 + mid * d, time):
            lo = mid
        else:
            hi = mid
    t_tool = 0.5 * (lo + hi)
    sel = (t_out > t_tool) & state.initially_metal[ids] & (state.d[ids] < 1)
    if not np.any(sel):
        raise MeasurementError("anode front not found along the gap ray")
    k = np.nonzero(sel)[0][0]
    e = ids[k]
    front = t_in[k] + state.d[e] * (t_out[k] - t_in[k])
    return float(front - t_tool)


def _kerf_on_line(state: DissolutionState, mesh: Mesh, x: float) -> float:
    lo, hi, diag = _line_spec(mesh)
    ids, t_in, t_out = ray_elements(mesh, (x, lo[1] - 1e-12), (0.0, 1.0), diag + 1.0)
    metal = state.initially_metal[ids]
    ids, t_in, t_out = ids[metal], t_in[metal], t_out[metal]
    if len(ids) == 0:
        return 0.0
    dd = state.d[ids] - state.d_initial[ids]
    k = int(np.argmax(dd))
    if dd[k] < 0.5:
        return 0.0
    i0 = k
    while i0 > 0 and dd[i0 - 1] > 0:
        i0 -= 1
    i1 = k
    while i1 < len(ids) - 1 and dd[i1 + 1] > 0:
        i1 += 1
    seg = slice(i0, i1 + 1)
    return float(np.sum(dd[seg] * (t_out[seg] - t_in[seg])))


def measure_kerf_width(state: DissolutionState, mesh: Mesh, x_station: float) -> float:
    """Width of the dissolved slot crossing the vertical line x = x_station.

    The contiguous run of dissolved anode elements around the most
    dissolved one is summed as d * chord, which places each flank of the
    slot at entry + d * chord inside its partial element. The line is
    sampled just left and right of the station so that a station on a grid
    line averages the two adjacent columns.
    """
    lo, hi, _ = _line_spec(mesh)
    if not lo[0] <= x_station <= hi[0]:
        raise InvalidArgument("kerf station outside the domain")
    delta = 1e-3 * mesh.min_edge_length
    xs = [max(lo[0], x_station - delta), min(hi[0], x_station + delta)]
    return float(np.mean([_kerf_on_line(state, mesh, x) for x in xs]))


# -- time loop -----------------------------------------------------------------------

@dataclass
class TimeSeries:
    t: List[float] = field(default_factory=list)
    V_dis: List[float] = field(default_factory=list)
    gap: List[Optional[float]] = field(default_factory=list)
    kerf: List[Optional[float]] = field(default_factory=list)
    ndof: List[int] = field(default_factory=list)          # unknowns in the solved system
    step_wall_s: List[float] = field(default_factory=list)

    COLUMNS = ("t", "V_dis", "gap", "kerf", "ndof", "step_wall_s")

    def __len__(self):
        return len(self.t)

    def append(self, **row):
        for name in self.COLUMNS:
            getattr(self, name).append(row.get(name))

    def array(self, name: str) -> np.ndarray:
        return np.array([np.nan if x is None else x for x in getattr(self, name)], dtype=float)


@dataclass
class Snapshot:
    step: int
    t: float
    v: np.ndarray
    d: np.ndarray
    lam: np.ndarray
    j_norm: np.ndarray


@dataclass
class RunResult:
    config: ScenarioConfig
    mesh: Mesh
    series: TimeSeries
    state: DissolutionState
    field: FieldState
    snapshots: List[Snapshot]
    phase_times: Dict[str, float]
    wall_time: float


class Simulation:
    """Step-by-step driver; ``run`` wraps it for a whole scenario."""

    def __init__(self, config: ScenarioConfig, mesh: Optional[Mesh] = None):
        self.config = config
        self.mesh = mesh if mesh is not None else config.mesh.build()
        m = self.mesh
        mat = config.materials
        self.solver = FieldSolver(m, mat.eps0, config.transient_factor)
        frac = cat.volume_fractions(config.workpiece, m, 0.0, config.cathode_tol)
        self.state = initial_state(m, frac)
        self.field = FieldState.zeros(m.n_nodes, config.dt)
        edge_nodes = []
        for name in config.anode.edges:
            if name not in m.boundary_tags:
                raise ConfigurationError(f"unknown boundary tag {name!r}")
            edge_nodes.append(m.boundary_tags[name])
        self.anode_static = np.unique(np.concatenate(edge_nodes)) if edge_nodes else np.empty(0, np.int64)
        self.step_index = 0
        self.phase = dict.fromkeys(PHASES, 0.0)
        self.series = TimeSeries()
        self.last_lam = np.zeros(m.n_elements)
        self.last_j = np.zeros((m.n_elements, 2))
        self.last_constraints: Optional[ConstraintSet] = None
        self._ray = None

    @property
    def time(self) -> float:
        return self.config.dt * self.step_index

    def _anode_nodes(self, t: float) -> np.ndarray:
        spec = self.config.anode
        nodes = self.anode_static
        if spec.region is not None:
            sel = spec.region.contains_points(self.mesh.nodes, t)
            if spec.pristine_only:
                indptr, els = self.mesh.node_elements
                dirty = ~(self.state.initially_metal & (self.state.d == 0))
                bad = np.add.reduceat(dirty[els].astype(int), indptr[:-1]) > 0
                bad |= np.diff(indptr) == 0
                sel &= ~bad
            nodes = np.union1d(nodes, np.nonzero(sel)[0])
        return nodes

    def constraints(self, cf: cat.CathodeField, t: float) -> ConstraintSet:
        cfg = self.config
        anode = self._anode_nodes(t)
        cons = ConstraintSet(anode, np.full(len(anode), cfg.dv))
        tool = (cat.apply_method_b(cf, self.mesh, cfg.v_ca) if cfg.method == "B"
                else cat.pinned_constraints(cf, cfg.v_ca))
        try:
            cons = cons.merged(tool.nodes, tool.values)
        except InvalidArgument as exc:
            raise ConfigurationError(f"anode and tool overlap: {exc}") from exc
        return renumber(cons, self.mesh.n_nodes)

    def step(self):
        cfg, m = self.config, self.mesh
        t = self.time
        clock = _time.perf_counter
        t0 = clock()
        pin = cfg.pin_node if cfg.method == "A" else None
        lam = cat.volume_fractions(cfg.cathode, m, t, cfg.cathode_tol)
        inside = np.nonzero(cfg.cathode.contains_points(m.nodes, t))[0]
        if cfg.method == "A":
            pins = cat.pin_nodes(m, inside) if pin is None else np.atleast_1d(np.int64(pin))
        else:
            pins = np.empty(0, np.int64)
        cf = cat.CathodeField(lam, inside, pins)
        t1 = clock()
        base = effective_anode_params(self.state, cfg.materials, cfg.rule)
        if cfg.method == "A":
            params = cat.apply_method_a(cf, cfg.materials, base, cfg.rule)
        else:
            params = cat.cathode_params(cf, cfg.materials, base, cfg.rule)
        cons = self.constraints(cf, t)
        t2 = clock()
        prev = FieldState(self.field.v, self.field.v, cfg.dt)
        self.field = self.solver.solve(params, cons, prev)
        t3 = clock()
        j = self.solver.current_densities(params, self.field)
        st, over = update_dissolution(self.state, m, cfg.materials, j, cfg.dt)
        self.state = propagate_activation(st, m, over, settle=cfg.settle)
        t4 = clock()
        self.step_index += 1
        self.last_lam, self.last_j, self.last_constraints = lam, j, cons
        for name, dt_ in zip(PHASES, (t1 - t0, t2 - t1, t3 - t2, t4 - t3)):
            self.phase[name] += dt_
        return t4 - t0, cons.n_equations

    def measure(self):
        cfg, m = self.config, self.mesh
        pr = cfg.probes
        t = self.time
        gap = kerf = None
        if pr.gap_origin is not None:
            if self._ray is None:
                self._ray = gap_ray(m, pr.gap_origin, pr.gap_direction)
            gap = measure_gap_width(self.state, m, cfg.cathode, pr.gap_origin,
                                    pr.gap_direction, t, ray=self._ray)
        if pr.kerf_station is not None:
            kerf = measure_kerf_width(self.state, m, pr.kerf_station)
        return gap, kerf

    def snapshot(self) -> Snapshot:
        return Snapshot(self.step_index, self.time, self.field.v.copy(), self.state.d.copy(),
                        self.last_lam.copy(), np.linalg.norm(self.last_j, axis=1))

    def run(self, snapshot_every: Optional[int] = None, callback=None) -> RunResult:
        cfg = self.config
        every = cfg.snapshot_every if snapshot_every is None else snapshot_every
        if every == 0:
            every = max(1, cfg.steps // 10)     # negative disables snapshots
        snaps = []
        start = _time.perf_counter()
        for n in range(cfg.steps):
            try:
                wall, ndof = self.step()
                record = (self.step_index % cfg.probes.record_every == 0
                          or self.step_index == cfg.steps)
                if record:
                    tp = _time.perf_counter()
                    gap, kerf = self.measure()
                    self.phase["probes"] += _time.perf_counter() - tp
                    self.series.append(t=self.time,
                                       V_dis=total_dissolved_volume(self.state, self.mesh),
                                       gap=gap, kerf=kerf, ndof=ndof, step_wall_s=wall)
            except EcmError as exc:
                raise StepError(self.step_index, exc) from exc
            if every > 0 and (self.step_index % every == 0 or self.step_index == cfg.steps):
                snaps.append(self.snapshot())
            if callback is not None:
                callback(self)
        total = _time.perf_counter() - start
        return RunResult(cfg, self.mesh, self.series, self.state, self.field, snaps,
                         dict(self.phase), total)


def run(config: ScenarioConfig, snapshot_every: Optional[int] = None) -> RunResult:
    return Simulation(config).run(snapshot_every)
