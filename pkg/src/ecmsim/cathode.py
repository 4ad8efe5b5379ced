"""Moving tools as unions of intersections of 2D primitives.

The same region type also describes the initial workpiece. Primitive poses
refer to t = 0; a region is evaluated at an absolute time and every
primitive is shifted by ``velocity * time``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .dissolution import mix
from .errors import ConfigurationError, InvalidArgument
from .field import ConstraintSet, EffectiveParams
from .mesh import MaterialSet, Mesh, shoelace

log = logging.getLogger(__name__)

KINDS = ("halfplane", "circle", "ellipse", "parabola", "wedge")


@dataclass(frozen=True)
class Primitive:
    """Closed 2D region in a local frame q = R(-angle) (p - position - velocity*t).

    halfplane: q_x >= 0;  circle: |q| <= r;  ellipse: (q_x/a)^2 + (q_y/b)^2 <= 1;
    parabola: q_y >= c q_x^2;  wedge: q_x >= 0 and |q_y| <= q_x tan(alpha).
    With ``inside=False`` the primitive stands for the open complement.
    """

    kind: str
    a: float = 0.0          # radius / first semi-axis
    b: float = 0.0          # second semi-axis
    c: float = 0.0          # parabola curvature coefficient (1/m)
    alpha: float = 0.0      # wedge half-angle (rad)
    position: Tuple[float, float] = (0.0, 0.0)
    angle: float = 0.0
    inside: bool = True
    velocity: Tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgument(f"unknown primitive kind {self.kind!r}")
        if self.kind == "circle" and not self.a > 0:
            raise InvalidArgument("circle radius must be positive")
        if self.kind == "ellipse" and not (self.a > 0 and self.b > 0):
            raise InvalidArgument("ellipse semi-axes must be positive")
        if self.kind == "parabola" and not self.c > 0:
            raise InvalidArgument("parabola coefficient must be positive")
        if self.kind == "wedge" and not 0 < self.alpha < math.pi / 2:
            raise InvalidArgument("wedge half-angle must lie in (0, pi/2)")
        object.__setattr__(self, "position", tuple(float(x) for x in self.position))
        object.__setattr__(self, "velocity", tuple(float(x) for x in self.velocity))

    @property
    def feature_size(self) -> float:
        if self.kind == "circle":
            return self.a
        if self.kind == "ellipse":
            return min(self.a, self.b)
        if self.kind == "parabola":
            return 1.0 / (2.0 * self.c)        # radius of curvature at the vertex
        return math.inf

    def local(self, points: np.ndarray, time: float) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        shift = np.asarray(self.position) + np.asarray(self.velocity) * time
        d = p - shift
        if self.angle == 0.0:
            return d
        cs, sn = math.cos(self.angle), math.sin(self.angle)
        return np.stack([cs * d[..., 0] + sn * d[..., 1],
                         -sn * d[..., 0] + cs * d[..., 1]], axis=-1)

    def level(self, points, time: float = 0.0) -> np.ndarray:
        """Continuous indicator, >= 0 exactly where ``contains`` holds for inside=True."""
        q = self.local(points, time)
        x, y = q[..., 0], q[..., 1]
        if self.kind == "halfplane":
            g = x
        elif self.kind == "circle":
            g = self.a - np.hypot(x, y)
        elif self.kind == "ellipse":
            g = min(self.a, self.b) * (1.0 - np.hypot(x / self.a, y / self.b))
        elif self.kind == "parabola":
            g = (y - self.c * x * x) / np.sqrt(1.0 + (2.0 * self.c * x) ** 2)
        else:
            g = np.minimum(x, x * math.sin(self.alpha) - np.abs(y) * math.cos(self.alpha))
        return g if self.inside else -g

    def contains(self, points, time: float = 0.0) -> np.ndarray:
        q = self.local(points, time)
        x, y = q[..., 0], q[..., 1]
        if self.kind == "halfplane":
            m = x >= 0
        elif self.kind == "circle":
            m = x * x + y * y <= self.a * self.a
        elif self.kind == "ellipse":
            m = (x / self.a) ** 2 + (y / self.b) ** 2 <= 1.0
        elif self.kind == "parabola":
            m = y >= self.c * x * x
        else:
            m = (x >= 0) & (np.abs(y) <= x * math.tan(self.alpha))
        return m if self.inside else ~m


@dataclass(frozen=True)
class CathodeAssembly:
    """Union over ``subsets`` of the intersection of each subset's primitives."""

    subsets: Tuple[Tuple[Primitive, ...], ...] = ()
    time: float = 0.0

    def __post_init__(self):
        subs = tuple(tuple(s) for s in self.subsets)
        if any(len(s) == 0 for s in subs):
            raise InvalidArgument("empty subset in assembly")
        object.__setattr__(self, "subsets", subs)

    @property
    def primitives(self):
        return [p for s in self.subsets for p in s]

    @property
    def feature_size(self) -> float:
        return min((p.feature_size for p in self.primitives), default=math.inf)

    def contains_points(self, points, time: Optional[float] = None) -> np.ndarray:
        t = self.time if time is None else time
        pts = np.asarray(points, dtype=float)
        out = np.zeros(pts.shape[:-1], dtype=bool)
        for subset in self.subsets:
            m = np.ones_like(out)
            for prim in subset:
                m &= prim.contains(pts, t)
            out |= m
        return out

    def level_points(self, points, time: Optional[float] = None) -> np.ndarray:
        """Max over subsets of the min over primitive levels."""
        t = self.time if time is None else time
        pts = np.asarray(points, dtype=float)
        out = np.full(pts.shape[:-1], -np.inf)
        for subset in self.subsets:
            g = np.full(pts.shape[:-1], np.inf)
            for prim in subset:
                g = np.minimum(g, prim.level(pts, t))
            out = np.maximum(out, g)
        return out

    def advance(self, dt: float) -> "CathodeAssembly":
        return advance(self, dt)


def contains(assembly: CathodeAssembly, point, time: Optional[float] = None) -> bool:
    return bool(assembly.contains_points(np.asarray(point, dtype=float), time))


def advance(assembly: CathodeAssembly, dt: float) -> CathodeAssembly:
    if not dt >= 0:
        raise InvalidArgument("dt must be non-negative")
    return replace(assembly, time=assembly.time + dt)


# Corner offsets of a parametric cell in units of its size, plus the centre.
_CORNERS = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
_SAMPLES = np.vstack([_CORNERS, [[0.5, 0.5]]])


def _halfplanes(assembly: CathodeAssembly, time: float):
    """Half-planes n.p >= c whose intersection is the region, or None.

    Only single-subset assemblies built from half-planes and enclosed
    wedges are polygonal in this sense.
    """
    if len(assembly.subsets) != 1:
        return None
    out = []
    for prim in assembly.subsets[0]:
        if prim.kind == "halfplane":
            local = [(1.0, 0.0)]
            if not prim.inside:
                local = [(-1.0, 0.0)]
        elif prim.kind == "wedge" and prim.inside:
            sa, ca = math.sin(prim.alpha), math.cos(prim.alpha)
            local = [(1.0, 0.0), (sa, -ca), (sa, ca)]
        else:
            return None
        cs, sn = math.cos(prim.angle), math.sin(prim.angle)
        shift = np.asarray(prim.position) + np.asarray(prim.velocity) * time
        for lx, ly in local:
            n = np.array([cs * lx - sn * ly, sn * lx + cs * ly])
            out.append((n, float(n @ shift)))
    return out


SNAP = 1e-10


def _snap(frac: np.ndarray) -> np.ndarray:
    """Clip to [0, 1] and remove round-off slivers at both ends."""
    frac = np.clip(frac, 0.0, 1.0)
    frac[frac < SNAP] = 0.0
    frac[frac > 1.0 - SNAP] = 1.0
    return frac


def _ffill_cyclic(pts: np.ndarray, valid: np.ndarray) -> np.ndarray:
    m = pts.shape[1]
    idx = np.where(np.concatenate([valid, valid], axis=1), np.arange(2 * m), -1)
    idx = np.maximum.accumulate(idx, axis=1)[:, m:] % m
    return np.take_along_axis(pts, idx[..., None], axis=1)


def _clip_positive(poly: np.ndarray, f: np.ndarray):
    """Clip polygons (m, k, 2) to the part where the vertex values f, linearly
    interpolated along the edges, are >= 0. Returns (m, 2k, 2) polygons with
    repeated vertices and a mask of polygons that keep any vertex."""
    b = np.roll(poly, -1, axis=1)
    fa, fb = f, np.roll(f, -1, axis=1)
    sa, sb = fa >= 0, fb >= 0
    with np.errstate(invalid="ignore", divide="ignore"):
        s = fa / (fa - fb)
        cross = poly + s[..., None] * (b - poly)
    first = np.where(sa[..., None], poly, cross)
    second = np.where((sa & sb)[..., None], poly, cross)
    pts = np.stack([first, second], axis=2).reshape(len(poly), -1, 2)
    valid = np.repeat(sa | sb, 2, axis=1)
    alive = valid.any(axis=1)
    valid[~alive] = True
    return _ffill_cyclic(pts, valid), alive


def clipped_fractions(coords: np.ndarray, planes) -> np.ndarray:
    """Exact area fraction of quads (ne, 4, 2) inside an intersection of half-planes."""
    coords = np.asarray(coords, dtype=float)
    frac = np.ones(len(coords))
    cut = np.zeros(len(coords), bool)
    for n, c in planes:
        f = coords @ n - c
        frac[np.all(f <= 0, axis=1)] = 0.0
        cut |= np.any(f < 0, axis=1) & np.any(f > 0, axis=1)
    cut &= frac > 0
    if not np.any(cut):
        return frac
    poly = coords[cut]
    area = shoelace(poly)
    alive = np.ones(len(poly), bool)
    for n, c in planes:
        poly, ok = _clip_positive(poly, poly @ n - c)
        alive &= ok
    inside = np.where(alive, shoelace(poly), 0.0)
    frac[cut] = inside / area
    return _snap(frac)


def volume_fractions(assembly: CathodeAssembly, mesh: Mesh, time: Optional[float] = None,
                     tol: float = 1e-3, elements=None, max_depth: int = 14) -> np.ndarray:
    """Area fraction of each element inside the region (adaptive quadtree).

    Polygonal regions are clipped exactly. Otherwise cells whose corners and
    centre agree are decided; the remaining cells are split until their total
    area is at most sqrt(tol) times the element area, and each of those is
    then cut along the linear interpolant of the region's level function.
    The interpolation error is second order in the cell size, so the
    fraction error ends up well below ``tol``. Elements larger than the
    smallest primitive feature are split regardless.
    """
    if not 0 < tol <= 0.1:
        raise InvalidArgument("tol must lie in (0, 0.1]")
    t = assembly.time if time is None else time
    ids = np.arange(mesh.n_elements) if elements is None else np.asarray(elements, np.int64)
    frac = np.zeros(len(ids))
    if not assembly.subsets or len(ids) == 0:
        return frac
    coords = mesh.coords[ids]
    planes = _halfplanes(assembly, t)
    if planes is not None:
        return clipped_fractions(coords, planes)
    area = mesh.areas[ids]
    band_tol = math.sqrt(tol)
    diam = np.linalg.norm(coords[:, 2] - coords[:, 0], axis=1)
    diam = np.maximum(diam, np.linalg.norm(coords[:, 3] - coords[:, 1], axis=1))
    feat = assembly.feature_size
    min_depth = np.zeros(len(ids), dtype=int)
    if np.isfinite(feat):
        min_depth = np.clip(np.ceil(np.log2(np.maximum(diam / feat, 1.0))), 0, 8).astype(int)
    # cells: owning element (local index), parametric lower-left corner in [0,1]^2
    bil = (coords[:, 0], coords[:, 1] - coords[:, 0], coords[:, 3] - coords[:, 0],
           coords[:, 0] - coords[:, 1] + coords[:, 2] - coords[:, 3])
    cell = np.arange(len(ids))
    origin = np.zeros((len(ids), 2))
    size = 1.0
    depth = 0
    while len(cell):
        if depth == 0:
            # corners are mesh nodes: evaluate each node once
            nodes = mesh.elements[ids]
            uniq, inv = np.unique(nodes, return_inverse=True)
            g_nodes = assembly.level_points(mesh.nodes[uniq], t)[inv.reshape(nodes.shape)]
            g = np.column_stack([g_nodes, assembly.level_points(coords.mean(axis=1), t)])
            xy = coords
            cell_area = area
        else:
            # bilinear map X(u, v) = P0 + A u + B v + C u v on the unit square
            P0, A, B, C = (x[cell] for x in bil)
            u = origin[:, 0:1] + size * _SAMPLES[None, :, 0]          # (m, 5)
            v = origin[:, 1:2] + size * _SAMPLES[None, :, 1]
            xy = (P0[:, None] + A[:, None] * u[..., None] + B[:, None] * v[..., None]
                  + C[:, None] * (u * v)[..., None])
            g = assembly.level_points(xy, t)
            xy = xy[:, :4]
            cell_area = shoelace(xy)
        inside = g >= 0
        agree = np.all(inside == inside[:, :1], axis=1)
        forced = depth < min_depth[cell]
        done = agree & ~forced
        sel = done & inside[:, 0]
        frac += np.bincount(cell[sel], weights=cell_area[sel], minlength=len(ids))
        und = ~done
        band = np.bincount(cell[und], weights=cell_area[und], minlength=len(ids))
        settle = (band <= band_tol * area) | (depth >= max_depth)
        fin = und & settle[cell] & ~forced
        if np.any(fin):
            poly, alive = _clip_positive(xy[fin], g[fin, :4])
            part = np.where(alive, shoelace(poly), 0.0)
            frac += np.bincount(cell[fin], weights=part, minlength=len(ids))
        split = und & ~fin
        cell = np.repeat(cell[split], 4)
        half = size / 2.0
        origin = (np.repeat(origin[split], 4, axis=0)
                  + half * np.tile(_CORNERS, (int(split.sum()), 1)))
        size = half
        depth += 1
    return _snap(frac / area)


def cathode_ratio(assembly: CathodeAssembly, mesh: Mesh, e: int, time: Optional[float] = None,
                  tol: float = 1e-3) -> float:
    if not 0 <= e < mesh.n_elements:
        raise InvalidArgument(f"element id {e} out of range")
    return float(volume_fractions(assembly, mesh, time, tol, elements=[e])[0])


@dataclass
class CathodeField:
    lam: np.ndarray                     # per-element cathode fraction
    inside_nodes: np.ndarray            # sorted node ids inside the tool
    pinned: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))


def _node_graph(mesh: Mesh):
    el = mesh.elements
    a = el.ravel()
    b = np.roll(el, -1, axis=1).ravel()
    n = mesh.n_nodes
    return coo_matrix((np.ones(len(a)), (a, b)), shape=(n, n)).tocsr()


def pin_nodes(mesh: Mesh, inside_nodes: np.ndarray) -> np.ndarray:
    """Deepest node of every connected group of inside nodes.

    Depth is the distance to the nearest node outside the tool; ties go to
    the lowest node id.
    """
    inside_nodes = np.asarray(inside_nodes, dtype=np.int64)
    if len(inside_nodes) == 0:
        return np.empty(0, np.int64)
    mask = np.zeros(mesh.n_nodes, bool)
    mask[inside_nodes] = True
    outside = np.nonzero(~mask)[0]
    if len(outside):
        depth, _ = cKDTree(mesh.nodes[outside]).query(mesh.nodes[inside_nodes])
    else:
        depth = np.zeros(len(inside_nodes))
    g = _node_graph(mesh)[inside_nodes][:, inside_nodes]
    ncomp, label = connected_components(g, directed=False)
    pins = []
    for c in range(ncomp):
        sel = np.nonzero(label == c)[0]
        best = sel[np.flatnonzero(depth[sel] == depth[sel].max())]
        pins.append(inside_nodes[best].min())
    return np.sort(np.asarray(pins, dtype=np.int64))


def cathode_field(assembly: CathodeAssembly, mesh: Mesh, time: Optional[float] = None,
                  tol: float = 1e-3, pin=None) -> CathodeField:
    lam = volume_fractions(assembly, mesh, time, tol)
    inside = np.nonzero(assembly.contains_points(mesh.nodes, time))[0]
    pins = pin_nodes(mesh, inside) if pin is None else np.atleast_1d(np.asarray(pin, np.int64))
    return CathodeField(lam, inside, pins)


def cathode_params(cf: CathodeField, materials: MaterialSet, base: EffectiveParams,
                   rule: str = "series") -> EffectiveParams:
    """Overlay the tool on ``base``: cathode values where lam=1, mixtures where 0<lam<1."""
    out = base.copy()
    part = cf.lam > 0
    if np.any(part):
        w = cf.lam[part]
        out.k_eff[part] = mix(rule, w, base.k_eff[part], materials.k_cathode)
        out.eps_r_eff[part] = mix(rule, w, base.eps_r_eff[part], materials.eps_cathode)
    return out


def apply_method_a(cf: CathodeField, materials: MaterialSet, base: EffectiveParams,
                   rule: str = "series") -> EffectiveParams:
    """Conductivity override. The pinned node(s) are fixed by ``pinned_constraints``."""
    if np.any(cf.lam >= 1) and len(cf.pinned) == 0:
        raise ConfigurationError("cathode elements present but no pinned node: "
                                 "the tool potential would float")
    return cathode_params(cf, materials, base, rule)


def pinned_constraints(cf: CathodeField, v_ca: float) -> ConstraintSet:
    return ConstraintSet(cf.pinned, np.full(len(cf.pinned), float(v_ca)))


def apply_method_b(cf: CathodeField, mesh: Mesh, v_ca: float) -> ConstraintSet:
    """Fix every node inside the tool at ``v_ca``."""
    if len(cf.inside_nodes) == 0 and np.any(cf.lam > 0):
        log.warning("tool cuts elements but covers no node; it enters only through "
                    "mixture parameters")
    return ConstraintSet(cf.inside_nodes, np.full(len(cf.inside_nodes), float(v_ca)))
