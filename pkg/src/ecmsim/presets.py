"""Built-in scenarios: planar front, parabolic tool, wire cutting, blade.

Arguments are in presentation units (mm, mm/s, um for the wire, el/mm);
the returned configs are in SI.
"""
from __future__ import annotations

import math
from typing import Optional

from .cathode import CathodeAssembly, Primitive
from .driver import AnodeSpec, MeshSpec, Probes, ScenarioConfig, equilibrium_gap
from .errors import InvalidArgument
from .mesh import MaterialSet

MM = 1e-3
UM = 1e-6
NAMES = ("planar", "parabolic", "wire", "blade")


def halfplane(point, normal, velocity=(0.0, 0.0), inside=True) -> Primitive:
    """Closed half-plane {p : n.(p - point) >= 0}."""
    return Primitive("halfplane", position=tuple(point), angle=math.atan2(normal[1], normal[0]),
                     velocity=tuple(velocity), inside=inside)


def _steps(duration: float, dt: float) -> int:
    n = round(duration / dt)
    if n < 1 or abs(n * dt - duration) > 1e-9 * duration:
        raise InvalidArgument("duration must be a whole number of steps")
    return int(n)


def planar(density: float = 10, dt: float = 0.1, duration: float = 60.0,
           feed: float = 0.01, s_init: Optional[float] = None, method: str = "B",
           rule: str = "series", ny: Optional[int] = None, **overrides) -> ScenarioConfig:
    """Flat tool fed against a flat workpiece (1 mm high, 0.1 mm thick).

    The workpiece fills x in [0, L] with
    L = max(0.7 mm, feed*duration + max(0, s_eq - s_init) + 0.1 mm), enough
    metal for the travel plus any widening of the gap. The tool face starts
    at L + s_init and moves in -x. ``s_init`` defaults to the equilibrium gap.
    The anode is the left edge at 20 V.
    """
    mat = MaterialSet()
    dv = 20.0
    feed_si = feed * MM
    s_eq = equilibrium_gap(mat.nu_dis, mat.k_electrolyte, dv, feed_si)
    s0 = s_eq if s_init is None else s_init * MM
    metal = max(0.7 * MM, feed_si * duration + max(0.0, s_eq - s0) + 0.1 * MM)
    nx = math.ceil(round((metal + s0 + 0.3 * MM) / MM * density, 9))
    width = nx * MM / density
    height = 1.0 * MM
    ny = int(round(density)) if ny is None else int(ny)
    y_probe = (ny // 2 + 0.5) * height / ny
    tool = CathodeAssembly(((halfplane((metal + s0, 0.0), (1.0, 0.0), (-feed_si, 0.0)),),))
    work = CathodeAssembly(((halfplane((metal, 0.0), (-1.0, 0.0)),),))
    cfg = ScenarioConfig(
        name="planar",
        mesh=MeshSpec("structured", width, height, 0.1 * MM, nx=nx, ny=ny),
        workpiece=work, cathode=tool, dt=dt, steps=_steps(duration, dt), dv=dv,
        materials=mat, rule=rule, method=method, anode=AnodeSpec(("left",)),
        probes=Probes(gap_origin=(width + 0.01 * MM, y_probe), gap_direction=(-1.0, 0.0)),
    )
    return _override(cfg, overrides)


def parabolic(density: float = 20, dt: float = 0.34483, steps: int = 500,
              method: str = "B", rule: str = "series", **overrides) -> ScenarioConfig:
    """Parabolic tool y >= 0.375 x^2 + 3.5 (mm) sinking into a flat workpiece.

    Only the left half x in [-2, 0] mm is modelled; the symmetry line is a
    zero-flux edge. The domain is 3 mm of workpiece, the 0.5 mm gap and
    1.5 mm above the tool tip, so the parabola meets the top-left corner.
    Anode on the bottom edge at 10 V.
    """
    mat = MaterialSet(k_metal=6.67e6, k_electrolyte=15.0, nu_dis=3.696e-11)
    feed = 0.0145 * MM
    width, height = 2.0 * MM, 5.0 * MM
    nx = max(1, round(2.0 * density))
    ny = max(1, math.ceil(round(5.0 * density, 9)))
    tool = CathodeAssembly(((Primitive("parabola", c=0.375 / MM, position=(0.0, 3.5 * MM),
                                       velocity=(0.0, -feed)),),))
    work = CathodeAssembly(((halfplane((0.0, 3.0 * MM), (0.0, -1.0)),),))
    nudge = 1e-4 * width / nx
    cfg = ScenarioConfig(
        name="parabolic",
        mesh=MeshSpec("structured", width, height, 0.5 * MM, origin=(-width, 0.0), nx=nx, ny=ny),
        workpiece=work, cathode=tool, dt=dt, steps=steps, dv=10.0, materials=mat,
        rule=rule, method=method, anode=AnodeSpec(("bottom",)),
        probes=Probes(gap_origin=(-nudge, height), gap_direction=(0.0, -1.0)),
    )
    return _override(cfg, overrides)


def wire(refinement: float = 1.0, dt: float = 0.1, duration: float = 150.0,
         method: str = "B", rule: str = "series", anode_band: bool = False,
         **overrides) -> ScenarioConfig:
    """Wire of radius 15 um cutting a slot into a 700 um long workpiece.

    The tensor mesh is uniform at 2.5 um / refinement over the cut region
    and graded towards the left and the top/bottom edges. ``anode_band``
    holds undissolved metal more than 50 um behind the wire front at the
    anode potential, which removes it from the system.
    """
    mat = MaterialSet(k_electrolyte=1.71, nu_dis=1.09e-11)
    feed = 4.0 * UM
    h = 2.5 * UM / refinement
    nfine_x = round(670 * UM / h)
    nfine_y = round(160 * UM / h)
    ncoarse = max(2, round(10 * refinement))
    nedge = max(2, round(4 * refinement))
    x_seg = ((80 * UM, ncoarse, 0.125), (670 * UM, nfine_x, 1.0))
    y_seg = ((20 * UM, nedge, 0.3125), (160 * UM, nfine_y, 1.0), (20 * UM, nedge, 3.2))
    r = 15 * UM
    tool = CathodeAssembly(((Primitive("circle", a=r, position=(725 * UM, 100 * UM),
                                       velocity=(-feed, 0.0)),),))
    work = CathodeAssembly(((halfplane((700 * UM, 0.0), (-1.0, 0.0)),),))
    band = None
    if anode_band:
        band = CathodeAssembly(((halfplane((650 * UM, 0.0), (-1.0, 0.0), (-feed, 0.0)),),))
    cfg = ScenarioConfig(
        name="wire",
        mesh=MeshSpec("tensor", thickness=100 * UM, x_segments=x_seg, y_segments=y_seg),
        workpiece=work, cathode=tool, dt=dt, steps=_steps(duration, dt), dv=6.0,
        materials=mat, rule=rule, method=method,
        anode=AnodeSpec(("left",), band, pristine_only=anode_band),
        probes=Probes(kerf_station=400 * UM),
    )
    return _override(cfg, overrides)


def blade_tools(feed: float = 0.01):
    """Two tools shaping a blade profile, built from circles and ellipses.

    The left tool carries a convex elliptic face with a filleted foot; the
    right tool has an elliptic cavity. Both have rounded lower corners.
    Lengths in mm; the left tool moves in +x, the right one in -x.
    """
    v = feed * MM
    deg = math.pi / 180

    def P(kind, pos, vel, **kw):
        return Primitive(kind, position=(pos[0] * MM, pos[1] * MM), velocity=vel, **kw)

    def H(x=None, y=None, sign=1.0, vel=(0.0, 0.0)):
        if x is not None:
            return halfplane((x * MM, 0.0), (sign, 0.0), vel)
        return halfplane((0.0, y * MM), (0.0, sign), vel)

    L, R = (v, 0.0), (-v, 0.0)
    e1 = P("ellipse", (1.56, 13.9), L, a=2.8 * MM, b=14 * MM, angle=5.44 * deg)
    c1 = P("circle", (4.0, 0.551), L, a=0.5 * MM)
    c2 = P("circle", (4.5, 3.0), L, a=2.0 * MM, inside=False)
    left = (
        (e1,),
        (H(x=1.56, sign=-1, vel=L),),
        (H(x=4.0, sign=-1, vel=L), H(y=0.051, vel=L), H(y=3.0, sign=-1, vel=L)),
        (H(x=4.5, sign=-1, vel=L), H(y=0.551, vel=L), H(y=3.0, sign=-1, vel=L), c2),
        (c1,),
    )
    e2 = P("ellipse", (16.05, 13.75), R, a=4.5 * MM, b=11.25 * MM, angle=11.5 * deg, inside=False)
    e3 = P("ellipse", (16.35, 8.5), R, a=4.5 * MM, b=7.5 * MM, inside=False)
    c9 = P("circle", (16.84, 0.551), R, a=0.49 * MM)
    right = (
        (H(x=16.35, vel=R), H(y=0.551, vel=R), e2, e3),
        (H(x=16.84, vel=R), H(y=0.061, vel=R), e2, e3),
        (c9, e2, e3),
    )
    return CathodeAssembly(left + right)


def blade(density: float = 4, dt: float = 2.0, duration: float = 580.0, method: str = "B",
          rule: str = "series", **overrides) -> ScenarioConfig:
    """Blade profile cut from a 10 mm wide plate by two opposing tools.

    The anode is an interior strip x in [11.5, 12], y in [3, 20] mm at 20 V.
    """
    width, height = 22.0 * MM, 25.0 * MM
    work = CathodeAssembly(((halfplane((6 * MM, 0.0), (1.0, 0.0)),
                             halfplane((16 * MM, 0.0), (-1.0, 0.0))),))
    box = CathodeAssembly(((halfplane((11.5 * MM, 0.0), (1.0, 0.0)),
                            halfplane((12 * MM, 0.0), (-1.0, 0.0)),
                            halfplane((0.0, 3 * MM), (0.0, 1.0)),
                            halfplane((0.0, 20 * MM), (0.0, -1.0))),))
    cfg = ScenarioConfig(
        name="blade",
        mesh=MeshSpec("structured", width, height, 0.2 * MM,
                      nx=round(22 * density), ny=round(25 * density)),
        workpiece=work, cathode=blade_tools(), dt=dt, steps=_steps(duration, dt), dv=20.0,
        rule=rule, method=method, anode=AnodeSpec((), box),
        cathode_tol=1e-2,
    )
    return _override(cfg, overrides)


def _override(cfg: ScenarioConfig, overrides) -> ScenarioConfig:
    from dataclasses import replace
    return replace(cfg, **overrides) if overrides else cfg


def preset(name: str, **kwargs) -> ScenarioConfig:
    builders = {"planar": planar, "parabolic": parabolic, "wire": wire, "blade": blade}
    if name not in builders:
        raise InvalidArgument(f"unknown preset {name!r}; choose from {NAMES}")
    return builders[name](**kwargs)
