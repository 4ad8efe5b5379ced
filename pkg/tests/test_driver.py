from dataclasses import replace

import numpy as np
import pytest

from ecmsim import presets
from ecmsim.cathode import CathodeAssembly
from ecmsim.dissolution import initial_state
from ecmsim.driver import (Simulation, equilibrium_gap, gap_ode, measure_gap_width,
                           measure_kerf_width, run)
from ecmsim.errors import InvalidArgument, NoEquilibriumError, StepError
from ecmsim.mesh import MM, MaterialSet, generate_structured


def test_equilibrium_gap_values():
    assert equilibrium_gap(1e-11, 16, 20, 1e-5) == pytest.approx(3.2e-4, rel=1e-12)
    assert equilibrium_gap(1e-11, 16, 20, 1.5e-5) == pytest.approx(0.2133333e-3, rel=1e-6)
    assert equilibrium_gap(1e-11, 16, 40, 1e-5) == pytest.approx(2 * 3.2e-4, rel=1e-12)
    with pytest.raises(NoEquilibriumError):
        equilibrium_gap(1e-11, 16, 20, 0.0)


def test_gap_ode_fixed_point_and_trend():
    s_eq = equilibrium_gap(1e-11, 16, 20, 1e-5)
    t = np.linspace(0, 100, 5)
    assert np.allclose(gap_ode(1e-11, 16, 20, 1e-5, s_eq, t), s_eq, rtol=1e-9)
    g = gap_ode(1e-11, 16, 20, 0.005e-3, 0.4e-3, np.linspace(0, 400, 50))
    assert np.all(np.diff(g) > 0) and g[-1] < 0.64e-3


def test_fresh_planar_gap():
    cfg = presets.planar(density=10)
    sim = Simulation(cfg)
    g = measure_gap_width(sim.state, sim.mesh, cfg.cathode, cfg.probes.gap_origin,
                          cfg.probes.gap_direction, 0.0)
    assert g == pytest.approx(0.32e-3, abs=0.05e-3)


def test_planar_volume_short_run():
    r = run(presets.planar(density=10, dt=0.5, duration=10.0), snapshot_every=-1)
    v = r.series.V_dis[-1] / (1e-5 * 10.0 * 1e-3 * 1e-4)
    assert v == pytest.approx(1.0, abs=2e-3)
    assert r.series.gap[-1] == pytest.approx(0.32e-3, abs=1e-6)


def test_planar_tracks_gap_ode_on_a_single_row():
    # off-equilibrium start: the removed length follows the gap ODE
    cfg = presets.planar(density=20, ny=1, dt=0.05, duration=20.0, s_init=0.25)
    r = run(cfg, snapshot_every=-1)
    mat = MaterialSet()
    t = np.array(r.series.t)
    s = gap_ode(mat.nu_dis, mat.k_electrolyte, 20.0, 1e-5, 0.25e-3, t)
    removed = s - 0.25e-3 + 1e-5 * t
    area = cfg.mesh.height * cfg.mesh.thickness
    v = np.array(r.series.V_dis) / area
    assert np.max(np.abs(v - removed)) <= 0.01 * removed[-1]
    assert np.max(np.abs(np.array(r.series.gap) - s)) <= 0.05e-3


def test_zero_drive_no_dissolution():
    cfg = presets.planar(density=10, duration=2.0, feed=0.01)
    still = CathodeAssembly(tuple(tuple(replace(p, velocity=(0.0, 0.0)) for p in s)
                                  for s in cfg.cathode.subsets))
    r = run(replace(cfg, dv=0.0, cathode=still), snapshot_every=-1)
    assert np.all(np.array(r.series.V_dis) == 0)
    assert np.array_equal(r.state.d, r.state.d_initial)


def test_determinism():
    cfg = presets.planar(density=10, dt=1.0, duration=10.0)
    a, b = run(cfg, -1).series, run(cfg, -1).series
    assert a.V_dis == b.V_dis and a.gap == b.gap and a.ndof == b.ndof


def test_method_b_ndof_non_increasing():
    r = run(presets.planar(density=10, dt=1.0, duration=30.0), -1)
    assert np.all(np.diff(r.series.ndof) <= 0)
    assert r.series.ndof[-1] < r.series.ndof[0]


def test_methods_agree_small():
    a = run(presets.planar(density=10, dt=0.5, duration=10.0, method="A"), -1)
    b = run(presets.planar(density=10, dt=0.5, duration=10.0, method="B"), -1)
    va, vb = np.array(a.series.V_dis), np.array(b.series.V_dis)
    assert np.max(np.abs(va - vb) / vb) <= 1e-3
    outside = ~b.config.cathode.contains_points(b.mesh.nodes, 10.0)
    assert np.max(np.abs(a.field.v[outside] - b.field.v[outside])) <= 1e-6 * 20.0


def test_transient_factor_insensitive():
    cfg = presets.planar(density=10, dt=1.0, duration=10.0)
    v2 = run(cfg, -1).series.V_dis
    v1 = run(replace(cfg, transient_factor=1.0), -1).series.V_dis
    assert np.allclose(v1, v2, rtol=1e-10)


def test_kerf_zero_without_dissolution():
    m = generate_structured(4, 4, 1.0, 1.0, 1.0)
    st_ = initial_state(m, np.ones(m.n_elements))
    assert measure_kerf_width(st_, m, 0.5) == 0.0
    with pytest.raises(InvalidArgument):
        measure_kerf_width(st_, m, 2.0)


def test_kerf_of_known_slot():
    m = generate_structured(4, 10, 1.0, 1.0, 1.0)
    st_ = initial_state(m, np.ones(m.n_elements))
    c = m.centroids
    st_.d[np.isclose(c[:, 1], 0.45)] = 1.0
    st_.d[np.isclose(c[:, 1], 0.55)] = 1.0
    st_.d[np.isclose(c[:, 1], 0.35)] = 0.25
    assert measure_kerf_width(st_, m, 0.3) == pytest.approx(0.225)


def test_presets_parameters():
    p = presets.preset("parabolic", density=5)
    m = p.mesh.build()
    assert m.nodes[:, 0].min() == pytest.approx(-2e-3) and m.nodes[:, 0].max() == pytest.approx(0.0)
    assert presets.preset("wire").method == "B"
    assert presets.preset("planar").dv == 20.0
    assert presets.preset("parabolic").dv == 10.0
    assert presets.preset("parabolic").steps == 500
    assert presets.preset("blade").duration == pytest.approx(580.0)
    with pytest.raises(InvalidArgument):
        presets.preset("spiral")


def test_step_error_carries_index():
    cfg = presets.planar(density=10, dt=1.0, duration=3.0)
    cfg = replace(cfg, probes=replace(cfg.probes, gap_origin=(-1.0, 0.5e-3)))
    with pytest.raises(StepError) as exc:
        run(cfg, -1)
    assert exc.value.step == 1


def test_snapshots_every_tenth():
    r = run(presets.planar(density=10, dt=1.0, duration=20.0))
    assert [s.step for s in r.snapshots] == list(range(2, 21, 2))
    assert r.snapshots[0].d.shape == (r.mesh.n_elements,)
