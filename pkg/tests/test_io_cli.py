import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ecmsim import cli, io, presets
from ecmsim.driver import Simulation, TimeSeries, run
from ecmsim.errors import MeasurementError, ParseError
from ecmsim.field import ConstraintSet, EffectiveParams, FieldSolver, FieldState
from ecmsim.mesh import generate_structured


def test_preset_reference_with_mesh_override():
    cfg = io.parse_config_text('scenario = "planar"\nmesh = "40x40"\n')
    ref = presets.planar(density=40)
    assert cfg == ref
    assert cfg.mesh.ny == 40


def test_negative_dt_rejected():
    with pytest.raises(ParseError):
        io.parse_config_text('scenario = "planar"\ndt = -0.1\n')
    text = io.emit_config(presets.planar()).replace("dt = 0.1", "dt = -0.1")
    with pytest.raises(ParseError):
        io.parse_config_text(text)


def test_feed_units():
    text = io.emit_config(presets.planar(feed=0.01))
    assert "velocity = [ -0.01, 0.0, ]" in text or "-0.01" in text
    cfg = io.parse_config_text(text)
    assert cfg.feed == pytest.approx(1e-5, rel=1e-15)


@pytest.mark.parametrize("text", [
    'scenario = "spiral"\n',
    'scenario = "planar"\ncolour = 1\n',
    'scenario = "wire"\nmesh = "10x10"\n',
    'scenario = "parabolic"\nmesh = "10x20"\n',
    'dt = 1\n',
    'scenario = "planar"\nmesh = "ten"\n',
    'dt = [\n',
])
def test_bad_configs(text):
    with pytest.raises(ParseError):
        io.parse_config_text(text)


def test_unknown_explicit_key_rejected():
    text = io.emit_config(presets.planar()) + "\nbogus = 3\n"
    with pytest.raises(ParseError, match="bogus"):
        io.parse_config_text(text)


@pytest.mark.parametrize("name", presets.NAMES)
def test_emit_parse_fixed_point(name):
    cfg = presets.preset(name)
    text = io.emit_config(cfg)
    back = io.parse_config_text(text)
    assert back == cfg
    assert io.emit_config(back) == text


@given(st.floats(1, 80), st.floats(1e-3, 2.0), st.floats(0.001, 0.05), st.floats(0.1, 0.6),
       st.sampled_from(["A", "B"]), st.sampled_from(["series", "parallel"]))
def test_round_trip_random_planar(density, dt, feed, s_init, method, rule):
    cfg = presets.planar(density=round(density), dt=dt, duration=dt * 7, feed=feed,
                         s_init=s_init, method=method, rule=rule)
    once = io.parse_config_text(io.emit_config(cfg))
    assert io.parse_config_text(io.emit_config(once)) == once
    assert io.emit_config(once) == io.emit_config(cfg)
    assert once.cathode.primitives[0].position[0] == pytest.approx(
        cfg.cathode.primitives[0].position[0], rel=1e-15)


def _series():
    ts = TimeSeries()
    ts.append(t=0.1, V_dis=1e-15, gap=3.2e-4, kerf=None, ndof=120, step_wall_s=0.0012345678901)
    ts.append(t=0.2, V_dis=2.0000000000000004e-15, gap=None, kerf=None, ndof=118,
              step_wall_s=0.001)
    ts.append(t=0.30000000000000004, V_dis=3e-15, gap=3.19e-4, kerf=1e-6, ndof=118,
              step_wall_s=0.002)
    return ts


def test_timeseries_round_trip(tmp_path):
    ts = _series()
    p = tmp_path / "ts.csv"
    io.write_timeseries(ts, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "t,V_dis,gap,kerf,ndof,step_wall_s"
    assert len(lines) == 4
    assert lines[2].split(",")[2:4] == ["", ""]
    back = io.read_timeseries(p)
    for c in TimeSeries.COLUMNS:
        assert getattr(back, c) == getattr(ts, c)


def test_timeseries_rejects_decreasing_volume(tmp_path):
    ts = _series()
    ts.V_dis[2] = 0.0
    with pytest.raises(MeasurementError):
        io.write_timeseries(ts, tmp_path / "x.csv")


def test_snapshot_fresh_planar(tmp_path):
    cfg = presets.planar(density=10)
    sim = Simulation(cfg)
    p = tmp_path / "s.vtk"
    io.write_snapshot(sim.mesh, p, sim.field.v, sim.state.d, sim.last_lam,
                      np.zeros(sim.mesh.n_elements))
    cells = io.read_snapshot_cells(p)
    assert len(cells["d"]) == sim.mesh.n_elements
    metal = sim.state.initially_metal
    assert np.all(cells["d"][metal] == 0) and np.all(cells["d"][~metal] == 1)
    text = p.read_text()
    assert f"CELLS {sim.mesh.n_elements} {5 * sim.mesh.n_elements}" in text
    assert text.count("\n9\n") >= 1


def test_snapshot_uniform_current(tmp_path):
    m = generate_structured(5, 5, 1e-3, 1e-3, 1e-4)
    p = EffectiveParams.uniform(m.n_elements, 16.0)
    left, right = m.boundary_tags["left"], m.boundary_tags["right"]
    cons = ConstraintSet(np.r_[left, right], np.r_[np.full(6, 20.0), np.zeros(6)])
    solver = FieldSolver(m)
    s = solver.solve(p, cons, FieldState.zeros(m.n_nodes, 0.1))
    jn = np.linalg.norm(solver.current_densities(p, s), axis=1)
    io.write_snapshot(m, tmp_path / "j.vtk", s.v, j_norm=jn)
    cells = io.read_snapshot_cells(tmp_path / "j.vtk")
    assert np.allclose(cells["j_norm"], 3.2e5, rtol=1e-8)


def test_cli_run_writes_outputs_and_manifest_reruns(tmp_path, capsys):
    cfg_path = tmp_path / "c.toml"
    cfg_path.write_text('scenario = "planar"\nmesh = "10x10"\ndt = 1.0\nduration = 10.0\n')
    out = tmp_path / "out"
    assert cli.main(["run", str(cfg_path), "--out", str(out), "--snapshots", "5"]) == 0
    man = io.RunManifest.read(out / "manifest.json")
    for f in man.files:
        assert (out / f).exists(), f
    assert "snapshots/step_000005.vtk" in man.files
    assert sum(man.phase_times.values()) <= man.wall_time
    ts = io.read_timeseries(out / "timeseries.csv")
    again = run(man.scenario(), -1).series
    assert again.V_dis == ts.V_dis and again.gap == ts.gap
    assert json.loads((out / "manifest.json").read_text())["config"]["dt"] == 1.0


def test_cli_preset_emit(capsys, tmp_path):
    assert cli.main(["preset", "wire", "--emit-config"]) == 0
    text = capsys.readouterr().out
    assert io.parse_config_text(text) == presets.wire()
    assert "dv = 6.0" in text
    assert cli.main(["preset", "planar", "--emit-config", "-o", str(tmp_path / "p.toml")]) == 0
    assert io.parse_config(tmp_path / "p.toml") == presets.planar()


def test_cli_exit_codes(tmp_path, capsys):
    assert cli.main([]) == 2
    assert cli.main(["preset", "spiral"]) == 2
    bad = tmp_path / "bad.toml"
    bad.write_text('scenario = "planar"\ndt = -1\n')
    assert cli.main(["run", str(bad)]) == 2
    assert cli.main(["run", str(tmp_path / "missing.toml")]) == 2
    assert cli.main(["bench", "planar", "--methods", "C"]) == 2
    assert cli.main(["bench", "wire", "--mesh", "10x10"]) == 2
    # a scenario that fails at runtime: gap ray that never meets the tool
    cfg = presets.planar(density=10, dt=1.0, duration=2.0)
    cfg = replace(cfg, probes=replace(cfg.probes, gap_origin=(-1.0, 5e-4)))
    p = tmp_path / "fail.toml"
    io.write_config(cfg, p)
    assert cli.main(["run", str(p), "--out", str(tmp_path / "o")]) == 1


def test_cli_verify_quick_planar(capsys):
    code = cli.main(["verify", "planar", "--quick"])
    out = capsys.readouterr().out
    assert code == 0
    assert "PASS" in out and "FAIL" not in out


def test_cli_bench_small(capsys):
    assert cli.main(["bench", "planar", "--mesh", "10x10"]) == 0
    out = capsys.readouterr().out
    assert "method B / method A wall-clock" in out
