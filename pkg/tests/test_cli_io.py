import os

import numpy as np
import pytest

from swale.ale import Simulation
from swale.cases import get_case
from swale.cli import main, run_config
from swale.config import ConfigError, RunConfig, parse_config, serialize_config
from swale.geometry import build_uniform_tri_mesh
from swale.motion import MotionSpec
from swale import outputs


# ----------------------------------------------------------------------
# config
# ----------------------------------------------------------------------


def test_config_round_trip():
    cfg = RunConfig(case="dam_break_1d", cfl=0.4, t_end=0.2, dx=0.05,
                    motion="adaptive", formats="csv,vtk", max_steps=7)
    back = parse_config(serialize_config(cfg))
    assert back == cfg


def test_config_overrides_and_comments():
    text = "case = free_stream\n# comment\ncfl = 0.3\n"
    cfg = parse_config(text, overrides={"t_end": "0.5", "dx": "0.25"})
    assert cfg.case == "free_stream"
    assert cfg.cfl == 0.3
    assert cfg.t_end == 0.5
    assert cfg.dx == 0.25


def test_config_rejects_bad_values():
    with pytest.raises(ConfigError):
        parse_config("cfl = 1.5\n")
    with pytest.raises(ConfigError):
        parse_config("nonsense = 1\n")
    with pytest.raises(ConfigError):
        parse_config("case = free_stream\nmotion = wobble\n")


# ----------------------------------------------------------------------
# snapshots
# ----------------------------------------------------------------------


def sample_state():
    mesh = build_uniform_tri_mesh((0, 1, 0, 1), 0.5)
    rng = np.random.default_rng(0)
    w = rng.uniform(0.5, 1.5, (mesh.n_cells, 3))
    b = rng.uniform(0, 0.2, mesh.n_cells)
    return mesh, w, b


def test_snapshot_csv_row_count_and_round_trip(tmp_path):
    mesh, w, b = sample_state()
    path = tmp_path / "snap.csv"
    outputs.write_snapshot_csv(path, mesh, w, b)
    lines = path.read_text().strip().split("\n")
    assert len(lines) == mesh.n_cells + 1
    header, data = outputs.read_snapshot_csv(path)
    assert header == ["x", "y", "h", "hu", "hv", "B", "h_plus_B"]
    np.testing.assert_array_equal(data[:, 2], w[:, 0])
    np.testing.assert_array_equal(data[:, 5], b)


def test_snapshot_vtk_structure(tmp_path):
    mesh, w, b = sample_state()
    path = tmp_path / "snap.vtk"
    outputs.write_snapshot_vtk(path, mesh, w, b)
    text = path.read_text().split("\n")
    assert text[0].startswith("# vtk DataFile")
    assert "DATASET UNSTRUCTURED_GRID" in text
    ipts = text.index(f"POINTS {mesh.n_nodes} double")
    icells = text.index(f"CELLS {mesh.n_cells} {4 * mesh.n_cells}")
    assert icells > ipts
    assert f"CELL_DATA {mesh.n_cells}" in text
    assert "SCALARS h double 1" in text
    assert "VECTORS velocity double" in text
    # all triangle cells
    itypes = text.index(f"CELL_TYPES {mesh.n_cells}")
    types = text[itypes + 1 : itypes + 1 + mesh.n_cells]
    assert set(types) == {"5"}


def test_error_history_columns(tmp_path):
    hist = outputs.ErrorHistory()
    hist.append(0.1, np.array([1e-3, 2e-3, 3e-3]), np.array([4e-3, 5e-3, 6e-3]))
    path = tmp_path / "hist.csv"
    hist.write(path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == (
        "time,err_h_L1,err_h_Linf,err_hu_L1,err_hu_Linf,err_hv_L1,err_hv_Linf"
    )
    assert len(lines) == 2


# ----------------------------------------------------------------------
# CLI driver
# ----------------------------------------------------------------------


def test_cli_free_stream_ten_steps(tmp_path):
    cfgfile = tmp_path / "run.cfg"
    cfgfile.write_text(
        "case = free_stream\ndx = 0.25\nmax_steps = 10\n"
        f"output_dir = {tmp_path / 'out'}\n"
    )
    code = main(["run", str(cfgfile), "--quiet"])
    assert code == 0
    hist = (tmp_path / "out" / "error_history.csv").read_text().strip().split("\n")
    assert len(hist) == 11  # header + one row per step
    data = np.loadtxt(hist[1:], delimiter=",", ndmin=2)
    assert np.max(data[:, 1:]) <= 1e-11
    assert (tmp_path / "out" / "final.csv").exists()
    assert (tmp_path / "out" / "final_mesh.txt").exists()


def test_cli_dam_break_writes_centerline(tmp_path):
    cfgfile = tmp_path / "run.cfg"
    cfgfile.write_text(
        "case = dam_break_1d\ndx = 0.1\nt_end = 0.05\nmotion = static\n"
        f"output_dir = {tmp_path / 'out'}\nformats = csv,vtk\n"
    )
    code = main(["run", str(cfgfile), "--quiet"])
    assert code == 0
    out = tmp_path / "out"
    assert (out / "centerline.csv").exists()
    assert (out / "final.vtk").exists()
    line = np.loadtxt(out / "centerline.csv", delimiter=",", skiprows=1)
    assert line.shape == (200, 5)


def test_cli_override_flags(tmp_path):
    cfgfile = tmp_path / "run.cfg"
    cfgfile.write_text(f"case = free_stream\ndx = 0.5\noutput_dir = {tmp_path/'o'}\n")
    code = main(["run", str(cfgfile), "--quiet", "--max_steps", "2", "--cfl", "0.4"])
    assert code == 0
    saved = (tmp_path / "o" / "config.txt").read_text()
    assert "max_steps = 2" in saved
    assert "cfl = 0.4" in saved


def test_cli_bad_config_is_exit_one(tmp_path):
    cfgfile = tmp_path / "run.cfg"
    cfgfile.write_text("case = not_a_case\n")
    assert main(["run", str(cfgfile), "--quiet"]) == 1


def test_rerun_reproduces_outputs_byte_identically(tmp_path):
    for sub in ("a", "b"):
        cfgfile = tmp_path / f"{sub}.cfg"
        cfgfile.write_text(
            "case = dam_break_1d\ndx = 0.1\nmax_steps = 5\nmotion = static\n"
            f"output_dir = {tmp_path / sub}\n"
        )
        assert main(["run", str(cfgfile), "--quiet"]) == 0
    a = (tmp_path / "a" / "final.csv").read_bytes()
    b = (tmp_path / "b" / "final.csv").read_bytes()
    assert a == b


def test_snapshot_cadence(tmp_path):
    cfgfile = tmp_path / "run.cfg"
    cfgfile.write_text(
        "case = dam_break_1d\ndx = 0.1\nt_end = 0.06\nmotion = static\n"
        f"snapshot_dt = 0.02\noutput_dir = {tmp_path / 'out'}\n"
    )
    assert main(["run", str(cfgfile), "--quiet"]) == 0
    snaps = sorted(p.name for p in (tmp_path / "out").glob("snapshot_*.csv"))
    assert len(snaps) >= 2
