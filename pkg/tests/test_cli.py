"""Configuration parsing, the run loop, file outputs and exit codes."""

import json
from pathlib import Path

import numpy as np
import pytest

from pnpdg import cli
from pnpdg.config import ConfigError, RunConfig, parse_config
from pnpdg.linalg import SolverFailure
from pnpdg.mesh import BoundaryTag


def write_config(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestConfigParsing:
    def test_preset_with_overrides(self, tmp_path):
        path = write_config(tmp_path, """
[run]
preset = decay
nx = 8
ny = 8
t_final = 0.01
""")
        cfg = parse_config(path)
        assert cfg.degree == 2 and cfg.sigma_e == 40.0
        assert cfg.nx == 8 and cfg.t_final == 0.01
        assert cfg.params.kappa1 == 1.0

    def test_unknown_key_rejected(self, tmp_path):
        path = write_config(tmp_path, "[run]\npreste = decay\n")
        with pytest.raises(ConfigError):
            parse_config(path)

    def test_unknown_section_rejected(self, tmp_path):
        path = write_config(tmp_path, "[runner]\npreset = decay\n")
        with pytest.raises(ConfigError):
            parse_config(path)

    def test_validation(self, tmp_path):
        path = write_config(tmp_path, "[run]\ndegree = 3\n")
        with pytest.raises(ConfigError):
            parse_config(path)
        path = write_config(tmp_path, "[run]\ndt = -0.1\n", name="b.ini")
        with pytest.raises(ConfigError):
            parse_config(path)

    def test_boundary_maps(self, tmp_path):
        path = write_config(tmp_path, """
[run]
preset = reservoir
[bc]
dirichlet = top:0.0
flux = bottom:2.5
""")
        cfg = parse_config(path)
        assert cfg.flux[BoundaryTag.BOTTOM] == 2.5
        assert cfg.dirichlet[BoundaryTag.TOP] == 0.0

    def test_missing_file(self):
        with pytest.raises(ConfigError):
            parse_config("/no/such/file.ini")


class TestRunCommand:
    def test_decay_short_run_csv(self, tmp_path):
        path = write_config(tmp_path, """
[run]
preset = decay
nx = 8
ny = 8
t_final = 0.01
out_dir = %s
""" % (tmp_path / "out"))
        assert cli.main(["run", path]) == 0
        rows = (tmp_path / "out" / "diagnostics.csv").read_text().splitlines()
        assert rows[0].startswith("t,mass1,mass2,min_c1")
        assert len(rows) == 1 + 11  # header + t=0 + 10 steps
        data = np.loadtxt(rows[1:], delimiter=",")
        mass_dev1 = np.abs(data[:, 1] - data[0, 1])
        mass_dev2 = np.abs(data[:, 2] - data[0, 2])
        assert mass_dev1.max() <= 1e-11 and mass_dev2.max() <= 1e-11
        meta = json.loads((tmp_path / "out" / "run_meta.json").read_text())
        assert meta["initial_concentrations"] == "lagrange-interpolation"

    def test_zero_config_all_zero_diagnostics(self, tmp_path):
        path = write_config(tmp_path, """
[run]
degree = 1
nx = 4
ny = 4
dt = 0.01
t_final = 0.05
out_dir = %s
""" % (tmp_path / "out0"))
        assert cli.main(["run", path]) == 0
        data = np.loadtxt((tmp_path / "out0" / "diagnostics.csv").read_text()
                          .splitlines()[1:], delimiter=",")
        # all masses, extrema and the electric energy identically zero
        assert np.abs(data[:, 1:8]).max() == 0.0

    def test_reservoir_truncated_smoke(self, tmp_path):
        out = tmp_path / "res"
        path = write_config(tmp_path, """
[run]
preset = reservoir
nx = 8
ny = 16
dt = 0.01
t_final = 0.1
output_cadence = 5
out_dir = %s
""" % out)
        assert cli.main(["run", path]) == 0
        snaps = sorted((out / "fields").glob("c1_*.vtk"))
        # steps 0, 5, 10 at cadence 5 (final step coincides with cadence)
        assert len(snaps) == 3

    def test_deterministic_output(self, tmp_path):
        text = """
[run]
preset = decay
nx = 4
ny = 4
t_final = 0.005
out_dir = %s
"""
        p1 = write_config(tmp_path, text % (tmp_path / "a"), name="a.ini")
        p2 = write_config(tmp_path, text % (tmp_path / "b"), name="b.ini")
        assert cli.main(["run", p1]) == 0
        assert cli.main(["run", p2]) == 0
        csv_a = (tmp_path / "a" / "diagnostics.csv").read_bytes()
        csv_b = (tmp_path / "b" / "diagnostics.csv").read_bytes()
        assert csv_a == csv_b


class TestVtkOutput:
    def test_two_triangle_constant_fields(self, tmp_path):
        from pnpdg.forms import FormParams
        from pnpdg.mesh import build_rect_mesh
        from pnpdg.mms import initial_fields
        from pnpdg.stepper import Discretization, SchemeConfig, initial_state
        from pnpdg.vtkio import write_fields

        mesh = build_rect_mesh(1.0, 1.0, 1, 1)
        disc = Discretization(mesh, 1, 10.0)
        cfg = SchemeConfig(dt=0.1, t_final=0.1, params=FormParams(sigma_e=10.0))
        init = {"c1": lambda x, y: np.full_like(x, 2.0),
                "c2": lambda x, y: np.full_like(x, 2.0),
                "u": lambda x, y: np.zeros(np.shape(x) + (2,)),
                "p": lambda x, y: np.zeros_like(x)}
        state = initial_state(disc, cfg, init)
        files = write_fields(state, tmp_path, 0)
        text = Path(files[1]).read_text()  # c1 file
        assert "CELLS 2 8" in text
        lines = text.splitlines()
        idx = lines.index("SCALARS c1_mean double 1")
        means = [float(lines[idx + 2 + i]) for i in range(2)]
        np.testing.assert_allclose(means, 2.0, atol=1e-9)

    def test_round_trip_precision(self, tmp_path):
        from pnpdg.forms import FormParams
        from pnpdg.mesh import build_rect_mesh
        from pnpdg.mms import initial_fields
        from pnpdg.stepper import Discretization, SchemeConfig, initial_state
        from pnpdg.vtkio import _vertex_samples, write_fields

        mesh = build_rect_mesh(1.0, 1.0, 2, 2)
        disc = Discretization(mesh, 2, 40.0)
        cfg = SchemeConfig(dt=0.1, t_final=0.1, params=FormParams(sigma_e=40.0))
        state = initial_state(disc, cfg, initial_fields("decay"))
        files = write_fields(state, tmp_path, 7)
        assert files[0].endswith("phi_000007.vtk")
        text = Path(files[1]).read_text().splitlines()
        idx = text.index("SCALARS c1 double 1")
        written = np.array([float(v) for v in
                            text[idx + 2: idx + 2 + mesh.n_vertices]])
        expected = _vertex_samples(state.c1())
        np.testing.assert_allclose(written, expected, rtol=1e-6, atol=1e-9)


class TestExitCodes:
    def test_config_error_is_2(self, tmp_path):
        bad = write_config(tmp_path, "[run]\ndegree = 9\n")
        assert cli.main(["run", bad]) == 2
        assert cli.main(["run", str(tmp_path / "missing.ini")]) == 2

    def test_solver_failure_is_3(self, tmp_path, monkeypatch):
        good = write_config(tmp_path, "[run]\nnx = 2\nny = 2\ndt = 0.01\n"
                            "t_final = 0.02\n")

        def boom(cfg, out_dir=None, progress=None):
            raise SolverFailure("injected")

        monkeypatch.setattr(cli, "run_simulation", boom)
        assert cli.main(["run", good]) == 3

    def test_io_error_is_4(self, tmp_path, monkeypatch):
        good = write_config(tmp_path, "[run]\nnx = 2\nny = 2\ndt = 0.01\n"
                            "t_final = 0.02\n")

        def boom(cfg, out_dir=None, progress=None):
            raise OSError("disk gone")

        monkeypatch.setattr(cli, "run_simulation", boom)
        assert cli.main(["run", good]) == 4

    def test_presets_list(self, capsys):
        assert cli.main(["presets", "list"]) == 0
        out = capsys.readouterr().out
        for name in ("mms-k1", "mms-k2", "decay", "reservoir"):
            assert name in out


class TestConvergenceCommand:
    def test_temporal_mode_table(self, tmp_path, capsys):
        code = cli.main(["convergence", "--mode", "temporal", "--degree", "1",
                         "--levels", "3", "--out", str(tmp_path)])
        assert code == 0
        out = capsys.readouterr().out
        assert "ls slopes" in out
        csv = tmp_path / "convergence_temporal_k1.csv"
        assert csv.exists()
        lines = csv.read_text().splitlines()
        assert lines[0].startswith("dt,")
        assert lines[-1].startswith("ls_slope")

    def test_too_few_levels_rejected(self):
        assert cli.main(["convergence", "--mode", "spatial-l2", "--degree",
                         "1", "--levels", "2"]) == 2
