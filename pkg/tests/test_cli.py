import math
import os
import subprocess
import sys
from pathlib import Path

import pytest

GOLDEN = Path(__file__).parent / "golden"


def run_cli(args, cwd=None, env_extra=None):
    env = dict(os.environ, COLUMNS="80")
    env.pop("HQO_SEED", None)
    if env_extra:
        env.update(env_extra)
    return subprocess.run([sys.executable, "-m", "helmqo.cli", *args],
                          capture_output=True, text=True, cwd=cwd, env=env)


class TestHelp:
    @pytest.mark.parametrize("sub,name", [([], "top"), (["mesh"], "mesh"),
                                          (["eig"], "eig"),
                                          (["certify"], "certify"),
                                          (["study"], "study")])
    def test_golden_help(self, sub, name):
        res = run_cli([*sub, "--help"])
        assert res.returncode == 0
        golden = (GOLDEN / f"help_{name}.txt").read_text()
        assert res.stdout == golden

    def test_unknown_flag_rejected(self):
        res = run_cli(["mesh", "--geometry", "unit-square", "--frobnicate"])
        assert res.returncode == 2


class TestMeshCommand:
    def test_generate_unit_square(self, tmp_path):
        out = tmp_path / "sq.mesh"
        res = run_cli(["mesh", "--geometry", "unit-square", "--n", "8",
                       "-o", str(out)])
        assert res.returncode == 0
        from helmqo.mesh import read_mesh
        mesh = read_mesh(out.read_text())
        assert mesh.n_triangles == 128

    def test_square_hole_topology(self, tmp_path):
        out = tmp_path / "hole.mesh"
        res = run_cli(["mesh", "--geometry", "square-hole", "--outer", "2",
                       "--inner", "0.5", "-o", str(out)])
        assert res.returncode == 0
        from helmqo.mesh import read_mesh
        m = read_mesh(out.read_text())
        assert m.n_vertices - m.n_edges + m.n_triangles == 0

    def test_validate_good(self, tmp_path):
        out = tmp_path / "sq.mesh"
        run_cli(["mesh", "--geometry", "unit-square", "--n", "2",
                 "-o", str(out)])
        res = run_cli(["mesh", "--validate", str(out)])
        assert res.returncode == 0

    def test_validate_bad_exit_3_with_line(self, tmp_path):
        bad = tmp_path / "bad.mesh"
        bad.write_text("$Vertices 2\n0.0 0.0\n1.0 0.0\n"
                       "$Triangles 1\n0 1 99\n$BoundaryEdges 0\n")
        res = run_cli(["mesh", "--validate", str(bad)])
        assert res.returncode == 3
        assert "line 5" in res.stderr

    def test_missing_file_exit_3(self):
        res = run_cli(["mesh", "--validate", "/nonexistent.mesh"])
        assert res.returncode == 3


class TestEigCommand:
    def test_p1_first_eigenvalue(self, tmp_path):
        out = tmp_path / "eig.csv"
        res = run_cli(["eig", "--geometry", "unit-square", "--n", "64",
                       "--family", "p1", "--m", "3", "-o", str(out)])
        assert res.returncode == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "index,lambda,lower,upper"
        lam1 = float(lines[1].split(",")[1])
        exact = 2 * math.pi ** 2
        assert exact < lam1 < exact * 1.005
        assert lines[1].split(",")[2] == ""   # no bounds for P1

    def test_cr_enclosure(self, tmp_path):
        out = tmp_path / "eig.csv"
        res = run_cli(["eig", "--geometry", "unit-square", "--n", "64",
                       "--family", "cr", "--m", "1", "-o", str(out)])
        assert res.returncode == 0
        _, lam, lower, upper = out.read_text().strip().splitlines()[1] \
            .split(",")
        exact = 2 * math.pi ** 2
        assert float(lower) <= exact <= float(upper)

    def test_m_zero_exit_2(self):
        res = run_cli(["eig", "--geometry", "unit-square", "--family", "p1",
                       "--m", "0"])
        assert res.returncode == 2


class TestCertifyCommand:
    def test_oracle_uniform_square(self, tmp_path):
        out = tmp_path / "cert.csv"
        res = run_cli(["certify", "--geometry", "unit-square", "--n", "8",
                       "--k2", "100", "--family", "p1", "--refine",
                       "uniform", "--istar", "6", "-o", str(out)])
        assert res.returncode == 0
        rows = out.read_text().strip().splitlines()
        last = rows[-1].split(",")
        assert float(last[6]) > 0       # condition > 0
        assert last[8] == "true"

    def test_cr_adaptive_square_hole(self, tmp_path):
        out = tmp_path / "cert.csv"
        mesh_out = tmp_path / "final.mesh"
        res = run_cli(["certify", "--geometry", "square-hole", "--outer",
                       "0.75", "--inner", "0.3", "--n", "10", "--k2", "400",
                       "--family", "cr", "--refine", "adaptive",
                       "--estimate", "cr", "-o", str(out),
                       "--mesh-out", str(mesh_out)])
        assert res.returncode == 0, res.stderr
        assert "certified" in res.stdout
        from helmqo.mesh import read_mesh
        read_mesh(mesh_out.read_text())   # final mesh is valid

    def test_resonant_k2_exit_6(self):
        res = run_cli(["certify", "--geometry", "unit-square", "--n", "8",
                       "--k2", repr(2 * math.pi ** 2), "--family", "cr",
                       "--estimate", "cr", "--max-iters", "8"])
        assert res.returncode == 6
        assert "resonan" in res.stderr.lower()

    def test_budget_exit_5_with_partial_csv(self, tmp_path):
        out = tmp_path / "cert.csv"
        res = run_cli(["certify", "--geometry", "unit-square", "--n", "4",
                       "--k2", "100", "--family", "p1", "--istar", "6",
                       "--max-iters", "2", "-o", str(out)])
        assert res.returncode == 5
        rows = out.read_text().strip().splitlines()
        assert len(rows) == 3   # header + two iterations

    def test_oracle_requires_istar(self):
        res = run_cli(["certify", "--geometry", "unit-square", "--k2",
                       "100", "--family", "p1"])
        assert res.returncode == 2

    def test_no_output_file_on_usage_error(self, tmp_path):
        out = tmp_path / "cert.csv"
        res = run_cli(["certify", "--geometry", "unit-square", "--k2",
                       "100", "--family", "p1", "-o", str(out)])
        assert res.returncode == 2
        assert not out.exists()


class TestStudyCommand:
    def test_deterministic_output(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        args = ["study", "--geometry", "unit-square", "--n", "8", "--k2",
                "100", "--family", "p1", "--p", "1", "--refinements", "3"]
        assert run_cli([*args, "-o", str(a)]).returncode == 0
        assert run_cli([*args, "-o", str(b)]).returncode == 0
        assert a.read_bytes() == b.read_bytes()

    def test_header_and_rows(self, tmp_path):
        out = tmp_path / "study.csv"
        res = run_cli(["study", "--geometry", "unit-square", "--n", "8",
                       "--k2", "100", "--family", "p1", "--refinements",
                       "2", "-o", str(out)])
        assert res.returncode == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "h,ndof,error,EV_i,EV_ipo"
        assert len(lines) == 3

    def test_seed_env_override(self, tmp_path):
        out = tmp_path / "s.csv"
        res = run_cli(["study", "--geometry", "unit-square", "--n", "8",
                       "--k2", "100", "--family", "p1", "--refinements",
                       "2", "-o", str(out)], env_extra={"HQO_SEED": "3"})
        assert res.returncode == 0

    def test_cr_with_p_rejected(self):
        res = run_cli(["study", "--geometry", "unit-square", "--k2", "100",
                       "--family", "cr", "--p", "2", "--refinements", "2"])
        assert res.returncode == 2


class TestDeepValidation:
    def test_too_many_pairs_exit_2(self):
        res = run_cli(["eig", "--geometry", "unit-square", "--n", "2",
                       "--family", "p1", "--m", "5"])
        assert res.returncode == 2
        assert "error:" in res.stderr
