import csv
import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from phwave.cli import main, run_subcommand
from phwave.config import DEFAULTS, load_config
from phwave.errors import ConfigError, InvariantViolation
from phwave.mesh import generate_rect_mesh, tag_boundary, write_mesh
from phwave.output import write_csv

GOLDEN = Path(__file__).parent / "golden"
CASES = [
    ("damped", "equilibrium"),
    ("damped", "simulate"),
    ("damped", "spectrum"),
    ("damped", "resolvent-check"),
    ("damped", "sweep"),
    ("damped", "decay"),
    ("damped", "a0-kernel"),
    ("damped", "garding"),
    ("conservative", "simulate"),
]
# goldens survive BLAS/LAPACK differences: round-off sized entries compare absolutely
ATOL, RTOL = 1e-9, 1e-9


def write_config(path, data):
    path.write_text(json.dumps(data))
    return path


def read_table(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def close(a, b):
    return math.isclose(float(a), float(b), rel_tol=RTOL, abs_tol=ATOL)


def compare_json(got, exp, where=""):
    if isinstance(exp, dict):
        assert set(got) == set(exp), where
        for k in exp:
            compare_json(got[k], exp[k], f"{where}/{k}")
    elif isinstance(exp, list):
        assert len(got) == len(exp), where
        for i, (g, e) in enumerate(zip(got, exp)):
            compare_json(g, e, f"{where}/{i}")
    elif isinstance(exp, float) and not isinstance(exp, bool):
        assert close(got, exp), f"{where}: {got} != {exp}"
    else:
        assert got == exp, where


@pytest.mark.parametrize("config, sub", CASES, ids=[f"{c}-{s}" for c, s in CASES])
def test_golden(tmp_path, config, sub):
    code = run_subcommand(sub, GOLDEN / "configs" / f"{config}.json", tmp_path, deterministic=True)
    assert code == 0
    expected = GOLDEN / "expected" / f"{config}-{sub}"
    names = sorted(p.name for p in expected.iterdir())
    assert sorted(p.name for p in tmp_path.iterdir()) == names
    for name in names:
        if name.endswith(".json"):
            compare_json(json.loads((tmp_path / name).read_text()), json.loads((expected / name).read_text()))
            continue
        gh, grows = read_table(tmp_path / name)
        eh, erows = read_table(expected / name)
        assert gh == eh and len(grows) == len(erows)
        for g, e in zip(grows, erows):
            assert all(close(a, b) for a, b in zip(g, e)), (name, g, e)


@pytest.mark.parametrize("sub", ["simulate", "spectrum", "resolvent-check", "garding"])
def test_deterministic_bytes(tmp_path, sub):
    cfg = GOLDEN / "configs" / "damped.json"
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_subcommand(sub, cfg, a, deterministic=True) == 0
    assert run_subcommand(sub, cfg, b, deterministic=True) == 0
    for p in a.iterdir():
        assert p.read_bytes() == (b / p.name).read_bytes()


class TestSummaries:
    def test_spectrum_abscissa_negative(self, tmp_path):
        assert run_subcommand("spectrum", GOLDEN / "configs" / "damped.json", tmp_path) == 0
        s = json.loads((tmp_path / "summary.json").read_text())
        assert s["abscissa"] < 0 and s["status"] == "ok"

    def test_decay_summary(self, tmp_path):
        assert run_subcommand("decay", GOLDEN / "configs" / "damped.json", tmp_path) == 0
        s = json.loads((tmp_path / "summary.json").read_text())
        assert s["sigma0_defect"] <= 1e-10 and s["sigma_end"] < s["sigma0"]

    def test_conservative_certified(self, tmp_path):
        assert run_subcommand("simulate", GOLDEN / "configs" / "conservative.json", tmp_path) == 0


class TestExitCodes:
    def base(self, **extra):
        data = {"mesh": {"nx": 4, "ny": 4}, "coefficients": {"rho": "1", "k": "1"}}
        data.update(extra)
        return data

    def test_lambda_zero(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", self.base(resolvent={"lambda": 0}))
        assert run_subcommand("resolvent-check", cfg, tmp_path / "out") == 1
        s = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert s["status"] == "error" and "/resolvent/lambda" in s["error"]

    def test_uncertifiable_spectrum(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", {"mesh": {"nx": 4, "ny": 4}, "coefficients": {"rho": "1"},
                                                 "boundary": {"gamma0": ["left", "right", "top", "bottom"]},
                                                 "spectral": {"certify": True}})
        assert run_subcommand("spectrum", cfg, tmp_path / "out") == 3

    def test_uncertified_spectrum_passes(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", {"mesh": {"nx": 4, "ny": 4}, "coefficients": {"rho": "1"},
                                                 "boundary": {"gamma0": ["left", "right", "top", "bottom"]}})
        assert run_subcommand("spectrum", cfg, tmp_path / "out") == 0

    def test_size_limit_is_numerical(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", self.base(mesh={"nx": 32, "ny": 32}))
        assert run_subcommand("spectrum", cfg, tmp_path / "out") == 2

    def test_near_spectrum_is_numerical(self, tmp_path):
        # 2x2 Dirichlet square: one free dof with K = 4, M = 1/8, so S(i sqrt(32)) = 0
        cfg = write_config(tmp_path / "c.json", {
            "mesh": {"nx": 2, "ny": 2}, "coefficients": {"rho": "1"},
            "boundary": {"gamma0": ["left", "right", "top", "bottom"]},
            "resolvent": {"lambda": [0, math.sqrt(32)]}})
        assert run_subcommand("resolvent-check", cfg, tmp_path / "out") == 2

    def test_bad_config(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", {"mesh": {"nx": 4, "ny": 4}, "coefficients": {"rho": "-1", "k": 1}})
        assert run_subcommand("equilibrium", cfg, tmp_path / "out") == 1

    def test_missing_file(self, tmp_path):
        assert run_subcommand("equilibrium", tmp_path / "nope.json", tmp_path / "out") == 1

    def test_main_and_flags(self, tmp_path, capsys):
        cfg = GOLDEN / "configs" / "damped.json"
        assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path), "--deterministic"]) == 0
        assert (tmp_path / "sweep.csv").exists()
        with pytest.raises(SystemExit):
            main(["bogus", "--config", str(cfg)])

    def test_module_entry_point(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", self.base(output="res"))
        proc = subprocess.run([sys.executable, "-m", "phwave", "equilibrium", "--config", str(cfg)],
                              capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert (tmp_path / "res" / "equilibrium.csv").exists()


class TestConfig:
    def test_defaults(self, tmp_path):
        cfg = load_config(write_config(tmp_path / "c.json",
                                       {"mesh": {"nx": 3, "ny": 2}, "coefficients": {"rho": "1", "k": "2"}}))
        assert cfg["time"]["dt"] == 0.01
        assert cfg["coefficients"]["T11"] == "1" and cfg["coefficients"]["T12"] == "0"
        assert cfg["boundary"]["gamma0"] == ["left"]
        assert cfg.seed == 0
        assert cfg["mesh"]["lx"] == 1.0
        assert cfg.disc.mesh.n_vertices == 12
        assert set(DEFAULTS) <= set(cfg.raw)

    def test_missing_gain_named(self, tmp_path):
        with pytest.raises(ConfigError) as info:
            load_config(write_config(tmp_path / "c.json", {"mesh": {"nx": 2, "ny": 2}, "coefficients": {"rho": "1"}}))
        assert info.value.pointer == "/coefficients/k"

    def test_positivity(self, tmp_path):
        with pytest.raises(ConfigError, match="rho not positive") as info:
            load_config(write_config(tmp_path / "c.json",
                                     {"mesh": {"nx": 2, "ny": 2}, "coefficients": {"rho": "-1", "k": "1"}}))
        assert info.value.pointer == "/coefficients/rho"

    @pytest.mark.parametrize("data, pointer", [
        ({"mesh": {"nx": 2, "ny": 2}}, "/coefficients"),
        ({"mesh": {"nx": 2, "ny": 2}, "coefficients": {}}, "/coefficients/rho"),
        ({"mesh": {"nx": 2, "ny": 2}, "coefficients": {"rho": "1", "k": "1"}, "time": {"dt": -1}}, "/time/dt"),
        ({"mesh": {"nx": 2, "ny": 2}, "coefficients": {"rho": "1", "k": "1"}, "extra": 1}, "/"),
        ({"mesh": {"nx": 2, "ny": 2}, "coefficients": {"rho": "1", "k": "1"},
          "spectral": {"mode": "lanczos"}}, "/spectral/mode"),
    ])
    def test_schema_pointer(self, tmp_path, data, pointer):
        with pytest.raises(ConfigError) as info:
            load_config(write_config(tmp_path / "c.json", data))
        assert info.value.pointer == pointer

    def test_expression_location(self, tmp_path):
        with pytest.raises(ConfigError) as info:
            load_config(write_config(tmp_path / "c.json",
                                     {"mesh": {"nx": 2, "ny": 2}, "coefficients": {"rho": "1", "k": "1"},
                                      "initial": {"w0": "sin(x"}}))
        assert info.value.pointer == "/initial/w0" and "byte offset" in str(info.value)

    def test_empty_gamma0(self, tmp_path):
        with pytest.raises(ConfigError, match="Gamma0 empty") as info:
            load_config(write_config(tmp_path / "c.json", {"mesh": {"nx": 2, "ny": 2}, "boundary": {"gamma0": []},
                                                           "coefficients": {"rho": "1", "k": "1"}}))
        assert info.value.pointer == "/boundary/gamma0"

    def test_invalid_json(self, tmp_path):
        (tmp_path / "c.json").write_text("{ nope")
        with pytest.raises(ConfigError, match="invalid JSON"):
            load_config(tmp_path / "c.json")

    def test_mesh_file_relative(self, tmp_path):
        m = generate_rect_mesh(3, 3)
        write_mesh(tmp_path / "m.phmesh", m, tag_boundary(m, ["bottom", "top"]))
        cfg = load_config(write_config(tmp_path / "c.json",
                                       {"mesh": {"file": "m.phmesh"}, "coefficients": {"rho": "1", "k": "1"}}))
        assert cfg.disc.partition.n_gamma0 == 6
        # explicit selectors replace the stored tags
        cfg = load_config(write_config(tmp_path / "c.json", {"mesh": {"file": "m.phmesh"},
                                                             "boundary": {"gamma0": ["left"]},
                                                             "coefficients": {"rho": "1", "k": "1"}}))
        assert cfg.disc.partition.n_gamma0 == 3

    def test_unmatched_selector_warning(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", {"mesh": {"nx": 2, "ny": 2},
                                                 "boundary": {"gamma0": ["left", {"box": [3, 3, 4, 4]}]},
                                                 "coefficients": {"rho": "1", "k": "1"}})
        assert run_subcommand("equilibrium", cfg, tmp_path / "out") == 0
        s = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert len(s["warnings"]) == 1


class TestWriteCsv:
    def test_header_only(self, tmp_path):
        write_csv(tmp_path / "e.csv", ["a", "b"], [])
        assert (tmp_path / "e.csv").read_bytes() == b"a,b\r\n"

    def test_one_row(self, tmp_path):
        write_csv(tmp_path / "r.csv", ["i", "v"], [(0, 1.5)])
        assert (tmp_path / "r.csv").read_text().splitlines()[1] == "0,1.5"

    def test_seventeen_digits(self, tmp_path):
        write_csv(tmp_path / "r.csv", ["v"], [(0.1,), (1 / 3,)])
        lines = (tmp_path / "r.csv").read_text().splitlines()
        assert lines[1] == "0.10000000000000001" and float(lines[2]) == 1 / 3

    def test_nan_rejected(self, tmp_path):
        with pytest.raises(InvariantViolation):
            write_csv(tmp_path / "n.csv", ["v"], [(1.0,), (float("nan"),)])
        assert not (tmp_path / "n.csv").exists()

    def test_ragged_rows(self, tmp_path):
        with pytest.raises(ValueError):
            write_csv(tmp_path / "x.csv", ["a", "b"], [(1,)])

    def test_io_error_names_path(self, tmp_path):
        with pytest.raises(Exception, match="missing"):
            write_csv(tmp_path / "missing" / "x.csv", ["a"], [])
