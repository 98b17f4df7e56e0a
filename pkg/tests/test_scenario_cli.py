import csv
import json

import pytest

from randwg.cli import main
from randwg.errors import ConfigError
from randwg.scenario import SCHEMA, Scenario

# mode 1 only, strong scattering, about two mean free paths
FAST = ["--set", "band.omega=6.283185307179586", "--set", "kernel.sigma=2.0",
        "--set", "array.z=6.0", "--set", "solver.modes=[1]", "--set", "ensemble.realizations=300",
        "--set", "ensemble.chunk=50", "--set", "imaging.n_t=[1, 2]"]


def test_round_trip_is_byte_identical(tmp_path):
    sc = Scenario({"kernel.sigma": 0.5, "imaging.xd": [0.1, 0.2], "array.duration": 3.0})
    text = sc.dumps()
    back = Scenario.parse(text)
    assert back.dumps() == text and back == sc and back.hash == sc.hash
    p = sc.save(tmp_path / "s.cfg")
    assert Scenario.load(p).dumps() == text
    assert set(back.values) == set(SCHEMA)


@pytest.mark.parametrize("text, key", [
    ("kernel.sgima = 1", "kernel.sgima"),
    ("kernel.sigma = -1", "kernel.sigma"),
    ("solver.points = 12.5", "solver.points"),
    ("source.eta = 1.5", "source.eta"),
    ("band.omega = 10.995574287564276", "band"),  # k D / pi + 1/2 is an integer
    ("solver.modes = [40]", "solver.modes"),
    ("source.x = 0.1", "source.x"),
    ("kernel.sigma = 1\nkernel.sigma = 2", "kernel.sigma"),
    ("no equals sign", "line 1"),
])
def test_invalid_scenarios_name_the_key(text, key):
    with pytest.raises(ConfigError) as exc:
        Scenario.parse(text)
    assert exc.value.path == key


def test_overrides():
    sc = Scenario().with_overrides(["kernel.sigma=0.5", "array.window=raised_cosine"])
    assert sc["kernel.sigma"] == 0.5 and sc["array.window"] == "raised_cosine"
    with pytest.raises(ConfigError):
        Scenario().with_overrides(["nokey=1"])


def read_csv(path):
    meta, rows = {}, []
    with open(path) as fh:
        for line in fh:
            if line.startswith("# "):
                k, v = line[2:].strip().split("=", 1)
                meta[k] = json.loads(v)
            else:
                rows.append(line)
    return meta, list(csv.reader(rows))


def test_modes_and_scales_output(tmp_path):
    assert main(["modes", "--out", str(tmp_path)]) == 0
    meta, rows = read_csv(tmp_path / "modes.csv")
    assert meta["scenario_hash"] == Scenario().hash
    assert len(rows) == 1 + 19
    assert (tmp_path / "scenario.cfg").read_text() == Scenario().dumps()
    assert main(["scales", "--out", str(tmp_path), "--format", "json"]) == 0
    assert any(p.suffix == ".json" for p in tmp_path.iterdir())


def test_bad_configuration_exits_with_code_2(capsys):
    assert main(["modes", "--set", "kernel.sigma=-3"]) == 2
    assert "kernel.sigma" in capsys.readouterr().err


def test_figures_rejects_cutoff_above_mode_count(capsys):
    assert main(["figures", "--set", "imaging.n_t=[25]"]) == 2
    assert "imaging.n_t" in capsys.readouterr().err


@pytest.mark.parametrize("cmd", ["moments", "timereversal", "migrate", "cint"])
def test_profile_commands_run(cmd, tmp_path):
    assert main([cmd, "--out", str(tmp_path)]) == 0
    assert len(list(tmp_path.glob("*.csv"))) >= 1


def test_validate_and_simulate_are_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["validate", "--out", str(a), "--seed", "4"] + FAST) == 0
    assert main(["validate", "--out", str(b), "--seed", "4", "--workers", "2"] + FAST) == 0
    assert (a / "validate.csv").read_bytes() == (b / "validate.csv").read_bytes()
    assert main(["simulate", "--out", str(a), "--seed", "4"] + FAST) == 0
    meta, rows = read_csv(a / "ensemble.csv")
    assert meta["realizations"] == 300 and meta["seed"] == 4
