import json
from pathlib import Path

import numpy as np
import pytest

from specmono import io
from specmono.birkhoff import h_block_residual
from specmono.cli import main
from specmono.errors import ParseError
from specmono.quantize import SpectrumCloud
from specmono.symbolcalc import loads

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

ANNULUS = """
[run]
eps = {eps}
h = {h}
seed = 3

[model]
phi = focusfocus-sector

[ball 0]
center = 0.3, 0
radius = 0.29
[ball 1]
center = 0, 0.3
radius = 0.29
[ball 2]
center = -0.3, 0
radius = 0.29
[ball 3]
center = 0, -0.3
radius = 0.29

[loops]
annulus = 0 1 2 3
reversed = 3 2 1 0
twice = 0 1 2 3 0 1 2 3
there_and_back = 0 1

[rectangles]
ring = 0, 0, 0.3, 3, 1.5
"""

IDENTITY = """
[run]
eps = 0.01
h = 1e-4
seed = 0

[model]
phi = identity

[ball 0]
center = 0.2, 0.1
radius = 0.05

[rectangles]
centers = 0.2, 0.1
"""


def write(path, text):
    path.write_text(text)
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def annulus_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("annulus")
    cfg = write(root / "run.ini", ANNULUS.format(eps=0.01, h=1e-4))
    assert main(["synth", "--config", str(cfg), "--out", str(root / "out")]) == 0
    assert main(["fit", "--manifest", str(root / "out" / "manifest.json"), "--out", str(root / "charts.json")]) == 0
    return root


def test_identity_synth_and_fit(tmp_path, capsys):
    cfg = write(tmp_path / "run.ini", IDENTITY)
    code, _, _ = run(capsys, "synth", "--config", cfg, "--out", tmp_path / "out")
    assert code == 0
    files = sorted(p.name for p in (tmp_path / "out").iterdir())
    assert files == ["manifest.json", "rect_0000.spec"]
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["rectangles"][0]["analytic_f0_diff"] == [[1.0, 0.0], [0.0, 1.0]]
    code, out, _ = run(capsys, "fit", "--manifest", tmp_path / "out" / "manifest.json")
    assert code == 0
    chart = json.loads(out)["balls"][0]["charts"][0]
    assert np.allclose(chart["f0_diff"], np.eye(2), atol=1e-8)
    assert chart["fit_residual"] < 1e-6


def test_synth_is_byte_deterministic(tmp_path, capsys):
    cfg = write(tmp_path / "run.ini", ANNULUS.format(eps=0.0316227766016838, h=1e-3))
    for name in ("a", "b"):
        assert run(capsys, "synth", "--config", cfg, "--out", tmp_path / name)[0] == 0
    a = sorted((tmp_path / "a").iterdir())
    b = sorted((tmp_path / "b").iterdir())
    assert [p.name for p in a] == [p.name for p in b]
    assert all(pa.read_bytes() == pb.read_bytes() for pa, pb in zip(a, b))
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert len(manifest["rectangles"]) == 120
    assert all(r["balls"] for r in manifest["rectangles"])


def test_regime_violation_exit_2(tmp_path, capsys):
    cfg = write(tmp_path / "run.ini", IDENTITY.replace("eps = 0.01", "eps = 1e-4"))
    code, _, err = run(capsys, "synth", "--config", cfg, "--out", tmp_path / "out")
    assert code == 2
    lines = err.strip().splitlines()
    assert len(lines) == 1 and lines[0].startswith("error: REGIME_VIOLATION:")
    assert not (tmp_path / "out").exists()


def test_config_errors(tmp_path, capsys):
    cfg = write(tmp_path / "run.ini", IDENTITY.replace("seed = 0\n", ""))
    code, _, err = run(capsys, "synth", "--config", cfg, "--out", tmp_path / "out")
    assert code == 2 and "seed" in err
    cfg = write(tmp_path / "bad.ini", "[run\neps = 1\n")
    code, _, err = run(capsys, "synth", "--config", cfg, "--out", tmp_path / "out")
    assert code == 2 and err.startswith("error: PARSE:")
    code, _, err = run(capsys, "synth", "--config", tmp_path / "missing.ini", "--out", tmp_path / "out")
    assert code == 3 and err.startswith("error: IO:")


def test_corrupted_spectrum_reports_offset(tmp_path, capsys):
    cfg = write(tmp_path / "run.ini", IDENTITY)
    run(capsys, "synth", "--config", cfg, "--out", tmp_path / "out")
    spec = tmp_path / "out" / "rect_0000.spec"
    lines = spec.read_bytes().split(b"\n")
    offset = len(lines[0]) + len(lines[1]) + 2
    lines[2] = b"0.2 not-a-number"
    spec.write_bytes(b"\n".join(lines))
    with pytest.raises(ParseError) as exc:
        io.read_spectrum(spec)
    assert exc.value.offset == offset and exc.value.line == 3
    code, _, err = run(capsys, "fit", "--manifest", tmp_path / "out" / "manifest.json")
    assert code == 2 and f"byte {offset}" in err


def test_spectrum_round_trip():
    rng = np.random.default_rng(1)
    cloud = SpectrumCloud(rng.normal(size=50) + 1j * rng.normal(size=50), 0.01, 1e-4)
    back = io.loads_spectrum(io.dumps_spectrum(cloud))
    assert np.array_equal(back.points, cloud.points)
    assert back.eps == cloud.eps and back.h == cloud.h


def test_monodromy_annulus(annulus_run, capsys, tmp_path):
    svg = tmp_path / "plot.svg"
    code, out, _ = run(capsys, "monodromy", "--charts", annulus_run / "charts.json",
                       "--expect", "1,1;0,1", "--svg", svg)
    assert code == 0
    rep = json.loads(out)
    loops = rep["loops"]
    assert loops["annulus"]["verdict"] == "equal"
    fwd = np.array(loops["annulus"]["representative"])
    assert np.array_equal(np.array(loops["reversed"]["representative"]) @ fwd, np.eye(2))
    assert np.array_equal(np.array(loops["twice"]["representative"]), fwd @ fwd)
    assert loops["there_and_back"]["representative"] == [[1, 0], [0, 1]]
    assert len(rep["transitions"]) == 4
    assert all(t["n_rects"] >= 7 and t["max_rounding_residual"] < 0.05 for t in rep["transitions"])
    assert svg.read_text().startswith("<svg")


def test_monodromy_missing_pair(annulus_run, capsys):
    code, _, err = run(capsys, "monodromy", "--charts", annulus_run / "charts.json", "--loop", "0,2")
    assert code == 1 and err.startswith("error: INCOMPLETE_COVER:")


def test_fit_requires_charts_per_ball(tmp_path, capsys):
    cfg = write(tmp_path / "run.ini", IDENTITY + "\n[ball 1]\ncenter = 5, 5\nradius = 0.01\n")
    run(capsys, "synth", "--config", cfg, "--out", tmp_path / "out")
    code, _, err = run(capsys, "fit", "--manifest", tmp_path / "out" / "manifest.json")
    assert code == 1 and "NO_CHARTS" in err


def test_bnf_twist(tmp_path, capsys):
    out = tmp_path / "nf.txt"
    code, _, err = run(capsys, "bnf", "--builtin", "twist", "--order", 6, "--out", out,
                       "--generator", tmp_path / "g.txt")
    assert code == 0 and "residual" in err
    nf = loads(out.read_text())
    assert h_block_residual(nf, 5) <= 1e-9
    # the written normal form reloads and normalizes to itself
    code, _, _ = run(capsys, "bnf", "--input", out, "--order", 6, "--out", tmp_path / "nf2.txt")
    assert code == 0
    assert loads((tmp_path / "nf2.txt").read_text()).distance(nf) < 1e-12


def test_bnf_rejects_bad_frequency(capsys):
    code, _, err = run(capsys, "bnf", "--builtin", "twist", "--freq", "1,0.5")
    assert code == 2


def test_normal_joint_diagonal(tmp_path, capsys):
    np.savetxt(tmp_path / "a1.txt", np.diag([1.0, 2.0, 2.0]))
    np.save(tmp_path / "a2.npy", np.diag([5.0, 3.0, 3.0]))
    code, out, _ = run(capsys, "normal-joint", "--a1", tmp_path / "a1.txt", "--a2", tmp_path / "a2.npy")
    assert code == 0
    pairs = json.loads(out)["pairs"]
    assert pairs == [{"mu": [1.0, 5.0], "multiplicity": 1}, {"mu": [2.0, 3.0], "multiplicity": 2}]
    np.save(tmp_path / "b.npy", np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]))
    code, _, err = run(capsys, "normal-joint", "--a1", tmp_path / "a1.txt", "--a2", tmp_path / "b.npy")
    assert code == 1 and err.startswith("error: NOT_COMMUTING:")


def test_classical_point_and_loop(capsys):
    code, out, _ = run(capsys, "classical", "--point", "0.1,0.2", "--closure", "--loop", "0,0.1,0.3,200")
    assert code == 0
    rep = json.loads(out)
    assert max(rep["point"]["closure_errors"]) < 1e-6
    assert rep["loop"]["winding"] == 1
    assert rep["loop"]["monodromy"] == [[1, 0], [-1, 1]]
    code, _, err = run(capsys, "classical", "--point", "0.1,-1")
    assert code == 1 and err.startswith("error: NOT_REGULAR_VALUE:")


def test_shipped_configs(tmp_path, capsys):
    code, _, _ = run(capsys, "synth", "--config", CONFIGS / "twist_run.ini", "--out", tmp_path / "tw")
    assert code == 0
    code, _, _ = run(capsys, "fit", "--manifest", tmp_path / "tw" / "manifest.json")
    assert code == 0


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for name in ("synth", "fit", "monodromy", "bnf", "normal-joint", "classical"):
        assert name in out
