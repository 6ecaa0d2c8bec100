import json
import os
import subprocess
import sys

import numpy as np
import pytest

from hybridshape import fixtures, read_hgrd, write_hgrd, load_mesh, marching_cubes, save_mesh
from hybridshape.cli import main

SUBCOMMANDS = ["reconstruct", "topofix", "register", "eval", "toy2d", "gridgen"]


def run_cli(args):
    return main(args)


def test_help_exits_zero(capsys):
    for cmd in SUBCOMMANDS:
        with pytest.raises(SystemExit) as exc:
            run_cli([cmd, "--help"])
        assert exc.value.code == 0
        assert "--" in capsys.readouterr().out


def test_unknown_flag_is_usage_error(capsys):
    assert run_cli(["eval", "--nope"]) == 1
    assert run_cli(["bogus-command"]) == 1
    assert run_cli(["reconstruct"]) == 1  # missing required config


def test_gridgen_and_eval(tmp_path, capsys):
    grid_path = tmp_path / "sphere.hgrd"
    mesh_path = tmp_path / "sphere.obj"
    rc = run_cli([
        "gridgen", "--shape", "sphere", "--resolution", "32",
        "--out", str(grid_path), "--mesh-out", str(mesh_path),
    ])
    assert rc == 0
    assert read_hgrd(grid_path).resolution == 32
    mesh = load_mesh(mesh_path)
    assert mesh.n_faces > 0
    capsys.readouterr()

    csv_path = tmp_path / "metrics.csv"
    rc = run_cli([
        "eval", "--pred", str(mesh_path), "--gt", str(mesh_path),
        "--samples", "5000", "--csv", str(csv_path),
    ])
    assert rc == 0
    out = capsys.readouterr().out
    header, values = csv_path.read_text().strip().split("\n")
    table = dict(zip(header.split(","), map(float, values.split(","))))
    assert set(table) == {"ASSD", "HD90", "NC", "SI"}
    spacing = np.sqrt(4 * np.pi * 0.09 / 5000)
    assert table["ASSD"] < 2 * spacing
    assert table["NC"] > 0.99
    assert table["SI"] == 0.0
    assert "ASSD" in out


def test_reconstruct_and_manifest_replay(tmp_path):
    config = tmp_path / "run.cfg"
    config.write_text(
        "fixture=sphere\nfixture_points=1024\nfixture_radius=0.3\n"
        "resolution=32\nsigma=2.0\nseed=3\n"
    )
    out1 = tmp_path / "run1"
    assert run_cli(["reconstruct", "--config", str(config), "--out", str(out1)]) == 0
    for name in ("indicator.hgrd", "mesh.obj", "manifest.json"):
        assert (out1 / name).exists(), name
    manifest = json.loads((out1 / "manifest.json").read_text())
    assert manifest["command"] == "reconstruct"
    assert manifest["seeds"] == {"seed": 3}
    assert "dpsr" in manifest["timings"]

    out2 = tmp_path / "run2"
    assert run_cli(["reconstruct", "--from-manifest", str(out1 / "manifest.json"),
                    "--out", str(out2)]) == 0
    assert (out1 / "indicator.hgrd").read_bytes() == (out2 / "indicator.hgrd").read_bytes()
    assert (out1 / "mesh.obj").read_bytes() == (out2 / "mesh.obj").read_bytes()


def test_reconstruct_with_optimization_and_metrics(tmp_path):
    gen = fixtures.sphere_cloud(800, radius=0.3, seed=1)
    from hybridshape import dpsr_forward

    target, _ = dpsr_forward(gen, 2.0, 32, 0.5)
    target_path = tmp_path / "target.hgrd"
    write_hgrd(target_path, target)
    gt_path = tmp_path / "gt.obj"
    save_mesh(gt_path, marching_cubes(target, 0.0))

    config = tmp_path / "opt.cfg"
    config.write_text(
        "fixture=sphere\nfixture_points=800\nfixture_radius=0.28\n"
        "resolution=32\nsigma=2.0\nseed=2\n"
        f"optimize=true\ntarget_grid={target_path}\nopt_iterations=10\n"
        f"gt_mesh={gt_path}\nmetric_samples=5000\n"
    )
    out = tmp_path / "opt_run"
    assert run_cli(["reconstruct", "--config", str(config), "--out", str(out)]) == 0
    for name in ("cloud.xyzn", "optimize_loss.csv", "metrics.csv", "mesh.obj"):
        assert (out / name).exists(), name


def test_register_cli(tmp_path):
    src = marching_cubes(fixtures.sphere_grid(24, radius=0.25), 0.0)
    tgt = marching_cubes(fixtures.sphere_grid(24, radius=0.25, center=(0.53, 0.5, 0.5)), 0.0)
    sp, tp = tmp_path / "s.obj", tmp_path / "t.obj"
    save_mesh(sp, src)
    save_mesh(tp, tgt)
    out = tmp_path / "reg"
    rc = run_cli([
        "register", "--source", str(sp), "--target", str(tp),
        "--iters", "3", "--samples", "500", "--out", str(out),
    ])
    assert rc == 0
    for name in ("deformed.obj", "field.hvf", "loss.csv", "manifest.json"):
        assert (out / name).exists(), name
    lines = (out / "loss.csv").read_text().strip().split("\n")
    assert lines[0] == "iteration,loss" and len(lines) == 4


def test_topofix_cli_success_and_failure(tmp_path):
    grid = fixtures.tunnel_defect_grid(48)
    chi_path = tmp_path / "chi.hgrd"
    write_hgrd(chi_path, grid)
    mesh_path = tmp_path / "defect.obj"
    save_mesh(mesh_path, marching_cubes(grid, 0.0))

    out = tmp_path / "fix"
    rc = run_cli([
        "topofix", "--chi", str(chi_path), "--mesh", str(mesh_path),
        "--tau", "-0.5", "--reg-iters", "3", "--reg-samples", "500",
        "--out", str(out),
    ])
    assert rc == 0
    diag = json.loads((out / "diagnostics.json").read_text())
    assert diag["genus_before"] == 1 and diag["genus_after"] == 0
    assert (out / "corrected.obj").exists()

    # a wide tunnel cannot be closed by the eroding ladder: exit code 3
    wide = fixtures.tunnel_defect_grid(48, tunnel_radius=0.1)
    wide_path = tmp_path / "wide.hgrd"
    write_hgrd(wide_path, wide)
    wide_mesh = tmp_path / "wide.obj"
    save_mesh(wide_mesh, marching_cubes(wide, 0.0))
    rc = run_cli([
        "topofix", "--chi", str(wide_path), "--mesh", str(wide_mesh),
        "--tau", "0.5", "--reg-iters", "2", "--reg-samples", "300",
        "--out", str(tmp_path / "fail"),
    ])
    assert rc == 3


def test_toy2d_smoke(tmp_path):
    out = tmp_path / "toy"
    rc = run_cli([
        "toy2d", "--out", str(out), "--seed", "0",
        "--baseline-iters", "5", "--hybrid-iters", "5",
        "--resolution", "64", "--points", "200", "--gt-samples", "1000",
    ])
    assert rc == 0
    for name in (
        "panel_a_target.svg", "panel_d_baseline.svg", "panel_e_init.svg",
        "panel_g_hybrid.svg", "baseline_loss.csv", "hybrid_loss.csv",
        "summary.json", "manifest.json",
    ):
        assert (out / name).exists(), name
    summary = json.loads((out / "summary.json").read_text())
    assert summary["baseline_chamfer"] > 0 and summary["hybrid_chamfer"] > 0


def test_console_script_installed():
    result = subprocess.run(
        [sys.executable, "-m", "hybridshape.cli", "eval", "--help"],
        capture_output=True, text=True,
    )
    assert result.returncode == 0


def test_bad_input_file_is_usage_error(tmp_path):
    missing = tmp_path / "missing.obj"
    assert run_cli(["eval", "--pred", str(missing), "--gt", str(missing)]) == 1
    junk = tmp_path / "junk.hgrd"
    junk.write_bytes(b"garbage!")
    mesh_path = tmp_path / "m.obj"
    save_mesh(mesh_path, marching_cubes(fixtures.sphere_grid(16), 0.0))
    assert run_cli(["topofix", "--chi", str(junk), "--mesh", str(mesh_path),
                    "--tau", "0.5"]) == 1


def test_register_divergence_exit_code_2(tmp_path):
    src = marching_cubes(fixtures.sphere_grid(16, radius=0.25), 0.0)
    tgt = marching_cubes(fixtures.sphere_grid(16, radius=0.25, center=(0.56, 0.5, 0.5)), 0.0)
    sp, tp = tmp_path / "s.obj", tmp_path / "t.obj"
    save_mesh(sp, src)
    save_mesh(tp, tgt)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rc = run_cli([
            "register", "--source", str(sp), "--target", str(tp),
            "--iters", "20", "--samples", "300", "--lr", "1e18",
            "--out", str(tmp_path / "div"),
        ])
    assert rc == 2


def test_reconstruct_with_topofix(tmp_path, capfd):
    config = tmp_path / "fix.cfg"
    config.write_text(
        "fixture=sphere\nfixture_points=1500\nfixture_radius=0.3\n"
        "resolution=32\nsigma=2.0\nseed=4\n"
        "topofix=true\ntau=-0.5\nreg_iters=2\nreg_samples=300\n"
    )
    out = tmp_path / "fixed"
    rc = run_cli(["reconstruct", "--config", str(config), "--out", str(out)])
    captured = capfd.readouterr()
    assert rc == 0
    for name in ("corrected.obj", "topofix.json", "manifest.json"):
        assert (out / name).exists(), name
    diag = json.loads((out / "topofix.json").read_text())
    assert diag["euler_after"] == 2
    # structured one-event-per-line logs on stderr
    assert "stage=dpsr" in captured.err
    assert "stage=topofix" in captured.err
