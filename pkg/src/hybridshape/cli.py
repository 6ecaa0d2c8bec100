"""Command-line interface: reconstruct, topofix, register, eval, toy2d, gridgen.

Exit codes: 0 success, 1 usage/input error, 2 numerical failure (NaN or
divergence), 3 topology-correction failure.  Events are logged to stderr one
per line as key=value fields.  Every successful run writes a RunManifest JSON
next to its outputs; re-running `reconstruct --from-manifest` reproduces the
outputs bit-identically.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .errors import NumericalDivergenceError, TopologyCorrectionError
from . import fixtures
from .fileio import load_mesh, read_cloud, save_mesh, write_cloud, write_loops
from .grids import ScalarGrid, read_hgrd, write_hgrd
from .hybrid import (
    DeformBaselineConfig,
    HybridConfig,
    deform_baseline_2d,
    make_circle,
    make_polygon_target,
    optimize_oriented_points,
)
from .meshing import (
    marching_cubes,
    marching_squares,
    sample_surface,
    self_intersection_ratio,
)
from .metrics import assd, chamfer_distance, hausdorff_p, normal_consistency
from .poisson import dpsr_forward
from .registration import RegistrationConfig
from .render import contour_path, point_markers, write_svg
from .fields import save_field
from .topology import TopoConfig, correct_topology


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def log_event(**fields) -> None:
    print(" ".join(f"{k}={_fmt_value(v)}" for k, v in fields.items()), file=sys.stderr)


def _fmt_value(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return v


@dataclasses.dataclass
class RunManifest:
    command: str
    config: dict
    seeds: dict
    inputs: dict
    outputs: dict
    timings: dict
    version: str = __version__

    def write(self, path) -> None:
        tmp = f"{path}.tmp"
        with open(tmp, "w") as fh:
            json.dump(dataclasses.asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)


class _StageTimer:
    def __init__(self):
        self.timings = {}

    def run(self, stage, fn):
        t0 = time.time()
        out = fn()
        self.timings[stage] = round(time.time() - t0, 3)
        log_event(stage=stage, seconds=self.timings[stage])
        return out


# ---------------------------------------------------------------------------
# config files: key=value lines, # comments


_BOOL = {"true": True, "false": False, "yes": True, "no": False, "1": True, "0": False}


def parse_config(path) -> dict:
    cfg = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            cfg[key.strip()] = _parse_value(value.strip())
    return cfg


def _parse_value(raw: str):
    low = raw.lower()
    if low in _BOOL:
        return _BOOL[low]
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            continue
    return raw


def _get(cfg: dict, key: str, default):
    value = cfg.get(key, default)
    if default is not None and value is not None and not isinstance(value, type(default)):
        if isinstance(default, float) and isinstance(value, int):
            return float(value)
        raise UsageError(f"config key {key!r}: expected {type(default).__name__}, got {value!r}")
    return value


# ---------------------------------------------------------------------------
# subcommands


def _cmd_reconstruct(args) -> int:
    if args.from_manifest:
        with open(args.from_manifest) as fh:
            cfg = json.load(fh)["config"]
    else:
        if not args.config:
            raise UsageError("reconstruct needs --config or --from-manifest")
        cfg = parse_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    out_dir = args.out or cfg.get("out") or "."
    os.makedirs(out_dir, exist_ok=True)

    seed = int(cfg.get("seed", 0))
    resolution = int(cfg.get("resolution", 64))
    sigma = float(_get(cfg, "sigma", 2.0))
    scale = float(_get(cfg, "scale", 0.5))
    iso = float(_get(cfg, "iso", 0.0))
    timer = _StageTimer()
    inputs, outputs = {}, {}

    if "cloud" in cfg:
        cloud = read_cloud(cfg["cloud"])
        inputs["cloud"] = cfg["cloud"]
    elif cfg.get("fixture") == "sphere":
        cloud = fixtures.sphere_cloud(
            int(cfg.get("fixture_points", 4096)),
            radius=float(_get(cfg, "fixture_radius", 0.3)),
            seed=seed,
        )
    else:
        raise UsageError("config needs cloud=<path.xyzn> or fixture=sphere")
    if cloud.dim != 3:
        raise UsageError("reconstruct is 3-d; use toy2d for contours")

    if cfg.get("optimize", False):
        if "target_grid" not in cfg:
            raise UsageError("optimize=true needs target_grid=<path.hgrd>")
        target = read_hgrd(cfg["target_grid"])
        inputs["target_grid"] = cfg["target_grid"]
        if not isinstance(target, ScalarGrid):
            raise UsageError("target_grid must hold a scalar grid")
        hybrid_cfg = HybridConfig(
            n_points=len(cloud),
            resolution=target.resolution,
            sigma=sigma,
            scale=scale,
            lr=float(_get(cfg, "opt_lr", 3e-3)),
            iterations=int(cfg.get("opt_iterations", 1000)),
            edge_weighting=bool(cfg.get("edge_weighting", False)),
            seed=seed,
        )
        cloud, history = timer.run(
            "optimize", lambda: optimize_oriented_points(target, cloud, hybrid_cfg, log=log_event)
        )
        loss_path = os.path.join(out_dir, "optimize_loss.csv")
        _write_loss_csv(loss_path, history)
        cloud_path = os.path.join(out_dir, "cloud.xyzn")
        write_cloud(cloud_path, cloud)
        outputs["optimized_cloud"] = cloud_path
        outputs["optimize_loss"] = loss_path

    chi, _ = timer.run("dpsr", lambda: dpsr_forward(cloud, sigma, resolution, scale))
    grid_path = os.path.join(out_dir, "indicator.hgrd")
    write_hgrd(grid_path, chi)
    outputs["indicator"] = grid_path

    mesh = timer.run("marching_cubes", lambda: marching_cubes(chi, iso))
    mesh_path = os.path.join(out_dir, "mesh.obj")
    save_mesh(mesh_path, mesh)
    outputs["mesh"] = mesh_path

    final_mesh = mesh
    if cfg.get("topofix", False):
        topo_cfg = TopoConfig(
            tau=float(_get(cfg, "tau", -0.5)),
            smooth_std=float(_get(cfg, "smooth_std", 1.0)),
            threshold=iso,
            registration=RegistrationConfig(
                iterations=int(cfg.get("reg_iters", 75)),
                lr=float(_get(cfg, "reg_lr", 3e-4)),
                samples=int(cfg.get("reg_samples", 20000)),
                seed=seed,
            ),
        )
        final_mesh, diagnostics = timer.run(
            "topofix", lambda: correct_topology(chi, topo_cfg, mesh, log=log_event)
        )
        corrected_path = os.path.join(out_dir, "corrected.obj")
        save_mesh(corrected_path, final_mesh)
        diag_path = os.path.join(out_dir, "topofix.json")
        with open(diag_path, "w") as fh:
            json.dump(diagnostics, fh, indent=2, sort_keys=True)
        outputs["corrected"] = corrected_path
        outputs["topofix"] = diag_path

    if "gt_mesh" in cfg:
        gt = load_mesh(cfg["gt_mesh"])
        inputs["gt_mesh"] = cfg["gt_mesh"]
        table = timer.run(
            "metrics",
            lambda: _metric_table(final_mesh, gt, int(cfg.get("metric_samples", 100000)), seed),
        )
        metrics_path = os.path.join(out_dir, "metrics.csv")
        with open(metrics_path, "w") as fh:
            fh.write(_metrics_csv(table))
        outputs["metrics"] = metrics_path
        print(_metrics_text(table))

    manifest = RunManifest(
        command="reconstruct",
        config=cfg,
        seeds={"seed": seed},
        inputs=inputs,
        outputs=outputs,
        timings=timer.timings,
    )
    manifest.write(os.path.join(out_dir, "manifest.json"))
    return 0


def _cmd_topofix(args) -> int:
    chi = read_hgrd(args.chi)
    if not isinstance(chi, ScalarGrid):
        raise UsageError("--chi must hold a scalar indicator grid")
    mesh = load_mesh(args.mesh)
    cfg = TopoConfig(
        tau=args.tau,
        smooth_std=args.smooth_std,
        registration=RegistrationConfig(
            iterations=args.reg_iters,
            lr=args.reg_lr,
            samples=args.reg_samples,
            seed=args.seed,
        ),
    )
    os.makedirs(args.out, exist_ok=True)
    timer = _StageTimer()
    corrected, diagnostics = timer.run(
        "topofix", lambda: correct_topology(chi, cfg, mesh, log=log_event)
    )
    mesh_path = os.path.join(args.out, "corrected.obj")
    save_mesh(mesh_path, corrected)
    diag_path = os.path.join(args.out, "diagnostics.json")
    with open(diag_path, "w") as fh:
        json.dump(diagnostics, fh, indent=2, sort_keys=True)
    manifest = RunManifest(
        command="topofix",
        config={
            "tau": args.tau,
            "smooth_std": args.smooth_std,
            "reg_iters": args.reg_iters,
            "reg_lr": args.reg_lr,
            "reg_samples": args.reg_samples,
        },
        seeds={"seed": args.seed},
        inputs={"chi": args.chi, "mesh": args.mesh},
        outputs={"corrected": mesh_path, "diagnostics": diag_path},
        timings=timer.timings,
    )
    manifest.write(os.path.join(args.out, "manifest.json"))
    log_event(stage="topofix", genus_before=diagnostics["genus_before"],
              genus_after=diagnostics["genus_after"])
    return 0


def _cmd_register(args) -> int:
    source = load_mesh(args.source)
    target = load_mesh(args.target)
    cfg = RegistrationConfig(
        iterations=args.iters,
        lr=args.lr,
        samples=args.samples,
        step_size=args.step,
        seed=args.seed,
        normal_weight=args.normal_weight,
    )
    os.makedirs(args.out, exist_ok=True)
    timer = _StageTimer()

    from .registration import DiffeomorphicRegistration

    reg = DiffeomorphicRegistration(**dataclasses.asdict(cfg))
    timer.run("register", lambda: reg.fit(source, target, log=log_event))
    mesh_path = os.path.join(args.out, "deformed.obj")
    save_mesh(mesh_path, reg.deformed_)
    field_path = os.path.join(args.out, "field.hvf")
    save_field(field_path, reg.field_)
    loss_path = os.path.join(args.out, "loss.csv")
    _write_loss_csv(loss_path, reg.loss_history_)
    manifest = RunManifest(
        command="register",
        config=dataclasses.asdict(cfg),
        seeds={"seed": args.seed},
        inputs={"source": args.source, "target": args.target},
        outputs={"deformed": mesh_path, "field": field_path, "loss": loss_path},
        timings=timer.timings,
    )
    manifest.write(os.path.join(args.out, "manifest.json"))
    return 0


def _metric_table(pred, gt, samples: int, seed: int) -> dict:
    return {
        "ASSD": assd(pred, gt, samples=samples, seed=seed),
        "HD90": hausdorff_p(pred, gt, percentile=90.0, samples=samples, seed=seed),
        "NC": normal_consistency(pred, gt, samples=samples, seed=seed),
        "SI": self_intersection_ratio(pred),
    }


def _metrics_csv(table: dict) -> str:
    keys = list(table)
    return ",".join(keys) + "\n" + ",".join(f"{table[k]:.6g}" for k in keys) + "\n"


def _metrics_text(table: dict) -> str:
    header = "  ".join(f"{k:>10}" for k in table)
    values = "  ".join(f"{table[k]:>10.6f}" for k in table)
    return header + "\n" + values


def _cmd_eval(args) -> int:
    pred = load_mesh(args.pred)
    gt = load_mesh(args.gt)
    table = _metric_table(pred, gt, args.samples, args.seed)
    print(_metrics_csv(table), end="")
    print(_metrics_text(table))
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(_metrics_csv(table))
        manifest = RunManifest(
            command="eval",
            config={"samples": args.samples},
            seeds={"seed": args.seed},
            inputs={"pred": args.pred, "gt": args.gt},
            outputs={"csv": args.csv},
            timings={},
        )
        manifest.write(args.csv + ".manifest.json")
    return 0


def _cmd_toy2d(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    timer = _StageTimer()
    target = make_polygon_target(args.pivots, seed=args.seed)
    source = make_circle(args.circle_points)

    baseline_cfg = DeformBaselineConfig(
        lr=args.baseline_lr, iterations=args.baseline_iters, seed=args.seed
    )
    deformed, baseline_history = timer.run(
        "baseline", lambda: deform_baseline_2d(target, source, baseline_cfg, log=log_event)
    )

    init = timer.run(
        "init_points", lambda: sample_surface(deformed, args.points, seed=args.seed + 1)
    )
    gt_cloud = sample_surface(target, args.gt_samples, seed=args.seed + 2)
    target_grid, _ = dpsr_forward(gt_cloud, args.sigma, args.resolution, 0.5)

    hybrid_cfg = HybridConfig(
        n_points=args.points,
        resolution=args.resolution,
        sigma=args.sigma,
        lr=args.hybrid_lr,
        iterations=args.hybrid_iters,
        seed=args.seed,
    )
    cloud, hybrid_history = timer.run(
        "hybrid", lambda: optimize_oriented_points(target_grid, init, hybrid_cfg, log=log_event)
    )
    chi, _ = dpsr_forward(cloud, args.sigma, args.resolution, 0.5)
    hybrid_contour = marching_squares(chi, 0.0)

    eval_samples = 10000
    tgt_pts = sample_surface(target, eval_samples, seed=args.seed + 3)
    baseline_chamfer = chamfer_distance(
        sample_surface(deformed, eval_samples, seed=args.seed + 4), tgt_pts
    )
    hybrid_chamfer = chamfer_distance(
        sample_surface(hybrid_contour, eval_samples, seed=args.seed + 5), tgt_pts
    )

    panels = {
        "panel_a_target.svg": [contour_path(target, "#333333")],
        "panel_d_baseline.svg": [
            contour_path(target, "#bbbbbb"),
            contour_path(deformed, "#ff7f0e"),
        ],
        "panel_e_init.svg": [
            contour_path(target, "#bbbbbb"),
            point_markers(init.positions, "#2ca02c"),
        ],
        "panel_g_hybrid.svg": [
            contour_path(target, "#bbbbbb"),
            contour_path(hybrid_contour, "#1f77b4"),
        ],
    }
    outputs = {}
    for name, elements in panels.items():
        path = os.path.join(args.out, name)
        write_svg(path, elements)
        outputs[name.split(".")[0]] = path
    _write_loss_csv(os.path.join(args.out, "baseline_loss.csv"), baseline_history)
    _write_loss_csv(os.path.join(args.out, "hybrid_loss.csv"), hybrid_history)
    write_loops(os.path.join(args.out, "hybrid_contour.loops"), hybrid_contour)
    write_loops(os.path.join(args.out, "baseline_contour.loops"), deformed)

    summary = {
        "baseline_chamfer": baseline_chamfer,
        "hybrid_chamfer": hybrid_chamfer,
        "ratio": hybrid_chamfer / baseline_chamfer if baseline_chamfer > 0 else None,
    }
    with open(os.path.join(args.out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    log_event(stage="toy2d", baseline_chamfer=baseline_chamfer,
              hybrid_chamfer=hybrid_chamfer, ratio=summary["ratio"])

    manifest = RunManifest(
        command="toy2d",
        config={
            "pivots": args.pivots,
            "circle_points": args.circle_points,
            "points": args.points,
            "resolution": args.resolution,
            "sigma": args.sigma,
            "baseline_iters": args.baseline_iters,
            "baseline_lr": args.baseline_lr,
            "hybrid_iters": args.hybrid_iters,
            "hybrid_lr": args.hybrid_lr,
            "gt_samples": args.gt_samples,
        },
        seeds={"seed": args.seed},
        inputs={},
        outputs=outputs,
        timings=timer.timings,
    )
    manifest.write(os.path.join(args.out, "manifest.json"))
    return 0


def _cmd_gridgen(args) -> int:
    r = args.resolution
    if args.shape == "sphere":
        grid = fixtures.sphere_grid(r, radius=args.radius)
    elif args.shape == "torus":
        grid = fixtures.torus_grid(r, major=args.major, minor=args.minor)
    elif args.shape == "circle":
        grid = fixtures.circle_grid(r, radius=args.radius)
    elif args.shape == "tunnel":
        grid = fixtures.tunnel_defect_grid(r, radius=args.radius, tunnel_radius=args.minor)
    elif args.shape == "handle":
        grid = fixtures.handle_defect_grid(
            r, radius=args.radius, handle_major=args.major, handle_minor=args.minor
        )
    else:
        raise UsageError(f"unknown shape {args.shape!r}")
    write_hgrd(args.out, grid)
    outputs = {"grid": args.out}
    if args.mesh_out:
        if grid.dim != 3:
            raise UsageError("--mesh-out needs a 3-d shape")
        save_mesh(args.mesh_out, marching_cubes(grid, 0.0))
        outputs["mesh"] = args.mesh_out
    manifest = RunManifest(
        command="gridgen",
        config={
            "shape": args.shape,
            "resolution": r,
            "radius": args.radius,
            "major": args.major,
            "minor": args.minor,
        },
        seeds={},
        inputs={},
        outputs=outputs,
        timings={},
    )
    manifest.write(args.out + ".manifest.json")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="hybridshape", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reconstruct", help="points -> indicator -> mesh [-> topofix -> metrics]")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--from-manifest", help="re-run a previous manifest's configuration")
    p.add_argument("--out", help="output directory (overrides config)")
    p.add_argument("--seed", type=int, help="override config seed")
    p.set_defaults(func=_cmd_reconstruct)

    p = sub.add_parser("topofix", help="offset level-set topology correction")
    p.add_argument("--chi", required=True, help="indicator grid (HGRD)")
    p.add_argument("--mesh", required=True, help="defective mesh (OBJ/PLY)")
    p.add_argument("--tau", type=float, required=True, help="level offset in grid cells")
    p.add_argument("--smooth-std", type=float, default=1.0)
    p.add_argument("--reg-iters", type=int, default=75)
    p.add_argument("--reg-lr", type=float, default=3e-4)
    p.add_argument("--reg-samples", type=int, default=20000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".")
    p.set_defaults(func=_cmd_topofix)

    p = sub.add_parser("register", help="diffeomorphic surface registration")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--iters", type=int, default=75)
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--samples", type=int, default=20000)
    p.add_argument("--step", type=float, default=0.2)
    p.add_argument("--normal-weight", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".")
    p.set_defaults(func=_cmd_register)

    p = sub.add_parser("eval", help="surface metrics: ASSD, HD90, NC, SI")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--samples", type=int, default=100000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", help="also write the CSV table here")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("toy2d", help="2D comparison: explicit deformation vs hybrid points")
    p.add_argument("--out", default="toy2d_out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pivots", type=int, default=40)
    p.add_argument("--circle-points", type=int, default=200)
    p.add_argument("--points", type=int, default=1000)
    p.add_argument("--resolution", type=int, default=128)
    p.add_argument("--sigma", type=float, default=2.0)
    p.add_argument("--baseline-iters", type=int, default=3000)
    p.add_argument("--baseline-lr", type=float, default=1e-4)
    p.add_argument("--hybrid-iters", type=int, default=1000)
    p.add_argument("--hybrid-lr", type=float, default=3e-3)
    p.add_argument("--gt-samples", type=int, default=10000)
    p.set_defaults(func=_cmd_toy2d)

    p = sub.add_parser("gridgen", help="generate analytic fixture grids (HGRD)")
    p.add_argument("--shape", required=True,
                   choices=["sphere", "torus", "circle", "tunnel", "handle"])
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--radius", type=float, default=0.3)
    p.add_argument("--major", type=float, default=0.15)
    p.add_argument("--minor", type=float, default=0.02)
    p.add_argument("--out", required=True)
    p.add_argument("--mesh-out", help="also extract the zero level set to this mesh file")
    p.set_defaults(func=_cmd_gridgen)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, IsADirectoryError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericalDivergenceError, FloatingPointError) as exc:
        log_event(stage="abort", reason="numerical", detail=str(exc))
        return 2
    except TopologyCorrectionError as exc:
        log_event(stage="abort", reason="topology", detail=str(exc))
        return 3


def _write_loss_csv(path, history) -> None:
    with open(path, "w") as fh:
        fh.write("iteration,loss\n")
        for i, loss in enumerate(history):
            fh.write(f"{i},{loss:.17g}\n")


if __name__ == "__main__":
    sys.exit(main())
