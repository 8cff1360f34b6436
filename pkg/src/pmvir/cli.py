"""Command-line entry point: demosaic, synth, refine, eval, plot-cost, check-grad."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .cost import RefinementConfig, azimuth_distance, polarimetric_cost
from .evaluation import evaluate_mesh
from .geometry import compute_visibility
from .optimizer import ProblemState, check_gradients, initial_estimates, refine, sample_observations
from .polar import demosaic
from .synth import check_coverage, corrupt_views, default_scene, perturb_mesh, render_views

log = logging.getLogger("pmvir")


def _cmd_demosaic(args):
    mosaic = io.read_mosaic(args.raw, args.layout)
    image = demosaic(mosaic, args.dop_epsilon)
    io.write_polarimetric(args.out_dir, image)
    print(f"demosaicked {mosaic.width}x{mosaic.height}, {image.valid_mask.mean():.1%} valid AoP pixels",
          file=sys.stderr)


def _cmd_synth(args):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mesh = io.read_mesh(args.mesh) if args.mesh else None
    scene = default_scene(args.views, args.size, args.subdivisions, args.seed, mesh=mesh)
    check_coverage(scene)
    views = render_views(scene)
    views = corrupt_views(views, args.ambiguity, args.sigma_deg, args.seed)
    ids = [f"{i:03d}" for i in range(len(scene.cameras))]
    io.write_ply(out / "gt.ply", scene.gt_mesh)
    io.write_cameras(out / "cameras.txt", scene.cameras, ids)
    io.write_illumination(out / "illum.txt", np.array([l.as_array() for l in scene.illumination]))
    io.write_views(out, views, ids)
    init = perturb_mesh(scene.gt_mesh, args.perturb, args.seed)
    io.write_ply(out / "init.ply", init)
    io.write_manifest(args.manifest or out / "manifest.txt", {"command": "synth", **_params(args)})
    print(f"wrote {len(ids)} views of {scene.gt_mesh.n_vertices} vertices to {out}", file=sys.stderr)


def _cmd_refine(args):
    config = RefinementConfig()
    if args.config:
        config = RefinementConfig.from_text(Path(args.config).read_text())
    overrides = {"threads": args.threads}
    if args.pixel_budget is not None:
        overrides.update(subdivide=True, pixel_budget=args.pixel_budget)
    if args.max_iterations is not None:
        overrides["max_iterations"] = args.max_iterations
    config = RefinementConfig(**{**vars(config), **overrides})
    mesh = io.read_mesh(args.mesh)
    ids, cameras = io.read_cameras(args.cameras)
    views = io.read_views(ids, args.rgb_dir, args.aop_dir, args.mask_dir)

    def progress(stage, it, cost):
        log.debug("stage %d iteration %d cost %.6g", stage, it, cost)

    state = refine(ProblemState(mesh), cameras, views, config, progress)
    io.write_ply(args.out, state.mesh)
    if args.illum_out:
        io.write_illumination(args.illum_out, state.illumination)
    if args.log:
        io.write_cost_log(args.log, state.history)
    if args.manifest:
        io.write_manifest(args.manifest, {"command": "refine", **_params(args),
                                          **{f"config.{k}": v for k, v in vars(config).items()}})
    for d in state.diagnostics:
        print(f"warning: {d}", file=sys.stderr)
    print(f"refined {state.mesh.n_vertices} vertices, iterations per stage {state.iterations}", file=sys.stderr)


def _cmd_eval(args):
    est = io.read_mesh(args.est)
    gt = io.read_mesh(args.gt)
    report = evaluate_mesh(est, gt, args.samples, args.seed)
    rows = report.rows()
    io.write_tsv(args.out, ("metric", "mean", "median", "p90", "count"), rows)
    print(f"accuracy {report.accuracy_mean:.6g}  completeness {report.completeness_mean:.6g}", file=sys.stderr)


def _cmd_plot_cost(args):
    alpha = np.arange(0.0, 360.0 + 0.5 * args.step_deg, args.step_deg)
    f = polarimetric_cost(azimuth_distance(np.deg2rad(alpha), np.deg2rad(args.phi_deg)), args.k)
    lines = ["alpha_deg\tcost"] + [f"{a:.6g}\t{v:.12g}" for a, v in zip(alpha, f)]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _cmd_check_grad(args):
    scene = default_scene(args.views, args.size, args.subdivisions, args.seed)
    views = render_views(scene)
    mesh = perturb_mesh(scene.gt_mesh, 0.01, args.seed)
    vis = compute_visibility(mesh, scene.cameras)
    mesh = mesh.copy(visibility=vis)
    config = RefinementConfig()
    obs = sample_observations(mesh, scene.cameras, views, vis, config)
    albedo, illum = initial_estimates(obs, mesh.n_vertices, len(scene.cameras), config)
    state = ProblemState(mesh.copy(albedo=albedo), illum)
    report = check_gradients(state, obs, config, scene.cameras, args.samples, args.seed)
    print("term\tmax_relative_error")
    for name, err in report.per_term.items():
        print(f"{name}\t{err:.3e}")
    print(f"excluded near-singular rows: {report.excluded_rows}", file=sys.stderr)
    if report.max_relative_error >= args.tolerance:
        raise RuntimeError(f"gradient check failed: {report.max_relative_error:.3e} >= {args.tolerance}")


def _params(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "verbose")}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pmvir", description="Polarimetric multi-view mesh refinement.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("demosaic", help="split a color-polarization mosaic into RGB, AoP and DoP")
    s.add_argument("--raw", required=True, help="16-bit single-channel mosaic image")
    s.add_argument("--layout", help="pattern sidecar (key = value text)")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--dop-epsilon", type=float, default=1e-9)
    s.set_defaults(func=_cmd_demosaic)

    s = sub.add_parser("synth", help="render a ground-truth synthetic scene")
    s.add_argument("--mesh", help="ground-truth mesh (default: icosphere)")
    s.add_argument("--views", type=int, default=14)
    s.add_argument("--size", type=int, default=256)
    s.add_argument("--subdivisions", type=int, default=3, help="icosphere level when --mesh is absent")
    s.add_argument("--ambiguity", type=float, default=0.0, help="fraction of AoP pixels shifted by pi/2")
    s.add_argument("--sigma-deg", type=float, default=0.0, help="Gaussian AoP noise (degrees)")
    s.add_argument("--perturb", type=float, default=0.02, help="init.ply noise RMS, fraction of the diagonal")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--manifest", help="run description path (default: OUT_DIR/manifest.txt)")
    s.set_defaults(func=_cmd_synth)

    s = sub.add_parser("refine", help="refine a mesh against RGB and AoP views")
    s.add_argument("--mesh", required=True)
    s.add_argument("--cameras", required=True)
    s.add_argument("--rgb-dir", required=True)
    s.add_argument("--aop-dir", required=True)
    s.add_argument("--mask-dir")
    s.add_argument("--config", help="key = value configuration text")
    s.add_argument("--out", required=True)
    s.add_argument("--illum-out")
    s.add_argument("--log", help="cost log TSV")
    s.add_argument("--pixel-budget", type=float, help="subdivide until faces cover at most this many pixels")
    s.add_argument("--max-iterations", type=int)
    s.add_argument("--manifest")
    s.add_argument("--seed", type=int, default=0, help="recorded for reproduction; refinement is deterministic")
    s.add_argument("--threads", type=int, default=0, help="worker threads (0 = all cores)")
    s.set_defaults(func=_cmd_refine)

    s = sub.add_parser("eval", help="accuracy and completeness against a ground-truth mesh")
    s.add_argument("--est", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--samples", type=int, default=100_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_eval)

    s = sub.add_parser("plot-cost", help="polarimetric cost versus azimuth as TSV")
    s.add_argument("--phi-deg", type=float, required=True)
    s.add_argument("--k", type=float, default=0.5)
    s.add_argument("--step-deg", type=float, default=1.0)
    s.add_argument("--out")
    s.set_defaults(func=_cmd_plot_cost)

    s = sub.add_parser("check-grad", help="finite-difference check of the analytic Jacobian")
    s.add_argument("--views", type=int, default=6)
    s.add_argument("--size", type=int, default=96)
    s.add_argument("--subdivisions", type=int, default=1)
    s.add_argument("--samples", type=int, default=60)
    s.add_argument("--tolerance", type=float, default=1e-4)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=_cmd_check_grad)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001 - report and map to exit status 1
        print(f"pmvir {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
