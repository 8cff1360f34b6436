"""Per-iteration cost of one synthetic refinement, as TSV (stage, iteration, cost)."""
import argparse

from pmvir.cost import RefinementConfig
from pmvir.optimizer import ProblemState, refine
from pmvir.synth import corrupt_views, default_scene, perturb_mesh, render_views


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--views", type=int, default=14)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--subdivisions", type=int, default=3)
    p.add_argument("--ambiguity", type=float, default=0.0)
    p.add_argument("--sigma-deg", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    scene = default_scene(args.views, args.size, args.subdivisions, args.seed)
    views = corrupt_views(render_views(scene), args.ambiguity, args.sigma_deg, args.seed)
    init = perturb_mesh(scene.gt_mesh, 0.02, args.seed)
    print("stage\titeration\tcost")
    refine(ProblemState(init), scene.cameras, views, RefinementConfig(),
           progress=lambda stage, it, cost: print(f"{stage}\t{it}\t{cost:.10g}", flush=True))


if __name__ == "__main__":
    main()
