"""Refinement accuracy as the AoP noise level grows, with half the pixels pi/2-flipped."""
import argparse
import sys

from pmvir.experiment import ExperimentConfig, run, summarize


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--sigmas", type=float, nargs="+", default=[0.0, 12.0, 24.0], help="noise std in degrees")
    p.add_argument("--ambiguity", type=float, default=0.5)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--size", type=int, default=256)
    args = p.parse_args(argv)

    print("sigma_deg\tseed\tfinal\taccuracy\tcompleteness\tseconds")
    acc = {}
    for sigma in args.sigmas:
        for seed in args.seeds:
            r = run(ExperimentConfig(size=args.size, ambiguity=args.ambiguity, sigma_deg=sigma, seed=seed))
            acc.setdefault(sigma, []).append(r.accuracy)
            print(f"{sigma:g}\t{seed}\t{r.final_distance:.6f}\t{r.accuracy:.6f}\t{r.completeness:.6f}\t"
                  f"{r.seconds:.1f}", flush=True)
    clean = summarize(acc[args.sigmas[0]])[0]
    for sigma, values in acc.items():
        mean, sem = summarize(values)
        print(f"# sigma {sigma:g}: accuracy {mean:.6f} +/- {sem:.6f} ({mean / clean - 1:+.1%})", file=sys.stderr)


if __name__ == "__main__":
    main()
