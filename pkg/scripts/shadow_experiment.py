"""Mixture vs background subtraction on the default shadowed scene."""

import argparse
import json

from pixelmix.pipeline import RunConfig, run
from pixelmix.synthetic import default_scene, generate_synthetic


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--frames", type=int, default=200)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--color-mode", type=int, default=1)
    ap.add_argument("--last", type=int, default=50)
    args = ap.parse_args()

    frames, truth = generate_synthetic(default_scene(args.frames, args.seed, args.color_mode))
    for method in ("mog-incremental", "baseline-exponential", "baseline-cumulative"):
        report = run(RunConfig(method=method), frames, truth)
        print(json.dumps(report.summary(args.last)))


if __name__ == "__main__":
    main()
