"""Wall time of the incremental mixture pipeline on a 64x64 sequence."""

import argparse
import time

from pixelmix.pipeline import RunConfig, run
from pixelmix.synthetic import default_scene, generate_synthetic


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--frames", type=int, default=1000)
    ap.add_argument("--color-mode", type=int, default=1)
    args = ap.parse_args()

    frames, truth = generate_synthetic(default_scene(args.frames, color_mode=args.color_mode))
    for method in ("mog-incremental", "baseline-exponential"):
        start = time.perf_counter()
        run(RunConfig(method=method), frames, truth)
        elapsed = time.perf_counter() - start
        print(f"{method}: {args.frames} frames in {elapsed:.2f} s ({1000 * elapsed / args.frames:.2f} ms/frame)")


if __name__ == "__main__":
    main()
