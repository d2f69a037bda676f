"""Background corruption under slow traffic, swept over occupancy.

For each occupancy p the exponential background at covered pixels is
compared with (1 - p) * v_bg + p * v_obj, alongside the mixture road mean.
"""

import argparse

import numpy as np

from pixelmix.baseline import BackgroundModel, exponential_update
from pixelmix.pipeline import RunConfig, run
from pixelmix.segment import road_image
from pixelmix.synthetic import generate_synthetic, slow_object_scene


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--frames", type=int, default=1000)
    ap.add_argument("--alpha", type=float, default=0.02)
    args = ap.parse_args()

    print("occupancy,predicted,baseline_mean,mog_road_mean")
    for p in (0.1, 0.2, 0.3, 0.4, 0.5):
        frames, masks = generate_synthetic(slow_object_scene(args.frames, occupancy=p))
        bg = BackgroundModel(alpha=args.alpha)
        history = []
        for f in frames:
            bg = exponential_update(bg, f)
            history.append(bg.mean)
        steady = np.mean(history[len(history) // 2:])
        road = road_image(run(RunConfig(), frames, masks).bank).mean()
        print(f"{p},{(1 - p) * 100 + p * 220:.1f},{steady:.2f},{road:.2f}")


if __name__ == "__main__":
    main()
