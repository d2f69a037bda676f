"""Command-line entry point: ``pixelmix {run,compare,generate,inspect}``.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .em import EmConfig
from .errors import DataError, UsageError
from .mixture import ColorMode
from .pipeline import METHODS, RunConfig, compare, inspect_pixel, run
from .sequence import write_sequence
from .synthetic import default_scene, dump_scene_spec, generate_synthetic, load_scene_spec


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _model_flags(p):
    p.add_argument("--color-mode", default=None, help="1/intensity or 3/rgb (default: from input)")
    p.add_argument("--alpha", type=float, default=0.02, help="baseline forgetting rate")
    p.add_argument("--threshold", type=float, default=2.5, help="baseline Mahalanobis threshold")
    p.add_argument("--k", type=float, default=10.0, help="prior strength (pseudo-observations)")
    p.add_argument("--em-alpha", type=float, default=0.0, help="incremental EM forgetting rate")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iterations", type=int, default=100, help="mog-batch iteration cap")
    p.add_argument("--recompute-every", type=int, default=1)
    p.add_argument("--selective-update", action="store_true")
    p.add_argument("--classify-first", action="store_true",
                   help="classify each frame before absorbing it into the model")
    p.add_argument("--eval-last", type=int, default=50,
                   help="frames at the end used for the summary footer")


def build_parser():
    parser = _Parser(prog="pixelmix", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="segment a sequence")
    p.add_argument("input", type=Path, help="sequence directory (frame_000001.pgm ...)")
    p.add_argument("--method", choices=METHODS, default="mog-incremental")
    _model_flags(p)
    p.add_argument("--out-masks", type=Path)
    p.add_argument("--out-shadowfree", type=Path)
    p.add_argument("--out-background", type=Path)
    p.add_argument("--out-metrics", type=Path)
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--checkpoint-dir", type=Path)
    p.add_argument("--resume", type=Path, help="model bank checkpoint to continue from")
    p.add_argument("--stop-after", type=int, help="last frame to process")

    p = sub.add_parser("compare", help="run two methods on one sequence")
    p.add_argument("input", type=Path)
    p.add_argument("--method-a", choices=METHODS, default="baseline-exponential")
    p.add_argument("--method-b", choices=METHODS, default="mog-incremental")
    _model_flags(p)
    p.add_argument("--out-metrics", type=Path, help="per-frame delta CSV (default: stdout)")

    p = sub.add_parser("generate", help="render a synthetic sequence with ground truth")
    p.add_argument("output", type=Path)
    p.add_argument("--spec", type=Path, help="scene spec file (key = value lines)")
    p.add_argument("--frames", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--color-mode", default=None)
    p.add_argument("--dump-spec", action="store_true", help="print the scene spec and exit")

    p = sub.add_parser("inspect", help="print one pixel of a model bank checkpoint")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("x", type=int)
    p.add_argument("y", type=int)
    p.add_argument("--csv", action="store_true")
    return parser


def _config(args, method, **extra) -> RunConfig:
    em = EmConfig(prior_strength=args.k, forgetting_alpha=args.em_alpha, seed=args.seed,
                  max_iterations=args.max_iterations, recompute_every=args.recompute_every)
    return RunConfig(method=method, input=args.input, color_mode=args.color_mode, em=em,
                     alpha=args.alpha, threshold=args.threshold,
                     selective_update=args.selective_update,
                     classify_first=args.classify_first, eval_last=args.eval_last, **extra)


def _cmd_run(args):
    cfg = _config(args, args.method, out_masks=args.out_masks,
                  out_shadowfree=args.out_shadowfree, out_background=args.out_background,
                  out_metrics=args.out_metrics, checkpoint_every=args.checkpoint_every,
                  checkpoint_dir=args.checkpoint_dir, resume=args.resume,
                  stop_after=args.stop_after)
    report = run(cfg)
    print(json.dumps(report.summary(args.eval_last), indent=1, default=str))


def _cmd_compare(args):
    result = compare(_config(args, args.method_a), _config(args, args.method_b))
    text = result.to_csv(args.eval_last)
    if args.out_metrics:
        args.out_metrics.write_text(text)
        for tag, rep in (("a", result.a), ("b", result.b)):
            print(tag, json.dumps(rep.summary(args.eval_last), default=str))
    else:
        sys.stdout.write(text)


def _cmd_generate(args):
    spec = load_scene_spec(args.spec) if args.spec else default_scene()
    if args.frames is not None:
        spec.frames = args.frames
    if args.seed is not None:
        spec.seed = args.seed
    if args.color_mode is not None:
        d = int(ColorMode.parse(args.color_mode))
        if args.spec is None:
            spec = default_scene(spec.frames, spec.seed, d)
        else:
            spec.color_mode = d
    if args.dump_spec:
        sys.stdout.write(dump_scene_spec(spec))
        return
    frames, masks = generate_synthetic(spec)
    write_sequence(args.output, frames, masks)
    (Path(args.output) / "scene.txt").write_text(dump_scene_spec(spec))
    print(f"wrote {len(frames)} frames to {args.output}")


def _cmd_inspect(args):
    sys.stdout.write(inspect_pixel(args.checkpoint, args.x, args.y, as_csv=args.csv))


COMMANDS = {"run": _cmd_run, "compare": _cmd_compare, "generate": _cmd_generate,
            "inspect": _cmd_inspect}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"pixelmix: error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"pixelmix: data error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
