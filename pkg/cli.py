"""
Command-line surface for the ASGNet desk toolkit
forward | metrics | selfcheck | gradcheck | init-weights
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from config import GRAD_TOLERANCE, LOG_LEVEL, METRIC_WORKERS
from errors import AsgnetError, FormatError
from metrics import evaluate_dir
from network import forward, graph_layout
from params import count_parameters, init_params
from run_config import apply_ablations, load_run_config
from selfcheck import gradient_check, run_selfcheck
from tensor_io import load_weights, read_image, save_weights, write_image, write_stage_dump
from tensor_ops import activate, resize_bilinear

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2


class UsageError(Exception):
    pass


class ArgumentParser(argparse.ArgumentParser):
    """argparse that reports usage problems as exit code 1"""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise UsageError(message)


def _split_names(value: str):
    return [name for name in value.split(",") if name.strip()]


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="asgnet", description="ASGNet desk toolkit")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    fwd = sub.add_parser("forward", help="segment one image")
    fwd.add_argument("--in", dest="input", required=True, type=Path, help="P5/P6 input image")
    fwd.add_argument("--weights", required=True, type=Path)
    fwd.add_argument("--out", required=True, type=Path, help="P5 mask to write")
    fwd.add_argument("--config", type=Path)
    fwd.add_argument("--ablate", type=_split_names, default=[], help="comma-separated branches to disable")
    fwd.add_argument("--dump-stages", type=Path, help="directory for every stage tensor")
    fwd.add_argument("--binary", action="store_true", help="write the thresholded mask")

    met = sub.add_parser("metrics", help="evaluate predictions against ground truth")
    met.add_argument("--pred", required=True, type=Path)
    met.add_argument("--gt", required=True, type=Path)
    met.add_argument("--report", type=Path, help="write one line per image here")
    met.add_argument("--threshold", type=float)
    met.add_argument("--workers", type=int, default=METRIC_WORKERS)

    sub.add_parser("selfcheck", help="run the invariant suite")

    grad = sub.add_parser("gradcheck", help="compare loss gradients with finite differences")
    grad.add_argument("--trials", type=int, default=20)
    grad.add_argument("--seed", type=int)

    init = sub.add_parser("init-weights", help="write freshly initialized weights")
    init.add_argument("--seed", type=int)
    init.add_argument("--out", required=True, type=Path)
    init.add_argument("--config", type=Path)
    return parser


def _configure_logging(verbosity: int) -> None:
    level = {0: LOG_LEVEL, 1: "INFO"}.get(verbosity, "DEBUG")
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def _as_rgb(image: np.ndarray) -> np.ndarray:
    if image.shape[1] == 1:
        return np.repeat(image, 3, axis=1)
    return image


def cmd_forward(args) -> int:
    cfg = apply_ablations(load_run_config(args.config), args.ablate)
    layout = graph_layout(cfg.encoder_config())
    params = load_weights(args.weights, layout)

    image = _as_rgb(read_image(args.input))
    h, w = image.shape[2:]
    size = cfg.input_size
    if (h, w) != (size, size):
        logger.info("resizing input from %dx%d to %dx%d", h, w, size, size)
        image = resize_bilinear(image, size, size)

    pyramid = forward(image, params, cfg.flags, cfg.fft_method)
    mask = activate(resize_bilinear(pyramid.predictions[2], h, w), "sigmoid")
    if args.binary:
        mask = (mask >= cfg.threshold).astype(np.float32)
    write_image(mask, args.out)

    if args.dump_stages:
        summary = {
            "input": str(args.input),
            "source_size": [h, w],
            "config": cfg.to_dict(),
            "parameters": count_parameters(layout),
        }
        write_stage_dump(pyramid.tensors(), args.dump_stages, summary)
    print(f"wrote {args.out} ({h}x{w})")
    return EXIT_OK


def cmd_metrics(args) -> int:
    threshold = args.threshold if args.threshold is not None else load_run_config().threshold
    report = evaluate_dir(args.pred, args.gt, threshold, max(1, args.workers))
    print(report.to_text())
    if args.report:
        args.report.write_text("".join(line + "\n" for line in report.to_lines()), encoding="utf-8")
        logger.info("wrote report to %s", args.report)
    return EXIT_OK


def cmd_selfcheck(args) -> int:
    results = run_selfcheck()
    for result in results:
        status = "pass" if result.passed else "FAIL"
        print(f"[{status}] {result.name}: {result.detail}")
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} checks passed")
    return EXIT_OK if passed == len(results) else EXIT_INVALID


def cmd_gradcheck(args) -> int:
    seed = args.seed if args.seed is not None else load_run_config().seed
    frame = gradient_check(trials=args.trials, seed=seed)
    summary = frame.groupby("loss", sort=False)["rel_error"].max()
    for loss, error in summary.items():
        print(f"{loss}: max relative error {error:.3e}")
    ok = bool(frame["passed"].all())
    print(f"{int(frame['passed'].sum())}/{len(frame)} instances within {GRAD_TOLERANCE:g}")
    return EXIT_OK if ok else EXIT_INVALID


def cmd_init_weights(args) -> int:
    cfg = load_run_config(args.config)
    seed = args.seed if args.seed is not None else cfg.seed
    layout = graph_layout(cfg.encoder_config())
    save_weights(init_params(layout, seed), args.out)
    logger.info("graph has %d learnable scalars", count_parameters(layout))
    print(f"wrote {args.out} ({count_parameters(layout)} parameters, seed {seed})")
    return EXIT_OK


COMMANDS = {
    "forward": cmd_forward,
    "metrics": cmd_metrics,
    "selfcheck": cmd_selfcheck,
    "gradcheck": cmd_gradcheck,
    "init-weights": cmd_init_weights,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run one subcommand.

    Returns:
        int: 0 on success, 1 on usage or validation failure, 2 on I/O or format errors
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError:
        return EXIT_INVALID
    _configure_logging(args.verbose)
    try:
        return COMMANDS[args.command](args)
    except (FormatError, OSError) as err:
        logger.error("%s", err)
        return EXIT_IO
    except AsgnetError as err:
        logger.error("%s", err)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
