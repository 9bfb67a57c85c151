"""CLI router with subparsers for odoscale commands."""

from __future__ import annotations

import argparse
import io
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from odoscale import __version__, debug, set_debug

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARSE = 2
EXIT_NUMERIC = 3


class ArgumentParser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parse_lengths(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid length list '{text}': expected comma-separated meters") from None


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer '{text}'") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _write_text(out: str | None, text: str) -> None:
    """Write to a file, or stdout when out is None or '-'."""
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _render_to_string(emit, value) -> str:
    buf = io.StringIO()
    emit(value, buf)
    return buf.getvalue()


def _sequence_name(pred_path: str, index: int, taken: set[str]) -> str:
    name = Path(pred_path).stem or f"seq{index}"
    if name in taken:
        name = f"{name}#{index}"
    taken.add(name)
    return name


# =============================================================================
# Command Handlers
# =============================================================================


def cmd_evaluate(args: argparse.Namespace) -> int:
    """Score predicted sequences against ground truth."""
    from odoscale.core.curation import scale_alignment
    from odoscale.core.formats import file_digest, read_relatives
    from odoscale.core.metrics import EvalConfig, aggregate_reports, evaluate_sequence
    from odoscale.core.report import RunReport, SequenceResult, render

    if len(args.gt) != len(args.pred):
        print(
            f"Error: got {len(args.gt)} --gt and {len(args.pred)} --pred files; they pair up positionally",
            file=sys.stderr,
        )
        return EXIT_USAGE

    cfg = EvalConfig(lengths=args.lengths, start_stride=args.stride, epsilon=args.epsilon)
    started = time.perf_counter()

    def evaluate_pair(pair: tuple[str, str]):
        gt_path, pred_path = pair
        gt_rels = read_relatives(gt_path)
        pred_rels = read_relatives(pred_path)
        substituted: tuple[int, ...] = ()
        if args.align == "scale-per-frame":
            pred_rels, substituted = scale_alignment(gt_rels, pred_rels, cfg.epsilon)
        return evaluate_sequence(gt_rels, pred_rels, cfg), substituted

    pairs = list(zip(args.gt, args.pred))
    if args.workers > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            outcomes = list(pool.map(evaluate_pair, pairs))
    else:
        outcomes = [evaluate_pair(pair) for pair in pairs]

    taken: set[str] = set()
    sequences = tuple(
        SequenceResult(_sequence_name(pred, i, taken), gt, pred, report, substituted)
        for i, ((gt, pred), (report, substituted)) in enumerate(zip(pairs, outcomes))
    )
    elapsed = time.perf_counter() - started
    debug(f"Evaluated {len(sequences)} sequences in {elapsed:.3f}s")

    run = RunReport(
        sequences=sequences,
        average=aggregate_reports([s.report for s in sequences]),
        inputs={path: file_digest(path) for path in dict.fromkeys([*args.gt, *args.pred])},
        config={**cfg.to_dict(), "align": args.align},
        timing={"seconds": elapsed} if args.timing else None,
    )
    _write_text(args.out, render(run, args.format))
    return EXIT_OK


def cmd_filter(args: argparse.Namespace) -> int:
    """Score prediction entropies and split them at tau."""
    from odoscale.core.curation import EntropyConfig, FilterConfig, filter_by_entropy, score_entropy
    from odoscale.core.fisher import MonteCarloConfig
    from odoscale.core.formats import file_digest, read_predictions, write_manifest

    entropy_cfg = EntropyConfig(method=args.method, mc=MonteCarloConfig(samples=args.samples, seed=args.seed))
    filter_cfg = FilterConfig(tau_u=args.tau)
    to_stdout = args.out == "-"
    if to_stdout and args.rejected is None:
        print("Error: --out - needs an explicit --rejected path", file=sys.stderr)
        return EXIT_USAGE
    rejected_path = args.rejected or _default_rejected_path(args.out)

    records = read_predictions(args.pred)
    scored = score_entropy(records, entropy_cfg, workers=args.workers)
    provenance = {
        "inputs": {args.pred: file_digest(args.pred)},
        "entropy": entropy_cfg.to_dict(),
    }
    kept, rejected = filter_by_entropy(scored, filter_cfg, provenance)

    _write_text(args.out, _render_to_string(write_manifest, kept))
    _write_text(rejected_path, _render_to_string(write_manifest, rejected))
    print(
        f"kept {len(kept)}/{len(scored)} records (tau_u={args.tau:g}); rejected written to {rejected_path}",
        file=sys.stderr if to_stdout else sys.stdout,
    )
    return EXIT_OK


def _default_rejected_path(out: str) -> str:
    path = Path(out)
    return str(path.with_name(f"{path.stem}.rejected{path.suffix}"))


def _read_labeled(path: str):
    from odoscale.core.curation import manifest_from_poses
    from odoscale.core.formats import ParseError, file_digest, read_manifest_file, read_relatives, sniff_format

    lines = Path(path).read_text(encoding="utf-8").splitlines()
    try:
        kind = sniff_format(lines)
    except ParseError as e:
        raise e.with_path(path) from None
    if kind == "manifest":
        return read_manifest_file(path)
    return manifest_from_poses(read_relatives(path), provenance={"inputs": {path: file_digest(path)}})


def cmd_mix(args: argparse.Namespace) -> int:
    """Join a labeled set with a filtered pseudo-label manifest."""
    from odoscale.core.curation import mix_datasets
    from odoscale.core.formats import read_manifest_file, write_manifest

    labeled = _read_labeled(args.labeled)
    pseudo = read_manifest_file(args.pseudo)
    mixed = mix_datasets(labeled, pseudo)

    _write_text(args.out, _render_to_string(write_manifest, mixed))
    counts = mixed.provenance["counts"]
    print(f"mixed {counts['labeled']} labeled + {counts['pseudo']} pseudo = {counts['total']} records")
    return EXIT_OK


def cmd_align(args: argparse.Namespace) -> int:
    """Write the prediction rescaled to ground-truth translation norms."""
    from odoscale.core.curation import scale_alignment
    from odoscale.core.formats import emit_kitti_poses, read_relatives
    from odoscale.core.pose import compose_trajectory

    alignment = scale_alignment(read_relatives(args.gt), read_relatives(args.pred), args.epsilon)
    traj = compose_trajectory(alignment.poses)
    _write_text(args.out, _render_to_string(emit_kitti_poses, traj))
    if args.out not in (None, "-"):
        print(f"aligned {len(alignment.poses)} frames ({len(alignment.substituted)} substituted)")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    """Generate a ground-truth pose file and a matching prediction file."""
    from odoscale.core.formats import emit_kitti_poses, emit_predictions
    from odoscale.core.synth import (
        DEFAULT_FRAMES,
        DEFAULT_STEP,
        SHAPE_ALIASES,
        ZIGZAG_FRAMES,
        ZIGZAG_SHAPE,
        ZIGZAG_STEP,
        SynthSpec,
        synthesize,
    )

    zigzag = SHAPE_ALIASES.get(args.shape, args.shape) == ZIGZAG_SHAPE
    spec = SynthSpec(
        shape=args.shape,
        frame_count=args.frames if args.frames is not None else (ZIGZAG_FRAMES if zigzag else DEFAULT_FRAMES),
        step_meters=args.step if args.step is not None else (ZIGZAG_STEP if zigzag else DEFAULT_STEP),
        scale_noise=args.scale_noise,
        rotation_jitter=args.rot_jitter,
        seed=args.seed,
        concentration=args.concentration,
        schedule=args.schedule,
    )
    debug(f"Synthesizing {spec.to_dict()}")
    result = synthesize(spec)

    _write_text(args.gt, _render_to_string(emit_kitti_poses, result.gt))
    _write_text(args.pred, _render_to_string(emit_predictions, result.predictions))
    print(f"wrote {spec.frame_count} poses to {args.gt} and {len(result.predictions)} predictions to {args.pred} (seed {spec.seed})")
    return EXIT_OK


def cmd_plot(args: argparse.Namespace) -> int:
    """Plot ground truth and predictions in the x-z plane."""
    from odoscale.core.formats import read_trajectory
    from odoscale.core.plot import plot_trajectories

    gt = read_trajectory(args.gt)
    preds = [(Path(path).stem, read_trajectory(path)) for path in args.pred]
    plot_trajectories(gt, preds, args.out)
    return EXIT_OK


def _run(args: argparse.Namespace) -> int:
    """Call the handler, mapping library errors onto exit codes."""
    from odoscale.core.formats import ParseError

    try:
        return args.func(args)
    except ParseError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except ArithmeticError as e:
        print(f"Error: numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE


def build_parser() -> ArgumentParser:
    from odoscale.core.curation import DEFAULT_TAU_U
    from odoscale.core.fisher import DEFAULT_MC_SAMPLES, DEFAULT_SEED, METHODS
    from odoscale.core.metrics import DEFAULT_EPSILON, DEFAULT_LENGTHS, DEFAULT_STRIDE
    from odoscale.core.report import FORMATS
    from odoscale.core.synth import DEFAULT_CONCENTRATION, SCHEDULES, SHAPE_ALIASES, SHAPES

    parser = ArgumentParser(
        prog="odoscale",
        description="Scale-aware visual odometry evaluation and pseudo-label curation",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument(
        "--version",
        action="version",
        version=f"%(prog)s {__version__}",
    )

    common = ArgumentParser(add_help=False)
    common.add_argument(
        "--debug",
        action="store_true",
        help="Enable debug output",
    )

    subparsers = parser.add_subparsers(dest="command", required=True)

    # odoscale evaluate
    evaluate_parser = subparsers.add_parser(
        "evaluate",
        parents=[common],
        help="Compute t_rel, r_rel and scale error",
        description="Score one or more predicted sequences; --gt and --pred pair up positionally.",
    )
    evaluate_parser.add_argument("--gt", action="append", required=True, help="Ground-truth pose file (repeatable)")
    evaluate_parser.add_argument("--pred", action="append", required=True, help="Predicted pose or prediction file (repeatable)")
    evaluate_parser.add_argument(
        "--lengths",
        type=_parse_lengths,
        default=DEFAULT_LENGTHS,
        help="Comma-separated subsequence lengths in meters (default: 100,200,...,800)",
    )
    evaluate_parser.add_argument("--stride", type=int, default=DEFAULT_STRIDE, help="Start frame stride (default: 1)")
    evaluate_parser.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON, help="Scale-error epsilon in meters (default: 1e-6)")
    evaluate_parser.add_argument(
        "--align",
        choices=["none", "scale-per-frame"],
        default="none",
        help="Rescale predicted translations to ground-truth norms before scoring",
    )
    evaluate_parser.add_argument("--format", choices=FORMATS, default="human", help="Report format (default: human)")
    evaluate_parser.add_argument("--out", help="Report path (default: stdout)")
    evaluate_parser.add_argument("--workers", type=_positive_int, default=1, help="Sequences evaluated concurrently")
    evaluate_parser.add_argument("--timing", action="store_true", help="Include wall-clock timing in the report")
    evaluate_parser.set_defaults(func=cmd_evaluate)

    # odoscale filter
    filter_parser = subparsers.add_parser(
        "filter",
        parents=[common],
        help="Keep predictions whose rotation entropy is below tau",
        description="Score Matrix Fisher entropies and write kept and rejected manifests.",
    )
    filter_parser.add_argument("--pred", required=True, help="Prediction file (id + 12 pose + 9 Psi fields)")
    filter_parser.add_argument("--tau", type=float, default=DEFAULT_TAU_U, help="Entropy threshold (default: -5.668)")
    filter_parser.add_argument("--seed", type=int, default=DEFAULT_SEED, help="Monte Carlo seed (default: 0)")
    filter_parser.add_argument("--samples", type=_positive_int, default=DEFAULT_MC_SAMPLES, help="Monte Carlo samples per record")
    filter_parser.add_argument("--method", choices=METHODS, default="mc", help="Entropy estimator (default: mc)")
    filter_parser.add_argument("--out", required=True, help="Kept manifest path ('-' for stdout, needs --rejected)")
    filter_parser.add_argument("--rejected", help="Rejected manifest path (default: <out>.rejected<ext>)")
    filter_parser.add_argument("--workers", type=_positive_int, default=1, help="Records scored concurrently")
    filter_parser.set_defaults(func=cmd_filter)

    # odoscale mix
    mix_parser = subparsers.add_parser(
        "mix",
        parents=[common],
        help="Join labeled data with filtered pseudo labels",
        description="Concatenate a labeled pose file or manifest with a pseudo-label manifest.",
    )
    mix_parser.add_argument("--labeled", required=True, help="Labeled pose file or manifest")
    mix_parser.add_argument("--pseudo", required=True, help="Pseudo-label manifest (output of filter)")
    mix_parser.add_argument("--out", required=True, help="Mixed manifest path")
    mix_parser.set_defaults(func=cmd_mix)

    # odoscale align
    align_parser = subparsers.add_parser(
        "align",
        parents=[common],
        help="Rescale a prediction to ground-truth translation norms",
        description="Write the per-frame scale-aligned prediction as a pose file.",
    )
    align_parser.add_argument("--gt", required=True, help="Ground-truth pose file")
    align_parser.add_argument("--pred", required=True, help="Predicted pose or prediction file")
    align_parser.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON, help="Norm below which a translation has no direction")
    align_parser.add_argument("--out", help="Aligned pose file (default: stdout)")
    align_parser.set_defaults(func=cmd_align)

    # odoscale synth
    synth_parser = subparsers.add_parser(
        "synth",
        parents=[common],
        help="Generate synthetic ground truth and predictions",
        description="Write a ground-truth pose file and a prediction file with Psi = concentration * R_pred.",
    )
    synth_parser.add_argument("--shape", choices=(*SHAPES, *SHAPE_ALIASES), default="straight", help="Trajectory shape (default: straight)")
    synth_parser.add_argument("--frames", type=int, help="Number of poses (default: 101, zigzag 6)")
    synth_parser.add_argument("--step", type=float, help="Step length in meters (default: 1, zigzag 20)")
    synth_parser.add_argument("--scale-noise", type=float, default=0.0, help="Translations scaled by 1 + this factor")
    synth_parser.add_argument("--rot-jitter", type=float, default=0.0, help="Per-frame rotation jitter in radians")
    synth_parser.add_argument("--seed", type=int, default=0, help="Random seed (default: 0)")
    synth_parser.add_argument("--concentration", type=float, default=DEFAULT_CONCENTRATION, help="Psi scale s in Psi = s * R_pred")
    synth_parser.add_argument("--schedule", choices=SCHEDULES, default="none", help="Fixed zigzag prediction schedule")
    synth_parser.add_argument("--gt", required=True, help="Ground-truth pose file to write")
    synth_parser.add_argument("--pred", required=True, help="Prediction file to write")
    synth_parser.set_defaults(func=cmd_synth)

    # odoscale plot
    plot_parser = subparsers.add_parser(
        "plot",
        parents=[common],
        help="Plot trajectories as SVG",
        description="Top-down (x-z) plot of ground truth and predictions with start marker and scale bar.",
    )
    plot_parser.add_argument("--gt", required=True, help="Ground-truth pose file")
    plot_parser.add_argument("--pred", action="append", default=[], help="Predicted pose or prediction file (repeatable)")
    plot_parser.add_argument("--out", required=True, help="SVG path")
    plot_parser.set_defaults(func=cmd_plot)

    return parser


def main(argv: list[str] | None = None) -> int:
    """Main entry point for odoscale CLI."""
    parser = build_parser()
    args = parser.parse_args(argv)

    if getattr(args, "debug", False):
        set_debug(True)
        debug(f"odoscale v{__version__} {args.command}")

    return _run(args)


if __name__ == "__main__":
    raise SystemExit(main())
