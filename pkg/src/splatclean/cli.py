"""Operator command line: generate | train | calibrate | evaluate | render | report.

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 runtime or
training failure. Set SPLATCLEAN_LOG=debug|info|warning to control verbosity.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import figures, ppm
from .dataset import GeneratorSpec, generate_synthetic, load_dataset
from .errors import TrainingError, ValidationError
from .experiments import ARM_NAMES, evaluate_scene, run_arm, write_summary
from .metrics import removal_metrics
from .pruning import calibrate_threshold
from .rasterizer import RasterConfig, render
from .scene import SceneModel
from .training import TrainConfig, TrainReport, load_config, save_config, train

log = logging.getLogger("splatclean")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; the CLI contract wants 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _setup_logging() -> None:
    level = os.environ.get("SPLATCLEAN_LOG", "info").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")


def _add_train_config_flags(parser: argparse.ArgumentParser) -> None:
    # Flags mirror TrainConfig field names one-to-one.
    for f in fields(TrainConfig):
        flag = "--" + f.name.replace("_", "-")
        if str(f.type) == "int":
            parser.add_argument(flag, type=int, default=None)
        elif str(f.type) == "float":
            parser.add_argument(flag, type=float, default=None)
        else:
            parser.add_argument(flag, type=str, default=None)


def _config_from_args(args: argparse.Namespace) -> TrainConfig:
    overrides = {}
    for f in fields(TrainConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            overrides[f.name] = value
    if args.config:
        return load_config(args.config, overrides)
    cfg = TrainConfig(**overrides)
    cfg.validate()
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="splatclean",
                     description="Semantic-guided transient suppression for 2D Gaussian splatting")
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="render a synthetic benchmark to disk")
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--train-views", type=int, default=40)
    p_gen.add_argument("--test-views", type=int, default=8)
    p_gen.add_argument("--image-size", type=int, default=64)
    p_gen.add_argument("--contamination", type=float, default=0.25)
    p_gen.add_argument("--static-blobs", type=int, default=45)
    p_gen.add_argument("--sprite-radius", type=float, default=0.07)
    p_gen.add_argument("--hard-mode", action="store_true")

    p_train = sub.add_parser("train", help="optimize a scene against a dataset")
    p_train.add_argument("--dataset", required=True)
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--config", default=None, help="flat key=value config file")
    _add_train_config_flags(p_train)

    p_cal = sub.add_parser("calibrate", help="suggest a pruning threshold from a checkpoint")
    p_cal.add_argument("--checkpoint", required=True)
    p_cal.add_argument("--target-fraction", type=float, default=0.038)
    p_cal.add_argument("--tau", type=float, default=None,
                       help="also sanity-check this threshold against the score range")
    p_cal.add_argument("--out", required=True)

    p_eval = sub.add_parser("evaluate", help="score a checkpoint against held-out views")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--dataset", required=True)
    p_eval.add_argument("--baseline", default=None, help="second checkpoint to compare against")
    p_eval.add_argument("--report", default=None, help="train report JSON for removal metrics")
    p_eval.add_argument("--split", choices=("train", "test"), default="test")
    p_eval.add_argument("--out", default=None)

    p_render = sub.add_parser("render", help="write PPM renders from a checkpoint")
    p_render.add_argument("--checkpoint", required=True)
    p_render.add_argument("--dataset", required=True)
    p_render.add_argument("--out", required=True)
    p_render.add_argument("--views", default=None, help="comma-separated view ids (default: all)")

    p_rep = sub.add_parser("report", help="consolidated A/B summary across trained arms")
    p_rep.add_argument("--dataset", required=True)
    p_rep.add_argument("--out", required=True)
    p_rep.add_argument("--runs", nargs="+", required=True,
                       help="run directories produced by the train command")

    return parser


def cmd_generate(args) -> int:
    spec = GeneratorSpec(
        train_views=args.train_views, test_views=args.test_views,
        image_size=args.image_size, contamination=args.contamination,
        static_blobs=args.static_blobs, sprite_radius=args.sprite_radius,
        hard_mode=args.hard_mode,
    )
    manifest = generate_synthetic(spec, args.seed, args.out)
    flagged = sum(1 for v in manifest.train_views if v.has_transient)
    log.info("generated %d train views (%d contaminated) + %d test views at %s",
             len(manifest.train_views), flagged, len(manifest.test_views), args.out)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    dataset = load_dataset(args.dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report, scene = train(cfg, dataset, out_dir=out)
    scene.save(out / "checkpoint.npz")
    (out / "train_report.json").write_text(report.to_json(), encoding="utf-8")
    report.write_log_csv(out / "training_log.csv")
    save_config(cfg, out / "config.txt")
    log.info("trained %d iterations, %d primitives, test PSNR %.3f dB",
             cfg.iterations, len(scene), report.final_metrics.get("test_psnr", float("nan")))
    return EXIT_OK


def cmd_calibrate(args) -> int:
    scene = SceneModel.load(args.checkpoint)
    scores = scene.normalized_scores()
    result = calibrate_threshold(scores, args.target_fraction, check_tau=args.tau)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    with open(out / "deciles.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["quantile", "score"])
        for i, value in enumerate(result.deciles, start=1):
            writer.writerow([i * 10, value])

    lines = [
        f"primitives: {len(scene)}",
        f"positive-score primitives: {result.positive_count}",
        f"score range: [{result.score_min:.6f}, {result.score_max:.6f}]",
        f"target prune fraction: {result.target_fraction:.4f}",
    ]
    if result.no_distractors:
        lines.append("no distractors detected: every normalized score is zero")
    else:
        lines.append(f"suggested tau: {result.tau:.6f} (prunes {result.expected_pruned} primitives)")
    if result.negligible_pruning_warning:
        lines.append(f"warning: tau {args.tau} exceeds the maximum observed score "
                     f"({result.score_max:.6f}); the semantic clause would prune nothing")
    (out / "calibration.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    figures.score_histogram_figure(scores, result.tau, out / "score_histogram.png")
    for line in lines:
        log.info("%s", line)
    return EXIT_OK


def _removal_for(args, dataset, scene) -> tuple[float, float] | None:
    if not args.report:
        return None
    report = TrainReport.from_json(Path(args.report).read_text(encoding="utf-8"))
    return removal_metrics(scene, report.pruned_centers(), dataset)


def cmd_evaluate(args) -> int:
    dataset = load_dataset(args.dataset)
    scene = SceneModel.load(args.checkpoint)
    mean_psnr, mean_ssim, rows = evaluate_scene(scene, dataset, args.split)
    lines = [f"checkpoint: {args.checkpoint}",
             f"split: {args.split} ({len(rows)} views)",
             f"psnr: {mean_psnr:.4f} dB",
             f"ssim: {mean_ssim:.5f}"]
    removal = _removal_for(args, dataset, scene)
    if removal is not None:
        lines.append(f"distractor_removal_rate: {removal[0]:.4f}")
        lines.append(f"static_retention: {removal[1]:.4f}")
    if args.baseline:
        base_scene = SceneModel.load(args.baseline)
        base_psnr, base_ssim, _ = evaluate_scene(base_scene, dataset, args.split)
        lines.append(f"baseline: {args.baseline}")
        lines.append(f"baseline psnr: {base_psnr:.4f} dB (delta {mean_psnr - base_psnr:+.4f})")
        lines.append(f"baseline ssim: {base_ssim:.5f} (delta {mean_ssim - base_ssim:+.5f})")
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.txt").write_text(text, encoding="utf-8")
        with open(out / "per_view.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=["view_id", "psnr", "ssim"])
            writer.writeheader()
            writer.writerows(rows)
    return EXIT_OK


def cmd_render(args) -> int:
    dataset = load_dataset(args.dataset)
    scene = SceneModel.load(args.checkpoint)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    raster = RasterConfig(background=tuple(dataset.world.background))
    wanted = args.views.split(",") if args.views else [v.view_id for v in dataset.views]
    for view_id in wanted:
        record = dataset.view(view_id)
        image, _ = render(scene, record.camera, raster)
        ppm.write_ppm(out / f"{view_id}.ppm", image)
    log.info("wrote %d renders to %s", len(wanted), out)
    return EXIT_OK


def cmd_report(args) -> int:
    dataset = load_dataset(args.dataset)
    rows = []
    loss_rows_for_fig = None
    for run_dir in args.runs:
        run = Path(run_dir)
        scene = SceneModel.load(run / "checkpoint.npz")
        report_path = run / "train_report.json"
        if not report_path.exists():
            raise ValidationError(f"run {run} lacks train_report.json")
        report = TrainReport.from_json(report_path.read_text(encoding="utf-8"))
        mean_psnr, mean_ssim, _ = evaluate_scene(scene, dataset)
        removal, retention = removal_metrics(scene, report.pruned_centers(), dataset)
        rows.append({
            "arm": run.name, "seed": report.seed, "psnr": mean_psnr, "ssim": mean_ssim,
            "removal_rate": removal, "static_retention": retention,
            "primitive_count": len(scene),
            "pruned_total": int(sum(e.removed for e in report.prune_events)),
        })
        loss_rows_for_fig = report.loss_rows
    csv_path, txt_path = write_summary(rows, args.out)
    out = Path(args.out)
    figures.arm_comparison_figure(rows, out / "arm_comparison.png")
    if loss_rows_for_fig:
        figures.loss_curve_figure(loss_rows_for_fig, out / "loss_curve.png")
    print((Path(txt_path)).read_text(encoding="utf-8"), end="")
    log.info("report written to %s", csv_path.parent)
    return EXIT_OK


_COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "calibrate": cmd_calibrate,
    "evaluate": cmd_evaluate,
    "render": cmd_render,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingError as exc:
        print(f"training failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
