"""A/B and ablation arm orchestration shared by the CLI and the acceptance
suite.

Arms differ only in which suppression mechanism is active: the vanilla arm
turns off both the regularizer (lambda_c = 0) and pruning (tau = inf and
alpha_min = 0 disable both clauses of the removal predicate).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .dataset import DatasetManifest
from .metrics import psnr, removal_metrics, ssim
from .rasterizer import RasterConfig, render
from .scene import SceneModel
from .training import TrainConfig, TrainReport, train

ARM_NAMES = ("vanilla", "reg_only", "prune_only", "combined")


def arm_config(base: TrainConfig, arm: str) -> TrainConfig:
    if arm == "vanilla":
        return replace(base, lambda_c=0.0, tau=math.inf, alpha_min=0.0)
    if arm == "reg_only":
        return replace(base, tau=math.inf, alpha_min=0.0)
    if arm == "prune_only":
        return replace(base, lambda_c=0.0)
    if arm == "combined":
        return replace(base)
    raise ValueError(f"unknown arm '{arm}'")


@dataclass
class ArmResult:
    arm: str
    seed: int
    report: TrainReport
    scene: SceneModel
    psnr: float
    ssim: float
    removal_rate: float
    static_retention: float

    def summary_row(self) -> dict:
        return {
            "arm": self.arm,
            "seed": self.seed,
            "psnr": self.psnr,
            "ssim": self.ssim,
            "removal_rate": self.removal_rate,
            "static_retention": self.static_retention,
            "primitive_count": len(self.scene),
            "pruned_total": int(sum(e.removed for e in self.report.prune_events)),
        }


def evaluate_scene(scene: SceneModel, dataset: DatasetManifest, split: str = "test",
                   ) -> tuple[float, float, list[dict]]:
    """Mean PSNR/SSIM of the scene's renders against stored images."""
    raster = RasterConfig(background=tuple(dataset.world.background))
    views = dataset.test_views if split == "test" else dataset.train_views
    rows = []
    for record in views:
        target = dataset.load_image(record)
        image, _ = render(scene, record.camera, raster)
        rows.append({"view_id": record.view_id,
                     "psnr": psnr(image, target),
                     "ssim": ssim(image, target)})
    mean_psnr = float(np.mean([r["psnr"] for r in rows]))
    mean_ssim = float(np.mean([r["ssim"] for r in rows]))
    return mean_psnr, mean_ssim, rows


def run_arm(arm: str, base: TrainConfig, dataset: DatasetManifest, seed: int | None = None,
            ) -> ArmResult:
    cfg = arm_config(base, arm)
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    report, scene = train(cfg, dataset)
    mean_psnr, mean_ssim, _ = evaluate_scene(scene, dataset)
    removal, retention = removal_metrics(scene, report.pruned_centers(), dataset)
    return ArmResult(arm=arm, seed=cfg.seed, report=report, scene=scene,
                     psnr=mean_psnr, ssim=mean_ssim,
                     removal_rate=removal, static_retention=retention)


def write_summary(rows: list[dict], out_dir: str | Path) -> tuple[Path, Path]:
    """Consolidated summary: CSV plus a plain-text table."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "summary.csv"
    fieldnames = ["arm", "seed", "psnr", "ssim", "removal_rate",
                  "static_retention", "primitive_count", "pruned_total"]
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in fieldnames})

    txt_path = out / "summary.txt"
    with open(txt_path, "w", encoding="utf-8") as fh:
        fh.write(f"{'arm':<12}{'seed':>6}{'psnr':>9}{'ssim':>8}{'removal':>9}{'retain':>8}{'count':>7}\n")
        for row in rows:
            fh.write(f"{row['arm']:<12}{row['seed']:>6}{row['psnr']:>9.3f}{row['ssim']:>8.4f}"
                     f"{row['removal_rate']:>9.3f}{row['static_retention']:>8.4f}"
                     f"{row['primitive_count']:>7}\n")
    return csv_path, txt_path
