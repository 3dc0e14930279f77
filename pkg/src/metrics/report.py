"""
Evaluation Reports
==================

CSV columns: frame_index, psnr, ssim, aepe (empty when not measured)
JSON: frame count, mean psnr / ssim / aepe, exact-match count, crop flag
"""

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Union

import imageio.v3 as iio
import numpy as np

from src.common.errors import InputError
from src.metrics.quality import crop_eval_region, is_exact_match, psnr, ssim

PathLike = Union[str, Path]


@dataclass
class FrameScore:
    frame_index: int
    psnr: float
    ssim: float
    aepe: Optional[float] = None
    exact_match: bool = False


@dataclass
class EvalReport:
    """Per-frame scores and their means."""
    frames: List[FrameScore] = field(default_factory=list)
    cropped: bool = True

    def add(self, score: FrameScore):
        self.frames.append(score)

    @property
    def mean_psnr(self) -> float:
        return float(np.mean([f.psnr for f in self.frames])) if self.frames else float('nan')

    @property
    def mean_ssim(self) -> float:
        return float(np.mean([f.ssim for f in self.frames])) if self.frames else float('nan')

    @property
    def mean_aepe(self) -> Optional[float]:
        values = [f.aepe for f in self.frames if f.aepe is not None and np.isfinite(f.aepe)]
        return float(np.mean(values)) if values else None

    def summary(self) -> dict:
        return {
            'frames': len(self.frames),
            'mean_psnr': self.mean_psnr,
            'mean_ssim': self.mean_ssim,
            'mean_aepe': self.mean_aepe,
            'exact_matches': sum(1 for f in self.frames if f.exact_match),
            'cropped': self.cropped,
        }

    def to_csv(self, path: PathLike):
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(['frame_index', 'psnr', 'ssim', 'aepe'])
            for score in self.frames:
                writer.writerow([score.frame_index, f"{score.psnr:.6f}", f"{score.ssim:.6f}",
                                 '' if score.aepe is None else f"{score.aepe:.6f}"])

    def to_json(self, path: PathLike):
        payload = self.summary()
        payload['per_frame'] = [asdict(score) for score in self.frames]
        with open(path, 'w') as f:
            json.dump(payload, f, indent=2)


def score_frame(index: int, pred: np.ndarray, gt: np.ndarray, crop: bool = True,
                aepe_value: Optional[float] = None) -> FrameScore:
    """PSNR / SSIM of one prediction, optionally inside the evaluation crop."""
    if crop:
        pred, gt = crop_eval_region(pred), crop_eval_region(gt)
    return FrameScore(index, psnr(pred, gt), ssim(pred, gt), aepe_value, is_exact_match(pred, gt))


def read_frame(path: PathLike) -> np.ndarray:
    """8-bit image to float RGB in [0, 1]."""
    image = np.asarray(iio.imread(path))
    if image.ndim == 2:
        image = np.stack([image] * 3, axis=-1)
    return image[..., :3].astype(np.float64) / 255.0


def evaluate_directories(pred_dir: PathLike, gt_dir: PathLike, crop: bool = True) -> EvalReport:
    """
    Score every NNNN.png present in both directories.

    Raises:
        InputError: no frame names in common
    """
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    names = sorted(p.name for p in pred_dir.glob('*.png') if p.stem.isdigit() and (gt_dir / p.name).exists())
    if not names:
        raise InputError(f"No common NNNN.png frames in {pred_dir} and {gt_dir}")
    report = EvalReport(cropped=crop)
    for name in names:
        report.add(score_frame(int(Path(name).stem), read_frame(pred_dir / name),
                               read_frame(gt_dir / name), crop))
    return report
