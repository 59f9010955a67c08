"""
Segmentation quality measures
Dice, IoU, weighted F-measure, S-measure, E-measure and MAE over binary-mask ground truth,
plus the directory-level evaluation that produces a MetricReport
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd

from config import (
    DEFAULT_THRESHOLD, IMAGE_EXTENSIONS, SM_ALPHA, WFM_BETA2, WFM_GAUSS_SIGMA, WFM_GAUSS_SIZE,
)
from errors import EvaluationError, ShapeError
from tensor_io import read_image

logger = logging.getLogger(__name__)

EPS = np.spacing(1)
METRIC_NAMES = ("dic", "iou", "fwb", "sm", "em", "mae")


def _plane(x, op: str) -> np.ndarray:
    """Drop singleton leading axes only; a 1 x W or 1 x 1 grid stays 2-D"""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim < 2 or any(n != 1 for n in a.shape[:-2]):
        raise ShapeError(op, "grid", "(..., H, W) with singleton leading axes", a.shape)
    return a.reshape(a.shape[-2:])


def _pair(pred, gt, op: str) -> Tuple[np.ndarray, np.ndarray]:
    p = _plane(pred, op)
    g = _plane(gt, op)
    if p.shape != g.shape:
        raise ShapeError(op, "grid", g.shape, p.shape)
    return p, g > 0.5


def mae(pred, gt) -> float:
    """Mean absolute error"""
    p, g = _pair(pred, gt, "mae")
    return float(np.abs(p - g).mean())


def dice_iou(pred, gt, threshold: float = DEFAULT_THRESHOLD) -> Tuple[float, float]:
    """Dice and IoU of pred >= threshold; two empty masks score (1, 1)"""
    p, g = _pair(pred, gt, "dice_iou")
    binary = p >= threshold
    tp = int(np.count_nonzero(binary & g))
    fp = int(np.count_nonzero(binary & ~g))
    fn = int(np.count_nonzero(~binary & g))
    if tp + fp + fn == 0:
        return 1.0, 1.0
    return 2.0 * tp / (2 * tp + fp + fn), tp / (tp + fp + fn)


# ---------------------------------------------------------------------------
# Weighted F-measure
# ---------------------------------------------------------------------------

_FAR = 1e20


def _squared_edt_1d(f: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Lower envelope of parabolas: d[q] = min_p (q - p)^2 + f[p] and its argmin"""
    n = len(f)
    v = np.zeros(n, dtype=np.intp)
    z = np.empty(n + 1)
    z[0], z[1] = -np.inf, np.inf
    k = 0
    for q in range(1, n):
        s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * (q - v[k]))
        while s <= z[k]:
            k -= 1
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * (q - v[k]))
        k += 1
        v[k] = q
        z[k], z[k + 1] = s, np.inf
    d = np.empty(n)
    arg = np.empty(n, dtype=np.intp)
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        arg[q] = v[k]
        d[q] = (q - v[k]) ** 2 + f[v[k]]
    return d, arg


def distance_transform(foreground: np.ndarray) -> Tuple[np.ndarray, Tuple[np.ndarray, np.ndarray]]:
    """
    Exact Euclidean distance to the nearest foreground pixel, two separable passes.

    Returns:
        Tuple: (distances, (row index, column index) of the nearest foreground pixel)
    """
    fg = np.asarray(foreground, dtype=bool)
    h, w = fg.shape
    column_d = np.empty((h, w))
    column_arg = np.empty((h, w), dtype=np.intp)
    seed = np.where(fg, 0.0, _FAR)
    for x in range(w):
        column_d[:, x], column_arg[:, x] = _squared_edt_1d(seed[:, x])
    dist = np.empty((h, w))
    rows = np.empty((h, w), dtype=np.intp)
    cols = np.empty((h, w), dtype=np.intp)
    for y in range(h):
        dist[y], cols[y] = _squared_edt_1d(column_d[y])
        rows[y] = column_arg[y, cols[y]]
    return np.sqrt(dist), (rows, cols)


def gaussian_kernel(size: int = WFM_GAUSS_SIZE, sigma: float = WFM_GAUSS_SIGMA) -> np.ndarray:
    """Normalized size x size Gaussian with negligible taps zeroed"""
    half = (size - 1) / 2.0
    y, x = np.ogrid[-half:half + 1, -half:half + 1]
    kernel = np.exp(-(x * x + y * y) / (2.0 * sigma * sigma))
    kernel[kernel < EPS * kernel.max()] = 0
    return kernel / kernel.sum()


def _smooth_replicate(field: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    pad = kernel.shape[0] // 2
    padded = np.pad(field, pad, mode="edge")
    h, w = field.shape
    out = np.zeros_like(field)
    for dy in range(kernel.shape[0]):
        for dx in range(kernel.shape[1]):
            out += kernel[dy, dx] * padded[dy:dy + h, dx:dx + w]
    return out


def weighted_fmeasure(pred, gt, beta2: float = WFM_BETA2) -> float:
    """
    Weighted F-measure of a continuous prediction.

    Background errors inherit the error of their nearest foreground pixel,
    are smoothed with a 7x7 sigma-5 Gaussian and discounted by distance.
    An empty ground truth scores 1 for an all-zero prediction, 0 otherwise.
    """
    p, g = _pair(pred, gt, "weighted_fmeasure")
    if not g.any():
        return 1.0 if not p.any() else 0.0
    dist, (rows, cols) = distance_transform(g)
    error = np.abs(p - g)
    dependent = error.copy()
    background = ~g
    dependent[background] = error[rows[background], cols[background]]
    smoothed = _smooth_replicate(dependent, gaussian_kernel())
    limited = np.where(g & (smoothed < error), smoothed, error)
    importance = np.where(background, 2.0 - np.exp(np.log(0.5) / 5.0 * dist), 1.0)
    weighted = limited * importance
    tp = np.count_nonzero(g) - weighted[g].sum()
    fp = weighted[background].sum()
    recall = 1.0 - weighted[g].mean()
    precision = tp / (tp + fp + EPS)
    return float((1.0 + beta2) * recall * precision / (recall + beta2 * precision + EPS))


# ---------------------------------------------------------------------------
# S-measure
# ---------------------------------------------------------------------------

def _object_similarity(values: np.ndarray) -> float:
    x = values.mean()
    sigma = values.std(ddof=1) if values.size > 1 else 0.0
    return 2.0 * x / (x * x + 1.0 + sigma + EPS)


def _object_score(p: np.ndarray, g: np.ndarray) -> float:
    u = g.mean()
    fg = (p * g)[g]
    bg = ((1.0 - p) * ~g)[~g]
    return u * _object_similarity(fg) + (1.0 - u) * _object_similarity(bg)


def _ssim(p: np.ndarray, g: np.ndarray) -> float:
    n = p.size
    x, y = p.mean(), g.mean()
    if n > 1:
        sigma_x = ((p - x) ** 2).sum() / (n - 1)
        sigma_y = ((g - y) ** 2).sum() / (n - 1)
        sigma_xy = ((p - x) * (g - y)).sum() / (n - 1)
    else:
        sigma_x = sigma_y = sigma_xy = 0.0
    alpha = 4.0 * x * y * sigma_xy
    beta = (x * x + y * y) * (sigma_x + sigma_y)
    if alpha != 0:
        return alpha / (beta + EPS)
    return 1.0 if beta == 0 else 0.0


def quadrant_split(g: np.ndarray) -> Tuple[int, int]:
    """Row and column after which the four regions are cut: round(centroid) + 1"""
    rows, cols = np.nonzero(g)
    return int(np.round(rows.mean())) + 1, int(np.round(cols.mean())) + 1


def _region_score(p: np.ndarray, g: np.ndarray) -> float:
    h, w = g.shape
    y, x = quadrant_split(g)
    score = 0.0
    for rs in (slice(0, y), slice(y, h)):
        for cs in (slice(0, x), slice(x, w)):
            block_p, block_g = p[rs, cs], g[rs, cs].astype(np.float64)
            if block_p.size == 0:
                continue
            score += block_p.size / (h * w) * _ssim(block_p, block_g)
    return score


def s_measure(pred, gt, alpha: float = SM_ALPHA) -> float:
    """Structure measure: alpha * object score + (1 - alpha) * region score"""
    p, g = _pair(pred, gt, "s_measure")
    y = g.mean()
    if y == 0:
        return float(1.0 - p.mean())
    if y == 1:
        return float(p.mean())
    score = alpha * _object_score(p, g) + (1.0 - alpha) * _region_score(p, g)
    return float(max(0.0, score))


# ---------------------------------------------------------------------------
# E-measure
# ---------------------------------------------------------------------------

def e_measure(pred, gt) -> float:
    """Enhanced alignment of pred >= min(2 mean(pred), 1) with the ground truth, averaged over H*W"""
    p, g = _pair(pred, gt, "e_measure")
    threshold = min(2.0 * p.mean(), 1.0)
    binary = p >= threshold if threshold > 0 else np.zeros_like(g)
    fm = binary.astype(np.float64)
    gm = g.astype(np.float64)
    if not g.any():
        enhanced = 1.0 - fm
    elif g.all():
        enhanced = fm
    else:
        align_fm = fm - fm.mean()
        align_gt = gm - gm.mean()
        align = 2.0 * align_gt * align_fm / (align_gt ** 2 + align_fm ** 2 + EPS)
        enhanced = (align + 1.0) ** 2 / 4.0
    return float(enhanced.sum() / g.size)


# ---------------------------------------------------------------------------
# Dataset evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MetricRecord:
    name: str
    dic: float
    iou: float
    fwb: float
    sm: float
    em: float
    mae: float

    def to_line(self) -> str:
        values = " ".join(f"{v:.6f}" for v in astuple(self)[1:])
        return f"{self.name} {values}"


def evaluate_pair(name: str, pred, gt, threshold: float = DEFAULT_THRESHOLD) -> MetricRecord:
    dic, iou = dice_iou(pred, gt, threshold)
    return MetricRecord(name, dic, iou, weighted_fmeasure(pred, gt), s_measure(pred, gt),
                        e_measure(pred, gt), mae(pred, gt))


@dataclass(frozen=True)
class MetricReport:
    """Per-image records in filename order plus their arithmetic means"""
    records: Tuple[MetricRecord, ...]

    @property
    def frame(self) -> pd.DataFrame:
        columns = [f.name for f in fields(MetricRecord)]
        return pd.DataFrame([astuple(r) for r in self.records], columns=columns).set_index("name")

    @property
    def means(self) -> Dict[str, float]:
        return {name: float(np.mean([getattr(r, name) for r in self.records])) for name in METRIC_NAMES}

    def to_lines(self) -> List[str]:
        return [record.to_line() for record in self.records]

    def to_text(self) -> str:
        """Fixed-point table with a closing mean row"""
        table = self.frame.copy()
        table.loc["mean"] = pd.Series(self.means)
        return table.to_string(float_format=lambda v: f"{v:.6f}")


def _image_files(directory: Path) -> Dict[str, Path]:
    if not directory.is_dir():
        raise EvaluationError(f"not a directory: {directory}")
    return {p.name: p for p in directory.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS}


def _load_pair(name: str, pred_path: Path, gt_path: Path) -> Tuple[np.ndarray, np.ndarray]:
    pred = read_image(pred_path)[0]
    gt = read_image(gt_path, binarize=True)[0]
    if pred.shape[1:] != gt.shape[1:]:
        raise EvaluationError(f"size mismatch for {name}: pred {pred.shape[1:]}, gt {gt.shape[1:]}")
    # colour predictions are averaged to one plane; colour masks keep their first plane
    return pred.mean(axis=0), gt[0]


def evaluate_dir(pred_dir, gt_dir, threshold: float = DEFAULT_THRESHOLD, workers: int = 1) -> MetricReport:
    """
    Evaluate every prediction against the ground truth of the same filename.

    Args:
        pred_dir: Directory of P5/P6 prediction maps
        gt_dir: Directory of P5/P6 ground-truth masks
        threshold: Binarization threshold for Dice/IoU
        workers: Thread pool size; aggregation order is always by filename

    Raises:
        EvaluationError: unmatched filenames, no pairs, or a size mismatch
    """
    preds = _image_files(Path(pred_dir))
    gts = _image_files(Path(gt_dir))
    unmatched = sorted(set(preds) ^ set(gts))
    if unmatched:
        raise EvaluationError("unmatched files", unmatched)
    names: Sequence[str] = sorted(preds)
    if not names:
        raise EvaluationError(f"no pairs in {pred_dir} and {gt_dir}")

    def evaluate(name: str) -> MetricRecord:
        pred, gt = _load_pair(name, preds[name], gts[name])
        return evaluate_pair(name, pred, gt, threshold)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(evaluate, names))
    else:
        records = [evaluate(name) for name in names]
    logger.info("evaluated %d pairs", len(records))
    return MetricReport(tuple(records))
