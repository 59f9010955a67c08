"""
Composite supervision for the ASGNet graph
Weighted BCE and weighted IoU on prediction maps, Dice on edge maps, each with an
analytic gradient with respect to the logits
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np
import pandas as pd

from config import BORDER_GAIN, BORDER_KERNEL, FD_STEP, SMOOTH_EPS, STAGES
from errors import DomainError, ShapeError
from tensor_ops import ACC, DTYPE, avg_pool2d, max_filter, min_filter, resize_bilinear

logger = logging.getLogger(__name__)

LossAndGrad = Tuple[float, np.ndarray]


def _check_binary(gt: np.ndarray, op: str) -> None:
    if not np.isin(gt, (0.0, 1.0)).all():
        raise DomainError(f"{op}: ground truth must be binary (0/1)")


def _pair(logits, gt, op: str) -> Tuple[np.ndarray, np.ndarray]:
    z = np.asarray(logits, dtype=ACC)
    g = np.asarray(gt, dtype=ACC)
    if z.shape != g.shape:
        raise ShapeError(op, "shape", g.shape, z.shape)
    _check_binary(g, op)
    return z, g


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def edge_gt(mask) -> np.ndarray:
    """Morphological gradient: 3x3 dilation minus 3x3 erosion of a binary mask"""
    m = np.asarray(mask)
    _check_binary(m, "edge_gt")
    solid = m.astype(bool)
    return (max_filter(solid, 3) & ~min_filter(solid, 3)).astype(DTYPE)


def pixel_weights(gt) -> np.ndarray:
    """Border emphasis w = 1 + 5 * |avgpool31(gt) - gt|; w >= 1 everywhere"""
    g = np.asarray(gt, dtype=ACC)
    return 1.0 + BORDER_GAIN * np.abs(avg_pool2d(g, BORDER_KERNEL) - g)


def weighted_bce(logits, gt, weights=None) -> LossAndGrad:
    """
    Weighted binary cross-entropy on logits (stable log-sum form).

    Args:
        logits: Raw scores z
        gt: Binary targets, same shape
        weights: Per-pixel weights; pixel_weights(gt) when omitted

    Returns:
        Tuple: (loss, dloss/dz)
    """
    z, g = _pair(logits, gt, "weighted_bce")
    w = pixel_weights(g) if weights is None else np.asarray(weights, dtype=ACC)
    total = w.sum()
    per_pixel = np.maximum(z, 0.0) - z * g + np.log1p(np.exp(-np.abs(z)))
    loss = float((w * per_pixel).sum() / total)
    grad = w * (_sigmoid(z) - g) / total
    return loss, grad


def weighted_iou(logits, gt, weights=None, eps: float = SMOOTH_EPS) -> LossAndGrad:
    """1 - (sum w p g + eps) / (sum w (p + g - p g) + eps), p = sigmoid(z)"""
    z, g = _pair(logits, gt, "weighted_iou")
    w = pixel_weights(g) if weights is None else np.asarray(weights, dtype=ACC)
    p = _sigmoid(z)
    inter = (w * p * g).sum() + eps
    union = (w * (p + g - p * g)).sum() + eps
    loss = float(1.0 - inter / union)
    d_inter = w * g
    d_union = w * (1.0 - g)
    grad_p = -(d_inter * union - inter * d_union) / union ** 2
    return loss, grad_p * p * (1.0 - p)


def dice_loss(logits, gt, eps: float = SMOOTH_EPS) -> LossAndGrad:
    """1 - (2 sum p g + eps) / (sum p + sum g + eps), p = sigmoid(z)"""
    z, g = _pair(logits, gt, "dice_loss")
    p = _sigmoid(z)
    num = 2.0 * (p * g).sum() + eps
    den = p.sum() + g.sum() + eps
    loss = float(1.0 - num / den)
    grad_p = -(2.0 * g * den - num) / den ** 2
    return loss, grad_p * p * (1.0 - p)


def finite_difference_grad(fn: Callable[[np.ndarray], float], z, step: float = FD_STEP) -> np.ndarray:
    """Central differences of a scalar function, one coordinate at a time"""
    base = np.array(z, dtype=ACC)
    grad = np.zeros_like(base)
    flat = base.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + step
        upper = fn(base)
        flat[i] = keep - step
        lower = fn(base)
        flat[i] = keep
        out[i] = (upper - lower) / (2.0 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max|a - n| / max|n| (absolute error when the numeric gradient vanishes)"""
    diff = np.abs(np.asarray(analytic, ACC) - np.asarray(numeric, ACC)).max()
    scale = np.abs(numeric).max()
    return float(diff / scale) if scale > 0 else float(diff)


@dataclass(frozen=True)
class LossBundle:
    """Summed loss terms plus the per-map breakdown"""
    total: float
    wbce: float
    wiou: float
    dice: float
    per_stage: Dict[str, Dict[str, float]] = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        """One row per supervised map, one column per loss term"""
        frame = pd.DataFrame.from_dict(self.per_stage, orient="index")
        frame.index.name = "map"
        return frame


def _as_gt_grid(gt_mask) -> np.ndarray:
    g = np.asarray(gt_mask, dtype=ACC)
    while g.ndim < 4:
        g = g[None]
    if g.shape[1] != 1:
        raise ShapeError("total_loss", "gt channels", 1, g.shape[1])
    return g


def total_loss(pyramid, gt_mask) -> LossBundle:
    """
    wBCE + wIoU over P2..P5 and F6, Dice over E2..E5 against edge_gt(gt).

    Every map is bilinearly resized to the ground-truth grid first. Absent edge
    maps (edge branch disabled) contribute no Dice term.
    """
    g = _as_gt_grid(gt_mask)
    _check_binary(g, "total_loss")
    h, w = g.shape[2:]
    weights = pixel_weights(g)
    edges = edge_gt(g)

    maps = []
    for stage in STAGES:
        prediction = pyramid.predictions.get(stage) if pyramid.predictions else None
        if prediction is None:
            raise ShapeError("total_loss", "pyramid", f"prediction for stage {stage}", "missing")
        maps.append((f"pred_{stage}", prediction))
    if pyramid.semantic is None:
        raise ShapeError("total_loss", "pyramid", "semantic map", "missing")
    maps.append(("mse", pyramid.semantic))

    per_stage: Dict[str, Dict[str, float]] = {}
    for name, logits in maps:
        z = resize_bilinear(logits, h, w)
        bce, _ = weighted_bce(z, g, weights)
        iou, _ = weighted_iou(z, g, weights)
        per_stage[name] = {"wbce": bce, "wiou": iou}
    for stage in STAGES:
        edge: Optional[np.ndarray] = pyramid.edges.get(stage)
        if edge is None:
            continue
        dice, _ = dice_loss(resize_bilinear(edge, h, w), edges)
        per_stage[f"edge_{stage}"] = {"dice": dice}

    wbce = sum(terms.get("wbce", 0.0) for terms in per_stage.values())
    wiou = sum(terms.get("wiou", 0.0) for terms in per_stage.values())
    dice = sum(terms.get("dice", 0.0) for terms in per_stage.values())
    logger.debug("loss terms wbce=%.6f wiou=%.6f dice=%.6f", wbce, wiou, dice)
    return LossBundle(wbce + wiou + dice, wbce, wiou, dice, per_stage)
