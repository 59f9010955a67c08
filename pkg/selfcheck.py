"""
In-memory invariant suite and gradient checker behind `selfcheck` / `gradcheck`
Nothing here touches the filesystem; format checks round-trip through byte buffers
"""

import logging
import time
from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np
import pandas as pd

from config import DESK_ENCODER_CHANNELS, GRAD_TOLERANCE, MIN_UNIFIED_WIDTH
from errors import AsgnetError
from metrics import METRIC_NAMES, dice_iou, evaluate_pair
from network import (
    BRANCH_OPS, AblationFlags, EncoderConfig, attention_map, forward, graph_layout, trace_calls,
)
from params import init_params
from spectral import ComplexTensor, fft2d, ifft2d, joint_attention
from supervision import dice_loss, edge_gt, finite_difference_grad, relative_error, weighted_bce, weighted_iou
from tensor_io import decode_image, decode_tensor, decode_weights, encode_image, encode_tensor, encode_weights

logger = logging.getLogger(__name__)

SELFCHECK_SEED = 42
DESK_SIZE = 64


class CheckFailed(AsgnetError):
    """An invariant did not hold"""


def _expect(condition: bool, message: str) -> None:
    if not condition:
        raise CheckFailed(message)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


_CHECKS: List[Tuple[str, Callable[[np.random.Generator], str]]] = []


def check(name: str):
    """Register an invariant; the function returns a short detail string or raises"""
    def register(fn):
        _CHECKS.append((name, fn))
        return fn
    return register


def desk_config() -> EncoderConfig:
    return EncoderConfig(DESK_SIZE, DESK_ENCODER_CHANNELS, MIN_UNIFIED_WIDTH)


@check("fft round trip")
def _fft_round_trip(rng) -> str:
    worst = 0.0
    for size in (4, 8, 16, 32):
        x = rng.standard_normal((1, 2, size, size)).astype(np.float32)
        for method in ("direct", "radix2"):
            back = ifft2d(fft2d(x, method), method)
            worst = max(worst, float(np.abs(back.re - x).max()), float(np.abs(back.im).max()))
    _expect(worst < 1e-5, f"max round-trip error {worst:.3g}")
    return f"max error {worst:.2e}"


@check("fft radix2 agrees with direct")
def _fft_methods_agree(rng) -> str:
    x = rng.standard_normal((1, 1, 8, 8)).astype(np.float32)
    a, b = fft2d(x, "direct"), fft2d(x, "radix2")
    diff = max(float(np.abs(a.re - b.re).max()), float(np.abs(a.im - b.im).max()))
    _expect(diff < 1e-5, f"radix2 and direct differ by {diff:.3g}")
    return f"max diff {diff:.2e}"


@check("parseval and dc term")
def _parseval(rng) -> str:
    x = rng.standard_normal((1, 1, 16, 16))
    spectrum = fft2d(x).to_array()
    energy = float((x ** 2).sum())
    spectral_energy = float((np.abs(spectrum) ** 2).sum()) / x[0, 0].size
    _expect(abs(energy - spectral_energy) <= 1e-5 * energy, "Parseval identity failed")
    dc = spectrum[0, 0, 0, 0].real
    _expect(abs(dc - x.sum()) <= 1e-5 * max(1.0, abs(x.sum())), "DC coefficient is not the spatial sum")
    return "ok"


@check("joint attention bypass doubles spectrum")
def _bypass(rng) -> str:
    spectrum = ComplexTensor(rng.standard_normal((1, 2, 4, 4)).astype(np.float32),
                             rng.standard_normal((1, 2, 4, 4)).astype(np.float32))
    out = joint_attention(spectrum, p=None, bypass=True)
    _expect(np.array_equal(out.re, 2 * spectrum.re) and np.array_equal(out.im, 2 * spectrum.im),
            "bypass output is not 2X")
    return "ok"


@check("attention map is row-stochastic")
def _row_stochastic(rng) -> str:
    q = rng.standard_normal((2, 6, 5, 5)).astype(np.float32)
    k = rng.standard_normal((2, 6, 5, 5)).astype(np.float32)
    sums = attention_map(q, k).astype(np.float64).sum(axis=2)
    _expect(np.abs(sums - 1.0).max() <= 1e-6, "rows do not sum to 1")
    return "ok"


@check("edge ground truth of a single pixel")
def _edge_single(rng) -> str:
    mask = np.zeros((5, 5))
    mask[2, 2] = 1
    edge = edge_gt(mask)
    _expect(edge.sum() == 9 and edge[1:4, 1:4].all(), "expected a 3x3 block of edge pixels")
    return "ok"


def gradient_check(trials: int = 20, seed: int = SELFCHECK_SEED, size: int = 4) -> pd.DataFrame:
    """
    Compare analytic loss gradients with central differences on random instances.

    Returns:
        pd.DataFrame: one row per (loss, trial) with the max relative error
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    losses = {
        "weighted_bce": lambda z, g, w: weighted_bce(z, g, w),
        "weighted_iou": lambda z, g, w: weighted_iou(z, g, w),
        "dice_loss": lambda z, g, w: dice_loss(z, g),
    }
    rows = []
    for trial in range(trials):
        z = rng.standard_normal((size, size)) * 2.0
        g = (rng.random((size, size)) < 0.5).astype(np.float64)
        w = 1.0 + rng.random((size, size)) * 5.0
        for name, fn in losses.items():
            _, analytic = fn(z, g, w)
            numeric = finite_difference_grad(lambda x: fn(x, g, w)[0], z)
            error = relative_error(analytic, numeric)
            rows.append({"loss": name, "trial": trial, "rel_error": error, "passed": error < GRAD_TOLERANCE})
    return pd.DataFrame(rows)


@check("loss gradients match finite differences")
def _gradients(rng) -> str:
    frame = gradient_check(trials=5, seed=int(rng.integers(1 << 31)))
    worst = frame["rel_error"].max()
    _expect(bool(frame["passed"].all()), f"max relative error {worst:.3g}")
    return f"max relative error {worst:.2e}"


@check("metrics on a perfect prediction")
def _metrics_perfect(rng) -> str:
    gt = np.zeros((16, 16))
    gt[4:11, 5:12] = 1
    record = evaluate_pair("perfect", gt, gt)
    expected = (1.0, 1.0, 1.0, 1.0, 1.0, 0.0)
    values = tuple(getattr(record, name) for name in METRIC_NAMES)
    _expect(np.allclose(values, expected, atol=1e-6), f"got {values}")
    return "ok"


@check("dice is never below iou")
def _dice_iou(rng) -> str:
    for _ in range(20):
        pred = rng.random((8, 8))
        gt = (rng.random((8, 8)) < 0.4).astype(np.float64)
        dic, iou = dice_iou(pred, gt)
        _expect(dic >= iou - 1e-12, f"dic {dic} < iou {iou}")
    return "ok"


@check("file formats round-trip in memory")
def _formats(rng) -> str:
    t = rng.standard_normal((2, 3, 4)).astype(np.float32)
    back, _ = decode_tensor(encode_tensor(t))
    _expect(np.array_equal(back, t), "tensor round trip changed values")
    tensors = {"a.kernel": t, "b.bias": t[0, 0]}
    loaded = decode_weights(encode_weights(tensors))
    _expect(list(loaded) == list(tensors) and all(np.array_equal(loaded[k], tensors[k]) for k in tensors),
            "weights round trip changed values")
    image = np.floor(rng.random((1, 3, 5, 7)) * 256).clip(0, 255) / 255.0
    data = encode_image(image)
    _expect(encode_image(decode_image(data)) == data, "image round trip changed bytes")
    return "ok"


@check("desk forward pass contract")
def _forward(rng) -> str:
    cfg = desk_config()
    params = init_params(graph_layout(cfg), SELFCHECK_SEED)
    image = rng.random((1, 3, cfg.input_size, cfg.input_size)).astype(np.float32)
    first = forward(image, params)
    second = forward(image, params)
    for stage, prediction in first.predictions.items():
        size = cfg.stage_size(stage)
        _expect(prediction.shape == (1, 1, size, size), f"pred_{stage} has shape {prediction.shape}")
        _expect(first.snp[stage].shape == (1, cfg.unified_width, size, size), f"snp_{stage} has wrong shape")
        _expect(first.edges[stage].shape == (1, 1, size, size), f"edge_{stage} has wrong shape")
    _expect(first.mask.shape == (1, 1, cfg.input_size, cfg.input_size), "mask has wrong shape")
    _expect(bool(((first.mask >= 0) & (first.mask <= 1)).all()), "mask leaves [0, 1]")
    same = all(np.array_equal(a, b) for a, b in zip(first.tensors().values(), second.tensors().values()))
    _expect(same, "two identical runs differ")
    return "ok"


@check("ablated branches are never invoked")
def _ablation(rng) -> str:
    cfg = desk_config()
    params = init_params(graph_layout(cfg), SELFCHECK_SEED)
    image = rng.random((1, 3, cfg.input_size, cfg.input_size)).astype(np.float32)
    full = forward(image, params)
    for name in AblationFlags.toggle_names():
        op = BRANCH_OPS[name]
        with trace_calls() as calls:
            ablated = forward(image, params, AblationFlags().without(name))
        _expect(calls[op] == 0, f"{op} was invoked {calls[op]} times with {name} off")
        _expect(not np.array_equal(ablated.predictions[2], full.predictions[2]), f"disabling {name} changed nothing")
    return f"{len(AblationFlags.toggle_names())} branches"


def run_selfcheck(seed: int = SELFCHECK_SEED) -> List[CheckResult]:
    """Run every registered invariant; failures are collected, never raised"""
    rng = np.random.Generator(np.random.PCG64(seed))
    results = []
    for name, fn in _CHECKS:
        started = time.perf_counter()
        try:
            detail, passed = fn(rng), True
        except AsgnetError as err:
            detail, passed = str(err), False
        elapsed = time.perf_counter() - started
        logger.info("%s: %s (%.2fs)", name, "pass" if passed else "FAIL", elapsed)
        results.append(CheckResult(name, passed, detail, elapsed))
    return results

