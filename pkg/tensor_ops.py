"""
Dense tensor primitives for the ASGNet graph
All tensors are NCHW float32 numpy arrays; accumulation runs in float64
"""

import contextlib
import logging
from collections import Counter
from contextvars import ContextVar
from dataclasses import dataclass
from typing import Dict, Iterator, Optional, Sequence

import numpy as np

from config import NORM_EPS
from errors import ShapeError

logger = logging.getLogger(__name__)

Tensor = np.ndarray
DTYPE = np.float32
ACC = np.float64

KERNEL_SIZES = (1, 3, 5)


# ---------------------------------------------------------------------------
# Call tracing
# ---------------------------------------------------------------------------

_TRACE: ContextVar[Optional[Counter]] = ContextVar("asgnet_trace", default=None)
_TRACE_SCOPE: ContextVar[str] = ContextVar("asgnet_trace_scope", default="")


@contextlib.contextmanager
def trace_calls() -> Iterator[Counter]:
    """
    Count graph-op invocations made inside the block (per context).

    Each op is counted under its own name and, inside a trace_scope, also
    under "<scope>.<op>" (e.g. "snp.asf", "dci.asf").
    """
    counter: Counter = Counter()
    token = _TRACE.set(counter)
    try:
        yield counter
    finally:
        _TRACE.reset(token)


@contextlib.contextmanager
def trace_scope(name: str) -> Iterator[None]:
    """Attribute recorded calls to a graph part; stage digits are dropped (snp4 -> snp)"""
    token = _TRACE_SCOPE.set(name.rstrip("0123456789"))
    try:
        yield
    finally:
        _TRACE_SCOPE.reset(token)


def record_call(op: str) -> None:
    counter = _TRACE.get()
    if counter is None:
        return
    counter[op] += 1
    scope = _TRACE_SCOPE.get()
    if scope:
        counter[f"{scope}.{op}"] += 1


def as_tensor(x, op: str = "tensor") -> Tensor:
    """Coerce to a float32 tensor of rank <= 4 with all extents >= 1"""
    t = np.asarray(x, dtype=DTYPE)
    if t.ndim > 4:
        raise ShapeError(op, "rank", "<= 4", t.ndim)
    if any(extent < 1 for extent in t.shape):
        raise ShapeError(op, "extent", ">= 1", t.shape)
    return t


def _rank4(x, op: str) -> Tensor:
    t = as_tensor(x, op)
    if t.ndim != 4:
        raise ShapeError(op, "rank", 4, t.ndim)
    return t


@dataclass(frozen=True)
class ConvSpec:
    """Geometry of one convolution; padding keeps the grid at stride 1"""
    in_channels: int
    out_channels: int
    kernel: int = 1
    dilation: int = 1
    depthwise: bool = False
    stride: int = 1

    def __post_init__(self):
        if self.kernel not in KERNEL_SIZES:
            raise ShapeError("ConvSpec", "kernel", KERNEL_SIZES, self.kernel)
        if self.dilation < 1:
            raise ShapeError("ConvSpec", "dilation", ">= 1", self.dilation)
        if self.stride < 1:
            raise ShapeError("ConvSpec", "stride", ">= 1", self.stride)
        if self.in_channels < 1 or self.out_channels < 1:
            raise ShapeError("ConvSpec", "channels", ">= 1", (self.in_channels, self.out_channels))
        if self.depthwise and self.in_channels != self.out_channels:
            raise ShapeError("ConvSpec", "out_channels", self.in_channels, self.out_channels)

    @property
    def padding(self) -> int:
        return self.dilation * (self.kernel - 1) // 2

    @property
    def kernel_shape(self) -> tuple:
        group_in = 1 if self.depthwise else self.in_channels
        return (self.out_channels, group_in, self.kernel, self.kernel)

    @property
    def fan_in(self) -> int:
        return self.kernel_shape[1] * self.kernel * self.kernel


@dataclass(frozen=True, eq=False)
class LayerParams:
    """
    Named parameter bundle for one learnable operation.

    Convolutions carry kernel/bias (and their ConvSpec), normalizations carry
    scale/shift. Absent members are None.
    """
    name: str
    kernel: Optional[Tensor] = None
    bias: Optional[Tensor] = None
    scale: Optional[Tensor] = None
    shift: Optional[Tensor] = None
    spec: Optional[ConvSpec] = None

    def tensors(self) -> Dict[str, Tensor]:
        """Flatten to '<name>.<member>' entries, in a fixed member order"""
        members = (("kernel", self.kernel), ("bias", self.bias),
                   ("scale", self.scale), ("shift", self.shift))
        return {f"{self.name}.{member}": value for member, value in members if value is not None}

    def with_kernel(self, kernel: Tensor, spec: ConvSpec) -> "LayerParams":
        return LayerParams(self.name, kernel, self.bias, self.scale, self.shift, spec)


def _windows(padded: np.ndarray, kernel: int, dilation: int, stride: int, h_out: int, w_out: int) -> np.ndarray:
    """Strided view (N, C, k, k, H_out, W_out) over a padded input"""
    n, c = padded.shape[:2]
    sn, sc, sh, sw = padded.strides
    return np.lib.stride_tricks.as_strided(
        padded,
        shape=(n, c, kernel, kernel, h_out, w_out),
        strides=(sn, sc, dilation * sh, dilation * sw, stride * sh, stride * sw),
        writeable=False,
    )


def conv2d(x: Tensor, spec: ConvSpec, p: LayerParams) -> Tensor:
    """
    Direct dense (or depthwise) convolution with zero padding.

    Args:
        x: Input (N, C, H, W) with C == spec.in_channels
        spec: Convolution geometry
        p: Kernel of spec.kernel_shape and optional bias (out_channels,)

    Returns:
        Tensor: (N, out_channels, ceil(H/stride), ceil(W/stride))
    """
    x = _rank4(x, "conv2d")
    n, c, h, w = x.shape
    if c != spec.in_channels:
        raise ShapeError("conv2d", "channels", spec.in_channels, c)
    if p.kernel is None or p.kernel.shape != spec.kernel_shape:
        actual = None if p.kernel is None else p.kernel.shape
        raise ShapeError(f"conv2d({p.name})", "kernel", spec.kernel_shape, actual)
    if p.bias is not None and p.bias.shape != (spec.out_channels,):
        raise ShapeError(f"conv2d({p.name})", "bias", (spec.out_channels,), p.bias.shape)

    pad = spec.padding
    h_out = (h - 1) // spec.stride + 1
    w_out = (w - 1) // spec.stride + 1
    padded = np.pad(x.astype(ACC), ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = _windows(padded, spec.kernel, spec.dilation, spec.stride, h_out, w_out)
    weight = p.kernel.astype(ACC)

    if spec.depthwise:
        out = np.einsum("ncijhw,cij->nchw", cols, weight[:, 0])
    else:
        out = np.tensordot(cols, weight, axes=([1, 2, 3], [1, 2, 3])).transpose(0, 3, 1, 2)
    if p.bias is not None:
        out = out + p.bias.astype(ACC)[None, :, None, None]
    return np.ascontiguousarray(out, dtype=DTYPE)


def conv(x: Tensor, p: LayerParams) -> Tensor:
    """conv2d with the geometry stored on the layer"""
    if p.spec is None:
        raise ShapeError(f"conv({p.name})", "spec", "ConvSpec", None)
    return conv2d(x, p.spec, p)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """(M, K) @ (K, N) with float64 accumulation"""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError("matmul", "rank", 2, (a.ndim, b.ndim))
    if a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", "inner", a.shape[1], b.shape[0])
    return (a.astype(ACC) @ b.astype(ACC)).astype(DTYPE)


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax with row-max subtraction"""
    x = np.asarray(x, dtype=ACC)
    if x.ndim != 2:
        raise ShapeError("softmax_rows", "rank", 2, x.ndim)
    shifted = np.exp(x - x.max(axis=1, keepdims=True))
    return (shifted / shifted.sum(axis=1, keepdims=True)).astype(DTYPE)


def global_pool(x: Tensor, mode: str = "avg") -> Tensor:
    """Spatial mean or maximum, keeping (N, C, 1, 1)"""
    x = _rank4(x, "global_pool")
    if mode == "avg":
        return x.astype(ACC).mean(axis=(2, 3), keepdims=True).astype(DTYPE)
    if mode == "max":
        return x.max(axis=(2, 3), keepdims=True)
    raise ValueError(f"unknown pooling mode '{mode}'")


def _affine(x: np.ndarray, scale, shift) -> np.ndarray:
    c = x.shape[1]
    scale = np.ones(c, ACC) if scale is None else np.asarray(scale, ACC).reshape(c)
    shift = np.zeros(c, ACC) if shift is None else np.asarray(shift, ACC).reshape(c)
    return x * scale[None, :, None, None] + shift[None, :, None, None]


def layer_norm(x: Tensor, scale=None, shift=None, eps: float = NORM_EPS) -> Tensor:
    """Standardize across channels at every (n, h, w), then scale/shift per channel"""
    x = _rank4(x, "layer_norm").astype(ACC)
    mean = x.mean(axis=1, keepdims=True)
    var = ((x - mean) ** 2).mean(axis=1, keepdims=True)
    normed = (x - mean) / np.sqrt(var + eps)
    return _affine(normed, scale, shift).astype(DTYPE)


def batch_norm(x: Tensor, scale=None, shift=None, eps: float = NORM_EPS) -> Tensor:
    """Per-channel standardization over (N, H, W) using the batch's own statistics"""
    x = _rank4(x, "batch_norm").astype(ACC)
    mean = x.mean(axis=(0, 2, 3), keepdims=True)
    var = ((x - mean) ** 2).mean(axis=(0, 2, 3), keepdims=True)
    normed = (x - mean) / np.sqrt(var + eps)
    return _affine(normed, scale, shift).astype(DTYPE)


def batch_norm_act(x: Tensor, scale=None, shift=None, eps: float = NORM_EPS) -> Tensor:
    """BatchNorm followed by ReLU"""
    return activate(batch_norm(x, scale, shift, eps), "relu")


_GELU_C = np.sqrt(2.0 / np.pi)


def _relu(x):
    return np.maximum(x, 0.0)


def _gelu(x):
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + 0.044715 * x ** 3)))


def _sigmoid(x):
    # tanh form saturates cleanly for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * x))


_ACTIVATIONS = {
    "relu": _relu,
    "gelu": _gelu,
    "sigmoid": _sigmoid,
}


def activate(x: Tensor, kind: str) -> Tensor:
    """Elementwise relu | gelu (tanh approximation) | sigmoid"""
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation '{kind}'") from None
    return fn(np.asarray(x, dtype=ACC)).astype(DTYPE)


def _interp_axis(size_in: int, size_out: int):
    src = (np.arange(size_out, dtype=ACC) + 0.5) * (size_in / size_out) - 0.5
    src = np.clip(src, 0.0, size_in - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, size_in - 1)
    return lo, hi, src - lo


def resize_bilinear(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Bilinear resize with half-pixel centers (align_corners=False)"""
    x = _rank4(x, "resize_bilinear")
    if out_h < 1 or out_w < 1:
        raise ShapeError("resize_bilinear", "size", ">= 1", (out_h, out_w))
    h, w = x.shape[2:]
    if (h, w) == (out_h, out_w):
        return x.copy()
    y0, y1, fy = _interp_axis(h, out_h)
    x0, x1, fx = _interp_axis(w, out_w)
    data = x.astype(ACC)
    fy = fy[:, None]
    rows = data[:, :, y0, :] * (1.0 - fy) + data[:, :, y1, :] * fy
    out = rows[:, :, :, x0] * (1.0 - fx) + rows[:, :, :, x1] * fx
    return out.astype(DTYPE)


def concat_channels(xs: Sequence[Tensor]) -> Tensor:
    """Concatenate along C in argument order"""
    if not xs:
        raise ShapeError("concat_channels", "inputs", ">= 1", 0)
    tensors = [_rank4(x, "concat_channels") for x in xs]
    ref = tensors[0].shape
    for t in tensors[1:]:
        if (t.shape[0], t.shape[2], t.shape[3]) != (ref[0], ref[2], ref[3]):
            raise ShapeError("concat_channels", "N,H,W", (ref[0], ref[2], ref[3]),
                             (t.shape[0], t.shape[2], t.shape[3]))
    if len(tensors) == 1:
        return tensors[0]
    return np.concatenate(tensors, axis=1)


def avg_pool2d(x, kernel: int) -> np.ndarray:
    """
    Stride-1 mean filter over the last two axes with zero padding.
    The divisor is always kernel**2 (padding counts), so the output keeps the grid.
    """
    a = np.asarray(x, dtype=ACC)
    pad = kernel // 2
    widths = [(0, 0)] * (a.ndim - 2) + [(pad + 1, pad), (pad + 1, pad)]
    padded = np.pad(a, widths)
    integral = padded.cumsum(axis=-2).cumsum(axis=-1)
    h, w = a.shape[-2:]
    total = (integral[..., kernel:kernel + h, kernel:kernel + w]
             - integral[..., :h, kernel:kernel + w]
             - integral[..., kernel:kernel + h, :w]
             + integral[..., :h, :w])
    return total / float(kernel * kernel)


def _window_reduce(x, size: int, reduce) -> np.ndarray:
    # edge padding makes out-of-image taps repeat an in-window pixel
    a = np.asarray(x)
    pad = size // 2
    widths = [(0, 0)] * (a.ndim - 2) + [(pad, pad), (pad, pad)]
    padded = np.pad(a, widths, mode="edge")
    h, w = a.shape[-2:]
    out = padded[..., :h, :w].copy()
    for dy in range(size):
        for dx in range(size):
            reduce(out, padded[..., dy:dy + h, dx:dx + w], out=out)
    return out


def max_filter(x, size: int = 3) -> np.ndarray:
    """Stride-1 window maximum over the last two axes"""
    return _window_reduce(x, size, np.maximum)


def min_filter(x, size: int = 3) -> np.ndarray:
    """Stride-1 window minimum over the last two axes"""
    return _window_reduce(x, size, np.minimum)
