"""
Spectral filtering for the ASGNet graph
2-D Fourier pair, spectrum modulus, joint spectrum attention and the adaptive spectrum filter
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple

import numpy as np

from config import FFT_METHOD
from errors import ShapeError
from params import GraphLayout, ParamScope
from tensor_ops import (
    ACC, DTYPE, LayerParams, Tensor, activate, as_tensor, batch_norm_act,
    conv, global_pool, layer_norm, record_call,
)

logger = logging.getLogger(__name__)

FFT_METHODS = ("direct", "radix2", "auto")


@dataclass(frozen=True, eq=False)
class ComplexTensor:
    """Paired real/imaginary float32 planes of identical shape"""
    re: Tensor
    im: Tensor

    def __post_init__(self):
        if self.re.shape != self.im.shape:
            raise ShapeError("ComplexTensor", "shape", self.re.shape, self.im.shape)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.re.shape

    @classmethod
    def from_array(cls, z: np.ndarray) -> "ComplexTensor":
        return cls(np.real(z).astype(DTYPE), np.imag(z).astype(DTYPE))

    def to_array(self) -> np.ndarray:
        return self.re.astype(ACC) + 1j * self.im.astype(ACC)


# ---------------------------------------------------------------------------
# Fourier pair
# ---------------------------------------------------------------------------

def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


@lru_cache(maxsize=64)
def _dft_matrix(n: int, inverse: bool) -> np.ndarray:
    k = np.arange(n)
    # reduce k*n mod N before scaling keeps the angle exact for large N
    phase = (np.outer(k, k) % n) / n
    sign = 1.0 if inverse else -1.0
    matrix = np.exp(sign * 2j * np.pi * phase)
    matrix.setflags(write=False)
    return matrix


@lru_cache(maxsize=64)
def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def _radix2_last_axis(z: np.ndarray, inverse: bool) -> np.ndarray:
    """Iterative decimation-in-time FFT along the last axis"""
    n = z.shape[-1]
    a = np.ascontiguousarray(z[..., _bit_reverse(n)], dtype=np.complex128)
    sign = 1.0 if inverse else -1.0
    m = 2
    while m <= n:
        half = m // 2
        twiddle = np.exp(sign * 2j * np.pi * np.arange(half) / m)
        blocks = a.reshape(a.shape[:-1] + (n // m, m))
        upper = blocks[..., :half].copy()
        lower = blocks[..., half:] * twiddle
        blocks[..., :half] = upper + lower
        blocks[..., half:] = upper - lower
        m *= 2
    return a


def _resolve_method(method: str, h: int, w: int) -> str:
    if method not in FFT_METHODS:
        raise ValueError(f"unknown fft method '{method}', expected one of {FFT_METHODS}")
    pow2 = _is_pow2(h) and _is_pow2(w)
    if method == "auto":
        return "radix2" if pow2 else "direct"
    if method == "radix2" and not pow2:
        raise ShapeError("fft2d", "H,W", "powers of two for radix2", (h, w))
    return method


def _transform(z: np.ndarray, method: str, inverse: bool) -> np.ndarray:
    h, w = z.shape[-2:]
    if _resolve_method(method, h, w) == "direct":
        out = np.matmul(np.matmul(_dft_matrix(h, inverse), z), _dft_matrix(w, inverse).T)
    else:
        out = _radix2_last_axis(z, inverse)
        out = _radix2_last_axis(np.swapaxes(out, -1, -2), inverse)
        out = np.swapaxes(out, -1, -2)
    if inverse:
        out = out / (h * w)
    return out


def fft2d(x: Tensor, method: str = FFT_METHOD) -> ComplexTensor:
    """
    Forward 2-D DFT over the last two axes.

    Args:
        x: Real tensor, any leading shape
        method: "direct" (separable DFT matrices), "radix2" or "auto"

    Returns:
        ComplexTensor: spectrum of the same shape
    """
    x = as_tensor(x, "fft2d")
    if x.ndim < 2:
        raise ShapeError("fft2d", "rank", ">= 2", x.ndim)
    return ComplexTensor.from_array(_transform(x.astype(np.complex128), method, inverse=False))


def ifft2d(spectrum: ComplexTensor, method: str = FFT_METHOD) -> ComplexTensor:
    """Inverse 2-D DFT, normalized by 1/(H*W)"""
    if len(spectrum.shape) < 2:
        raise ShapeError("ifft2d", "rank", ">= 2", len(spectrum.shape))
    return ComplexTensor.from_array(_transform(spectrum.to_array(), method, inverse=True))


def modulus(spectrum: ComplexTensor) -> Tensor:
    """Elementwise sqrt(re^2 + im^2)"""
    return np.hypot(spectrum.re.astype(ACC), spectrum.im.astype(ACC)).astype(DTYPE)


# ---------------------------------------------------------------------------
# Real-valued attention
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MsaParams:
    """Two spatial gates: (C->1, 1->1) conv pairs at kernel 3 and kernel 5"""
    reduce3: LayerParams
    gate3: LayerParams
    reduce5: LayerParams
    gate5: LayerParams

    @classmethod
    def from_scope(cls, scope: ParamScope) -> "MsaParams":
        return cls(scope["sa3.reduce"], scope["sa3.gate"], scope["sa5.reduce"], scope["sa5.gate"])


def msa_layout(layout: GraphLayout, prefix: str, channels: int) -> None:
    for k in (3, 5):
        layout.conv(f"{prefix}.sa{k}.reduce", channels, 1, kernel=k)
        layout.conv(f"{prefix}.sa{k}.gate", 1, 1, kernel=k)


def channel_gate(x: Tensor, p: LayerParams) -> Tensor:
    """sigmoid(C_1(GAP(x) + GMP(x))), shaped (N, C, 1, 1)"""
    pooled = global_pool(x, "avg") + global_pool(x, "max")
    return activate(conv(pooled, p), "sigmoid")


def channel_attention(x: Tensor, p: LayerParams) -> Tensor:
    return (channel_gate(x, p).astype(ACC) * x).astype(DTYPE)


def spatial_gates(x: Tensor, p: MsaParams) -> Tuple[Tensor, Tensor]:
    """Kernel-3 and kernel-5 gates, each sigmoid(C(relu(C(x)))) of shape (N, 1, H, W)"""
    g3 = activate(conv(activate(conv(x, p.reduce3), "relu"), p.gate3), "sigmoid")
    g5 = activate(conv(activate(conv(x, p.reduce5), "relu"), p.gate5), "sigmoid")
    return g3, g5


def multi_scale_spatial_attention(x: Tensor, p: MsaParams) -> Tensor:
    g3, g5 = spatial_gates(x, p)
    data = np.asarray(x, dtype=ACC)
    return (g3 * data + g5 * data).astype(DTYPE)


# ---------------------------------------------------------------------------
# Adaptive spectrum filter
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AsfParams:
    """Parameters of one adaptive spectrum filter"""
    norm: LayerParams
    proj: LayerParams
    channel: LayerParams
    msa: MsaParams
    out_norm: LayerParams

    @classmethod
    def from_scope(cls, scope: ParamScope) -> "AsfParams":
        return cls(
            norm=scope["norm"],
            proj=scope["proj"],
            channel=scope["channel"],
            msa=MsaParams.from_scope(scope.child("msa")),
            out_norm=scope["out_norm"],
        )


def asf_layout(layout: GraphLayout, prefix: str, in_channels: int, width: int) -> None:
    layout.norm(f"{prefix}.norm", in_channels)
    layout.conv(f"{prefix}.proj", in_channels, width)
    layout.conv(f"{prefix}.channel", width, width)
    msa_layout(layout, f"{prefix}.msa", width)
    layout.norm(f"{prefix}.out_norm", width)


def spectrum_weights(spectrum: ComplexTensor, p: AsfParams, bypass: bool = False) -> Tensor:
    """
    Real weight field w with MSA(CA(|X|)) == w * |X|.

    w = (g3 + g5) * ca lies in [0, 2]; a zero spectrum yields finite weights.
    """
    if bypass:
        return np.ones(spectrum.shape, dtype=DTYPE)
    magnitude = modulus(spectrum)
    ca = channel_gate(magnitude, p.channel).astype(ACC)
    g3, g5 = spatial_gates((ca * magnitude).astype(DTYPE), p.msa)
    return ((g3.astype(ACC) + g5) * ca).astype(DTYPE)


def joint_attention(spectrum: ComplexTensor, p: AsfParams, bypass: bool = False) -> ComplexTensor:
    """Reweight the spectrum (re and im identically) and add it back: w*X + X"""
    w = spectrum_weights(spectrum, p, bypass).astype(ACC)
    re = spectrum.re.astype(ACC)
    im = spectrum.im.astype(ACC)
    return ComplexTensor((w * re + re).astype(DTYPE), (w * im + im).astype(DTYPE))


def spectral_filter(y: Tensor, p: AsfParams, bypass: bool = False, method: str = FFT_METHOD) -> Tensor:
    """|IFFT(JA(FFT(y)))|"""
    return modulus(ifft2d(joint_attention(fft2d(y, method), p, bypass), method))


def asf(x: Tensor, p: AsfParams, bypass: bool = False, method: str = FFT_METHOD) -> Tensor:
    """
    Adaptive spectrum filter.

    Args:
        x: Input features (N, C_in, H, W)
        p: Filter parameters; p.proj maps C_in to the output width
        bypass: Replace the learned spectrum weights with ones
        method: Fourier transform implementation

    Returns:
        Tensor: (N, width, H, W), non-negative after the closing BN + ReLU
    """
    record_call("asf")
    projected = conv(layer_norm(x, p.norm.scale, p.norm.shift), p.proj)
    filtered = spectral_filter(projected, p, bypass, method)
    return batch_norm_act(filtered, p.out_norm.scale, p.out_norm.shift)
