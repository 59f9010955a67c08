"""
ASGNet computation graph
Stub encoder, spectrum-guided non-local perception (SNP), multi-source semantic
extractor (MSE), dense cross-layer interaction (DCI) decoder and the forward pass
"""

import contextlib
import logging
import time
from dataclasses import dataclass, field, fields, replace
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from config import (
    DEFAULT_DILATIONS, DEFAULT_ENCODER_CHANNELS, DEFAULT_INPUT_SIZE, DEFAULT_UNIFIED_WIDTH,
    FFT_METHOD, MIN_UNIFIED_WIDTH, SIZE_DIVISOR, STAGES,
)
from errors import ConfigError, ShapeError
from params import GraphLayout, ParamScope, ParamStore
from spectral import AsfParams, MsaParams, asf, asf_layout, msa_layout, multi_scale_spatial_attention
from tensor_ops import (
    ACC, DTYPE, LayerParams, Tensor, activate, batch_norm_act, concat_channels, conv,
    conv2d, global_pool, layer_norm, matmul, record_call, resize_bilinear, softmax_rows,
    trace_calls, trace_scope, _rank4,  # trace_calls is re-exported for callers of forward
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EncoderConfig:
    """Input size, per-stage encoder widths (stages 2-5) and the unified decoder width U"""
    input_size: int = DEFAULT_INPUT_SIZE
    channels: Tuple[int, int, int, int] = DEFAULT_ENCODER_CHANNELS
    unified_width: int = DEFAULT_UNIFIED_WIDTH

    def __post_init__(self):
        if self.input_size < SIZE_DIVISOR or self.input_size % SIZE_DIVISOR:
            raise ConfigError("input_size", f"must be a positive multiple of {SIZE_DIVISOR}, got {self.input_size}")
        if len(self.channels) != len(STAGES) or any(c < 1 for c in self.channels):
            raise ConfigError("encoder_channels", f"need {len(STAGES)} positive widths, got {self.channels}")
        if self.unified_width < MIN_UNIFIED_WIDTH:
            raise ConfigError("unified_width", f"must be >= {MIN_UNIFIED_WIDTH}, got {self.unified_width}")

    def stage_channels(self, stage: int) -> int:
        return self.channels[stage - STAGES[0]]

    def stage_size(self, stage: int) -> int:
        return self.input_size // 2 ** stage


@dataclass(frozen=True)
class AblationFlags:
    """
    Module switches, branch toggles and MSE filling rates; the defaults are the full model.

    snp / mse / dci off replace the whole module with its baseline: a lateral
    C_1 plus upsampled top-down sum, a C_1 semantic head, and a C_1 prediction
    head over the upsampled stage above. Branch toggles only matter while their
    module is on.
    """
    snp: bool = True
    mse: bool = True
    dci: bool = True
    asf_in_snp: bool = True
    asf_in_mse: bool = True
    asf_in_dci: bool = True
    edge_branch: bool = True
    reverse_attention: bool = True
    attention_in_snp: bool = True
    leb_in_snp: bool = True
    dilation_set: Tuple[int, ...] = DEFAULT_DILATIONS

    def __post_init__(self):
        if len(self.dilation_set) != len(DEFAULT_DILATIONS):
            raise ConfigError("dilation_set", f"need {len(DEFAULT_DILATIONS)} rates, got {len(self.dilation_set)}")
        if any(int(rate) < 1 for rate in self.dilation_set):
            raise ConfigError("dilation_set", f"rates must be >= 1, got {self.dilation_set}")

    @classmethod
    def toggle_names(cls) -> Tuple[str, ...]:
        return tuple(f.name for f in fields(cls) if f.name != "dilation_set")

    def without(self, *names: str) -> "AblationFlags":
        """Copy with the named branches switched off"""
        unknown = [name for name in names if name not in self.toggle_names()]
        if unknown:
            raise ConfigError("ablate", f"unknown branch {', '.join(unknown)}")
        return replace(self, **{name: False for name in names})


# Traced op each toggle removes from the graph (see tensor_ops.trace_calls)
BRANCH_OPS: Dict[str, str] = {
    "snp": "snp_stage",
    "mse": "mse",
    "dci": "dci_stage",
    "asf_in_snp": "snp.asf",
    "asf_in_mse": "mse.asf",
    "asf_in_dci": "dci.asf",
    "edge_branch": "edge_path",
    "reverse_attention": "reverse_weights",
    "attention_in_snp": "snp_attention",
    "leb_in_snp": "leb",
}


@dataclass(frozen=True, eq=False)
class StagePyramid:
    """Everything one forward pass produces, keyed by stage"""
    encoder: Dict[int, Tensor]
    snp: Dict[int, Tensor]
    semantic: Tensor
    predictions: Dict[int, Tensor]
    edges: Dict[int, Optional[Tensor]] = field(default_factory=dict)
    mask: Optional[Tensor] = None

    def tensors(self) -> Dict[str, Tensor]:
        """Flat name -> tensor view used by the stage dump"""
        out: Dict[str, Tensor] = {}
        for stage in STAGES:
            out[f"encoder_{stage}"] = self.encoder[stage]
        for stage in STAGES:
            out[f"snp_{stage}"] = self.snp[stage]
        out["mse"] = self.semantic
        for stage in STAGES:
            out[f"pred_{stage}"] = self.predictions[stage]
        for stage in STAGES:
            edge = self.edges.get(stage)
            if edge is not None:
                out[f"edge_{stage}"] = edge
        if self.mask is not None:
            out["mask"] = self.mask
        return out


@contextlib.contextmanager
def _stage(name: str):
    started = time.perf_counter()
    try:
        with trace_scope(name):
            yield
    except ShapeError as err:
        raise err.with_stage(name) from err
    logger.debug("%s finished in %.3fs", name, time.perf_counter() - started)


# ---------------------------------------------------------------------------
# Shared building blocks
# ---------------------------------------------------------------------------

def fuse(p: LayerParams, parts: Sequence[Optional[Tensor]], widths: Sequence[int]) -> Tensor:
    """
    C_1 over the channel concat of `parts`.

    Absent parts (None) are dropped together with their kernel input columns,
    so a single parameter set serves every ablation of the concat.
    """
    spec = p.spec
    if len(parts) != len(widths):
        raise ShapeError(f"fuse({p.name})", "parts", len(widths), len(parts))
    if sum(widths) != spec.in_channels:
        raise ShapeError(f"fuse({p.name})", "in_channels", spec.in_channels, sum(widths))
    present, columns, offset = [], [], 0
    for part, width in zip(parts, widths):
        if part is not None:
            if part.shape[1] != width:
                raise ShapeError(f"fuse({p.name})", "channels", width, part.shape[1])
            present.append(part)
            columns.append(np.arange(offset, offset + width))
        offset += width
    if not present:
        raise ShapeError(f"fuse({p.name})", "inputs", ">= 1", 0)
    stacked = concat_channels(present)
    if len(present) == len(parts):
        return conv(stacked, p)
    cols = np.concatenate(columns)
    sub = replace(spec, in_channels=len(cols))
    return conv2d(stacked, sub, p.with_kernel(p.kernel[:, cols], sub))


def _local_chain_layout(layout: GraphLayout, prefix: str, in_channels: int, width: int, kernel: int) -> None:
    layout.conv(f"{prefix}.in", in_channels, width)
    layout.depthwise(f"{prefix}.depth", width, kernel)
    layout.conv(f"{prefix}.out", width, width)


def local_chain(x: Tensor, p: ParamScope) -> Tensor:
    """C_1 DC_k C_1"""
    return conv(conv(conv(x, p["in"]), p["depth"]), p["out"])


# ---------------------------------------------------------------------------
# Stub encoder
# ---------------------------------------------------------------------------

def _encoder_layout(layout: GraphLayout, cfg: EncoderConfig) -> None:
    previous = 3
    for stage in STAGES:
        width = cfg.stage_channels(stage)
        second_stride = 2 if stage == STAGES[0] else 1
        layout.conv(f"encoder.s{stage}.conv1", previous, width, kernel=3, stride=2)
        layout.norm(f"encoder.s{stage}.bn1", width)
        layout.conv(f"encoder.s{stage}.conv2", width, width, kernel=3, stride=second_stride)
        layout.norm(f"encoder.s{stage}.bn2", width)
        previous = width


def stub_encoder(image: Tensor, params: Mapping[str, LayerParams]) -> Dict[int, Tensor]:
    """
    Conv3x3 -> BN -> ReLU feature pyramid standing in for a pretrained backbone.

    Args:
        image: (N, 3, H, W) with H and W divisible by 32
        params: Parameter store holding the encoder.* layers

    Returns:
        Dict[int, Tensor]: stage i -> (N, C_i, H/2^i, W/2^i) for i in 2..5
    """
    image = _rank4(image, "stub_encoder")
    n, c, h, w = image.shape
    if c != 3:
        raise ShapeError("stub_encoder", "channels", 3, c)
    if h % SIZE_DIVISOR or w % SIZE_DIVISOR:
        raise ShapeError("stub_encoder", "H,W", f"multiples of {SIZE_DIVISOR}", (h, w))
    scope = ParamScope(params, "encoder")
    x = image
    features: Dict[int, Tensor] = {}
    for stage in STAGES:
        s = scope.child(f"s{stage}")
        for block in (1, 2):
            bn = s[f"bn{block}"]
            x = batch_norm_act(conv(x, s[f"conv{block}"]), bn.scale, bn.shift)
        features[stage] = x
    return features


# ---------------------------------------------------------------------------
# Spectrum-guided non-local perception
# ---------------------------------------------------------------------------

def _snp_layout(layout: GraphLayout, stage: int, cfg: EncoderConfig) -> None:
    u = cfg.unified_width
    cin = cfg.stage_channels(stage) + (u if stage < STAGES[-1] else 0)
    p = f"snp{stage}"
    layout.conv(f"{p}.in1", cin, u)
    layout.norm(f"{p}.attn.norm", u)
    for head in ("q", "k", "v"):
        layout.conv(f"{p}.attn.{head}.point", u, u)
        layout.depthwise(f"{p}.attn.{head}.depth", u, 3)
    asf_layout(layout, f"{p}.asf", u, u)
    layout.conv(f"{p}.in3", 2 * u, u)
    layout.norm(f"{p}.ffn.norm", u)
    layout.conv(f"{p}.ffn.point", u, u)
    layout.depthwise(f"{p}.ffn.depth", u, 3)
    layout.depthwise(f"{p}.ffn.gate_depth", u, 3)
    layout.conv(f"{p}.ffn.asf_in", u, u)
    asf_layout(layout, f"{p}.ffn.asf", u, u)
    layout.conv(f"{p}.ffn.fuse", 2 * u, u)
    for k in (3, 5):
        _local_chain_layout(layout, f"{p}.leb.l{k}", cin, u, k)
    layout.conv(f"{p}.out", 2 * u, u)


def attention_qkv(x: Tensor, p: ParamScope) -> Tuple[Tensor, Tensor, Tensor]:
    """Three independent DC_3(C_1(LN(x))) projections over a shared LN"""
    norm = p["norm"]
    normed = layer_norm(x, norm.scale, norm.shift)
    return tuple(conv(conv(normed, p[f"{head}.point"]), p[f"{head}.depth"]) for head in ("q", "k", "v"))


def attention_map(q: Tensor, k: Tensor) -> Tensor:
    """Row-stochastic C x C map softmax(Q K^T / sqrt(HW)) per sample, shaped (N, C, C)"""
    n, c, h, w = q.shape
    scale = np.float32(1.0 / np.sqrt(h * w))
    maps = [softmax_rows(matmul(q[i].reshape(c, h * w), k[i].reshape(c, h * w).T) * scale) for i in range(n)]
    return np.stack(maps)


def snp_attention(x: Tensor, p: ParamScope) -> Tensor:
    """Channel self-attention F^sam = A V"""
    record_call("snp_attention")
    x = _rank4(x, "snp_attention")
    q, k, v = attention_qkv(x, p)
    attn = attention_map(q, k)
    n, c, h, w = v.shape
    return np.stack([matmul(attn[i], v[i].reshape(c, h * w)).reshape(c, h, w) for i in range(n)])


def gcffn(x: Tensor, p: ParamScope, flags: AblationFlags, method: str = FFT_METHOD) -> Tensor:
    """Gated cross feed-forward network: C_1[g1, g2] + x"""
    u = x.shape[1]
    norm = p["norm"]
    h = conv(conv(layer_norm(x, norm.scale, norm.shift), p["point"]), p["depth"])
    gated = (activate(h, "gelu").astype(ACC) * h).astype(DTYPE)
    g1 = conv(gated, p["gate_depth"])
    g2 = None
    if flags.asf_in_snp:
        g2 = asf(conv(x, p["asf_in"]), AsfParams.from_scope(p.child("asf")), method=method)
    return fuse(p["fuse"], [g1, g2], [u, u]) + x


def upsample_to(x: Optional[Tensor], like: Tensor) -> Optional[Tensor]:
    """Bilinear resize of x onto the spatial grid of `like` (None passes through)"""
    if x is None:
        return None
    return resize_bilinear(x, *like.shape[2:])


def leb(f_e: Tensor, s_next: Optional[Tensor], p: ParamScope) -> Tensor:
    """Local enhancement block: kernel-3 chain + kernel-5 chain over [F_e, S_next] (same grid)"""
    record_call("leb")
    inputs = concat_channels([f_e] if s_next is None else [f_e, s_next])
    return local_chain(inputs, p.child("l3")) + local_chain(inputs, p.child("l5"))


def snp_stage(f_e: Tensor, s_next: Optional[Tensor], p: ParamScope, flags: AblationFlags,
              method: str = FFT_METHOD) -> Tensor:
    """
    One SNP stage: S = C_1[geb, leb] + In1.

    Args:
        f_e: Encoder feature of this stage
        s_next: SNP output of the stage above at its own (half) resolution, None at stage 5;
            it is upsampled onto the grid of f_e before every concat
        p: Scope of this stage's parameters (snp<i>)
        flags: Branch toggles
        method: Fourier transform implementation

    Returns:
        Tensor: (N, U, H_i, W_i)
    """
    record_call("snp_stage")
    s_next = upsample_to(s_next, f_e)
    inputs = [f_e] if s_next is None else [f_e, s_next]
    in1 = conv(concat_channels(inputs), p["in1"])
    u = in1.shape[1]

    sam = None
    if flags.attention_in_snp:
        sam = snp_attention(in1, p.child("attn"))
    f_asf = None
    if flags.asf_in_snp:
        f_asf = asf(in1, AsfParams.from_scope(p.child("asf")), method=method)
    if sam is None and f_asf is None:
        in3 = in1
    else:
        in3 = fuse(p["in3"], [sam, f_asf], [u, u]) + in1

    geb = gcffn(in3, p.child("ffn"), flags, method)
    local = None
    if flags.leb_in_snp:
        local = leb(f_e, s_next, p.child("leb"))
    return fuse(p["out"], [geb, local], [u, u]) + in1


def lateral_stage(f_e: Tensor, s_next: Optional[Tensor], p: ParamScope) -> Tensor:
    """Baseline in place of SNP: the F_e columns of C_1^{In1} plus the upsampled stage above"""
    layer = p["in1"]
    c = f_e.shape[1]
    if s_next is None:
        return fuse(layer, [f_e], [c])
    lateral = fuse(layer, [f_e, None], [c, layer.spec.in_channels - c])
    return lateral + upsample_to(s_next, f_e)


# ---------------------------------------------------------------------------
# Multi-source semantic extractor
# ---------------------------------------------------------------------------

def _mse_layout(layout: GraphLayout, cfg: EncoderConfig) -> None:
    u = cfg.unified_width
    c5 = cfg.stage_channels(STAGES[-1])
    layout.conv("mse.base", c5, u)
    for n, rate in enumerate(DEFAULT_DILATIONS, start=1):
        layout.conv(f"mse.atrous{n}", u, u, kernel=3, dilation=rate)
    layout.conv("mse.gap", c5, u)
    asf_layout(layout, "mse.asf", c5, u)
    layout.conv("mse.fuse", (len(DEFAULT_DILATIONS) + 2) * u, u)
    layout.conv("mse.head", u, 1)


def dense_atrous_branches(base: Tensor, p: ParamScope, dilations: Sequence[int]) -> list:
    """Branch n sees base + the sum of branches 1..n-1, at dilation dilations[n-1]"""
    outputs = []
    running = base
    for n, rate in enumerate(dilations, start=1):
        layer = p[f"atrous{n}"]
        spec = replace(layer.spec, dilation=int(rate))
        out = conv2d(running, spec, layer)
        outputs.append(out)
        running = running + out
    return outputs


def receptive_reach(dilations: Sequence[int]) -> Tuple[int, ...]:
    """Pixel reach of each dense 3x3 branch: cumulative sum of the rates"""
    return tuple(int(r) for r in np.cumsum(dilations))


def mse(f5: Tensor, p: ParamScope, flags: AblationFlags, method: str = FFT_METHOD) -> Tensor:
    """
    Coarse single-channel semantic map F6 from the stage-5 feature.

    A dilation rate at or above the stage-5 extent only reaches zero padding
    off-centre, so filling-rate presets that differ only in such rates give
    identical maps on small grids.
    """
    record_call("mse")
    base = conv(f5, p["base"])
    n, u, h, w = base.shape
    branches = dense_atrous_branches(base, p, flags.dilation_set)
    pooled = conv(global_pool(f5, "avg"), p["gap"])
    pooled = np.ascontiguousarray(np.broadcast_to(pooled, (n, u, h, w)))
    f_asf = None
    if flags.asf_in_mse:
        f_asf = asf(f5, AsfParams.from_scope(p.child("asf")), method=method)
    parts = [*branches, pooled, f_asf]
    fused = fuse(p["fuse"], parts, [u] * len(parts)) + base
    return conv(fused, p["head"])


def coarse_semantic(f5: Tensor, p: ParamScope) -> Tensor:
    """Baseline in place of MSE: C_1 head over C_1 base"""
    return conv(conv(f5, p["base"]), p["head"])


# ---------------------------------------------------------------------------
# Dense cross-layer interaction decoder
# ---------------------------------------------------------------------------

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T


def gradient_function(x: Tensor) -> Tensor:
    """
    Sobel magnitude sqrt(Gx^2 + Gy^2) with replicate padding.

    The result is the edge map itself and is never negative, so read as a
    logit it gives sigmoid >= 0.5 everywhere; the edge Dice term can push it
    towards zero on background but not below.
    """
    x = _rank4(x, "gradient_function")
    if x.shape[1] != 1:
        raise ShapeError("gradient_function", "channels", 1, x.shape[1])
    h, w = x.shape[2:]
    padded = np.pad(x.astype(ACC), ((0, 0), (0, 0), (1, 1), (1, 1)), mode="edge")
    gx = np.zeros(x.shape, dtype=ACC)
    gy = np.zeros(x.shape, dtype=ACC)
    for dy in range(3):
        for dx in range(3):
            window = padded[:, :, dy:dy + h, dx:dx + w]
            gx += SOBEL_X[dy, dx] * window
            gy += SOBEL_Y[dy, dx] * window
    return np.hypot(gx, gy).astype(DTYPE)


def higher_stages(stage: int) -> Tuple[int, ...]:
    """Stages whose predictions feed the decoder at `stage` (at most three, capped at 5)"""
    return tuple(j for j in (stage + 1, stage + 2, stage + 3) if j <= STAGES[-1])


def _dci_layout(layout: GraphLayout, stage: int, cfg: EncoderConfig) -> None:
    u = cfg.unified_width
    p = f"dci{stage}"
    higher = higher_stages(stage)
    for j in higher:
        layout.conv(f"{p}.phi_p{j}", 1, u)
    layout.conv(f"{p}.phi_mse", 1, u)
    layout.conv(f"{p}.cf", u * (2 + len(higher)), u)
    for k in (3, 5):
        _local_chain_layout(layout, f"{p}.edge.b{k}", u, u, k)
        msa_layout(layout, f"{p}.edge.b{k}.msa", u)
    layout.conv(f"{p}.edge.fuse", 2 * u, u)
    layout.conv(f"{p}.edge.head", u, 1)
    asf_layout(layout, f"{p}.oe.asf", u, u)
    for k in (3, 5):
        _local_chain_layout(layout, f"{p}.oe.b{k}", u, u, k)
    layout.conv(f"{p}.oe.fuse", 2 * u, u)
    layout.conv(f"{p}.pred.reduce", 3 * u, u)
    layout.conv(f"{p}.pred.head", u, 1)


def phi(x: Tensor, p: LayerParams, size: Tuple[int, int]) -> Tensor:
    """Resize to the target grid, then C_1 to the target width"""
    return conv(resize_bilinear(x, *size), p)


def reverse_weights(semantic: Tensor, size: Tuple[int, int]) -> Tensor:
    """w = (1 - sigmoid(F6)) + 1 on the target grid; always within [1, 2]"""
    record_call("reverse_weights")
    gate = activate(semantic, "sigmoid").astype(ACC)
    return resize_bilinear(((1.0 - gate) + 1.0).astype(DTYPE), *size)


def edge_path(cf: Tensor, p: ParamScope) -> Tuple[Tensor, Tensor]:
    """MSA-gated kernel-3/kernel-5 chains; returns (edge features, enhanced edge map)"""
    record_call("edge_path")
    b3 = multi_scale_spatial_attention(local_chain(cf, p.child("b3")), MsaParams.from_scope(p.child("b3.msa")))
    b5 = multi_scale_spatial_attention(local_chain(cf, p.child("b5")), MsaParams.from_scope(p.child("b5.msa")))
    features = conv(concat_channels([b3, b5]), p["fuse"])
    return features, gradient_function(conv(features, p["head"]))


def object_path(cf: Tensor, p: ParamScope, flags: AblationFlags, method: str = FFT_METHOD) -> Tensor:
    """Object enhancement: C_1[ASF(cf), chain3(cf) + chain5(cf)]"""
    u = cf.shape[1]
    local = local_chain(cf, p.child("b3")) + local_chain(cf, p.child("b5"))
    f_asf = None
    if flags.asf_in_dci:
        f_asf = asf(cf, AsfParams.from_scope(p.child("asf")), method=method)
    return fuse(p["fuse"], [f_asf, local], [u, u])


def dci_stage(s: Tensor, semantic: Tensor, higher: Mapping[int, Tensor], p: ParamScope,
              flags: AblationFlags, method: str = FFT_METHOD) -> Tuple[Tensor, Optional[Tensor]]:
    """
    One DCI decoder stage.

    Args:
        s: SNP output of this stage (N, U, H_i, W_i)
        semantic: F6 from the semantic extractor
        higher: Predictions of the higher stages this stage consumes, keyed by stage
        p: Scope of this stage's parameters (dci<i>)
        flags: Branch toggles
        method: Fourier transform implementation

    Returns:
        Tuple: (prediction, edge map or None when the edge branch is off), both 1 channel
    """
    record_call("dci_stage")
    s = _rank4(s, "dci_stage")
    n, u, h, w = s.shape
    size = (h, w)
    guides = [phi(higher[j], p[f"phi_p{j}"], size) for j in sorted(higher)]
    cf = conv(concat_channels([s, *guides, phi(semantic, p["phi_mse"], size)]), p["cf"])

    ed, edge = None, None
    if flags.edge_branch:
        ed, edge = edge_path(cf, p.child("edge"))
    oe = object_path(cf, p.child("oe"), flags, method)
    ra = None
    if flags.reverse_attention:
        ra = (reverse_weights(semantic, size).astype(ACC) * cf).astype(DTYPE)

    reduced = fuse(p["pred.reduce"], [ed, ra, oe], [u, u, u])
    prediction = conv(reduced, p["pred.head"]) + resize_bilinear(semantic, h, w)
    return prediction, edge


def dci_stage5(s5: Tensor, semantic: Tensor, p: ParamScope, flags: AblationFlags,
               method: str = FFT_METHOD) -> Tuple[Tensor, Optional[Tensor]]:
    return dci_stage(s5, semantic, {}, p, flags, method)


def coarse_prediction(s: Tensor, guide: Tensor, p: ParamScope) -> Tensor:
    """Baseline in place of DCI: C_1 head over S_i plus the upsampled stage above (F6 at stage 5)"""
    s = _rank4(s, "coarse_prediction")
    return conv(s, p["pred.head"]) + upsample_to(guide, s)


# ---------------------------------------------------------------------------
# Whole graph
# ---------------------------------------------------------------------------

def graph_layout(cfg: EncoderConfig) -> GraphLayout:
    """Full-model layout; ablations only change which layers are read"""
    layout = GraphLayout()
    _encoder_layout(layout, cfg)
    for stage in reversed(STAGES):
        _snp_layout(layout, stage, cfg)
    _mse_layout(layout, cfg)
    for stage in reversed(STAGES):
        _dci_layout(layout, stage, cfg)
    return layout


def decode(snp: Mapping[int, Tensor], semantic: Tensor, params: ParamStore, flags: AblationFlags,
           method: str = FFT_METHOD) -> Tuple[Dict[int, Tensor], Dict[int, Optional[Tensor]]]:
    """Decoder stages 5 -> 2; returns (predictions, edges), edges None where no edge path ran"""
    predictions: Dict[int, Tensor] = {}
    edges: Dict[int, Optional[Tensor]] = {}
    for stage in reversed(STAGES):
        with _stage(f"dci{stage}"):
            scope = ParamScope(params, f"dci{stage}")
            if flags.dci:
                higher = {j: predictions[j] for j in higher_stages(stage)}
                predictions[stage], edges[stage] = dci_stage(snp[stage], semantic, higher, scope, flags, method)
            else:
                guide = predictions.get(stage + 1, semantic)
                predictions[stage], edges[stage] = coarse_prediction(snp[stage], guide, scope), None
    return predictions, edges


def forward(image: Tensor, params: ParamStore, flags: Optional[AblationFlags] = None,
            method: str = FFT_METHOD) -> StagePyramid:
    """
    Run the whole graph on a (N, 3, H, W) image.

    Shape errors are re-raised tagged with the stage they happened in.
    The final mask is sigmoid(resize(P2, H, W)).
    """
    flags = flags or AblationFlags()
    image = _rank4(image, "forward")
    started = time.perf_counter()

    with _stage("encoder"):
        encoder = stub_encoder(image, params)

    snp: Dict[int, Tensor] = {}
    s_next = None
    for stage in reversed(STAGES):
        with _stage(f"snp{stage}"):
            scope = ParamScope(params, f"snp{stage}")
            if flags.snp:
                snp[stage] = snp_stage(encoder[stage], s_next, scope, flags, method)
            else:
                snp[stage] = lateral_stage(encoder[stage], s_next, scope)
            s_next = snp[stage]

    with _stage("mse"):
        scope = ParamScope(params, "mse")
        f5 = encoder[STAGES[-1]]
        semantic = mse(f5, scope, flags, method) if flags.mse else coarse_semantic(f5, scope)

    predictions, edges = decode(snp, semantic, params, flags, method)

    h, w = image.shape[2:]
    mask = activate(resize_bilinear(predictions[STAGES[0]], h, w), "sigmoid")
    logger.debug("forward %s finished in %.3fs", image.shape, time.perf_counter() - started)
    return StagePyramid(encoder, snp, semantic, predictions, edges, mask)
