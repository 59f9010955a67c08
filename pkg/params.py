"""
Parameter layout, seeded initialization and scoped lookup
The layout is the single source of truth for every learnable tensor name and shape
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterator, Mapping, Tuple, Union

import numpy as np

from errors import WeightsError
from tensor_ops import DTYPE, ConvSpec, LayerParams

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NormSpec:
    """Affine scale/shift over `channels`"""
    channels: int


LayerSpec = Union[ConvSpec, NormSpec]
ParamStore = Dict[str, LayerParams]


class GraphLayout:
    """Ordered registry of every learnable layer in the graph"""

    def __init__(self):
        self._specs: Dict[str, LayerSpec] = {}

    def _add(self, name: str, spec: LayerSpec) -> None:
        if name in self._specs:
            raise WeightsError(name, f"duplicate layer {name}")
        self._specs[name] = spec

    def conv(self, name: str, in_channels: int, out_channels: int, kernel: int = 1,
             dilation: int = 1, stride: int = 1) -> None:
        self._add(name, ConvSpec(in_channels, out_channels, kernel, dilation, False, stride))

    def depthwise(self, name: str, channels: int, kernel: int) -> None:
        self._add(name, ConvSpec(channels, channels, kernel, 1, True, 1))

    def norm(self, name: str, channels: int) -> None:
        self._add(name, NormSpec(channels))

    def __getitem__(self, name: str) -> LayerSpec:
        return self._specs[name]

    def __contains__(self, name: str) -> bool:
        return name in self._specs

    def __iter__(self) -> Iterator[str]:
        return iter(self._specs)

    def __len__(self) -> int:
        return len(self._specs)

    def items(self):
        return self._specs.items()

    def tensor_shapes(self) -> Dict[str, Tuple[int, ...]]:
        """Every stored tensor name mapped to its shape, in layout order"""
        shapes: Dict[str, Tuple[int, ...]] = {}
        for name, spec in self._specs.items():
            if isinstance(spec, ConvSpec):
                shapes[f"{name}.kernel"] = spec.kernel_shape
                shapes[f"{name}.bias"] = (spec.out_channels,)
            else:
                shapes[f"{name}.scale"] = (spec.channels,)
                shapes[f"{name}.shift"] = (spec.channels,)
        return shapes


def count_parameters(layout: GraphLayout) -> int:
    """Number of learnable scalars in the layout"""
    return int(sum(np.prod(shape) for shape in layout.tensor_shapes().values()))


def init_params(layout: GraphLayout, seed: int) -> ParamStore:
    """
    Kaiming-uniform kernels, zero biases, unit norm scales and zero shifts.

    A single PCG64 stream is consumed in layout order, so the same seed and
    layout always produce identical parameters.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    store: ParamStore = {}
    for name, spec in layout.items():
        if isinstance(spec, ConvSpec):
            bound = np.sqrt(6.0 / spec.fan_in)
            kernel = rng.uniform(-bound, bound, size=spec.kernel_shape).astype(DTYPE)
            bias = np.zeros(spec.out_channels, dtype=DTYPE)
            store[name] = LayerParams(name, kernel=kernel, bias=bias, spec=spec)
        else:
            store[name] = LayerParams(name, scale=np.ones(spec.channels, dtype=DTYPE),
                                      shift=np.zeros(spec.channels, dtype=DTYPE))
    logger.debug("initialized %d layers from seed %d", len(store), seed)
    return store


def params_to_tensors(store: Mapping[str, LayerParams]) -> Dict[str, np.ndarray]:
    tensors: Dict[str, np.ndarray] = {}
    for layer in store.values():
        tensors.update(layer.tensors())
    return tensors


def params_from_tensors(layout: GraphLayout, tensors: Mapping[str, np.ndarray]) -> ParamStore:
    """
    Rebuild a parameter store, checking names and shapes against the layout.

    Raises:
        WeightsError: missing parameter, unknown parameter or shape mismatch
    """
    shapes = layout.tensor_shapes()
    for name, shape in shapes.items():
        if name not in tensors:
            raise WeightsError(name, f"missing parameter {name}")
        actual = tuple(np.shape(tensors[name]))
        if actual != shape:
            raise WeightsError(name, f"parameter {name}: shape expected {shape}, got {actual}")
    for name in tensors:
        if name not in shapes:
            raise WeightsError(name, f"unknown parameter {name}")

    def get(key):
        return np.asarray(tensors[key], dtype=DTYPE)

    store: ParamStore = {}
    for name, spec in layout.items():
        if isinstance(spec, ConvSpec):
            store[name] = LayerParams(name, kernel=get(f"{name}.kernel"),
                                      bias=get(f"{name}.bias"), spec=spec)
        else:
            store[name] = LayerParams(name, scale=get(f"{name}.scale"), shift=get(f"{name}.shift"))
    return store


class ParamScope(Mapping):
    """Read-only view of a parameter store under a dotted prefix"""

    def __init__(self, store: Mapping[str, LayerParams], prefix: str = ""):
        self._store = store
        self.prefix = prefix

    def _full(self, key: str) -> str:
        return f"{self.prefix}.{key}" if self.prefix else key

    def __getitem__(self, key: str) -> LayerParams:
        full = self._full(key)
        try:
            return self._store[full]
        except KeyError:
            raise WeightsError(full, f"missing parameter {full}") from None

    def __contains__(self, key) -> bool:
        return self._full(key) in self._store

    def __iter__(self):
        head = f"{self.prefix}." if self.prefix else ""
        return (name[len(head):] for name in self._store if name.startswith(head))

    def __len__(self) -> int:
        return sum(1 for _ in self)

    def child(self, name: str) -> "ParamScope":
        return ParamScope(self._store, self._full(name))
