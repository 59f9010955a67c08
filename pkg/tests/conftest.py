"""
Shared fixtures: seeded generators, desk-scale graph configs and layer factories
"""

import numpy as np
import pytest

from config import DESK_ENCODER_CHANNELS, MIN_UNIFIED_WIDTH
from network import EncoderConfig, forward, graph_layout
from params import init_params
from tensor_ops import ConvSpec, LayerParams

DESK_SIZE = 64
DESK_SEED = 42


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(1234))


@pytest.fixture(scope="session")
def desk_cfg():
    return EncoderConfig(DESK_SIZE, DESK_ENCODER_CHANNELS, MIN_UNIFIED_WIDTH)


@pytest.fixture(scope="session")
def desk_layout(desk_cfg):
    return graph_layout(desk_cfg)


@pytest.fixture(scope="session")
def desk_params(desk_layout):
    return init_params(desk_layout, DESK_SEED)


@pytest.fixture(scope="session")
def desk_image():
    gen = np.random.Generator(np.random.PCG64(7))
    return gen.random((1, 3, DESK_SIZE, DESK_SIZE)).astype(np.float32)


@pytest.fixture(scope="session")
def desk_pyramid(desk_image, desk_params):
    return forward(desk_image, desk_params)


@pytest.fixture
def conv_layer(rng):
    """Factory for a conv LayerParams with random (or given) kernel and zero bias"""
    def make(name, cin, cout, kernel=1, dilation=1, depthwise=False, stride=1, weights=None):
        spec = ConvSpec(cin, cout, kernel, dilation, depthwise, stride)
        if weights is None:
            weights = rng.uniform(-0.5, 0.5, size=spec.kernel_shape)
        return LayerParams(name, kernel=np.asarray(weights, dtype=np.float32),
                           bias=np.zeros(cout, dtype=np.float32), spec=spec)
    return make


@pytest.fixture
def identity_layer():
    """Factory for convolutions that pass their input through unchanged"""
    def make(name, channels, kernel=1, depthwise=False):
        spec = ConvSpec(channels, channels, kernel, 1, depthwise, 1)
        weights = np.zeros(spec.kernel_shape, dtype=np.float32)
        centre = kernel // 2
        for c in range(channels):
            weights[c, 0 if depthwise else c, centre, centre] = 1.0
        return LayerParams(name, kernel=weights, bias=np.zeros(channels, dtype=np.float32), spec=spec)
    return make
