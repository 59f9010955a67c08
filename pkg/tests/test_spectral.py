import numpy as np
import pytest

from errors import ShapeError
from params import GraphLayout, ParamScope, init_params
from spectral import (
    AsfParams, ComplexTensor, asf, asf_layout, fft2d, ifft2d, joint_attention, modulus,
    multi_scale_spatial_attention, MsaParams, msa_layout, spectral_filter, spectrum_weights,
)
from tensor_ops import batch_norm_act, conv, layer_norm


def dft_oracle(x, inverse=False):
    h, w = x.shape
    sign = 1.0 if inverse else -1.0
    out = np.zeros((h, w), dtype=complex)
    for u in range(h):
        for v in range(w):
            total = 0j
            for m in range(h):
                for n in range(w):
                    total += x[m, n] * np.exp(sign * 2j * np.pi * (u * m / h + v * n / w))
            out[u, v] = total
    if inverse:
        out /= h * w
    return out


@pytest.fixture
def asf_params():
    layout = GraphLayout()
    asf_layout(layout, "filter", 3, 4)
    return AsfParams.from_scope(ParamScope(init_params(layout, 5), "filter"))


def test_constant_input_has_only_dc():
    spectrum = fft2d(np.full((4, 4), 2.0))
    assert spectrum.re[0, 0] == pytest.approx(32.0)
    rest = np.ones((4, 4), bool)
    rest[0, 0] = False
    np.testing.assert_allclose(spectrum.re[rest], 0.0, atol=1e-5)
    np.testing.assert_allclose(spectrum.im, 0.0, atol=1e-5)


def test_unit_impulse_has_flat_spectrum():
    x = np.zeros((4, 4))
    x[0, 0] = 1.0
    spectrum = fft2d(x)
    np.testing.assert_allclose(spectrum.re, 1.0, atol=1e-6)
    np.testing.assert_allclose(spectrum.im, 0.0, atol=1e-6)


@pytest.mark.parametrize("shape,method", [((3, 5), "direct"), ((8, 8), "radix2"), ((4, 8), "auto")])
def test_forward_transform_matches_double_sum(rng, shape, method):
    x = rng.standard_normal(shape)
    expected = dft_oracle(x)
    spectrum = fft2d(x, method)
    np.testing.assert_allclose(spectrum.to_array(), expected, atol=1e-4)


def test_inverse_transform_matches_double_sum(rng):
    z = rng.standard_normal((4, 6)) + 1j * rng.standard_normal((4, 6))
    out = ifft2d(ComplexTensor.from_array(z), "direct")
    np.testing.assert_allclose(out.to_array(), dft_oracle(z, inverse=True), atol=1e-5)


@pytest.mark.parametrize("size", [4, 8, 16, 32])
@pytest.mark.parametrize("method", ["direct", "radix2"])
def test_round_trip_recovers_input(rng, size, method):
    x = rng.standard_normal((2, 3, size, size)).astype(np.float32)
    back = ifft2d(fft2d(x, method), method)
    np.testing.assert_allclose(back.re, x, atol=1e-4)
    np.testing.assert_allclose(back.im, 0.0, atol=1e-4)


def test_radix2_agrees_with_direct(rng):
    x = rng.standard_normal((1, 2, 16, 8))
    np.testing.assert_allclose(fft2d(x, "radix2").to_array(), fft2d(x, "direct").to_array(), atol=1e-3)


def test_parseval_and_linearity(rng):
    x = rng.standard_normal((8, 8))
    y = rng.standard_normal((8, 8))
    fx = fft2d(x).to_array()
    fy = fft2d(y).to_array()
    assert np.sum(np.abs(fx) ** 2) / 64 == pytest.approx(np.sum(x ** 2), rel=1e-4)
    np.testing.assert_allclose(fft2d(2 * x + 3 * y).to_array(), 2 * fx + 3 * fy, atol=1e-3)
    assert fx[0, 0].real == pytest.approx(x.sum(), abs=1e-4)


def test_modulus_is_hypot():
    spectrum = ComplexTensor(np.array([3.0, 0.0], np.float32), np.array([4.0, -2.0], np.float32))
    np.testing.assert_array_equal(modulus(spectrum), [5.0, 2.0])


def test_complex_tensor_rejects_mismatched_planes():
    with pytest.raises(ShapeError):
        ComplexTensor(np.zeros((2, 2)), np.zeros((2, 3)))


def test_method_errors():
    with pytest.raises(ShapeError):
        fft2d(np.zeros((6, 6)), "radix2")
    with pytest.raises(ValueError):
        fft2d(np.zeros((4, 4)), "bluestein")
    with pytest.raises(ShapeError):
        fft2d(np.zeros(4))


def test_bypassed_joint_attention_doubles_spectrum(rng):
    spectrum = fft2d(rng.standard_normal((1, 2, 4, 4)))
    doubled = joint_attention(spectrum, None, bypass=True)
    np.testing.assert_allclose(doubled.re, 2 * spectrum.re, rtol=1e-6)
    np.testing.assert_allclose(doubled.im, 2 * spectrum.im, rtol=1e-6)


def test_bypassed_spectral_filter_doubles_magnitude(rng):
    y = rng.standard_normal((1, 2, 8, 8)).astype(np.float32)
    np.testing.assert_allclose(spectral_filter(y, None, bypass=True), 2 * np.abs(y), atol=1e-4)


def test_spectrum_weights_are_bounded(rng, asf_params):
    spectrum = fft2d(rng.standard_normal((1, 4, 8, 8)))
    w = spectrum_weights(spectrum, asf_params)
    assert w.shape == (1, 4, 8, 8)
    assert np.all(w >= 0.0) and np.all(w <= 2.0)


def test_zero_spectrum_stays_finite_and_zero(asf_params):
    zero = ComplexTensor(np.zeros((1, 4, 4, 4), np.float32), np.zeros((1, 4, 4, 4), np.float32))
    assert np.all(np.isfinite(spectrum_weights(zero, asf_params)))
    out = joint_attention(zero, asf_params)
    assert not out.re.any() and not out.im.any()


def test_joint_attention_preserves_phase(rng, asf_params):
    spectrum = fft2d(rng.standard_normal((1, 4, 8, 8)))
    out = joint_attention(spectrum, asf_params)
    mask = modulus(spectrum) > 1e-3
    phase_in = np.arctan2(spectrum.im, spectrum.re)[mask]
    phase_out = np.arctan2(out.im, out.re)[mask]
    np.testing.assert_allclose(np.cos(phase_out - phase_in), 1.0, atol=1e-4)


def test_multi_scale_spatial_attention_is_gated_sum(rng):
    layout = GraphLayout()
    msa_layout(layout, "msa", 3)
    p = MsaParams.from_scope(ParamScope(init_params(layout, 1), "msa"))
    x = rng.standard_normal((1, 3, 6, 6)).astype(np.float32)
    out = multi_scale_spatial_attention(x, p)
    # each gate lies in (0, 1), so the sum of two gates stays in (0, 2)
    ratio = out[np.abs(x) > 1e-3] / x[np.abs(x) > 1e-3]
    assert np.all(ratio > 0.0) and np.all(ratio < 2.0)


def test_asf_is_composition_of_its_stages(rng, asf_params):
    x = rng.standard_normal((1, 3, 8, 8)).astype(np.float32)
    projected = conv(layer_norm(x, asf_params.norm.scale, asf_params.norm.shift), asf_params.proj)
    expected = batch_norm_act(spectral_filter(projected, asf_params),
                              asf_params.out_norm.scale, asf_params.out_norm.shift)
    np.testing.assert_array_equal(asf(x, asf_params), expected)


def test_asf_output_shape_and_sign(rng, asf_params):
    x = rng.standard_normal((2, 3, 8, 8)).astype(np.float32)
    out = asf(x, asf_params)
    assert out.shape == (2, 4, 8, 8)
    assert out.dtype == np.float32
    assert np.all(out >= 0.0)
    bypassed = asf(x, asf_params, bypass=True)
    assert bypassed.shape == out.shape
