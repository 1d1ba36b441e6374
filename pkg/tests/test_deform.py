import numpy as np
import pytest

from cdgnet.errors import DimensionError
from cdgnet.nn import DeformConv2d, bilinear_sample, deform_conv2d
from cdgnet.nn.deform import deform_conv2d_op
from cdgnet.tensor import Tensor, backward, conv2d, ewise, reduce_sum


def test_zero_offsets_reduce_to_regular_convolution():
    rng = np.random.default_rng(0)
    for _ in range(50):
        cin, cout = rng.integers(1, 4, size=2)
        height, width = rng.integers(3, 7, size=2)
        x = Tensor(rng.normal(size=(1, cin, height, width)))
        w = Tensor(rng.normal(size=(cout, cin, 3, 3)))
        b = Tensor(rng.normal(size=(cout,)))
        offset = Tensor(np.zeros((1, 18, height, width)))
        np.testing.assert_allclose(
            deform_conv2d_op(x, offset, w, b).data, conv2d(x, w, b, pad=1).data, atol=1e-6
        )


def test_integer_offset_shifts_the_sampling_window(rng):
    x = rng.normal(size=(1, 2, 5, 6))
    w = Tensor(rng.normal(size=(3, 2, 3, 3)))
    offset = np.zeros((1, 18, 5, 6))
    offset[:, 1::2] = 1.0
    # сдвигаем уже дополненный нулями вход: крайние тапы читают настоящие пиксели
    padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    shifted = np.zeros_like(padded)
    shifted[..., :, :-1] = padded[..., :, 1:]
    np.testing.assert_allclose(
        deform_conv2d_op(Tensor(x), Tensor(offset), w).data,
        conv2d(Tensor(shifted), w, pad=0).data,
        atol=1e-12,
    )


def test_bilinear_sample_interpolates_and_zero_pads():
    feat = np.arange(12, dtype=np.float64).reshape(1, 1, 3, 4)
    assert bilinear_sample(feat, 1.0, 2.0, 0, 0) == 6.0
    assert bilinear_sample(feat, 0.5, 0.5, 0, 0) == pytest.approx((0 + 1 + 4 + 5) / 4)
    assert bilinear_sample(feat, -1.0, 0.0, 0, 0) == 0.0
    assert bilinear_sample(feat, 2.5, 0.0, 0, 0) == pytest.approx(8.0 / 2)


def test_fresh_layer_starts_as_plain_convolution(rng):
    layer = DeformConv2d(rng, 3, 4)
    assert not layer.offset_conv.weight.data.any()
    x = Tensor(rng.normal(size=(2, 3, 6, 5)).astype(np.float32))
    expected = conv2d(x, layer.weight, layer.bias, pad=1).data
    np.testing.assert_allclose(deform_conv2d(x, layer).data, expected, atol=1e-6)


def test_offsets_must_cover_every_tap(rng):
    x = Tensor(rng.normal(size=(1, 2, 4, 4)))
    w = Tensor(rng.normal(size=(2, 2, 3, 3)))
    with pytest.raises(DimensionError) as info:
        deform_conv2d_op(x, Tensor(np.zeros((1, 16, 4, 4))), w)
    assert info.value.axis == "channel"


def test_offset_gradient_vanishes_on_lattice_points_in_flat_regions(rng):
    x = Tensor(np.full((1, 2, 8, 8), 0.7))
    w = Tensor(rng.normal(size=(3, 2, 3, 3)))
    offset = Tensor(np.zeros((1, 18, 8, 8)), requires_grad=True)
    out = deform_conv2d_op(x, offset, w)
    weights = Tensor(rng.normal(size=out.shape))
    backward(reduce_sum(ewise(out, weights, "mul")), [offset])
    np.testing.assert_array_equal(offset.grad[..., 2:6, 2:6], 0.0)
    assert offset.grad[..., 7, :].any()
