import numpy as np
import pytest

from cdgnet.errors import ConfigError
from cdgnet.nn.blocks import ACDA, RDB, ChannelAttention, ResBlock, SpatialAttention
from cdgnet.tensor import Tensor, backward, mean, precision


def test_resblock_keeps_shape_and_is_identity_with_zero_tail(rng):
    block = ResBlock(rng, 6)
    x = Tensor(rng.normal(size=(2, 6, 5, 5)).astype(np.float32))
    assert block(x).shape == x.shape
    block.conv2.weight.data[:] = 0
    block.conv2.bias.data[:] = 0
    np.testing.assert_array_equal(block(x).data, x.data)


def test_bottleneck_resblock_is_lighter(rng):
    full = ResBlock(rng, 8)
    narrow = ResBlock(rng, 8, hidden=4)
    assert sum(p.size for p in narrow.parameters()) < sum(p.size for p in full.parameters())


def test_rdb_dense_connectivity(rng):
    block = RDB(rng, 8)
    assert block.layer_inputs() == [8, 12, 16, 20]
    assert block.fusion.weight.shape == (8, 24, 1, 1)
    x = Tensor(rng.normal(size=(1, 8, 6, 6)).astype(np.float32))
    assert block(x).shape == (1, 8, 6, 6)


def test_channel_attention_is_a_per_channel_gate(rng):
    module = ChannelAttention(rng, 16, 8)
    gate = module(Tensor(rng.normal(size=(2, 16, 5, 5)).astype(np.float32)))
    assert gate.shape == (2, 16, 1, 1)
    assert np.all((gate.data > 0) & (gate.data < 1))


def test_channel_attention_rejects_bad_reduction(rng):
    with pytest.raises(ConfigError) as info:
        ChannelAttention(rng, 12, 8)
    assert info.value.key == "reduction_ratio"


def test_spatial_attention_is_single_channel(rng):
    module = SpatialAttention(rng, 8)
    gate = module(Tensor(rng.normal(size=(1, 8, 4, 6)).astype(np.float32)))
    assert gate.shape == (1, 1, 4, 6)
    assert np.all((gate.data > 0) & (gate.data < 1))


def test_acda_composition(rng):
    module = ACDA(rng, 8, 4, "full")
    f = Tensor(rng.normal(size=(1, 8, 4, 4)).astype(np.float32))
    out, maps = module.attend(f)
    expected = f.data * maps.channel.data * maps.spatial.data + f.data
    np.testing.assert_allclose(out.data, expected, rtol=1e-6)


def test_acda_ablation_modes(rng):
    f = Tensor(rng.normal(size=(1, 8, 4, 4)).astype(np.float32))
    out, maps = ACDA(rng, 8, 4, "none").attend(f)
    assert out is f
    assert maps.channel is None and maps.spatial is None

    out, maps = ACDA(rng, 8, 4, "channel").attend(f)
    assert maps.spatial is None
    np.testing.assert_allclose(out.data, f.data * maps.channel.data + f.data, rtol=1e-6)

    with pytest.raises(ConfigError):
        ACDA(rng, 8, 4, "both")


def test_rdb_backpropagates_to_every_parameter(rng):
    block = RDB(rng, 4)
    x = Tensor(rng.normal(size=(1, 4, 5, 5)).astype(np.float32), requires_grad=True)
    backward(mean(block(x)), [x, *block.parameters()])
    assert x.grad.shape == x.shape
    for param in block.parameters():
        assert param.grad.shape == param.shape
        assert np.all(np.isfinite(param.grad))
    assert block.fusion.weight.grad.any()


def _zero_parameters(module):
    for param in module.parameters():
        param.data[...] = 0


def test_acda_with_zeroed_parameters_scales_by_one_and_a_quarter(rng):
    module = ACDA(rng, 8, 4, "full")
    _zero_parameters(module)
    f = Tensor(rng.normal(size=(1, 8, 4, 4)))
    with precision(np.float64):
        module.astype(np.float64)
        out = module(f)
    np.testing.assert_allclose(out.data, 1.25 * f.data, rtol=1e-12)


def test_acda_with_saturated_maps_doubles_the_input(rng):
    module = ACDA(rng, 8, 4, "full")
    _zero_parameters(module)
    module.channel.excite.bias.data[...] = 50.0
    module.spatial.head.bias.data[...] = 50.0
    f = Tensor(rng.normal(size=(1, 8, 4, 4)))
    with precision(np.float64):
        module.astype(np.float64)
        out = module(f)
    np.testing.assert_allclose(out.data, 2.0 * f.data, atol=1e-6)


def test_channel_attention_ignores_pixel_order(rng):
    module = ChannelAttention(rng, 8, 4)
    module.astype(np.float64)
    f = rng.normal(size=(1, 8, 5, 6))
    flat = f.reshape(1, 8, -1)
    shuffled = flat[:, :, rng.permutation(flat.shape[-1])].reshape(f.shape)
    with precision(np.float64):
        np.testing.assert_allclose(module(Tensor(shuffled)).data, module(Tensor(f)).data, rtol=1e-12)
