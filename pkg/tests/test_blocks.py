import numpy as np
import pytest

from microcnn import blocks as B
from microcnn.graph import ParamStore
from microcnn.tensor_core import precision


def _params(block, seed=0):
    store = ParamStore()
    block.init_params(store, np.random.default_rng(seed), np.float64)
    return store


def test_fire_param_count_small():
    fire = B.build_fire(B.FireConfig(4, 4, 4), (8, 96, 96))
    # squeeze 8*4+4, expand1x1 4*4+4, expand3x3 9*4*4+4
    assert fire.n_params() == 36 + 20 + 148 == 204
    assert fire.out_shape == (8, 96, 96)


def test_fire_param_count_wide():
    fire = B.build_fire(B.FireConfig(16, 16, 16), (8, 96, 96))
    assert fire.n_params() == 144 + 272 + 2320 == 2736
    assert fire.out_shape == (32, 96, 96)


def test_tiny_counts_and_shape():
    tiny = B.build_tiny(B.TinyConfig(4), (1, 96, 96))
    assert tiny.n_params() == 40 + 20 + 192 == 252
    assert tiny.out_shape == (4, 48, 48)
    tiny8 = B.build_tiny(B.TinyConfig(8), (8, 48, 48))
    assert tiny8.n_params() == (9 * 8 * 8 + 8) + (8 * 8 + 8) + 2 * 48 == 752
    assert tiny8.out_shape == (8, 24, 24)


def test_tiny_channel_axis_counts():
    tiny = B.build_tiny(B.TinyConfig(4), (1, 96, 96), bn_mode="channel_axis")
    assert tiny.n_params() == 40 + 20 + 8


def test_smallfire_count_and_shape():
    sf = B.build_smallfire(B.SmallFireConfig(B.FireConfig(4, 4, 4)), (8, 96, 96))
    assert sf.n_params() == 408
    assert sf.out_shape == (8, 48, 48)


@pytest.mark.parametrize("field", ["s1x1", "e1x1", "e3x3"])
def test_fire_rejects_zero(field):
    kw = dict(s1x1=4, e1x1=4, e3x3=4)
    kw[field] = 0
    with pytest.raises(ValueError):
        B.FireConfig(**kw)
    with pytest.raises(ValueError):
        B.TinyConfig(0)


def test_fire_merge_is_channel_concat():
    fire = B.build_fire(B.FireConfig(2, 3, 5), (4, 6, 6))
    p = _params(fire)
    for k in p:
        if k.endswith(".b"):
            p[k] = p[k] + 0.3
    x = np.random.default_rng(1).standard_normal((1, 4, 6, 6))
    y = fire.forward(x, p)
    assert y.shape == (1, 8, 6, 6)
    assert (y >= 0).all()


@pytest.mark.parametrize("builder", ["fire", "tiny", "smallfire"])
def test_inference_is_batch_independent(builder):
    with precision(np.float64):
        if builder == "fire":
            block = B.build_fire(B.FireConfig(4, 4, 4), (8, 16, 16))
        elif builder == "tiny":
            block = B.build_tiny(B.TinyConfig(4), (8, 16, 16))
        else:
            block = B.build_smallfire(B.SmallFireConfig(B.FireConfig(4, 4, 4)), (8, 16, 16))
        p = _params(block)
        x = np.random.default_rng(2).standard_normal((3, 8, 16, 16))
        together = block.forward(x, p)
        apart = np.concatenate([block.forward(x[i:i + 1], p) for i in range(3)])
        np.testing.assert_allclose(together, apart, rtol=1e-12, atol=1e-12)


def test_block_activation_is_relu():
    assert B.BLOCK_ACTIVATION == "relu"
    names = [n.name for n in B.build_tiny(B.TinyConfig(4), (1, 8, 8)).walk()]
    assert names.index("tiny.conv3x3.relu") == names.index("tiny.conv3x3") + 1
    assert names.index("tiny.bn.relu") < names.index("tiny.pool")
