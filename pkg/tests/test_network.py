import runpy
from pathlib import Path

import numpy as np
import pytest
from oracles import central_diff, max_rel_error

from microcnn import architectures as A
from microcnn.network import Network
from microcnn.tensor_core import ShapeError, precision


def test_forward_probabilities_and_predict():
    net = Network(A.tinynet(4, 2), seed=1)
    x = np.random.default_rng(0).uniform(0, 1, (3, 1, 96, 96)).astype(np.float32)
    p = net(x)
    assert p.shape == (3, 11, 1, 1) and p.dtype == np.float32
    np.testing.assert_allclose(p.sum(axis=1), 1, atol=1e-6)
    np.testing.assert_array_equal(net.predict(x), p[:, :, 0, 0].argmax(axis=1))


def test_same_seed_same_init():
    a, b = Network(A.smallfirenet(1), seed=4), Network(A.smallfirenet(1), seed=4)
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)
    c = Network(A.smallfirenet(1), seed=5)
    assert not np.array_equal(a.params["L0.conv.w"], c.params["L0.conv.w"])


def test_init_conventions():
    params = Network(A.tinynet(4, 1), seed=0).params
    assert not params["L0.conv3x3.b"].any()
    assert (params["L0.bn.gamma"] == 1).all() and not params["L0.bn.beta"].any()
    assert (params["L0.bn.var"] == 1).all() and not params["L0.bn.mean"].any()
    limit = np.sqrt(6 / (9 * 1 + 9 * 4))
    assert np.abs(params["L0.conv3x3.w"]).max() <= limit


def test_input_shape_checked():
    net = Network(A.tinynet(4, 1))
    with pytest.raises(ShapeError):
        net(np.zeros((1, 1, 64, 64), np.float32))


def test_param_set_checked():
    params = Network(A.tinynet(4, 1)).params
    params["L0.conv3x3.w"] = np.zeros((4, 1, 5, 5), np.float32)
    with pytest.raises(ShapeError):
        Network(A.tinynet(4, 1), params)


def test_input_gradient_matches_finite_differences():
    spec = A.tinynet(2, 1, classes=3, bn_mode="channel_axis").with_input(6)
    with precision(np.float64):
        net = Network(spec, seed=2, dtype=np.float64)
        rng = np.random.default_rng(2)
        x = rng.uniform(0, 1, (2, 1, 6, 6))
        w = rng.standard_normal((2, 3, 1, 1))

        def f(v):
            return float((net.logits(v, train=True) * w).sum())

        f(x)
        _, dx = net.backward(w)
        assert max_rel_error(dx, central_diff(f, x, h=1e-6)) < 1e-4


@pytest.mark.parametrize("script", ["plot_parameter_budget.py", "plot_model_files.py"])
def test_gallery_scripts_run(script, capsys):
    runpy.run_path(str(Path(__file__).parents[1] / "gallery" / script), run_name="__main__")
    assert capsys.readouterr().out
