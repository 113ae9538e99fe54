import numpy as np
import pytest

from pointdet.nn.autodiff import Tensor
from pointdet.nn.checkpoint import FORMAT_VERSION, MAGIC, load_checkpoint, save_checkpoint
from pointdet.nn.layers import MlpSpec, forward_mlp, init_mlp_params, sa_layer


def test_mlp_spec_defaults_relu_then_none():
    spec = MlpSpec((4, 8, 2))
    assert spec.activations == ("relu", "none")
    assert spec.in_width == 4 and spec.out_width == 2


def test_mlp_spec_validation():
    with pytest.raises(ValueError):
        MlpSpec((4,))
    with pytest.raises(ValueError):
        MlpSpec((4, 0))
    with pytest.raises(ValueError):
        MlpSpec((4, 2), activations=("tanh",))
    with pytest.raises(ValueError):
        MlpSpec((4, 8, 2), activations=("relu",))


def test_forward_mlp_manual_linear():
    spec = MlpSpec((2, 1), activations=("none",))
    w = Tensor(np.array([[2.0], [3.0]]))
    b = Tensor(np.array([1.0]))
    out = forward_mlp(spec, [w, b], Tensor(np.array([[1.0, 1.0]])))
    assert out.data[0, 0] == pytest.approx(6.0)


def test_forward_mlp_width_check():
    spec = MlpSpec((3, 2))
    params = init_mlp_params(spec, np.random.default_rng(0))
    with pytest.raises(ValueError):
        forward_mlp(spec, params, Tensor(np.zeros((4, 5))))


def test_forward_mlp_handles_3d_input():
    spec = MlpSpec((3, 4))
    params = init_mlp_params(spec, np.random.default_rng(1))
    x = Tensor(np.random.default_rng(2).normal(size=(5, 7, 3)))
    out = forward_mlp(spec, params, x)
    assert out.shape == (5, 7, 4)
    flat = forward_mlp(spec, params, x.reshape(35, 3))
    np.testing.assert_allclose(out.data.reshape(35, 4), flat.data)


def test_forward_mlp_gradients_flow_to_params():
    spec = MlpSpec((2, 3, 1))
    params = init_mlp_params(spec, np.random.default_rng(3))
    out = forward_mlp(spec, params, Tensor(np.ones((4, 2)))).sum()
    out.backward()
    assert all(p.grad is not None for p in params)


def test_sa_layer_permutation_invariant_over_neighbors():
    """Max pooling makes the set abstraction invariant to neighbor order."""
    rng = np.random.default_rng(4)
    spec = MlpSpec((5, 8))
    params = init_mlp_params(spec, rng)
    post = MlpSpec((8, 6))
    post_params = init_mlp_params(post, rng)
    block = rng.normal(size=(3, 10, 5))
    shuffled = block[:, rng.permutation(10), :]
    a = sa_layer([block], [spec], [params], post, post_params)
    b = sa_layer([shuffled], [spec], [params], post, post_params)
    np.testing.assert_allclose(a.data, b.data, atol=1e-12)


def test_sa_layer_multi_scale_concat_width():
    rng = np.random.default_rng(5)
    specs = [MlpSpec((5, 4)), MlpSpec((5, 6))]
    params = [init_mlp_params(s, rng) for s in specs]
    post = MlpSpec((10, 3))
    post_params = init_mlp_params(post, rng)
    blocks = [rng.normal(size=(2, 8, 5)), rng.normal(size=(2, 16, 5))]
    out = sa_layer(blocks, specs, params, post, post_params)
    assert out.shape == (2, 3)


# ---------------------------------------------------------------------------
# checkpoints


def test_checkpoint_roundtrip(tmp_path):
    arrays = {
        "b": np.arange(6.0).reshape(2, 3),
        "a": np.array([3.5]),
    }
    meta = {"note": "x", "k": 2}
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, arrays, meta)
    back, got_meta = load_checkpoint(path)
    assert got_meta == meta
    assert set(back) == {"a", "b"}
    np.testing.assert_array_equal(back["b"], arrays["b"])
    np.testing.assert_array_equal(back["a"], [3.5])


def test_checkpoint_bytes_are_deterministic(tmp_path):
    arrays = {"w": np.random.default_rng(0).normal(size=(4, 4))}
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(p1, arrays, {"m": 1})
    save_checkpoint(p2, arrays, {"m": 1})
    assert p1.read_bytes() == p2.read_bytes()


def test_checkpoint_header_layout(tmp_path):
    path = tmp_path / "c.ckpt"
    save_checkpoint(path, {"x": np.zeros(2)}, {})
    raw = path.read_bytes()
    assert raw[:4] == MAGIC
    assert int.from_bytes(raw[4:8], "little") == FORMAT_VERSION


def test_checkpoint_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(ValueError):
        load_checkpoint(path)


def test_checkpoint_rejects_truncation(tmp_path):
    path = tmp_path / "t.ckpt"
    save_checkpoint(path, {"x": np.zeros(100)}, {})
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(ValueError):
        load_checkpoint(path)
