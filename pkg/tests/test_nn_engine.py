"""Engine correctness: op arithmetic, gradient checks, optimizers, determinism."""

import numpy as np
import pytest

from pxafkit.nn import tensor as T
from pxafkit.nn import BatchNorm, Conv1d, Conv2d, Linear, SGD, Adam
from pxafkit.nn import load_checkpoint, save_checkpoint
from pxafkit.nn.tensor import GraphReleased, NonScalarLoss, ShapeMismatch, Tensor

from fdcheck import check_gradients


class _StubRng:
    """rng.integers stub returning fixed phase-shuffle shifts."""

    def __init__(self, shifts):
        self.shifts = np.asarray(shifts)

    def integers(self, lo, hi, size):
        assert self.shifts.shape == tuple(size)
        return self.shifts


def _away_from_kinks(rng, shape, margin=0.05):
    x = rng.normal(size=shape)
    return x + np.sign(x) * margin


# ---------------------------------------------------------------- forward ops


def test_conv1d_arithmetic():
    x = Tensor(np.array([[[1.0, 2.0, 3.0]]]))
    w = Tensor(np.array([[[1.0, 0.0, -1.0]]]))
    assert T.conv1d(x, w).data.tolist() == [[[-2.0]]]


def test_conv2d_identity_kernel():
    rng = np.random.default_rng(1)
    x = Tensor(rng.normal(size=(2, 3, 6, 6)))
    w = Tensor(np.eye(3).reshape(3, 3, 1, 1))
    np.testing.assert_allclose(T.conv2d(x, w).data, x.data)


def test_max_pool_constant_map():
    x = Tensor(np.full((1, 2, 5, 5), 3.25))
    out = T.max_pool2d(x, 3, 1, 1)
    assert out.shape == (1, 2, 5, 5)
    assert np.all(out.data == 3.25)


def test_conv_output_shape_formula():
    rng = np.random.default_rng(2)
    x = Tensor(rng.normal(size=(1, 1, 39, 39)))
    w = Tensor(rng.normal(size=(4, 1, 3, 3)))
    assert T.conv2d(x, w, stride=2, pad=1).shape == (1, 4, 20, 20)
    wd = Tensor(rng.normal(size=(4, 1, 3, 3)))
    assert T.conv2d(x, wd, stride=2, pad=2, dilation=2).shape == (1, 4, 20, 20)


def test_shape_mismatch_message():
    x = Tensor(np.zeros((1, 2, 8, 8)))
    w = Tensor(np.zeros((4, 3, 3, 3)))
    with pytest.raises(ShapeMismatch, match="2 channels"):
        T.conv2d(x, w)


def test_softmax_rows_sum_to_one_and_shift_invariance():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(5, 7))
    s = T.softmax(Tensor(x), axis=1).data
    np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-12)
    s2 = T.softmax(Tensor(x + 123.456), axis=1).data
    np.testing.assert_allclose(s, s2, atol=1e-12)


def test_phase_shuffle_reflection_rule():
    x = Tensor(np.array([[[1.0, 2.0, 3.0, 4.0]]]))
    for shift, expected in [(-1, [2, 3, 4, 3]), (0, [1, 2, 3, 4]), (1, [2, 1, 2, 3])]:
        out = T.phase_shuffle(x, 1, _StubRng([[shift]]))
        assert out.data[0, 0].tolist() == expected


def test_phase_shuffle_preserves_length():
    rng = np.random.default_rng(4)
    x = Tensor(rng.normal(size=(3, 4, 50)))
    for _ in range(50):
        assert T.phase_shuffle(x, 2, rng).shape == x.shape


# ---------------------------------------------------------------- backward


def test_backward_sum_of_squares():
    x = Tensor([3.0], requires_grad=True)
    (x * x).sum().backward()
    np.testing.assert_allclose(x.grad, [6.0])


def test_backward_unused_parameter_gets_no_gradient():
    x = Tensor([2.0], requires_grad=True)
    p = Tensor([5.0], requires_grad=True)
    (x * x).sum().backward()
    assert p.grad is None  # reported as exactly zero contribution


def test_backward_requires_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(NonScalarLoss):
        (x * x).backward()


def test_backward_twice_raises_graph_released():
    x = Tensor([1.0], requires_grad=True)
    loss = (x * x).sum()
    loss.backward()
    with pytest.raises(GraphReleased):
        loss.backward()


def test_gradients_accumulate_until_zero_grad():
    x = Tensor([2.0], requires_grad=True)
    (x * x).sum().backward()
    (x * x).sum().backward()
    np.testing.assert_allclose(x.grad, [8.0])
    x.zero_grad()
    assert x.grad is None


# ------------------------------------------------- finite-difference checks


def test_grad_elementwise_ops():
    rng = np.random.default_rng(10)
    x = rng.normal(size=(3, 4))
    y = rng.normal(size=(3, 4))
    check_gradients(lambda a, b: (a * b + a).sum(), {"a": x, "b": y})
    check_gradients(lambda a: T.exp(a).sum(), {"a": x})
    check_gradients(lambda a: T.log(a).sum(), {"a": np.abs(x) + 0.5})
    check_gradients(lambda a: T.pow(a, 3.0).sum(), {"a": x})
    check_gradients(lambda a: T.sigmoid(a).mean(), {"a": x})
    check_gradients(lambda a: T.relu(a).sum(), {"a": _away_from_kinks(rng, (4, 5))})
    check_gradients(lambda a: T.leaky_relu(a, 0.2).sum(),
                    {"a": _away_from_kinks(rng, (4, 5))})
    check_gradients(lambda a: T.clip(a, -0.5, 0.5).sum(),
                    {"a": _away_from_kinks(rng, (4, 5), margin=0.1)})


def test_grad_reductions_and_shapes():
    rng = np.random.default_rng(11)
    x = rng.normal(size=(2, 3, 4))
    check_gradients(lambda a: a.sum(axis=(0, 2)).pow(2.0).sum(), {"a": x})
    check_gradients(lambda a: a.mean(axis=1, keepdims=True).pow(2.0).sum(), {"a": x})
    check_gradients(lambda a: T.reshape(a, (6, 4)).pow(2.0).sum(), {"a": x})
    check_gradients(lambda a: T.transpose(a, (2, 0, 1)).pow(2.0).sum(), {"a": x})
    check_gradients(lambda a: a[0, 1:3].pow(2.0).sum(), {"a": x})
    check_gradients(
        lambda a, b: T.concat([a, b], axis=1).pow(2.0).sum(),
        {"a": x, "b": rng.normal(size=(2, 2, 4))})


def test_grad_matmul_and_broadcast():
    rng = np.random.default_rng(12)
    check_gradients(lambda a, b: (a @ b).sum(),
                    {"a": rng.normal(size=(4, 3)), "b": rng.normal(size=(3, 5))})
    check_gradients(lambda a, b: (a + b).pow(2.0).sum(),
                    {"a": rng.normal(size=(4, 1, 3)), "b": rng.normal(size=(5, 3))})


def test_grad_softmax_and_cross_entropy():
    rng = np.random.default_rng(13)
    x = rng.normal(size=(4, 7))
    proj = rng.normal(size=(4, 7))
    check_gradients(lambda a: (T.softmax(a, axis=1) * proj).sum(), {"a": x})
    labels = rng.integers(0, 2, size=6)
    check_gradients(lambda a: T.cross_entropy(a, labels),
                    {"a": rng.normal(size=(6, 2))})


def test_grad_conv1d_variants():
    rng = np.random.default_rng(14)
    for stride, pad, dilation in [(1, 0, 1), (2, 12, 1), (1, 2, 2)]:
        x = rng.normal(size=(2, 3, 20))
        w = rng.normal(size=(4, 3, 5))
        b = rng.normal(size=4)
        check_gradients(
            lambda x, w, b: T.conv1d(x, w, b, stride, pad, dilation).pow(2.0).sum(),
            {"x": x, "w": w, "b": b})


def test_grad_conv2d_dense_and_depthwise():
    rng = np.random.default_rng(15)
    x = rng.normal(size=(2, 3, 8, 8))
    w = rng.normal(size=(4, 3, 3, 3))
    check_gradients(lambda x, w: T.conv2d(x, w, stride=2, pad=1).pow(2.0).sum(),
                    {"x": x, "w": w})
    wd = rng.normal(size=(3, 1, 3, 3))
    check_gradients(
        lambda x, w: T.conv2d(x, w, stride=1, pad=2, dilation=2, groups=3).pow(2.0).sum(),
        {"x": x, "w": wd})


def test_grad_pooling():
    rng = np.random.default_rng(16)
    x = rng.normal(size=(2, 2, 7, 7)) * 3.0  # well-separated values, no argmax ties
    check_gradients(lambda x: T.max_pool2d(x, 3, 2, 1).pow(2.0).sum(), {"x": x})
    check_gradients(lambda x: T.avg_pool2d(x, 3, 2, 1).pow(2.0).sum(), {"x": x})


def test_grad_structural_ops():
    rng = np.random.default_rng(17)
    x = rng.normal(size=(2, 3, 10))
    check_gradients(lambda x: T.upsample_nearest_1d(x, 2).pow(2.0).sum(), {"x": x})
    check_gradients(lambda x: T.pad_constant_1d(x, 3, 2, 0.0).pow(2.0).sum(), {"x": x})
    shifts = np.array([[1, -2, 0], [2, 1, -1]])
    stub = lambda: _StubRng(shifts)
    check_gradients(lambda x: T.phase_shuffle(x, 2, stub()).pow(2.0).sum(), {"x": x})


def test_grad_batch_norm_train_mode():
    rng = np.random.default_rng(18)
    bn = BatchNorm(3)
    x = rng.normal(size=(4, 3, 5))
    proj = rng.normal(size=(4, 3, 5))  # asymmetric loss so no gradient vanishes

    def build(x, gamma, beta):
        bn.gamma = gamma
        bn.beta = beta
        bn.running_mean[:] = 0  # keep buffer updates from drifting between evals
        bn.running_var[:] = 1
        return (bn(x) * proj).pow(2.0).sum()

    check_gradients(build, {"x": x, "gamma": np.ones(3), "beta": np.zeros(3)})


def test_grad_linear_layer():
    rng = np.random.default_rng(19)
    lin = Linear(4, 3, rng=rng)
    x = rng.normal(size=(5, 4))

    def build(x, w, b):
        lin.weight = w
        lin.bias = b
        return lin(x).pow(2.0).sum()

    check_gradients(build, {"x": x, "w": lin.weight.data.copy(),
                            "b": rng.normal(size=3)})


# ---------------------------------------------------------------- layers


def test_batch_norm_inference_is_affine():
    rng = np.random.default_rng(20)
    bn = BatchNorm(2)
    bn.running_mean[:] = [1.0, -1.0]
    bn.running_var[:] = [4.0, 0.25]
    bn.eval()
    x = rng.normal(size=(3, 2, 6))
    y1 = bn(Tensor(x)).data
    y2 = bn(Tensor(2 * x)).data
    # affine map: f(2x) - f(x) == f(3x) - f(2x)
    y3 = bn(Tensor(3 * x)).data
    np.testing.assert_allclose(y2 - y1, y3 - y2, atol=1e-12)
    scale = 1 / np.sqrt(np.array([4.0, 0.25]) + bn.eps)
    np.testing.assert_allclose(
        y1, (x - np.array([1.0, -1.0])[None, :, None]) * scale[None, :, None])


def test_batch_norm_updates_running_stats_in_train_mode():
    rng = np.random.default_rng(21)
    bn = BatchNorm(2)
    x = rng.normal(loc=3.0, size=(8, 2, 16))
    bn(Tensor(x))
    assert np.all(bn.running_mean != 0.0)


# ---------------------------------------------------------------- optimizers


def test_sgd_plain_step():
    p = Tensor([1.0], requires_grad=True)
    p.grad = np.array([2.0])
    SGD([p], lr=0.1).step()
    np.testing.assert_allclose(p.data, [0.8])


def test_sgd_weight_decay_closed_form():
    lam, lr = 3e-4, 0.025
    p = Tensor([2.0], requires_grad=True)
    opt = SGD([p], lr=lr, momentum=0.0, weight_decay=lam)
    opt.step()  # zero gradient
    np.testing.assert_allclose(p.data, [2.0 * (1 - lr * lam)], rtol=1e-12)


def test_sgd_momentum_accumulates_velocity():
    p = Tensor([0.0], requires_grad=True)
    opt = SGD([p], lr=1.0, momentum=0.9)
    p.grad = np.array([1.0])
    opt.step()  # v=1, p=-1
    opt.step()  # v=0.9+1=1.9, p=-2.9
    np.testing.assert_allclose(p.data, [-2.9])


def test_adam_first_step_is_signed_lr():
    for g in (0.7, -2.5):
        p = Tensor([1.0], requires_grad=True)
        p.grad = np.array([g])
        Adam([p], lr=0.01).step()
        np.testing.assert_allclose(p.data, [1.0 - 0.01 * np.sign(g)], atol=1e-8)


# ------------------------------------------------- determinism + checkpoints


def _train_tiny(seed):
    rng = np.random.default_rng(seed)
    lin = Linear(6, 2, rng=rng)
    opt = SGD(lin.parameters(), lr=0.05, momentum=0.9)
    data = rng.normal(size=(20, 6))
    labels = (data.sum(axis=1) > 0).astype(int)
    for _ in range(30):
        loss = T.cross_entropy(lin(Tensor(data)), labels)
        opt.zero_grad()
        loss.backward()
        opt.step()
    return lin.state_dict()

def test_training_is_bitwise_deterministic():
    s1 = _train_tiny(123)
    s2 = _train_tiny(123)
    for k in s1:
        assert np.array_equal(s1[k], s2[k]), k


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(22)
    state = {
        "conv.weight": rng.normal(size=(4, 3, 3, 3)),
        "bn.running_mean": rng.normal(size=4),
        "small": rng.normal(size=(2,)).astype(np.float32),
    }
    path = tmp_path / "model.ckpt"
    digest = save_checkpoint(state, path)
    assert len(digest) == 64
    loaded = load_checkpoint(path)
    assert set(loaded) == set(state)
    for k in state:
        np.testing.assert_array_equal(loaded[k], state[k])


def test_checkpoint_rejects_bad_magic(tmp_path):
    p = tmp_path / "junk.ckpt"
    p.write_bytes(b"NOTACKPT" + b"\x00" * 16)
    from pxafkit.nn.checkpoint import BadCheckpoint
    with pytest.raises(BadCheckpoint):
        load_checkpoint(p)
