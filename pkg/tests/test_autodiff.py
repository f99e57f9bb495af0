import numpy as np
import pytest

from latentflow import autodiff as ad
from latentflow.exceptions import NumericalError


def scalar(x):
    return ad.Tensor(np.asarray(x, dtype=np.float64))


def test_multiply_product_rule():
    store = ad.ParamStore()
    x = store.create("x", 3.0)
    y = store.create("y", 4.0)
    with ad.Tape() as tape:
        out = ad.mul(x, y)
    assert out.item() == 12.0
    grads = ad.backward(out, store, tape)
    assert grads["x"] == 4.0 and grads["y"] == 3.0


def test_conv1d_identity_kernel():
    x = ad.Tensor(np.array([[[1.0, 2.0, 3.0]]]))
    w = ad.Tensor(np.ones((1, 1, 1)))
    out = ad.conv1d(x, w, dilation=1)
    np.testing.assert_array_equal(out.data, [[[1.0, 2.0, 3.0]]])


def test_leaky_relu_value_and_gradient():
    store = ad.ParamStore()
    x = store.create("x", -1.0)
    with ad.Tape() as tape:
        out = ad.leaky_relu(x, slope=0.1)
    assert out.item() == pytest.approx(-0.1)
    grads = ad.backward(out, store, tape)
    assert grads["x"] == pytest.approx(0.1)


def test_backward_sum_of_squares():
    store = ad.ParamStore()
    w = store.create("w", [1.0, 2.0])
    with ad.Tape() as tape:
        loss = ad.total(ad.mul(w, w))
    grads = ad.backward(loss, store, tape)
    np.testing.assert_allclose(grads["w"], [2.0, 4.0])


def test_backward_unreachable_param_gets_zeros():
    store = ad.ParamStore()
    w = store.create("w", [1.0, 2.0])
    v = store.create("v", [5.0, 5.0])
    with ad.Tape() as tape:
        loss = ad.total(ad.square(w))
    grads = ad.backward(loss, store, tape)
    np.testing.assert_array_equal(grads["v"], [0.0, 0.0])
    assert grads["v"].shape == v.data.shape


def test_backward_requires_scalar_loss():
    store = ad.ParamStore()
    w = store.create("w", [1.0, 2.0])
    with ad.Tape() as tape:
        loss = ad.square(w)
    with pytest.raises(ValueError, match="scalar"):
        ad.backward(loss, store, tape)


def test_two_layer_net_37_params_matches_finite_differences():
    rng = np.random.default_rng(7)
    store = ad.ParamStore()
    w1 = store.create("w1", rng.standard_normal((5, 4)) * 0.5)
    b1 = store.create("b1", rng.standard_normal(5) * 0.1)
    w2 = store.create("w2", rng.standard_normal((2, 5)) * 0.5)
    b2 = store.create("b2", rng.standard_normal(2) * 0.1)
    assert store.n_parameters() == 37
    x = rng.standard_normal((4, 3))

    def loss_fn():
        h = ad.tanh(ad.add_channel_bias(ad.matmul(w1, ad.Tensor(x)), b1))
        out = ad.add_channel_bias(ad.matmul(w2, h), b2)
        return ad.mean(ad.square(out))

    assert ad.finite_diff_check(loss_fn, store, h=1e-5) < 1e-4


@pytest.mark.parametrize(
    "name,builder",
    [
        ("add", lambda x, y: ad.add(x, y)),
        ("sub", lambda x, y: ad.sub(x, y)),
        ("mul", lambda x, y: ad.mul(x, y)),
        ("leaky_relu", lambda x, y: ad.leaky_relu(ad.mul(x, y), 0.2)),
        ("tanh", lambda x, y: ad.tanh(ad.mul(x, y))),
        ("exp", lambda x, y: ad.exp(ad.mul(ad.mul(x, y), 0.3))),
        ("square", lambda x, y: ad.square(ad.sub(x, y))),
        ("abs", lambda x, y: ad.absolute(ad.sub(x, y))),
        ("clamp", lambda x, y: ad.clamp(ad.mul(x, y), -0.5, 0.5)),
        ("concat", lambda x, y: ad.concat([x, y], axis=0)),
        ("narrow", lambda x, y: ad.narrow(ad.mul(x, y), 1, 1, 2)),
        ("pad_last", lambda x, y: ad.pad_last(ad.mul(x, y), 2, 1)),
        ("reshape", lambda x, y: ad.reshape(ad.mul(x, y), (4, 3))),
        ("transpose", lambda x, y: ad.transpose(ad.mul(x, y), (1, 0))),
    ],
)
def test_op_gradients_match_finite_differences(name, builder):
    rng = np.random.default_rng(sum(name.encode()))
    store = ad.ParamStore()
    x = store.create("x", rng.standard_normal((3, 4)) + 0.1)
    y = store.create("y", rng.standard_normal((3, 4)) + 2.0)

    def loss_fn():
        return ad.mean(ad.square(builder(x, y)))

    assert ad.finite_diff_check(loss_fn, store, h=1e-5) < 1e-4


def test_log_sqrt_gradients():
    store = ad.ParamStore()
    rng = np.random.default_rng(3)
    x = store.create("x", rng.random((3, 3)) + 0.5)

    def loss_fn():
        return ad.mean(ad.add(ad.log(x), ad.sqrt(x)))

    assert ad.finite_diff_check(loss_fn, store, h=1e-6) < 1e-4


def test_take_rows_and_bias_gradients():
    rng = np.random.default_rng(11)
    store = ad.ParamStore()
    table = store.create("table", rng.standard_normal((6, 3)))
    bias = store.create("bias", rng.standard_normal(3))
    ids = np.array([0, 2, 2, 5])

    def loss_fn():
        em = ad.take_rows(table, ids)  # [4, 3]
        em = ad.transpose(em, (1, 0))  # [3, 4]
        return ad.mean(ad.square(ad.add_channel_bias(em, bias)))

    assert ad.finite_diff_check(loss_fn, store) < 1e-4


def test_add_frame_bias_gradient():
    rng = np.random.default_rng(13)
    store = ad.ParamStore()
    x = store.create("x", rng.standard_normal((2, 3, 5)))
    b = store.create("b", rng.standard_normal((2, 3, 1)))

    def loss_fn():
        return ad.mean(ad.square(ad.add_frame_bias(x, b)))

    assert ad.finite_diff_check(loss_fn, store) < 1e-4


def test_shape_mismatch_error_names_op():
    a = ad.Tensor(np.zeros((2, 3)))
    b = ad.Tensor(np.zeros((3, 2)))
    with pytest.raises(ValueError, match="add"):
        ad.add(a, b)
    with pytest.raises(ValueError, match="matmul"):
        ad.matmul(a, ad.Tensor(np.zeros((2, 2))))
    with pytest.raises(ValueError, match="conv1d"):
        ad.conv1d(ad.Tensor(np.zeros((1, 2, 5))), ad.Tensor(np.zeros((4, 3, 3))))


def test_replay_is_bit_identical():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((2, 4, 9))
    w = ad.Tensor(rng.standard_normal((4, 4, 3)))

    def forward():
        h = ad.conv1d(ad.Tensor(x), w, dilation=2)
        return ad.tanh(h).data

    first = forward()
    second = forward()
    assert np.array_equal(first, second)


def test_dropout_inference_is_identity_and_train_scales():
    rng = np.random.default_rng(0)
    x = ad.Tensor(rng.standard_normal((50, 50)))
    out = ad.dropout(x, 0.3, training=False)
    assert out is x
    kept = ad.dropout(x, 0.3, rng=np.random.default_rng(1), training=True)
    mask = kept.data != 0
    np.testing.assert_allclose(kept.data[mask], x.data[mask] / 0.7)
    assert 0.6 < mask.mean() < 0.8


def test_dropout_gradient_and_seed_determinism():
    store = ad.ParamStore()
    rng = np.random.default_rng(2)
    x = store.create("x", rng.standard_normal((6, 6)))

    def loss_fn():
        return ad.mean(ad.square(ad.dropout(x, 0.4, rng=np.random.default_rng(42), training=True)))

    assert ad.finite_diff_check(loss_fn, store) < 1e-4


def test_finite_diff_check_rejects_nondeterministic_loss():
    store = ad.ParamStore()
    x = store.create("x", np.ones((4, 4)))
    unseeded = np.random.default_rng()

    def loss_fn():
        return ad.mean(ad.dropout(x, 0.5, rng=unseeded, training=True))

    with pytest.raises(ValueError, match="deterministic"):
        ad.finite_diff_check(loss_fn, store)


def test_finite_diff_check_quadratic_is_exact():
    store = ad.ParamStore()
    w = store.create("w", np.array([0.5, -1.5, 2.0]))

    def loss_fn():
        return ad.total(ad.square(w))

    assert ad.finite_diff_check(loss_fn, store, h=1e-5) < 1e-9


def test_adam_zero_gradient_leaves_params_unchanged():
    store = ad.ParamStore()
    w = store.create("w", [1.0, -2.0])
    before = w.data.copy()
    ad.adam_step(store, {"w": np.zeros(2)}, lr=0.1)
    np.testing.assert_array_equal(w.data, before)
    assert store.step_count == 1


def test_adam_first_step_magnitude_is_learning_rate():
    # bias-corrected Adam with g=1 moves by lr * g / (|g| + eps) on step 1
    store = ad.ParamStore()
    w = store.create("w", [0.0])
    ad.adam_step(store, {"w": np.array([1.0])}, lr=0.1)
    assert abs(abs(w.data[0]) - 0.1) < 1e-6
    assert w.data[0] < 0  # descends against the gradient


def test_adam_missing_gradient_raises():
    store = ad.ParamStore()
    store.create("w", [1.0])
    with pytest.raises(ValueError, match="missing gradient"):
        ad.adam_step(store, {})


def test_adam_is_deterministic():
    def run():
        rng = np.random.default_rng(9)
        store = ad.ParamStore()
        w = store.create("w", rng.standard_normal((3, 3)))
        for _ in range(5):
            with ad.Tape() as tape:
                loss = ad.mean(ad.square(ad.tanh(w)))
            ad.adam_step(store, ad.backward(loss, store, tape), lr=1e-2)
        return w.data.copy()

    assert np.array_equal(run(), run())


def test_debug_mode_flags_non_finite():
    ad.set_debug_checks(True)
    try:
        with pytest.raises(NumericalError, match="log"):
            ad.log(ad.Tensor(np.array([-1.0])))
    finally:
        ad.set_debug_checks(False)


def test_param_names_unique():
    store = ad.ParamStore()
    store.create("w", [1.0])
    with pytest.raises(ValueError, match="already exists"):
        store.create("w", [2.0])


def test_state_dict_roundtrip_keeps_references_valid():
    store = ad.ParamStore()
    w = store.create("w", [1.0, 2.0])
    snap = store.state_dict()
    w.data[...] = 0.0
    store.load_state_dict(snap)
    np.testing.assert_array_equal(w.data, [1.0, 2.0])
