"""Tensor op semantics, gradient fidelity, Adam, and checkpoint round trips."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import pathe.autodiff as ad
from pathe.autodiff import (Adam, Tape, Tensor, grad_check, load_checkpoint,
                            load_into_tape, save_checkpoint)
from pathe.errors import DataError, NumericError, ShapeError


def t64(data, requires_grad=True):
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=requires_grad)


def rand64(rng, *shape):
    # offset away from zero so relu kinks do not poison finite differences
    x = rng.uniform(0.2, 1.5, size=shape) * rng.choice([-1.0, 1.0], size=shape)
    return Tensor(x, requires_grad=True)


# ---------------------------------------------------------------------------
# forward values
# ---------------------------------------------------------------------------

def test_relu_values():
    out = ad.relu(t64([-1.0, 0.0, 2.0]))
    assert np.allclose(out.data, [0.0, 0.0, 2.0])


def test_softmax_saturation():
    out = ad.softmax(t64([[1000.0, 0.0, 0.0]]), axis=-1)
    assert np.allclose(out.data, [[1.0, 0.0, 0.0]], atol=1e-6)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(0)
    x = rand64(rng, 7, 11)
    out = ad.softmax(x, axis=-1)
    assert np.allclose(out.data.sum(axis=-1), 1.0, atol=1e-6)


def test_log_softmax_matches_log_of_softmax():
    rng = np.random.default_rng(1)
    x = rand64(rng, 5, 6)
    assert np.allclose(ad.log_softmax(x, -1).data,
                       np.log(ad.softmax(x, -1).data), atol=1e-6)


def test_cross_entropy_uniform_two_classes():
    loss = ad.cross_entropy(t64([[0.0, 0.0]]), np.array([0]))
    assert math.isclose(loss.item(), math.log(2.0), rel_tol=1e-9)


def test_cross_entropy_uniform_eleven_classes():
    loss = ad.cross_entropy(t64([np.zeros(11)]), np.array([3]))
    assert math.isclose(loss.item(), math.log(11.0), rel_tol=1e-9)


def test_cross_entropy_saturated_logit():
    # score gap of 10 in favor of the true class
    loss = ad.cross_entropy(t64([[0.0, 10.0]]), np.array([1]))
    assert math.isclose(loss.item(), math.log1p(math.exp(-10.0)), rel_tol=1e-6)
    assert abs(loss.item() - 4.54e-5) < 1e-6


def test_bce_closed_forms():
    assert math.isclose(ad.bce_with_logits(t64([0.0]), 1.0).item(),
                        math.log(2.0), rel_tol=1e-9)
    big = ad.bce_with_logits(t64([50.0]), 1.0).item()
    assert big < 1e-20


def test_dropout_identity_cases():
    x = t64([[1.0, 2.0]])
    assert ad.dropout(x, 0.0, True, np.random.default_rng(0)) is x
    assert ad.dropout(x, 0.5, False) is x


def test_dropout_scales_kept_entries():
    rng = np.random.default_rng(3)
    x = Tensor(np.ones((400, 5)), requires_grad=True)
    out = ad.dropout(x, 0.25, True, rng)
    kept = out.data[out.data != 0]
    assert np.allclose(kept, 1.0 / 0.75)
    assert abs((out.data != 0).mean() - 0.75) < 0.05


@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 3))
@settings(max_examples=25, deadline=None)
def test_concat_backward_shape_complementarity(a, b, c):
    xs = [Tensor(np.full((n, 2), float(i)), requires_grad=True)
          for i, n in enumerate((a, b, c))]
    out = ad.sum_(ad.concat(xs, axis=0))
    out.backward()
    for x in xs:
        assert x.grad.shape == x.data.shape
        assert np.all(x.grad == 1.0)


def test_shape_errors_name_the_op():
    with pytest.raises(ShapeError, match="matmul"):
        ad.matmul(t64(np.ones((2, 3))), t64(np.ones((4, 2))))
    with pytest.raises(ShapeError, match="add"):
        ad.add(t64(np.ones((2, 3))), t64(np.ones((4, 5))))


def test_backward_accumulates_shared_nodes_once():
    # diamond: y = x*x + x*x; dy/dx = 4x
    x = t64([3.0])
    sq = ad.mul(x, x)
    y = ad.sum_(ad.add(sq, sq))
    y.backward()
    assert np.allclose(x.grad, [12.0])


# ---------------------------------------------------------------------------
# gradient checks per op (64-bit, central differences)
# ---------------------------------------------------------------------------

TOL = 1e-5


def test_grad_quadratic_exact():
    x = t64([3.0])
    err = grad_check(lambda: ad.sum_(ad.mul(x, x)), [x])
    assert err < 1e-10
    assert np.allclose(x.grad, [6.0])


def test_grad_add_broadcast():
    rng = np.random.default_rng(10)
    a = rand64(rng, 3, 4)
    b = rand64(rng, 4)
    assert grad_check(lambda: ad.sum_(ad.add(a, b)), [a, b]) < TOL


def test_grad_mul_broadcast():
    rng = np.random.default_rng(11)
    a = rand64(rng, 2, 3, 4)
    b = rand64(rng, 1, 4)
    assert grad_check(lambda: ad.sum_(ad.mul(a, b)), [a, b]) < TOL


def test_grad_matmul_batched_broadcast():
    rng = np.random.default_rng(12)
    a = rand64(rng, 2, 3, 4)
    b = rand64(rng, 4, 5)
    assert grad_check(lambda: ad.sum_(ad.matmul(a, b)), [a, b]) < TOL


def test_grad_relu():
    rng = np.random.default_rng(13)
    a = rand64(rng, 4, 4)
    assert grad_check(lambda: ad.sum_(ad.relu(a)), [a]) < TOL


def test_grad_reshape_transpose_concat_mean():
    rng = np.random.default_rng(14)
    a = rand64(rng, 2, 6)
    b = rand64(rng, 2, 6)

    def f():
        x = ad.concat([ad.reshape(a, (2, 2, 3)), ad.reshape(b, (2, 2, 3))], axis=1)
        x = ad.transpose(x, (1, 0, 2))
        return ad.sum_(ad.mean(x, axis=0))
    assert grad_check(f, [a, b]) < TOL


def test_grad_embedding_lookup_with_repeats():
    rng = np.random.default_rng(15)
    table = rand64(rng, 5, 3)
    ids = np.array([[0, 2, 2], [4, 0, 1]])
    assert grad_check(lambda: ad.sum_(ad.embedding_lookup(table, ids)), [table]) < TOL


def test_grad_gather_rows_and_take():
    rng = np.random.default_rng(16)
    x = rand64(rng, 4, 3, 2)
    idx = np.array([0, 2, 1, 1])

    def f():
        return ad.sum_(ad.add(ad.gather_rows(x, idx), ad.take(x, 1, axis=1)))
    assert grad_check(f, [x]) < TOL


def test_grad_layer_norm():
    rng = np.random.default_rng(17)
    x = rand64(rng, 3, 4, 6)
    g = rand64(rng, 6)
    b = rand64(rng, 6)
    assert grad_check(lambda: ad.sum_(ad.layer_norm(x, g, b)), [x, g, b]) < TOL


def test_grad_softmax_and_log_softmax():
    rng = np.random.default_rng(18)
    x = rand64(rng, 3, 5)
    w = ad.constant(rng.uniform(0.5, 1.5, size=(3, 5)))
    assert grad_check(lambda: ad.sum_(ad.mul(ad.softmax(x, -1), w)), [x]) < TOL
    assert grad_check(lambda: ad.sum_(ad.mul(ad.log_softmax(x, -1), w)), [x]) < TOL


def test_grad_attention_masked():
    rng = np.random.default_rng(19)
    q = rand64(rng, 2, 4, 6)
    k = rand64(rng, 2, 4, 6)
    v = rand64(rng, 2, 4, 6)
    mask = np.array([[True, True, True, False],
                     [True, True, False, False]])
    w = ad.constant(rng.uniform(0.5, 1.5, size=(2, 4, 6)))

    def f():
        return ad.sum_(ad.mul(ad.multi_head_attention(q, k, v, mask, 2), w))
    assert grad_check(f, [q, k, v]) < TOL


def test_grad_cross_entropy_with_smoothing_and_weights():
    rng = np.random.default_rng(20)
    logits = rand64(rng, 4, 6)
    targets = np.array([0, 3, 5, 2])
    weights = rng.uniform(0.5, 2.0, size=6)

    def f():
        return ad.cross_entropy(logits, targets, label_smoothing=0.1,
                                class_weights=weights)
    assert grad_check(f, [logits]) < TOL


def test_grad_bce_with_weights():
    rng = np.random.default_rng(21)
    logits = rand64(rng, 3, 4)
    targets = (rng.random((3, 4)) > 0.5).astype(float)
    weights = rng.uniform(0.1, 2.0, size=(3, 4))

    def f():
        return ad.bce_with_logits(logits, targets, weights=weights)
    assert grad_check(f, [logits]) < TOL


# ---------------------------------------------------------------------------
# tape and optimizer
# ---------------------------------------------------------------------------

def test_tape_zero_grad_and_counts():
    tape = Tape(seed=0)
    w = tape.parameter("w", (3, 4))
    b = tape.parameter("b", (4,), init="zeros")
    assert tape.num_params() == 16
    assert np.all(b.data == 0)
    w.grad += 1.0
    tape.zero_grad()
    assert np.all(w.grad == 0)
    with pytest.raises(ValueError, match="duplicate"):
        tape.parameter("w", (1,))


def test_adam_first_step_magnitude():
    tape = Tape(dtype=np.float64)
    p = tape.parameter("p", (1,), init="zeros")
    opt = Adam(tape, lr=1e-3)
    p.grad = np.array([1.0])
    opt.step()
    assert math.isclose(p.data[0], -1e-3, rel_tol=1e-6)


def test_adam_zero_gradient_keeps_params():
    tape = Tape(dtype=np.float64)
    p = tape.parameter("p", (3,))
    before = p.data.copy()
    Adam(tape).step()
    assert np.array_equal(p.data, before)


def test_adam_converges_on_convex_bowl():
    # f(x) = (x - 2.5)^2, closed-form minimum at 2.5
    tape = Tape(dtype=np.float64)
    x = tape.parameter("x", (1,), init="zeros")
    opt = Adam(tape, lr=0.05)
    for _ in range(500):
        tape.zero_grad()
        x.grad = 2.0 * (x.data - 2.5)
        opt.step()
    assert abs(x.data[0] - 2.5) < 1e-3


def test_adam_rejects_non_finite_gradient():
    tape = Tape()
    tape.parameter("bad_param", (2,))
    tape.params["bad_param"].grad = np.array([np.inf, 0.0], dtype=np.float32)
    with pytest.raises(NumericError, match="bad_param"):
        Adam(tape).step()


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    tape = Tape(seed=7)
    tape.parameter("layer.w", (3, 2))
    tape.parameter("layer.b", (2,), init="zeros")
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, tape)
    loaded = load_checkpoint(path)
    assert set(loaded) == {"layer.w", "layer.b"}
    for name, arr in loaded.items():
        assert np.array_equal(arr, tape.params[name].data)
    fresh = Tape(seed=99)
    fresh.parameter("layer.w", (3, 2))
    fresh.parameter("layer.b", (2,), init="zeros")
    load_into_tape(path, fresh)
    assert np.array_equal(fresh.params["layer.w"].data, tape.params["layer.w"].data)


def test_checkpoint_version_mismatch(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"other-format v9\n")
    with pytest.raises(DataError, match="version mismatch"):
        load_checkpoint(path)


def test_checkpoint_truncated(tmp_path):
    tape = Tape()
    tape.parameter("w", (4, 4))
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, tape)
    data = path.read_bytes()
    path.write_bytes(data[:-7])
    with pytest.raises(DataError, match="truncated"):
        load_checkpoint(path)


def test_checkpoint_shape_mismatch(tmp_path):
    tape = Tape()
    tape.parameter("w", (2, 2))
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, tape)
    other = Tape()
    other.parameter("w", (3, 3))
    with pytest.raises(DataError, match="shape mismatch"):
        load_into_tape(path, other)
