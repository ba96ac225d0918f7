import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import fd_check
from milab import model as M
from milab.model import MlpModel
from milab.rng import generator
from milab.train import one_hot


def zero_model(dims):
    return MlpModel(layer_dims=list(dims),
                    weights=[np.zeros((a, b)) for a, b in zip(dims[:-1], dims[1:])],
                    biases=[np.zeros(b) for b in dims[1:]])


def test_zero_weight_model_outputs_biases():
    m = zero_model([3, 4, 2])
    m.biases[-1][:] = [0.5, -1.5]
    logits, _ = M.forward(m, np.array([1.0, 2.0, 3.0]))
    assert np.allclose(logits, [0.5, -1.5])


def test_dropout_keep_one_matches_inference(rng):
    m = M.init_model([5, 8, 3], seed=2)
    x = rng.standard_normal(5)
    a, _ = M.forward(m, x, dropout_keep=1.0, rng=rng)
    b, _ = M.forward(m, x)
    assert np.array_equal(a, b)


def test_single_linear_layer_hand_case():
    m = zero_model([2, 2])
    m.weights[0][:] = [[2.0, 0.0], [0.0, 3.0]]
    logits, hiddens = M.forward(m, np.array([1.0, 0.0]))
    assert np.allclose(logits, [2.0, 0.0])
    assert hiddens == []


def test_forward_shape_error():
    m = M.init_model([4, 3], seed=0)
    with pytest.raises(ValueError):
        M.forward(m, np.zeros(5))


def test_softmax_uniform_and_closed_form():
    assert np.allclose(M.softmax(np.zeros(4)), 0.25)
    assert np.allclose(M.softmax(np.array([np.log(2.0), 0.0])), [2 / 3, 1 / 3])


def test_softmax_shift_invariance(rng):
    z = rng.standard_normal(6)
    assert np.allclose(M.softmax(z), M.softmax(z + 123.456), atol=1e-12)


def test_softmax_rejects_nan():
    with pytest.raises(ValueError):
        M.softmax(np.array([0.0, np.nan]))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=10))
def test_softmax_always_valid_probvector(logits):
    p = M.softmax(np.array(logits))
    assert np.all(p > 0) and np.all(p < 1.0 + 1e-15)
    assert abs(p.sum() - 1.0) <= 1e-9


def test_cross_entropy_examples():
    c = 5
    assert np.isclose(M.cross_entropy(np.full(c, 1 / c), 2), np.log(c))
    p = np.zeros(3)
    p[1] = 1.0
    assert M.cross_entropy(p, 1) == 0.0
    # frozen from a desk calculation: -0.5*ln(0.7) - 0.5*ln(0.3)
    val = M.cross_entropy(np.array([0.7, 0.3]), np.array([0.5, 0.5]))
    assert np.isclose(val, 0.7803238741323337, atol=1e-12)
    assert abs(val - 0.7803) < 1e-4


def test_cross_entropy_rejects_bad_soft_label():
    with pytest.raises(ValueError):
        M.cross_entropy(np.array([0.5, 0.5]), np.array([0.9, 0.3]))


def test_backward_matches_finite_differences(rng):
    m = M.init_model([4, 8, 6, 3], seed=1)
    X = rng.standard_normal((5, 4))
    Y = one_hot(rng.integers(0, 3, 5), 3)
    _, grads = M.backward(m, X, Y, None, l2_coeff=0.01)
    fd_check(lambda: M.backward(m, X, Y, None, 0.01)[0], m, grads, rng, n_coords=130)


def test_duplicate_batch_equals_single_instance_gradient(rng):
    m = M.init_model([3, 5, 2], seed=4)
    x = rng.standard_normal(3)
    Y1 = one_hot(np.array([1]), 2)
    _, g1 = M.backward(m, x[None, :], Y1, None, 0.0)
    _, g4 = M.backward(m, np.tile(x, (4, 1)), np.tile(Y1, (4, 1)), None, 0.0)
    for a, b in zip(g1.d_weights, g4.d_weights):
        assert np.allclose(a, b, atol=1e-12)


def test_output_bias_gradient_is_p_minus_y(rng):
    m = M.init_model([3, 4, 3], seed=5)
    x = rng.standard_normal(3)
    y = 2
    logits, _ = M.forward(m, x)
    p = M.softmax(logits)
    Y = one_hot(np.array([y]), 3)
    _, grads = M.backward(m, x[None, :], Y, None, 0.0)
    expect = p.copy()
    expect[y] -= 1.0
    assert np.allclose(grads.d_biases[-1], expect, atol=1e-12)


def test_backward_rejects_empty_and_mismatched():
    m = M.init_model([3, 2], seed=0)
    with pytest.raises(ValueError):
        M.backward(m, np.zeros((0, 3)), np.zeros((0, 2)))
    with pytest.raises(ValueError):
        M.backward(m, np.zeros((2, 3)), np.zeros((2, 3)))


def test_predict_label_examples():
    m = zero_model([2, 3])
    m.biases[0][:] = [0.1, 0.8, 0.1]
    assert M.predict_label(m, np.zeros(2)) == 1
    m.biases[0][:] = [0.5, 0.5, 0.0]
    assert M.predict_label(m, np.zeros(2)) == 0  # tie -> lowest index


def test_predict_agrees_with_logit_argmax(rng):
    m = M.init_model([4, 6, 5], seed=7)
    X = rng.standard_normal((20, 4))
    logits, _ = M.forward(m, X)
    assert np.array_equal(M.predict_labels(m, X), logits.argmax(axis=1))
    # argmax of any positively rescaled probability vector is unchanged
    P = M.softmax(logits)
    assert np.array_equal((3.7 * P).argmax(axis=1), P.argmax(axis=1))


def test_dropout_scales_by_inverse_keep():
    m = zero_model([2, 4, 2])
    m.weights[0][:] = 1.0
    x = np.array([1.0, 1.0])
    hidden_inference = M.forward(m, x)[1][0]
    hit = False
    for s in range(50):
        h = M.forward(m, x, dropout_keep=0.5, rng=generator(s))[1][0]
        kept = h != 0
        assert np.allclose(h[kept], hidden_inference[kept] / 0.5)
        hit = hit or (kept.any() and (~kept).any())
    assert hit  # saw both kept and dropped units across seeds


def test_checkpoint_round_trip_exact(tmp_path, rng):
    m = M.init_model([6, 9, 4], seed=13)
    path = tmp_path / "model.json"
    M.save_checkpoint(m, path)
    back = M.load_checkpoint(path)
    assert back.layer_dims == m.layer_dims
    assert back.activation == m.activation
    for a, b in zip(m.weights, back.weights):
        assert np.array_equal(a, b)
    for a, b in zip(m.biases, back.biases):
        assert np.array_equal(a, b)


def test_temperature_changes_entropy_not_label(rng):
    m = M.init_model([4, 6, 3], seed=3)
    X = rng.standard_normal((10, 4))
    p1 = M.prob_vectors(m, X)
    p5 = M.prob_vectors(m, X, temperature=5.0)
    assert np.array_equal(p1.argmax(axis=1), p5.argmax(axis=1))
    assert (p5.max(axis=1) <= p1.max(axis=1) + 1e-12).all()
