"""Dense/LSTM layers, optimizer and init against hand-derived references."""

import math

import numpy as np
import pytest

from thermovae import nn
from thermovae.autodiff import ShapeError, Tape, gradient_check


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def reference_lstm_step(layer, x, h, c):
    """Independent numpy evaluation of the gate equations."""
    xh = np.concatenate([x, h])
    i = _sigmoid(layer.W_i @ xh + layer.b_i)
    f = _sigmoid(layer.W_f @ xh + layer.b_f)
    o = _sigmoid(layer.W_o @ xh + layer.b_o)
    g = np.tanh(layer.W_g @ xh + layer.b_g)
    c_new = f * c + i * g
    return o * np.tanh(c_new), c_new


def zero_lstm(input_size, hidden):
    shape = (hidden, input_size + hidden)
    return nn.LstmLayer(W_i=np.zeros(shape), W_f=np.zeros(shape),
                        W_o=np.zeros(shape), W_g=np.zeros(shape),
                        b_i=np.zeros(hidden), b_f=np.zeros(hidden),
                        b_o=np.zeros(hidden), b_g=np.zeros(hidden))


# -------------------------------------------------------------------- dense


def test_dense_identity_passthrough():
    layer = nn.DenseLayer(W=np.eye(2), b=np.zeros(2), activation="identity")
    t = Tape()
    out = nn.dense_forward(layer, t.leaf([3.0, 4.0]), t)
    assert np.array_equal(out.value, [3.0, 4.0])


def test_dense_sigmoid_at_zero_preactivation():
    # sigmoid(1 + 1 - 2) = sigmoid(0) = 0.5
    layer = nn.DenseLayer(W=np.array([[1.0, 1.0]]), b=np.array([-2.0]),
                          activation="sigmoid")
    t = Tape()
    out = nn.dense_forward(layer, t.leaf([1.0, 1.0]), t)
    assert np.array_equal(out.value, [0.5])


def test_dense_affine_by_hand():
    layer = nn.DenseLayer(W=np.array([[2.0, 0.0], [0.0, 2.0]]),
                          b=np.array([1.0, 1.0]), activation="identity")
    t = Tape()
    out = nn.dense_forward(layer, t.leaf([1.0, 2.0]), t)
    assert np.array_equal(out.value, [3.0, 5.0])


def test_dense_batch_rows_equal_vector_applications():
    rng = np.random.default_rng(5)
    layer = nn.init_dense(rng, 4, 3, "tanh")
    xs = rng.standard_normal((6, 3))
    t = Tape()
    batch = nn.dense_forward(layer, t.leaf(xs), t)
    for row in range(6):
        t2 = Tape()
        single = nn.dense_forward(layer, t2.leaf(xs[row]), t2)
        assert np.allclose(batch.value[row], single.value, atol=1e-15)


def test_dense_shape_mismatch():
    layer = nn.DenseLayer(W=np.eye(2), b=np.zeros(2))
    t = Tape()
    with pytest.raises(ShapeError):
        nn.dense_forward(layer, t.leaf([1.0, 2.0, 3.0]), t)


# --------------------------------------------------------------------- lstm


def test_lstm_step_zero_params_zero_state():
    layer = zero_lstm(2, 3)
    t = Tape()
    h, c = nn.lstm_step(layer, t.leaf([0.7, -0.3]), t.leaf(np.zeros(3)),
                        t.leaf(np.zeros(3)), t)
    assert np.array_equal(h.value, np.zeros(3))
    assert np.array_equal(c.value, np.zeros(3))


def test_lstm_step_zero_params_nonzero_cell():
    # zero weights: i = f = o = 0.5, g = 0, so c = 0.5 c_prev and
    # h = 0.5 tanh(0.5 c_prev)
    layer = zero_lstm(2, 2)
    c_prev = np.array([0.8, -1.4])
    t = Tape()
    h, c = nn.lstm_step(layer, t.leaf([1.0, 2.0]), t.leaf(np.zeros(2)),
                        t.leaf(c_prev), t)
    assert np.allclose(c.value, 0.5 * c_prev, atol=1e-15)
    assert np.allclose(h.value, 0.5 * np.tanh(0.5 * c_prev), atol=1e-15)


def test_lstm_step_forget_bias_keeps_cell():
    # b_f = +10 with everything else zero: f = sigmoid(10) ~ 1, i = 0.5,
    # g = 0, so c ~ c_prev and h = 0.5 tanh(c)
    layer = zero_lstm(1, 1)
    layer.b_f[...] = 10.0
    f = 1.0 / (1.0 + math.exp(-10.0))
    t = Tape()
    h, c = nn.lstm_step(layer, t.leaf([0.4]), t.leaf([0.0]), t.leaf([1.0]), t)
    assert np.allclose(c.value, [f * 1.0], atol=1e-15)
    assert np.allclose(h.value, [0.5 * math.tanh(f)], atol=1e-15)
    assert abs(float(c.value[0]) - 1.0) < 1e-4  # forget gate nearly open


def test_lstm_step_matches_reference_on_random_params():
    rng = np.random.default_rng(9)
    layer = nn.init_lstm(rng, 3, 4)
    x, h0, c0 = rng.standard_normal(3), rng.standard_normal(4), rng.standard_normal(4)
    t = Tape()
    h, c = nn.lstm_step(layer, t.leaf(x), t.leaf(h0), t.leaf(c0), t)
    h_ref, c_ref = reference_lstm_step(layer, x, h0, c0)
    assert np.allclose(h.value, h_ref, atol=1e-12)
    assert np.allclose(c.value, c_ref, atol=1e-12)
    assert np.all(np.abs(h.value) < 1.0)


def test_lstm_sequence_single_step_equals_step():
    rng = np.random.default_rng(2)
    layer = nn.init_lstm(rng, 2, 3)
    x = rng.standard_normal(2)
    t = Tape()
    h_seq = nn.lstm_sequence(layer, [t.leaf(x)], t)
    t2 = Tape()
    h_step, _ = nn.lstm_step(layer, t2.leaf(x), t2.leaf(np.zeros(3)),
                             t2.leaf(np.zeros(3)), t2)
    assert np.array_equal(h_seq.value, h_step.value)


def test_lstm_sequence_zero_params_zero_output():
    layer = zero_lstm(2, 3)
    t = Tape()
    xs = [t.leaf([1.0, 1.0])] * 4
    assert np.array_equal(nn.lstm_sequence(layer, xs, t).value, np.zeros(3))


def test_lstm_sequence_equals_manual_unroll():
    rng = np.random.default_rng(3)
    layer = nn.init_lstm(rng, 2, 4)
    xs = rng.standard_normal((3, 2))
    t = Tape()
    h_seq = nn.lstm_sequence(layer, [t.leaf(x) for x in xs], t)
    h, c = np.zeros(4), np.zeros(4)
    for x in xs:
        h, c = reference_lstm_step(layer, x, h, c)
    assert np.allclose(h_seq.value, h, atol=1e-12)


def test_lstm_sequence_rechunking_invariance():
    # one 4-step run equals two 2-step runs carrying (h, c) forward
    rng = np.random.default_rng(4)
    layer = nn.init_lstm(rng, 3, 5)
    xs = rng.standard_normal((4, 3))
    t = Tape()
    nodes = [t.leaf(x) for x in xs]
    _, (h_full, c_full) = nn.lstm_scan(layer, nodes, t)
    _, state = nn.lstm_scan(layer, nodes[:2], t)
    _, (h_chunk, c_chunk) = nn.lstm_scan(layer, nodes[2:], t, state=state)
    assert np.array_equal(h_full.value, h_chunk.value)
    assert np.array_equal(c_full.value, c_chunk.value)


def test_lstm_scan_rejects_empty_sequence():
    layer = zero_lstm(2, 2)
    with pytest.raises(ValueError, match="empty"):
        nn.lstm_scan(layer, [], Tape())


def test_lstm_dense_stack_passes_gradient_check():
    rng = np.random.default_rng(6)
    lstm = nn.init_lstm(rng, 3, 6)
    head = nn.init_dense(rng, 1, 6, "tanh")
    xs = rng.standard_normal((5, 3))
    arrays = ([a for _, a in lstm.parameters()]
              + [a for _, a in head.parameters()])

    def build(tape, nodes):
        for arr, node in zip(arrays, nodes):
            tape.adopt(arr, node)
        h = nn.lstm_sequence(lstm, [tape.leaf(x) for x in xs], tape)
        return tape.sum(nn.dense_forward(head, h, tape))

    report = gradient_check(build, arrays, h=1e-5, tol=1e-3)
    assert report.passed, str(report)


# ---------------------------------------------------------------- optimizer


def test_sgd_step_by_hand():
    opt = nn.Optimizer(kind="sgd", learning_rate=0.1)
    p = np.array([1.0])
    opt.step([p], [np.array([1.0])])
    assert np.allclose(p, [0.9], atol=1e-15)
    assert opt.step_count == 1


def test_sgd_zero_learning_rate_is_noop():
    opt = nn.Optimizer(kind="sgd", learning_rate=0.0)
    p = np.array([1.0, -2.0])
    opt.step([p], [np.array([5.0, 5.0])])
    assert np.array_equal(p, [1.0, -2.0])


def test_zero_gradients_leave_params_unchanged():
    for kind in ("sgd", "adam"):
        opt = nn.Optimizer(kind=kind, learning_rate=0.5)
        p = np.array([1.0, 2.0])
        before = p.copy()
        for _ in range(3):
            opt.step([p], [np.zeros(2)])
        assert np.array_equal(p, before), kind


def test_adam_first_step_closed_form():
    # m_hat = g, v_hat = g^2, so the first update is lr * g / (|g| + eps)
    opt = nn.Optimizer(kind="adam", learning_rate=0.001)
    p = np.array([0.0])
    opt.step([p], [np.array([1.0])])
    expected = -0.001 * 1.0 / (math.sqrt(1.0) + 1e-8)
    assert np.allclose(p, [expected], atol=1e-15)
    assert abs(p[0] + 0.001) < 1e-10


def test_optimizer_shape_mismatch():
    opt = nn.Optimizer(kind="sgd")
    with pytest.raises(ShapeError):
        opt.step([np.zeros(2)], [np.zeros(3)])
    with pytest.raises(ShapeError):
        opt.step([np.zeros(2)], [])


def test_optimizer_validates_hyperparameters():
    with pytest.raises(ValueError):
        nn.Optimizer(kind="rmsprop")
    with pytest.raises(ValueError):
        nn.Optimizer(beta1=1.0)


# --------------------------------------------------------------------- init


def test_init_is_seed_deterministic():
    a = nn.init_lstm(np.random.default_rng(7), 3, 5)
    b = nn.init_lstm(np.random.default_rng(7), 3, 5)
    for (_, pa), (_, pb) in zip(a.parameters(), b.parameters()):
        assert pa.tobytes() == pb.tobytes()


def test_glorot_bound_for_equal_fans():
    # fan_in = fan_out = 3 gives s = 1; every draw lies in (-1, 1)
    rng = np.random.default_rng(8)
    draws = nn.glorot_uniform(rng, 3, 3, shape=(10_000,))
    assert np.all(np.abs(draws) < 1.0)
    assert draws.max() > 0.9 and draws.min() < -0.9  # actually fills the range


def test_lstm_init_biases():
    layer = nn.init_lstm(np.random.default_rng(1), 4, 6)
    assert np.array_equal(layer.b_f, np.ones(6))
    assert np.array_equal(layer.b_i, np.zeros(6))
    assert np.array_equal(layer.b_o, np.zeros(6))
    assert np.array_equal(layer.b_g, np.zeros(6))


def test_dense_init_bias_zero():
    layer = nn.init_dense(np.random.default_rng(1), 4, 3)
    assert np.array_equal(layer.b, np.zeros(4))
