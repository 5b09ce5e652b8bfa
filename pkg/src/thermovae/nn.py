"""Neural building blocks on top of the autodiff tape.

Dense and LSTM layers hold plain numpy parameter arrays; the forward
functions bind them to a tape via ``Tape.watch`` so each training step can
rebuild the graph and read gradients back per array.

Layers accept either a single sample (1-D activations) or a batch of samples
stacked as matrix rows, which is what makes mini-batch training fast enough
in pure numpy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Node, ShapeError, Tape

ACTIVATIONS = ("identity", "tanh", "sigmoid")


@dataclass
class DenseLayer:
    """Fully connected layer y = act(W x + b) with W of shape [out, in]."""

    W: np.ndarray
    b: np.ndarray
    activation: str = "identity"

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ShapeError(f"dense: W {self.W.shape} incompatible with b {self.b.shape}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"dense: unknown activation {self.activation!r}")

    @property
    def out_dim(self):
        return self.W.shape[0]

    @property
    def in_dim(self):
        return self.W.shape[1]

    def parameters(self):
        return [("W", self.W), ("b", self.b)]


@dataclass
class LstmLayer:
    """Standard LSTM cell parameters.

    Gate matrices act on the concatenation [x; h] and have shape
    [hidden, input + hidden]; order of gates is input, forget, output, cell.
    """

    W_i: np.ndarray
    W_f: np.ndarray
    W_o: np.ndarray
    W_g: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_o: np.ndarray
    b_g: np.ndarray

    def __post_init__(self):
        mats = [self.W_i, self.W_f, self.W_o, self.W_g]
        if len({m.shape for m in mats}) != 1:
            raise ShapeError("lstm: gate weight shapes differ")
        h = self.hidden_size
        for b in (self.b_i, self.b_f, self.b_o, self.b_g):
            if b.shape != (h,):
                raise ShapeError(f"lstm: bias shape {b.shape} != ({h},)")

    @property
    def hidden_size(self) -> int:
        return self.W_i.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_i.shape[1] - self.W_i.shape[0]

    def parameters(self):
        return [("W_i", self.W_i), ("W_f", self.W_f), ("W_o", self.W_o),
                ("W_g", self.W_g), ("b_i", self.b_i), ("b_f", self.b_f),
                ("b_o", self.b_o), ("b_g", self.b_g)]


def _affine(tape: Tape, W: np.ndarray, b: np.ndarray, x: Node) -> Node:
    """W x + b for a 1-D x, or x W^T + b row-wise for a batch matrix x."""
    w = tape.watch(W)
    bias = tape.watch(b)
    if x.value.ndim == 1:
        return tape.add(tape.matmul(w, x), bias)
    return tape.add_rows(tape.matmul(x, tape.transpose(w)), bias)


def dense_forward(layer: DenseLayer, x: Node, tape: Tape) -> Node:
    """Apply a dense layer to a vector [in] or batch [batch, in]."""
    y = _affine(tape, layer.W, layer.b, x)
    if layer.activation == "tanh":
        return tape.tanh(y)
    if layer.activation == "sigmoid":
        return tape.sigmoid(y)
    return y


def lstm_step(layer: LstmLayer, x_t: Node, h_prev: Node, c_prev: Node,
              tape: Tape) -> tuple[Node, Node]:
    """One LSTM update.

    i = sigmoid(W_i [x;h] + b_i)      f = sigmoid(W_f [x;h] + b_f)
    o = sigmoid(W_o [x;h] + b_o)      g = tanh(W_g [x;h] + b_g)
    c = f * c_prev + i * g            h = o * tanh(c)
    """
    axis = 0 if x_t.value.ndim == 1 else 1
    xh = tape.concat(x_t, h_prev, axis=axis)
    i = tape.sigmoid(_affine(tape, layer.W_i, layer.b_i, xh))
    f = tape.sigmoid(_affine(tape, layer.W_f, layer.b_f, xh))
    o = tape.sigmoid(_affine(tape, layer.W_o, layer.b_o, xh))
    g = tape.tanh(_affine(tape, layer.W_g, layer.b_g, xh))
    c = tape.add(tape.mul(f, c_prev), tape.mul(i, g))
    h = tape.mul(o, tape.tanh(c))
    return h, c


def lstm_scan(layer: LstmLayer, xs: list[Node], tape: Tape,
              state: tuple[Node, Node] | None = None):
    """Run the cell left-to-right over ``xs``.

    Returns (per-step hidden nodes, final (h, c)).  ``state`` carries (h, c)
    across chunks; by default both start at zero, matching ``lstm_sequence``.
    """
    if not xs:
        raise ValueError("lstm_scan: empty input sequence")
    if state is None:
        hid = layer.hidden_size
        shape = (hid,) if xs[0].value.ndim == 1 else (xs[0].value.shape[0], hid)
        h = tape.leaf(np.zeros(shape))
        c = tape.leaf(np.zeros(shape))
    else:
        h, c = state
    hs = []
    for x_t in xs:
        h, c = lstm_step(layer, x_t, h, c, tape)
        hs.append(h)
    return hs, (h, c)


def lstm_sequence(layer: LstmLayer, xs: list[Node], tape: Tape) -> Node:
    """Final hidden state of the cell run from zero initial state."""
    _, (h, _) = lstm_scan(layer, xs, tape)
    return h


@dataclass
class Optimizer:
    """SGD or Adam over a fixed, index-aligned parameter list."""

    kind: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    _m: list = field(default=None, repr=False)
    _v: list = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"optimizer: unknown kind {self.kind!r}")
        if self.learning_rate < 0:
            raise ValueError("optimizer: learning_rate must be >= 0")
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("optimizer: betas must lie in (0, 1)")

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        optimizer_step(self, params, grads)


def optimizer_step(opt: Optimizer, params: list[np.ndarray],
                   grads: list[np.ndarray]) -> None:
    """Update parameter arrays in place from index-aligned gradients."""
    if len(params) != len(grads):
        raise ShapeError("optimizer_step: params and grads differ in length")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ShapeError(f"optimizer_step: param {p.shape} vs grad {g.shape}")
    if opt.kind == "sgd":
        for p, g in zip(params, grads):
            p -= opt.learning_rate * g
        opt.step_count += 1
        return
    if opt._m is None:
        opt._m = [np.zeros_like(p) for p in params]
        opt._v = [np.zeros_like(p) for p in params]
    opt.step_count += 1
    t = opt.step_count
    for i, (p, g) in enumerate(zip(params, grads)):
        opt._m[i] = opt.beta1 * opt._m[i] + (1.0 - opt.beta1) * g
        opt._v[i] = opt.beta2 * opt._v[i] + (1.0 - opt.beta2) * g * g
        m_hat = opt._m[i] / (1.0 - opt.beta1 ** t)
        v_hat = opt._v[i] / (1.0 - opt.beta2 ** t)
        p -= opt.learning_rate * m_hat / (np.sqrt(v_hat) + opt.epsilon)


def glorot_uniform(rng: np.random.Generator, fan_out: int, fan_in: int,
                   shape: tuple | None = None) -> np.ndarray:
    """Weights ~ U(-s, s) with s = sqrt(6 / (fan_in + fan_out))."""
    s = np.sqrt(6.0 / (fan_in + fan_out))
    if shape is None:
        shape = (fan_out, fan_in)
    return rng.uniform(-s, s, size=shape)


def init_dense(rng: np.random.Generator, out_dim: int, in_dim: int,
               activation: str = "identity") -> DenseLayer:
    """Glorot-uniform weights, zero biases."""
    return DenseLayer(W=glorot_uniform(rng, out_dim, in_dim),
                      b=np.zeros(out_dim), activation=activation)


def init_lstm(rng: np.random.Generator, input_size: int, hidden_size: int) -> LstmLayer:
    """Glorot-uniform gate weights; biases zero except the forget gate at 1.

    The unit forget bias keeps early cell states from washing out, which
    stabilizes training from random initialization.
    """
    def gate():
        return glorot_uniform(rng, hidden_size, input_size + hidden_size)

    return LstmLayer(
        W_i=gate(), W_f=gate(), W_o=gate(), W_g=gate(),
        b_i=np.zeros(hidden_size), b_f=np.ones(hidden_size),
        b_o=np.zeros(hidden_size), b_g=np.zeros(hidden_size),
    )
