"""LSTM variational autoencoder over joint-state windows.

The encoder maps a normalized window [W, channels] to the mean and log
variance of a diagonal Gaussian posterior in a fixed 2-D latent space; the
decoder maps a latent sample back to a window.  Training maximizes the
evidence lower bound via the reparameterization trick z = mu + eps * sigma.

Per-window training objective
-----------------------------
    sum over all W*channels elements of (x - x_hat)^2
    - (beta/2) * sum_j (1 + log sigma_j^2 - mu_j^2 - sigma_j^2)

The reconstruction term is the elementwise *sum*, i.e. the Gaussian
log-likelihood with unit observation variance up to constants.  Averaging it
per element instead would make encoding even a couple of nats of latent
information more expensive than the entire achievable reconstruction gain on
z-scored data, and the posterior would collapse onto the prior.
``reconstruction_loss`` (the per-element mean) is the reporting and anomaly
scoring metric and is unaffected by this choice.

``train`` has exclusive ownership of its model; a model that is no longer
being trained is effectively frozen and safe for concurrent inference.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from . import nn
from .autodiff import Node, Tape
from .data import Normalizer, Window

LATENT_DIM = 2  # the latent space is deliberately 2-D: plottable and shareable
FORMAT_VERSION = "1"


class ModelFormatError(ValueError):
    """Model file is malformed, wrong version, or internally inconsistent."""


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; carries the epoch and batch where it happened."""

    def __init__(self, epoch: int, batch: int):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass
class LatentCode:
    """Posterior parameters (mu, log sigma^2) for one window."""

    mu: np.ndarray
    log_var: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64).reshape(LATENT_DIM)
        self.log_var = np.asarray(self.log_var, dtype=np.float64).reshape(LATENT_DIM)

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(0.5 * self.log_var)


PRIOR = LatentCode(mu=np.zeros(LATENT_DIM), log_var=np.zeros(LATENT_DIM))


class VaeModel:
    """Encoder/decoder parameters plus everything needed to reuse them.

    The model carries its input contract (window length, channel count, the
    z-score normalizer it was trained with), the KL weight beta, the init
    seed, and the calibrated anomaly threshold once one has been computed.
    """

    def __init__(self, window_len: int, channels: int, *, enc_hidden: int = 32,
                 bottleneck: int = 16, dec_hidden: int = 32, beta: float = 1.0,
                 seed: int = 42, normalizer: Normalizer | None = None,
                 threshold: float | None = None):
        if channels % 3:
            raise ModelFormatError(f"channels must be 3 * n_joints, got {channels}")
        if beta < 1.0:
            raise ModelFormatError(f"beta must be >= 1, got {beta}")
        if window_len < 1:
            raise ModelFormatError("window_len must be >= 1")
        self.window_len = window_len
        self.channels = channels
        self.enc_hidden = enc_hidden
        self.bottleneck = bottleneck
        self.dec_hidden = dec_hidden
        self.beta = float(beta)
        self.seed = seed
        self.normalizer = normalizer
        self.threshold = threshold
        self.format_version = FORMAT_VERSION

        rng = np.random.default_rng(seed)
        self.enc_lstm = nn.init_lstm(rng, channels, enc_hidden)
        self.enc_dense = nn.init_dense(rng, bottleneck, enc_hidden, "tanh")
        self.head_mu = nn.init_dense(rng, LATENT_DIM, bottleneck)
        self.head_logvar = nn.init_dense(rng, LATENT_DIM, bottleneck)
        self.dec_in = nn.init_dense(rng, bottleneck, LATENT_DIM, "tanh")
        self.dec_lstm = nn.init_lstm(rng, bottleneck, dec_hidden)
        self.dec_out = nn.init_dense(rng, channels, dec_hidden)

    @property
    def n_joints(self) -> int:
        return self.channels // 3

    def layers(self):
        return [("enc_lstm", self.enc_lstm), ("enc_dense", self.enc_dense),
                ("head_mu", self.head_mu), ("head_logvar", self.head_logvar),
                ("dec_in", self.dec_in), ("dec_lstm", self.dec_lstm),
                ("dec_out", self.dec_out)]

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for lname, layer in self.layers():
            for pname, arr in layer.parameters():
                out.append((f"{lname}.{pname}", arr))
        return out


# ------------------------------------------------------------- graph pieces


def _encoder_graph(tape: Tape, model: VaeModel, x_steps: list[Node]):
    _, (h, _) = nn.lstm_scan(model.enc_lstm, x_steps, tape)
    e = nn.dense_forward(model.enc_dense, h, tape)
    mu = nn.dense_forward(model.head_mu, e, tape)
    log_var = nn.dense_forward(model.head_logvar, e, tape)
    return mu, log_var


def _decoder_graph(tape: Tape, model: VaeModel, z: Node, steps: int) -> list[Node]:
    e = nn.dense_forward(model.dec_in, z, tape)
    hs, _ = nn.lstm_scan(model.dec_lstm, [e] * steps, tape)  # z tiled per step
    return [nn.dense_forward(model.dec_out, h, tape) for h in hs]


def _window_values(window) -> np.ndarray:
    return window.values if isinstance(window, Window) else np.asarray(window, dtype=np.float64)


def _check_window_shape(model: VaeModel, values: np.ndarray) -> None:
    expected = (model.window_len, model.channels)
    if values.shape[-2:] != expected:
        raise ModelFormatError(f"window shape {values.shape[-2:]} does not match "
                               f"model {expected}")


# ----------------------------------------------------------------- inference


_CHUNK = 128  # bounds tape memory when scoring long corpora


def encode_batch(model: VaeModel, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior (mu, log_var) arrays of shape [B, 2] for stacked windows [B, W, C]."""
    values = np.asarray(values, dtype=np.float64)
    _check_window_shape(model, values)
    mus, log_vars = [], []
    for lo in range(0, len(values), _CHUNK):
        chunk = values[lo:lo + _CHUNK]
        tape = Tape()
        x_steps = [tape.leaf(chunk[:, t, :]) for t in range(model.window_len)]
        mu, log_var = _encoder_graph(tape, model, x_steps)
        mus.append(mu.value)
        log_vars.append(log_var.value)
    return np.concatenate(mus), np.concatenate(log_vars)


def encode(model: VaeModel, window) -> LatentCode:
    """Approximate posterior of one normalized window."""
    values = _window_values(window)
    mu, log_var = encode_batch(model, values[None])
    return LatentCode(mu=mu[0], log_var=log_var[0])


def reparameterize(code: LatentCode, eps) -> np.ndarray:
    """z = mu + eps * sigma, elementwise (sigma = exp(log_var / 2))."""
    eps = np.asarray(eps, dtype=np.float64).reshape(LATENT_DIM)
    return code.mu + eps * code.sigma


def decode_batch(model: VaeModel, zs: np.ndarray) -> np.ndarray:
    """Reconstructed normalized windows [B, W, C] for latent points [B, 2]."""
    zs = np.asarray(zs, dtype=np.float64)
    if zs.ndim != 2 or zs.shape[1] != LATENT_DIM:
        raise ModelFormatError(f"latent batch must be [B, {LATENT_DIM}], got {zs.shape}")
    chunks = []
    for lo in range(0, len(zs), _CHUNK):
        tape = Tape()
        z = tape.leaf(zs[lo:lo + _CHUNK])
        outs = _decoder_graph(tape, model, z, model.window_len)
        chunks.append(np.stack([o.value for o in outs], axis=1))
    return np.concatenate(chunks)


def decode(model: VaeModel, z) -> Window:
    """Reconstructed normalized window for one latent point."""
    z = np.asarray(z, dtype=np.float64).reshape(LATENT_DIM)
    values = decode_batch(model, z[None])[0]
    return Window(values=values, source=None)


def reconstruct(model: VaeModel, values: np.ndarray) -> np.ndarray:
    """Deterministic encode-decode (eps = 0) of stacked windows [B, W, C]."""
    mu, _ = encode_batch(model, values)
    return decode_batch(model, mu)


# --------------------------------------------------------------------- losses


def kl_divergence(code: LatentCode, beta: float = 1.0) -> float:
    """Closed-form KL of the diagonal-Gaussian posterior from the N(0, I) prior.

    -(beta/2) * sum_j (1 + log sigma_j^2 - mu_j^2 - sigma_j^2), nonnegative
    and zero exactly when the posterior equals the prior.
    """
    if beta < 1.0:
        raise ValueError(f"kl_divergence: beta must be >= 1, got {beta}")
    inner = 1.0 + code.log_var - code.mu ** 2 - np.exp(code.log_var)
    return float(-(beta / 2.0) * inner.sum())


def reconstruction_loss(x, x_pred) -> float:
    """Mean over all W*channels elements of the squared reconstruction error."""
    xv = _window_values(x)
    pv = _window_values(x_pred)
    if xv.shape != pv.shape:
        raise ValueError(f"reconstruction_loss: shapes {xv.shape} vs {pv.shape}")
    return float(np.mean((xv - pv) ** 2))


def loss_graph(tape: Tape, model: VaeModel, values: np.ndarray,
               eps: np.ndarray) -> Node:
    """Differentiable batch-mean training loss; see the module docstring.

    ``values`` is [B, W, C]; ``eps`` is one fixed noise draw per window
    [B, 2].  All model parameters are watched on the tape, so gradients can
    be read back per array after ``tape.backward``.
    """
    values = np.asarray(values, dtype=np.float64)
    _check_window_shape(model, values)
    batch = values.shape[0]
    x_steps = [tape.leaf(values[:, t, :]) for t in range(model.window_len)]
    mu, log_var = _encoder_graph(tape, model, x_steps)

    eps_node = tape.leaf(np.asarray(eps, dtype=np.float64).reshape(batch, LATENT_DIM))
    sigma = tape.exp(tape.scale(log_var, 0.5))
    z = tape.add(mu, tape.mul(eps_node, sigma))

    outs = _decoder_graph(tape, model, z, model.window_len)
    recon = None
    for x_t, out_t in zip(x_steps, outs):
        step = tape.sum(tape.square(tape.sub(out_t, x_t)))
        recon = step if recon is None else tape.add(recon, step)

    one = tape.leaf(1.0)
    inner = tape.sub(tape.sub(tape.add(log_var, one), tape.square(mu)),
                     tape.exp(log_var))
    kl = tape.scale(tape.sum(inner), -model.beta / 2.0)
    return tape.add(tape.scale(recon, 1.0 / batch), tape.scale(kl, 1.0 / batch))


def loss(model: VaeModel, window, eps) -> float:
    """Training loss of a single window for a fixed noise draw."""
    values = _window_values(window)
    eps = np.asarray(eps, dtype=np.float64).reshape(1, LATENT_DIM)
    tape = Tape()
    return float(loss_graph(tape, model, values[None], eps).value)


def loss_builder(model: VaeModel, values: np.ndarray, eps: np.ndarray):
    """(build, arrays) pair for ``gradient_check`` over all model parameters.

    ``build(tape, nodes)`` adopts the provided leaves in place of the model's
    parameter arrays and returns the loss root, so finite differences can
    perturb copies without touching the model.
    """
    arrays = [arr for _, arr in model.parameters()]

    def build(tape: Tape, nodes: list[Node]) -> Node:
        for arr, node in zip(arrays, nodes):
            tape.adopt(arr, node)
        return loss_graph(tape, model, values, eps)

    return build, arrays


# ------------------------------------------------------------------- training


@dataclass
class TrainConfig:
    epochs: int = 60
    batch_size: int = 16
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    seed: int = 42
    beta: float = 1.0
    validation_fraction: float = 0.1

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("train: epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("train: batch_size must be >= 1")
        if not (0.0 < self.validation_fraction < 1.0):
            raise ValueError("train: validation_fraction must be in (0, 1)")
        if self.beta < 1.0:
            raise ValueError("train: beta must be >= 1")


@dataclass
class TrainHistory:
    train_loss: list[float]
    val_loss: list[float]

    @property
    def epochs(self) -> int:
        return len(self.train_loss)


def validation_split(n_windows: int, cfg: TrainConfig):
    """Seeded train/validation index split; recomputable from cfg alone."""
    rng = np.random.default_rng((cfg.seed, 0))
    perm = rng.permutation(n_windows)
    n_val = max(1, int(round(cfg.validation_fraction * n_windows)))
    n_val = min(n_val, n_windows - 1)
    return perm[n_val:], perm[:n_val]


def _batch_losses(model: VaeModel, values: np.ndarray, eps: np.ndarray,
                  batch_size: int) -> float:
    total = 0.0
    for lo in range(0, len(values), batch_size):
        hi = min(lo + batch_size, len(values))
        tape = Tape()
        root = loss_graph(tape, model, values[lo:hi], eps[lo:hi])
        total += float(root.value) * (hi - lo)
    return total / len(values)


def train(model: VaeModel, windows: list[Window],
          cfg: TrainConfig) -> tuple[VaeModel, TrainHistory]:
    """Mini-batch VAE training; deterministic given cfg.seed.

    Windows are shuffled per epoch, every window gets a fresh eps draw per
    step, and a seeded validation split is held out for reporting and
    threshold calibration.  Aborts with TrainingDivergedError if the loss
    goes non-finite.
    """
    if not windows:
        raise ValueError("train: no windows")
    values = np.stack([_window_values(w) for w in windows])
    _check_window_shape(model, values)
    model.beta = float(cfg.beta)

    train_idx, val_idx = validation_split(len(windows), cfg)
    rng = np.random.default_rng((cfg.seed, 1))
    opt = nn.Optimizer(kind=cfg.optimizer, learning_rate=cfg.learning_rate)
    params = [arr for _, arr in model.parameters()]

    history = TrainHistory(train_loss=[], val_loss=[])
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(train_idx)
        running = 0.0
        for b, lo in enumerate(range(0, len(order), cfg.batch_size)):
            batch = order[lo:lo + cfg.batch_size]
            eps = rng.standard_normal((len(batch), LATENT_DIM))
            tape = Tape()
            root = loss_graph(tape, model, values[batch], eps)
            batch_loss = float(root.value)
            if not np.isfinite(batch_loss):
                raise TrainingDivergedError(epoch=epoch, batch=b)
            tape.backward(root)
            grads = [tape.grad_of(arr) for arr in params]
            nn.optimizer_step(opt, params, grads)
            running += batch_loss * len(batch)
        eps_val = rng.standard_normal((len(val_idx), LATENT_DIM))
        history.train_loss.append(running / len(order))
        history.val_loss.append(
            _batch_losses(model, values[val_idx], eps_val, cfg.batch_size))
    return model, history


# ----------------------------------------------------------------- generation


def generate(model: VaeModel, count: int, *, seed: int | None = None,
             rng: np.random.Generator | None = None,
             base: LatentCode | None = None) -> list[Window]:
    """Sample new normalized windows from the decoder.

    Each sample draws a fresh eps ~ N(0, I) and decodes
    z = reparameterize(base, eps); ``base`` defaults to the prior.  Output
    windows stay normalized (z-scored), matching what the model was trained
    on; denormalize with the model's normalizer if physical units are needed.
    """
    if count < 0:
        raise ValueError("generate: count must be >= 0")
    if count == 0:
        return []
    if rng is None:
        rng = np.random.default_rng(seed)
    code = base if base is not None else PRIOR
    eps = rng.standard_normal((count, LATENT_DIM))
    zs = code.mu + eps * code.sigma
    values = decode_batch(model, zs)
    return [Window(values=values[i], source=None) for i in range(count)]


# -------------------------------------------------------------- serialization


def model_to_json(model: VaeModel) -> str:
    """Canonical JSON document for the model; stable bytes for stable inputs."""
    doc = {
        "format_version": model.format_version,
        "config": {
            "window_len": model.window_len,
            "channels": model.channels,
            "enc_hidden": model.enc_hidden,
            "bottleneck": model.bottleneck,
            "dec_hidden": model.dec_hidden,
            "latent_dim": LATENT_DIM,
            "beta": model.beta,
            "seed": model.seed,
            "threshold": model.threshold,
        },
        "normalizer": None if model.normalizer is None else {
            "mean": model.normalizer.mean.tolist(),
            "std": model.normalizer.std.tolist(),
        },
        "params": {
            name: {"shape": list(arr.shape), "values": arr.reshape(-1).tolist()}
            for name, arr in model.parameters()
        },
    }
    return json.dumps(doc, indent=1)


def save(model: VaeModel, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(model_to_json(model))
        fh.write("\n")


def model_fingerprint(model: VaeModel) -> str:
    """SHA-256 of the canonical model document."""
    return hashlib.sha256(model_to_json(model).encode("utf-8")).hexdigest()


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ModelFormatError(message)


def load(path) -> VaeModel:
    """Load a model file, validating version, latent size, and all shapes."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"invalid JSON: {exc}") from exc
    _require(isinstance(doc, dict), "model document must be an object")
    _require(doc.get("format_version") == FORMAT_VERSION,
             f"unsupported format_version {doc.get('format_version')!r}")
    cfg = doc.get("config")
    _require(isinstance(cfg, dict), "missing config block")
    _require(cfg.get("latent_dim") == LATENT_DIM,
             f"latent_dim must be {LATENT_DIM}, got {cfg.get('latent_dim')}")

    norm = None
    if doc.get("normalizer") is not None:
        nd = doc["normalizer"]
        _require(isinstance(nd, dict) and "mean" in nd and "std" in nd,
                 "malformed normalizer block")
        norm = Normalizer(mean=np.array(nd["mean"], dtype=np.float64),
                          std=np.array(nd["std"], dtype=np.float64))

    try:
        model = VaeModel(window_len=int(cfg["window_len"]),
                         channels=int(cfg["channels"]),
                         enc_hidden=int(cfg["enc_hidden"]),
                         bottleneck=int(cfg["bottleneck"]),
                         dec_hidden=int(cfg["dec_hidden"]),
                         beta=float(cfg["beta"]), seed=int(cfg["seed"]),
                         normalizer=norm, threshold=cfg.get("threshold"))
    except KeyError as exc:
        raise ModelFormatError(f"missing config field {exc}") from exc

    params = doc.get("params")
    _require(isinstance(params, dict), "missing params block")
    for name, arr in model.parameters():
        entry = params.get(name)
        _require(isinstance(entry, dict), f"missing parameter {name!r}")
        shape = tuple(entry.get("shape", ()))
        values = entry.get("values")
        _require(shape == arr.shape,
                 f"parameter {name!r}: shape {shape} does not match {arr.shape}")
        _require(isinstance(values, list) and len(values) == arr.size,
                 f"parameter {name!r}: value count does not match shape")
        arr[...] = np.array(values, dtype=np.float64).reshape(shape)
    extra = set(params) - {name for name, _ in model.parameters()}
    _require(not extra, f"unknown parameters {sorted(extra)}")
    return model
