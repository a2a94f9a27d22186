"""Funneled MLP construction, training, inference, and persistence.

Networks are plain numpy: float32 weights stored as (n_in, n_out) matrices,
ReLU hidden layers (swappable to tanh), linear output clamped to [0, 1] at
inference only. Training minimizes the log-cosh error of range-transformed
XYZ targets with an adaptive-moment optimizer and a reduce-on-plateau
learning-rate schedule; runs are bit-deterministic for a fixed seed and
thread count.
"""

from __future__ import annotations

import json
import math
import struct
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import rangetransform
from .errors import FormatError, NumericError
from .featencode import EncodingSpec, encode
from .rangetransform import RangeTransformSpec
from .sampling import DataSplit, ReflectanceGrid, reconstruct_keys, split

MAGIC = b"DFRQNN1\x00"
GOLDEN_RATIO_RECIPROCAL = 2.0 / (1.0 + math.sqrt(5.0))

_ACTIVATIONS = {
    "relu": (lambda z: np.maximum(z, 0.0), lambda z: (z > 0.0).astype(z.dtype)),
    "tanh": (np.tanh, lambda z: 1.0 - np.tanh(z) ** 2),
}

__all__ = [
    "NetworkModel",
    "TrainConfig",
    "TrainReport",
    "build_funnel",
    "parameter_count",
    "init_model",
    "forward",
    "logcosh_loss",
    "train",
    "gradient_check",
    "predict_reflectance",
    "save",
    "load",
    "save_file",
    "load_file",
]


def parameter_count(layer_sizes) -> int:
    sizes = list(layer_sizes)
    return sum(sizes[i] * sizes[i + 1] + sizes[i + 1] for i in range(len(sizes) - 1))


def _round4(x: float) -> int:
    return int(round(x / 4.0)) * 4


def build_funnel(input_size: int, first_hidden: int, num_hidden: int,
                 ratio: float = GOLDEN_RATIO_RECIPROCAL) -> list:
    """Layer sizes [input, h1, ..., h_num_hidden, 3] with each hidden layer
    shrunk by ``ratio`` and rounded to the nearest multiple of 4."""
    if input_size < 1 or first_hidden < 4 or num_hidden < 1:
        raise ValueError("input_size, first_hidden >= 4 and num_hidden >= 1 required")
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie strictly inside (0, 1)")
    hidden = [int(first_hidden)]
    for i in range(1, num_hidden):
        size = _round4(first_hidden * ratio**i)
        if size < 4:
            raise ValueError(f"hidden layer {i + 1} rounds below 4; reduce depth or raise first_hidden")
        if size >= hidden[-1]:
            raise ValueError("funnel sizes must strictly decrease; lower the ratio")
        hidden.append(size)
    return [int(input_size)] + hidden + [3]


@dataclass(frozen=True)
class NetworkModel:
    """MLP weights bundled with the input encoding and range-transform specs."""

    layer_sizes: tuple
    weights: tuple  # of (n_in, n_out) float32 arrays
    biases: tuple  # of (n_out,) float32 arrays
    encoding: EncodingSpec
    range_transform: RangeTransformSpec
    activation: str = "relu"
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2 or sizes[-1] != 3:
            raise ValueError("layer_sizes must end in an output layer of 3")
        hidden = sizes[1:-1]
        if any(b >= a for a, b in zip(hidden, hidden[1:])):
            raise ValueError("hidden sizes must strictly decrease after the first hidden layer")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        ws, bs = [], []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            w = np.ascontiguousarray(w, dtype=np.float32)
            b = np.ascontiguousarray(b, dtype=np.float32)
            if w.shape != (sizes[i], sizes[i + 1]) or b.shape != (sizes[i + 1],):
                raise ValueError(f"layer {i} parameter shapes disagree with layer_sizes")
            w.setflags(write=False)
            b.setflags(write=False)
            ws.append(w)
            bs.append(b)
        if len(ws) != len(sizes) - 1:
            raise ValueError("one weight matrix and bias vector per layer transition required")
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "weights", tuple(ws))
        object.__setattr__(self, "biases", tuple(bs))

    @property
    def parameter_count(self) -> int:
        return parameter_count(self.layer_sizes)


def init_model(
    layer_sizes,
    encoding: EncodingSpec,
    range_transform: RangeTransformSpec,
    seed: int = 0,
    activation: str = "relu",
    provenance: dict | None = None,
) -> NetworkModel:
    """Glorot-uniform weights, zero biases, seeded."""
    rng = np.random.Generator(np.random.PCG64(seed))
    sizes = [int(s) for s in layer_sizes]
    weights, biases = [], []
    for n_in, n_out in zip(sizes, sizes[1:]):
        limit = math.sqrt(6.0 / (n_in + n_out))
        weights.append(rng.uniform(-limit, limit, size=(n_in, n_out)).astype(np.float32))
        biases.append(np.zeros(n_out, dtype=np.float32))
    return NetworkModel(
        tuple(sizes), tuple(weights), tuple(biases), encoding, range_transform,
        activation, provenance or {},
    )


def _forward_pass(weights, biases, act, x):
    """Pre-activations and activations per layer; output layer is linear."""
    zs, acts = [], [x]
    a = x
    for i, (w, b) in enumerate(zip(weights, biases)):
        z = a @ w + b
        zs.append(z)
        a = act(z) if i < len(weights) - 1 else z
        acts.append(a)
    return zs, acts


def forward(model: NetworkModel, features) -> np.ndarray:
    """Inference: encoded features (d,) or (K, d) to outputs clamped to [0, 1]."""
    x = np.asarray(features, dtype=np.float32)
    single = x.ndim == 1
    if single:
        x = x[np.newaxis, :]
    if x.shape[1] != model.layer_sizes[0]:
        raise ValueError(f"features have {x.shape[1]} columns, expected {model.layer_sizes[0]}")
    act = _ACTIVATIONS[model.activation][0]
    _, acts = _forward_pass(model.weights, model.biases, act, x)
    out = np.clip(acts[-1], 0.0, 1.0)
    return out[0] if single else out


def logcosh_loss(pred, target) -> float:
    """Mean log(cosh(pred - target)), computed in the overflow-safe form."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError("pred and target must have equal shapes")
    x = np.abs(p - t)
    return float(np.mean(x + np.log1p(np.exp(-2.0 * x)) - math.log(2.0)))


def _loss_and_grads(weights, biases, act_pair, x, y):
    """Log-cosh loss plus parameter gradients for one batch."""
    act, dact = act_pair
    zs, acts = _forward_pass(weights, biases, act, x)
    diff = acts[-1] - y
    ax = np.abs(diff)
    loss = float(np.mean(ax + np.log1p(np.exp(-2.0 * ax)) - math.log(2.0)))
    delta = np.tanh(diff) / diff.size
    grads_w, grads_b = [None] * len(weights), [None] * len(weights)
    for i in range(len(weights) - 1, -1, -1):
        grads_w[i] = acts[i].T @ delta
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ weights[i].T) * dact(zs[i - 1])
    return loss, grads_w, grads_b


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 4096
    max_epochs: int = 200
    plateau_patience: int = 10
    decay_factor: float = 0.5
    min_lr: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not (self.learning_rate > 0 and self.min_lr > 0 and self.batch_size > 0):
            raise ValueError("rates and batch size must be positive")
        if not 0.0 < self.decay_factor < 1.0:
            raise ValueError("decay_factor must lie in (0, 1)")
        if self.max_epochs < 0 or self.plateau_patience < 1:
            raise ValueError("max_epochs must be >= 0 and plateau_patience >= 1")

    def to_json(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "plateau_patience": self.plateau_patience,
            "decay_factor": self.decay_factor,
            "min_lr": self.min_lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "adam_epsilon": self.adam_epsilon,
            "seed": self.seed,
        }


@dataclass
class TrainReport:
    train_loss: list
    test_loss: list
    wall_time_s: float
    final_learning_rate: float
    config: dict

    def to_json(self) -> dict:
        return {
            "train_loss": self.train_loss,
            "test_loss": self.test_loss,
            "wall_time_s": self.wall_time_s,
            "final_learning_rate": self.final_learning_rate,
            "config": self.config,
        }


def _training_arrays(grid: ReflectanceGrid, indices, model: NetworkModel):
    keys = reconstruct_keys(grid, indices)
    feats = encode(keys, model.encoding).astype(np.float32)
    xyz = grid.xyz.reshape(-1, 3)[indices].astype(np.float64)
    targets = rangetransform.forward(xyz, model.range_transform).astype(np.float32)
    return feats, targets


def train(
    grid: ReflectanceGrid,
    split_spec: DataSplit,
    model_init: NetworkModel,
    config: TrainConfig,
):
    """Fit the model to the grid's valid samples; returns (model, report).

    The learning rate is multiplied by ``decay_factor`` whenever the watched
    loss (test loss, or train loss when the test set is empty) fails to
    improve for ``plateau_patience`` consecutive epochs.
    """
    t_start = time.perf_counter()
    train_idx, test_idx = split(grid, split_spec)
    if len(train_idx) == 0:
        raise ValueError("the split leaves no training samples")
    x_train, y_train = _training_arrays(grid, train_idx, model_init)
    have_test = len(test_idx) > 0
    if have_test:
        x_test, y_test = _training_arrays(grid, test_idx, model_init)

    weights = [w.copy() for w in model_init.weights]
    biases = [b.copy() for b in model_init.biases]
    act_pair = _ACTIVATIONS[model_init.activation]
    m_w = [np.zeros_like(w) for w in weights]
    v_w = [np.zeros_like(w) for w in weights]
    m_b = [np.zeros_like(b) for b in biases]
    v_b = [np.zeros_like(b) for b in biases]

    rng = np.random.Generator(np.random.PCG64(config.seed))
    lr = config.learning_rate
    best = math.inf
    stale = 0
    cooldown = 0
    step = 0
    train_curve, test_curve = [], []

    for _ in range(config.max_epochs):
        perm = rng.permutation(len(x_train))
        epoch_loss = 0.0
        for lo in range(0, len(perm), config.batch_size):
            sel = perm[lo : lo + config.batch_size]
            loss, gw, gb = _loss_and_grads(weights, biases, act_pair, x_train[sel], y_train[sel])
            if not math.isfinite(loss):
                raise NumericError(f"training diverged at step {step} (loss {loss})")
            epoch_loss += loss * len(sel)
            step += 1
            bc1 = 1.0 - config.beta1**step
            bc2 = 1.0 - config.beta2**step
            for i in range(len(weights)):
                for grad, theta, m, v in (
                    (gw[i], weights[i], m_w[i], v_w[i]),
                    (gb[i], biases[i], m_b[i], v_b[i]),
                ):
                    m *= config.beta1
                    m += (1.0 - config.beta1) * grad
                    v *= config.beta2
                    v += (1.0 - config.beta2) * grad * grad
                    theta -= lr * (m / bc1) / (np.sqrt(v / bc2) + config.adam_epsilon)
        train_curve.append(epoch_loss / len(x_train))
        if have_test:
            pred = _forward_pass(weights, biases, act_pair[0], x_test)[1][-1]
            test_curve.append(logcosh_loss(pred, y_test))
        watched = test_curve[-1] if have_test else train_curve[-1]
        if cooldown > 0:
            cooldown -= 1
        if watched < best:
            best = watched
            stale = 0
        elif cooldown == 0:
            stale += 1
            if stale >= config.plateau_patience:
                # Cool down after each cut so a noisy plateau cannot cascade
                # the rate straight to the floor.
                lr = max(lr * config.decay_factor, config.min_lr)
                stale = 0
                cooldown = config.plateau_patience

    model = replace(
        model_init,
        weights=tuple(weights),
        biases=tuple(biases),
        provenance={
            **model_init.provenance,
            "dataset_heightfield_id": grid.heightfield_id,
            "train_samples": int(len(train_idx)),
            "test_samples": int(len(test_idx)),
            "train_config": config.to_json(),
        },
    )
    report = TrainReport(
        train_loss=train_curve,
        test_loss=test_curve,
        wall_time_s=time.perf_counter() - t_start,
        final_learning_rate=lr,
        config=config.to_json(),
    )
    return model, report


def gradient_check(model: NetworkModel, features, target, h: float = 1e-4) -> float:
    """Max relative error between backprop and central finite differences.

    Runs in float64 on a copy of the parameters. The relative error uses an
    absolute floor of 1e-3 in the denominator so near-zero gradients are
    compared absolutely. Intended for small networks (cost grows with the
    square of the parameter count).
    """
    if not 1e-6 <= h <= 1e-3:
        raise ValueError("h must lie in [1e-6, 1e-3]")
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    y = np.atleast_2d(np.asarray(target, dtype=np.float64))
    weights = [w.astype(np.float64) for w in model.weights]
    biases = [b.astype(np.float64) for b in model.biases]
    act_pair = _ACTIVATIONS[model.activation]
    _, gw, gb = _loss_and_grads(weights, biases, act_pair, x, y)
    # _loss_and_grads normalizes by element count; undo nothing, FD matches.

    def loss_at() -> float:
        zs, acts = _forward_pass(weights, biases, act_pair[0], x)
        return logcosh_loss(acts[-1], y)

    worst = 0.0
    for arrays, grads in ((weights, gw), (biases, gb)):
        for arr, grad in zip(arrays, grads):
            flat = arr.reshape(-1)
            gflat = grad.reshape(-1)
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + h
                f_plus = loss_at()
                flat[j] = orig - h
                f_minus = loss_at()
                flat[j] = orig
                fd = (f_plus - f_minus) / (2.0 * h)
                denom = max(abs(gflat[j]), abs(fd), 1e-3)
                worst = max(worst, abs(gflat[j] - fd) / denom)
    return worst


def predict_reflectance(model: NetworkModel, keys) -> np.ndarray:
    """Decoded XYZ reflectance for keys (3,) or (K, 3): encode, clamp-free
    forward pass, clamp to [0, 1], then invert the range transform."""
    feats = encode(keys, model.encoding).astype(np.float32)
    out = forward(model, feats)
    return rangetransform.inverse(np.asarray(out, dtype=np.float64), model.range_transform)


def save(model: NetworkModel) -> bytes:
    header = {
        "layer_sizes": list(model.layer_sizes),
        "activation": model.activation,
        "encoding": model.encoding.to_json(),
        "range_transform": model.range_transform.to_json(),
        "provenance": model.provenance,
        "parameter_count": model.parameter_count,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    chunks = [MAGIC, struct.pack("<I", len(blob)), blob]
    for w, b in zip(model.weights, model.biases):
        chunks.append(w.astype("<f4").tobytes(order="C"))
        chunks.append(b.astype("<f4").tobytes(order="C"))
    return b"".join(chunks)


def load(data: bytes) -> NetworkModel:
    if len(data) < len(MAGIC) + 4 or data[: len(MAGIC)] != MAGIC:
        raise FormatError("not a model file (bad magic)")
    (hlen,) = struct.unpack_from("<I", data, len(MAGIC))
    off = len(MAGIC) + 4
    try:
        header = json.loads(data[off : off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"bad model header: {exc}") from exc
    off += hlen
    sizes = [int(s) for s in header["layer_sizes"]]
    expected = off + 4 * parameter_count(sizes)
    if len(data) != expected:
        raise FormatError(f"model payload has {len(data)} bytes, expected {expected}")
    weights, biases = [], []
    for n_in, n_out in zip(sizes, sizes[1:]):
        w = np.frombuffer(data, dtype="<f4", count=n_in * n_out, offset=off).reshape(n_in, n_out)
        off += 4 * n_in * n_out
        b = np.frombuffer(data, dtype="<f4", count=n_out, offset=off)
        off += 4 * n_out
        weights.append(w)
        biases.append(b)
    return NetworkModel(
        tuple(sizes),
        tuple(weights),
        tuple(biases),
        EncodingSpec.from_json(header["encoding"]),
        RangeTransformSpec.from_json(header["range_transform"]),
        header["activation"],
        header.get("provenance", {}),
    )


def save_file(model: NetworkModel, path) -> None:
    with open(path, "wb") as f:
        f.write(save(model))


def load_file(path) -> NetworkModel:
    with open(path, "rb") as f:
        return load(f.read())
