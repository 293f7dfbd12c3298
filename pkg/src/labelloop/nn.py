"""Fixed-topology MLP classifier with hand-rolled reverse-mode gradients.

The differentiated graph is exactly: input -> (Linear, ReLU)* -> Linear
-> softmax, with cross-entropy losses on top. No general autodiff.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

# Floor applied before log() so cross-entropy never produces inf/NaN.
LOG_EPS = 1e-12

CHECKPOINT_MAGIC = b"BMIS"
CHECKPOINT_VERSION = 1


@dataclass
class OptimizerConfig:
    learning_rate: float = 0.03
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 64

    def validate(self) -> None:
        if not (self.learning_rate > 0):
            raise ValueError("learning_rate must be > 0")
        if not (0 <= self.momentum < 1):
            raise ValueError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class TaskModel:
    """Parameter set of the classifier plus SGD momentum buffers."""

    sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    vel_w: list[np.ndarray]
    vel_b: list[np.ndarray]
    seed: int

    @classmethod
    def init(cls, sizes: tuple[int, ...], seed: int = 0) -> "TaskModel":
        if len(sizes) < 2:
            raise ValueError("need at least input and output layer sizes")
        if sizes[-1] < 2:
            raise ValueError("class count must be >= 2")
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            s = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-s, s, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(
            sizes=tuple(int(s) for s in sizes),
            weights=weights,
            biases=biases,
            vel_w=[np.zeros_like(w) for w in weights],
            vel_b=[np.zeros_like(b) for b in biases],
            seed=int(seed),
        )

    @property
    def input_dim(self) -> int:
        return self.sizes[0]

    @property
    def n_classes(self) -> int:
        return self.sizes[-1]

    @property
    def rep_dim(self) -> int:
        return self.sizes[-2]

    def copy(self) -> "TaskModel":
        """Deep snapshot; used to freeze parameters at cycle boundaries."""
        return TaskModel(
            sizes=self.sizes,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            vel_w=[v.copy() for v in self.vel_w],
            vel_b=[v.copy() for v in self.vel_b],
            seed=self.seed,
        )

    def head(self) -> tuple[np.ndarray, np.ndarray]:
        """Final linear layer (maps representation -> logits)."""
        return self.weights[-1], self.biases[-1]


@dataclass
class Prediction:
    """Single-sample view of a forward pass."""

    logits: np.ndarray
    probs: np.ndarray
    representation: np.ndarray
    pred_class: int


@dataclass
class Predictions:
    """Batched forward output. Indexing yields per-sample Prediction views."""

    logits: np.ndarray
    probs: np.ndarray
    representations: np.ndarray
    pred_class: np.ndarray

    def __len__(self) -> int:
        return self.logits.shape[0]

    def __getitem__(self, i: int) -> Prediction:
        return Prediction(
            logits=self.logits[i],
            probs=self.probs[i],
            representation=self.representations[i],
            pred_class=int(self.pred_class[i]),
        )


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def forward(model: TaskModel, batch: np.ndarray) -> Predictions:
    """Forward pass; representation = activations feeding the final layer."""
    x = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if x.shape[1] != model.input_dim:
        raise ValueError(
            f"batch has {x.shape[1]} features, model expects {model.input_dim}"
        )
    a = x
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        a = np.maximum(a @ w + b, 0.0)
    w_out, b_out = model.head()
    logits = a @ w_out + b_out
    probs = softmax(logits)
    # np.argmax breaks ties toward the lowest class index.
    return Predictions(
        logits=logits,
        probs=probs,
        representations=a,
        pred_class=np.argmax(probs, axis=1),
    )


def head_probs(model: TaskModel, representations: np.ndarray) -> np.ndarray:
    """Softmax output of the final layer only, given representations."""
    r = np.atleast_2d(np.asarray(representations, dtype=np.float64))
    if r.shape[1] != model.rep_dim:
        raise ValueError(
            f"representation has {r.shape[1]} dims, head expects {model.rep_dim}"
        )
    w, b = model.head()
    return softmax(r @ w + b)


def cross_entropy_rows(targets: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Per-row cross-entropy -sum(target * log probs), log clamped at LOG_EPS."""
    p = np.clip(probs, LOG_EPS, None)
    return -np.sum(targets * np.log(p), axis=-1)


def _check_one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    y = np.atleast_2d(np.asarray(labels, dtype=np.float64))
    if y.shape[1] != n_classes:
        raise ValueError(f"labels have width {y.shape[1]}, expected {n_classes}")
    ok = np.all((y == 0.0) | (y == 1.0)) and np.all(np.sum(y, axis=1) == 1.0)
    if not ok:
        raise ValueError("labels must be valid one-hot vectors")
    return y


def supervised_loss(predictions: Predictions, labels: np.ndarray) -> float:
    """Mean cross-entropy over a labeled batch."""
    y = _check_one_hot(labels, predictions.probs.shape[1])
    if y.shape[0] != len(predictions):
        raise ValueError("label count does not match prediction count")
    return float(np.mean(cross_entropy_rows(y, predictions.probs)))


def one_hot(classes: np.ndarray, n_classes: int) -> np.ndarray:
    c = np.asarray(classes, dtype=np.int64)
    if np.any(c < 0) or np.any(c >= n_classes):
        raise ValueError("class index out of range")
    out = np.zeros((c.shape[0], n_classes))
    out[np.arange(c.shape[0]), c] = 1.0
    return out


@dataclass
class TrainBatch:
    """Inputs for one gradient evaluation.

    x: weak-augmented labeled inputs; x_strong: strong-augmented inputs of the
    currently pseudo-labeled samples. Either may be None depending on LossSpec.
    """

    x: np.ndarray | None = None
    x_strong: np.ndarray | None = None


@dataclass
class LossSpec:
    """Which objective to differentiate: supervised CE, the consistency term,
    or their sum."""

    kind: str  # "supervised" | "consistency" | "combined"
    labels: np.ndarray | None = None
    pseudo_labels: np.ndarray | None = None
    mu: float = 1.0


@dataclass
class Gradients:
    gw: list[np.ndarray]
    gb: list[np.ndarray]

    def __iadd__(self, other: "Gradients") -> "Gradients":
        for a, b in zip(self.gw, other.gw):
            a += b
        for a, b in zip(self.gb, other.gb):
            a += b
        return self

    @classmethod
    def zeros_like(cls, model: TaskModel) -> "Gradients":
        return cls(
            gw=[np.zeros_like(w) for w in model.weights],
            gb=[np.zeros_like(b) for b in model.biases],
        )


def _backprop_ce(
    model: TaskModel, x: np.ndarray, targets: np.ndarray, scale: float
) -> tuple[Gradients, float]:
    """Gradients of scale * sum_i CE(target_i, softmax(f(x_i)))."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    acts = [x]
    a = x
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        a = np.maximum(a @ w + b, 0.0)
        acts.append(a)
    w_out, b_out = model.head()
    probs = softmax(a @ w_out + b_out)
    loss = scale * float(np.sum(cross_entropy_rows(targets, probs)))

    delta = (probs - targets) * scale
    grads = Gradients(gw=[None] * len(model.weights), gb=[None] * len(model.biases))
    for layer in range(len(model.weights) - 1, -1, -1):
        grads.gw[layer] = acts[layer].T @ delta
        grads.gb[layer] = np.sum(delta, axis=0)
        if layer > 0:
            delta = (delta @ model.weights[layer].T) * (acts[layer] > 0.0)
    return grads, loss


def grad_params(
    model: TaskModel, batch: TrainBatch, loss: LossSpec
) -> tuple[Gradients, float]:
    """Parameter gradients for the requested loss; matches finite differences."""
    if loss.kind not in ("supervised", "consistency", "combined"):
        raise ValueError(f"unknown loss kind {loss.kind!r}")
    total = Gradients.zeros_like(model)
    value = 0.0
    if loss.kind in ("supervised", "combined"):
        if batch.x is None or loss.labels is None:
            raise ValueError("supervised loss needs batch.x and labels")
        y = _check_one_hot(loss.labels, model.n_classes)
        g, v = _backprop_ce(model, batch.x, y, 1.0 / y.shape[0])
        total += g
        value += v
    if loss.kind in ("consistency", "combined"):
        if batch.x_strong is not None and loss.pseudo_labels is not None:
            p = _check_one_hot(loss.pseudo_labels, model.n_classes)
            if p.shape[0] > 0:
                g, v = _backprop_ce(
                    model, batch.x_strong, p, loss.mu / p.shape[0]
                )
                total += g
                value += v
        elif loss.kind == "consistency":
            raise ValueError("consistency loss needs batch.x_strong and pseudo_labels")
    return total, value


def grad_representation(
    model: TaskModel, representation: np.ndarray, target: np.ndarray
) -> np.ndarray:
    """Gradient of KL(target || softmax(head(r))) w.r.t. r.

    Only the final linear layer + softmax are differentiated through; the
    perturbation this feeds lives in representation space.
    """
    r = np.asarray(representation, dtype=np.float64)
    single = r.ndim == 1
    q = head_probs(model, r)
    t = np.atleast_2d(np.asarray(target, dtype=np.float64))
    if t.shape != q.shape:
        raise ValueError("target distribution shape mismatch")
    w, _ = model.head()
    g = (q - t) @ w.T
    return g[0] if single else g


def sgd_step(
    model: TaskModel, grads: Gradients, cfg: OptimizerConfig
) -> TaskModel:
    """In-place SGD with momentum; v <- mo*v + g + wd*w, w <- w - lr*v."""
    for g in grads.gw + grads.gb:
        if not np.all(np.isfinite(g)):
            raise ValueError("non-finite gradient; step rejected")
    lr, mo, wd = cfg.learning_rate, cfg.momentum, cfg.weight_decay
    for i in range(len(model.weights)):
        model.vel_w[i] = mo * model.vel_w[i] + grads.gw[i] + wd * model.weights[i]
        model.weights[i] = model.weights[i] - lr * model.vel_w[i]
        model.vel_b[i] = mo * model.vel_b[i] + grads.gb[i] + wd * model.biases[i]
        model.biases[i] = model.biases[i] - lr * model.vel_b[i]
    return model


def save_checkpoint(model: TaskModel, path: str) -> None:
    """Versioned binary container; round-trip is bit-exact.

    Layout (little-endian): magic "BMIS", u32 version, u32 layer count, then
    per layer u32 rows, u32 cols, row-major f64 weights, f64 biases; then the
    momentum buffers in the same per-layer pattern; then u64 seed.
    """
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(model.weights)))
        for w, b in zip(model.weights, model.biases):
            f.write(struct.pack("<II", w.shape[0], w.shape[1]))
            f.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
        for vw, vb in zip(model.vel_w, model.vel_b):
            f.write(np.ascontiguousarray(vw, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(vb, dtype="<f8").tobytes())
        f.write(struct.pack("<Q", model.seed & 0xFFFFFFFFFFFFFFFF))


def load_checkpoint(path: str) -> TaskModel:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError("not a model checkpoint (bad magic)")
    version, n_layers = struct.unpack_from("<II", data, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    off = 12
    shapes = []
    weights, biases = [], []
    for _ in range(n_layers):
        rows, cols = struct.unpack_from("<II", data, off)
        off += 8
        shapes.append((rows, cols))
        w = np.frombuffer(data, dtype="<f8", count=rows * cols, offset=off)
        off += rows * cols * 8
        b = np.frombuffer(data, dtype="<f8", count=cols, offset=off)
        off += cols * 8
        weights.append(w.reshape(rows, cols).copy())
        biases.append(b.copy())
    vel_w, vel_b = [], []
    for rows, cols in shapes:
        vw = np.frombuffer(data, dtype="<f8", count=rows * cols, offset=off)
        off += rows * cols * 8
        vb = np.frombuffer(data, dtype="<f8", count=cols, offset=off)
        off += cols * 8
        vel_w.append(vw.reshape(rows, cols).copy())
        vel_b.append(vb.copy())
    if off + 8 > len(data):
        raise ValueError("truncated checkpoint")
    (seed,) = struct.unpack_from("<Q", data, off)
    sizes = (shapes[0][0],) + tuple(c for _, c in shapes)
    return TaskModel(
        sizes=sizes,
        weights=weights,
        biases=biases,
        vel_w=vel_w,
        vel_b=vel_b,
        seed=int(seed),
    )
