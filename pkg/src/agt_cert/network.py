"""Dense ReLU networks: nominal forward pass, exact backprop, and SGD.

Layer k computes ``zhat = W z + b`` with ReLU after every layer except the
last; the final pre-activation is the model output (logits).  Weights are
stored as (n_k, n_{k-1}) matrices, inputs as row vectors, so the batched
forward pass is ``X @ W.T + b``.

Training is deterministic given the seed: one shuffle per epoch, fixed
batch order, trailing partial batches dropped so every batch has the same
size (per-batch adversary budgets assume this).
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numpy as np


class NetworkError(ValueError):
    """Raised for invalid architectures, labels, or training configs."""


class LossKind(enum.Enum):
    MSE = "mse"
    CROSS_ENTROPY = "cross_entropy"


@dataclass
class DenseReluNetwork:
    """Fully connected ReLU network.

    weights[k] has shape (n_k, n_{k-1}) and biases[k] has length n_k.
    """

    weights: list
    biases: list

    def __post_init__(self):
        if len(self.weights) != len(self.biases):
            raise NetworkError("weights and biases must pair up per layer")
        if not self.weights:
            raise NetworkError("network needs at least one layer")
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        prev = self.weights[0].shape[1]
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1:
                raise NetworkError(f"layer {k}: expected 2-D weight and 1-D bias")
            if w.shape[1] != prev:
                raise NetworkError(
                    f"layer {k}: weight shape {w.shape} does not chain from width {prev}"
                )
            if b.shape[0] != w.shape[0]:
                raise NetworkError(f"layer {k}: bias length {b.shape[0]} != {w.shape[0]}")
            prev = w.shape[0]

    @classmethod
    def init_random(cls, layer_dims, seed: int) -> "DenseReluNetwork":
        """Seeded He-style uniform init: U(-sqrt(6/fan_in), sqrt(6/fan_in))."""
        dims = list(layer_dims)
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise NetworkError(f"layer_dims must be >=2 positive ints, got {dims}")
        rng = np.random.default_rng(seed)
        ws, bs = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            limit = np.sqrt(6.0 / fan_in)
            ws.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
            bs.append(np.zeros(fan_out))
        return cls(ws, bs)

    @property
    def layer_dims(self) -> list:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def n_in(self) -> int:
        return self.weights[0].shape[1]

    @property
    def n_out(self) -> int:
        return self.weights[-1].shape[0]

    def copy(self) -> "DenseReluNetwork":
        return DenseReluNetwork([w.copy() for w in self.weights],
                                [b.copy() for b in self.biases])

    def forward(self, x) -> np.ndarray:
        """Logits for a single input vector."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n_in,):
            raise NetworkError(f"input shape {x.shape} != ({self.n_in},)")
        return self.forward_batch(x[None, :])[0]

    def forward_batch(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_in:
            raise NetworkError(f"batch shape {X.shape} incompatible with n_in={self.n_in}")
        cur = X
        for k in range(self.n_layers):
            pre = cur @ self.weights[k].T + self.biases[k]
            cur = np.maximum(pre, 0.0) if k < self.n_layers - 1 else pre
        return cur


def _one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1 or not np.issubdtype(labels.dtype, np.integer):
        raise NetworkError("cross-entropy labels must be a 1-D integer vector")
    if np.any(labels < 0) or np.any(labels >= n_classes):
        raise NetworkError(f"label out of range [0, {n_classes})")
    out = np.zeros((labels.shape[0], n_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def loss_batch(net: DenseReluNetwork, X, Y, loss: LossKind) -> np.ndarray:
    """Per-sample losses.  MSE is the squared error summed over outputs."""
    logits = net.forward_batch(X)
    if loss is LossKind.MSE:
        Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
        if Y.shape != logits.shape:
            raise NetworkError(f"MSE labels shape {Y.shape} != logits {logits.shape}")
        return ((logits - Y) ** 2).sum(axis=1)
    if net.n_out < 2:
        raise NetworkError("cross-entropy requires n_out >= 2")
    onehot = _one_hot(Y, net.n_out)
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1)) + logits.max(axis=1)
    return logz - (logits * onehot).sum(axis=1)


def grad_batch(net: DenseReluNetwork, X, Y, loss: LossKind):
    """Exact per-sample reverse-mode gradients.

    Returns (dWs, dbs): dWs[k] has shape (batch, n_k, n_{k-1}) and dbs[k]
    has shape (batch, n_k).
    """
    X = np.asarray(X, dtype=np.float64)
    K = net.n_layers
    acts = [X]
    pres = []
    cur = X
    for k in range(K):
        pre = cur @ net.weights[k].T + net.biases[k]
        pres.append(pre)
        if k < K - 1:
            cur = np.maximum(pre, 0.0)
            acts.append(cur)
    logits = pres[-1]

    if loss is LossKind.MSE:
        Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
        if Y.shape != logits.shape:
            raise NetworkError(f"MSE labels shape {Y.shape} != logits {logits.shape}")
        delta = 2.0 * (logits - Y)
    else:
        if net.n_out < 2:
            raise NetworkError("cross-entropy requires n_out >= 2")
        delta = _softmax(logits) - _one_hot(Y, net.n_out)

    dWs = [None] * K
    dbs = [None] * K
    for k in range(K - 1, -1, -1):
        dWs[k] = np.einsum("bi,bj->bij", delta, acts[k])
        dbs[k] = delta
        if k > 0:
            delta = (delta @ net.weights[k]) * (pres[k - 1] > 0)
    return dWs, dbs


def grad(net: DenseReluNetwork, x, y, loss: LossKind):
    """Gradients for one sample: ([dW per layer], [db per layer])."""
    if loss is LossKind.MSE:
        Y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    else:
        Y = np.asarray([y])
    dWs, dbs = grad_batch(net, np.asarray(x, dtype=np.float64)[None, :], Y, loss)
    return [dw[0] for dw in dWs], [db[0] for db in dbs]


@dataclass
class TrainConfig:
    """Hyperparameters for (abstract) gradient descent.

    lr decays per batch step n as lr / (1 + lr_decay * n).  clip, when
    set, clamps every per-sample gradient entry to [-clip, clip] before
    averaging.  trainable[k]=False freezes layer k (fine-tuning).
    """

    epochs: int = 1
    batch_size: int = 32
    lr: float = 0.1
    lr_decay: float = 0.0
    clip: float | None = None
    seed: int = 0
    loss: LossKind = LossKind.CROSS_ENTROPY
    trainable: list | None = None

    def __post_init__(self):
        if self.lr <= 0:
            raise NetworkError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 1 or self.epochs < 1:
            raise NetworkError("batch_size and epochs must be >= 1")
        if self.lr_decay < 0:
            raise NetworkError(f"lr_decay must be >= 0, got {self.lr_decay}")
        if self.clip is not None and self.clip <= 0:
            raise NetworkError(f"clip must be positive when set, got {self.clip}")

    def lr_at(self, step: int) -> float:
        return self.lr / (1.0 + self.lr_decay * step)

    def trainable_mask(self, n_layers: int) -> np.ndarray:
        if self.trainable is None:
            return np.ones(n_layers, dtype=bool)
        mask = np.asarray(self.trainable, dtype=bool)
        if mask.shape != (n_layers,):
            raise NetworkError(f"trainable mask length {mask.shape} != {n_layers} layers")
        return mask


def iter_batches(n_samples: int, cfg: TrainConfig, batch_indices=None):
    """Yield per-batch index arrays.

    Default: seeded shuffle once per epoch, fixed consecutive slices,
    trailing partial batch dropped.  batch_indices, when given, is an
    explicit schedule (e.g. a fixed poisonable/clean interleave) and is
    validated to uniform batch size.
    """
    if n_samples < 1:
        raise NetworkError("empty dataset")
    if batch_indices is not None:
        for idx in batch_indices:
            idx = np.asarray(idx)
            if idx.shape[0] != cfg.batch_size:
                raise NetworkError(
                    f"explicit batch of size {idx.shape[0]} != batch_size {cfg.batch_size}")
            yield idx
        return
    if cfg.batch_size > n_samples:
        raise NetworkError(
            f"batch_size {cfg.batch_size} exceeds dataset size {n_samples}"
        )
    rng = np.random.default_rng(cfg.seed)
    per_epoch = n_samples // cfg.batch_size
    for _ in range(cfg.epochs):
        perm = rng.permutation(n_samples)
        for i in range(per_epoch):
            yield perm[i * cfg.batch_size:(i + 1) * cfg.batch_size]


def batch_update(net: DenseReluNetwork, Xb, Yb, loss: LossKind, clip: float | None):
    """Mean (optionally per-sample-clipped) gradient over one batch."""
    dWs, dbs = grad_batch(net, Xb, Yb, loss)
    b = Xb.shape[0]
    if clip is not None:
        dWs = [np.clip(dw, -clip, clip) for dw in dWs]
        dbs = [np.clip(db, -clip, clip) for db in dbs]
    return [dw.sum(axis=0) / b for dw in dWs], [db.sum(axis=0) / b for db in dbs]


def sgd_step(net: DenseReluNetwork, Xb, Yb, loss: LossKind, lr: float,
             clip: float | None = None, trainable=None) -> DenseReluNetwork:
    """One SGD update on a batch; returns a new network."""
    dW, db = batch_update(net, np.asarray(Xb, dtype=np.float64), Yb, loss, clip)
    out = net.copy()
    mask = np.ones(net.n_layers, dtype=bool) if trainable is None else trainable
    for k in range(net.n_layers):
        if mask[k]:
            out.weights[k] -= lr * dW[k]
            out.biases[k] -= lr * db[k]
    return out


def sgd_train(net: DenseReluNetwork, X, Y, cfg: TrainConfig, batch_transform=None,
              record=None, batch_indices=None):
    """Plain SGD over the dataset.

    batch_transform, when given, maps (Xb, Yb, step, current_net) ->
    (Xb, Yb) before the gradient step (used by poisoning attack
    harnesses, which re-poison every batch against the live model).
    record, when given, is called with (step, network) after every update.
    """
    X = np.asarray(X, dtype=np.float64)
    cur = net.copy()
    mask = cfg.trainable_mask(net.n_layers)
    step = 0
    for idx in iter_batches(X.shape[0], cfg, batch_indices):
        Xb, Yb = X[idx], np.asarray(Y)[idx]
        if batch_transform is not None:
            Xb, Yb = batch_transform(Xb, Yb, step, cur)
        cur = sgd_step(cur, Xb, Yb, cfg.loss, cfg.lr_at(step), cfg.clip, mask)
        if record is not None:
            record(step, cur)
        step += 1
    return cur


def predict_batch(net: DenseReluNetwork, X) -> np.ndarray:
    return np.argmax(net.forward_batch(X), axis=1)


def accuracy(net: DenseReluNetwork, X, labels) -> float:
    return float(np.mean(predict_batch(net, X) == np.asarray(labels)))


CHECKPOINT_VERSION = 1


def save_checkpoint(path, net: DenseReluNetwork, loss: LossKind, box=None) -> None:
    """Write a bit-exact .npz checkpoint; box is an optional ParamBox."""
    payload = {
        "meta": np.frombuffer(
            json.dumps({
                "version": CHECKPOINT_VERSION,
                "layer_dims": net.layer_dims,
                "loss": loss.value,
                "has_box": box is not None,
            }).encode(), dtype=np.uint8),
    }
    for k in range(net.n_layers):
        payload[f"w{k}"] = net.weights[k]
        payload[f"b{k}"] = net.biases[k]
    if box is not None:
        for k in range(net.n_layers):
            payload[f"wlo{k}"] = box.weights[k].lo
            payload[f"whi{k}"] = box.weights[k].hi
            payload[f"blo{k}"] = box.biases[k].lo
            payload[f"bhi{k}"] = box.biases[k].hi
    np.savez(path, **payload)


def load_checkpoint(path):
    """Returns (net, loss_kind, box_or_None)."""
    from .bounds.box import ParamBox

    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta["version"] != CHECKPOINT_VERSION:
            raise NetworkError(f"unsupported checkpoint version {meta['version']}")
        n_layers = len(meta["layer_dims"]) - 1
        ws = [data[f"w{k}"] for k in range(n_layers)]
        bs = [data[f"b{k}"] for k in range(n_layers)]
        net = DenseReluNetwork(ws, bs)
        box = None
        if meta["has_box"]:
            box = ParamBox.from_arrays(
                net,
                [(data[f"wlo{k}"], data[f"whi{k}"]) for k in range(n_layers)],
                [(data[f"blo{k}"], data[f"bhi{k}"]) for k in range(n_layers)],
            )
    return net, LossKind(meta["loss"]), box
