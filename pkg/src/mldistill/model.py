"""Desk-scale neural text classifiers with exact backpropagation.

A model is a feed-forward encoder over hashed TF-IDF rows plus one
two-logit head per label (index 0 = label absent, 1 = present).  The
teacher default is wider and deeper than the student default, mirroring
the capacity gap the distillation is meant to bridge.  Plain mini-batch
gradient descent keeps the gradients exactly checkable against finite
differences.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse

CHECKPOINT_FORMAT = "mldistill-model/1"

TEACHER_HIDDEN = (128, 64)
STUDENT_HIDDEN = (32,)


@dataclass(frozen=True)
class EncoderSpec:
    input_dim: int
    hidden_sizes: tuple[int, ...]
    activation: str = "tanh"  # "tanh" or "relu"
    role: str = "teacher"  # "teacher" or "student"

    def __post_init__(self) -> None:
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")
        if not self.hidden_sizes:
            raise ValueError("hidden_sizes must be non-empty")
        if self.activation not in ("tanh", "relu"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.role not in ("teacher", "student"):
            raise ValueError(f"unknown role {self.role!r}")

    @property
    def hidden_dim(self) -> int:
        return self.hidden_sizes[-1]


def default_teacher_spec(input_dim: int) -> EncoderSpec:
    return EncoderSpec(input_dim=input_dim, hidden_sizes=TEACHER_HIDDEN, activation="tanh", role="teacher")


def default_student_spec(input_dim: int) -> EncoderSpec:
    return EncoderSpec(input_dim=input_dim, hidden_sizes=STUDENT_HIDDEN, activation="tanh", role="student")


@dataclass
class ModelState:
    """Encoder layer parameters plus per-label classification heads."""

    spec: EncoderSpec
    layers: list[tuple[np.ndarray, np.ndarray]]  # (W: in x out, b: out)
    heads: list[tuple[np.ndarray, np.ndarray]]  # (W: H x 2, b: 2)

    @property
    def num_labels(self) -> int:
        return len(self.heads)

    def copy(self) -> "ModelState":
        return ModelState(
            spec=self.spec,
            layers=[(W.copy(), b.copy()) for W, b in self.layers],
            heads=[(W.copy(), b.copy()) for W, b in self.heads],
        )


@dataclass(frozen=True)
class ForwardResult:
    hidden: np.ndarray
    logits: np.ndarray


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_model(spec: EncoderSpec, num_labels: int, seed: int) -> ModelState:
    """Glorot-uniform weights, zero biases, deterministic per seed."""
    if num_labels < 1:
        raise ValueError("num_labels must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    layers = []
    fan_in = spec.input_dim
    for width in spec.hidden_sizes:
        layers.append((glorot_uniform(rng, fan_in, width), np.zeros(width)))
        fan_in = width
    heads = []
    for _ in range(num_labels):
        heads.append((glorot_uniform(rng, spec.hidden_dim, 2), np.zeros(2)))
    return ModelState(spec=spec, layers=layers, heads=heads)


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "tanh":
        return np.tanh(z)
    return np.maximum(z, 0.0)


def _activation_prime(a: np.ndarray, activation: str) -> np.ndarray:
    # Derivative expressed through the activation output itself.
    if activation == "tanh":
        return 1.0 - a * a
    return (a > 0.0).astype(a.dtype)


@dataclass
class BatchCache:
    """Forward-pass intermediates needed for backpropagation."""

    activations: list  # [input, post-activation per layer]; input may be sparse
    logits: np.ndarray  # (n, 2)
    label: int

    @property
    def hidden(self) -> np.ndarray:
        return self.activations[-1]


def forward_batch(model: ModelState, X, label: int) -> BatchCache:
    """Run the encoder and one label head over a batch of feature rows."""
    if label < 0 or label >= model.num_labels:
        raise ValueError(f"label index {label} out of range for {model.num_labels} heads")
    if X.shape[1] != model.spec.input_dim:
        raise ValueError(f"feature dim {X.shape[1]} != encoder input dim {model.spec.input_dim}")
    activations = [X]
    a = X
    for W, b in model.layers:
        z = a @ W + b
        a = _activate(np.asarray(z), model.spec.activation)
        activations.append(a)
    W_head, b_head = model.heads[label]
    logits = a @ W_head + b_head
    return BatchCache(activations=activations, logits=logits, label=label)


def _as_row(features) -> sparse.csr_matrix | np.ndarray:
    if sparse.issparse(features):
        return features.tocsr()
    arr = np.asarray(features, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    return arr


def forward(model: ModelState, features, label: int) -> ForwardResult:
    """Hidden representation and two-logit output for one document."""
    cache = forward_batch(model, _as_row(features), label)
    result = ForwardResult(hidden=cache.hidden[0], logits=cache.logits[0])
    if not np.all(np.isfinite(result.logits)):
        raise ValueError("forward produced non-finite logits")
    return result


def softmax_t(logits, temperature: float) -> np.ndarray:
    """Temperature-scaled softmax, computed in the max-shifted stable form."""
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    z = np.asarray(logits, dtype=np.float64) / temperature
    m = z.max(axis=-1, keepdims=True)
    e = np.exp(z - m)
    return e / e.sum(axis=-1, keepdims=True)


def predict_proba(model: ModelState, features, label: int) -> float:
    """Positive-class probability at temperature 1."""
    result = forward(model, features, label)
    return float(softmax_t(result.logits, 1.0)[1])


def predict_proba_batch(model: ModelState, X, label: int) -> np.ndarray:
    cache = forward_batch(model, X, label)
    return softmax_t(cache.logits, 1.0)[:, 1]


@dataclass
class RowSliceGrad:
    """Gradient of a weight matrix that is nonzero only on some rows."""

    rows: np.ndarray  # sorted unique row indices
    block: np.ndarray  # (len(rows), out_dim)
    shape: tuple[int, int]

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.shape)
        dense[self.rows] = self.block
        return dense


@dataclass
class Gradients:
    """Gradients matching the encoder layers plus one label head."""

    layers: list[tuple[np.ndarray | RowSliceGrad, np.ndarray]]
    head_label: int
    head: tuple[np.ndarray, np.ndarray]


def _first_layer_grad(X, dz: np.ndarray, shape: tuple[int, int]) -> np.ndarray | RowSliceGrad:
    if not sparse.issparse(X):
        return np.asarray(X).T @ dz
    X = X.tocsr()
    if X.nnz == 0:
        return RowSliceGrad(rows=np.empty(0, dtype=np.int64), block=np.zeros((0, shape[1])), shape=shape)
    active = np.unique(X.indices)
    cols = np.searchsorted(active, X.indices)
    rows = np.repeat(np.arange(X.shape[0]), np.diff(X.indptr))
    dense_slice = np.zeros((X.shape[0], active.size))
    dense_slice[rows, cols] = X.data
    return RowSliceGrad(rows=active.astype(np.int64), block=dense_slice.T @ dz, shape=shape)


def backward_batch(
    model: ModelState,
    cache: BatchCache,
    dlogits: np.ndarray,
    dhidden_extra: np.ndarray | None = None,
) -> Gradients:
    """Backpropagate a logit-space gradient (plus an optional gradient
    arriving directly at the last hidden layer) to all parameters."""
    W_head, _ = model.heads[cache.label]
    hidden = cache.activations[-1]
    d_head_W = hidden.T @ dlogits
    d_head_b = dlogits.sum(axis=0)
    da = dlogits @ W_head.T
    if dhidden_extra is not None:
        da = da + dhidden_extra

    layer_grads: list[tuple[np.ndarray | RowSliceGrad, np.ndarray]] = [None] * len(model.layers)  # type: ignore[list-item]
    for idx in range(len(model.layers) - 1, -1, -1):
        a_out = cache.activations[idx + 1]
        a_in = cache.activations[idx]
        dz = da * _activation_prime(a_out, model.spec.activation)
        db = dz.sum(axis=0)
        W, _ = model.layers[idx]
        if idx == 0:
            dW = _first_layer_grad(a_in, dz, W.shape)
        else:
            dW = a_in.T @ dz
        layer_grads[idx] = (dW, db)
        if idx > 0:
            da = dz @ W.T
    return Gradients(layers=layer_grads, head_label=cache.label, head=(d_head_W, d_head_b))


def _check_finite(grad, where: str) -> None:
    values = grad.block if isinstance(grad, RowSliceGrad) else grad
    if not np.all(np.isfinite(values)):
        raise ValueError(f"non-finite gradient in {where}")


def _check_updated(values: np.ndarray, where: str) -> None:
    # Parameters must stay finite after every step.
    if not np.all(np.isfinite(values)):
        raise ValueError(f"non-finite parameters in {where} after update")


def sgd_step(model: ModelState, grads: Gradients, lr: float) -> ModelState:
    """Apply p <- p - lr * g in place and return the model."""
    if lr < 0:
        raise ValueError("learning rate must be non-negative")
    for idx, ((dW, db), (W, b)) in enumerate(zip(grads.layers, model.layers)):
        _check_finite(dW, f"encoder layer {idx} weights")
        _check_finite(db, f"encoder layer {idx} bias")
        if isinstance(dW, RowSliceGrad):
            W[dW.rows] -= lr * dW.block
            _check_updated(W[dW.rows], f"encoder layer {idx}")
        else:
            W -= lr * dW
            _check_updated(W, f"encoder layer {idx}")
        b -= lr * db
        _check_updated(b, f"encoder layer {idx} bias")
    dW, db = grads.head
    _check_finite(dW, f"head {grads.head_label} weights")
    _check_finite(db, f"head {grads.head_label} bias")
    W, b = model.heads[grads.head_label]
    W -= lr * dW
    b -= lr * db
    _check_updated(W, f"head {grads.head_label}")
    _check_updated(b, f"head {grads.head_label} bias")
    return model


def save_model(model: ModelState, path: str | Path) -> None:
    """Checkpoint the spec and all parameter arrays (bit-exact round trip)."""
    meta = {
        "format": CHECKPOINT_FORMAT,
        "spec": {
            "input_dim": model.spec.input_dim,
            "hidden_sizes": list(model.spec.hidden_sizes),
            "activation": model.spec.activation,
            "role": model.spec.role,
        },
        "num_labels": model.num_labels,
    }
    arrays = {"meta": np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)}
    for i, (W, b) in enumerate(model.layers):
        arrays[f"layer_{i}_W"] = W
        arrays[f"layer_{i}_b"] = b
    for i, (W, b) in enumerate(model.heads):
        arrays[f"head_{i}_W"] = W
        arrays[f"head_{i}_b"] = b
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_model(path: str | Path) -> ModelState:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"unsupported checkpoint format {meta.get('format')!r}")
        spec = EncoderSpec(
            input_dim=meta["spec"]["input_dim"],
            hidden_sizes=tuple(meta["spec"]["hidden_sizes"]),
            activation=meta["spec"]["activation"],
            role=meta["spec"]["role"],
        )
        layers = [(data[f"layer_{i}_W"].copy(), data[f"layer_{i}_b"].copy()) for i in range(len(spec.hidden_sizes))]
        heads = [(data[f"head_{i}_W"].copy(), data[f"head_{i}_b"].copy()) for i in range(meta["num_labels"])]
    return ModelState(spec=spec, layers=layers, heads=heads)
