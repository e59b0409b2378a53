"""Two-layer perceptron with hand-written backprop, Adam, and a binary checkpoint format.

scores = tanh(((x - offset) / scale) @ W1 + b1) @ W2 + b2

``offset``/``scale`` standardize the inputs. They are fitted once from training
features and are not trained. The loss is softmax cross-entropy averaged over
points whose ground truth is not unlabelled, optionally weighted per class.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from synthseg.io import atomic_write
from synthseg.model.features import N_FEATURES
from synthseg.sampler import check_modality
from synthseg.taxonomy import UNLABELLED, Taxonomy, get_taxonomy

PARAM_NAMES = ("W1", "b1", "W2", "b2")
CHECKPOINT_MAGIC = b"SSEGMLP\x00"
CHECKPOINT_VERSION = 1


class ModelError(ValueError):
    pass


@dataclass(eq=False)
class MlpClassifier:
    taxonomy: Taxonomy
    params: dict
    offset: np.ndarray
    scale: np.ndarray
    modality: str = "RGB-D"
    radius: float = 0.8

    def __post_init__(self):
        self.modality = check_modality(self.modality)
        d, h = self.params["W1"].shape
        c = self.params["W2"].shape[1]
        if self.params["W2"].shape[0] != h or self.params["b1"].shape != (h,) \
                or self.params["b2"].shape != (c,):
            raise ModelError("inconsistent layer shapes")
        if c != len(self.taxonomy):
            raise ModelError(f"output size {c} != taxonomy size {len(self.taxonomy)}")
        if self.offset.shape != (d,) or self.scale.shape != (d,) or np.any(self.scale <= 0):
            raise ModelError("input standardization must be (d,) with positive scale")
        if not all(np.all(np.isfinite(p)) for p in self.params.values()):
            raise ModelError("parameters must be finite")

    @classmethod
    def create(cls, taxonomy: Taxonomy, hidden: int = 64, n_features: int = N_FEATURES,
               seed: int = 0, modality: str = "RGB-D", radius: float = 0.8) -> "MlpClassifier":
        """Glorot-uniform weights, zero biases, identity standardization."""
        rng = np.random.default_rng(seed)
        c = len(taxonomy)
        a1 = np.sqrt(6.0 / (n_features + hidden))
        a2 = np.sqrt(6.0 / (hidden + c))
        params = {
            "W1": rng.uniform(-a1, a1, (n_features, hidden)),
            "b1": np.zeros(hidden),
            "W2": rng.uniform(-a2, a2, (hidden, c)),
            "b2": np.zeros(c),
        }
        return cls(taxonomy, params, np.zeros(n_features), np.ones(n_features), modality, radius)

    @property
    def dims(self) -> tuple[int, int, int]:
        d, h = self.params["W1"].shape
        return d, h, self.params["W2"].shape[1]

    def fit_standardization(self, features: np.ndarray) -> None:
        self.offset = features.mean(axis=0)
        sd = features.std(axis=0)
        self.scale = np.where(sd > 1e-6, sd, 1.0)

    def copy(self) -> "MlpClassifier":
        return MlpClassifier(self.taxonomy, {k: v.copy() for k, v in self.params.items()},
                             self.offset.copy(), self.scale.copy(), self.modality, self.radius)


def _hidden(model: MlpClassifier, features: np.ndarray):
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.dims[0]:
        raise ModelError(f"expected (N, {model.dims[0]}) features, got {x.shape}")
    x = (x - model.offset) / model.scale
    h = np.tanh(x @ model.params["W1"] + model.params["b1"])
    return x, h


def forward(model: MlpClassifier, features: np.ndarray) -> np.ndarray:
    """Class scores (N, n_classes)."""
    _, h = _hidden(model, features)
    return h @ model.params["W2"] + model.params["b2"]


def softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grad(model: MlpClassifier, features: np.ndarray, labels: np.ndarray,
                  class_weights: Optional[np.ndarray] = None) -> tuple[float, dict]:
    """Weighted mean cross-entropy over labeled points and its exact gradients."""
    labels = np.asarray(labels).reshape(-1).astype(np.int64)
    keep = labels != UNLABELLED
    if not np.any(keep):
        raise ModelError("batch has no labeled points")
    x, h = _hidden(model, np.asarray(features)[keep])
    y = labels[keep]
    scores = h @ model.params["W2"] + model.params["b2"]
    z = scores - scores.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    nll = logsum - z[np.arange(len(y)), y]

    w = np.ones(len(y)) if class_weights is None else np.asarray(class_weights, float)[y]
    total = w.sum()
    if not total > 0:
        raise ModelError("class weights give the batch zero total weight")
    loss = float(np.dot(w, nll) / total)

    d_scores = np.exp(z - logsum[:, None])
    d_scores[np.arange(len(y)), y] -= 1.0
    d_scores *= (w / total)[:, None]
    grads = {
        "W2": h.T @ d_scores,
        "b2": d_scores.sum(axis=0),
    }
    d_pre = (d_scores @ model.params["W2"].T) * (1.0 - h * h)
    grads["W1"] = x.T @ d_pre
    grads["b1"] = d_pre.sum(axis=0)
    return loss, grads


def predict_labels(model: MlpClassifier, features: np.ndarray) -> np.ndarray:
    """Argmax class per row; ties go to the lowest class id."""
    return np.argmax(forward(model, features), axis=1).astype(np.uint16)


# ------------------------------------------------------------------ Adam

@dataclass
class AdamState:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    lr_decay: float = 0.7
    decay_interval: int = 10
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.learning_rate > 0 or not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1:
            raise ModelError("invalid Adam hyper-parameters")
        if self.decay_interval < 1 or not 0 < self.lr_decay <= 1:
            raise ModelError("decay_interval must be >= 1 and lr_decay in (0, 1]")

    def end_epoch(self, epoch: int) -> None:
        """Call after finishing 1-based ``epoch``; decays lr on interval boundaries."""
        if epoch > 0 and epoch % self.decay_interval == 0:
            self.learning_rate *= self.lr_decay


def adam_step(params: dict, grads: dict, state: AdamState) -> dict:
    """One bias-corrected Adam update; returns new parameter arrays."""
    state.step += 1
    t = state.step
    out = {}
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ModelError(f"gradient for {k} has shape {g.shape}, expected {p.shape}")
        m = state.m.get(k, np.zeros_like(p))
        v = state.v.get(k, np.zeros_like(p))
        m = state.beta1 * m + (1 - state.beta1) * g
        v = state.beta2 * v + (1 - state.beta2) * g * g
        state.m[k], state.v[k] = m, v
        m_hat = m / (1 - state.beta1 ** t)
        v_hat = v / (1 - state.beta2 ** t)
        out[k] = p - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return out


# ------------------------------------------------------------ checkpoint

_HEAD = struct.Struct("<8sIIIIBd")


def encode_checkpoint(model: MlpClassifier) -> bytes:
    d, h, c = model.dims
    name = model.taxonomy.name.encode("utf-8")
    parts = [_HEAD.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, d, h, c,
                        0 if model.modality == "RGB-D" else 1, model.radius),
             struct.pack("<H", len(name)), name]
    for arr in (model.offset, model.scale, *(model.params[k] for k in PARAM_NAMES)):
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(parts)


def decode_checkpoint(data: bytes, taxonomy: Optional[Taxonomy] = None) -> MlpClassifier:
    if len(data) < _HEAD.size + 2 or data[:8] != CHECKPOINT_MAGIC:
        raise ModelError("not a model checkpoint (bad magic)")
    magic, version, d, h, c, mod, radius = _HEAD.unpack_from(data)
    if version != CHECKPOINT_VERSION:
        raise ModelError(f"unsupported checkpoint version {version}")
    pos = _HEAD.size
    (nlen,) = struct.unpack_from("<H", data, pos)
    pos += 2
    name = data[pos:pos + nlen].decode("utf-8")
    pos += nlen
    shapes = [(d,), (d,), (d, h), (h,), (h, c), (c,)]
    need = pos + 8 * sum(int(np.prod(s)) for s in shapes)
    if len(data) != need:
        raise ModelError(f"checkpoint size {len(data)} != expected {need}")
    arrays = []
    for s in shapes:
        n = int(np.prod(s))
        arrays.append(np.frombuffer(data, "<f8", n, pos).reshape(s).astype(np.float64))
        pos += 8 * n
    tax = taxonomy if taxonomy is not None else get_taxonomy(name)
    params = dict(zip(PARAM_NAMES, arrays[2:]))
    return MlpClassifier(tax, params, arrays[0], arrays[1], "RGB-D" if mod == 0 else "D", radius)


def save_checkpoint(model: MlpClassifier, path) -> None:
    atomic_write(path, encode_checkpoint(model))


def load_checkpoint(path, taxonomy: Optional[Taxonomy] = None) -> MlpClassifier:
    return decode_checkpoint(Path(path).read_bytes(), taxonomy)
