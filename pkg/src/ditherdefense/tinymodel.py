"""A small fully-connected classifier with hand-written gradients.

The network is flatten -> dense(hidden) -> relu -> dense(classes). The relu
activations serve as the embedding for retrieval. Gradients are derived by
hand so the input gradient is exact (up to float round-off), which the
attack code depends on. relu is treated as having derivative 0 at 0.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

__all__ = [
    "TinyModel",
    "CrossEntropyLoss",
    "NegCosineLoss",
    "MarginLoss",
    "LossFn",
    "DegenerateEmbeddingError",
    "init_model",
    "forward",
    "loss_and_input_gradient",
    "train",
    "accuracy",
    "save_model",
    "load_model",
    "model_hash",
    "loss_from_config",
]


class DegenerateEmbeddingError(ValueError):
    """Cosine similarity is undefined for a zero-norm embedding."""


@dataclass
class TinyModel:
    """Weights plus the input geometry they were built for.

    w1 has shape (hidden, height * width * channels), w2 has shape
    (classes, hidden); biases match their layer widths.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    height: int
    width: int
    channels: int

    def __post_init__(self):
        in_dim = self.height * self.width * self.channels
        if self.height < 1 or self.width < 1 or self.channels not in (1, 3):
            raise ValueError(
                f"bad input geometry {self.height}x{self.width}x{self.channels}"
            )
        if self.w1.shape != (self.b1.shape[0], in_dim):
            raise ValueError(
                f"w1 shape {self.w1.shape} does not match (hidden, {in_dim})"
            )
        if self.w2.shape != (self.b2.shape[0], self.w1.shape[0]):
            raise ValueError(
                f"w2 shape {self.w2.shape} does not match (classes, {self.w1.shape[0]})"
            )
        for name in ("w1", "b1", "w2", "b2"):
            arr = getattr(self, name)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
            setattr(self, name, np.ascontiguousarray(arr, dtype=np.float64))

    @property
    def in_dim(self) -> int:
        return self.height * self.width * self.channels

    @property
    def hidden_size(self) -> int:
        return self.w1.shape[0]

    @property
    def class_count(self) -> int:
        return self.w2.shape[0]

    def copy(self) -> "TinyModel":
        return TinyModel(
            w1=self.w1.copy(), b1=self.b1.copy(),
            w2=self.w2.copy(), b2=self.b2.copy(),
            height=self.height, width=self.width, channels=self.channels,
        )


def init_model(
    height: int = 32,
    width: int = 32,
    channels: int = 3,
    hidden: int = 128,
    classes: int = 4,
    seed: int = 0,
) -> TinyModel:
    """He-scaled random weights, zero biases, deterministic in seed."""
    if hidden < 1 or classes < 2:
        raise ValueError(f"need hidden >= 1 and classes >= 2, got {hidden}, {classes}")
    rng = np.random.default_rng(seed)
    in_dim = height * width * channels
    w1 = rng.normal(0.0, np.sqrt(2.0 / in_dim), size=(hidden, in_dim))
    w2 = rng.normal(0.0, np.sqrt(2.0 / hidden), size=(classes, hidden))
    return TinyModel(
        w1=w1, b1=np.zeros(hidden), w2=w2, b2=np.zeros(classes),
        height=height, width=width, channels=channels,
    )


def _check_input(model: TinyModel, img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    expect = (model.height, model.width, model.channels)
    if img.shape != expect:
        raise ValueError(f"model expects input shape {expect}, got {img.shape}")
    return img


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=-1, keepdims=True)


def forward(model: TinyModel, img: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Run the network on one image.

    Returns (embedding, logits, probs): the relu activations of the hidden
    layer, the class scores, and their softmax.
    """
    x = _check_input(model, img).ravel()
    z1 = model.w1 @ x + model.b1
    emb = np.maximum(z1, 0.0)
    logits = model.w2 @ emb + model.b2
    return emb, logits, _softmax(logits)


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CrossEntropyLoss:
    """Negative log-likelihood of the target class under softmax."""

    target: int


@dataclass(frozen=True, eq=False)
class NegCosineLoss:
    """Negative cosine similarity between the embedding and a reference.

    Minimizing drives the embedding toward the reference direction;
    attacks maximize it to push the embedding away.
    """

    reference: np.ndarray


@dataclass(frozen=True)
class MarginLoss:
    """Highest non-target probability minus the target probability.

    Positive iff the model misclassifies; useful as a success-aligned
    attack objective.
    """

    target: int


LossFn = CrossEntropyLoss | NegCosineLoss | MarginLoss


def loss_from_config(config: dict) -> LossFn:
    """Build a loss from {"kind": ..., ...} as used in sweep configs."""
    kind = config.get("kind")
    if kind == "cross_entropy":
        return CrossEntropyLoss(target=int(config["target"]))
    if kind == "margin":
        return MarginLoss(target=int(config["target"]))
    if kind == "neg_cosine":
        return NegCosineLoss(reference=np.asarray(config["reference"], dtype=np.float64))
    raise ValueError(f"unknown loss kind {kind!r}")


def _check_target(model: TinyModel, target: int) -> int:
    if not 0 <= target < model.class_count:
        raise ValueError(
            f"target {target} out of range for {model.class_count} classes"
        )
    return int(target)


def loss_and_input_gradient(
    model: TinyModel, img: np.ndarray, loss: LossFn
) -> tuple[float, np.ndarray]:
    """Loss value and its exact gradient with respect to the input image.

    The gradient has the same shape as img. For NegCosineLoss a zero-norm
    embedding (or reference) raises DegenerateEmbeddingError since the
    cosine is undefined there.
    """
    x = _check_input(model, img).ravel()
    z1 = model.w1 @ x + model.b1
    emb = np.maximum(z1, 0.0)
    logits = model.w2 @ emb + model.b2

    d_emb = np.zeros_like(emb)
    if isinstance(loss, CrossEntropyLoss):
        t = _check_target(model, loss.target)
        shifted = logits - logits.max()
        logsumexp = np.log(np.exp(shifted).sum()) + logits.max()
        value = float(logsumexp - logits[t])
        d_logits = _softmax(logits)
        d_logits[t] -= 1.0
    elif isinstance(loss, MarginLoss):
        t = _check_target(model, loss.target)
        probs = _softmax(logits)
        others = np.delete(np.arange(model.class_count), t)
        m = others[int(np.argmax(probs[others]))]
        value = float(probs[m] - probs[t])
        # d(p_i)/d(logit_j) = p_i (delta_ij - p_j), applied to p_m - p_t.
        d_logits = (probs[t] - probs[m]) * probs
        d_logits[m] += probs[m]
        d_logits[t] -= probs[t]
    elif isinstance(loss, NegCosineLoss):
        ref = np.asarray(loss.reference, dtype=np.float64).ravel()
        if ref.shape != emb.shape:
            raise ValueError(
                f"reference embedding has size {ref.shape[0]}, expected {emb.shape[0]}"
            )
        e_norm = float(np.linalg.norm(emb))
        r_norm = float(np.linalg.norm(ref))
        if e_norm == 0.0 or r_norm == 0.0:
            raise DegenerateEmbeddingError(
                "cosine similarity is undefined for a zero-norm embedding"
            )
        e_hat = emb / e_norm
        r_hat = ref / r_norm
        cos = float(e_hat @ r_hat)
        value = -cos
        d_logits = np.zeros_like(logits)
        d_emb = -(r_hat - cos * e_hat) / e_norm
    else:
        raise ValueError(f"unsupported loss {loss!r}")

    d_emb = d_emb + model.w2.T @ d_logits
    d_z1 = d_emb * (z1 > 0.0)
    d_x = model.w1.T @ d_z1
    return value, d_x.reshape(img.shape)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def _dataset_arrays(dataset) -> tuple[np.ndarray, np.ndarray]:
    if hasattr(dataset, "images") and hasattr(dataset, "labels"):
        images, labels = dataset.images, dataset.labels
    else:
        images, labels = dataset
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if images.ndim != 4:
        raise ValueError(f"images must have shape (n, h, w, c), got {images.shape}")
    if labels.shape != (images.shape[0],):
        raise ValueError(
            f"labels shape {labels.shape} does not match {images.shape[0]} images"
        )
    if images.shape[0] == 0:
        raise ValueError("cannot train on an empty dataset")
    return images, labels


def train(
    model: TinyModel,
    dataset,
    epochs: int = 200,
    learning_rate: float = 0.01,
    momentum: float = 0.9,
    seed: int = 0,
    batch_size: int = 40,
) -> TinyModel:
    """Minibatch SGD with momentum on the mean cross-entropy.

    dataset is either an object with .images/.labels or an (images, labels)
    pair. The input model supplies the initial weights and is not mutated.
    Shuffling comes from the seed alone, so identical arguments give
    bit-identical weights.
    """
    images, labels = _dataset_arrays(dataset)
    n = images.shape[0]
    expect = (model.height, model.width, model.channels)
    if images.shape[1:] != expect:
        raise ValueError(f"model expects images of shape {expect}, got {images.shape[1:]}")
    if labels.min() < 0 or labels.max() >= model.class_count:
        raise ValueError(
            f"labels must lie in [0, {model.class_count - 1}], "
            f"got range [{labels.min()}, {labels.max()}]"
        )
    if epochs < 0 or batch_size < 1:
        raise ValueError(f"need epochs >= 0 and batch_size >= 1, got {epochs}, {batch_size}")

    out = model.copy()
    x_all = images.reshape(n, -1)
    onehot = np.zeros((n, out.class_count))
    onehot[np.arange(n), labels] = 1.0
    rng = np.random.default_rng(seed)
    vel = {k: np.zeros_like(getattr(out, k)) for k in ("w1", "b1", "w2", "b2")}

    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            x = x_all[idx]
            z1 = x @ out.w1.T + out.b1
            emb = np.maximum(z1, 0.0)
            logits = emb @ out.w2.T + out.b2
            probs = _softmax(logits)
            d_logits = (probs - onehot[idx]) / idx.shape[0]
            grads = {
                "w2": d_logits.T @ emb,
                "b2": d_logits.sum(axis=0),
            }
            d_emb = d_logits @ out.w2
            d_z1 = d_emb * (z1 > 0.0)
            grads["w1"] = d_z1.T @ x
            grads["b1"] = d_z1.sum(axis=0)
            for k, g in grads.items():
                vel[k] = momentum * vel[k] - learning_rate * g
                getattr(out, k)[...] += vel[k]
    return out


def accuracy(model: TinyModel, dataset) -> float:
    """Fraction of dataset images whose argmax logit matches the label."""
    images, labels = _dataset_arrays(dataset)
    x = images.reshape(images.shape[0], -1)
    z1 = x @ model.w1.T + model.b1
    logits = np.maximum(z1, 0.0) @ model.w2.T + model.b2
    return float(np.mean(np.argmax(logits, axis=1) == labels))


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

_FORMAT_VERSION = 1


def save_model(model: TinyModel, path: str) -> None:
    """Write weights and geometry to an .npz file."""
    np.savez(
        path,
        format_version=np.int64(_FORMAT_VERSION),
        w1=model.w1, b1=model.b1, w2=model.w2, b2=model.b2,
        geometry=np.array([model.height, model.width, model.channels], dtype=np.int64),
    )


def load_model(path: str) -> TinyModel:
    """Load a model written by save_model."""
    with np.load(path) as data:
        try:
            version = int(data["format_version"])
            if version != _FORMAT_VERSION:
                raise ValueError(f"unsupported model format version {version}")
            h, w, c = (int(v) for v in data["geometry"])
            return TinyModel(
                w1=data["w1"], b1=data["b1"], w2=data["w2"], b2=data["b2"],
                height=h, width=w, channels=c,
            )
        except KeyError as exc:
            raise ValueError(f"{path} is not a model checkpoint: missing {exc}") from exc


def model_hash(model: TinyModel) -> str:
    """sha256 over the geometry and raw weight bytes; stable across processes."""
    h = hashlib.sha256()
    h.update(
        np.array(
            [model.height, model.width, model.channels,
             model.hidden_size, model.class_count],
            dtype=np.int64,
        ).tobytes()
    )
    for name in ("w1", "b1", "w2", "b2"):
        h.update(np.ascontiguousarray(getattr(model, name)).tobytes())
    return h.hexdigest()
