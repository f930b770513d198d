"""Plain federated averaging: model, local training, weight averaging.

The model is a two-layer dense network (ReLU hidden layer, softmax output)
over a synthetic Gaussian-mixture classification task. With the default
dimensions (56 features, 8 hidden units, 4 classes) the flattened weight
vector has exactly 492 entries.

Training is deterministic given the config seed: batch order, and nothing
else, consumes randomness inside local_update.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, TrainingDivergedError

DEFAULT_FEATURE_DIM = 56
DEFAULT_HIDDEN = 8
DEFAULT_CLASSES = 4

_SNAPSHOT_MAGIC = b"MKDS"


@dataclass(frozen=True)
class ModelWeights:
    """Flat parameter vector plus the layer shapes needed to unflatten it."""

    values: np.ndarray
    layout: tuple

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64, copy=True)
        expected = sum(int(np.prod(shape)) for shape in self.layout)
        if vals.shape != (expected,):
            raise ConfigurationError(f"layout wants {expected} weights, got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ConfigurationError("weights must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "layout", tuple(tuple(s) for s in self.layout))

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 0.01
    batch_size: int = 32
    local_epochs: int = 20
    optimizer: str = "sgd"
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigurationError("learning rate must be positive")
        if self.local_epochs < 1:
            raise ConfigurationError("need at least one local epoch")
        if self.batch_size < 1:
            raise ConfigurationError("batch size must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class LocalDataset:
    """One device's samples; the trailing global_count rows are the shared
    global slice every device receives."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    global_count: int = 0

    def __post_init__(self):
        if len(self.features) != len(self.labels):
            raise ConfigurationError("features and labels disagree in length")
        if len(self.features) == 0:
            raise ConfigurationError("dataset is empty")

    def __len__(self):
        return len(self.features)


class DenseNet:
    """Two-layer perceptron with ReLU hidden activations and softmax output."""

    def __init__(self, input_dim=DEFAULT_FEATURE_DIM, hidden=DEFAULT_HIDDEN, num_classes=DEFAULT_CLASSES):
        self.input_dim = input_dim
        self.hidden = hidden
        self.num_classes = num_classes
        self.layout = ((input_dim, hidden), (hidden,), (hidden, num_classes), (num_classes,))

    @property
    def num_weights(self):
        return sum(int(np.prod(s)) for s in self.layout)

    def init_weights(self, rng: np.random.Generator) -> ModelWeights:
        w1 = rng.normal(0, 1 / np.sqrt(self.input_dim), self.layout[0])
        w2 = rng.normal(0, 1 / np.sqrt(self.hidden), self.layout[2])
        values = np.concatenate(
            [w1.ravel(), np.zeros(self.hidden), w2.ravel(), np.zeros(self.num_classes)]
        )
        return ModelWeights(values, self.layout)

    def _unflatten(self, values):
        parts = []
        offset = 0
        for shape in self.layout:
            size = int(np.prod(shape))
            parts.append(values[offset : offset + size].reshape(shape))
            offset += size
        return parts

    def _forward(self, values, X):
        w1, b1, w2, b2 = self._unflatten(values)
        z1 = X @ w1 + b1
        a1 = np.maximum(z1, 0.0)
        logits = a1 @ w2 + b2
        return z1, a1, logits

    def loss_and_grad(self, values, X, y):
        """Mean cross-entropy and its gradient as one flat vector."""
        z1, a1, logits = self._forward(values, X)
        shifted = logits - logits.max(axis=1, keepdims=True)
        exp = np.exp(shifted)
        probs = exp / exp.sum(axis=1, keepdims=True)
        batch = len(X)
        eps_free = probs[np.arange(batch), y]
        with np.errstate(divide="ignore"):
            loss = -np.mean(np.log(eps_free))
        d_logits = probs
        d_logits[np.arange(batch), y] -= 1.0
        d_logits /= batch
        w1, b1, w2, b2 = self._unflatten(values)
        d_w2 = a1.T @ d_logits
        d_b2 = d_logits.sum(axis=0)
        d_a1 = d_logits @ w2.T
        d_z1 = d_a1 * (z1 > 0)
        d_w1 = X.T @ d_z1
        d_b1 = d_z1.sum(axis=0)
        grad = np.concatenate([d_w1.ravel(), d_b1, d_w2.ravel(), d_b2])
        return float(loss), grad

    def predict(self, values, X):
        return self._forward(values, X)[2].argmax(axis=1)


def local_update(net: DenseNet, weights: ModelWeights, data: LocalDataset, cfg: TrainingConfig) -> ModelWeights:
    """Minibatch training for cfg.local_epochs epochs; returns new weights."""
    if weights.layout != net.layout:
        raise ConfigurationError("weights do not match the model layout")
    rng = np.random.default_rng(cfg.seed)
    values = weights.values.copy()
    X = np.asarray(data.features, dtype=np.float64)
    y = np.asarray(data.labels, dtype=np.int64)
    m = np.zeros_like(values)
    v = np.zeros_like(values)
    step = 0
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    for _ in range(cfg.local_epochs):
        order = rng.permutation(len(X))
        for start in range(0, len(X), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grad = net.loss_and_grad(values, X[idx], y[idx])
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise TrainingDivergedError(f"non-finite loss after {step} steps")
            if cfg.optimizer == "adam":
                step += 1
                m = beta1 * m + (1 - beta1) * grad
                v = beta2 * v + (1 - beta2) * grad * grad
                m_hat = m / (1 - beta1**step)
                v_hat = v / (1 - beta2**step)
                values = values - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + eps)
            else:
                values = values - cfg.learning_rate * grad
    if not np.all(np.isfinite(values)):
        raise TrainingDivergedError("weights diverged")
    return ModelWeights(values, weights.layout)


def average(ws) -> ModelWeights:
    """Elementwise mean of weight vectors sharing one layout."""
    ws = list(ws)
    if not ws:
        raise ConfigurationError("nothing to average")
    layout = ws[0].layout
    if any(w.layout != layout for w in ws):
        raise ConfigurationError("weight layouts differ")
    stacked = np.stack([w.values for w in ws])
    return ModelWeights(stacked.mean(axis=0), layout)


def evaluate(net: DenseNet, weights: ModelWeights, data: LocalDataset) -> float:
    """Fraction of correct argmax predictions."""
    if len(data) == 0:
        raise ConfigurationError("empty evaluation set")
    predictions = net.predict(weights.values, np.asarray(data.features, dtype=np.float64))
    return float(np.mean(predictions == np.asarray(data.labels)))


# --- synthetic task ---------------------------------------------------------


def _label_counts(total, num_classes, proportions):
    counts = np.floor(proportions * total).astype(int)
    remainder = total - counts.sum()
    fractional = proportions * total - counts
    for cls in np.argsort(-fractional)[:remainder]:
        counts[cls] += 1
    return counts


def _draw(rng, means, counts, feature_dim):
    feats = []
    labels = []
    for cls, count in enumerate(counts):
        if count == 0:
            continue
        feats.append(means[cls] + rng.normal(0, 1.0, (count, feature_dim)))
        labels.append(np.full(count, cls, dtype=np.int64))
    X = np.concatenate(feats).astype(np.float32)
    y = np.concatenate(labels)
    order = rng.permutation(len(y))
    return X[order], y[order]


def synth_dataset(
    num_devices,
    samples_per_device,
    num_classes=DEFAULT_CLASSES,
    feature_dim=DEFAULT_FEATURE_DIM,
    skew=0.0,
    seed=0,
    global_fraction=0.05,
    test_samples=2000,
    class_separation=0.45,
):
    """Gaussian-mixture classification split across devices.

    skew=0 gives every device a uniform label mix; skew=1 concentrates each
    device on two classes. A shared slice of global_fraction * samples is
    appended to every device so non-iid splits still co-train.
    """
    if num_devices < 1 or samples_per_device < num_classes or num_classes < 2:
        raise ConfigurationError("invalid dataset sizes")
    if not 0 <= skew <= 1:
        raise ConfigurationError("skew must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    # random directions, each scaled to norm class_separation * sqrt(dim)
    means = rng.normal(0, 1.0, (num_classes, feature_dim))
    means *= class_separation * np.sqrt(feature_dim) / np.linalg.norm(means, axis=1, keepdims=True)

    global_count = int(round(global_fraction * samples_per_device))
    if global_count:
        g_counts = _label_counts(global_count, num_classes, np.full(num_classes, 1 / num_classes))
        g_X, g_y = _draw(rng, means, g_counts, feature_dim)

    devices = []
    uniform = np.full(num_classes, 1 / num_classes)
    for dev in range(num_devices):
        dominant = np.zeros(num_classes)
        dominant[(2 * dev) % num_classes] = 0.5
        dominant[(2 * dev + 1) % num_classes] = 0.5
        proportions = (1 - skew) * uniform + skew * dominant
        counts = _label_counts(samples_per_device, num_classes, proportions)
        X, y = _draw(rng, means, counts, feature_dim)
        if global_count:
            X = np.concatenate([X, g_X])
            y = np.concatenate([y, g_y])
        devices.append(LocalDataset(X, y, num_classes, global_count))

    t_counts = _label_counts(test_samples, num_classes, uniform)
    t_X, t_y = _draw(rng, means, t_counts, feature_dim)
    test = LocalDataset(t_X, t_y, num_classes, 0)
    return devices, test


# --- dataset snapshots -------------------------------------------------------


def save_dataset(data: LocalDataset, path):
    """Self-describing binary: dims header, f32 features, u16 labels."""
    if data.num_classes > 0xFFFF or len(data) > 0xFFFFFFFF:
        raise ConfigurationError("dataset too large for snapshot format")
    header = _SNAPSHOT_MAGIC + struct.pack(
        "<BxxxIIII",
        1,
        len(data),
        data.features.shape[1],
        data.num_classes,
        data.global_count,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(data.features, dtype="<f4").tobytes())
        fh.write(np.asarray(data.labels, dtype="<u2").tobytes())


def load_dataset(path) -> LocalDataset:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _SNAPSHOT_MAGIC:
        raise ConfigurationError("not a dataset snapshot")
    version, rows, dim, num_classes, global_count = struct.unpack_from("<BxxxIIII", blob, 4)
    if version != 1:
        raise ConfigurationError(f"unsupported snapshot version {version}")
    offset = 4 + struct.calcsize("<BxxxIIII")
    feats = np.frombuffer(blob, dtype="<f4", count=rows * dim, offset=offset).reshape(rows, dim)
    offset += rows * dim * 4
    labels = np.frombuffer(blob, dtype="<u2", count=rows, offset=offset).astype(np.int64)
    return LocalDataset(feats.copy(), labels, num_classes, global_count)
