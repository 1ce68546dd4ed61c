"""Small dense network with hand-derived reverse-mode gradients.

The network is an extractor ``phi`` (input -> embedding) followed by a linear
softmax head (embedding -> C logits). Parameters live in a single flat float64
vector; per-layer weight/bias arrays are views into it, so optimizer math is
plain vector arithmetic and flattening is lossless by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import divergence as dv
from .errors import ConfigError, DataError, NumericalError, ShapeError

ACTIVATIONS = ("tanh", "identity")


@dataclass(frozen=True)
class Arch:
    input_dim: int
    hidden_dims: tuple[int, ...]
    embed_dim: int
    num_classes: int
    hidden_activation: str = "tanh"
    embed_activation: str = "identity"

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        dims = (self.input_dim, *self.hidden_dims, self.embed_dim, self.num_classes)
        if any(int(d) < 1 for d in dims):
            raise ConfigError(f"all architecture dims must be >= 1, got {dims}")
        for act in (self.hidden_activation, self.embed_activation):
            if act not in ACTIVATIONS:
                raise ConfigError(f"unknown activation {act!r}")

    @property
    def layer_dims(self):
        """(in, out) per layer; the last entry is the classifier head."""
        dims = (self.input_dim, *self.hidden_dims, self.embed_dim, self.num_classes)
        return [(dims[i], dims[i + 1]) for i in range(len(dims) - 1)]

    @property
    def embed_index(self):
        """Number of extractor layers; layer ``embed_index`` is the head."""
        return len(self.hidden_dims) + 1

    @property
    def activations(self):
        return (self.hidden_activation,) * len(self.hidden_dims) + (self.embed_activation,)

    @property
    def size(self):
        return sum(o * i + o for i, o in self.layer_dims)

    def to_dict(self):
        return {"input_dim": self.input_dim, "hidden_dims": list(self.hidden_dims),
                "embed_dim": self.embed_dim, "num_classes": self.num_classes,
                "hidden_activation": self.hidden_activation,
                "embed_activation": self.embed_activation}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["input_dim"]), tuple(d["hidden_dims"]), int(d["embed_dim"]),
                   int(d["num_classes"]), d.get("hidden_activation", "tanh"),
                   d.get("embed_activation", "identity"))


def _layer_views(arch, vec):
    out = []
    off = 0
    for i, o in arch.layer_dims:
        W = vec[off:off + o * i].reshape(o, i)
        off += o * i
        b = vec[off:off + o]
        off += o
        out.append((W, b))
    return out


@dataclass(eq=False)
class ModelParams:
    arch: Arch
    vector: np.ndarray

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float64)
        if self.vector.shape != (self.arch.size,):
            raise ShapeError(f"parameter vector has shape {self.vector.shape}, "
                             f"arch needs ({self.arch.size},)")

    @property
    def layers(self):
        return _layer_views(self.arch, self.vector)

    def flatten(self):
        return self.vector.copy()

    @classmethod
    def unflatten(cls, arch, vec):
        return cls(arch, np.array(vec, dtype=np.float64, copy=True))

    @classmethod
    def from_layers(cls, arch, layers):
        parts = []
        for (W, b), (i, o) in zip(layers, arch.layer_dims):
            W = np.asarray(W, dtype=np.float64)
            b = np.asarray(b, dtype=np.float64)
            if W.shape != (o, i) or b.shape != (o,):
                raise ShapeError(f"layer shapes {W.shape}, {b.shape} do not match ({o}, {i})")
            parts += [W.ravel(), b]
        return cls(arch, np.concatenate(parts))

    def copy(self):
        return ModelParams(self.arch, self.vector.copy())


@dataclass(eq=False)
class GradVector:
    arch: Arch
    vector: np.ndarray
    loss: float = float("nan")
    terms: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float64)
        if self.vector.shape != (self.arch.size,):
            raise ShapeError("gradient vector does not match its architecture")

    @property
    def layers(self):
        return _layer_views(self.arch, self.vector)


@dataclass
class Batch:
    features: np.ndarray
    labels: np.ndarray | None = None
    weights: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ShapeError("batch features must be 2-D")
        m = self.features.shape[0]
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (m,):
                raise ShapeError(f"labels shape {self.labels.shape} != ({m},)")
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=np.float64)
            if self.weights.shape != (m,):
                raise ShapeError(f"weights shape {self.weights.shape} != ({m},)")
            if np.any(self.weights < 0):
                raise DataError("sample weights must be >= 0")

    def __len__(self):
        return self.features.shape[0]


def init_params(arch: Arch, seed: int) -> ModelParams:
    """He-style init: N(0, 2/fan_in) weights, zero biases."""
    rng = np.random.default_rng(seed)
    layers = []
    for i, o in arch.layer_dims:
        layers.append((rng.standard_normal((o, i)) * np.sqrt(2.0 / i), np.zeros(o)))
    return ModelParams.from_layers(arch, layers)


def _act(name, z):
    return np.tanh(z) if name == "tanh" else z


def _dact(name, a):
    # derivative expressed via the activation output
    return 1.0 - a * a if name == "tanh" else np.ones_like(a)


def _check_X(params, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.arch.input_dim:
        raise ShapeError(f"input has shape {X.shape}, expected (m, {params.arch.input_dim})")
    return X


def _extract(params, X):
    """Extractor forward pass; returns the list of layer inputs plus the embedding."""
    acts = [X]
    a = X
    layers = params.layers
    for (W, b), name in zip(layers[:-1], params.arch.activations):
        a = _act(name, a @ W.T + b)
        acts.append(a)
    return acts


def _extract_backward(params, acts, dZ, grads):
    """Accumulate extractor gradients into ``grads`` (list of (dW, db) views)."""
    layers = params.layers
    names = params.arch.activations
    dA = dZ
    for li in range(params.arch.embed_index - 1, -1, -1):
        W, _ = layers[li]
        dz = dA * _dact(names[li], acts[li + 1])
        gW, gb = grads[li]
        gW += dz.T @ acts[li]
        gb += dz.sum(0)
        if li:
            dA = dz @ W


def log_softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def embed(params: ModelParams, X) -> np.ndarray:
    return _extract(params, _check_X(params, X))[-1]


def forward(params: ModelParams, X):
    """Returns (Z, logits, probs) for the rows of ``X``."""
    X = _check_X(params, X)
    Z = _extract(params, X)[-1]
    W, b = params.layers[-1]
    logits = Z @ W.T + b
    return Z, logits, softmax(logits)


def predict(params, X):
    """Argmax class; ties go to the lowest index (numpy argmax semantics)."""
    return np.argmax(forward(params, X)[1], axis=1)


def _check_labels(labels, C):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= C):
        raise DataError(f"label out of range [0, {C})")
    return labels


def ce_loss(probs, labels, weights=None) -> float:
    """Mean of w_i * -log p_i[y_i] over the m rows (w defaults to 1)."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = _check_labels(labels, probs.shape[1])
    m = probs.shape[0]
    if m == 0:
        return 0.0
    nll = -np.log(probs[np.arange(m), labels])
    w = np.ones(m) if weights is None else np.asarray(weights, dtype=np.float64)
    return float(np.dot(w, nll) / m)


def predict_entropy(probs) -> np.ndarray:
    """Shannon entropy per row in nats, with 0 ln 0 = 0."""
    probs = np.asarray(probs, dtype=np.float64)
    logp = np.log(np.where(probs > 0, probs, 1.0))
    return -(probs * logp).sum(axis=1)


def loss_and_grad(params: ModelParams, cls_batch: Batch | None, div_pair=None,
                  gamma: float = 0.0, divergence_cfg: dv.KernelCfg | None = None):
    """Cross-entropy on ``cls_batch`` plus ``gamma`` times biased MMD^2 between
    the embeddings of the two ``div_pair`` matrices, with its exact gradient.

    Returns:
        (loss, GradVector). ``GradVector.terms`` holds the separate CE and
        divergence values.
    """
    if gamma < 0:
        raise ConfigError(f"gamma must be >= 0, got {gamma}")
    arch = params.arch
    gvec = np.zeros(arch.size)
    grads = _layer_views(arch, gvec)
    layers = params.layers

    ce = 0.0
    if cls_batch is not None and len(cls_batch):
        if cls_batch.labels is None:
            raise DataError("classification batch has no labels")
        X = _check_X(params, cls_batch.features)
        labels = _check_labels(cls_batch.labels, arch.num_classes)
        m = X.shape[0]
        acts = _extract(params, X)
        Z = acts[-1]
        W, b = layers[-1]
        logits = Z @ W.T + b
        lsm = log_softmax(logits)
        w = np.ones(m) if cls_batch.weights is None else cls_batch.weights
        rows = np.arange(m)
        ce = float(-np.dot(w, lsm[rows, labels]) / m)
        dlogits = np.exp(lsm)
        dlogits[rows, labels] -= 1.0
        dlogits *= (w / m)[:, None]
        gW, gb = grads[-1]
        gW += dlogits.T @ Z
        gb += dlogits.sum(0)
        _extract_backward(params, acts, dlogits @ W, grads)

    div = 0.0
    if div_pair is not None and gamma > 0:
        Xa, Xb = (_check_X(params, x) for x in div_pair)
        if Xa.shape[0] < 2 or Xb.shape[0] < 2:
            raise DataError("divergence pair needs >= 2 rows per side")
        acts_a = _extract(params, Xa)
        acts_b = _extract(params, Xb)
        div, dZa, dZb, _ = dv.mmd2_with_grad(acts_a[-1], acts_b[-1],
                                             divergence_cfg or dv.KernelCfg())
        _extract_backward(params, acts_a, gamma * dZa, grads)
        _extract_backward(params, acts_b, gamma * dZb, grads)

    if not np.isfinite(ce):
        raise NumericalError(f"cross-entropy term is not finite ({ce})", term="cross_entropy")
    if not np.isfinite(div):
        raise NumericalError(f"divergence term is not finite ({div})", term="divergence")
    loss = ce + gamma * div
    if not np.all(np.isfinite(gvec)):
        raise NumericalError("gradient has non-finite entries", term="gradient")
    return loss, GradVector(arch, gvec, loss, {"ce": ce, "divergence": div})


def sgd_step(params: ModelParams, grad: GradVector, lr: float) -> ModelParams:
    if lr < 0:
        raise ConfigError(f"learning rate must be >= 0, got {lr}")
    if grad.vector.shape != params.vector.shape or grad.arch != params.arch:
        raise ShapeError("gradient does not match parameters")
    if lr == 0:
        return params.copy()
    return ModelParams(params.arch, params.vector - lr * grad.vector)
