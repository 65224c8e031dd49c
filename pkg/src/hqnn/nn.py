"""Small dense-network toolkit shared by the quantum head and the baseline.

Everything works on batches: inputs are ``(batch, features)`` arrays and
class labels are 1-based integers in ``1..n_classes``.
"""
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

N_CLASSES = 10
LOG_CLAMP = 1e-12
ACTIVATIONS = ("identity", "relu", "softmax")


class ShapeError(ValueError):
    pass


class ProbabilityError(ValueError):
    pass


class MetricError(ValueError):
    pass


def softmax(logits):
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def glorot_uniform(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


class DenseLayer:
    """Affine map followed by an elementwise or softmax activation."""

    def __init__(self, weights, biases, activation="identity"):
        weights = np.asarray(weights, dtype=np.float64)
        biases = np.asarray(biases, dtype=np.float64)
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        if weights.ndim != 2 or biases.shape != (weights.shape[0],):
            raise ShapeError(
                f"weights {weights.shape} and biases {biases.shape} do not match")
        self.weights = weights
        self.biases = biases
        self.activation = activation

    @classmethod
    def init(cls, rng, n_in, n_out, activation="identity"):
        return cls(glorot_uniform(rng, n_in, n_out), np.zeros(n_out), activation)

    @property
    def n_in(self):
        return self.weights.shape[1]

    @property
    def n_out(self):
        return self.weights.shape[0]

    @property
    def n_params(self):
        return self.weights.size + self.biases.size

    def forward(self, x):
        """Return ``(activation(x @ W.T + b), cache)``."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.n_in:
            raise ShapeError(f"expected {self.n_in} inputs, got {x.shape[-1]}")
        pre = x @ self.weights.T + self.biases
        if self.activation == "relu":
            out = np.maximum(pre, 0.0)
        elif self.activation == "softmax":
            out = softmax(pre)
        else:
            out = pre
        return out, (x, pre, out)

    def backward(self, cache, upstream):
        """Gradients given ``dL/d(output)``.

        Returns ``(dW, db, dx)``. For softmax layers paired with cross-entropy
        prefer :meth:`backward_logits` with ``probs - onehot``.
        """
        x, pre, out = cache
        upstream = np.asarray(upstream, dtype=np.float64)
        if upstream.shape != out.shape:
            raise ShapeError(f"upstream {upstream.shape} != output {out.shape}")
        if self.activation == "relu":
            dpre = upstream * (pre > 0)
        elif self.activation == "softmax":
            dpre = out * (upstream - np.sum(upstream * out, axis=-1, keepdims=True))
        else:
            dpre = upstream
        return self.backward_logits(cache, dpre)

    def backward_logits(self, cache, dpre):
        x = cache[0]
        x2 = x.reshape(-1, self.n_in)
        d2 = dpre.reshape(-1, self.n_out)
        dW = d2.T @ x2
        db = d2.sum(axis=0)
        dx = dpre @ self.weights
        return dW, db, dx


def one_hot(labels, n_classes=N_CLASSES):
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 1 or labels.max() > n_classes):
        raise ValueError(f"labels must lie in 1..{n_classes}")
    Y = np.zeros(labels.shape + (n_classes,))
    np.put_along_axis(Y, (labels - 1)[..., None], 1.0, axis=-1)
    return Y


def cce_loss(predicted, truth):
    """Categorical cross-entropy.

    ``predicted`` and ``truth`` are one-hot/probability rows of shape ``(C,)``
    or ``(N, C)``; the batch form is the mean over rows. Probabilities are
    clamped to ``[1e-12, 1]`` before the log.
    """
    predicted = np.asarray(predicted, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if predicted.shape != truth.shape:
        raise ShapeError(f"prediction {predicted.shape} vs truth {truth.shape}")
    sums = predicted.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > 1e-6):
        raise ProbabilityError("predicted rows must sum to 1")
    logp = np.log(np.clip(predicted, LOG_CLAMP, 1.0))
    per_row = -np.sum(truth * logp, axis=-1)
    return float(np.mean(per_row))


def softmax_cce_grad(probs, Y):
    """Gradient of the batch-mean CCE with respect to softmax logits."""
    return (probs - Y) / probs.shape[0]


def argmax_predict(predicted):
    """1-based class of the largest entry; ties go to the lowest index."""
    return np.argmax(np.asarray(predicted), axis=-1) + 1


def accuracy(preds, truths):
    preds = np.asarray(preds)
    truths = np.asarray(truths)
    if preds.shape != truths.shape:
        raise ShapeError("preds and truths differ in length")
    return float(np.mean(preds == truths))


def balanced_accuracy(preds, truths, n_classes=N_CLASSES):
    """Mean over classes of the per-class hit rate (correct / class count).

    Summed in exact rationals, so the result is the correctly rounded value.
    """
    preds = np.asarray(preds)
    truths = np.asarray(truths)
    if preds.shape != truths.shape:
        raise ShapeError("preds and truths differ in length")
    total = Fraction(0)
    for c in range(1, n_classes + 1):
        in_class = truths == c
        count = int(in_class.sum())
        if count == 0:
            raise MetricError(f"class {c} absent from truths")
        total += Fraction(int(np.sum(in_class & (preds == c))), count)
    return float(total / n_classes)


def confusion_matrix(truths, preds, n_classes=N_CLASSES):
    """Counts with rows indexed by true class and columns by predicted class."""
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(truths) - 1, np.asarray(preds) - 1), 1)
    return cm


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state):
    """In-place Adam update of every array in ``params``.

    ``params`` and ``grads`` are dicts of equally shaped arrays. Uses the
    bias-corrected moments ``m_hat / (sqrt(v_hat) + eps)``.
    """
    if params.keys() != grads.keys():
        raise ShapeError("params and grads have different keys")
    state.step += 1
    t = state.step
    c1 = 1 - state.beta1 ** t
    c2 = 1 - state.beta2 ** t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"{name}: grad {g.shape} vs param {p.shape}")
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def assemble_image(chunks):
    """Inverse of the quadrant split: ``(..., 4, 4, 4) -> (..., 8, 8)``."""
    chunks = np.asarray(chunks)
    top = np.concatenate([chunks[..., 0, :, :], chunks[..., 1, :, :]], axis=-1)
    bottom = np.concatenate([chunks[..., 2, :, :], chunks[..., 3, :, :]], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


class BaselineModel:
    """Classical 64 -> 4 (ReLU) -> 10 (softmax) perceptron."""

    kind = "classical"

    def __init__(self, hidden, output):
        self.hidden = hidden
        self.output = output

    @classmethod
    def init(cls, rng, n_hidden=4):
        return cls(DenseLayer.init(rng, 64, n_hidden, "relu"),
                   DenseLayer.init(rng, n_hidden, N_CLASSES, "softmax"))

    @property
    def params(self):
        return {"hidden.W": self.hidden.weights, "hidden.b": self.hidden.biases,
                "out.W": self.output.weights, "out.b": self.output.biases}

    @property
    def n_params(self):
        return self.hidden.n_params + self.output.n_params

    def _inputs(self, chunks):
        chunks = np.asarray(chunks, dtype=np.float64)
        return assemble_image(chunks).reshape(chunks.shape[0], 64)

    def forward(self, chunks):
        h, _ = self.hidden.forward(self._inputs(chunks))
        probs, _ = self.output.forward(h)
        return probs

    def loss_and_grads(self, chunks, labels):
        Y = one_hot(labels)
        h, hcache = self.hidden.forward(self._inputs(chunks))
        probs, ocache = self.output.forward(h)
        loss = cce_loss(probs, Y)
        dWo, dbo, dh = self.output.backward_logits(ocache, softmax_cce_grad(probs, Y))
        dWh, dbh, _ = self.hidden.backward(hcache, dh)
        grads = {"hidden.W": dWh, "hidden.b": dbh, "out.W": dWo, "out.b": dbo}
        return loss, grads, probs
