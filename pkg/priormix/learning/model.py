"""Fully-connected ReLU classifier with exact reverse-mode gradients."""
from dataclasses import dataclass
from typing import List, Sequence, Tuple
import logging

import numpy as np
from scipy.special import logsumexp, softmax

from priormix.core.errors import ConfigError, DimensionMismatch

logger = logging.getLogger(__name__)

DEFAULT_HIDDEN_WIDTH = 128


@dataclass(frozen=True, eq=False)
class MlpModel:
    """Parameters of g: R^d -> R^K.

    ``weights[l]`` has shape (fan_in, fan_out) and a layer computes a @ W + b.
    Hidden layers use the rectifier, the output layer is linear.
    """

    layer_dims: Tuple[int, ...]
    weights: Tuple[np.ndarray, ...]
    biases: Tuple[np.ndarray, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if len(dims) < 2 or min(dims) < 1:
            raise ConfigError(f"invalid layer dimensions {dims}")
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise DimensionMismatch(
                f"{len(dims) - 1} layers need as many weight and bias arrays")
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[layer], dims[layer + 1]) or b.shape != (dims[layer + 1],):
                raise DimensionMismatch(
                    f"layer {layer}: weight {w.shape}, bias {b.shape} do not chain {dims}")
        object.__setattr__(self, "layer_dims", dims)
        object.__setattr__(self, "weights", tuple(self.weights))
        object.__setattr__(self, "biases", tuple(self.biases))

    @property
    def d(self) -> int:
        return self.layer_dims[0]

    @property
    def K(self) -> int:
        return self.layer_dims[-1]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> List[np.ndarray]:
        """Flat parameter list in layer order: W0, b0, W1, b1, ..."""
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend([w, b])
        return params

    def with_parameters(self, params: Sequence[np.ndarray]) -> "MlpModel":
        return MlpModel(
            layer_dims=self.layer_dims,
            weights=tuple(params[0::2]),
            biases=tuple(params[1::2]),
        )

    def copy(self) -> "MlpModel":
        return self.with_parameters([p.copy() for p in self.parameters()])

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.parameters())


@dataclass(frozen=True, eq=False)
class MlpGradients:
    """Gradients laid out like the parameters of an MlpModel."""

    weights: Tuple[np.ndarray, ...]
    biases: Tuple[np.ndarray, ...]

    def parameters(self) -> List[np.ndarray]:
        grads = []
        for w, b in zip(self.weights, self.biases):
            grads.extend([w, b])
        return grads


def preset_dims(depth: int, d: int, K: int, width: int = DEFAULT_HIDDEN_WIDTH) -> Tuple[int, ...]:
    """Layer dimensions for an FC network of the given depth (input and output included)."""
    if depth < 2:
        raise ConfigError(f"depth must be at least 2, got {depth}")
    return (d,) + (width,) * (depth - 2) + (K,)


def init(layer_dims: Sequence[int], rng_seed: int) -> MlpModel:
    """Weights ~ Uniform[-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero."""
    dims = tuple(int(d) for d in layer_dims)
    if len(dims) < 2 or min(dims) < 1:
        raise ConfigError(f"invalid layer dimensions {dims}")
    rng = np.random.default_rng(rng_seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(layer_dims=dims, weights=tuple(weights), biases=tuple(biases))


def _check_input(model: MlpModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.d:
        raise DimensionMismatch(
            f"input of shape {X.shape} does not match model input dimension {model.d}")
    return X


def _forward_trace(model: MlpModel, X: np.ndarray) -> List[np.ndarray]:
    """Activations of every layer; the last entry holds the logits."""
    activations = [X]
    a = X
    for layer, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        a = z if layer == model.n_layers - 1 else np.maximum(z, 0.0)
        activations.append(a)
    return activations


def forward(model: MlpModel, X: np.ndarray) -> np.ndarray:
    X = _check_input(model, X)
    return _forward_trace(model, X)[-1]


def ce_loss_matrix(logits: np.ndarray) -> np.ndarray:
    """Entry (i, k) is the cross-entropy of row i against class k."""
    logits = np.asarray(logits, dtype=np.float64)
    return logsumexp(logits, axis=1, keepdims=True) - logits


def zo_loss_matrix(logits: np.ndarray) -> np.ndarray:
    """Entry (i, k) is 0 iff k is the row's argmax (ties to the smallest index)."""
    logits = np.asarray(logits, dtype=np.float64)
    losses = np.ones_like(logits)
    losses[np.arange(logits.shape[0]), np.argmax(logits, axis=1)] = 0.0
    return losses


def predict(model: MlpModel, X: np.ndarray) -> np.ndarray:
    """1-based predicted labels."""
    return np.argmax(forward(model, X), axis=1) + 1


def backward(model: MlpModel, X: np.ndarray, upstream: np.ndarray) -> MlpGradients:
    """Gradient of sum_{i,k} upstream[i, k] * ce(g(x_i), k) w.r.t. every parameter.

    d ce(z, k) / dz = softmax(z) - e_k, so the logit gradient of row i is
    (sum_k u_ik) * p_i - u_i.
    """
    X = _check_input(model, X)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (X.shape[0], model.K):
        raise DimensionMismatch(
            f"upstream of shape {upstream.shape}, expected {(X.shape[0], model.K)}")

    activations = _forward_trace(model, X)
    probs = softmax(activations[-1], axis=1)
    delta = upstream.sum(axis=1, keepdims=True) * probs - upstream

    grad_w = [None] * model.n_layers
    grad_b = [None] * model.n_layers
    for layer in reversed(range(model.n_layers)):
        grad_w[layer] = activations[layer].T @ delta
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ model.weights[layer].T) * (activations[layer] > 0.0)
    return MlpGradients(weights=tuple(grad_w), biases=tuple(grad_b))
