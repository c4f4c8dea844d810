"""
Fully connected regression network written directly against numpy.

Rows are samples. A layer holds ``W`` of shape (fan_out, fan_in) and ``b``
of shape (fan_out,); hidden layers apply ReLU, the output layer is linear.
All arithmetic is float64.
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from departnet.exceptions import ShapeError

logger = logging.getLogger(__name__)

# Convention for the reported FLOPs column: per-sample MACs times this
FLOPS_CONVENTION_FACTOR = 1000


@dataclass(frozen=True)
class NetworkSpec:
    input_dim: int
    hidden: tuple[int, ...] = ()
    output_dim: int = 1
    activation: str = "relu"

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        dims = (self.input_dim, *self.hidden, self.output_dim)
        if any(d < 1 for d in dims):
            msg = f"All layer sizes must be >= 1, got {dims}"
            raise ShapeError(msg)
        if self.activation != "relu":
            msg = f"Unsupported activation: {self.activation}"
            raise ShapeError(msg)

    @classmethod
    def parse(
        cls, text: str, input_dim: int = 173, output_dim: int = 1
    ) -> "NetworkSpec":
        """Build a spec from hidden sizes like ``"512,128,64"``; empty is linear."""
        cleaned = text.strip().lower()
        if cleaned in {"", "linear", "none", "[]"}:
            return cls(input_dim, (), output_dim)
        try:
            hidden = tuple(int(part) for part in cleaned.strip("[]").split(","))
        except ValueError:
            msg = f"Invalid hidden layer list: {text!r}"
            raise ShapeError(msg) from None
        return cls(input_dim, hidden, output_dim)

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) for every layer, input to output."""
        dims = (self.input_dim, *self.hidden, self.output_dim)
        return list(zip(dims[:-1], dims[1:]))

    @property
    def label(self) -> str:
        return "-".join(str(d) for d in (self.input_dim, *self.hidden, self.output_dim))

    @property
    def hidden_label(self) -> str:
        return ",".join(str(h) for h in self.hidden) or "linear"

    def to_dict(self) -> dict[str, Any]:
        return {
            "input_dim": self.input_dim,
            "hidden": list(self.hidden),
            "output_dim": self.output_dim,
            "activation": self.activation,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "NetworkSpec":
        return cls(
            input_dim=int(data["input_dim"]),
            hidden=tuple(int(h) for h in data["hidden"]),
            output_dim=int(data["output_dim"]),
            activation=str(data.get("activation", "relu")),
        )


def param_count(spec: NetworkSpec) -> int:
    return sum(fan_in * fan_out + fan_out for fan_in, fan_out in spec.layer_dims)


def mac_count(spec: NetworkSpec) -> int:
    """Per-sample multiply-accumulates of the dense layers."""
    return sum(fan_in * fan_out for fan_in, fan_out in spec.layer_dims)


def reported_flops(spec: NetworkSpec) -> int:
    return mac_count(spec) * FLOPS_CONVENTION_FACTOR


@dataclass(frozen=True, eq=False)
class Network:
    spec: NetworkSpec
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        layers = self.spec.layer_dims
        if len(self.weights) != len(layers) or len(self.biases) != len(layers):
            msg = f"Expected {len(layers)} layers for {self.spec.label}"
            raise ShapeError(msg)
        for i, (fan_in, fan_out) in enumerate(layers):
            if self.weights[i].shape != (fan_out, fan_in):
                shape = self.weights[i].shape
                msg = f"Layer {i} weight shape {shape} != {(fan_out, fan_in)}"
                raise ShapeError(msg)
            if self.biases[i].shape != (fan_out,):
                msg = f"Layer {i} bias shape {self.biases[i].shape} != {(fan_out,)}"
                raise ShapeError(msg)

    @property
    def n_parameters(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def parameters(self) -> list[np.ndarray]:
        """Flat parameter list in (W0, b0, W1, b1, ...) order."""
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Predictions for a batch; shape (n,) for single-output networks."""
        out, _ = _forward_batch(self, np.atleast_2d(X))
        return out[:, 0] if self.spec.output_dim == 1 else out


@dataclass(frozen=True, eq=False)
class ForwardCache:
    inputs: tuple[np.ndarray, ...]
    pre_activations: tuple[np.ndarray, ...]


@dataclass(frozen=True, eq=False)
class Gradients:
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def parameters(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]


def init(spec: NetworkSpec, seed: int) -> Network:
    """
    Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.

    Identical (spec, seed) pairs give bit-identical networks.
    """
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in spec.layer_dims:
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out, dtype=np.float64))
    return Network(spec, tuple(weights), tuple(biases))


def _forward_batch(net: Network, X: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != net.spec.input_dim:
        msg = f"Expected inputs of width {net.spec.input_dim}, got shape {X.shape}"
        raise ShapeError(msg)

    inputs = []
    pre = []
    h = X
    last = len(net.weights) - 1
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        inputs.append(h)
        z = h @ W.T + b
        pre.append(z)
        h = z if i == last else np.maximum(z, 0.0)
    return h, ForwardCache(tuple(inputs), tuple(pre))


def forward(net: Network, x: np.ndarray) -> tuple[Any, ForwardCache]:
    """
    Run the network on one sample (1-D) or a batch (2-D, rows are samples).

    A single sample through a single-output network yields a float.
    """
    x = np.asarray(x, dtype=np.float64)
    out, cache = _forward_batch(net, np.atleast_2d(x))
    if x.ndim == 1:
        return (float(out[0, 0]) if net.spec.output_dim == 1 else out[0]), cache
    return (out[:, 0] if net.spec.output_dim == 1 else out), cache


def mse(
    predictions: Sequence[float] | np.ndarray, targets: Sequence[float] | np.ndarray
) -> float:
    p = np.asarray(predictions, dtype=np.float64).ravel()
    t = np.asarray(targets, dtype=np.float64).ravel()
    if p.shape != t.shape:
        msg = f"Length mismatch: {p.size} predictions vs {t.size} targets"
        raise ShapeError(msg)
    if p.size == 0:
        msg = "mse needs at least one pair"
        raise ShapeError(msg)
    return float(np.mean((p - t) ** 2))


def backward(net: Network, cache: ForwardCache, target: Any) -> Gradients:
    """
    Gradients of the mean squared error over the cached batch.

    For a one-sample cache this is the gradient of that sample's squared
    error. ReLU's derivative at exactly 0 is taken as 0.
    """
    layers = len(net.weights)
    if len(cache.pre_activations) != layers or len(cache.inputs) != layers:
        msg = "Forward cache does not match the network depth"
        raise ShapeError(msg)
    for W, h, z in zip(net.weights, cache.inputs, cache.pre_activations):
        if h.shape[1] != W.shape[1] or z.shape[1] != W.shape[0]:
            msg = "Forward cache shapes do not match the network"
            raise ShapeError(msg)

    out = cache.pre_activations[-1]
    n = out.shape[0]
    y = np.asarray(target, dtype=np.float64)
    if y.size != out.size:
        msg = f"Target shape {y.shape} does not match output shape {out.shape}"
        raise ShapeError(msg)
    y = y.reshape(out.shape)

    delta = 2.0 * (out - y) / n
    grad_w: list[np.ndarray] = [np.empty(0)] * layers
    grad_b: list[np.ndarray] = [np.empty(0)] * layers
    for i in range(layers - 1, -1, -1):
        grad_w[i] = delta.T @ cache.inputs[i]
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ net.weights[i]) * (cache.pre_activations[i - 1] > 0)
    return Gradients(tuple(grad_w), tuple(grad_b))


@dataclass(frozen=True, eq=False)
class AdamState:
    first_moment: tuple[np.ndarray, ...]
    second_moment: tuple[np.ndarray, ...]
    t: int = 0
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def create(cls, net: Network, lr: float = 0.01, **options: float) -> "AdamState":
        zeros = tuple(np.zeros_like(p) for p in net.parameters())
        return cls(zeros, tuple(np.zeros_like(p) for p in zeros), lr=lr, **options)


def adam_step(
    net: Network, grads: Gradients, state: AdamState
) -> tuple[Network, AdamState]:
    """One bias-corrected Adam update; returns new objects, inputs untouched."""
    params = net.parameters()
    gradients = grads.parameters()
    if [p.shape for p in params] != [g.shape for g in gradients]:
        msg = "Gradient shapes do not match the network"
        raise ShapeError(msg)

    t = state.t + 1
    correction1 = 1.0 - state.beta1**t
    correction2 = 1.0 - state.beta2**t
    updated, first, second = [], [], []
    for p, g, m, v in zip(params, gradients, state.first_moment, state.second_moment):
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        step = state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        updated.append(p - step)
        first.append(m)
        second.append(v)

    new_net = Network(net.spec, tuple(updated[0::2]), tuple(updated[1::2]))
    new_state = replace(
        state, first_moment=tuple(first), second_moment=tuple(second), t=t
    )
    return new_net, new_state


@dataclass(frozen=True)
class GradientCheckResult:
    max_relative_error: float
    checked: int
    skipped: int = 0
    per_layer: tuple[float, ...] = field(default_factory=tuple)


def _relu_masks(cache: ForwardCache) -> list[np.ndarray]:
    return [z > 0 for z in cache.pre_activations[:-1]]


def gradient_check(
    net: Network,
    X: np.ndarray,
    y: np.ndarray,
    step: float = 1e-5,
    floor: float = 1e-6,
) -> GradientCheckResult:
    """
    Compare analytic gradients with central finite differences.

    Entries whose perturbation flips any ReLU on or off are skipped, since
    the loss is not differentiable across that kink.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    _, cache = _forward_batch(net, X)
    analytic = backward(net, cache, y).parameters()
    base_masks = _relu_masks(cache)

    nudged = Network(
        net.spec,
        tuple(w.copy() for w in net.weights),
        tuple(b.copy() for b in net.biases),
    )
    params = nudged.parameters()

    def _loss() -> tuple[float, list[np.ndarray]]:
        out, nudged_cache = _forward_batch(nudged, X)
        return mse(out, y), _relu_masks(nudged_cache)

    param_worst = []
    checked = 0
    skipped = 0
    for param, grad in zip(params, analytic):
        layer_worst = 0.0
        for flat in range(param.size):
            original = param.flat[flat]
            param.flat[flat] = original + step
            plus, plus_masks = _loss()
            param.flat[flat] = original - step
            minus, minus_masks = _loss()
            param.flat[flat] = original

            kinked = any(
                not (np.array_equal(a, b) and np.array_equal(a, c))
                for a, b, c in zip(base_masks, plus_masks, minus_masks)
            )
            if kinked:
                skipped += 1
                continue

            numeric = (plus - minus) / (2.0 * step)
            exact = grad.flat[flat]
            error = abs(exact - numeric) / max(abs(exact), abs(numeric), floor)
            layer_worst = max(layer_worst, error)
            checked += 1
        param_worst.append(layer_worst)

    if skipped:
        logger.debug("Gradient check skipped %d entries at ReLU kinks", skipped)
    per_layer = tuple(max(w, b) for w, b in zip(param_worst[0::2], param_worst[1::2]))
    return GradientCheckResult(max(param_worst), checked, skipped, per_layer)
