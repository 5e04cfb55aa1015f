"""Dense feed-forward classifier with exact analytic gradients.

Parameters live in one flat float64 vector: per layer, the weight matrix in
row-major order followed by the bias. Softmax is always computed with row-max
subtraction, so non-finite values can only originate from non-finite
parameters or inputs, never from the exp itself.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "LayerShape",
    "ModelState",
    "Gradient",
    "OptimizerState",
    "Batch",
    "DimensionMismatchError",
    "NonFiniteError",
    "mlp_shapes",
    "param_count",
    "init_model",
    "forward",
    "loss_and_grad",
    "distill_loss_and_grad",
    "sgd_step",
    "softmax",
    "log_softmax",
]


class DimensionMismatchError(ValueError):
    """Shapes of inputs, parameters or gradients do not line up."""


class NonFiniteError(ValueError):
    """A parameter, logit or gradient value is inf or NaN."""


@dataclass(frozen=True)
class LayerShape:
    in_dim: int
    out_dim: int
    activation: str = "relu"

    def __post_init__(self) -> None:
        if self.in_dim < 1 or self.out_dim < 1:
            raise ValueError(f"layer dims must be >= 1, got {self.in_dim}x{self.out_dim}")
        if self.activation not in ("relu", "identity"):
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def n_params(self) -> int:
        return self.in_dim * self.out_dim + self.out_dim


def mlp_shapes(in_dim: int, hidden: Sequence[int], n_classes: int) -> tuple[LayerShape, ...]:
    """ReLU hidden layers, identity (logit) output layer."""
    dims = [in_dim, *hidden, n_classes]
    last = len(dims) - 2
    return tuple(
        LayerShape(dims[i], dims[i + 1], "identity" if i == last else "relu")
        for i in range(len(dims) - 1)
    )


def param_count(shapes: Sequence[LayerShape]) -> int:
    return sum(s.n_params for s in shapes)


def _as_finite_vector(values, what: str) -> np.ndarray:
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionMismatchError(f"{what} must be a flat vector, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"{what} contains non-finite values")
    return arr


@dataclass
class ModelState:
    """Flat parameter vector plus the layer layout it encodes."""

    params: np.ndarray
    shapes: tuple[LayerShape, ...]

    def __post_init__(self) -> None:
        self.shapes = tuple(self.shapes)
        self.params = _as_finite_vector(self.params, "params")
        expected = param_count(self.shapes)
        if self.params.shape[0] != expected:
            raise DimensionMismatchError(
                f"params length {self.params.shape[0]} != expected {expected} for shapes"
            )

    @property
    def in_dim(self) -> int:
        return self.shapes[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.shapes[-1].out_dim

    def clone(self) -> "ModelState":
        return ModelState(self.params.copy(), self.shapes)

    def layers(self) -> list[tuple[np.ndarray, np.ndarray, LayerShape]]:
        """Zero-copy (weight, bias, shape) views into the flat vector."""
        out = []
        off = 0
        for s in self.shapes:
            w = self.params[off : off + s.in_dim * s.out_dim].reshape(s.in_dim, s.out_dim)
            off += s.in_dim * s.out_dim
            b = self.params[off : off + s.out_dim]
            off += s.out_dim
            out.append((w, b, s))
        return out


@dataclass
class Gradient:
    """Flat gradient with the same layout as the model it was computed for."""

    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = _as_finite_vector(self.values, "gradient")

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


@dataclass
class OptimizerState:
    """Classical (heavy-ball) SGD momentum state."""

    lr: float
    momentum: float
    velocity: np.ndarray

    def __post_init__(self) -> None:
        if not self.lr > 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        self.velocity = _as_finite_vector(self.velocity, "velocity")

    @classmethod
    def fresh(cls, lr: float, momentum: float, n_params: int) -> "OptimizerState":
        return cls(lr, momentum, np.zeros(n_params))


@dataclass
class Batch:
    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        self.inputs = np.ascontiguousarray(self.inputs, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 2 or self.labels.ndim != 1:
            raise DimensionMismatchError(
                f"batch needs 2-d inputs and 1-d labels, got {self.inputs.shape} / {self.labels.shape}"
            )
        if self.inputs.shape[0] != self.labels.shape[0] or self.inputs.shape[0] < 1:
            raise DimensionMismatchError(
                f"batch size mismatch: {self.inputs.shape[0]} inputs, {self.labels.shape[0]} labels"
            )
        if not np.isfinite(self.inputs).all():
            raise NonFiniteError("batch inputs contain non-finite values")
        if (self.labels < 0).any():
            raise ValueError("labels must be non-negative class indices")

    def __len__(self) -> int:
        return self.labels.shape[0]


def init_model(shapes: Sequence[LayerShape], rng: np.random.Generator) -> ModelState:
    """Kaiming-uniform weights (bound sqrt(6/in_dim)), zero biases."""
    shapes = tuple(shapes)
    params = np.zeros(param_count(shapes))
    off = 0
    for s in shapes:
        bound = np.sqrt(6.0 / s.in_dim)
        n_w = s.in_dim * s.out_dim
        params[off : off + n_w] = rng.uniform(-bound, bound, n_w)
        off += n_w + s.out_dim  # biases stay zero
    return ModelState(params, shapes)


def _check_inputs(model: ModelState, inputs: np.ndarray) -> np.ndarray:
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2:
        raise DimensionMismatchError(f"inputs must be 2-d, got shape {inputs.shape}")
    if inputs.shape[1] != model.in_dim:
        raise DimensionMismatchError(
            f"expected input dim {model.in_dim}, got {inputs.shape[1]}"
        )
    return inputs


def _forward_cached(model: ModelState, inputs: np.ndarray):
    """Returns (logits, activations, pre-activations) for backprop."""
    inputs = _check_inputs(model, inputs)
    acts = [inputs]
    zs = []
    h = inputs
    for w, b, s in model.layers():
        z = h @ w + b
        zs.append(z)
        h = np.maximum(z, 0.0) if s.activation == "relu" else z
        acts.append(h)
    logits = acts[-1]
    if not np.isfinite(logits).all():
        raise NonFiniteError("forward pass produced non-finite logits")
    return logits, acts, zs


def forward(model: ModelState, inputs: np.ndarray) -> np.ndarray:
    """Logits for a batch of inputs (B x D -> B x C)."""
    logits, _, _ = _forward_cached(model, inputs)
    return logits


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _backward(model: ModelState, acts, zs, dlogits: np.ndarray) -> Gradient:
    """Backprop a seed gradient on the logits down to the flat parameter vector."""
    layers = model.layers()
    grad = np.empty_like(model.params)
    off = model.params.shape[0]
    delta = dlogits
    for i in range(len(layers) - 1, -1, -1):
        w, _, s = layers[i]
        gw = acts[i].T @ delta
        gb = delta.sum(axis=0)
        off -= s.out_dim
        grad[off : off + s.out_dim] = gb
        off -= s.in_dim * s.out_dim
        grad[off : off + s.in_dim * s.out_dim] = gw.ravel()
        if i > 0:
            da = delta @ w.T
            delta = da * (zs[i - 1] > 0.0) if layers[i - 1][2].activation == "relu" else da
    return Gradient(grad)


def loss_and_grad(model: ModelState, batch: Batch) -> tuple[float, Gradient]:
    """Mean softmax cross-entropy over the batch and its exact gradient."""
    if int(batch.labels.max()) >= model.out_dim:
        raise DimensionMismatchError(
            f"label {int(batch.labels.max())} out of range for {model.out_dim} classes"
        )
    logits, acts, zs = _forward_cached(model, batch.inputs)
    n = len(batch)
    logp = log_softmax(logits)
    loss = float(-logp[np.arange(n), batch.labels].mean())
    dlogits = softmax(logits)
    dlogits[np.arange(n), batch.labels] -= 1.0
    dlogits /= n
    return loss, _backward(model, acts, zs, dlogits)


def distill_loss_and_grad(
    student: ModelState,
    teacher: ModelState,
    inputs: np.ndarray,
    temperature: float,
) -> tuple[float, Gradient]:
    """Cross-entropy between temperature-softened teacher and student softmax.

    The gradient is taken with respect to the student only; the teacher is a
    frozen reference.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    if student.out_dim != teacher.out_dim:
        raise DimensionMismatchError(
            f"student has {student.out_dim} outputs, teacher {teacher.out_dim}"
        )
    teacher_probs = softmax(forward(teacher, inputs) / temperature)
    logits, acts, zs = _forward_cached(student, inputs)
    n = inputs.shape[0]
    logp = log_softmax(logits / temperature)
    loss = float(-(teacher_probs * logp).sum(axis=1).mean())
    dlogits = (softmax(logits / temperature) - teacher_probs) / (temperature * n)
    return loss, _backward(student, acts, zs, dlogits)


def sgd_step(
    model: ModelState, opt: OptimizerState, grad: Gradient
) -> tuple[ModelState, OptimizerState]:
    """velocity <- momentum*velocity + grad; params <- params - lr*velocity.

    Inputs are never mutated; on any error the caller's model is unchanged.
    """
    if grad.values.shape != model.params.shape:
        raise DimensionMismatchError(
            f"gradient length {grad.values.shape[0]} != params length {model.params.shape[0]}"
        )
    if not np.isfinite(grad.values).all():
        raise NonFiniteError("gradient contains non-finite values")
    velocity = opt.momentum * opt.velocity + grad.values
    params = model.params - opt.lr * velocity
    return ModelState(params, model.shapes), OptimizerState(opt.lr, opt.momentum, velocity)
