"""Forward evaluation: activation functions, single neurons, neural layers,
and the full network with intermediates retained for the gradient pass.

A network is an alternating chain of affine maps and scalar activations.
Layer i owns a gain matrix of shape (input_width_i + 1, width_i); the extra
row is the bias, folded in by augmenting the layer input with a trailing 1.
An optional trailing linear map (gain shape (last_width, output_width),
applied transposed, no bias) produces the final output.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .linalg import ShapeError, augment


class Activation(str, Enum):
    SIGMOID = "sigmoid"
    RELU = "relu"
    LINEAR = "linear"


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # One-sided exponent keeps exp() from overflowing for large |z|.
    t = np.exp(-np.abs(z))
    return np.where(z >= 0.0, 1.0 / (1.0 + t), t / (1.0 + t))


def activation_eval(a: Activation, z):
    """Apply the activation elementwise; z may be a scalar or an array."""
    z = np.asarray(z, dtype=float)
    if a is Activation.SIGMOID:
        out = _sigmoid(z)
    elif a is Activation.RELU:
        out = np.maximum(z, 0.0)
    elif a is Activation.LINEAR:
        out = z.astype(float, copy=True)
    else:
        raise ValueError(f"unknown activation {a!r}")
    return float(out) if out.ndim == 0 else out


def activation_deriv(a: Activation, z):
    """Derivative of the activation at z (elementwise).

    The ReLU derivative at exactly z = 0 is defined as 0.
    """
    z = np.asarray(z, dtype=float)
    if a is Activation.SIGMOID:
        s = _sigmoid(z)
        out = s * (1.0 - s)
    elif a is Activation.RELU:
        out = np.where(z > 0.0, 1.0, 0.0)
    elif a is Activation.LINEAR:
        out = np.ones_like(z)
    else:
        raise ValueError(f"unknown activation {a!r}")
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class LayerSpec:
    width: int
    activation: Activation


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture description: input width, per-layer widths/activations,
    and the width of the optional trailing linear map."""

    input_width: int
    layers: tuple[LayerSpec, ...]
    final_linear: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.input_width < 1:
            raise ShapeError(f"input_width must be >= 1, got {self.input_width}")
        if not self.layers:
            raise ShapeError("network needs at least one layer")
        for i, layer in enumerate(self.layers):
            if layer.width < 1:
                raise ShapeError(f"layer {i}: width must be >= 1, got {layer.width}")
        if self.final_linear is not None and self.final_linear < 1:
            raise ShapeError(f"final_linear width must be >= 1, got {self.final_linear}")

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def output_width(self) -> int:
        if self.final_linear is not None:
            return self.final_linear
        return self.layers[-1].width

    @property
    def layer_input_widths(self) -> tuple[int, ...]:
        """Input width seen by each layer."""
        widths = [self.input_width]
        for layer in self.layers[:-1]:
            widths.append(layer.width)
        return tuple(widths)

    @property
    def gain_shapes(self) -> tuple[tuple[int, int], ...]:
        """Shape of every gain matrix, trailing linear map included."""
        shapes = [
            (w_in + 1, layer.width)
            for w_in, layer in zip(self.layer_input_widths, self.layers)
        ]
        if self.final_linear is not None:
            shapes.append((self.layers[-1].width, self.final_linear))
        return tuple(shapes)

    @property
    def param_count(self) -> int:
        return sum(r * c for r, c in self.gain_shapes)


@dataclass(frozen=True)
class ForwardTrace:
    """Intermediates of one forward pass.

    layer_inputs holds the input of every layer plus the last layer's output
    (n+1 vectors); preactivations holds each layer's affine outputs before
    the activation (n vectors).
    """

    layer_inputs: tuple[np.ndarray, ...]
    preactivations: tuple[np.ndarray, ...]
    output: np.ndarray


def check_gains(spec: NetworkSpec, gains) -> None:
    """Raise ShapeError if the gain list is inconsistent with the spec."""
    shapes = spec.gain_shapes
    if len(gains) != len(shapes):
        raise ShapeError(
            f"expected {len(shapes)} gain matrices, got {len(gains)}"
        )
    for i, (theta, shape) in enumerate(zip(gains, shapes)):
        if theta.shape != shape:
            raise ShapeError(
                f"gain {i}: expected shape {shape}, got {theta.shape}"
            )


def random_gains(spec: NetworkSpec, rng: np.random.Generator) -> list[np.ndarray]:
    """Draw every gain entry from the standard normal distribution."""
    return [rng.standard_normal(shape) for shape in spec.gain_shapes]


def neuron_eval(x: np.ndarray, theta: np.ndarray, a: Activation) -> float:
    """Single neuron: activation of the biased inner product augment(x) . theta."""
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (x.shape[0] + 1,):
        raise ShapeError(
            f"neuron gain must have length {x.shape[0] + 1}, got {theta.shape}"
        )
    return float(activation_eval(a, augment(x) @ theta))


def layer_eval(x: np.ndarray, theta: np.ndarray, a: Activation) -> np.ndarray:
    """Evaluate a layer: column j of theta is the gain of neuron j."""
    x = np.asarray(x, dtype=float)
    if theta.ndim != 2 or theta.shape[0] != x.shape[0] + 1:
        raise ShapeError(
            f"layer gain must have {x.shape[0] + 1} rows, got shape {theta.shape}"
        )
    return activation_eval(a, augment(x) @ theta)


def forward(spec: NetworkSpec, gains, x: np.ndarray) -> ForwardTrace:
    """Run the network on x, retaining every layer input and preactivation."""
    check_gains(spec, gains)
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.input_width,):
        raise ShapeError(
            f"input must have length {spec.input_width}, got shape {x.shape}"
        )
    inputs = [x]
    preacts = []
    current = x
    for i, layer in enumerate(spec.layers):
        z = augment(current) @ gains[i]
        preacts.append(z)
        current = activation_eval(layer.activation, z)
        inputs.append(current)
    if spec.final_linear is not None:
        y = gains[-1].T @ current
    else:
        y = current
    return ForwardTrace(tuple(inputs), tuple(preacts), y)


def predict(spec: NetworkSpec, gains, x: np.ndarray) -> np.ndarray:
    """Network output only (same as forward(...).output)."""
    return forward(spec, gains, x).output
