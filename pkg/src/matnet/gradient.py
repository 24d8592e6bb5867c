"""Closed-form cost gradient, assembled layer by layer, plus an independent
finite-difference oracle used to cross-check it.

The derivative of the network output with respect to the gain column of one
neuron is a product of per-layer factors: a diagonal matrix of activation
derivatives, the layer gain transposed, and a bias-stripping selector block,
composed from the output layer backward down to the layer that owns the
neuron. The cost gradient contracts these blocks with the prediction
residuals, sample by sample in dataset order (fixed reduction order keeps
results bit-reproducible).
"""

from __future__ import annotations

import warnings

import numpy as np

from .data import Dataset
from .linalg import ShapeError, augment
from .network import (
    Activation,
    ForwardTrace,
    NetworkSpec,
    activation_deriv,
    forward,
)


def cost(spec: NetworkSpec, gains, dataset: Dataset, p: int = 2) -> float:
    """Sum over the dataset of the p-th power of the p-norm of the residual.

    p must be a positive integer; p = 2 gives the sum of squared errors.
    An empty dataset yields 0.0 with a RuntimeWarning.
    """
    if not isinstance(p, int) or p < 1:
        raise ValueError(f"p must be a positive integer, got {p!r}")
    if len(dataset) == 0:
        warnings.warn("cost of an empty dataset is 0", RuntimeWarning, stacklevel=2)
        return 0.0
    total = 0.0
    for x, y in dataset:
        r = y - forward(spec, gains, x).output
        total += float(np.sum(np.abs(r) ** p))
    return total


def lambda_matrix(x: np.ndarray, theta: np.ndarray, a: Activation) -> np.ndarray:
    """Diagonal matrix of activation derivatives at the layer preactivations."""
    x = np.asarray(x, dtype=float)
    if theta.ndim != 2 or theta.shape[0] != x.shape[0] + 1:
        raise ShapeError(
            f"layer gain must have {x.shape[0] + 1} rows, got shape {theta.shape}"
        )
    z = augment(x) @ theta
    return np.diag(activation_deriv(a, z))


def _input_jacobian(theta: np.ndarray, a: Activation, z: np.ndarray) -> np.ndarray:
    # Lambda @ theta.T @ selector, with the diagonal scaling and the bias-row
    # strip applied directly instead of via explicit matrix factors.
    return activation_deriv(a, z)[:, None] * theta.T[:, :-1]


def layer_jacobian_input(x: np.ndarray, theta: np.ndarray, a: Activation) -> np.ndarray:
    """Jacobian of the layer output with respect to the layer input x.

    Equals lambda_matrix(x, theta, a) @ theta.T @ selector(len(x)), with
    shape (width, len(x)).
    """
    x = np.asarray(x, dtype=float)
    if theta.ndim != 2 or theta.shape[0] != x.shape[0] + 1:
        raise ShapeError(
            f"layer gain must have {x.shape[0] + 1} rows, got shape {theta.shape}"
        )
    z = augment(x) @ theta
    return _input_jacobian(theta, a, z)


def layer_jacobian_theta(
    x: np.ndarray, z_j: float, j: int, a: Activation, width: int
) -> np.ndarray:
    """Jacobian of the layer output with respect to the gain of neuron j.

    Row j is the activation derivative at z_j times the augmented input;
    every other row is zero. j is 0-based. Shape (width, len(x) + 1).
    """
    x = np.asarray(x, dtype=float)
    if not 0 <= j < width:
        raise IndexError(f"neuron index {j} out of range for width {width}")
    out = np.zeros((width, x.shape[0] + 1))
    out[j] = activation_deriv(a, z_j) * augment(x)
    return out


def _output_chain(spec: NetworkSpec, gains, trace: ForwardTrace) -> list[np.ndarray]:
    """Derivative of the network output with respect to every layer output.

    Entry k has shape (output_width, width_k) and is the product of the
    per-layer input Jacobians from the last layer down to layer k+1, left
    multiplied by the trailing linear map when present.
    """
    n = spec.n_layers
    chain: list[np.ndarray] = [np.empty(0)] * n
    if spec.final_linear is not None:
        chain[n - 1] = gains[n].T.copy()
    else:
        chain[n - 1] = np.eye(spec.layers[-1].width)
    for k in range(n - 1, 0, -1):
        jac = _input_jacobian(
            gains[k], spec.layers[k].activation, trace.preactivations[k]
        )
        chain[k - 1] = chain[k] @ jac
    return chain


def network_param_gradient(spec: NetworkSpec, gains, trace: ForwardTrace):
    """Derivative of the network output with respect to every neuron gain.

    Returns one list per gain matrix. For layer k the list holds, per neuron
    j, the (output_width, input_width_k + 1) matrix of partials of the output
    with respect to that neuron's gain column. For the trailing linear map
    the list holds, per output column j, the matrix with the last layer
    output in row j and zeros elsewhere.
    """
    n = spec.n_layers
    if len(trace.layer_inputs) != n + 1:
        raise ShapeError(
            f"trace has {len(trace.layer_inputs)} layer inputs, expected {n + 1}"
        )
    ly = spec.output_width
    chain = _output_chain(spec, gains, trace)
    result = []
    for k, layer in enumerate(spec.layers):
        chi = augment(trace.layer_inputs[k])
        dz = activation_deriv(layer.activation, trace.preactivations[k])
        per_neuron = [
            np.outer(chain[k][:, j] * dz[j], chi) for j in range(layer.width)
        ]
        result.append(per_neuron)
    if spec.final_linear is not None:
        x_last = trace.layer_inputs[-1]
        per_column = []
        for j in range(ly):
            block = np.zeros((ly, x_last.shape[0]))
            block[j] = x_last
            per_column.append(block)
        result.append(per_column)
    return result


def cost_gradient(spec: NetworkSpec, gains, dataset: Dataset) -> list[np.ndarray]:
    """Gradient of the p = 2 cost with respect to every gain entry.

    Each sample contributes -2 r^T (dNN/dtheta) per neuron gain, where r is
    the residual target - output; contributions are summed in dataset order.
    The result is shape-congruent with the gain list.
    """
    if len(dataset) == 0:
        raise ValueError("cost_gradient requires a non-empty dataset")
    grads = [np.zeros(shape) for shape in spec.gain_shapes]
    n = spec.n_layers
    for x, y in dataset:
        trace = forward(spec, gains, x)
        r = y - trace.output
        chain = _output_chain(spec, gains, trace)
        for k, layer in enumerate(spec.layers):
            chi = augment(trace.layer_inputs[k])
            dz = activation_deriv(layer.activation, trace.preactivations[k])
            coef = -2.0 * (chain[k].T @ r) * dz
            grads[k] += np.outer(chi, coef)
        if spec.final_linear is not None:
            grads[n] += -2.0 * np.outer(trace.layer_inputs[-1], r)
    return grads


def finite_difference_gradient(
    spec: NetworkSpec, gains, dataset: Dataset, h: float = 1e-6
) -> list[np.ndarray]:
    """Central-difference gradient of the p = 2 cost, one entry at a time.

    This is the verification oracle for cost_gradient: it only ever calls
    cost() on perturbed copies of the gains.
    """
    if h <= 0:
        raise ValueError(f"step h must be positive, got {h}")
    work = [theta.copy() for theta in gains]
    grads = []
    for idx, theta in enumerate(work):
        grad = np.zeros_like(theta)
        it = np.nditer(theta, flags=["multi_index"])
        for _ in it:
            pos = it.multi_index
            saved = theta[pos]
            theta[pos] = saved + h
            plus = cost(spec, work, dataset, p=2)
            theta[pos] = saved - h
            minus = cost(spec, work, dataset, p=2)
            theta[pos] = saved
            grad[pos] = (plus - minus) / (2.0 * h)
        grads.append(grad)
    return grads


def gradient_consistency(analytic, reference) -> float:
    """Worst entrywise error of analytic vs reference, relative to
    max(1, |reference entry|)."""
    worst = 0.0
    for a, f in zip(analytic, reference):
        denom = np.maximum(1.0, np.abs(f))
        worst = max(worst, float((np.abs(a - f) / denom).max()))
    return worst


__all__ = [
    "cost",
    "lambda_matrix",
    "layer_jacobian_input",
    "layer_jacobian_theta",
    "network_param_gradient",
    "cost_gradient",
    "finite_difference_gradient",
    "gradient_consistency",
]
