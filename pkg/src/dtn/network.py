"""Multi-layer perceptron with softmax output and gradient injection points.

Feature-extraction layers compute h = act(W h_prev + b); the final layer
produces class posteriors via softmax. Backpropagation accepts extra
per-sample gradients injected at the last hidden layer and at the softmax
output, which is how distribution-matching penalties enter the training
objective without this module knowing about them.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from dtn import kernels
from dtn.errors import NumericalError, ShapeError


class Activation(Enum):
    TANH = "tanh"
    SIGMOID = "sigmoid"
    SOFTMAX_OUTPUT = "softmax"


_ACT_CODE = {Activation.TANH: kernels.TANH, Activation.SIGMOID: kernels.SIGMOID}


@dataclass(frozen=True)
class LayerSpec:
    input_dim: int
    output_dim: int
    activation: Activation

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError(f"layer dims must be positive, got {self.input_dim}x{self.output_dim}")


def validate_specs(specs):
    """Check the layer chain: dims link up, softmax exactly at the end."""
    if not specs:
        raise ValueError("empty layer list")
    for i in range(len(specs) - 1):
        if specs[i].output_dim != specs[i + 1].input_dim:
            raise ShapeError(
                f"layer {i + 1} output_dim {specs[i].output_dim} != "
                f"layer {i + 2} input_dim {specs[i + 1].input_dim}"
            )
        if specs[i].activation is Activation.SOFTMAX_OUTPUT:
            raise ValueError(f"softmax activation on non-final layer {i + 1}")
    if specs[-1].activation is not Activation.SOFTMAX_OUTPUT:
        raise ValueError("final layer must have softmax activation")


def mlp_specs(dims, hidden_activation=Activation.TANH):
    """Layer chain for dims [d_in, h_1, ..., h_k, n_classes]."""
    if len(dims) < 2:
        raise ValueError("need at least input and output dims")
    specs = [
        LayerSpec(dims[i], dims[i + 1], hidden_activation)
        for i in range(len(dims) - 2)
    ]
    specs.append(LayerSpec(dims[-2], dims[-1], Activation.SOFTMAX_OUTPUT))
    return specs


@dataclass
class NetworkParams:
    """Per-layer weight matrices (output_dim x input_dim) and bias vectors."""

    weights: list
    biases: list

    def copy(self):
        return NetworkParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def all_finite(self):
        return all(np.isfinite(w).all() for w in self.weights) and all(
            np.isfinite(b).all() for b in self.biases
        )


def init_params(specs, rng):
    """Uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases."""
    validate_specs(specs)
    weights, biases = [], []
    for s in specs:
        limit = np.sqrt(6.0 / (s.input_dim + s.output_dim))
        weights.append(rng.uniform(-limit, limit, size=(s.output_dim, s.input_dim)))
        biases.append(np.zeros(s.output_dim))
    return NetworkParams(weights, biases)


def _check_params(params, specs):
    if len(params.weights) != len(specs) or len(params.biases) != len(specs):
        raise ShapeError(
            f"params hold {len(params.weights)} layers, specs describe {len(specs)}"
        )
    for i, s in enumerate(specs):
        if params.weights[i].shape != (s.output_dim, s.input_dim):
            raise ShapeError(
                f"layer {i + 1} weight shape {params.weights[i].shape} != "
                f"({s.output_dim}, {s.input_dim})"
            )
        if params.biases[i].shape != (s.output_dim,):
            raise ShapeError(f"layer {i + 1} bias shape {params.biases[i].shape}")


@dataclass
class ForwardTrace:
    """Hidden activations h(1)..h(l-1) and the softmax output for one sample."""

    hiddens: list
    probs: np.ndarray


@dataclass
class GradientSet:
    """Weight/bias gradients, shaped exactly like NetworkParams."""

    weights: list
    biases: list


def softmax(z):
    """Stable softmax of a vector (max-subtraction before exponentiation)."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1 or z.size == 0:
        raise ValueError("softmax expects a nonempty vector")
    return kernels.softmax_rows(z[None, :])[0]


def forward_batch(params, specs, x):
    """Forward pass over a batch (rows are samples).

    Returns (hiddens, probs): activations of every feature layer as a list
    of (n, k) arrays, and the (n, C) softmax output.
    """
    validate_specs(specs)
    _check_params(params, specs)
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != specs[0].input_dim:
        raise ShapeError(
            f"layer 1 expects input dim {specs[0].input_dim}, got {x.shape}"
        )
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    hiddens = []
    h = x
    for i, s in enumerate(specs[:-1]):
        h = kernels.affine_act(h, params.weights[i], params.biases[i], _ACT_CODE[s.activation])
        hiddens.append(h)
    z = kernels.affine_logits(h, params.weights[-1], params.biases[-1])
    probs = kernels.softmax_rows(z)
    return hiddens, probs


def forward(params, specs, x):
    """Forward-evaluate a single sample, returning its full trace."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"expected a vector, got shape {x.shape}")
    hiddens, probs = forward_batch(params, specs, x[None, :])
    return ForwardTrace([h[0] for h in hiddens], probs[0])


def as_label_array(labels, n):
    """Normalize labels to an int64 array with -1 marking 'no label'."""
    if labels is None:
        return np.full(n, -1, dtype=np.int64)
    out = np.asarray([-1 if y is None else int(y) for y in labels], dtype=np.int64)
    if out.shape != (n,):
        raise ShapeError(f"expected {n} labels, got {out.shape}")
    return out


def nll(traces, labels):
    """Summed negative log-likelihood -sum_i log p_i[y_i] over a batch.

    Probabilities are floored at 1e-12 inside the log so a confidently
    wrong prediction never yields infinity.
    """
    if len(traces) != len(labels):
        raise ValueError(f"{len(traces)} traces but {len(labels)} labels")
    p = np.stack([t.probs for t in traces])
    y = np.asarray(labels, dtype=np.int64)
    if y.size and (y.min() < 0 or y.max() >= p.shape[1]):
        raise ValueError(f"label out of range [0, {p.shape[1]})")
    return kernels.nll_sum(p, y)


def backprop(params, specs, x, labels, extra_grad_h=None, extra_grad_p=None,
             lam=0.0, mu=0.0):
    """Gradient of the batch objective with injected distribution terms.

    The objective is sum-NLL over labeled rows plus lam * (term whose
    per-sample gradient at the last hidden layer is extra_grad_h) plus
    mu * (term whose per-sample gradient at the softmax output is
    extra_grad_p). Rows with label -1 (or None) contribute no NLL.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    hiddens, probs = forward_batch(params, specs, x)
    n, n_classes = probs.shape
    y = as_label_array(labels, n)
    if y.max() >= n_classes:
        raise ValueError(f"label out of range [0, {n_classes})")

    dz = kernels.nll_grad_logits(probs, y)
    if extra_grad_p is not None and mu != 0.0:
        gp = np.ascontiguousarray(extra_grad_p, dtype=np.float64)
        if gp.shape != probs.shape:
            raise ShapeError(f"extra_grad_p shape {gp.shape} != {probs.shape}")
        dz = dz + mu * kernels.softmax_vjp(probs, gp)

    layer_inputs = [x] + hiddens
    n_layers = len(specs)
    grads_w = [None] * n_layers
    grads_b = [None] * n_layers

    da = dz
    for i in range(n_layers - 1, -1, -1):
        grads_w[i] = kernels.grad_weights(da, layer_inputs[i])
        grads_b[i] = kernels.grad_bias(da)
        if not (np.isfinite(grads_w[i]).all() and np.isfinite(grads_b[i]).all()):
            raise NumericalError(f"non-finite gradient at layer {i + 1}")
        if i == 0:
            break
        dh = kernels.grad_input(da, params.weights[i])
        if i == n_layers - 1 and extra_grad_h is not None and lam != 0.0:
            gh = np.ascontiguousarray(extra_grad_h, dtype=np.float64)
            if gh.shape != hiddens[-1].shape:
                raise ShapeError(f"extra_grad_h shape {gh.shape} != {hiddens[-1].shape}")
            dh = dh + lam * gh
        da = kernels.act_vjp(hiddens[i - 1], dh, _ACT_CODE[specs[i - 1].activation])

    return GradientSet(grads_w, grads_b)
