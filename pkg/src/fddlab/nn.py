"""Minimal dense-network machinery: exact reverse-mode gradients and Adam.

Everything is float64 numpy. Networks are plain containers of dense layers;
forward/backward are pure functions so gradient checks stay unambiguous.
Supported activations: relu, identity, softplus.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("identity", "relu", "softplus")
_ACT_CODES = {name: i for i, name in enumerate(ACTIVATIONS)}

_CHECKPOINT_MAGIC = b"FDLB"
_CHECKPOINT_VERSION = 1


class ShapeMismatchError(ValueError):
    """Dimension mismatch, carrying the offending layer index."""

    def __init__(self, layer_index: int, message: str):
        self.layer_index = layer_index
        super().__init__(f"layer {layer_index}: {message}")


class CheckpointFormatError(ValueError):
    pass


def _apply_activation(name: str, z: np.ndarray) -> np.ndarray:
    if name == "identity":
        return z
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "softplus":
        # log(1 + e^z), floored at tiny so the output stays strictly positive
        # even where e^z underflows.
        return np.maximum(np.logaddexp(0.0, z), np.finfo(np.float64).tiny)
    raise ValueError(f"unknown activation {name!r}")


def _activation_grad(name: str, z: np.ndarray) -> np.ndarray:
    """Derivative of the activation at pre-activation z."""
    if name == "identity":
        return np.ones_like(z)
    if name == "relu":
        # subgradient 0 at exactly z == 0
        return (z > 0.0).astype(np.float64)
    if name == "softplus":
        from scipy.special import expit

        return expit(z)
    raise ValueError(f"unknown activation {name!r}")


@dataclass
class DenseLayer:
    """Affine map x -> act(W x + b) with W of shape (out_dim, in_dim)."""

    weights: np.ndarray
    biases: np.ndarray
    activation: str

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ValueError("weights must be a matrix")
        if self.biases.shape != (self.weights.shape[0],):
            raise ValueError("bias length must equal weight row count")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass
class Network:
    layers: list

    def __post_init__(self):
        for i in range(1, len(self.layers)):
            if self.layers[i].in_dim != self.layers[i - 1].out_dim:
                raise ShapeMismatchError(
                    i,
                    f"in_dim {self.layers[i].in_dim} does not chain with "
                    f"previous out_dim {self.layers[i - 1].out_dim}",
                )
        if not self.layers:
            raise ValueError("network needs at least one layer")

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim


@dataclass
class GradientTape:
    """Per-layer parameter gradients plus the gradient w.r.t. the input."""

    weight_grads: list
    bias_grads: list
    input_grad: np.ndarray

    def param_grads(self) -> list:
        out = []
        for dw, db in zip(self.weight_grads, self.bias_grads):
            out.append(dw)
            out.append(db)
        return out


@dataclass
class AdamState:
    first_moment: list
    second_moment: list
    step_count: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def init_network(dims, activations, rng) -> Network:
    """Build an MLP with Glorot-uniform weights and zero biases.

    dims = (in_dim, h1, ..., out_dim); activations has one entry per layer.
    """
    dims = list(dims)
    activations = list(activations)
    if len(activations) != len(dims) - 1:
        raise ValueError("need one activation per layer")
    layers = []
    for fan_in, fan_out, act in zip(dims[:-1], dims[1:], activations):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        layers.append(DenseLayer(w, np.zeros(fan_out), act))
    return Network(layers)


def network_params(net: Network) -> list:
    """Parameter arrays in tape order: [W0, b0, W1, b1, ...]."""
    out = []
    for layer in net.layers:
        out.append(layer.weights)
        out.append(layer.biases)
    return out


def _forward_trace(net: Network, x: np.ndarray):
    """Forward pass keeping layer inputs and pre-activations for backprop."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != net.input_dim:
        raise ShapeMismatchError(
            0, f"input has {x.shape[-1]} features, expected {net.input_dim}"
        )
    inputs = []
    preacts = []
    a = x
    for layer in net.layers:
        inputs.append(a)
        z = a @ layer.weights.T + layer.biases
        preacts.append(z)
        a = _apply_activation(layer.activation, z)
    return a, inputs, preacts


def forward(net: Network, x: np.ndarray) -> np.ndarray:
    """Evaluate the network on x of shape (in_dim,) or (batch, in_dim)."""
    y, _, _ = _forward_trace(net, x)
    return y


def backward(net: Network, x: np.ndarray, dL_dy: np.ndarray) -> GradientTape:
    """Exact reverse-mode gradients of sum(y * dL_dy) over the batch.

    dL_dy must have the same shape as forward(net, x). Parameter gradients
    are summed over the batch; the input gradient matches x's shape.
    """
    y, inputs, preacts = _forward_trace(net, x)
    dL_dy = np.asarray(dL_dy, dtype=np.float64)
    if dL_dy.shape != y.shape:
        raise ShapeMismatchError(
            len(net.layers) - 1,
            f"dL_dy shape {dL_dy.shape} does not match output {y.shape}",
        )
    weight_grads = [None] * len(net.layers)
    bias_grads = [None] * len(net.layers)
    delta = dL_dy
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        dz = delta * _activation_grad(layer.activation, preacts[i])
        a_in = inputs[i]
        if dz.ndim == 1:
            weight_grads[i] = np.outer(dz, a_in)
            bias_grads[i] = dz.copy()
        else:
            weight_grads[i] = dz.T @ a_in
            bias_grads[i] = dz.sum(axis=0)
        delta = dz @ layer.weights
    return GradientTape(weight_grads, bias_grads, delta)


def adam_init(params, learning_rate=1e-3, beta1=0.9, beta2=0.999,
              epsilon=1e-8) -> AdamState:
    return AdamState(
        first_moment=[np.zeros_like(p) for p in params],
        second_moment=[np.zeros_like(p) for p in params],
        step_count=0,
        learning_rate=learning_rate,
        beta1=beta1,
        beta2=beta2,
        epsilon=epsilon,
    )


def adam_step(params, grads, state: AdamState) -> AdamState:
    """One bias-corrected Adam update, applied to params in place.

    grads may be a GradientTape (its parameter gradients are used in
    network_params order) or a list of arrays shaped like params.
    """
    if isinstance(grads, GradientTape):
        grads = grads.param_grads()
    if len(grads) != len(params):
        raise ValueError("gradient list length does not match params")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** t
    corr2 = 1.0 - b2 ** t
    for p, g, m, v in zip(params, grads, state.first_moment,
                          state.second_moment):
        if g.shape != p.shape:
            raise ValueError("gradient shape does not match parameter")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / corr1
        v_hat = v / corr2
        p -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return state


@dataclass
class GradCheckReport:
    max_rel_err: float
    passed: bool
    worst: tuple = field(default=())


def finite_diff_check(net: Network, x, loss_fn, step=1e-6,
                      tol=1e-4) -> GradCheckReport:
    """Compare backward() against central finite differences on every
    parameter.

    loss_fn maps the network output y to (loss_value, dL_dy). The analytic
    gradient is backward(net, x, dL_dy); the numeric one perturbs each
    parameter entry by ±step and re-evaluates loss_fn(forward(...)).
    """
    y0 = forward(net, x)
    _, dL_dy = loss_fn(y0)
    tape = backward(net, x, dL_dy)
    analytic = tape.param_grads()
    params = network_params(net)

    max_err = 0.0
    worst = ()
    for pi, p in enumerate(params):
        a = analytic[pi]
        flat = p.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + step
            lp, _ = loss_fn(forward(net, x))
            flat[k] = orig - step
            lm, _ = loss_fn(forward(net, x))
            flat[k] = orig
            numeric = (lp - lm) / (2.0 * step)
            a_k = a.reshape(-1)[k]
            denom = max(abs(a_k), abs(numeric), 1e-6)
            err = abs(a_k - numeric) / denom
            if err > max_err:
                max_err = err
                worst = (pi, k)
    return GradCheckReport(max_rel_err=max_err, passed=max_err < tol,
                           worst=worst)


def network_bytes(net: Network) -> bytes:
    """Serialize a network to the little-endian checkpoint layout."""
    chunks = [_CHECKPOINT_MAGIC,
              struct.pack("<II", _CHECKPOINT_VERSION, len(net.layers))]
    for layer in net.layers:
        chunks.append(struct.pack("<IIB", layer.in_dim, layer.out_dim,
                                  _ACT_CODES[layer.activation]))
        chunks.append(np.ascontiguousarray(layer.weights,
                                           dtype="<f8").tobytes())
        chunks.append(np.ascontiguousarray(layer.biases,
                                           dtype="<f8").tobytes())
    return b"".join(chunks)


def save_network(path, net: Network) -> None:
    """Write a network checkpoint (little-endian, bit-exact round trip)."""
    with open(path, "wb") as fh:
        fh.write(network_bytes(net))


def load_network(path) -> Network:
    with open(path, "rb") as fh:
        data = fh.read()
    return network_from_bytes(data, path)


def network_from_bytes(data: bytes, path="<bytes>") -> Network:
    off = 0

    def take(n, what):
        nonlocal off
        if off + n > len(data):
            raise CheckpointFormatError(
                f"{path}: truncated while reading {what} at offset {off}")
        chunk = data[off:off + n]
        off += n
        return chunk

    if take(4, "magic") != _CHECKPOINT_MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic, not a checkpoint")
    version, n_layers = struct.unpack("<II", take(8, "header"))
    if version != _CHECKPOINT_VERSION:
        raise CheckpointFormatError(f"{path}: unsupported version {version}")
    layers = []
    for i in range(n_layers):
        in_dim, out_dim, code = struct.unpack("<IIB",
                                              take(9, f"layer {i} header"))
        if code >= len(ACTIVATIONS):
            raise CheckpointFormatError(
                f"{path}: layer {i} has unknown activation code {code}")
        w = np.frombuffer(take(8 * in_dim * out_dim, f"layer {i} weights"),
                          dtype="<f8").reshape(out_dim, in_dim).copy()
        b = np.frombuffer(take(8 * out_dim, f"layer {i} biases"),
                          dtype="<f8").copy()
        layers.append(DenseLayer(w, b, ACTIVATIONS[code]))
    if off != len(data):
        raise CheckpointFormatError(
            f"{path}: {len(data) - off} trailing bytes after layer data")
    return Network(layers)
