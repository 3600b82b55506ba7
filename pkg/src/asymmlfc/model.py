"""Dense tanh/sigmoid networks over flat parameter vectors.

Layer ``k`` stores its weight matrix (``n_out x n_in``, row-major) followed by
its bias vector, and layers are concatenated in order.  Inputs may be a single
feature vector or a batch with samples along the first axis; gradients are
summed over the batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class MlpSpec:
    layer_sizes: tuple
    hidden_activation: str = "tanh"
    output_activation: str = "sigmoid"
    output_bias_init: float = 0.0
    weight_decay: float = 0.0

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValueError(f"bad layer sizes {self.layer_sizes}")
        if self.hidden_activation != "tanh" or self.output_activation != "sigmoid":
            raise ValueError("only tanh hidden / sigmoid output layers are supported")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")
        object.__setattr__(self, "layer_sizes", sizes)

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_params(self) -> int:
        s = self.layer_sizes
        return sum((s[k] + 1) * s[k + 1] for k in range(len(s) - 1))


def unpack(spec: MlpSpec, params: np.ndarray) -> list:
    """Split a flat vector into ``[(W, b), ...]`` views."""
    params = np.asarray(params, dtype=float)
    if params.shape != (spec.n_params,):
        raise DimensionMismatch(f"expected {spec.n_params} params, got {params.shape}")
    layers, off = [], 0
    s = spec.layer_sizes
    for k in range(len(s) - 1):
        n_in, n_out = s[k], s[k + 1]
        W = params[off:off + n_in * n_out].reshape(n_out, n_in)
        off += n_in * n_out
        b = params[off:off + n_out]
        off += n_out
        layers.append((W, b))
    return layers


def pack(spec: MlpSpec, layers) -> np.ndarray:
    flat = np.concatenate([np.concatenate([np.ravel(W), np.ravel(b)]) for W, b in layers])
    if flat.shape != (spec.n_params,):
        raise DimensionMismatch(f"layers give {flat.size} params, spec needs {spec.n_params}")
    return flat


def init_params(spec: MlpSpec, rng: np.random.Generator) -> np.ndarray:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero hidden biases."""
    layers = []
    s = spec.layer_sizes
    for k in range(len(s) - 1):
        a = 1.0 / np.sqrt(s[k])
        W = rng.uniform(-a, a, size=(s[k + 1], s[k]))
        b = np.zeros(s[k + 1])
        layers.append((W, b))
    layers[-1][1][:] = spec.output_bias_init
    return pack(spec, layers)


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _as_batch(spec, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != spec.n_inputs:
        raise DimensionMismatch(f"input shape {x.shape} incompatible with {spec.n_inputs} inputs")
    return X, single


@dataclass
class ForwardCache:
    inputs: np.ndarray
    activations: list  # post-activation output of every layer
    single: bool

    @property
    def output(self):
        out = self.activations[-1]
        return out[0] if self.single else out


def forward_cached(spec: MlpSpec, params, x) -> ForwardCache:
    X, single = _as_batch(spec, x)
    layers = unpack(spec, params)
    acts = []
    h = X
    for k, (W, b) in enumerate(layers):
        z = h @ W.T + b
        h = sigmoid(z) if k == len(layers) - 1 else np.tanh(z)
        acts.append(h)
    return ForwardCache(X, acts, single)


def forward(spec: MlpSpec, params, x) -> np.ndarray:
    return forward_cached(spec, params, x).output


def backward(spec: MlpSpec, params, cache: ForwardCache, upstream):
    """Reverse pass: returns (d params, d inputs) of ``sum(upstream * output)``."""
    G = np.asarray(upstream, dtype=float)
    out = cache.activations[-1]
    if cache.single:
        G = G[None, :]
    if G.shape != out.shape:
        raise DimensionMismatch(f"upstream shape {np.shape(upstream)} vs output {out.shape}")
    layers = unpack(spec, params)
    grads = [None] * len(layers)
    delta = G * out * (1.0 - out)
    for k in range(len(layers) - 1, -1, -1):
        W, _ = layers[k]
        h_in = cache.inputs if k == 0 else cache.activations[k - 1]
        grads[k] = (delta.T @ h_in, delta.sum(axis=0))
        delta = delta @ W
        if k > 0:
            delta = delta * (1.0 - h_in * h_in)
    g_in = delta[0] if cache.single else delta
    return pack(spec, grads), g_in


def grad_params(spec: MlpSpec, params, x, upstream) -> np.ndarray:
    cache = forward_cached(spec, params, x)
    return backward(spec, params, cache, upstream)[0]


def grad_input(spec: MlpSpec, params, x, upstream) -> np.ndarray:
    cache = forward_cached(spec, params, x)
    return backward(spec, params, cache, upstream)[1]
