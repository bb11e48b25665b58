"""Small dense feed-forward networks with exact backpropagation.

All trainable parameters of a :class:`Network` live in one contiguous float64
buffer (``net.flat``); per-layer weight matrices and bias vectors are views
into it.  Gradients use the same layout, so optimizers work on flat arrays.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

ACTIVATIONS = ("relu", "identity")


class ShapeError(ValueError):
    pass


class StaleCacheError(RuntimeError):
    """Raised when ``backward`` receives a cache from another network state."""


@dataclass(frozen=True)
class LayerSpec:
    input_dim: int
    output_dim: int
    activation: str = "relu"

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError(f"layer dims must be >= 1, got {self.input_dim}->{self.output_dim}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def size(self) -> int:
        return self.input_dim * self.output_dim + self.output_dim


def mlp_layers(input_dim: int, hidden: Sequence[int] = (64, 64)) -> list[LayerSpec]:
    """Relu hidden layers followed by a single identity output neuron."""
    dims = [input_dim, *hidden]
    layers = [LayerSpec(a, b, "relu") for a, b in zip(dims[:-1], dims[1:])]
    layers.append(LayerSpec(dims[-1], 1, "identity"))
    return layers


class Network:
    """Parameters of a dense network.

    ``weights[k]`` has shape ``(input_dim, output_dim)`` so a batch ``X`` of
    row vectors maps to ``X @ W + b``.
    """

    def __init__(self, layers: Sequence[LayerSpec], flat: np.ndarray | None = None):
        layers = tuple(layers)
        if not layers:
            raise ValueError("network needs at least one layer")
        for a, b in zip(layers[:-1], layers[1:]):
            if a.output_dim != b.input_dim:
                raise ShapeError(f"layer dims do not chain: {a.output_dim} -> {b.input_dim}")
        last = layers[-1]
        if last.activation != "identity" or last.output_dim != 1:
            raise ValueError("final layer must be identity with output_dim 1")
        self.layers = layers
        total = sum(layer.size for layer in layers)
        if flat is None:
            flat = np.zeros(total)
        else:
            flat = np.ascontiguousarray(flat, dtype=np.float64)
            if flat.shape != (total,):
                raise ShapeError(f"expected {total} parameters, got {flat.shape}")
        self.flat = flat
        self.weights, self.biases = split_flat(layers, flat)
        # bumped by every in-place update; forward caches record it
        self.version = 0

    @classmethod
    def glorot(cls, layers: Sequence[LayerSpec], rng: np.random.Generator) -> "Network":
        net = cls(layers)
        for layer, W in zip(net.layers, net.weights):
            limit = np.sqrt(6.0 / (layer.input_dim + layer.output_dim))
            W[...] = rng.uniform(-limit, limit, size=W.shape)
        return net

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_dim

    @property
    def offsets(self) -> np.ndarray:
        """Start offset of each layer's block in ``flat`` (weights, then bias)."""
        return np.cumsum([0] + [layer.size for layer in self.layers[:-1]])

    def weight_mask(self) -> np.ndarray:
        """1.0 on weight entries of ``flat``, 0.0 on biases."""
        mask = np.zeros_like(self.flat)
        for W in split_flat(self.layers, mask)[0]:
            W[...] = 1.0
        return mask

    def block_name(self, index: int) -> str:
        """Human-readable name of the parameter block containing ``flat[index]``."""
        offset = 0
        for k, layer in enumerate(self.layers):
            nw = layer.input_dim * layer.output_dim
            if index < offset + nw:
                return f"layer {k} weights"
            if index < offset + layer.size:
                return f"layer {k} bias"
            offset += layer.size
        raise IndexError(index)

    def copy(self) -> "Network":
        return Network(self.layers, self.flat.copy())

    def touch(self):
        self.version += 1


def split_flat(layers: Sequence[LayerSpec], flat: np.ndarray):
    weights, biases = [], []
    offset = 0
    for layer in layers:
        nw = layer.input_dim * layer.output_dim
        weights.append(flat[offset:offset + nw].reshape(layer.input_dim, layer.output_dim))
        biases.append(flat[offset + nw:offset + layer.size])
        offset += layer.size
    return weights, biases


@dataclass
class ForwardCache:
    inputs: list          # masked input to each layer
    preacts: list         # pre-activation of each layer
    masks: list
    net_id: int
    version: int


def _as_batch(net: Network, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise ShapeError(f"input has shape {x.shape}, network expects {net.input_dim} features")
    return X, single


def forward(net: Network, x, masks: Sequence[np.ndarray | None] | None = None):
    """Evaluate the network on a vector or a batch of row vectors.

    ``masks`` optionally holds one entry per layer; ``masks[k]`` multiplies the
    input of layer ``k`` (already inverted-scaled, see :func:`dropout_masks`).
    Returns ``(output, cache)`` where output has one value per row.
    """
    X, single = _as_batch(net, x)
    if masks is not None and len(masks) != len(net.layers):
        raise ShapeError(f"expected {len(net.layers)} mask entries, got {len(masks)}")
    inputs, preacts, used = [], [], []
    a = X
    for k, (layer, W, b) in enumerate(zip(net.layers, net.weights, net.biases)):
        m = None if masks is None else masks[k]
        if m is not None:
            if m.shape != a.shape:
                raise ShapeError(f"mask {k} has shape {m.shape}, layer input is {a.shape}")
            a = a * m
        z = a @ W + b
        inputs.append(a)
        preacts.append(z)
        used.append(m)
        a = np.maximum(z, 0.0) if layer.activation == "relu" else z
    out = a[:, 0]
    cache = ForwardCache(inputs, preacts, used, id(net), net.version)
    return (out[0:1] if single else out), cache


def backward(net: Network, cache: ForwardCache, output_gradient) -> np.ndarray:
    """Gradient of ``sum(output_gradient * output)`` w.r.t. ``net.flat``."""
    if cache.net_id != id(net) or cache.version != net.version:
        raise StaleCacheError("forward cache does not belong to the current network state")
    grad = np.zeros_like(net.flat)
    gW, gb = split_flat(net.layers, grad)
    delta = np.asarray(output_gradient, dtype=np.float64).reshape(-1, 1)
    if delta.shape[0] != cache.preacts[-1].shape[0]:
        raise ShapeError("output_gradient length does not match the cached batch")
    for k in range(len(net.layers) - 1, -1, -1):
        if net.layers[k].activation == "relu":
            delta = delta * (cache.preacts[k] > 0.0)
        gW[k][...] = cache.inputs[k].T @ delta
        gb[k][...] = delta.sum(axis=0)
        if k > 0:
            delta = delta @ net.weights[k].T
            if cache.masks[k] is not None:
                delta = delta * cache.masks[k]
    return grad


def dropout_masks(net: Network, batch: int, rate: float, rng: np.random.Generator,
                  include_input: bool = False) -> list[np.ndarray | None]:
    """Inverted-dropout masks for the hidden activations (and optionally the input).

    Kept units are scaled by ``1/(1-rate)`` so the expected masked value equals
    the unmasked one.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    masks: list[np.ndarray | None] = []
    for k, layer in enumerate(net.layers):
        if rate == 0.0 or (k == 0 and not include_input):
            masks.append(None)
            continue
        keep = rng.random((batch, layer.input_dim)) >= rate
        masks.append(keep / (1.0 - rate))
    return masks


def mse_loss_with_l2(predictions, targets, net: Network | None = None, l2_penalty: float = 0.0) -> float:
    predictions = np.asarray(predictions, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if predictions.shape != targets.shape:
        raise ShapeError(f"predictions {predictions.shape} vs targets {targets.shape}")
    if predictions.size == 0:
        raise ValueError("empty batch")
    loss = float(np.mean((predictions - targets) ** 2))
    if l2_penalty and net is not None:
        loss += l2_penalty * weight_penalty(net)
    return loss


def weight_penalty(net: Network) -> float:
    """Sum of squared weights, biases excluded."""
    return float(sum(np.sum(W * W) for W in net.weights))


def mse_gradient(net: Network, X, targets, l2_penalty: float = 0.0, masks=None):
    """Loss and flat gradient of :func:`mse_loss_with_l2` on one batch."""
    out, cache = forward(net, X, masks)
    targets = np.asarray(targets, dtype=np.float64)
    loss = mse_loss_with_l2(out, targets, net, l2_penalty)
    grad = backward(net, cache, 2.0 * (out - targets) / out.size)
    if l2_penalty:
        grad += 2.0 * l2_penalty * net.weight_mask() * net.flat
    return loss, grad


def penultimate_activations(net: Network, x) -> np.ndarray:
    """Post-activation output of the layer that feeds the output neuron."""
    if len(net.layers) < 2:
        raise ValueError("network has no hidden layer")
    X, single = _as_batch(net, x)
    a = X
    for layer, W, b in zip(net.layers[:-1], net.weights[:-1], net.biases[:-1]):
        z = a @ W + b
        a = np.maximum(z, 0.0) if layer.activation == "relu" else z
    return a[0] if single else a
