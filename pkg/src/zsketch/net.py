"""MLP encoder machinery: forward, batch norm, leaky ReLU, analytic gradients.

The encoder is a fixed chain d_in -> 1024 -> 512 -> 256 -> d_out.
Hidden layers are affine -> batch norm -> leaky ReLU; the final layer is
plain affine so embeddings can match unnormalized semantic vectors.
Everything is float64; gradients are hand-derived and exact, including
the batch-statistic terms of batch norm in train mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NetError

HIDDEN_DIMS = (1024, 512, 256)
LEAKY_SLOPE = 0.01
BN_EPS = 1e-5
BN_MOMENTUM = 0.1


@dataclass
class Affine:
    """Dense layer y = x W^T + b; weight shape (out, in).

    Hidden encoder layers carry no bias: batch norm re-centers their
    output immediately, so a bias there has exactly zero gradient and
    BN's beta provides the shift instead.
    """

    weight: np.ndarray
    bias: np.ndarray | None


@dataclass
class BatchNormState:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray


@dataclass
class EncoderParams:
    layers: list[Affine]
    norms: list[BatchNormState]  # one per hidden layer
    slope: float = LEAKY_SLOPE
    eps: float = BN_EPS
    momentum: float = BN_MOMENTUM

    @property
    def d_in(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def d_out(self) -> int:
        return self.layers[-1].weight.shape[0]


@dataclass
class ForwardCache:
    """Per-layer tensors recorded by a train-mode forward pass."""

    train: bool
    inputs: list[np.ndarray] = field(default_factory=list)  # x into each layer
    pre_bn: list[np.ndarray] = field(default_factory=list)  # z per hidden layer
    mean: list[np.ndarray] = field(default_factory=list)
    var: list[np.ndarray] = field(default_factory=list)
    normed: list[np.ndarray] = field(default_factory=list)  # (z - mu) / std
    pre_act: list[np.ndarray] = field(default_factory=list)  # gamma*normed + beta


def _glorot(rng: np.random.Generator, d_out: int, d_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (d_in + d_out))
    return rng.uniform(-bound, bound, size=(d_out, d_in))


def init_encoder(
    d_in: int,
    d_out: int,
    seed: int,
    hidden_dims: tuple[int, ...] = HIDDEN_DIMS,
) -> EncoderParams:
    """Deterministic Glorot-uniform init; BN starts as the identity map."""
    if d_in < 1:
        raise NetError(f"d_in must be >= 1, got {d_in}")
    rng = np.random.default_rng(seed)
    dims = [d_in, *hidden_dims, d_out]
    layers, norms = [], []
    for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
        hidden = i < len(dims) - 2
        layers.append(Affine(_glorot(rng, b, a), None if hidden else np.zeros(b)))
        if hidden:
            norms.append(
                BatchNormState(np.ones(b), np.zeros(b), np.zeros(b), np.ones(b))
            )
    return EncoderParams(layers, norms)


def init_affine(d_out: int, d_in: int, seed: int) -> Affine:
    rng = np.random.default_rng(seed)
    return Affine(_glorot(rng, d_out, d_in), np.zeros(d_out))


def leaky_relu(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x > 0, x, slope * x)


def forward(
    params: EncoderParams,
    batch: np.ndarray,
    train: bool,
    update_running: bool = True,
) -> tuple[np.ndarray, ForwardCache]:
    """Run the encoder; train mode uses batch statistics (biased variance).

    ``update_running`` lets callers (finite-difference probes) evaluate
    the train-mode map without mutating running statistics.
    """
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.d_in:
        raise NetError(f"batch shape {x.shape} incompatible with d_in {params.d_in}")
    if train and x.shape[0] < 2:
        raise NetError("train-mode forward needs a batch of at least 2")

    cache = ForwardCache(train=train)
    n_hidden = len(params.norms)
    for i, layer in enumerate(params.layers):
        cache.inputs.append(x)
        z = x @ layer.weight.T
        if layer.bias is not None:
            z = z + layer.bias
        if i >= n_hidden:  # final layer: no BN, no activation
            return z, cache
        bn = params.norms[i]
        if train:
            mu = z.mean(axis=0)
            var = z.var(axis=0)
            if update_running:
                m = params.momentum
                bn.running_mean = (1 - m) * bn.running_mean + m * mu
                bn.running_var = (1 - m) * bn.running_var + m * var
        else:
            mu = bn.running_mean
            var = bn.running_var
        normed = (z - mu) / np.sqrt(var + params.eps)
        pre_act = bn.gamma * normed + bn.beta
        cache.pre_bn.append(z)
        cache.mean.append(mu)
        cache.var.append(var)
        cache.normed.append(normed)
        cache.pre_act.append(pre_act)
        x = leaky_relu(pre_act, params.slope)
    raise AssertionError("unreachable: final layer returns")


def backward(
    params: EncoderParams, cache: ForwardCache, grad_out: np.ndarray
) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Exact gradients for every parameter plus the input gradient.

    Requires a train-mode cache: the batch-statistic terms (d mu, d var)
    are part of the chain rule and are included.
    """
    if not cache.train:
        raise NetError("backward needs a train-mode forward cache")
    if grad_out.shape != (cache.inputs[0].shape[0], params.d_out):
        raise NetError(
            f"grad_out shape {grad_out.shape} does not match cached batch"
        )
    grads: dict[str, np.ndarray] = {}
    n_hidden = len(params.norms)

    # final affine layer
    last = len(params.layers) - 1
    x_in = cache.inputs[last]
    grads[f"layers.{last}.weight"] = grad_out.T @ x_in
    if params.layers[last].bias is not None:
        grads[f"layers.{last}.bias"] = grad_out.sum(axis=0)
    dx = grad_out @ params.layers[last].weight

    for i in range(n_hidden - 1, -1, -1):
        bn = params.norms[i]
        z = cache.pre_bn[i]
        mu = cache.mean[i]
        var = cache.var[i]
        normed = cache.normed[i]
        pre_act = cache.pre_act[i]
        b = z.shape[0]
        inv_std = 1.0 / np.sqrt(var + params.eps)

        dh = dx * np.where(pre_act > 0, 1.0, params.slope)
        grads[f"norms.{i}.gamma"] = (dh * normed).sum(axis=0)
        grads[f"norms.{i}.beta"] = dh.sum(axis=0)
        dnormed = dh * bn.gamma
        dvar = (dnormed * (z - mu) * -0.5 * inv_std**3).sum(axis=0)
        dmu = (-dnormed * inv_std).sum(axis=0) + dvar * (-2.0 * (z - mu)).mean(axis=0)
        dz = dnormed * inv_std + dvar * 2.0 * (z - mu) / b + dmu / b

        x_in = cache.inputs[i]
        grads[f"layers.{i}.weight"] = dz.T @ x_in
        if params.layers[i].bias is not None:
            grads[f"layers.{i}.bias"] = dz.sum(axis=0)
        dx = dz @ params.layers[i].weight
    return grads, dx


def decode(dec: Affine, embeddings: np.ndarray) -> np.ndarray:
    """Affine map in the shared space (cross-sample decoder / classifier)."""
    emb = np.asarray(embeddings, dtype=np.float64)
    if emb.shape[1] != dec.weight.shape[1]:
        raise NetError(
            f"embeddings dim {emb.shape[1]} != decoder input {dec.weight.shape[1]}"
        )
    return emb @ dec.weight.T + dec.bias


def decode_backward(
    dec: Affine, embeddings: np.ndarray, grad_out: np.ndarray
) -> tuple[dict[str, np.ndarray], np.ndarray]:
    grads = {
        "weight": grad_out.T @ embeddings,
        "bias": grad_out.sum(axis=0),
    }
    return grads, grad_out @ dec.weight


def encoder_param_blocks(enc: EncoderParams) -> list[tuple[str, np.ndarray]]:
    """Trainable tensors in declared (checkpoint) order."""
    blocks = []
    for i, layer in enumerate(enc.layers):
        blocks.append((f"layers.{i}.weight", layer.weight))
        if layer.bias is not None:
            blocks.append((f"layers.{i}.bias", layer.bias))
    for i, bn in enumerate(enc.norms):
        blocks.append((f"norms.{i}.gamma", bn.gamma))
        blocks.append((f"norms.{i}.beta", bn.beta))
    return blocks


def encoder_state_blocks(enc: EncoderParams) -> list[tuple[str, np.ndarray]]:
    """Non-trainable running statistics, checkpointed for eval mode."""
    blocks = []
    for i, bn in enumerate(enc.norms):
        blocks.append((f"norms.{i}.running_mean", bn.running_mean))
        blocks.append((f"norms.{i}.running_var", bn.running_var))
    return blocks
