"""MLP with LayerNorm blocks and exact reverse-mode gradients.

The network maps ``R^v -> R^v``::

    h0 = W_embed x
    h_k = block_k(h_{k-1})            (+ h_{k-1} when residual)
    y  = W_unembed h_n
    block(h) = act(W LN(h) + b)

Hidden width is ``width_factor * v``.  Embedding and unembedding carry no
bias.  All parameters live in one flat float64 vector; the layout is a pure
function of the config.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.special import expit

from .errors import NumericError
from .seeding import stream


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int
    width_factor: int = 4
    n_blocks: int = 2
    residual: bool = True
    activation: str = "relu"
    softplus_beta: float = 1.0
    ln_epsilon: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        if self.input_dim <= 0 or self.width_factor <= 0:
            raise ValueError("input_dim and width_factor must be positive")
        if self.n_blocks < 0:
            raise ValueError("n_blocks must be non-negative")
        if self.activation not in ("relu", "softplus"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if not self.softplus_beta > 0:
            raise ValueError("softplus beta must be positive")
        if not self.ln_epsilon > 0:
            raise ValueError("ln_epsilon must be positive")

    @property
    def hidden(self) -> int:
        return self.width_factor * self.input_dim


class LayoutEntry(NamedTuple):
    name: str
    shape: tuple
    offset: int

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


def layout(config: MlpConfig) -> tuple:
    """Ordered ``(name, shape, offset)`` entries for every tensor."""
    v, h = config.input_dim, config.hidden
    shapes = [("embed.W", (h, v))]
    for k in range(config.n_blocks):
        shapes += [
            (f"block{k}.ln_gain", (h,)),
            (f"block{k}.ln_shift", (h,)),
            (f"block{k}.W", (h, h)),
            (f"block{k}.b", (h,)),
        ]
    shapes.append(("unembed.W", (v, h)))
    entries, offset = [], 0
    for name, shape in shapes:
        entries.append(LayoutEntry(name, shape, offset))
        offset += int(np.prod(shape))
    return tuple(entries)


def param_count(config: MlpConfig) -> int:
    last = layout(config)[-1]
    return last.offset + last.size


@dataclass
class ParamVector:
    values: np.ndarray
    layout: tuple

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        total = sum(e.size for e in self.layout)
        if self.values.shape != (total,):
            raise ValueError(f"layout needs {total} values, got shape {self.values.shape}")

    def tensor(self, name: str) -> np.ndarray:
        """View (not copy) of one named tensor."""
        for e in self.layout:
            if e.name == name:
                return self.values[e.offset : e.offset + e.size].reshape(e.shape)
        raise KeyError(name)

    def tensors(self) -> dict:
        return {e.name: self.values[e.offset : e.offset + e.size].reshape(e.shape) for e in self.layout}

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), self.layout)

    def with_values(self, values) -> "ParamVector":
        return ParamVector(np.array(values, dtype=float), self.layout)

    def __len__(self) -> int:
        return self.values.shape[0]

    def save(self, path) -> None:
        """Write ``<path>.bin`` (little-endian f64) and ``<path>.json`` (layout)."""
        path = Path(path)
        path.with_suffix(".bin").write_bytes(self.values.astype("<f8").tobytes())
        desc = [{"name": e.name, "shape": list(e.shape), "offset": e.offset} for e in self.layout]
        path.with_suffix(".json").write_text(json.dumps({"dtype": "<f8", "layout": desc}, indent=1))

    @classmethod
    def load(cls, path) -> "ParamVector":
        path = Path(path)
        desc = json.loads(path.with_suffix(".json").read_text())
        entries = tuple(LayoutEntry(d["name"], tuple(d["shape"]), d["offset"]) for d in desc["layout"])
        values = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype="<f8").astype(float)
        return cls(values, entries)


def init(config: MlpConfig) -> ParamVector:
    """Weights ~ N(0, 1/fan_in), biases 0, LayerNorm gain 1 and shift 0."""
    rng = stream(config.seed, "init")
    lay = layout(config)
    values = np.zeros(sum(e.size for e in lay))
    for e in lay:
        block = values[e.offset : e.offset + e.size]
        if e.name.endswith(".W"):
            fan_in = e.shape[1]
            block[:] = rng.normal(0.0, 1.0 / np.sqrt(fan_in), e.size)
        elif e.name.endswith("ln_gain"):
            block[:] = 1.0
    return ParamVector(values, lay)


def zeros_like(params: ParamVector) -> ParamVector:
    return ParamVector(np.zeros_like(params.values), params.layout)


def _act(config: MlpConfig, z):
    if config.activation == "relu":
        return np.maximum(z, 0.0)
    beta = config.softplus_beta
    return np.logaddexp(0.0, beta * z) / beta


def _act_grad(config: MlpConfig, z):
    if config.activation == "relu":
        return (z > 0).astype(float)
    return expit(config.softplus_beta * z)


class Cache(NamedTuple):
    x: np.ndarray
    blocks: list  # per block: (h_in, xhat, inv_std, u, z)
    h_out: np.ndarray
    squeeze: bool


def forward(config: MlpConfig, params: ParamVector, x):
    """Evaluate the network on ``x`` of shape ``(v,)`` or ``(B, v)``.

    Returns ``(y, cache)``; ``cache`` feeds :func:`backward`.
    """
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    X = x[None, :] if squeeze else x
    if X.ndim != 2 or X.shape[1] != config.input_dim:
        raise ValueError(f"input must have trailing length {config.input_dim}, got shape {x.shape}")
    if not np.all(np.isfinite(X)):
        raise NumericError("non-finite network input")
    t = params.tensors()
    h = X @ t["embed.W"].T
    blocks = []
    eps = config.ln_epsilon
    for k in range(config.n_blocks):
        mu = h.mean(axis=1, keepdims=True)
        var = h.var(axis=1, keepdims=True)
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = (h - mu) * inv_std
        u = t[f"block{k}.ln_gain"] * xhat + t[f"block{k}.ln_shift"]
        z = u @ t[f"block{k}.W"].T + t[f"block{k}.b"]
        a = _act(config, z)
        blocks.append((h, xhat, inv_std, u, z))
        h = a + h if config.residual else a
    y = h @ t["unembed.W"].T
    return (y[0] if squeeze else y), Cache(X, blocks, h, squeeze)


def backward(config: MlpConfig, params: ParamVector, cache: Cache, dy):
    """Reverse-mode pass: returns ``(dx, dparams)`` for output cotangent ``dy``.

    ``dparams`` is summed over the batch.
    """
    dy = np.asarray(dy, dtype=float)
    dY = dy[None, :] if cache.squeeze else dy
    if dY.shape != (cache.x.shape[0], config.input_dim):
        raise ValueError(f"cotangent shape {dy.shape} does not match the forward batch")
    t = params.tensors()
    grads = zeros_like(params)
    g = grads.tensors()
    g["unembed.W"][:] = dY.T @ cache.h_out
    dh = dY @ t["unembed.W"]
    for k in reversed(range(config.n_blocks)):
        h_in, xhat, inv_std, u, z = cache.blocks[k]
        dz = dh * _act_grad(config, z)
        g[f"block{k}.W"][:] = dz.T @ u
        g[f"block{k}.b"][:] = dz.sum(axis=0)
        du = dz @ t[f"block{k}.W"]
        g[f"block{k}.ln_gain"][:] = (du * xhat).sum(axis=0)
        g[f"block{k}.ln_shift"][:] = du.sum(axis=0)
        dxhat = du * t[f"block{k}.ln_gain"]
        dln = inv_std * (
            dxhat
            - dxhat.mean(axis=1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=1, keepdims=True)
        )
        dh = dln + dh if config.residual else dln
    g["embed.W"][:] = dh.T @ cache.x
    dx = dh @ t["embed.W"]
    return (dx[0] if cache.squeeze else dx), grads


def predict(config: MlpConfig, params: ParamVector, x) -> np.ndarray:
    return forward(config, params, x)[0]
