"""Parameterized layers built on the ndnum primitives.

Layers hold their parameter tensors directly; ``Module.named_params`` walks
attributes (and lists of sub-modules) to produce the flat, ordered parameter
paths used by the optimizer and the checkpoint format.
"""
from __future__ import annotations

import numpy as np

from .. import ndnum as nd
from ..ndnum import Tensor


class Module:
    def named_params(self, prefix: str = ""):
        for name, val in vars(self).items():
            key = f"{prefix}.{name}" if prefix else name
            if isinstance(val, Tensor):
                if val.requires_grad:
                    yield key, val
            elif isinstance(val, Module):
                yield from val.named_params(key)
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_params(f"{key}{i}")


def _init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    return (rng.standard_normal(shape) / np.sqrt(fan_in)).astype(np.float32)


class Conv1d(Module):
    def __init__(self, rng, ci: int, co: int, k: int, stride: int = 1,
                 padding: int = 0):
        self.stride = stride
        self.padding = padding
        self.w = Tensor(_init(rng, (co, ci, k), ci * k), requires_grad=True)
        self.b = Tensor(np.zeros(co, dtype=np.float32), requires_grad=True)

    def __call__(self, x):
        return nd.conv1d(x, self.w, self.b, stride=self.stride, padding=self.padding)


class ConvTranspose1d(Module):
    def __init__(self, rng, ci: int, co: int, k: int, stride: int = 1, padding: int = 0):
        self.stride = stride
        self.padding = padding
        self.w = Tensor(_init(rng, (ci, co, k), ci * k), requires_grad=True)
        self.b = Tensor(np.zeros(co, dtype=np.float32), requires_grad=True)

    def __call__(self, x):
        return nd.conv_transpose1d(x, self.w, self.b, stride=self.stride, padding=self.padding)


class Linear(Module):
    def __init__(self, rng, fi: int, fo: int, bias: bool = True):
        self.w = Tensor(_init(rng, (fi, fo), fi), requires_grad=True)
        self.b = Tensor(np.zeros(fo, dtype=np.float32), requires_grad=True) if bias else None

    def __call__(self, x):
        y = nd.matmul(x, self.w)
        if self.b is not None:
            y = nd.add(y, self.b)
        return y


def sinusoidal_embedding(n: np.ndarray, dim: int) -> np.ndarray:
    """Standard sin/cos timestep features for integer steps n (shape [B])."""
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half - 1, 1))
    args = np.asarray(n, dtype=np.float64)[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(args), np.cos(args)], axis=1)
    return emb.astype(np.float32)


class TimeEmbedding(Module):
    """Sinusoidal features followed by a two-layer MLP."""

    def __init__(self, rng, sin_dim: int, out_dim: int):
        self.sin_dim = sin_dim
        self.fc1 = Linear(rng, sin_dim, out_dim)
        self.fc2 = Linear(rng, out_dim, out_dim)

    def __call__(self, n: np.ndarray):
        emb = Tensor(sinusoidal_embedding(n, self.sin_dim))
        return self.fc2(nd.silu(self.fc1(emb)))


class ResBlock(Module):
    """Two 1-D convolutions with the timestep feature added as a per-channel bias."""

    def __init__(self, rng, ci: int, co: int, time_dim: int):
        self.conv1 = Conv1d(rng, ci, co, 3, padding=1)
        self.conv2 = Conv1d(rng, co, co, 3, padding=1)
        self.time_proj = Linear(rng, time_dim, co)
        self.skip = Conv1d(rng, ci, co, 1) if ci != co else None

    def __call__(self, x, t_feat):
        h = self.conv1(x)
        bias = self.time_proj(t_feat)
        h = nd.add(h, bias.reshape((bias.shape[0], bias.shape[1], 1)))
        h = self.conv2(nd.silu(h))
        res = self.skip(x) if self.skip is not None else x
        return nd.add(res, h)
