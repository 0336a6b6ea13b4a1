"""Masked multi-head cross-attention from sequence positions onto condition rows.

Attention probabilities are computed only over active rows: inactive rows are
excluded from the softmax max/sum entirely, so they contribute exactly zero
probability and mutating their vectors can never change the output.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import ndnum as nd
from ..ndnum import Tensor
from .layers import Conv1d, Linear, Module


@dataclass
class CondBatch:
    """Per-batch conditioning: rows attended over, additive bias, active flags.

    rows:   [R, d] (shared) or [B, R, d] (per element)
    bias:   [B, R] additive attention logits, or None for pure gating
    active: [B, R] boolean; every row must have at least one True
    """

    rows: Tensor
    bias: Tensor | None
    active: np.ndarray

    def __post_init__(self):
        if not np.all(self.active.any(axis=-1)):
            raise ValueError(
                "conditioning has elements with zero active prototypes and no "
                "unconditional fallback"
            )


def _split_heads(t: Tensor, heads: int) -> Tensor:
    if t.ndim == 2:  # [R, d] -> [H, R, dh]
        r, d = t.shape
        return t.reshape((r, heads, d // heads)).transpose((1, 0, 2))
    b, r, d = t.shape  # [B, R, d] -> [B, H, R, dh]
    return t.reshape((b, r, heads, d // heads)).transpose((0, 2, 1, 3))


def masked_cross_attention(z: Tensor, cond: CondBatch, wq: Tensor, wk: Tensor,
                           wv: Tensor, ff, heads: int) -> Tensor:
    """softmax(QK^T/sqrt(dh) + bias) V over active rows, then the feed-forward.

    z: [B, L, d] position activations. Returns [B, L, d].
    """
    d = z.shape[-1]
    if d % heads != 0:
        raise nd.ShapeError(f"width {d} not divisible by {heads} heads")
    dh = d // heads
    q = _split_heads(nd.matmul(z, wq), heads)          # [B, H, L, dh]
    k = _split_heads(nd.matmul(cond.rows, wk), heads)  # [(B,) H, R, dh]
    v = _split_heads(nd.matmul(cond.rows, wv), heads)
    kt = k.transpose((0, 2, 1)) if k.ndim == 3 else k.transpose((0, 1, 3, 2))
    scores = nd.mul(nd.matmul(q, kt), 1.0 / np.sqrt(dh))  # [B, H, L, R]
    bias = None
    if cond.bias is not None:
        b, r = cond.bias.shape
        bias = cond.bias.reshape((b, 1, 1, r))
    active = cond.active[:, None, None, :]
    probs = nd.softmax(scores, axis=-1, bias=bias, active=active)
    out = nd.matmul(probs, v)                           # [B, H, L, dh]
    b, _, length, _ = out.shape
    out = out.transpose((0, 2, 1, 3)).reshape((b, length, d))
    return ff(out)


class FeedForward(Module):
    def __init__(self, rng, d: int, mult: int = 2):
        self.fc1 = Linear(rng, d, d * mult)
        self.fc2 = Linear(rng, d * mult, d)

    def __call__(self, x):
        return self.fc2(nd.silu(self.fc1(x)))


class CrossAttentionBlock(Module):
    """1-D conv in/out projections around masked cross-attention, residual."""

    def __init__(self, rng, channels: int, d: int, heads: int):
        self.heads = heads
        self.proj_in = Conv1d(rng, channels, d, 1)
        self.wq = Tensor((rng.standard_normal((d, d)) / np.sqrt(d)).astype(np.float32),
                         requires_grad=True)
        self.wk = Tensor((rng.standard_normal((d, d)) / np.sqrt(d)).astype(np.float32),
                         requires_grad=True)
        self.wv = Tensor((rng.standard_normal((d, d)) / np.sqrt(d)).astype(np.float32),
                         requires_grad=True)
        self.ff = FeedForward(rng, d)
        self.proj_out = Conv1d(rng, d, channels, 1)

    def __call__(self, x, cond: CondBatch):
        z = self.proj_in(x).transpose((0, 2, 1))  # [B, L, d]
        z = masked_cross_attention(z, cond, self.wq, self.wk, self.wv, self.ff, self.heads)
        return nd.add(x, self.proj_out(z.transpose((0, 2, 1))))
