"""Prototype assignment network: maps a clean window to per-prototype weights.

Two conv layers as feature extractor, two more with a residual connection as
assignment generator, then a linear projection to one raw weight per
prototype. ReLU activations throughout.
"""
from __future__ import annotations

import numpy as np

from .. import ndnum as nd
from ..ndnum import Tensor
from .layers import Conv1d, Linear, Module


class AssignmentNet(Module):
    def __init__(self, rng, length: int, n_prototypes: int, hidden: int = 32,
                 kernel: int = 3):
        pad = kernel // 2
        self.length = length
        self.feat1 = Conv1d(rng, 1, hidden, kernel, padding=pad)
        self.feat2 = Conv1d(rng, hidden, hidden, kernel, padding=pad)
        self.gen1 = Conv1d(rng, hidden, hidden, kernel, padding=pad)
        self.gen2 = Conv1d(rng, hidden, hidden, kernel, padding=pad)
        self.proj = Linear(rng, hidden * length, n_prototypes)

    def __call__(self, x0: Tensor) -> Tensor:
        """x0: [B, T] clean windows -> raw weights [B, n_prototypes]."""
        if x0.ndim != 2 or x0.shape[1] != self.length:
            raise nd.ShapeError(
                f"assignment input must be [B, {self.length}], got {x0.shape}"
            )
        b = x0.shape[0]
        h = x0.reshape((b, 1, self.length))
        f = nd.relu(self.feat1(h))
        f = nd.relu(self.feat2(f))
        g = nd.add(f, self.gen2(nd.relu(self.gen1(f))))
        g = nd.relu(g)
        flat = g.reshape((b, int(np.prod(g.shape[1:]))))
        return self.proj(flat)
