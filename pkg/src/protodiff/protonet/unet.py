"""1-D U-Net noise predictor with cross-attention conditioning.

Four down/up levels, each with two residual blocks and one cross-attention
block; stride-2 convs downsample, transposed convs upsample; a middle block
(res, attention, res) sits at the bottom. Single input and output convs.
Lengths must be divisible by 16 after the padding policy.
"""
from __future__ import annotations

import numpy as np

from .. import ndnum as nd
from ..ndnum import Tensor
from .attention import CondBatch, CrossAttentionBlock
from .layers import Conv1d, ConvTranspose1d, Module, ResBlock, TimeEmbedding

DOWN_FACTOR = 16  # 2 ** number of sampling levels


def required_padding(length: int) -> int:
    """Right zero-padding needed to reach a multiple of the down factor."""
    if length < 1:
        raise ValueError(f"sequence length must be positive, got {length}")
    rem = length % DOWN_FACTOR
    return 0 if rem == 0 else DOWN_FACTOR - rem


class _DownLevel(Module):
    def __init__(self, rng, ci, co, d, heads, time_dim):
        self.res1 = ResBlock(rng, ci, co, time_dim)
        self.res2 = ResBlock(rng, co, co, time_dim)
        self.attn = CrossAttentionBlock(rng, co, d, heads)
        self.down = Conv1d(rng, co, co, 3, stride=2, padding=1)


class _UpLevel(Module):
    def __init__(self, rng, ci, skip_ch, co, d, heads, time_dim):
        self.up = ConvTranspose1d(rng, ci, ci, 4, stride=2, padding=1)
        self.res1 = ResBlock(rng, ci + skip_ch, co, time_dim)
        self.res2 = ResBlock(rng, co, co, time_dim)
        self.attn = CrossAttentionBlock(rng, co, d, heads)


class _MidBlock(Module):
    def __init__(self, rng, ch, d, heads, time_dim):
        self.res1 = ResBlock(rng, ch, ch, time_dim)
        self.attn = CrossAttentionBlock(rng, ch, d, heads)
        self.res2 = ResBlock(rng, ch, ch, time_dim)


class UNet(Module):
    def __init__(self, rng, d: int = 64, base_channels: int = 32,
                 channel_mults=(1, 2, 2, 4), heads: int = 8):
        if 2 ** len(channel_mults) != DOWN_FACTOR:
            raise ValueError(f"expected {int(np.log2(DOWN_FACTOR))} levels, got {len(channel_mults)}")
        time_dim = base_channels * 4
        chs = [base_channels * m for m in channel_mults]
        ins = [base_channels] + chs[:-1]
        self.time = TimeEmbedding(rng, d, time_dim)
        self.conv_in = Conv1d(rng, 1, base_channels, 3, padding=1)
        self.down = [
            _DownLevel(rng, ci, co, d, heads, time_dim) for ci, co in zip(ins, chs)
        ]
        self.mid = _MidBlock(rng, chs[-1], d, heads, time_dim)
        self.up = [
            _UpLevel(rng, cur, skip, out, d, heads, time_dim)
            for cur, skip, out in zip(
                [chs[-1]] + ins[::-1][:-1], chs[::-1], ins[::-1]
            )
        ]
        self.conv_out = Conv1d(rng, base_channels, 1, 3, padding=1)

    def __call__(self, x: Tensor, n: np.ndarray, cond: CondBatch) -> Tensor:
        """x: [B, 1, L] with L divisible by 16; n: [B] step indices."""
        if x.shape[2] % DOWN_FACTOR != 0:
            raise nd.ShapeError(
                f"length {x.shape[2]} requires right-padding by "
                f"{required_padding(x.shape[2])} to a multiple of {DOWN_FACTOR}"
            )
        t = self.time(n)
        h = self.conv_in(x)
        skips = []
        for lvl in self.down:
            h = lvl.res1(h, t)
            h = lvl.res2(h, t)
            h = lvl.attn(h, cond)
            skips.append(h)
            h = lvl.down(h)
        h = self.mid.res1(h, t)
        h = self.mid.attn(h, cond)
        h = self.mid.res2(h, t)
        for lvl, skip in zip(self.up, reversed(skips)):
            h = lvl.up(h)
            h = nd.concat([h, skip], axis=1)
            h = lvl.res1(h, t)
            h = lvl.res2(h, t)
            h = lvl.attn(h, cond)
        return self.conv_out(h)
