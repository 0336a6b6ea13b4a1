"""The prototype-conditioned denoiser: bank + assignment network + U-Net.

Conditioning is realized as one augmented row set [P; p_u] shared by every
attention layer. Per batch element, boolean active flags select which rows
participate: the prototype rows with positive assignment weight (their raw
weights becoming additive attention logits), or only the learnable
unconditional row when the condition is dropped or empty.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .. import ndnum as nd
from ..ndnum import Tensor
from .attention import CondBatch
from .layers import Linear, Module
from .pam import AssignmentNet
from .prototypes import PrototypeBank, init_prototypes
from .unet import UNet, required_padding


@dataclass
class AssignmentMask:
    """Raw per-prototype weights; a prototype is active iff its weight > 0."""

    weights: np.ndarray

    @property
    def active(self) -> np.ndarray:
        return self.weights > 0

    @property
    def n_active(self) -> int:
        return int(self.active.sum())


@dataclass
class UncondToken:
    """Marker carrying the learnable vector used when conditioning is dropped."""

    p_u: Tensor


def drop_condition(mask: AssignmentMask, p_drop: float, rng: np.random.Generator,
                   token: UncondToken):
    """With probability p_drop, replace the assignment mask by the token."""
    if not 0.0 <= p_drop < 1.0:
        raise ValueError(f"p_drop must be in [0, 1), got {p_drop}")
    if rng.random() < p_drop:
        return token
    return mask


@dataclass
class ModelConfig:
    length: int
    n_prototypes: int = 16
    embed_dim: int = 64
    base_channels: int = 32
    channel_mults: tuple = (1, 2, 2, 4)
    heads: int = 8
    pam_hidden: int = 32
    pam_kernel: int = 3
    mask_mode: str = "additive"  # "additive" (Eq-style logits) or "gate" (binary)
    no_pam: bool = False         # ablation: condition on projected raw weights
    auto_pad: bool = True
    seed: int = 0

    def __post_init__(self):
        self.channel_mults = tuple(self.channel_mults)
        if self.mask_mode not in ("additive", "gate"):
            raise ValueError(f"unknown mask_mode {self.mask_mode!r}")
        if self.embed_dim % self.heads != 0:
            raise ValueError("embed_dim must be divisible by heads")


class DenoiserModel(Module):
    def __init__(self, cfg: ModelConfig):
        bank = init_prototypes(cfg.n_prototypes, cfg.embed_dim, cfg.seed)
        rng = np.random.default_rng(cfg.seed + 1)
        self.cfg = cfg
        self.bank = bank
        self._bank_rows = Tensor(bank.P)  # frozen: requires_grad stays False
        self.p_u = Tensor(
            (rng.standard_normal(cfg.embed_dim) / np.sqrt(cfg.embed_dim)).astype(np.float32),
            requires_grad=True,
        )
        self.pam = AssignmentNet(rng, cfg.length, cfg.n_prototypes,
                                 cfg.pam_hidden, cfg.pam_kernel)
        self.unet = UNet(rng, cfg.embed_dim, cfg.base_channels,
                         cfg.channel_mults, cfg.heads)
        self.nopam_proj = Linear(rng, cfg.n_prototypes, cfg.embed_dim) if cfg.no_pam else None

    # -- parameters ---------------------------------------------------------

    def param_dict(self) -> dict[str, Tensor]:
        return dict(self.named_params())

    @property
    def uncond_token(self) -> UncondToken:
        return UncondToken(self.p_u)

    # -- assignment (PAM) ---------------------------------------------------

    def assign_raw(self, x0) -> Tensor:
        """Raw assignment weights for a batch of clean windows [B, T]."""
        x0 = x0 if isinstance(x0, Tensor) else Tensor(np.asarray(x0, dtype=np.float32))
        return self.pam(x0)

    def assign(self, x0: np.ndarray) -> AssignmentMask:
        """Assignment mask for a single clean window of length T."""
        x0 = np.asarray(x0, dtype=np.float32)
        if x0.ndim != 1 or x0.shape[0] != self.cfg.length:
            raise nd.ShapeError(
                f"assign expects a window of length {self.cfg.length}, got shape {x0.shape}"
            )
        w = self.assign_raw(x0[None, :]).data[0]
        return AssignmentMask(weights=w.copy())

    # -- conditioning construction -------------------------------------------

    def _augmented_rows(self) -> Tensor:
        return nd.concat([self._bank_rows, self.p_u.reshape((1, self.cfg.embed_dim))], axis=0)

    def build_condition(self, weights, dropped: np.ndarray | None = None) -> CondBatch:
        """Conditioning over [P; p_u] rows from raw weights [B, N_p].

        dropped marks elements whose condition is replaced by the
        unconditional row; elements with no positive weight are routed there
        as well (degenerate masks are meaningless to attend over).
        """
        w = weights if isinstance(weights, Tensor) else Tensor(np.asarray(weights, dtype=np.float32))
        b, n_p = w.shape
        if n_p != self.cfg.n_prototypes:
            raise nd.ShapeError(f"weights have {n_p} columns, bank has {self.cfg.n_prototypes}")
        if dropped is None:
            dropped = np.zeros(b, dtype=bool)
        active = np.zeros((b, n_p + 1), dtype=bool)
        keep = ~dropped & (w.data > 0).any(axis=1)
        active[keep, :n_p] = w.data[keep] > 0
        active[~keep, n_p] = True
        bias = None
        if self.cfg.mask_mode == "additive":
            bias = nd.concat([w, Tensor(np.zeros((b, 1), dtype=np.float32))], axis=1)
        return CondBatch(rows=self._augmented_rows(), bias=bias, active=active)

    def uncond_condition(self, batch: int) -> CondBatch:
        return self.build_condition(
            np.zeros((batch, self.cfg.n_prototypes), dtype=np.float32),
            dropped=np.ones(batch, dtype=bool),
        )

    def condition_from_masks(self, items) -> CondBatch:
        """Build conditioning from AssignmentMask / UncondToken per element."""
        b = len(items)
        weights = np.zeros((b, self.cfg.n_prototypes), dtype=np.float32)
        dropped = np.zeros(b, dtype=bool)
        for i, item in enumerate(items):
            if isinstance(item, UncondToken):
                dropped[i] = True
            else:
                if item.n_active == 0:
                    raise ValueError(f"prompt mask {i} has no active prototype")
                weights[i] = item.weights
        if self.cfg.no_pam:
            return self._nopam_condition_from_weights(Tensor(weights), dropped)
        return self.build_condition(weights, dropped)

    def _nopam_condition_from_weights(self, weights: Tensor,
                                      dropped: np.ndarray) -> CondBatch:
        if self.nopam_proj is None:
            raise ValueError("model was not built with no_pam ablation enabled")
        b = weights.shape[0]
        keep = (~dropped).astype(np.float32)[:, None]
        row = self.nopam_proj(weights)                     # [B, d]
        row = nd.add(nd.mul(row, keep),
                     nd.mul(self.p_u.reshape((1, self.cfg.embed_dim)), 1.0 - keep))
        rows = row.reshape((b, 1, self.cfg.embed_dim))
        return CondBatch(rows=rows, bias=None, active=np.ones((b, 1), dtype=bool))

    def nopam_condition(self, x0, dropped: np.ndarray | None = None) -> CondBatch:
        """Ablation conditioning: raw weights projected to one row per element."""
        w = self.assign_raw(x0)
        if dropped is None:
            dropped = np.zeros(w.shape[0], dtype=bool)
        return self._nopam_condition_from_weights(w, dropped)

    # -- denoising ------------------------------------------------------------

    def denoise(self, x_n, n, cond: CondBatch) -> Tensor:
        """Predict the injected noise for x_n at step n.

        x_n: [B, T] (numpy or Tensor); n: int or [B] ints; output [B, T].
        """
        x = x_n if isinstance(x_n, Tensor) else Tensor(np.asarray(x_n, dtype=np.float32))
        if x.ndim != 2:
            raise nd.ShapeError(f"denoise expects [B, T], got {x.shape}")
        b, length = x.shape
        n = np.full(b, n, dtype=np.int64) if np.isscalar(n) else np.asarray(n, dtype=np.int64)
        if np.any(n < 1):
            raise ValueError("step indices must be >= 1")
        pad = required_padding(length)
        if pad and not self.cfg.auto_pad:
            raise nd.ShapeError(
                f"length {length} requires right-padding by {pad} to a multiple of 16 "
                f"(auto_pad disabled)"
            )
        h = x.reshape((b, 1, length))
        if pad:
            h = nd.pad_end(h, pad)
        out = self.unet(h, n, cond)
        if pad:
            out = nd.crop_end(out, length)
        return out.reshape((b, length))

    # -- persistence ------------------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        arrays = {"prototypes.P": self.bank.P}
        for name, t in self.named_params():
            arrays[name] = t.data
        return arrays

    def config_echo(self) -> dict:
        return asdict(self.cfg)

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        bank = arrays["prototypes.P"]
        if bank.shape != self.bank.P.shape:
            raise ValueError(f"bank shape {bank.shape} != {self.bank.P.shape}")
        self.bank.P[...] = bank
        self._bank_rows.data[...] = bank
        own = dict(self.named_params())
        missing = set(own) ^ (set(arrays) - {"prototypes.P"})
        if missing:
            raise ValueError(f"checkpoint parameter paths do not match: {sorted(missing)}")
        for name, t in own.items():
            if arrays[name].shape != t.data.shape:
                raise ValueError(f"shape mismatch for {name}")
            t.data[...] = arrays[name]


def build_model(cfg: ModelConfig) -> DenoiserModel:
    return DenoiserModel(cfg)


def load_model(path):
    """Rebuild a model from a checkpoint; returns (model, full config echo)."""
    from .checkpoint import load_checkpoint

    config, arrays = load_checkpoint(path)
    cfg = ModelConfig(**config["model"])
    model = DenoiserModel(cfg)
    model.load_state(arrays)
    return model, config
