"""Prototype bank, assignment network, and the conditioned U-Net denoiser."""
from .attention import CondBatch, CrossAttentionBlock, masked_cross_attention
from .checkpoint import checkpoint_hash, load_checkpoint, save_checkpoint
from .model import (
    AssignmentMask,
    DenoiserModel,
    ModelConfig,
    UncondToken,
    build_model,
    drop_condition,
)
from .prototypes import PrototypeBank, init_prototypes
from .unet import required_padding

__all__ = [
    "AssignmentMask",
    "CondBatch",
    "CrossAttentionBlock",
    "DenoiserModel",
    "ModelConfig",
    "PrototypeBank",
    "UncondToken",
    "build_model",
    "checkpoint_hash",
    "drop_condition",
    "init_prototypes",
    "load_checkpoint",
    "masked_cross_attention",
    "required_padding",
    "save_checkpoint",
]
