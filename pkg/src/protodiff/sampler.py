"""Generation: domain prompts from few-shot windows and the reverse chain.

A domain prompt is the list of assignment masks extracted from K shots; when
more samples are requested than K, masks are reused round-robin (sample t
gets mask t mod K). Every chain owns an rng stream derived from
(seed, sample index), so batched and serial runs produce identical output.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .protonet import AssignmentMask, DenoiserModel
from .schedule import NoiseSchedule, ddpm_step, x0_form_step

VARIANTS = ("ddpm", "alg2")


@dataclass
class DomainPrompt:
    """K assignment masks extracted from shots of one (possibly unseen) domain."""

    masks: list[AssignmentMask]
    source: str = ""

    @property
    def K(self) -> int:
        return len(self.masks)


def build_domain_prompt(shots: np.ndarray, model: DenoiserModel,
                        source: str = "") -> DomainPrompt:
    """Extract one mask per shot ([K, T]); order is preserved."""
    shots = np.asarray(shots, dtype=np.float32)
    if shots.ndim != 2 or shots.shape[0] < 1:
        raise ValueError(f"shots must be [K, T] with K >= 1, got {shots.shape}")
    masks = []
    for idx, shot in enumerate(shots):
        mask = model.assign(shot)
        if mask.n_active == 0:
            raise ValueError(f"shot {idx} yields an all-inactive assignment mask")
        masks.append(mask)
    return DomainPrompt(masks=masks, source=source)


def prompt_usage_counts(count: int, k: int) -> list[int]:
    """How often each of the K masks is used for ``count`` samples."""
    return [len(range(j, count, k)) for j in range(k)]


def _run_chain(model: DenoiserModel, sched: NoiseSchedule, cond, count: int,
               seed: int, variant: str) -> np.ndarray:
    if variant not in VARIANTS:
        raise ValueError(f"unknown sampler variant {variant!r}")
    T = model.cfg.length
    rngs = [np.random.default_rng([seed, i]) for i in range(count)]
    x = np.stack([r.standard_normal(T) for r in rngs])
    for n in range(sched.N, 0, -1):
        eps_hat = model.denoise(x.astype(np.float32), n, cond).data.astype(np.float64)
        if variant == "ddpm":
            if n > 1:
                z = np.stack([r.standard_normal(T) for r in rngs])
            else:
                z = np.zeros_like(x)
            x = ddpm_step(x, eps_hat, n, z, sched)
        else:
            x = x0_form_step(x, eps_hat, n, sched)
        if not np.all(np.isfinite(x)):
            raise FloatingPointError(f"non-finite chain state at step n={n}")
    return x.astype(np.float32)


def generate(prompt: DomainPrompt, count: int, model: DenoiserModel,
             sched: NoiseSchedule, seed: int = 0, variant: str = "ddpm") -> np.ndarray:
    """Draw ``count`` samples conditioned round-robin on the prompt masks."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    items = [prompt.masks[t % prompt.K] for t in range(count)]
    cond = model.condition_from_masks(items)
    return _run_chain(model, sched, cond, count, seed, variant)


def generate_unconditional(count: int, model: DenoiserModel, sched: NoiseSchedule,
                           seed: int = 0, variant: str = "ddpm") -> np.ndarray:
    """Draw samples with the unconditional token as the only condition."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    cond = model.uncond_condition(count)
    return _run_chain(model, sched, cond, count, seed, variant)


def generate_one_hot(prototype: int, count: int, model: DenoiserModel,
                     sched: NoiseSchedule, seed: int = 0, weight: float = 1.0,
                     variant: str = "ddpm") -> np.ndarray:
    """Condition every sample on exactly one prototype (inspection aid)."""
    w = np.zeros(model.cfg.n_prototypes, dtype=np.float32)
    w[prototype] = weight
    prompt = DomainPrompt(masks=[AssignmentMask(weights=w)],
                          source=f"one-hot:{prototype}")
    return generate(prompt, count, model, sched, seed=seed, variant=variant)
