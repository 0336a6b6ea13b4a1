"""Domain-balanced training of the conditioned denoiser.

Each step: draw a balanced batch, extract assignment masks from the clean
windows, randomly drop conditions to the unconditional token, corrupt with
per-element random steps and noise, and minimize the mean squared error
between injected and predicted noise. The prototype bank never receives
updates.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import ndnum as nd
from .dataio import DomainCorpus, NormStats
from .ndnum import Tape, Tensor
from .protonet import DenoiserModel, save_checkpoint
from .schedule import NoiseSchedule, corrupt_batch


@dataclass
class TrainConfig:
    steps: int = 50_000
    batch_size: int = 128
    lr: float = 1e-4
    warmup: int = 1000
    p_drop: float = 0.1
    seed: int = 0
    checkpoint_every: int = 0  # 0: final checkpoint only
    no_prompt: bool = False    # ablation: train fully unconditional

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.batch_size < 1 or self.lr <= 0:
            raise ValueError("batch_size and lr must be positive")
        if not 0 <= self.p_drop < 1:
            raise ValueError(f"p_drop must be in [0, 1), got {self.p_drop}")
        if self.warmup < 0 or (self.steps > 0 and self.warmup > self.steps):
            raise ValueError("warmup must be in [0, steps]")


def balanced_sample(corpus: DomainCorpus, batch_size: int, rng: np.random.Generator):
    """Pick a domain uniformly, then a window uniformly within it.

    This is the distribution induced by per-sample weights 1/(N_i * |D|):
    each domain carries total probability 1/|D| regardless of its size.
    Returns (windows [B, T], domain_ids [B]).
    """
    names = corpus.domains
    for name in names:
        if corpus.windows[name].shape[0] == 0:
            raise ValueError(f"domain {name!r} is empty")
    ids = rng.integers(0, len(names), size=batch_size)
    rows = np.empty((batch_size, corpus.length), dtype=np.float32)
    for i, d in enumerate(ids):
        w = corpus.windows[names[d]]
        rows[i] = w[rng.integers(0, w.shape[0])]
    return rows, ids


def sample_weights(corpus: DomainCorpus) -> dict[str, float]:
    """The per-sample weights w_i = 1/(N_i * |D|) the balanced sampler realizes."""
    m = len(corpus.domains)
    return {d: 1.0 / (n * m) for d, n in corpus.counts.items()}


class Adam:
    """Adam with linear warmup from 0 to lr over ``warmup`` steps."""

    def __init__(self, params: dict[str, Tensor], lr: float, warmup: int = 0,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.warmup = warmup
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self._m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self._v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def current_lr(self) -> float:
        if self.warmup > 0 and self.t < self.warmup:
            return self.lr * (self.t + 1) / self.warmup
        return self.lr

    def step(self, grads: nd.GradMap) -> None:
        lr_t = self.current_lr()
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for k, p in self.params.items():
            g = grads.get(p)
            m = self._m[k]
            v = self._v[k]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p.data -= lr_t * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def diffusion_loss(denoise_fn, x0: np.ndarray, n: np.ndarray, eps: np.ndarray,
                   cond, sched: NoiseSchedule) -> Tensor:
    """Mean squared error between injected and predicted noise."""
    x_n = corrupt_batch(x0, n, eps, sched).astype(np.float32)
    eps_hat = denoise_fn(x_n, n, cond)
    diff = nd.sub(eps_hat, Tensor(eps.astype(np.float32)))
    return nd.mul(diff, diff).mean()


def _build_condition(model: DenoiserModel, x0: np.ndarray, p_drop: float,
                     rng: np.random.Generator, no_prompt: bool):
    b = x0.shape[0]
    if no_prompt:
        return model.uncond_condition(b)
    dropped = rng.random(b) < p_drop
    if model.cfg.no_pam:
        return model.nopam_condition(x0, dropped)
    weights = model.assign_raw(x0)
    return model.build_condition(weights, dropped)


def train_step(batch: np.ndarray, model: DenoiserModel, sched: NoiseSchedule,
               opt: Adam, rng: np.random.Generator, p_drop: float = 0.1,
               no_prompt: bool = False, step: int = 0) -> float:
    """One optimization step on a batch of clean windows [B, T]."""
    b = batch.shape[0]
    with Tape() as tape:
        cond = _build_condition(model, batch, p_drop, rng, no_prompt)
        n = rng.integers(1, sched.N + 1, size=b)
        eps = rng.standard_normal(batch.shape)
        loss = diffusion_loss(model.denoise, batch, n, eps, cond, sched)
    val = float(loss.data)
    if not np.isfinite(val):
        raise FloatingPointError(
            f"non-finite loss {val} at step {step} (n values {np.unique(n)})"
        )
    opt.step(tape.backward(loss))
    return val


@dataclass
class TrainResult:
    checkpoint_path: Path | None
    losses: list = field(default_factory=list)
    arrays: dict | None = None
    config: dict | None = None


def train(corpus: DomainCorpus, model: DenoiserModel, sched: NoiseSchedule,
          tcfg: TrainConfig, out_dir=None, norm_stats: NormStats | None = None,
          schedule_cfg: dict | None = None, log_every: int = 100,
          progress=None) -> TrainResult:
    """Run the full loop; writes the loss CSV and checkpoints under out_dir."""
    rng = np.random.default_rng(tcfg.seed)
    opt = Adam(model.param_dict(), tcfg.lr, warmup=tcfg.warmup)
    config = {
        "model": model.config_echo(),
        "schedule": schedule_cfg or {"kind": "linear", "steps": sched.N},
        "train": asdict(tcfg),
        "domains": corpus.domains,
        "norm_stats": norm_stats.to_dict() if norm_stats else None,
    }
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    losses = []
    t0 = time.time()
    for step in range(tcfg.steps):
        batch, _ids = balanced_sample(corpus, tcfg.batch_size, rng)
        val = train_step(batch, model, sched, opt, rng, tcfg.p_drop,
                         tcfg.no_prompt, step)
        losses.append((step, val))
        if progress and (step + 1) % log_every == 0:
            progress(f"step {step + 1}/{tcfg.steps} loss {val:.4f} "
                     f"({(time.time() - t0) / (step + 1) * 1000:.0f} ms/step)")
        if (out_dir is not None and tcfg.checkpoint_every
                and (step + 1) % tcfg.checkpoint_every == 0
                and step + 1 < tcfg.steps):
            save_checkpoint(out_dir / f"checkpoint_{step + 1:06d}.bin",
                            model.state_arrays(), config)
    ckpt_path = None
    if out_dir is not None:
        ckpt_path = out_dir / "checkpoint.bin"
        save_checkpoint(ckpt_path, model.state_arrays(), config)
        with open(out_dir / "loss.csv", "w") as f:
            f.write("step,loss\n")
            for step, val in losses:
                f.write(f"{step},{val:.8g}\n")
    return TrainResult(checkpoint_path=ckpt_path, losses=losses,
                       arrays=model.state_arrays(), config=config)
