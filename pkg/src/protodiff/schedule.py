"""Noise-schedule construction and closed-form diffusion math.

Step indices are 1-based (n in 1..N); array storage is 0-based, so the
coefficients of step n live at index n-1. All schedule coefficients are kept
in float64; outputs take numpy's promoted dtype, and callers cast to float32
where the network needs it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step beta/alpha/alpha_bar/sigma arrays for an N-step process."""

    N: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    sigma: np.ndarray

    def _check_step(self, n: int) -> int:
        if not 1 <= n <= self.N:
            raise ValueError(f"step index {n} out of range 1..{self.N}")
        return n - 1


def make_schedule(kind: str, N: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    """Build a variance schedule. Only the linear ramp is supported."""
    if kind != "linear":
        raise ValueError(f"unknown schedule kind {kind!r}")
    if N < 1:
        raise ValueError(f"schedule needs N >= 1, got {N}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(
            f"betas must satisfy 0 < start <= end < 1, got ({beta_start}, {beta_end})"
        )
    beta = np.linspace(beta_start, beta_end, N, dtype=np.float64)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    sigma = np.sqrt(beta)
    return NoiseSchedule(N=N, beta=beta, alpha=alpha, alpha_bar=alpha_bar, sigma=sigma)


def corrupt(x0: np.ndarray, n: int, eps: np.ndarray, s: NoiseSchedule) -> np.ndarray:
    """Closed-form forward corruption: sqrt(abar_n) x0 + sqrt(1 - abar_n) eps."""
    i = s._check_step(n)
    x0 = np.asarray(x0)
    eps = np.asarray(eps)
    if x0.shape != eps.shape:
        raise ValueError(f"corrupt: eps shape {eps.shape} != x0 shape {x0.shape}")
    ab = s.alpha_bar[i]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def corrupt_batch(x0: np.ndarray, n: np.ndarray, eps: np.ndarray, s: NoiseSchedule) -> np.ndarray:
    """Vectorized corrupt with a per-row step index (n: [B] of ints in 1..N)."""
    n = np.asarray(n)
    if np.any((n < 1) | (n > s.N)):
        raise ValueError(f"step indices out of range 1..{s.N}")
    ab = s.alpha_bar[n - 1].reshape(-1, *([1] * (x0.ndim - 1)))
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def ddpm_step(x_n: np.ndarray, eps_hat: np.ndarray, n: int, z, s: NoiseSchedule) -> np.ndarray:
    """One ancestral reverse step:

    x_{n-1} = (x_n - (1-alpha_n)/sqrt(1-abar_n) * eps_hat) / sqrt(alpha_n) + sigma_n z
    """
    i = s._check_step(n)
    a = s.alpha[i]
    ab = s.alpha_bar[i]
    if z is None:
        z = 0.0
    if n == 1 and np.any(np.asarray(z) != 0.0):
        raise ValueError("ddpm_step: z must be zero at the final step n=1")
    mean = (x_n - (1.0 - a) / np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(a)
    return mean + s.sigma[i] * z


def x0_form_step(x_n: np.ndarray, eps_hat: np.ndarray, n: int, s: NoiseSchedule) -> np.ndarray:
    """Reverse-step variant that inverts the closed-form corruption directly:

    x_{n-1} = (x_n - sqrt(1-abar_n) * eps_hat) / sqrt(abar_n)

    Kept as a selectable sampler variant; it is not the ancestral posterior
    step and the two generally disagree.
    """
    i = s._check_step(n)
    ab = s.alpha_bar[i]
    return (x_n - np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(ab)


def true_noise(x_n: np.ndarray, x0: np.ndarray, n: int, s: NoiseSchedule) -> np.ndarray:
    """The exact noise that maps x0 to x_n: eps = (x_n - sqrt(abar) x0) / sqrt(1-abar)."""
    i = s._check_step(n)
    ab = s.alpha_bar[i]
    return (x_n - np.sqrt(ab) * x0) / np.sqrt(1.0 - ab)
