"""Two-sample distribution distances between real and synthetic sample sets.

All three statistics operate on [M, T] float arrays, are zero on identical
sets, and are invariant to row order. They are computed in whatever space the
inputs live in; compare like with like (normalized vs normalized).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _validate(real: np.ndarray, synth: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    real = np.asarray(real, dtype=np.float64)
    synth = np.asarray(synth, dtype=np.float64)
    if real.ndim != 2 or synth.ndim != 2:
        raise ValueError("sample sets must be 2-D [M, T]")
    if real.shape[0] == 0 or synth.shape[0] == 0:
        raise ValueError("sample sets must be non-empty")
    if real.shape[1] != synth.shape[1]:
        raise ValueError(
            f"sample sets disagree on T: {real.shape[1]} vs {synth.shape[1]}"
        )
    if not (np.all(np.isfinite(real)) and np.all(np.isfinite(synth))):
        raise ValueError("sample sets must be finite")
    return real, synth


def _sq_dists(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    xx = (x * x).sum(1)[:, None]
    yy = (y * y).sum(1)[None, :]
    d2 = xx + yy - 2.0 * (x @ y.T)
    return np.maximum(d2, 0.0)


def median_heuristic(real: np.ndarray, synth: np.ndarray) -> float:
    """Median of the positive pairwise distances of the pooled set."""
    z = np.vstack([real, synth])
    d = np.sqrt(_sq_dists(z, z))
    pos = d[np.triu_indices(len(z), k=1)]
    pos = pos[pos > 0]
    return float(np.median(pos)) if pos.size else 1.0


def mmd2_biased(real: np.ndarray, synth: np.ndarray, sigma: float) -> float:
    """Biased V-statistic MMD^2 with an RBF kernel of bandwidth sigma."""
    g = 1.0 / (2.0 * sigma * sigma)
    kxx = np.exp(-g * _sq_dists(real, real)).mean()
    kyy = np.exp(-g * _sq_dists(synth, synth)).mean()
    kxy = np.exp(-g * _sq_dists(real, synth)).mean()
    return float(kxx + kyy - 2.0 * kxy)


def mmd(real, synth, bandwidth="median") -> float:
    """sqrt(max(0, MMD^2)) over whole sequences."""
    real, synth = _validate(real, synth)
    sigma = median_heuristic(real, synth) if bandwidth == "median" else float(bandwidth)
    return float(np.sqrt(max(0.0, mmd2_biased(real, synth, sigma))))


def kl_nats(p: np.ndarray, q: np.ndarray) -> float:
    """sum p ln(p/q) for probability vectors with q > 0 wherever p > 0."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def kl(real, synth, bins: int = 50) -> float:
    """Histogram K-L divergence of the pooled value distributions.

    Both sets are histogrammed over the union min/max range with equal-width
    bins; counts are Laplace-smoothed (+1) before normalization.
    """
    real, synth = _validate(real, synth)
    if bins < 2:
        raise ValueError(f"bins must be >= 2, got {bins}")
    rv, sv = real.ravel(), synth.ravel()
    lo = min(rv.min(), sv.min())
    hi = max(rv.max(), sv.max())
    if hi <= lo:  # all values equal in both sets
        return 0.0
    edges = np.linspace(lo, hi, bins + 1)
    p = np.histogram(rv, bins=edges)[0] + 1.0
    q = np.histogram(sv, bins=edges)[0] + 1.0
    return kl_nats(p / p.sum(), q / q.sum())


def mdd(real, synth, bins: int = 50) -> float:
    """Marginal distribution difference: per-step histograms over a shared
    range, mean absolute bin difference, averaged over time steps."""
    real, synth = _validate(real, synth)
    if bins < 2:
        raise ValueError(f"bins must be >= 2, got {bins}")
    total = 0.0
    T = real.shape[1]
    for t in range(T):
        rv, sv = real[:, t], synth[:, t]
        lo = min(rv.min(), sv.min())
        hi = max(rv.max(), sv.max())
        if hi <= lo:
            continue  # identical constant column contributes zero
        edges = np.linspace(lo, hi, bins + 1)
        p = np.histogram(rv, bins=edges)[0] / rv.size
        q = np.histogram(sv, bins=edges)[0] / sv.size
        total += np.abs(p - q).mean()
    return float(total / T)


def mmd_permutation_test(real, synth, n_permutations: int = 200, seed: int = 0,
                         bandwidth="median") -> tuple[float, float]:
    """Observed MMD and its permutation p-value.

    The median-heuristic bandwidth depends only on the pooled set, so it is
    held fixed across permutations.
    """
    real, synth = _validate(real, synth)
    sigma = median_heuristic(real, synth) if bandwidth == "median" else float(bandwidth)
    observed = float(np.sqrt(max(0.0, mmd2_biased(real, synth, sigma))))
    pooled = np.vstack([real, synth])
    m = real.shape[0]
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(n_permutations):
        perm = rng.permutation(len(pooled))
        a, b = pooled[perm[:m]], pooled[perm[m:]]
        stat = float(np.sqrt(max(0.0, mmd2_biased(a, b, sigma))))
        if stat >= observed:
            hits += 1
    pvalue = (1 + hits) / (1 + n_permutations)
    return observed, pvalue


@dataclass
class MetricReport:
    mmd: float
    kl: float
    mdd: float
    bandwidth: float
    bins: int

    def rows(self) -> list[tuple[str, float, str]]:
        return [
            ("mmd", self.mmd, f"rbf bandwidth={self.bandwidth:.6g}"),
            ("kl", self.kl, f"bins={self.bins} laplace=1"),
            ("mdd", self.mdd, f"bins={self.bins} per-step range"),
        ]


def evaluate(real, synth, bins: int = 50, bandwidth="median") -> MetricReport:
    real, synth = _validate(real, synth)
    sigma = median_heuristic(real, synth) if bandwidth == "median" else float(bandwidth)
    return MetricReport(
        mmd=float(np.sqrt(max(0.0, mmd2_biased(real, synth, sigma)))),
        kl=kl(real, synth, bins),
        mdd=mdd(real, synth, bins),
        bandwidth=sigma,
        bins=bins,
    )
