"""Corpus ingestion: slicing, per-domain normalization, synthetic generators,
CSV loading, and the corpus manifest."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class DomainCorpus:
    """Per-domain stacks of equal-length windows ([N_i, T] float32 each)."""

    windows: dict[str, np.ndarray]
    length: int

    @property
    def domains(self) -> list[str]:
        return list(self.windows)

    @property
    def counts(self) -> dict[str, int]:
        return {d: int(w.shape[0]) for d, w in self.windows.items()}

    def subset(self, domains) -> "DomainCorpus":
        return DomainCorpus({d: self.windows[d] for d in domains}, self.length)


@dataclass
class NormStats:
    """Invertible per-domain scaling; min-max to [-1, 1] or z-score."""

    mode: str
    params: dict[str, tuple[float, float]] = field(default_factory=dict)

    def apply(self, domain: str, values: np.ndarray) -> np.ndarray:
        a, b = self.params[domain]
        v = np.asarray(values, dtype=np.float64)
        if self.mode == "minmax":
            return ((v - a) / (b - a) * 2.0 - 1.0).astype(np.float32)
        return ((v - a) / b).astype(np.float32)

    def invert(self, domain: str, values: np.ndarray) -> np.ndarray:
        a, b = self.params[domain]
        v = np.asarray(values, dtype=np.float64)
        if self.mode == "minmax":
            return (v + 1.0) / 2.0 * (b - a) + a
        return v * b + a

    def to_dict(self) -> dict:
        return {"mode": self.mode,
                "params": {d: [float(a), float(b)] for d, (a, b) in self.params.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(mode=d["mode"],
                   params={k: (float(a), float(b)) for k, (a, b) in d["params"].items()})


def slice_series(values: np.ndarray, length: int) -> np.ndarray:
    """Non-overlapping windows of ``length``; the remainder is dropped."""
    if length < 1:
        raise ValueError(f"window length must be >= 1, got {length}")
    values = np.asarray(values, dtype=np.float32)
    if np.any(~np.isfinite(values)):
        raise ValueError("series contains NaN/Inf; clean inputs are required")
    n = len(values) // length
    return values[: n * length].reshape(n, length)


def normalize(corpus: DomainCorpus, mode: str = "minmax") -> tuple[DomainCorpus, NormStats]:
    """Scale each domain independently; returns the scaled corpus and stats."""
    if mode not in ("minmax", "zscore"):
        raise ValueError(f"unknown normalization mode {mode!r}")
    stats = NormStats(mode=mode)
    out = {}
    for domain, w in corpus.windows.items():
        if mode == "minmax":
            lo, hi = float(w.min()), float(w.max())
            if hi <= lo:
                raise ValueError(
                    f"domain {domain!r} has a constant value range; "
                    f"use zscore mode instead"
                )
            stats.params[domain] = (lo, hi)
        else:
            mu, sd = float(w.mean()), float(w.std())
            if sd == 0.0:
                sd = 1.0
            stats.params[domain] = (mu, sd)
        out[domain] = stats.apply(domain, w)
    return DomainCorpus(out, corpus.length), stats


def denormalize(windows: np.ndarray, domain: str, stats: NormStats) -> np.ndarray:
    return stats.invert(domain, windows)


# -- synthetic domains -------------------------------------------------------

@dataclass
class DomainSpec:
    """One synthetic domain: kind in {sine, trend, ar1, square} plus params."""

    name: str
    kind: str
    count: int = 200
    params: dict = field(default_factory=dict)


# Default parameter choices keep the four families visually and statistically
# far apart: smooth periodic vs monotone line vs rough mean-reverting noise vs
# flat two-level steps.
_DEFAULTS = {
    "sine": {"cycles": (1.5, 3.0), "amp": (0.6, 1.0)},
    "trend": {"slope": (-1.0, 1.0), "intercept": (-0.2, 0.2), "noise": 0.05},
    "ar1": {"coef": 0.9, "noise": 0.25},
    "square": {"period": (8, 16), "amp": (0.6, 1.0)},
}


def _gen_window(kind: str, T: int, rng: np.random.Generator, p: dict) -> np.ndarray:
    t = np.arange(T)
    if kind == "sine":
        cycles = rng.uniform(*p["cycles"])
        amp = rng.uniform(*p["amp"])
        phase = rng.uniform(0, 2 * np.pi)
        return amp * np.sin(2 * np.pi * cycles * t / T + phase)
    if kind == "trend":
        slope = rng.uniform(*p["slope"])
        icept = rng.uniform(*p["intercept"])
        return icept + slope * (t / max(T - 1, 1)) + rng.normal(0, p["noise"], T)
    if kind == "ar1":
        c, s = p["coef"], p["noise"]
        x = np.empty(T)
        x[0] = rng.normal(0, s / np.sqrt(1 - c * c))
        for i in range(1, T):
            x[i] = c * x[i - 1] + rng.normal(0, s)
        return x
    if kind == "square":
        period = rng.uniform(*p["period"])
        amp = rng.uniform(*p["amp"])
        phase = rng.uniform(0, period)
        return amp * np.sign(np.sin(2 * np.pi * (t + phase) / period))
    raise ValueError(f"unknown synthetic domain kind {kind!r}")


def synth_corpus(specs: list[DomainSpec], length: int, seed: int) -> DomainCorpus:
    """Deterministic synthetic corpus; one window per generated source series."""
    windows = {}
    for k, spec in enumerate(specs):
        if spec.kind not in _DEFAULTS:
            raise ValueError(f"unknown synthetic domain kind {spec.kind!r}")
        params = {**_DEFAULTS[spec.kind], **spec.params}
        rng = np.random.default_rng([seed, k])
        rows = [_gen_window(spec.kind, length, rng, params) for _ in range(spec.count)]
        windows[spec.name] = np.stack(rows).astype(np.float32)
    return DomainCorpus(windows, length)


def default_desk_specs(counts: int = 200) -> list[DomainSpec]:
    """The three training domains plus one held-out domain used at desk scale."""
    return [
        DomainSpec("sine", "sine", counts),
        DomainSpec("trend", "trend", counts),
        DomainSpec("ar1", "ar1", counts),
        DomainSpec("square", "square", counts),
    ]


# -- CSV formats ----------------------------------------------------------------

def save_corpus_csv(corpus: DomainCorpus, path) -> None:
    """Pre-sliced layout: header domain,value_0,...,value_{T-1}."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["domain"] + [f"value_{i}" for i in range(corpus.length)])
        for domain, w in corpus.windows.items():
            for row in w:
                writer.writerow([domain] + [f"{v:.7g}" for v in row])


def load_csv(path, length: int | None = None) -> DomainCorpus:
    """Load a corpus from either supported CSV layout.

    Pre-sliced: ``domain,value_0,...`` one window per row (uniform width).
    Long:       ``domain,series_id,t,value``; series are sliced into
                non-overlapping windows of ``length`` (required).
    """
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if header[:1] == ["domain"] and len(header) > 1 and header[1].startswith("value"):
            return _load_presliced(path, reader, header, length)
        if header == ["domain", "series_id", "t", "value"]:
            if length is None:
                raise ValueError(f"{path}: long format requires a window length")
            return _load_long(path, reader, length)
    raise ValueError(f"{path}: unrecognized header {header!r}")


def _load_presliced(path, reader, header, length) -> DomainCorpus:
    width = len(header) - 1
    if length is not None and length != width:
        raise ValueError(f"{path}: file has {width} value columns, expected {length}")
    rows: dict[str, list] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != width + 1:
            raise ValueError(f"{path}:{lineno}: expected {width + 1} fields, got {len(row)}")
        try:
            values = np.array([float(v) for v in row[1:]], dtype=np.float32)
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
        rows.setdefault(row[0], []).append(values)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return DomainCorpus({d: np.stack(v) for d, v in rows.items()}, width)


def _load_long(path, reader, length) -> DomainCorpus:
    series: dict[tuple[str, str], list] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 4:
            raise ValueError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
        try:
            t, v = int(row[2]), float(row[3])
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
        series.setdefault((row[0], row[1]), []).append((t, v))
    domains: dict[str, list] = {}
    for (domain, _sid), pts in series.items():
        pts.sort()
        values = np.array([v for _, v in pts], dtype=np.float32)
        for window in slice_series(values, length):
            domains.setdefault(domain, []).append(window)
    return DomainCorpus(
        {d: np.stack(v) for d, v in domains.items() if v}, length
    )


def save_samples_csv(samples: np.ndarray, path) -> None:
    """One generated sample per row, T columns."""
    np.savetxt(path, np.asarray(samples), delimiter=",", fmt="%.7g")


def save_manifest(corpus: DomainCorpus, path, stats: NormStats | None = None,
                  extra: dict | None = None) -> None:
    doc = {
        "domains": corpus.domains,
        "counts": corpus.counts,
        "length": corpus.length,
        "norm_stats": stats.to_dict() if stats else None,
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
