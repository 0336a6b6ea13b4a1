"""Frozen bank of orthonormal time-series prototype vectors."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class PrototypeBank:
    """N_p x d matrix of pairwise-orthonormal rows; never receives gradients."""

    P: np.ndarray
    frozen: bool = field(default=True)

    @property
    def n_prototypes(self) -> int:
        return self.P.shape[0]

    @property
    def d(self) -> int:
        return self.P.shape[1]


def init_prototypes(n_prototypes: int, d: int, seed: int) -> PrototypeBank:
    """Orthonormal rows from the QR factorization of a seeded Gaussian matrix."""
    if n_prototypes < 1:
        raise ValueError(f"need at least one prototype, got {n_prototypes}")
    if d < n_prototypes:
        raise ValueError(
            f"embedding width d={d} cannot hold {n_prototypes} orthonormal rows"
        )
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((d, n_prototypes))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))  # deterministic sign convention
    return PrototypeBank(P=np.ascontiguousarray(q.T, dtype=np.float32))
