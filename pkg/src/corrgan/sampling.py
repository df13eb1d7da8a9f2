"""Uniform (Lebesgue) sampling of correlation matrices from the elliptope.

`sample_onion` grows a matrix one dimension at a time: the new column is a
radius drawn from the Beta distribution that keeps the joint law uniform,
times a direction drawn uniformly on the sphere, mapped through the Cholesky
factor of the current matrix.  `rejection_oracle` is the brute-force ground
truth for small n: propose uniform on the cube, keep PSD points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CorrelationMatrix, StructuralError
from .rng import MAX_SEED, generator


class UnsupportedDimensionError(StructuralError):
    """Rejection sampling is only viable for n <= 4."""


@dataclass(frozen=True)
class SamplerConfig:
    n: int
    count: int
    seed: int

    def __post_init__(self):
        if self.n < 2:
            raise StructuralError(f"n must be >= 2, got {self.n}")
        if self.count < 1:
            raise StructuralError(f"count must be >= 1, got {self.count}")
        if not (0 <= self.seed <= MAX_SEED):
            raise StructuralError(f"seed must be a 64-bit unsigned integer")


def _psd_sqrt(c: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor, falling back to an eigendecomposition square
    root when the matrix sits numerically on the elliptope boundary."""
    try:
        return np.linalg.cholesky(c)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(c)
        return v * np.sqrt(np.maximum(w, 0.0))


def _onion_matrix(n: int, rng: np.random.Generator) -> np.ndarray:
    beta = n / 2.0  # eta=1 (flat density) => beta = 1 + (n-2)/2
    r12 = 2.0 * rng.beta(beta, beta) - 1.0
    c = np.array([[1.0, r12], [r12, 1.0]])
    for k in range(2, n):
        beta -= 0.5
        y = rng.beta(k / 2.0, beta)
        u = rng.standard_normal(k)
        u /= np.linalg.norm(u)
        q = _psd_sqrt(c) @ (np.sqrt(y) * u)
        c = np.block([[c, q[:, None]], [q[None, :], np.ones((1, 1))]])
    return c


def sample_onion(cfg: SamplerConfig) -> list:
    """`cfg.count` matrices uniform on the elliptope; deterministic per seed."""
    rng = generator(cfg.seed)
    out = []
    for _ in range(cfg.count):
        out.append(CorrelationMatrix.from_values(_onion_matrix(cfg.n, rng)))
    return out


def _accept(coeffs: np.ndarray, n: int) -> bool:
    m = np.eye(n)
    iu = np.triu_indices(n, 1)
    m[iu] = coeffs
    m[(iu[1], iu[0])] = coeffs
    return float(np.linalg.eigvalsh(m)[0]) >= 0.0


def rejection_oracle(cfg: SamplerConfig) -> list:
    """Uniform elliptope samples by rejection from the unit cube (n <= 4)."""
    if cfg.n > 4:
        raise UnsupportedDimensionError(
            f"rejection sampling unsupported for n={cfg.n} (acceptance rate too low)"
        )
    rng = generator(cfg.seed)
    dim = cfg.n * (cfg.n - 1) // 2
    out = []
    while len(out) < cfg.count:
        coeffs = rng.uniform(-1.0, 1.0, size=dim)
        if _accept(coeffs, cfg.n):
            m = np.eye(cfg.n)
            iu = np.triu_indices(cfg.n, 1)
            m[iu] = coeffs
            m[(iu[1], iu[0])] = coeffs
            out.append(CorrelationMatrix.from_values(m))
    return out


def rejection_acceptance_rate(n: int, proposals: int, seed: int) -> float:
    """Fraction of uniform cube proposals that land inside the elliptope."""
    if n > 4:
        raise UnsupportedDimensionError(
            f"rejection sampling unsupported for n={n} (acceptance rate too low)"
        )
    rng = generator(seed)
    dim = n * (n - 1) // 2
    accepted = 0
    for _ in range(proposals):
        if _accept(rng.uniform(-1.0, 1.0, size=dim), n):
            accepted += 1
    return accepted / proposals
