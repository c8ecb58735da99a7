"""Halton quasi-random draws mapped to standard normals."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .normal import inverse_cdf


def primes(k: int) -> list[int]:
    out = []
    cand = 2
    while len(out) < k:
        if all(cand % p for p in out if p * p <= cand):
            out.append(cand)
        cand += 1
    return out


def halton(index: int, base: int) -> float:
    """Radical inverse of ``index`` in ``base``."""
    if index < 1:
        raise ValueError("Halton index must be >= 1")
    f, r = 1.0, 0.0
    while index > 0:
        f /= base
        r += f * (index % base)
        index //= base
    return r


def halton_sequence(start: int, count: int, base: int) -> np.ndarray:
    """Points ``start, start+1, ..., start+count-1`` of the base-``base`` sequence."""
    if start < 1:
        raise ValueError("Halton index must be >= 1")
    idx = np.arange(start, start + count, dtype=np.int64)
    out = np.zeros(count)
    f = 1.0
    while idx.any():
        f /= base
        out += f * (idx % base)
        idx //= base
    return out


@dataclass(frozen=True)
class HaltonConfig:
    bases: tuple[int, ...] = field(default_factory=tuple)
    skip: int = 10

    def __post_init__(self):
        if len(set(self.bases)) != len(self.bases):
            raise ValueError("Halton bases must be distinct")
        for b in self.bases:
            if b < 2 or any(b % p == 0 for p in range(2, int(b ** 0.5) + 1)):
                raise ValueError(f"Halton base {b} is not prime")
        if self.skip < 0:
            raise ValueError("skip must be non-negative")

    def bases_for(self, dim: int) -> tuple[int, ...]:
        if self.bases:
            if len(self.bases) < dim:
                raise ValueError(f"{dim} random dimensions but only {len(self.bases)} Halton bases")
            return tuple(self.bases[:dim])
        return tuple(primes(dim))


def normal_draws(n_obs: int, n_draws: int, dim: int, config: HaltonConfig | None = None) -> np.ndarray:
    """Standard-normal draws of shape ``(n_obs, n_draws, dim)``.

    Dimension ``d`` uses the d-th base; each observation takes a consecutive
    block of ``n_draws`` points after the first ``skip`` points.
    """
    config = config or HaltonConfig()
    out = np.empty((n_obs, n_draws, dim))
    for d, base in enumerate(config.bases_for(dim)):
        u = halton_sequence(config.skip + 1, n_obs * n_draws, base)
        out[:, :, d] = inverse_cdf(u).reshape(n_obs, n_draws)
    return out
