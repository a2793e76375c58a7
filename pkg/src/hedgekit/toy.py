"""Synthetic dataset with a known hacking threshold.

Proxies are uniform and the true reward is ``r_t(u) = u**p (1 - u) / C``
with ``C = (p / (p + 1))**p / (p + 1)``, so that ``max r_t = 1`` at
``u = p / (p + 1)``.  Under BoN the expected true reward is proportional to
``n / ((n + p)(n + p + 1))``, maximized at ``n = sqrt(p (p + 1))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._utils import check_seed, stream
from .exceptions import ConfigurationError
from .io import DatasetManifest, write_pools
from .samplers import CandidatePool


@dataclass(frozen=True)
class ToyConfig:
    p: float = 12.0
    prompts: int = 100
    candidates_per_prompt: int = 512
    seed: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.p) and self.p > 0):
            raise ConfigurationError(f"p must be positive, got {self.p!r}")
        if self.prompts < 1:
            raise ConfigurationError("prompts must be at least 1")
        if self.candidates_per_prompt < 2:
            raise ConfigurationError("candidates_per_prompt must be at least 2")
        check_seed(self.seed)


def toy_constant(p: float) -> float:
    return (p / (p + 1)) ** p / (p + 1)


def toy_truth(u, p: float = 12.0):
    """``u**p (1 - u) / C``."""
    u = np.asarray(u, dtype=float)
    return u**p * (1 - u) / toy_constant(p)


def toy_bon_optimum(p: float = 12.0) -> float:
    return math.sqrt(p * (p + 1))


def toy_pools(cfg: ToyConfig) -> list[CandidatePool]:
    rng = stream(cfg.seed)
    # 53-bit grid strictly inside (0, 1)
    u = rng.integers(1, 2**53, size=(cfg.prompts, cfg.candidates_per_prompt)) / 2.0**53
    r = toy_truth(u, cfg.p)
    width = len(str(cfg.prompts - 1))
    return [
        CandidatePool.from_arrays(
            f"p{t:0{width}d}", u[t], r[t], ids=[f"c{k}" for k in range(cfg.candidates_per_prompt)], with_quantiles=False
        )
        for t in range(cfg.prompts)
    ]


def generate_toy(cfg: ToyConfig, out_path: str | Path) -> DatasetManifest:
    """Write the toy dataset as JSON Lines; deterministic in ``cfg.seed``."""
    return write_pools(out_path, toy_pools(cfg))
