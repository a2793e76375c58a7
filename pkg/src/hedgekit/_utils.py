"""Seeded streams, thread-count control and small validation helpers."""

from __future__ import annotations

import hashlib
import math
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

from .exceptions import ConfigurationError

T = TypeVar("T")

THREADS_ENV = "HEDGEKIT_THREADS"
MAX_SEED = 2**64 - 1


def check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise ConfigurationError(f"seed must be an integer, got {seed!r}")
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ConfigurationError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def key_of(label: str) -> int:
    """Stable 64-bit integer key for a string label (e.g. a prompt id)."""
    return int.from_bytes(hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest(), "little")


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for the tuple ``(seed, *keys)``.

    Streams depend only on the tuple, never on scheduling order.
    """
    entropy = [check_seed(seed), *(int(k) for k in keys)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw == "":
        return min(8, os.cpu_count() or 1)
    try:
        n = int(raw)
    except ValueError:
        raise ConfigurationError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigurationError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def ordered_map(fn: Callable[[int], T], count: int) -> list[T]:
    """``[fn(0), ..., fn(count - 1)]``, evaluated on up to ``thread_count()`` threads."""
    workers = min(thread_count(), count)
    if workers <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(count)))


def check_finite(x: float, name: str) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise ConfigurationError(f"{name} must be finite, got {x!r}")
    return x


def as_float_array(values: Sequence[float] | np.ndarray, name: str = "values") -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ConfigurationError(f"{name} must be one-dimensional")
    return arr
