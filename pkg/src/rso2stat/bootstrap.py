"""Moving-block bootstrap index generation."""

from __future__ import annotations

import math

import numpy as np

MIN_BOOT = 50


def default_block_length(n: int) -> int:
    """``ceil(n ** (1/3))``, the usual rate for block bootstrap variance."""
    if n < 1:
        raise ValueError("series length must be positive")
    # Integer cube root avoids float round-off at perfect cubes.
    k = round(n ** (1.0 / 3.0))
    while k**3 < n:
        k += 1
    while k > 1 and (k - 1) ** 3 >= n:
        k -= 1
    return max(1, k)


def moving_block_indices(n: int, block_len: int, n_boot: int, gen: np.random.Generator) -> np.ndarray:
    """Index arrays for ``n_boot`` non-circular moving-block resamples.

    Each row concatenates ``ceil(n / block_len)`` blocks of consecutive
    indices, each starting uniformly in ``[0, n - block_len]``, and is then
    truncated to length ``n``.
    """
    if not 1 <= block_len <= n:
        raise ValueError(f"block length must lie in [1, {n}], got {block_len}")
    n_blocks = math.ceil(n / block_len)
    starts = gen.integers(0, n - block_len + 1, size=(n_boot, n_blocks))
    idx = (starts[:, :, None] + np.arange(block_len)[None, None, :]).reshape(n_boot, -1)
    return idx[:, :n]


def check_boot(n_boot: int) -> None:
    if n_boot < MIN_BOOT:
        raise ValueError(f"n_boot must be at least {MIN_BOOT} for a stable variance, got {n_boot}")
