"""Uniform multiple imputation of detection-limit readings.

Randomness is path-keyed: every consumer derives its generator from the
master seed plus a tuple of ``(label, index)`` pairs, so results do not
depend on the order in which work items are scheduled.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .ingest import Rso2Series

DEFAULT_M_ESTIMATION = 20
DEFAULT_M_TESTING = 10


def _label_key(label: str) -> int:
    return zlib.crc32(label.encode("utf-8"))


@dataclass(frozen=True)
class RngStream:
    """A named, reproducible random stream.

    >>> a = RngStream(7).child("impute", 3).generator().random()
    >>> b = RngStream(7).child("impute", 3).generator().random()
    >>> a == b
    True
    """

    master_seed: int
    path: tuple[tuple[str, int], ...] = ()

    def __post_init__(self):
        seed = int(self.master_seed)
        if not 0 <= seed < 2**64:
            raise ValueError("master_seed must fit in 64 unsigned bits")
        object.__setattr__(self, "master_seed", seed)
        object.__setattr__(self, "path", tuple((str(k), int(i)) for k, i in self.path))

    def child(self, label: str, index: int = 0) -> "RngStream":
        if index < 0:
            raise ValueError("stream indices must be non-negative")
        return RngStream(self.master_seed, self.path + ((label, int(index)),))

    def spawn_key(self) -> tuple[int, ...]:
        key: list[int] = []
        for label, index in self.path:
            key.extend((_label_key(label), index))
        return tuple(key)

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.master_seed, spawn_key=self.spawn_key())
        return np.random.Generator(np.random.PCG64(seq))


def as_stream(rng) -> RngStream:
    """Accept an :class:`RngStream` or a plain integer seed."""
    if isinstance(rng, RngStream):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng))
    raise TypeError(f"expected RngStream or int seed, got {type(rng).__name__}")


def open_uniform(gen: np.random.Generator, upper: float, size: int) -> np.ndarray:
    """Draws from the open interval ``(0, upper)``."""
    u = gen.random(size)
    while True:
        bad = u == 0.0
        if not bad.any():
            break
        u[bad] = gen.random(int(bad.sum()))
    return upper * u


@dataclass(frozen=True)
class ImputedSeries:
    base: Rso2Series
    imputed_values: np.ndarray
    m: int

    @property
    def times(self) -> np.ndarray:
        return self.base.times


def impute_values(values, censored, detection_limit: float, stream: RngStream) -> np.ndarray:
    """Copy of ``values`` with censored slots replaced by U(0, limit) draws.

    Draws are taken in position order from ``stream``.
    """
    out = np.array(values, dtype=float, copy=True)
    censored = np.asarray(censored, dtype=bool)
    k = int(np.count_nonzero(censored))
    if k:
        out[censored] = open_uniform(stream.generator(), detection_limit, k)
    return out


def imputation_matrix(values, censored, detection_limit: float, rng: RngStream, n_imputations: int) -> np.ndarray:
    """``(n, M)`` array whose column ``m - 1`` uses stream ``rng / ("impute", m)``."""
    values = np.asarray(values, dtype=float)
    censored = np.asarray(censored, dtype=bool)
    out = np.repeat(values[:, None], n_imputations, axis=1)
    k = int(np.count_nonzero(censored))
    if k:
        for j in range(n_imputations):
            gen = rng.child("impute", j + 1).generator()
            out[censored, j] = open_uniform(gen, detection_limit, k)
    return out


def impute(series: Rso2Series, m: int, rng) -> ImputedSeries:
    """The ``m``-th imputed copy of ``series``."""
    if m < 1:
        raise ValueError("imputation index m must be >= 1")
    stream = as_stream(rng).child("impute", m)
    filled = impute_values(series.values, series.censored, series.detection_limit, stream)
    filled.setflags(write=False)
    return ImputedSeries(series, filled, m)


def impute_set(series: Rso2Series, n_imputations: int, rng) -> list[ImputedSeries]:
    """Imputed copies ``m = 1..M``; identical to calling :func:`impute` per ``m``."""
    if n_imputations < 2:
        raise ValueError("at least two imputations are needed for a between-imputation variance")
    return [impute(series, m, rng) for m in range(1, n_imputations + 1)]
