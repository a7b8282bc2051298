"""Uniform without-replacement batches and the batch-size lower bound."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import EnumerationCapError, InvalidArgumentError

ENUMERATION_CAP = 10**6


@dataclass(frozen=True)
class BatchSample:
    """Sorted, duplicate-free subset of ``range(N)``."""

    indices: tuple[int, ...]
    N: int

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        object.__setattr__(self, "indices", idx)
        if not idx:
            raise InvalidArgumentError("a batch must contain at least one index")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise InvalidArgumentError(f"batch indices must be strictly increasing: {idx}")
        if idx[0] < 0 or idx[-1] >= self.N:
            raise InvalidArgumentError(f"batch indices out of range [0, {self.N})")

    @property
    def size(self) -> int:
        return len(self.indices)

    def __len__(self) -> int:
        return len(self.indices)

    def inclusion_vector(self) -> np.ndarray:
        z = np.zeros(self.N)
        z[list(self.indices)] = 1.0
        return z


def _check_sizes(N: int, batch_size: int):
    if N < 1:
        raise InvalidArgumentError(f"population size must be >= 1, got {N}")
    if not 1 <= batch_size <= N:
        raise InvalidArgumentError(f"batch size must lie in [1, N={N}], got {batch_size}")


def draw_batch_indices(N: int, batch_size: int, rng: np.random.Generator) -> np.ndarray:
    """Partial Fisher-Yates shuffle; returns the sorted first ``batch_size`` slots.

    Consumes exactly one ``rng.integers`` call of ``batch_size`` draws, or
    nothing when ``batch_size == N`` (the full set is returned).
    """
    if batch_size == N:
        return np.arange(N)
    pool = np.arange(N)
    swaps = rng.integers(np.arange(batch_size), N)
    for i, j in enumerate(swaps):
        pool[i], pool[j] = pool[j], pool[i]
    return np.sort(pool[:batch_size])


def draw_batch(N: int, batch_size: int, rng: np.random.Generator) -> BatchSample:
    """Each size-``batch_size`` subset has probability 1 / C(N, batch_size)."""
    _check_sizes(N, batch_size)
    return BatchSample(tuple(draw_batch_indices(N, batch_size, rng)), N)


def enumerate_batches(N: int, batch_size: int, cap: int = ENUMERATION_CAP) -> list[BatchSample]:
    """All C(N, batch_size) batches in lexicographic order."""
    _check_sizes(N, batch_size)
    count = math.comb(N, batch_size)
    if count > cap:
        raise EnumerationCapError(f"C({N}, {batch_size}) = {count} batches exceeds the cap of {cap}")
    return [BatchSample(c, N) for c in itertools.combinations(range(N), batch_size)]


def inclusion_covariance(N: int, batch_size: int) -> np.ndarray:
    """Covariance of the 0/1 inclusion vector of a uniform size-``batch_size`` batch.

    Diagonal p(1-p) with p = S_B/N; off-diagonal S_B(S_B-1)/(N(N-1)) - p^2.
    """
    if N < 2:
        raise InvalidArgumentError(f"inclusion covariance needs N >= 2, got {N}")
    _check_sizes(N, batch_size)
    p = batch_size / N
    off = batch_size * (batch_size - 1) / (N * (N - 1)) - p * p
    cov = np.full((N, N), off)
    np.fill_diagonal(cov, p * (1.0 - p))
    return cov


def zeta(N: int, batch_size: int) -> float:
    """(N - S_B) / (S_B (N - 1)); zero for the full batch."""
    if N < 2:
        raise InvalidArgumentError(f"zeta needs N >= 2, got {N}")
    _check_sizes(N, batch_size)
    return (N - batch_size) / (batch_size * (N - 1))


def descent_ratio(L_s: float, gamma: float) -> float:
    """(1 - L_s gamma) / (1 + L_s gamma)."""
    t = L_s * gamma
    return (1.0 - t) / (1.0 + t)


def batch_size_condition(N: int, batch_size: int, L_s: float, gamma: float, c: float) -> float:
    """1 - c/N + descent_ratio / zeta; ``inf`` for the full batch (zeta = 0)."""
    z = zeta(N, batch_size)
    if z == 0.0:
        return math.inf
    return 1.0 - c / N + descent_ratio(L_s, gamma) / z


@dataclass(frozen=True)
class BatchBound:
    """Result of :func:`batch_size_lower_bound`.

    ``formula`` is the unrounded right-hand side (``nan`` when degenerate),
    ``condition`` is 1 - c/N + ((1 - L_s g)/(1 + L_s g)) / zeta evaluated at
    ``s_b_min``.
    """

    s_b_min: int
    formula: float
    degenerate: bool
    condition: float

    @property
    def condition_holds(self) -> bool:
        return self.condition >= 0.0


def batch_size_lower_bound(N: int, L_s: float, gamma: float, c: float) -> BatchBound:
    """Smallest fixed batch size with guaranteed expected descent.

    S_B >= N / (1 + ((1 - L_s g) / (1 + L_s g)) (N - 1) / (c/N - 1)), rounded up
    and clamped to [1, N]. When c <= N the bracket changes sign and the
    bound is flagged degenerate with ``s_b_min = 1``.
    """
    if N < 2:
        raise InvalidArgumentError(f"the batch-size bound needs N >= 2, got {N}")
    if not (L_s > 0 and gamma > 0 and L_s * gamma < 1.0):
        raise InvalidArgumentError(f"need 0 < gamma < 1/L_s, got gamma={gamma!r}, L_s={L_s!r}")
    if not c > 0:
        raise InvalidArgumentError(f"c must be positive, got {c!r}")
    if c <= N:
        return BatchBound(1, math.nan, True, batch_size_condition(N, 1, L_s, gamma, c))
    a = descent_ratio(L_s, gamma)
    if math.isinf(c):
        formula = float(N)
    else:
        formula = N / (1.0 + a * (N - 1) / (c / N - 1.0))
    # guard against ceil(2.0000000000000004) style round-off pushing one past the bound
    s_b = int(math.ceil(formula - 1e-12 * formula))
    s_b = min(max(s_b, 1), N)
    if batch_size_condition(N, s_b, L_s, gamma, c) < 0.0 and s_b < N:
        s_b += 1
    return BatchBound(s_b, formula, False, batch_size_condition(N, s_b, L_s, gamma, c))
