"""Shared domain types, seeded randomness and error classes.

Indices are 0-based everywhere. All reals are float64.
"""
from __future__ import annotations

import enum
import zlib
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np


class SihtError(Exception):
    """Base class for errors raised by this package."""


class InvalidArgumentError(SihtError, ValueError):
    pass


class EnumerationCapError(SihtError):
    """Raised when an exhaustive enumeration would exceed its configured cap."""


class DegenerateEstimateError(SihtError):
    """An estimator had no usable samples (e.g. every denominator vanished)."""


class NonFiniteObjectiveError(SihtError, FloatingPointError):
    def __init__(self, iteration: int, value: float):
        super().__init__(f"non-finite objective {value!r} at iteration {iteration}")
        self.iteration = iteration
        self.value = value


class MonotonicityError(SihtError, AssertionError):
    """Full-batch IHT increased the objective; usually means L_s was underestimated."""

    def __init__(self, iteration: int, previous: float, current: float):
        super().__init__(
            f"objective increased at iteration {iteration}: {previous!r} -> {current!r}"
        )
        self.iteration = iteration
        self.previous = previous
        self.current = current


class TieRule(str, enum.Enum):
    """Which index wins among equal magnitudes in hard thresholding."""

    LOWEST_INDEX = "lowest_index"
    HIGHEST_INDEX = "highest_index"


class LossKind(str, enum.Enum):
    LEAST_SQUARES = "least_squares"
    LOGISTIC = "logistic"


def as_vector(x, n: Optional[int] = None, name: str = "x") -> np.ndarray:
    """Validate ``x`` as a finite 1-D float64 vector and return a read-only copy."""
    arr = np.array(x, dtype=np.float64, copy=True)
    if arr.ndim != 1:
        raise InvalidArgumentError(f"{name} must be 1-D, got shape {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise InvalidArgumentError(f"{name} has length {arr.shape[0]}, expected {n}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} contains NaN or Inf")
    arr.flags.writeable = False
    return arr


# ---------------------------------------------------------------------------
# Randomness
# ---------------------------------------------------------------------------

_U64 = (1 << 64) - 1


def seeded_rng(seed: int, label: Optional[str] = None) -> np.random.Generator:
    """Deterministic PCG64 stream.

    The stream is ``PCG64(SeedSequence(seed mod 2**64, spawn_key=(crc32(label),)))``;
    with ``label=None`` the spawn key is empty. Labels give independent,
    reproducible sub-streams of one seed (e.g. ``"batches"``, ``"init"``).
    """
    entropy = int(seed) & _U64
    spawn_key: tuple[int, ...] = ()
    if label is not None:
        spawn_key = (zlib.crc32(label.encode("utf-8")),)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy, spawn_key=spawn_key)))


# ---------------------------------------------------------------------------
# Supports and sparse iterates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SupportSet:
    """Sorted index set inside ``range(n)`` holding at most ``capacity`` entries."""

    indices: tuple[int, ...]
    n: int
    capacity: int

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        object.__setattr__(self, "indices", idx)
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise InvalidArgumentError(f"support indices must be strictly increasing: {idx}")
        if idx and (idx[0] < 0 or idx[-1] >= self.n):
            raise InvalidArgumentError(f"support indices out of range [0, {self.n}): {idx}")
        if len(idx) > self.capacity:
            raise InvalidArgumentError(f"support has {len(idx)} > capacity {self.capacity} entries")

    @classmethod
    def of(cls, indices: Iterable[int], n: int, capacity: Optional[int] = None) -> "SupportSet":
        idx = tuple(sorted(set(int(i) for i in indices)))
        return cls(idx, n, len(idx) if capacity is None else capacity)

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __contains__(self, i) -> bool:
        return int(i) in self.indices

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=np.intp)

    def union(self, other: "SupportSet") -> "SupportSet":
        self._check_same_space(other)
        merged = sorted(set(self.indices) | set(other.indices))
        return SupportSet(tuple(merged), self.n, self.capacity + other.capacity)

    def difference(self, other: "SupportSet") -> "SupportSet":
        self._check_same_space(other)
        drop = set(other.indices)
        kept = tuple(i for i in self.indices if i not in drop)
        return SupportSet(kept, self.n, self.capacity)

    def intersection(self, other: "SupportSet") -> "SupportSet":
        self._check_same_space(other)
        other_set = set(other.indices)
        return SupportSet(tuple(i for i in self.indices if i in other_set), self.n, self.capacity)

    def restrict(self, v: np.ndarray) -> np.ndarray:
        """Entries of ``v`` on this support, in index order."""
        return np.asarray(v)[self.array]

    def mask(self) -> np.ndarray:
        m = np.zeros(self.n, dtype=bool)
        m[self.array] = True
        return m

    def _check_same_space(self, other: "SupportSet"):
        if self.n != other.n:
            raise InvalidArgumentError(f"supports live in different spaces: n={self.n} vs n={other.n}")


@dataclass(frozen=True)
class SparseIterate:
    """A vector in C_s together with the support it is attributed to.

    Entries outside ``support`` are exactly zero; the support may contain
    indices whose entry is zero (padding), so ``len(support)`` is the
    sparsity budget actually used for descent bookkeeping.
    """

    vector: np.ndarray
    support: SupportSet

    def __post_init__(self):
        v = np.array(self.vector, dtype=np.float64, copy=True)
        if v.ndim != 1 or v.shape[0] != self.support.n:
            raise InvalidArgumentError(f"vector shape {v.shape} does not match support space n={self.support.n}")
        if not np.all(np.isfinite(v)):
            raise InvalidArgumentError("vector contains NaN or Inf")
        off = ~self.support.mask()
        if np.any(v[off] != 0.0):
            raise InvalidArgumentError("vector has nonzero entries outside its support")
        v[off] = 0.0  # normalise -0.0
        v.flags.writeable = False
        object.__setattr__(self, "vector", v)

    @classmethod
    def from_dense(cls, x, support: SupportSet) -> "SparseIterate":
        """Keep ``x`` on ``support`` and zero everything else."""
        x = as_vector(x, support.n)
        v = np.zeros(support.n)
        v[support.array] = x[support.array]
        return cls(v, support)

    @property
    def n(self) -> int:
        return self.support.n

    @property
    def s(self) -> int:
        return self.support.capacity

    def nnz(self) -> int:
        return int(np.count_nonzero(self.vector))


# ---------------------------------------------------------------------------
# Problem and solver configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """Finite-sum problem f(x) = (1/N) sum_i f_i(V_i x) with row data V_i and target y_i."""

    V: np.ndarray
    targets: np.ndarray
    loss: LossKind = LossKind.LEAST_SQUARES

    def __post_init__(self):
        V = np.array(self.V, dtype=np.float64, copy=True)
        if V.ndim != 2 or V.shape[0] < 1 or V.shape[1] < 2:
            raise InvalidArgumentError(f"V must be a 2-D array with N >= 1 rows and n >= 2 columns, got {V.shape}")
        if not np.all(np.isfinite(V)):
            raise InvalidArgumentError("V contains NaN or Inf")
        y = as_vector(self.targets, V.shape[0], name="targets")
        loss = LossKind(self.loss)
        if loss is LossKind.LOGISTIC and not np.all((y == 0.0) | (y == 1.0)):
            raise InvalidArgumentError("logistic targets must be 0 or 1")
        V.flags.writeable = False
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "targets", y)
        object.__setattr__(self, "loss", loss)

    @property
    def N(self) -> int:
        return self.V.shape[0]

    @property
    def n(self) -> int:
        return self.V.shape[1]


@dataclass(frozen=True)
class SolverConfig:
    """Inputs of the mini-batch SIHT loop.

    ``smoothness`` is the L_s the step size was chosen against. When it is
    given, ``0 < gamma < 1/smoothness`` is enforced and, if ``c_constant`` is
    also set and ``enforce_bound`` is true, the batch size must meet the
    lower bound from :func:`siht.sampling.batch_size_lower_bound`.

    With ``early_stop=False`` the window-based stopping rules are off and
    every run lasts exactly ``max_iters`` iterations.
    """

    s: int
    gamma: float
    batch_size: int
    max_iters: int = 1000
    seed: int = 0
    c_constant: Optional[float] = None
    tie_rule: TieRule = TieRule.LOWEST_INDEX
    smoothness: Optional[float] = None
    enforce_bound: bool = True
    window: int = 200
    f_tail_rtol: float = 1e-10
    grad_tol: float = 1e-10
    early_stop: bool = True

    def __post_init__(self):
        object.__setattr__(self, "tie_rule", TieRule(self.tie_rule))
        if int(self.s) != self.s or self.s < 1:
            raise InvalidArgumentError(f"s must be a positive integer, got {self.s!r}")
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise InvalidArgumentError(f"gamma must be positive, got {self.gamma!r}")
        if self.smoothness is not None:
            if not self.smoothness > 0:
                raise InvalidArgumentError(f"smoothness must be positive, got {self.smoothness!r}")
            if self.gamma * self.smoothness >= 1.0:
                raise InvalidArgumentError(
                    f"step size must satisfy gamma < 1/L_s (gamma*L_s = {self.gamma * self.smoothness!r})"
                )
        if self.batch_size < 1:
            raise InvalidArgumentError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_iters < 0:
            raise InvalidArgumentError("max_iters must be non-negative")
        if self.c_constant is not None and not self.c_constant > 0:
            raise InvalidArgumentError(f"c_constant must be positive, got {self.c_constant!r}")
        if self.window < 1:
            raise InvalidArgumentError("window must be >= 1")

    def validate_for(self, inst: ProblemInstance):
        """Checks that depend on the instance dimensions."""
        if not 1 <= self.s < inst.n:
            raise InvalidArgumentError(f"need 1 <= s < n, got s={self.s}, n={inst.n}")
        if not 1 <= self.batch_size <= inst.N:
            raise InvalidArgumentError(f"batch_size must lie in [1, N={inst.N}], got {self.batch_size}")


@dataclass(frozen=True)
class TrajectoryRecord:
    """Per-iteration log of a solve; row k describes iterate X^k.

    ``batch[k]`` is the batch used to move from X^k to X^{k+1}; the final
    row has an empty batch.
    """

    f: tuple[float, ...]
    support: tuple[tuple[int, ...], ...]
    grad_norm_sq: tuple[float, ...]
    batch: tuple[tuple[int, ...], ...]
    seed: int
    iterates: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        lengths = {len(self.f), len(self.support), len(self.grad_norm_sq), len(self.batch)}
        if len(lengths) != 1:
            raise InvalidArgumentError(f"trajectory columns have mismatched lengths {sorted(lengths)}")
        if self.iterates is not None and len(self.iterates) != len(self.f):
            raise InvalidArgumentError("iterates length does not match trajectory length")

    def __len__(self) -> int:
        return len(self.f)

    @property
    def iterations(self) -> int:
        return len(self.f) - 1


def as_index_tuple(indices: Sequence[int]) -> tuple[int, ...]:
    return tuple(int(i) for i in indices)
