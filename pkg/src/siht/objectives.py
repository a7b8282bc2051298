"""Composite finite-sum losses f(x) = (1/N) sum_i f_i(V_i x).

Per-sample terms carry no 1/N factor; the average lives in :func:`value`,
:func:`full_gradient` and :func:`minibatch_gradient`.

Supported losses:

* least squares, f_i(t) = (t - y_i)^2
* logistic, f_i(t) = -y_i t + log(1 + e^t) with y_i in {0, 1}
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import (
    DegenerateEstimateError,
    EnumerationCapError,
    InvalidArgumentError,
    LossKind,
    ProblemInstance,
)

EXACT_SMOOTHNESS_MAX_N = 20


# ---------------------------------------------------------------------------
# Scalar link functions
# ---------------------------------------------------------------------------


def softplus(t):
    """log(1 + e^t) without overflow."""
    t = np.asarray(t, dtype=np.float64)
    return np.maximum(t, 0.0) + np.log1p(np.exp(-np.abs(t)))


def sigmoid(t):
    t = np.asarray(t, dtype=np.float64)
    e = np.exp(-np.abs(t))
    return np.where(t >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _sample_losses(inst: ProblemInstance, t: np.ndarray) -> np.ndarray:
    y = inst.targets
    if inst.loss is LossKind.LEAST_SQUARES:
        return (t - y) ** 2
    return softplus(t) - y * t


def _link_derivative(inst: ProblemInstance, t: np.ndarray) -> np.ndarray:
    """d f_i / d t evaluated at t_i = V_i x."""
    y = inst.targets
    if inst.loss is LossKind.LEAST_SQUARES:
        return 2.0 * (t - y)
    return sigmoid(t) - y


def _x(inst: ProblemInstance, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (inst.n,):
        raise InvalidArgumentError(f"x has shape {x.shape}, expected ({inst.n},)")
    return x


def _batch_indices(inst: ProblemInstance, batch) -> np.ndarray:
    idx = np.asarray(getattr(batch, "indices", batch), dtype=np.intp)
    if idx.ndim != 1 or idx.size == 0:
        raise InvalidArgumentError("batch must be a non-empty 1-D collection of sample indices")
    if idx.min() < 0 or idx.max() >= inst.N:
        raise InvalidArgumentError(f"batch indices out of range [0, {inst.N})")
    if np.unique(idx).size != idx.size:
        raise InvalidArgumentError("batch indices must be distinct")
    return idx


def _sample_index(inst: ProblemInstance, i) -> int:
    if int(i) != i or not 0 <= i < inst.N:
        raise InvalidArgumentError(f"sample index {i!r} out of range [0, {inst.N})")
    return int(i)


# ---------------------------------------------------------------------------
# Values and gradients
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GradientMatrix:
    """Per-sample gradients stacked as columns, G = [g^(1) ... g^(N)] with shape (n, N)."""

    G: np.ndarray

    def __post_init__(self):
        G = np.array(self.G, dtype=np.float64, copy=True)
        if G.ndim != 2:
            raise InvalidArgumentError(f"G must be 2-D, got shape {G.shape}")
        G.flags.writeable = False
        object.__setattr__(self, "G", G)

    @classmethod
    def from_rows(cls, rows) -> "GradientMatrix":
        """Build from an (N, n) array whose i-th row is g^(i)."""
        return cls(np.asarray(rows, dtype=np.float64).T)

    @property
    def N(self) -> int:
        return self.G.shape[1]

    @property
    def n(self) -> int:
        return self.G.shape[0]

    @property
    def rows(self) -> np.ndarray:
        return self.G.T

    @property
    def mean(self) -> np.ndarray:
        return self.G.mean(axis=1)

    def batch_mean(self, batch) -> np.ndarray:
        idx = np.asarray(getattr(batch, "indices", batch), dtype=np.intp)
        return self.G[:, idx].mean(axis=1)


def value(inst: ProblemInstance, x) -> float:
    """Objective (1/N) sum_i f_i(V_i x)."""
    x = _x(inst, x)
    return float(np.mean(_sample_losses(inst, inst.V @ x)))


def values(inst: ProblemInstance, X) -> np.ndarray:
    """Objective at each row of the (m, n) array ``X``."""
    X = np.asarray(X, dtype=np.float64)
    return np.mean(_sample_losses(inst, X @ inst.V.T), axis=1)


def _scalar_loss(loss: LossKind, t: float, y: float) -> float:
    if loss is LossKind.LEAST_SQUARES:
        return (t - y) ** 2
    return float(softplus(t)) - y * t


def sample_value(inst: ProblemInstance, i: int, x) -> float:
    """Per-sample loss f_i(V_i x), without the 1/N factor."""
    i = _sample_index(inst, i)
    x = _x(inst, x)
    return _scalar_loss(inst.loss, float(inst.V[i] @ x), float(inst.targets[i]))


def sample_gradient(inst: ProblemInstance, i: int, x) -> np.ndarray:
    i = _sample_index(inst, i)
    x = _x(inst, x)
    t = inst.V[i] @ x
    y = inst.targets[i]
    if inst.loss is LossKind.LEAST_SQUARES:
        d = 2.0 * (t - y)
    else:
        d = float(sigmoid(t)) - y
    return d * inst.V[i]


def per_sample_gradients(inst: ProblemInstance, x) -> GradientMatrix:
    """All N per-sample gradients at ``x``."""
    x = _x(inst, x)
    d = _link_derivative(inst, inst.V @ x)
    return GradientMatrix((d[:, None] * inst.V).T)


def full_gradient(inst: ProblemInstance, x) -> np.ndarray:
    x = _x(inst, x)
    d = _link_derivative(inst, inst.V @ x)
    return inst.V.T @ d / inst.N


def minibatch_gradient(inst: ProblemInstance, batch, x) -> np.ndarray:
    """Average of the per-sample gradients over the indices in ``batch``."""
    idx = _batch_indices(inst, batch)
    x = _x(inst, x)
    return _batch_gradient(inst, idx, x)


def _batch_gradient(inst: ProblemInstance, idx: np.ndarray, x: np.ndarray) -> np.ndarray:
    Vb = inst.V[idx]
    t = Vb @ x
    y = inst.targets[idx]
    if inst.loss is LossKind.LEAST_SQUARES:
        d = 2.0 * (t - y)
    else:
        d = sigmoid(t) - y
    return Vb.T @ d / idx.size


# ---------------------------------------------------------------------------
# Restricted smoothness
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SmoothnessEstimate:
    L_s: float
    method: str


def _loss_curvature(inst: ProblemInstance) -> float:
    # sup of f_i'' : 2 for squares, 1/4 for the logistic link
    return 2.0 if inst.loss is LossKind.LEAST_SQUARES else 0.25


def smoothness_modulus(
    inst: ProblemInstance,
    s: int,
    method: str = "spectral_upper_bound",
    max_n: int = EXACT_SMOOTHNESS_MAX_N,
) -> SmoothnessEstimate:
    """Restricted smoothness modulus L_s.

    ``spectral_upper_bound`` uses the largest eigenvalue of V^T V, scaled by
    the loss curvature over N. ``exact_restricted`` (least squares only)
    maximises the same quantity over all column subsets of size min(2s, n),
    since x - y has at most 2s nonzeros when both x and y are s-sparse.
    """
    if int(s) != s or not 1 <= s < inst.n:
        raise InvalidArgumentError(f"need 1 <= s < n={inst.n}, got {s!r}")
    scale = _loss_curvature(inst) / inst.N
    if method == "spectral_upper_bound":
        lam = np.linalg.eigvalsh(inst.V.T @ inst.V)[-1]
        return SmoothnessEstimate(float(scale * max(lam, 0.0)), method)
    if method != "exact_restricted":
        raise InvalidArgumentError(f"unknown smoothness method {method!r}")
    if inst.loss is not LossKind.LEAST_SQUARES:
        raise InvalidArgumentError("exact_restricted smoothness is only defined for least squares")
    if inst.n > max_n:
        raise EnumerationCapError(f"exact_restricted enumerates supports of n={inst.n} > cap {max_n}")
    k = min(2 * int(s), inst.n)
    gram = inst.V.T @ inst.V
    best = 0.0
    combos = itertools.combinations(range(inst.n), k)
    while True:
        chunk = np.array(list(itertools.islice(combos, 4096)), dtype=np.intp)
        if chunk.size == 0:
            break
        blocks = gram[chunk[:, :, None], chunk[:, None, :]]
        best = max(best, float(np.linalg.eigvalsh(blocks)[:, -1].max()))
    return SmoothnessEstimate(scale * best, method)


# ---------------------------------------------------------------------------
# The constant c relating per-sample and full restricted gradients
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CConstant:
    """Estimate of c in sum_i ||grad_J f_i||^2 <= c ||grad_J f||^2.

    ``max_ratio`` is the largest ratio (or bound) seen before the safety
    factor; ``samples`` counts the (x, J) pairs that contributed.
    """

    value: float
    method: str
    max_ratio: float
    samples: int


@dataclass(frozen=True)
class ClaimCheck:
    lhs: float
    rhs: float
    bound: float
    grad_norm_sq: float
    holds: bool


def _J(inst: ProblemInstance, J) -> np.ndarray:
    idx = np.asarray(getattr(J, "indices", J), dtype=np.intp)
    if idx.ndim != 1 or idx.size == 0:
        raise InvalidArgumentError("index set J must be non-empty")
    if idx.min() < 0 or idx.max() >= inst.n or len(set(idx.tolist())) != idx.size:
        raise InvalidArgumentError(f"J must hold distinct indices in [0, {inst.n})")
    return idx


def claim_c_bound(inst: ProblemInstance, J, convention: str = "nonzero") -> float:
    """Data-only constant N^2 max_r ||(V_r)_J||^2 / sigma^2.

    sigma is a singular value of the N x N matrix V_J V_J^T. With
    ``convention="nonzero"`` it is the smallest nonzero one; with
    ``"literal"`` the smallest one outright, which is 0 whenever |J| < N and
    then makes the bound infinite. Returns ``math.inf`` if no finite bound
    exists (all-zero restricted Gram matrix).
    """
    idx = _J(inst, J)
    VJ = inst.V[:, idx]
    M = VJ @ VJ.T
    sv = np.linalg.svd(M, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return math.inf
    if convention == "nonzero":
        tol = sv[0] * max(M.shape) * np.finfo(np.float64).eps
        sigma = float(sv[sv > tol].min())
    elif convention == "literal":
        sigma = float(sv.min())
        if sigma <= sv[0] * max(M.shape) * np.finfo(np.float64).eps:
            return math.inf
    else:
        raise InvalidArgumentError(f"unknown singular value convention {convention!r}")
    row_max = float(np.max(np.sum(VJ**2, axis=1)))
    return inst.N**2 * row_max / sigma**2


def restricted_gradient_ratio_terms(inst: ProblemInstance, J, x) -> tuple[float, float]:
    """Return (sum_i ||grad_J f_i(x)||^2, ||grad_J f(x)||^2)."""
    idx = _J(inst, J)
    x = _x(inst, x)
    d = _link_derivative(inst, inst.V @ x)
    VJ = inst.V[:, idx]
    per_sample = float(np.sum(d**2 * np.sum(VJ**2, axis=1)))
    g = VJ.T @ d / inst.N
    return per_sample, float(g @ g)


def claim_c_inequality(inst: ProblemInstance, J, x, convention: str = "nonzero", rtol: float = 1e-10) -> ClaimCheck:
    """Evaluate sum_i ||grad_J f_i(x)||^2 <= claim_c_bound(J) * ||grad_J f(x)||^2."""
    bound = claim_c_bound(inst, J, convention)
    lhs, gsq = restricted_gradient_ratio_terms(inst, J, x)
    if math.isinf(bound):
        rhs = math.inf if gsq > 0 or lhs > 0 else 0.0
    else:
        rhs = bound * gsq
    holds = lhs <= rhs * (1.0 + rtol) or lhs == 0.0
    return ClaimCheck(lhs, rhs, bound, gsq, bool(holds))


def random_sparse_point(rng: np.random.Generator, n: int, s: int, scale: float = 1.0) -> np.ndarray:
    """Standard-normal entries on ``s`` coordinates chosen uniformly at random."""
    x = np.zeros(n)
    idx = rng.choice(n, size=s, replace=False)
    x[idx] = scale * rng.standard_normal(s)
    return x


def random_index_set(rng: np.random.Generator, n: int, s: int) -> np.ndarray:
    """Uniform size in [1, s], then a uniform subset of that size."""
    k = int(rng.integers(1, s + 1))
    return np.sort(rng.choice(n, size=k, replace=False))


def empirical_c(
    inst: ProblemInstance,
    s: int,
    trials: int,
    rng: np.random.Generator,
    safety: float = 1.5,
    min_denominator: float = 1e-14,
) -> CConstant:
    """Search estimate of c: ``safety`` times the largest observed pointwise ratio.

    Each trial draws an s-sparse x (standard normal on a uniform support)
    and an index set J (uniform size in [1, s], uniform subset) and records
    sum_i ||grad_J f_i(x)||^2 / ||grad_J f(x)||^2. Pairs whose denominator is
    below ``min_denominator`` are skipped. A pointwise bound implies the
    expectation form for every distribution over J.
    """
    if trials < 1:
        raise InvalidArgumentError("trials must be >= 1")
    if not 1 <= s < inst.n:
        raise InvalidArgumentError(f"need 1 <= s < n={inst.n}, got {s!r}")
    best = -math.inf
    used = 0
    for _ in range(trials):
        x = random_sparse_point(rng, inst.n, s)
        J = random_index_set(rng, inst.n, s)
        num, den = restricted_gradient_ratio_terms(inst, J, x)
        if den < min_denominator:
            continue
        used += 1
        best = max(best, num / den)
    if used == 0:
        raise DegenerateEstimateError(
            f"all {trials} sampled restricted gradients had squared norm below {min_denominator:g}"
        )
    return CConstant(safety * best, "empirical_search", best, used)


def claim_c_constant(inst: ProblemInstance, s: int, trials: int, rng: np.random.Generator, convention: str = "nonzero") -> CConstant:
    """Largest :func:`claim_c_bound` over ``trials`` random index sets J with |J| <= s."""
    if trials < 1:
        raise InvalidArgumentError("trials must be >= 1")
    best = 0.0
    for _ in range(trials):
        best = max(best, claim_c_bound(inst, random_index_set(rng, inst.n, s), convention))
    return CConstant(best, "claim_bound", best, trials)
