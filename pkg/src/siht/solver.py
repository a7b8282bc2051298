"""Mini-batch stochastic IHT and its full-batch special case."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from . import objectives
from .core import (
    InvalidArgumentError,
    MonotonicityError,
    NonFiniteObjectiveError,
    ProblemInstance,
    SolverConfig,
    SparseIterate,
    SupportSet,
    TrajectoryRecord,
    as_vector,
    seeded_rng,
)
from .hardthreshold import top_indices
from .sampling import batch_size_lower_bound, draw_batch_indices

logger = logging.getLogger(__name__)

STOP_MAX_ITERS = "max_iters"
STOP_F_TAIL = "f_tail_converged"
STOP_SUPPORT = "support_stabilized"

BATCH_STREAM = "batches"

# An objective increase smaller than this is round-off, not a descent failure.
MONOTONE_RTOL = 1e-12
MONOTONE_FLOOR = 1e-24  # relative to |f(x^0)|


def monotone_tolerance(f_prev: float, f_initial: float) -> float:
    return MONOTONE_RTOL * abs(f_prev) + MONOTONE_FLOOR * abs(f_initial)


@dataclass(frozen=True)
class SolveResult:
    x: SparseIterate
    trajectory: TrajectoryRecord
    stop_reason: str

    @property
    def iterations(self) -> int:
        return self.trajectory.iterations

    @property
    def final_value(self) -> float:
        return self.trajectory.f[-1]


def initial_iterate(n: int, s: int, config: SolverConfig, x0=None) -> tuple[np.ndarray, np.ndarray]:
    """Feasible starting point and its size-s support.

    Without ``x0`` this is the zero vector whose support is padded by the
    tie rule (``{0..s-1}`` for ``lowest_index``).
    """
    if x0 is None:
        x = np.zeros(n)
    else:
        x = np.array(as_vector(x0, n, name="x0"))
        if np.count_nonzero(x) > s:
            raise InvalidArgumentError(f"x0 has {np.count_nonzero(x)} nonzeros, more than s={s}")
    return x, top_indices(x, s, config.tie_rule)


def check_batch_bound(inst: ProblemInstance, config: SolverConfig):
    """Raise if the configured batch size is below the lower bound (c > N case)."""
    if config.smoothness is None or config.c_constant is None or not config.enforce_bound:
        return
    if inst.N < 2:
        return
    bound = batch_size_lower_bound(inst.N, config.smoothness, config.gamma, config.c_constant)
    if not bound.degenerate and config.batch_size < bound.s_b_min:
        raise InvalidArgumentError(
            f"batch_size={config.batch_size} is below the lower bound {bound.s_b_min} "
            f"(L_s={config.smoothness!r}, gamma={config.gamma!r}, c={config.c_constant!r})"
        )


def _run(
    inst: ProblemInstance,
    config: SolverConfig,
    x0,
    record_iterates: bool,
    monotone: bool,
) -> SolveResult:
    config.validate_for(inst)
    check_batch_bound(inst, config)

    N, s, gamma, W = inst.N, config.s, config.gamma, config.window
    V = inst.V
    full = config.batch_size == N
    rng = seeded_rng(config.seed, BATCH_STREAM)

    x, supp = initial_iterate(inst.n, s, config, x0)
    fs: list[float] = []
    supports: list[tuple[int, ...]] = []
    gnorms: list[float] = []
    batches: list[tuple[int, ...]] = []
    iterates: list[np.ndarray] = []
    same_support_run = 0
    stop = STOP_MAX_ITERS
    all_idx = np.arange(N)

    k = 0
    while True:
        t = V @ x
        f = float(np.mean(objectives._sample_losses(inst, t)))
        if not math.isfinite(f):
            raise NonFiniteObjectiveError(k, f)
        d = objectives._link_derivative(inst, t)
        grad = V.T @ d / N
        gsup = grad[supp]
        gnorm = float(gsup @ gsup)

        if monotone and fs and f > fs[-1] + monotone_tolerance(fs[-1], fs[0]):
            raise MonotonicityError(k, fs[-1], f)
        supp_t = tuple(int(i) for i in supp)
        if supports and supp_t == supports[-1]:
            same_support_run += 1
        else:
            same_support_run = 1
        fs.append(f)
        supports.append(supp_t)
        gnorms.append(gnorm)
        if record_iterates:
            iterates.append(x.copy())

        if config.early_stop and len(fs) >= W and k > 0:
            window = fs[-W:]
            if max(window) - min(window) < config.f_tail_rtol * (1.0 + abs(f)):
                stop = STOP_F_TAIL
                break
            if same_support_run >= W and gnorm < config.grad_tol:
                stop = STOP_SUPPORT
                break
        if k >= config.max_iters:
            break

        if full:
            batch = all_idx
            g = grad
        else:
            batch = draw_batch_indices(N, config.batch_size, rng)
            g = V[batch].T @ d[batch] / config.batch_size
        batches.append(tuple(int(i) for i in batch))

        w = x - gamma * g
        supp = top_indices(w, s, config.tie_rule)
        x = np.zeros_like(w)
        x[supp] = w[supp]
        k += 1

    batches.append(())
    record = TrajectoryRecord(
        f=tuple(fs),
        support=tuple(supports),
        grad_norm_sq=tuple(gnorms),
        batch=tuple(batches),
        seed=config.seed,
        iterates=np.array(iterates) if record_iterates else None,
    )
    final = SparseIterate(x, SupportSet(tuple(int(i) for i in supp), inst.n, s))
    logger.debug("solve finished after %d iterations (%s), f=%r", record.iterations, stop, fs[-1])
    return SolveResult(final, record, stop)


def siht_run(inst: ProblemInstance, config: SolverConfig, x0=None, record_iterates: bool = False) -> SolveResult:
    """Run mini-batch stochastic IHT.

    Each iteration draws a fresh batch of ``config.batch_size`` samples
    uniformly without replacement from the ``"batches"`` sub-stream of
    ``config.seed``, averages their gradients, takes a step of size
    ``config.gamma`` and hard-thresholds back to ``config.s`` entries.

    Stops at ``max_iters`` or earlier when the last ``window`` objective
    values span less than ``f_tail_rtol * (1 + |f|)``, or when the support
    has not changed for ``window`` iterates and the squared gradient norm on
    the support is below ``grad_tol``.
    """
    return _run(inst, config, x0, record_iterates, monotone=False)


def iht_run(inst: ProblemInstance, config: SolverConfig, x0=None, record_iterates: bool = False) -> SolveResult:
    """Deterministic IHT: :func:`siht_run` with the full batch.

    When ``config.smoothness`` is set (so gamma < 1/L_s was validated) an
    increase of the objective beyond :func:`monotone_tolerance` raises
    :class:`MonotonicityError`.
    """
    config = replace(config, batch_size=inst.N)
    return _run(inst, config, x0, record_iterates, monotone=config.smoothness is not None)
