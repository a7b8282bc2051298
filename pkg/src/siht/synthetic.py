"""Synthetic problem instances used by the CLI, the checkers and the tests."""
from __future__ import annotations

import numpy as np

from .core import InvalidArgumentError, LossKind, ProblemInstance
from .objectives import sigmoid


def planted_instance(
    N: int,
    n: int,
    s_true: int,
    noise_sigma: float,
    rng: np.random.Generator,
    loss: LossKind = LossKind.LEAST_SQUARES,
) -> tuple[ProblemInstance, np.ndarray]:
    """Gaussian design with an s_true-sparse ground truth x*.

    Least squares: y = V x* + noise_sigma * e with e standard normal.
    Logistic: the last column of V is all ones (intercept) and
    y_i ~ Bernoulli(sigmoid(V_i x*)); ``noise_sigma`` is unused.
    """
    loss = LossKind(loss)
    if not 1 <= s_true <= n:
        raise InvalidArgumentError(f"need 1 <= s_true <= n, got s_true={s_true}, n={n}")
    if noise_sigma < 0:
        raise InvalidArgumentError("noise_sigma must be non-negative")
    V = rng.standard_normal((N, n))
    x_star = np.zeros(n)
    support = rng.choice(n, size=s_true, replace=False)
    x_star[support] = rng.standard_normal(s_true)
    if loss is LossKind.LEAST_SQUARES:
        y = V @ x_star
        if noise_sigma > 0:
            y = y + noise_sigma * rng.standard_normal(N)
    else:
        V[:, -1] = 1.0
        y = (rng.random(N) < sigmoid(V @ x_star)).astype(np.float64)
    return ProblemInstance(V, y, loss), x_star


def random_instance(N: int, n: int, rng: np.random.Generator, loss: LossKind = LossKind.LEAST_SQUARES) -> ProblemInstance:
    """Gaussian V; Gaussian targets (least squares) or fair-coin labels (logistic)."""
    loss = LossKind(loss)
    V = rng.standard_normal((N, n))
    if loss is LossKind.LEAST_SQUARES:
        y = rng.standard_normal(N)
    else:
        y = (rng.random(N) < 0.5).astype(np.float64)
    return ProblemInstance(V, y, loss)


def rank_one_instance(N: int, n: int, rng: np.random.Generator) -> tuple[ProblemInstance, float]:
    """Least squares with rows a_i v and targets a_i b.

    Every per-sample gradient is 2 a_i^2 (v.x - b) v, so
    sum_i ||grad_J f_i||^2 / ||grad_J f||^2 = N^2 sum a^4 / (sum a^2)^2
    at every x and J with a nonzero denominator. That value is returned as
    the exact constant c, which lies in [N, N^2].
    """
    a = rng.uniform(0.2, 2.0, size=N)
    v = rng.standard_normal(n)
    b = float(rng.standard_normal())
    V = a[:, None] * v[None, :]
    c = N**2 * float(np.sum(a**4)) / float(np.sum(a**2)) ** 2
    return ProblemInstance(V, a * b), c
