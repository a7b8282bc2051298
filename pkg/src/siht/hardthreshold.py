"""Hard thresholding H_s with deterministic tie-breaking."""
from __future__ import annotations

import numpy as np

from .core import InvalidArgumentError, SparseIterate, SupportSet, TieRule, as_vector


def top_indices(x: np.ndarray, s: int, rule: TieRule = TieRule.LOWEST_INDEX) -> np.ndarray:
    """Sorted indices of the ``s`` largest ``|x_i|``, no validation.

    Ordering is by decreasing magnitude, ties resolved by index order
    (ascending for ``lowest_index``, descending for ``highest_index``).
    Zero entries are picked up as padding when ``x`` has fewer than ``s``
    nonzeros, following the same order.
    """
    mag = np.abs(x)
    order_key = np.arange(x.shape[0])
    if rule is TieRule.HIGHEST_INDEX:
        order_key = -order_key
    # lexsort sorts by the last key first
    order = np.lexsort((order_key, -mag))
    return np.sort(order[:s])


def top_indices_rows(W: np.ndarray, s: int, rule: TieRule = TieRule.LOWEST_INDEX) -> np.ndarray:
    """Row-wise :func:`top_indices` for a 2-D array; returns shape (m, s)."""
    W = np.asarray(W)
    key = np.arange(W.shape[1])
    if rule is TieRule.HIGHEST_INDEX:
        key = -key
    order = np.lexsort((np.broadcast_to(key, W.shape), -np.abs(W)), axis=-1)
    return np.sort(order[:, :s], axis=1)


def hard_threshold_rows(W: np.ndarray, s: int, rule: TieRule = TieRule.LOWEST_INDEX) -> tuple[np.ndarray, np.ndarray]:
    """Threshold every row of ``W``; returns (thresholded rows, supports)."""
    idx = top_indices_rows(W, s, rule)
    out = np.zeros_like(W, dtype=np.float64)
    np.put_along_axis(out, idx, np.take_along_axis(W, idx, axis=1), axis=1)
    return out, idx


def _check_s(s, n: int):
    if int(s) != s or not 1 <= s < n:
        raise InvalidArgumentError(f"sparsity level must satisfy 1 <= s < n={n}, got {s!r}")


def top_support(x, s: int, rule: TieRule = TieRule.LOWEST_INDEX) -> SupportSet:
    x = as_vector(x)
    _check_s(s, x.shape[0])
    return SupportSet(tuple(top_indices(x, int(s), TieRule(rule))), x.shape[0], int(s))


def hard_threshold(x, s: int, rule: TieRule = TieRule.LOWEST_INDEX) -> SparseIterate:
    """Project ``x`` onto {z : ||z||_0 <= s}.

    Returns ``x`` restricted to :func:`top_support`; this is one element of
    argmin_{||z||_0 <= s} ||z - x||_2, the one selected by ``rule``.

    >>> hard_threshold([1.0, -3.0, 1.0], 2).vector
    array([ 1., -3.,  0.])
    """
    support = top_support(x, s, rule)
    return SparseIterate.from_dense(x, support)
