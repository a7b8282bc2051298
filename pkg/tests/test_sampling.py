import itertools
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from siht.core import EnumerationCapError, InvalidArgumentError, seeded_rng
from siht.sampling import (
    BatchSample,
    batch_size_lower_bound,
    descent_ratio,
    draw_batch,
    draw_batch_indices,
    enumerate_batches,
    inclusion_covariance,
    batch_size_condition,
    zeta,
)


def test_enumeration_count_and_order():
    batches = enumerate_batches(10, 5)
    assert len(batches) == 252
    assert [b.indices for b in batches] == list(itertools.combinations(range(10), 5))
    assert enumerate_batches(4, 4)[0].indices == (0, 1, 2, 3)


def test_enumeration_cap():
    with pytest.raises(EnumerationCapError):
        enumerate_batches(30, 15, cap=10**6)


@pytest.mark.parametrize("N,S", [(0, 1), (3, 0), (3, 4)])
def test_bad_sizes(N, S):
    with pytest.raises(InvalidArgumentError):
        draw_batch(N, S, seeded_rng(0))


def test_batch_sample_validation():
    b = BatchSample((0, 3), 5)
    assert b.size == 2
    assert b.inclusion_vector().tolist() == [1.0, 0.0, 0.0, 1.0, 0.0]
    for bad in [(), (1, 1), (3, 2), (5,)]:
        with pytest.raises(InvalidArgumentError):
            BatchSample(bad, 5)


def test_draws_are_uniform_over_subsets():
    # 6 subsets of size 2 from 4; each count within 3 binomial standard deviations
    rng = seeded_rng(0, "uniformity")
    draws = 60000
    counts = {c: 0 for c in itertools.combinations(range(4), 2)}
    for _ in range(draws):
        counts[draw_batch(4, 2, rng).indices] += 1
    p = 1 / 6
    sd = math.sqrt(draws * p * (1 - p))
    for c, k in counts.items():
        assert abs(k - draws * p) <= 3 * sd, (c, k)
    chi2 = sum((k - draws * p) ** 2 / (draws * p) for k in counts.values())
    assert chi2 < 20.5  # 0.999 quantile of chi-square with 5 degrees of freedom


def test_draws_are_reproducible():
    a = [draw_batch_indices(10, 3, seeded_rng(42, "batches")).tolist() for _ in range(2)]
    assert a[0] == a[1] == [0, 2, 3]
    assert draw_batch_indices(5, 5, seeded_rng(0)).tolist() == [0, 1, 2, 3, 4]


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 12), st.data())
def test_draw_is_a_valid_batch(N, data):
    S = data.draw(st.integers(1, N))
    idx = draw_batch_indices(N, S, seeded_rng(data.draw(st.integers(0, 2**63)), "b"))
    assert len(idx) == S and len(set(idx.tolist())) == S
    assert np.all(np.diff(idx) > 0) and idx[0] >= 0 and idx[-1] < N


@pytest.mark.parametrize("N", range(2, 8))
def test_inclusion_covariance_matches_enumeration(N):
    for S in range(1, N + 1):
        Z = np.array([b.inclusion_vector() for b in enumerate_batches(N, S)])
        mean = Z.mean(axis=0)
        cov = (Z - mean).T @ (Z - mean) / Z.shape[0]
        assert np.allclose(inclusion_covariance(N, S), cov, atol=1e-14)


def test_zeta_values():
    assert zeta(10, 5) == pytest.approx(1 / 9)
    assert zeta(7, 7) == 0.0
    assert zeta(7, 1) == 1.0
    with pytest.raises(InvalidArgumentError):
        zeta(1, 1)


def test_bound_example():
    # N=10, L*gamma=0.5, c=20: a = 1/3, N / (1 + (1/3) * 9 / (20/10 - 1)) = 2.5
    b = batch_size_lower_bound(10, 1.0, 0.5, 20.0)
    assert b.formula == pytest.approx(2.5)
    assert b.s_b_min == 3
    assert not b.degenerate
    assert b.condition_holds


def test_bound_degenerate_when_c_at_most_N():
    b = batch_size_lower_bound(10, 1.0, 0.5, 10.0)
    assert b.degenerate and b.s_b_min == 1
    assert math.isnan(b.formula)
    assert batch_size_lower_bound(10, 1.0, 0.5, 3.0).s_b_min == 1


def test_bound_infinite_c_needs_full_batch():
    b = batch_size_lower_bound(10, 1.0, 0.5, math.inf)
    assert b.s_b_min == 10 and b.formula == 10.0


@pytest.mark.parametrize("args", [(1, 1.0, 0.5, 20.0), (10, 1.0, 1.0, 20.0), (10, 0.0, 0.5, 20.0), (10, 1.0, 0.5, 0.0)])
def test_bound_rejects(args):
    with pytest.raises(InvalidArgumentError):
        batch_size_lower_bound(*args)


@settings(max_examples=300, deadline=None)
@given(
    st.integers(2, 500),
    st.floats(0.01, 0.99),
    st.floats(1.0001, 1e6),
)
def test_bound_is_smallest_size_with_nonnegative_condition(N, lg, c_over_N):
    c = c_over_N * N
    assume(c > N)
    b = batch_size_lower_bound(N, 1.0, lg, c)
    assert 1 <= b.s_b_min <= N
    assert batch_size_condition(N, b.s_b_min, 1.0, lg, c) >= 0.0
    if b.s_b_min > 1:
        below = batch_size_condition(N, b.s_b_min - 1, 1.0, lg, c)
        assert below < 1e-9 * max(1.0, c / N)


def test_condition_increases_with_batch_size():
    vals = [batch_size_condition(20, S, 1.0, 0.9, 200.0) for S in range(1, 20)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert batch_size_condition(20, 20, 1.0, 0.9, 200.0) == math.inf


def test_descent_ratio():
    assert descent_ratio(2.0, 0.25) == pytest.approx(1 / 3)
