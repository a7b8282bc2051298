import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from siht import objectives
from siht.core import EnumerationCapError, InvalidArgumentError, LossKind, ProblemInstance, seeded_rng
from siht.synthetic import planted_instance, random_instance, rank_one_instance


def central_difference(fun, x, j):
    h = 1e-5 * (1.0 + abs(x[j]))
    e = np.zeros_like(x)
    e[j] = h
    return (fun(x + e) - fun(x - e)) / (2 * h)


def fd_gradient(fun, x):
    return np.array([central_difference(fun, x, j) for j in range(x.size)])


def test_softplus_stable():
    t = np.array([-800.0, -30.0, 0.0, 30.0, 800.0])
    sp = objectives.softplus(t)
    assert np.all(np.isfinite(sp))
    assert sp[2] == pytest.approx(math.log(2.0))
    assert sp[4] == pytest.approx(800.0)
    assert sp[0] == pytest.approx(0.0, abs=1e-300)
    sg = objectives.sigmoid(t)
    assert sg.tolist()[2] == 0.5 and sg[0] == 0.0 and sg[4] == 1.0


def test_values_against_direct_formula():
    rng = seeded_rng(1, "test")
    inst = random_instance(6, 4, rng)
    x = rng.standard_normal(4)
    direct = sum((inst.V[i] @ x - inst.targets[i]) ** 2 for i in range(6)) / 6
    assert objectives.value(inst, x) == pytest.approx(direct, rel=1e-14)
    assert objectives.sample_value(inst, 2, x) == pytest.approx((inst.V[2] @ x - inst.targets[2]) ** 2, rel=1e-14)

    log_inst = random_instance(6, 4, rng, LossKind.LOGISTIC)
    t = log_inst.V @ x
    direct = np.mean(np.log1p(np.exp(t)) - log_inst.targets * t)
    assert objectives.value(log_inst, x) == pytest.approx(direct, rel=1e-12)
    X = rng.standard_normal((3, 4))
    assert objectives.values(log_inst, X) == pytest.approx([objectives.value(log_inst, r) for r in X], rel=1e-13)


@pytest.mark.parametrize("loss", list(LossKind))
def test_gradients_consistent(loss):
    rng = seeded_rng(2, "test")
    inst = random_instance(7, 5, rng, loss)
    x = rng.standard_normal(5)
    G = objectives.per_sample_gradients(inst, x)
    assert (G.n, G.N) == (5, 7)
    for i in range(7):
        assert np.allclose(G.rows[i], objectives.sample_gradient(inst, i, x), rtol=1e-14, atol=0)
    assert np.allclose(G.mean, objectives.full_gradient(inst, x), rtol=1e-13, atol=1e-15)
    assert np.allclose(objectives.minibatch_gradient(inst, range(7), x), objectives.full_gradient(inst, x), atol=1e-14)
    assert np.allclose(objectives.minibatch_gradient(inst, [1, 4], x), G.batch_mean([1, 4]), atol=1e-14)


def test_minibatch_rejects_bad_batches():
    inst = random_instance(4, 3, seeded_rng(0, "t"))
    for bad in ([], [0, 0], [4], [-1]):
        with pytest.raises(InvalidArgumentError):
            objectives.minibatch_gradient(inst, bad, np.zeros(3))
    with pytest.raises(InvalidArgumentError):
        objectives.sample_gradient(inst, 4, np.zeros(3))


@pytest.mark.parametrize("loss", list(LossKind))
def test_full_gradient_finite_differences(loss):
    rng = seeded_rng(3, "fd")
    inst = random_instance(8, 5, rng, loss)
    for _ in range(10):
        x = rng.standard_normal(5)
        fd = fd_gradient(lambda z: objectives.value(inst, z), x)
        g = objectives.full_gradient(inst, x)
        assert np.linalg.norm(g - fd) <= 1e-6 * max(np.linalg.norm(g), 1.0)


def test_gradient_matrix_from_rows():
    rows = np.arange(6.0).reshape(3, 2)
    G = objectives.GradientMatrix.from_rows(rows)
    assert G.G.shape == (2, 3)
    assert G.mean.tolist() == [2.0, 3.0]
    assert np.array_equal(G.rows, rows)


class TestSmoothness:
    def test_exact_is_at_most_spectral(self):
        rng = seeded_rng(4, "L")
        inst = random_instance(9, 7, rng)
        spec = objectives.smoothness_modulus(inst, 2).L_s
        exact = objectives.smoothness_modulus(inst, 2, "exact_restricted").L_s
        assert exact <= spec * (1 + 1e-12)
        # with 2s >= n the restriction is vacuous
        full = objectives.smoothness_modulus(inst, 4, "exact_restricted").L_s
        assert full == pytest.approx(spec, rel=1e-12)

    def test_exact_matches_brute_force(self):
        rng = seeded_rng(5, "L")
        inst = random_instance(6, 5, rng)
        best = 0.0
        for c in itertools.combinations(range(5), 2):
            sub = inst.V[:, c]
            best = max(best, np.linalg.norm(sub, 2) ** 2)
        assert objectives.smoothness_modulus(inst, 1, "exact_restricted").L_s == pytest.approx(2 * best / 6, rel=1e-12)

    @pytest.mark.parametrize("method", ["spectral_upper_bound", "exact_restricted"])
    def test_restricted_smoothness_inequality(self, method):
        rng = seeded_rng(6, "L")
        inst = random_instance(10, 8, rng)
        s = 2
        L = objectives.smoothness_modulus(inst, s, method).L_s
        for _ in range(200):
            x = objectives.random_sparse_point(rng, 8, s, 3.0)
            y = objectives.random_sparse_point(rng, 8, s, 3.0)
            fx, fy = objectives.value(inst, x), objectives.value(inst, y)
            g = objectives.full_gradient(inst, x)
            assert fy <= fx + g @ (y - x) + L / 2 * np.sum((y - x) ** 2) + 1e-10 * (1 + abs(fy))

    def test_exact_is_tight_for_some_pair(self):
        # the maximising 2s-column block is attained by a difference of s-sparse points
        rng = seeded_rng(7, "L")
        inst = random_instance(6, 4, rng)
        L = objectives.smoothness_modulus(inst, 1, "exact_restricted").L_s
        best = 0.0
        for c in itertools.combinations(range(4), 2):
            w, U = np.linalg.eigh(inst.V[:, c].T @ inst.V[:, c])
            d = np.zeros(4)
            d[list(c)] = U[:, -1]
            best = max(best, 2 * float(np.sum((inst.V @ d) ** 2)) / 6)
        assert best == pytest.approx(L, rel=1e-12)

    def test_logistic_spectral(self):
        inst = random_instance(5, 3, seeded_rng(0, "L"), LossKind.LOGISTIC)
        lam = np.linalg.eigvalsh(inst.V.T @ inst.V)[-1]
        assert objectives.smoothness_modulus(inst, 1).L_s == pytest.approx(lam / 20, rel=1e-13)
        with pytest.raises(InvalidArgumentError):
            objectives.smoothness_modulus(inst, 1, "exact_restricted")

    def test_cap(self):
        inst = random_instance(3, 21, seeded_rng(0, "L"))
        with pytest.raises(EnumerationCapError):
            objectives.smoothness_modulus(inst, 2, "exact_restricted")
        with pytest.raises(InvalidArgumentError):
            objectives.smoothness_modulus(inst, 2, "nonsense")


class TestConstantC:
    def test_identity_design(self):
        N = 5
        inst = ProblemInstance(np.eye(N), np.arange(N, dtype=float))
        assert objectives.claim_c_bound(inst, [0]) == pytest.approx(N**2)
        assert objectives.claim_c_bound(inst, [0], "literal") == math.inf
        # all columns selected: V_J V_J^T = I, every singular value is 1
        assert objectives.claim_c_bound(inst, range(N), "literal") == pytest.approx(N**2)

    def test_identical_rows_ratio_is_N(self):
        N = 6
        v = np.array([1.0, -2.0, 0.5, 3.0])
        inst = ProblemInstance(np.tile(v, (N, 1)), np.full(N, 0.7))
        x = np.array([0.3, 0.0, -1.0, 0.0])
        num, den = objectives.restricted_gradient_ratio_terms(inst, [0, 2, 3], x)
        assert num / den == pytest.approx(N, rel=1e-12)

    def test_rank_one_constant(self):
        rng = seeded_rng(8, "c")
        inst, c = rank_one_instance(7, 5, rng)
        assert 7 <= c <= 49
        for _ in range(20):
            x = rng.standard_normal(5)
            J = objectives.random_index_set(rng, 5, 3)
            num, den = objectives.restricted_gradient_ratio_terms(inst, J, x)
            assert num / den == pytest.approx(c, rel=1e-9)

    def test_ratio_terms_against_loop(self):
        rng = seeded_rng(9, "c")
        inst = random_instance(5, 6, rng, LossKind.LOGISTIC)
        x = rng.standard_normal(6)
        J = [1, 4]
        num = sum(float(np.sum(objectives.sample_gradient(inst, i, x)[J] ** 2)) for i in range(5))
        g = objectives.full_gradient(inst, x)[J]
        assert objectives.restricted_gradient_ratio_terms(inst, J, x) == pytest.approx((num, float(g @ g)), rel=1e-12)

    def test_ratio_is_at_least_one_over_N(self):
        # Cauchy-Schwarz: ||sum_i g_i / N||^2 <= (1/N) sum ||g_i||^2
        rng = seeded_rng(10, "c")
        inst = random_instance(6, 5, rng)
        for _ in range(50):
            num, den = objectives.restricted_gradient_ratio_terms(inst, [0, 3], rng.standard_normal(5))
            assert num >= inst.N * den * (1 - 1e-12)

    def test_empirical_c_covers_samples(self):
        rng = seeded_rng(11, "c")
        inst = random_instance(6, 5, rng)
        est = objectives.empirical_c(inst, 2, 300, seeded_rng(1, "c"))
        assert est.value == pytest.approx(1.5 * est.max_ratio)
        assert est.samples == 300
        assert est.max_ratio >= inst.N

    def test_empirical_c_degenerate(self):
        inst = ProblemInstance(np.zeros((3, 4)), np.zeros(3))
        with pytest.raises(Exception) as err:
            objectives.empirical_c(inst, 2, 10, seeded_rng(0, "c"))
        assert "restricted gradients" in str(err.value)

    def test_claim_inequality_fails_near_null_space(self):
        # residual orthogonal to the selected column: the per-sample terms stay
        # positive while the averaged restricted gradient vanishes
        V = np.array([[1.0, 0.0], [1.0, 1.0]])
        inst = ProblemInstance(V, np.array([1.0, -1.0 + 1e-6]))
        res = objectives.claim_c_inequality(inst, [0], np.zeros(2))
        assert res.grad_norm_sq < 1e-11 and res.lhs > 1.0
        assert not res.holds


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 6), st.integers(3, 6), st.integers(0, 2**32 - 1))
def test_planted_instance_shapes(N, n, seed):
    rng = seeded_rng(seed, "planted")
    inst, x_star = planted_instance(N, n, 2, 0.0, rng)
    assert inst.V.shape == (N, n)
    assert np.count_nonzero(x_star) == 2
    assert np.allclose(inst.V @ x_star, inst.targets)
    assert objectives.value(inst, x_star) == pytest.approx(0.0, abs=1e-20)
