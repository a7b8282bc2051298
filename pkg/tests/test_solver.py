import numpy as np
import pytest

from siht import objectives
from siht.core import (
    InvalidArgumentError,
    MonotonicityError,
    NonFiniteObjectiveError,
    SolverConfig,
    TieRule,
    seeded_rng,
)
from siht.hardthreshold import hard_threshold
from siht.sampling import batch_size_lower_bound
from siht.solver import STOP_F_TAIL, STOP_MAX_ITERS, STOP_SUPPORT, iht_run, initial_iterate, siht_run
from siht.synthetic import planted_instance, random_instance


@pytest.fixture(scope="module")
def planted():
    inst, x_star = planted_instance(20, 30, 3, 0.0, seeded_rng(0, "solver-test"))
    L = objectives.smoothness_modulus(inst, 3).L_s
    return inst, x_star, L


def test_initial_iterate():
    cfg = SolverConfig(s=2, gamma=0.1, batch_size=1)
    x, supp = initial_iterate(5, 2, cfg)
    assert x.tolist() == [0.0] * 5 and supp.tolist() == [0, 1]
    x, supp = initial_iterate(5, 2, SolverConfig(s=2, gamma=0.1, batch_size=1, tie_rule=TieRule.HIGHEST_INDEX))
    assert supp.tolist() == [3, 4]
    with pytest.raises(InvalidArgumentError):
        initial_iterate(5, 2, cfg, x0=[1.0, 1.0, 1.0, 0.0, 0.0])


def test_replay_matches_reference_loop(planted):
    """Recompute every step from the recorded batches with the public helpers."""
    inst, _, L = planted
    cfg = SolverConfig(s=3, gamma=0.5 / L, batch_size=7, max_iters=60, seed=5, enforce_bound=False)
    res = siht_run(inst, cfg, record_iterates=True)
    tr = res.trajectory
    x = np.zeros(inst.n)
    for k in range(tr.iterations):
        assert np.allclose(tr.iterates[k], x, rtol=1e-12, atol=1e-14)
        assert tr.f[k] == pytest.approx(objectives.value(inst, x), rel=1e-12, abs=1e-300)
        g = objectives.minibatch_gradient(inst, tr.batch[k], x)
        x = hard_threshold(x - cfg.gamma * g, 3).vector
    assert np.allclose(res.x.vector, x, rtol=1e-12, atol=1e-14)
    assert tr.batch[-1] == ()
    assert all(len(b) == 7 for b in tr.batch[:-1])


def test_feasibility_and_recorded_gradient(planted):
    inst, _, L = planted
    cfg = SolverConfig(s=3, gamma=0.9 / L, batch_size=5, max_iters=100, seed=1, enforce_bound=False)
    tr = siht_run(inst, cfg, record_iterates=True).trajectory
    for k in range(len(tr)):
        assert np.count_nonzero(tr.iterates[k]) <= 3
        assert len(tr.support[k]) == 3
        assert set(np.flatnonzero(tr.iterates[k])) <= set(tr.support[k])
        g = objectives.full_gradient(inst, tr.iterates[k])[list(tr.support[k])]
        assert tr.grad_norm_sq[k] == pytest.approx(float(g @ g), rel=1e-10, abs=1e-300)


def test_reproducible_and_seed_dependent(planted):
    inst, _, L = planted
    cfg = SolverConfig(s=3, gamma=0.9 / L, batch_size=5, max_iters=50, seed=3, enforce_bound=False)
    a, b = siht_run(inst, cfg).trajectory, siht_run(inst, cfg).trajectory
    assert a == b
    c = siht_run(inst, SolverConfig(s=3, gamma=0.9 / L, batch_size=5, max_iters=50, seed=4, enforce_bound=False))
    assert c.trajectory.batch != a.batch


def test_full_batch_equivalence(planted):
    inst, _, L = planted
    cfg = SolverConfig(s=3, gamma=0.6 / L, batch_size=inst.N, max_iters=300, seed=9, smoothness=L)
    a = siht_run(inst, cfg, record_iterates=True)
    b = iht_run(inst, cfg, record_iterates=True)
    assert a.trajectory == b.trajectory
    assert np.array_equal(a.trajectory.iterates, b.trajectory.iterates)
    # the seed does not matter for the full batch
    c = iht_run(inst, SolverConfig(s=3, gamma=0.6 / L, batch_size=1, max_iters=300, seed=1234, smoothness=L))
    assert c.trajectory.f == a.trajectory.f


@pytest.mark.parametrize("factor", [0.3, 0.6, 0.9])
def test_full_batch_monotone(factor):
    rng = seeded_rng(1, "monotone")
    inst = random_instance(15, 10, rng)
    L = objectives.smoothness_modulus(inst, 3, "exact_restricted").L_s
    res = iht_run(inst, SolverConfig(s=3, gamma=factor / L, batch_size=1, max_iters=500, smoothness=L))
    f = np.array(res.trajectory.f)
    assert np.all(np.diff(f) <= 1e-12 * np.abs(f[:-1]) + 1e-24 * f[0])


def test_underestimated_smoothness_trips_monotonicity():
    rng = seeded_rng(2, "monotone")
    inst = random_instance(15, 10, rng)
    L = objectives.smoothness_modulus(inst, 3, "exact_restricted").L_s
    wrong = L / 4  # gamma = 0.9 / wrong = 3.6 / L is far beyond the stable range
    with pytest.raises(MonotonicityError) as err:
        iht_run(inst, SolverConfig(s=3, gamma=0.9 / wrong, batch_size=1, max_iters=200, smoothness=wrong))
    assert err.value.current > err.value.previous


def test_non_finite_objective_aborts():
    inst = random_instance(10, 6, seeded_rng(3, "blowup"))
    cfg = SolverConfig(s=2, gamma=1e3, batch_size=10, max_iters=10_000, early_stop=False)
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(NonFiniteObjectiveError) as err:
            siht_run(inst, cfg)
    assert err.value.iteration > 0


def test_zero_residual_fixed_point(planted):
    inst, x_star, L = planted
    cfg = SolverConfig(s=3, gamma=0.9 / L, batch_size=inst.N, max_iters=50, smoothness=L, early_stop=False)
    res = iht_run(inst, cfg, x0=x_star)
    assert res.stop_reason == STOP_MAX_ITERS
    assert max(res.trajectory.f) < 1e-28
    assert np.allclose(res.x.vector, x_star)


def test_planted_recovery():
    inst, x_star = planted_instance(50, 100, 5, 0.0, seeded_rng(0, "instance"))
    L = objectives.smoothness_modulus(inst, 5).L_s
    c = objectives.empirical_c(inst, 5, 500, seeded_rng(0, "c")).value
    S_B = batch_size_lower_bound(inst.N, L, 0.9 / L, c).s_b_min
    cfg = SolverConfig(s=5, gamma=0.9 / L, batch_size=S_B, max_iters=5000, c_constant=c, smoothness=L)
    res = siht_run(inst, cfg)
    assert res.final_value < 1e-8
    assert res.x.support.indices == tuple(np.flatnonzero(x_star))
    assert res.stop_reason in (STOP_F_TAIL, STOP_SUPPORT)


def test_wrong_support_fixed_point_is_reported(planted):
    # IHT may settle on a wrong support; the run stops there with f > 0
    inst, _, L = planted
    res = iht_run(inst, SolverConfig(s=3, gamma=0.9 / L, batch_size=1, max_iters=5000, smoothness=L))
    assert res.stop_reason == STOP_SUPPORT
    assert res.final_value > 1e-3
    assert res.trajectory.grad_norm_sq[-1] < 1e-10


def test_stopping_rules(planted):
    inst, _, L = planted
    base = dict(s=3, gamma=0.9 / L, batch_size=inst.N, smoothness=L)
    assert siht_run(inst, SolverConfig(max_iters=5, **base)).iterations == 5
    res = siht_run(inst, SolverConfig(max_iters=10_000, window=50, **base))
    assert res.stop_reason in (STOP_F_TAIL, STOP_SUPPORT)
    assert res.iterations < 10_000
    res = siht_run(inst, SolverConfig(max_iters=700, early_stop=False, **base))
    assert res.stop_reason == STOP_MAX_ITERS and res.iterations == 700


def test_f_tail_rule_on_plateau():
    # noisy problem: f converges to a positive floor; grad_tol=0 disables the support rule
    inst, _ = planted_instance(20, 30, 3, 0.5, seeded_rng(4, "noisy"))
    L = objectives.smoothness_modulus(inst, 3).L_s
    cfg = SolverConfig(s=3, gamma=0.9 / L, batch_size=1, max_iters=20_000, smoothness=L, grad_tol=0.0)
    res = iht_run(inst, cfg)
    assert res.stop_reason == STOP_F_TAIL
    tail = res.trajectory.f[-200:]
    assert max(tail) - min(tail) < 1e-10 * (1 + abs(res.final_value))


def test_batch_below_bound_rejected(planted):
    inst, _, L = planted
    cfg = SolverConfig(s=3, gamma=0.9 / L, batch_size=2, c_constant=1e6, smoothness=L)
    with pytest.raises(InvalidArgumentError, match="below the lower bound"):
        siht_run(inst, cfg)
    siht_run(inst, SolverConfig(s=3, gamma=0.9 / L, batch_size=2, c_constant=1e6, smoothness=L, enforce_bound=False, max_iters=3))


def test_logistic_runs():
    inst, _ = planted_instance(30, 8, 2, 0.0, seeded_rng(5, "logit"), loss="logistic")
    L = objectives.smoothness_modulus(inst, 2).L_s
    res = iht_run(inst, SolverConfig(s=2, gamma=0.9 / L, batch_size=1, max_iters=300, smoothness=L))
    assert res.final_value < res.trajectory.f[0]
