"""The default verification suite run by ``siht verify``.

Each group returns one or more :class:`~siht.verify.CheckReport` rows.
Sizes are desk scale (N <= 8 for every enumerated check) and all
randomness derives from the suite seed.
"""
from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from . import objectives, synthetic, verify
from .core import InvalidArgumentError, SolverConfig, TieRule, seeded_rng
from .hardthreshold import hard_threshold
from .sampling import batch_size_lower_bound
from .solver import siht_run
from .verify import CheckReport


def _random_gradient_matrix(rng: np.random.Generator, N: int, n: int) -> objectives.GradientMatrix:
    return objectives.GradientMatrix.from_rows(rng.standard_normal((N, n)))


def _identity_group(check, name: str, seed: int, per_cell: int) -> list[CheckReport]:
    rng = seeded_rng(seed, name)
    reports = []
    for N in range(2, 8):
        for S in range(1, N + 1):
            for _ in range(per_cell):
                reports.append(check(_random_gradient_matrix(rng, N, 4), S))
    return [verify.aggregate(name, reports, seed)]


def sample_average_identity(seed: int) -> list[CheckReport]:
    return _identity_group(verify.check_sample_average_identity, "sample_average_identity", seed, 5)


def distance_identity(seed: int) -> list[CheckReport]:
    return _identity_group(verify.check_distance_identity, "distance_identity", seed, 5)


def random_feasible_point(rng: np.random.Generator, n: int, s: int, rule: TieRule = TieRule.LOWEST_INDEX):
    return hard_threshold(objectives.random_sparse_point(rng, n, s, scale=2.0), s, rule)


def descent_lemma(seed: int, pairs: int = 1000) -> list[CheckReport]:
    rng = seeded_rng(seed, "descent_lemma")
    N, n, s = 8, 6, 2
    inst = synthetic.random_instance(N, n, rng)
    L = objectives.smoothness_modulus(inst, s, "exact_restricted").L_s
    gamma = 0.9 / L
    written, corrected = [], []
    for _ in range(pairs):
        x = random_feasible_point(rng, n, s)
        g = rng.standard_normal(n) * 10.0 ** rng.integers(-1, 2)
        written.append(verify.check_descent_lemma(inst, x, g, gamma, L))
        corrected.append(verify.check_descent_lemma(inst, x, g, gamma, L, variant="unscaled_x"))
    return [
        verify.aggregate("descent_lemma", written, seed),
        verify.aggregate("descent_lemma_unscaled_x", corrected, seed),
    ]


def _descent_instances(seed: int):
    """(label, instance, s, L_s, c) for the random and the rank-one instance."""
    rng = seeded_rng(seed, "descent_instances")
    N, n, s = 8, 6, 2
    inst = synthetic.random_instance(N, n, rng)
    L = objectives.smoothness_modulus(inst, s, "exact_restricted").L_s
    c = objectives.empirical_c(inst, s, 2000, rng).value
    yield "", inst, s, L, c
    inst1, c1 = synthetic.rank_one_instance(N, n, rng)
    L1 = objectives.smoothness_modulus(inst1, s, "exact_restricted").L_s
    yield "_rank_one", inst1, s, L1, c1


def _descent_group(name: str, check, seed: int, points: int) -> list[CheckReport]:
    rows = []
    rng = seeded_rng(seed, name + "_points")
    for label, inst, s, L, c in _descent_instances(seed):
        gamma = 0.9 / L
        S_B = batch_size_lower_bound(inst.N, L, gamma, c).s_b_min
        reports = [check(inst, random_feasible_point(rng, inst.n, s), gamma, S_B, c, L) for _ in range(points)]
        rows.append(verify.aggregate(name + label, reports, seed))
    return rows


def expected_descent(seed: int) -> list[CheckReport]:
    return _descent_group("expected_descent", verify.check_expected_descent, seed, 20)


def theorem2_margin(seed: int) -> list[CheckReport]:
    return _descent_group("theorem2_margin", verify.check_theorem2_margin, seed, 20)


def claim_bound(seed: int) -> list[CheckReport]:
    rng = seeded_rng(seed, "claim_instances")
    instances = [synthetic.random_instance(5, 6, rng) for _ in range(10)]
    return [verify.check_claim_bound_sweep(instances, 3, 20, seed)]


def supermartingale(seed: int, seeds: int = 20, max_iters: int = 2000) -> list[CheckReport]:
    rng = seeded_rng(seed, "supermartingale_instance")
    N, n, s = 20, 40, 3
    inst, _ = synthetic.planted_instance(N, n, s, 0.0, rng)
    L = objectives.smoothness_modulus(inst, s).L_s
    gamma = 0.9 / L
    c = objectives.empirical_c(inst, s, 2000, rng).value
    S_B = batch_size_lower_bound(N, L, gamma, c).s_b_min
    trajectories = []
    for k in range(seeds):
        cfg = SolverConfig(
            s=s,
            gamma=gamma,
            batch_size=S_B,
            max_iters=max_iters,
            seed=seed + k,
            c_constant=c,
            smoothness=L,
            early_stop=False,
        )
        trajectories.append(siht_run(inst, cfg, record_iterates=k == 0).trajectory)
    return verify.check_supermartingale(trajectories, inst, cfg, seed=seed)


GROUPS: dict[str, Callable[[int], list[CheckReport]]] = {
    "sample_average_identity": sample_average_identity,
    "distance_identity": distance_identity,
    "descent_lemma": descent_lemma,
    "expected_descent": expected_descent,
    "theorem2_margin": theorem2_margin,
    "claim_bound": claim_bound,
    "supermartingale": supermartingale,
}


def run_suite(seed: int = 0, only: Optional[Sequence[str]] = None) -> list[CheckReport]:
    names = list(GROUPS) if not only else list(only)
    unknown = [n for n in names if n not in GROUPS]
    if unknown:
        raise InvalidArgumentError(f"unknown check(s) {unknown}; available: {sorted(GROUPS)}")
    rows: list[CheckReport] = []
    for name in names:
        rows.extend(GROUPS[name](seed))
    return rows
