"""Numerical checkers for the sampling identities and descent inequalities.

Every checker returns a :class:`CheckReport`. Identities are compared at a
relative tolerance; inequalities report ``gap = lhs - rhs`` and pass when
``gap <= tol``. Expectations over batches are computed exactly by
enumeration when C(N, S_B) is under the cap, and by Monte Carlo with a
3-standard-error allowance otherwise.

Expectations over the random support of Y(B) are always taken under the
distribution induced by the batch: each enumerated or sampled batch yields
one Y(B) and one support.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, TextIO

import numpy as np

from . import objectives
from .core import (
    InvalidArgumentError,
    ProblemInstance,
    SolverConfig,
    SparseIterate,
    TieRule,
    TrajectoryRecord,
    seeded_rng,
)
from .hardthreshold import hard_threshold_rows, top_indices
from .objectives import GradientMatrix
from .solver import monotone_tolerance
from .sampling import (
    ENUMERATION_CAP,
    batch_size_lower_bound,
    descent_ratio,
    draw_batch_indices,
    enumerate_batches,
    inclusion_covariance,
    batch_size_condition,
    zeta,
)

EXACT_PASS = "exact_pass"
MC_PASS = "mc_pass"
FAIL = "fail"

IDENTITY_RTOL = 1e-10
INEQUALITY_RTOL = 1e-10
MC_SIGMAS = 3.0
MC_MIN_DRAWS = 10_000

CSV_COLUMNS = ("name", "status", "lhs", "rhs", "gap", "tol", "trials", "seed")

BATCH_BINDING_NOTE = "expectation over the support of Y(B) taken under the batch-induced distribution"


@dataclass(frozen=True)
class CheckReport:
    name: str
    status: str
    lhs: float
    rhs: float
    gap: float
    tol: float
    trials: int
    seed: Optional[int] = None
    notes: tuple[str, ...] = field(default=(), compare=False)

    @property
    def passed(self) -> bool:
        return self.status != FAIL

    def csv_row(self) -> list[str]:
        return [
            self.name,
            self.status,
            _fmt(self.lhs),
            _fmt(self.rhs),
            _fmt(self.gap),
            _fmt(self.tol),
            str(self.trials),
            "" if self.seed is None else str(self.seed),
        ]


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def write_reports_csv(reports: Iterable[CheckReport], out: TextIO):
    w = csv.writer(out, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        w.writerow(r.csv_row())


def reports_to_csv(reports: Iterable[CheckReport]) -> str:
    buf = io.StringIO()
    write_reports_csv(reports, buf)
    return buf.getvalue()


def _rel_gap(a: float, b: float, scale: float) -> float:
    denom = max(abs(a), abs(b), scale)
    return 0.0 if denom == 0.0 else abs(a - b) / denom


def _inclusion_matrix(batches) -> np.ndarray:
    return np.array([b.inclusion_vector() for b in batches])


# ---------------------------------------------------------------------------
# Sample-average identities
# ---------------------------------------------------------------------------


def enumerated_batch_means(G: GradientMatrix, batch_size: int, cap: int = ENUMERATION_CAP) -> np.ndarray:
    """Batch means G(B) for every batch, one row per batch in lexicographic order."""
    Z = _inclusion_matrix(enumerate_batches(G.N, batch_size, cap))
    return Z @ G.rows / batch_size


def check_sample_average_identity(
    G: GradientMatrix, batch_size: int, cap: int = ENUMERATION_CAP, rtol: float = IDENTITY_RTOL
) -> CheckReport:
    """E||G(B)||^2 = trace(G^T G Cov(z)) / S_B^2 + ||mean||^2.

    The left side is averaged over all batches; the right side uses
    :func:`siht.sampling.inclusion_covariance`. The gap is relative to the
    largest of the two sides and the mean squared per-sample norm.
    """
    means = enumerated_batch_means(G, batch_size, cap)
    lhs = float(np.mean(np.sum(means**2, axis=1)))
    gbar = G.mean
    gram = G.G.T @ G.G
    rhs = float(np.trace(gram @ inclusion_covariance(G.N, batch_size))) / batch_size**2 + float(gbar @ gbar)
    scale = float(np.mean(np.sum(G.rows**2, axis=1)))
    gap = _rel_gap(lhs, rhs, scale)
    status = EXACT_PASS if gap <= rtol else FAIL
    return CheckReport("sample_average_identity", status, lhs, rhs, gap, rtol, means.shape[0])


def distance_identity_terms(G: GradientMatrix, batch_size: int, cap: int = ENUMERATION_CAP) -> tuple[float, float, float]:
    """(enumerated E||G(B) - mean||^2, first closed form, second closed form)."""
    N, S = G.N, batch_size
    if N < 2:
        raise InvalidArgumentError("the distance identity needs N >= 2")
    means = enumerated_batch_means(G, S, cap)
    gbar = G.mean
    enumerated = float(np.mean(np.sum((means - gbar) ** 2, axis=1)))
    sq_norms = np.sum(G.rows**2, axis=1)
    closed_a = (N - S) / (S * N * (N - 1)) * (float(np.sum(sq_norms)) - N * float(gbar @ gbar))
    closed_b = (N - S) / (S * N) / (N - 1) * float(np.sum((G.rows - gbar) ** 2))
    return enumerated, closed_a, closed_b


def check_distance_identity(
    G: GradientMatrix, batch_size: int, cap: int = ENUMERATION_CAP, rtol: float = IDENTITY_RTOL
) -> CheckReport:
    """Enumerated E||G(B) - mean||^2 against both finite-population closed forms."""
    enumerated, closed_a, closed_b = distance_identity_terms(G, batch_size, cap)
    scale = float(np.mean(np.sum(G.rows**2, axis=1)))
    gap = max(
        _rel_gap(enumerated, closed_a, scale),
        _rel_gap(enumerated, closed_b, scale),
        _rel_gap(closed_a, closed_b, scale),
    )
    status = EXACT_PASS if gap <= rtol else FAIL
    return CheckReport(
        "distance_identity",
        status,
        enumerated,
        closed_a,
        gap,
        rtol,
        math.comb(G.N, batch_size),
        notes=(f"second closed form = {closed_b!r}",),
    )


# ---------------------------------------------------------------------------
# Descent inequalities
# ---------------------------------------------------------------------------

DESCENT_VARIANTS = ("as_written", "g_inner", "unscaled_x")


@dataclass(frozen=True)
class DescentTerms:
    """Pieces of the single-step bound for y = H_s(x - gamma g).

    ``bounds`` maps each variant of the last term to the full right-hand side:
    ``as_written`` uses gamma <delta, x> on I minus supp(y), ``g_inner`` uses
    gamma <delta, g> there, and ``unscaled_x`` uses <delta, x> without gamma.
    """

    f_x: float
    f_y: float
    y: np.ndarray
    support_y: tuple[int, ...]
    bounds: dict


def descent_lemma_terms(
    inst: ProblemInstance,
    x: SparseIterate,
    g,
    gamma: float,
    L_s: float,
    rule: TieRule = TieRule.LOWEST_INDEX,
) -> DescentTerms:
    g = np.asarray(g, dtype=np.float64)
    s = x.s
    Ix = x.support.array
    w = x.vector - gamma * g
    Iy = top_indices(w, s, rule)
    y = np.zeros_like(w)
    y[Iy] = w[Iy]
    delta = g - objectives.full_gradient(inst, x.vector)
    I = np.union1d(Ix, Iy)
    rest = np.setdiff1d(I, Iy)
    f_x = objectives.value(inst, x.vector)
    base = (
        f_x
        - gamma / 2 * (1 - L_s * gamma) * float(g[Iy] @ g[Iy])
        - gamma / 2 * float(g[Ix] @ g[Ix])
        + gamma * float(delta[Iy] @ g[Iy])
    )
    dx = float(delta[rest] @ x.vector[rest])
    dg = float(delta[rest] @ g[rest])
    bounds = {
        "as_written": base + gamma * dx,
        "g_inner": base + gamma * dg,
        "unscaled_x": base + dx,
    }
    return DescentTerms(f_x, objectives.value(inst, y), y, tuple(int(i) for i in Iy), bounds)


def check_descent_lemma(
    inst: ProblemInstance,
    x: SparseIterate,
    g,
    gamma: float,
    L_s: float,
    rule: TieRule = TieRule.LOWEST_INDEX,
    variant: str = "as_written",
    rtol: float = INEQUALITY_RTOL,
) -> CheckReport:
    """Single-step descent bound for y = H_s(x - gamma g), any direction g.

    On failure the notes carry the other variants of the last term so the
    reading can be diagnosed; the status reflects ``variant`` only.
    """
    if variant not in DESCENT_VARIANTS:
        raise InvalidArgumentError(f"unknown variant {variant!r}; expected one of {DESCENT_VARIANTS}")
    if not (gamma > 0 and L_s > 0 and gamma * L_s <= 1.0):
        raise InvalidArgumentError(f"need 0 < gamma <= 1/L_s, got gamma={gamma!r}, L_s={L_s!r}")
    terms = descent_lemma_terms(inst, x, g, gamma, L_s, rule)
    rhs = terms.bounds[variant]
    tol = rtol * (1.0 + abs(terms.f_x))
    gap = terms.f_y - rhs
    notes: tuple[str, ...] = ()
    status = EXACT_PASS
    if gap > tol:
        status = FAIL
        notes = tuple(
            f"{name}: rhs={b!r} gap={terms.f_y - b!r} {'holds' if terms.f_y - b <= tol else 'fails'}"
            for name, b in terms.bounds.items()
        )
    return CheckReport(f"descent_lemma[{variant}]", status, terms.f_y, rhs, gap, tol, 1, notes=notes)


def _batch_outcomes(
    inst: ProblemInstance,
    x: SparseIterate,
    gamma: float,
    Z: np.ndarray,
    batch_size: int,
    rule: TieRule,
) -> tuple[np.ndarray, np.ndarray]:
    """f(Y(B)) and ||grad_{supp Y(B)} f(x)||^2 for each batch row of the inclusion matrix Z."""
    P = objectives.per_sample_gradients(inst, x.vector).rows
    W = x.vector[None, :] - gamma * (Z @ P) / batch_size
    Y, supports = hard_threshold_rows(W, x.s, rule)
    grad = objectives.full_gradient(inst, x.vector)
    return objectives.values(inst, Y), np.sum(grad[supports] ** 2, axis=1)


def _sampled_inclusion(N: int, batch_size: int, draws: int, rng: np.random.Generator) -> np.ndarray:
    Z = np.zeros((draws, N))
    for r in range(draws):
        Z[r, draw_batch_indices(N, batch_size, rng)] = 1.0
    return Z


def _use_exact(N: int, batch_size: int, mode: str, cap: int) -> bool:
    if mode not in ("auto", "exact", "mc"):
        raise InvalidArgumentError(f"mode must be auto, exact or mc, got {mode!r}")
    if mode == "mc":
        return False
    if mode == "exact":
        return True
    return math.comb(N, batch_size) <= cap


def check_expected_descent(
    inst: ProblemInstance,
    x: SparseIterate,
    gamma: float,
    batch_size: int,
    c: float,
    L_s: float,
    rule: TieRule = TieRule.LOWEST_INDEX,
    mode: str = "auto",
    draws: int = MC_MIN_DRAWS,
    seed: int = 0,
    cap: int = ENUMERATION_CAP,
    rtol: float = INEQUALITY_RTOL,
    enforce_bound: bool = True,
) -> CheckReport:
    """E_B[f(Y(B)) | x] <= f(x) - (gamma/2) ||grad_{supp x} f(x)||^2.

    Exact mode averages over every batch of size ``batch_size``; MC mode
    averages ``draws`` independent batches from the ``"expected_descent"``
    sub-stream of ``seed`` and allows 3 standard errors. With
    ``enforce_bound`` a batch size below the lower bound (c > N) is an error.
    """
    N = inst.N
    if enforce_bound and N >= 2 and c > N:
        bound = batch_size_lower_bound(N, L_s, gamma, c)
        if batch_size < bound.s_b_min:
            raise InvalidArgumentError(f"batch size {batch_size} is below the lower bound {bound.s_b_min}")
    exact = _use_exact(N, batch_size, mode, cap)
    if exact:
        Z = _inclusion_matrix(enumerate_batches(N, batch_size, cap))
    else:
        if draws < MC_MIN_DRAWS:
            raise InvalidArgumentError(f"Monte Carlo mode needs at least {MC_MIN_DRAWS} draws")
        Z = _sampled_inclusion(N, batch_size, draws, seeded_rng(seed, "expected_descent"))
    fy, _ = _batch_outcomes(inst, x, gamma, Z, batch_size, rule)
    f_x = objectives.value(inst, x.vector)
    grad = objectives.full_gradient(inst, x.vector)
    gx = grad[x.support.array]
    rhs = f_x - gamma / 2 * float(gx @ gx)
    lhs = float(np.mean(fy))
    tol = rtol * (1.0 + abs(f_x))
    if not exact:
        stderr = float(np.std(fy, ddof=1) / math.sqrt(len(fy)))
        tol += MC_SIGMAS * stderr
    gap = lhs - rhs
    if gap > tol:
        status = FAIL
    else:
        status = EXACT_PASS if exact else MC_PASS
    return CheckReport("expected_descent", status, lhs, rhs, gap, tol, Z.shape[0], None if exact else seed)


def check_theorem2_margin(
    inst: ProblemInstance,
    x: SparseIterate,
    gamma: float,
    batch_size: int,
    c: float,
    L_s: float,
    rule: TieRule = TieRule.LOWEST_INDEX,
    cap: int = ENUMERATION_CAP,
    rtol: float = INEQUALITY_RTOL,
) -> CheckReport:
    """Expected descent with the extra margin term, by exhaustive enumeration.

    Checks
        E f(Y(B)) <= f(x) - (g/2)||grad_{supp x} f||^2
                     - (g/2)(1 + L g) * zeta * K * E||grad_{supp Y(B)} f(x)||^2
    with K = 1 - c/N + ((1 - L g)/(1 + L g))/zeta, plus K >= 0. The product
    zeta*K = zeta(1 - c/N) + (1 - L g)/(1 + L g) is finite at zeta = 0, so the
    full batch is evaluated as that limit, which is the deterministic
    single-step bound.
    """
    N = inst.N
    if N < 2:
        raise InvalidArgumentError("the margin check needs N >= 2")
    if not (gamma > 0 and L_s > 0 and gamma * L_s < 1.0):
        raise InvalidArgumentError(f"need 0 < gamma < 1/L_s, got gamma={gamma!r}, L_s={L_s!r}")
    z = zeta(N, batch_size)
    a = descent_ratio(L_s, gamma)
    condition = batch_size_condition(N, batch_size, L_s, gamma, c)
    Z = _inclusion_matrix(enumerate_batches(N, batch_size, cap))
    fy, gy = _batch_outcomes(inst, x, gamma, Z, batch_size, rule)
    f_x = objectives.value(inst, x.vector)
    gx = objectives.full_gradient(inst, x.vector)[x.support.array]
    product = z * (1.0 - c / N) + a
    rhs = f_x - gamma / 2 * float(gx @ gx) - gamma / 2 * (1 + L_s * gamma) * product * float(np.mean(gy))
    lhs = float(np.mean(fy))
    tol = rtol * (1.0 + abs(f_x))
    gap = lhs - rhs
    notes = [BATCH_BINDING_NOTE, f"side condition 1 - c/N + a/zeta = {condition!r}"]
    if z == 0.0:
        notes.append("full batch: evaluated as the zeta -> 0 limit")
    status = EXACT_PASS if gap <= tol and condition >= 0.0 else FAIL
    return CheckReport("theorem2_margin", status, lhs, rhs, gap, tol, Z.shape[0], notes=tuple(notes))


# ---------------------------------------------------------------------------
# Per-sample versus full restricted gradient (data-only constant)
# ---------------------------------------------------------------------------


def check_claim_bound_sweep(
    instances: Sequence[ProblemInstance],
    s: int,
    pairs_per_instance: int,
    seed: int = 0,
    convention: str = "nonzero",
    min_denominator: float = 1e-14,
) -> CheckReport:
    """Sweep random (x, J) and count violations of the data-only bound.

    x is standard normal, J has uniform size in [1, s]. Pairs whose
    restricted full gradient has squared norm below ``min_denominator`` are
    skipped. ``lhs`` is the number of violations and ``rhs`` the number of
    pairs checked; the check passes only with zero violations.
    """
    rng = seeded_rng(seed, "claim_bound")
    checked = violations = 0
    worst = 0.0
    for inst in instances:
        for _ in range(pairs_per_instance):
            x = rng.standard_normal(inst.n)
            J = objectives.random_index_set(rng, inst.n, s)
            res = objectives.claim_c_inequality(inst, J, x, convention)
            if res.grad_norm_sq < min_denominator:
                continue
            checked += 1
            if not res.holds:
                violations += 1
                worst = max(worst, res.lhs / res.rhs if res.rhs > 0 else math.inf)
    notes = ()
    if violations:
        notes = (
            f"{violations}/{checked} violations with the {convention} singular-value convention; "
            f"worst lhs/rhs = {worst!r}. The smallest singular value of the N x N restricted Gram "
            "matrix is zero whenever |J| < N, so no finite data-only constant can hold there.",
        )
    status = EXACT_PASS if violations == 0 else FAIL
    return CheckReport("claim_bound", status, float(violations), float(checked), worst, 0.0, checked, seed, notes)


# ---------------------------------------------------------------------------
# Trajectory-level checks
# ---------------------------------------------------------------------------


def tail_oscillation(f: Sequence[float], window: int = 200) -> float:
    """max_{k >= K} |f_k - f_K| with K = max(0, len(f) - 1 - window)."""
    f = np.asarray(f, dtype=np.float64)
    K = max(0, len(f) - 1 - window)
    return float(np.max(np.abs(f[K:] - f[K])))


def conditional_decrease(
    inst: ProblemInstance,
    x: np.ndarray,
    s: int,
    gamma: float,
    batch_size: int,
    rule: TieRule,
    draws: int,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """Monte Carlo mean and standard error of f(X^{k+1}) given X^k = x."""
    N = inst.N
    if batch_size == N:
        Z = np.ones((1, N))
    else:
        Z = _sampled_inclusion(N, batch_size, draws, rng)
    P = objectives.per_sample_gradients(inst, x).rows
    W = x[None, :] - gamma * (Z @ P) / batch_size
    Y, _ = hard_threshold_rows(W, s, rule)
    fy = objectives.values(inst, Y)
    stderr = 0.0 if len(fy) == 1 else float(np.std(fy, ddof=1) / math.sqrt(len(fy)))
    return float(np.mean(fy)), stderr


def check_supermartingale(
    trajectories: Sequence[TrajectoryRecord],
    inst: ProblemInstance,
    config: SolverConfig,
    reference: int = 0,
    sampled_iterates: int = 10,
    draws: int = MC_MIN_DRAWS,
    tail_window: int = 200,
    tail_tol: float = 1e-6,
    min_converged: Optional[int] = None,
    min_trajectories: int = 20,
    seed: int = 0,
) -> list[CheckReport]:
    """Supermartingale and almost-sure convergence proxies over an ensemble.

    Returns two reports. ``supermartingale_conditional_decrease``: at
    ``sampled_iterates`` evenly spaced iterates of the reference trajectory
    (which must have been recorded with iterates), the Monte Carlo estimate
    of E[f(X^{k+1}) | X^k] must not exceed f(X^k) by more than 3 standard
    errors plus round-off. ``supermartingale_tail``: at least
    ``min_converged`` trajectories (default: all) have
    :func:`tail_oscillation` below ``tail_tol``.
    """
    if len(trajectories) < min_trajectories:
        raise InvalidArgumentError(f"need at least {min_trajectories} trajectories, got {len(trajectories)}")
    ref = trajectories[reference]
    if ref.iterates is None:
        raise InvalidArgumentError("the reference trajectory must be recorded with iterates")
    rng = seeded_rng(seed, "supermartingale")
    last = len(ref) - 2
    ks = sorted(set(np.linspace(0, max(last, 0), sampled_iterates).round().astype(int).tolist()))
    worst_gap, worst_tol, worst = -math.inf, 0.0, (0.0, 0.0)
    ok = True
    for k in ks:
        mean, stderr = conditional_decrease(
            inst, ref.iterates[k], config.s, config.gamma, config.batch_size, config.tie_rule, draws, rng
        )
        fk = ref.f[k]
        tol = MC_SIGMAS * stderr + monotone_tolerance(fk, ref.f[0])
        gap = mean - fk
        if gap - tol > worst_gap - worst_tol:
            worst_gap, worst_tol, worst = gap, tol, (mean, fk)
        ok &= gap <= tol
    exact = config.batch_size == inst.N
    status = (EXACT_PASS if exact else MC_PASS) if ok else FAIL
    decrease = CheckReport(
        "supermartingale_conditional_decrease",
        status,
        worst[0],
        worst[1],
        worst_gap,
        worst_tol,
        len(ks) * (1 if exact else draws),
        seed,
        notes=(f"iterates checked: {ks}",),
    )

    osc = [tail_oscillation(t.f, tail_window) for t in trajectories]
    converged = sum(o <= tail_tol for o in osc)
    need = len(trajectories) if min_converged is None else min_converged
    tail = CheckReport(
        "supermartingale_tail",
        EXACT_PASS if converged >= need else FAIL,
        float(converged),
        float(need),
        max(osc),
        tail_tol,
        len(trajectories),
        seed,
        notes=(f"tail oscillations: {[f'{o:.3g}' for o in osc]}",),
    )
    return [decrease, tail]


def aggregate(name: str, reports: Sequence[CheckReport], seed: Optional[int] = None) -> CheckReport:
    """Collapse many reports of one check into a single row.

    The row takes lhs/rhs/gap/tol from the worst instance (largest gap
    relative to tolerance), sums the trials and fails if any instance failed.
    """
    if not reports:
        raise InvalidArgumentError("nothing to aggregate")

    worst = max(reports, key=lambda r: (r.status == FAIL, r.gap - r.tol))
    if any(r.status == FAIL for r in reports):
        status = FAIL
    elif all(r.status == EXACT_PASS for r in reports):
        status = EXACT_PASS
    else:
        status = MC_PASS
    failed = sum(r.status == FAIL for r in reports)
    notes = tuple(worst.notes)
    if failed:
        notes = (f"{failed}/{len(reports)} instances failed",) + notes
    return CheckReport(
        name, status, worst.lhs, worst.rhs, worst.gap, worst.tol, sum(r.trials for r in reports), seed, notes
    )
