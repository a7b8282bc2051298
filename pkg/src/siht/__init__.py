"""Mini-batch stochastic iterative hard thresholding (SIHT).

Solves min f(x) = (1/N) sum_i f_i(V_i x) subject to ||x||_0 <= s by
repeating x <- H_s(x - gamma * G(x, B)), where G is the gradient averaged
over a batch B drawn uniformly without replacement. The :mod:`siht.verify`
module checks the sampling identities and descent inequalities behind the
method numerically.
"""
from .core import (
    DegenerateEstimateError,
    EnumerationCapError,
    InvalidArgumentError,
    LossKind,
    MonotonicityError,
    NonFiniteObjectiveError,
    ProblemInstance,
    SihtError,
    SolverConfig,
    SparseIterate,
    SupportSet,
    TieRule,
    TrajectoryRecord,
    seeded_rng,
)
from .hardthreshold import hard_threshold, top_support
from .objectives import (
    GradientMatrix,
    claim_c_bound,
    empirical_c,
    full_gradient,
    minibatch_gradient,
    per_sample_gradients,
    sample_gradient,
    smoothness_modulus,
    value,
)
from .sampling import (
    BatchSample,
    batch_size_lower_bound,
    draw_batch,
    enumerate_batches,
    inclusion_covariance,
    zeta,
)
from .solver import SolveResult, iht_run, siht_run
from .verify import CheckReport

__version__ = "0.1.0"

__all__ = [
    "BatchSample",
    "CheckReport",
    "DegenerateEstimateError",
    "EnumerationCapError",
    "GradientMatrix",
    "InvalidArgumentError",
    "LossKind",
    "MonotonicityError",
    "NonFiniteObjectiveError",
    "ProblemInstance",
    "SihtError",
    "SolveResult",
    "SolverConfig",
    "SparseIterate",
    "SupportSet",
    "TieRule",
    "TrajectoryRecord",
    "batch_size_lower_bound",
    "claim_c_bound",
    "draw_batch",
    "empirical_c",
    "enumerate_batches",
    "full_gradient",
    "hard_threshold",
    "iht_run",
    "inclusion_covariance",
    "minibatch_gradient",
    "per_sample_gradients",
    "sample_gradient",
    "seeded_rng",
    "siht_run",
    "smoothness_modulus",
    "top_support",
    "value",
    "zeta",
]
