"""Concentration of random matrix products Z_n = (I - a X_n) ... (I - a X_1).

Exact theory constants, brute-force and Monte Carlo tail verification,
martingale replay, and the least-squares SGD instance.
"""

from .ensembles import Ensemble, finite_support, rank_one_rows, sphere_rank_one
from .linalg import Spectrum, frobenius_norm, is_psd, mat_mul, operator_norm, sym_eigen
from .montecarlo import (
    MartingaleTrace,
    TailCurve,
    Trajectory,
    brute_force_tail,
    empirical_mean_product,
    entrywise_tail_check,
    estimate_tail,
    martingale_property_test,
    martingale_trace,
    replay_checks,
    run_trajectory,
)
from .rng import RngState
from .sgd import LeastSquaresProblem, certificate, error_propagation_check, make_problem, sgd_run, synthetic_problem
from .theory import (
    TheoryParams,
    compute_c,
    compute_sigma2,
    entrywise_tail_bound,
    entrywise_threshold,
    expected_product,
    geometric_sum_check,
    tail_bound,
    theory_params,
    validate_alpha,
)

__version__ = "0.1.0"
