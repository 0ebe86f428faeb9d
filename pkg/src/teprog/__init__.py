"""Bregman proximal gradient method over nested constraint sets, with run certification.

Minimizes ``F = f + g`` over ``C`` using prox steps posed on a growing family
of sets ``S_1 ⊆ S_2 ⊆ ... ⊆ C``, so that ``f'`` only needs to be Lipschitz on
each ``S_k``.  Runs are recorded in full and can be certified against the
``O(tau_k / (k mu_k))`` rate bound and the per-step inequalities.
"""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .geometry import (  # noqa: F401
    Ball, BregmanGeometry, Box, Intersection, Prism, SetDescriptor, Simplex, WholeSpace,
    bregman_gradient, bregman_value, estimate_strong_convexity, half_squared_euclidean,
    intersect, negative_entropy, strong_convexity_parameter,
)
from .problems import (  # noqa: F401
    CompositeProblem, LpResidual, MaxLinear, ScaledL1, SimplexPower, generate_instance,
    nonsmooth_subgradient, nonsmooth_value, objective_value, smooth_gradient, smooth_value,
)
from .prox import (  # noqa: F401
    ProxSubproblem, box_l1_prox, generic_prox, optimality_residual, prox, surrogate_value,
)
from .telescope import (  # noqa: F401
    Constant, PowerBox, SqrtBall, TelescopicSchedule, default_sigma, find_k0,
    lipschitz_bound_at, set_at, tau_at,
)
from .solver import RunTrace, SolverConfig, run, run_backtracking, run_lipschitz  # noqa: F401
from .analysis import (  # noqa: F401
    CertifiedBound, bregman_monotonicity, certify_trace, check_descent_lemma,
    check_fb_inequality, fit_empirical_rate, theorem_bound,
)
