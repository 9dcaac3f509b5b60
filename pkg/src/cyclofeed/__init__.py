"""cyclofeed: sign-change Lyapunov analysis for time-periodic cyclic feedback
systems — structural certification, integration, and limit-set verification."""

from .errors import (
    CyclofeedError, DimensionError, DomainError, EvalError, HypothesisGateError,
    IndeterminateSignError, IntegrationError, ModelFormatError, ParseError,
    StepUnderflowError, UsageError,
)
from .expr import differentiate, evaluate, parse_expression, unparse
from .limits import (
    OmegaSetApprox, SigmaTrace, VerificationReport, classify_difference_states,
    embed_projection, omega_limit_approx, poincare_map, sigma_trace_pair,
    verify_conjugacy, verify_embedding_injectivity, verify_sigma_constancy_on_omega,
    verify_sigma_monotone,
)
from .modelspec import Box, ModelSpec, load_model, parse_model_file, save_model, serialize_model
from .models import (
    antithetic_controller, builtin_model, periodic_lotka_volterra, repressor_ring,
    random_two_positive_linear,
)
from .ode import Trajectory, difference_matrix, integrate, locate_zero_crossings
from .signs import (
    canonical_delta, delta_product, in_lambda, ntilde, sigma, sigma_extended,
    sigma_min_max,
)
from .structure import (
    DissipativityReport, FeedbackSignature, SamplingGrid, additive_compound,
    canonical_transform, check_dissipative_H, check_linear_two_positive,
    extract_feedback_signs, find_absorbing_bound, is_irreducible, is_metzler,
    mu_vector,
)

__version__ = "0.1.0"
