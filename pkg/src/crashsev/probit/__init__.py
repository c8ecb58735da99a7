from .halton import HaltonConfig, halton, normal_draws
from .model import (
    ModelSpec,
    Parameters,
    SpecError,
    category_probabilities,
    draw_coefficients,
    simulated_loglik,
)
from .estimate import EstimationResult, estimate
from .post import (
    marginal_effects,
    random_param_correlation,
    random_param_stddev,
    share_above_zero,
)

__all__ = [
    "HaltonConfig", "halton", "normal_draws",
    "ModelSpec", "Parameters", "SpecError", "category_probabilities", "draw_coefficients",
    "simulated_loglik", "EstimationResult", "estimate",
    "marginal_effects", "random_param_correlation", "random_param_stddev", "share_above_zero",
]
