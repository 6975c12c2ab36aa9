"""Ergodicity analysis of scalar SDEs with degenerate diffusion coefficients.

Subpackages cover the pipeline end to end: model definition and validation,
hypothesis checks with the curvature constant, the Gibbs stationary density,
an entropy-dissipating Fokker-Planck solver, information functionals and the
carre-du-champ calculus, the Lamperti transform, and shared-noise path
experiments (contraction, pullback attraction).
"""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    AitSahaliaParams,
    CirParams,
    CoefficientFn,
    DomainError,
    DomainInterval,
    ExpressionError,
    OrnsteinUhlenbeckParams,
    ParameterError,
    ScalarSde,
    WrightFisherParams,
    clamp_extension,
    eval_coeff,
    make_model,
    parse_expression,
)
