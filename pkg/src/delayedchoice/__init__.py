"""Delayed-choice entanglement of product pairs: exact and Monte Carlo statistics."""

from .analytics import (
    ChshReport,
    CorrelationReport,
    JointDistribution,
    chsh,
    chsh_settings,
    entangled_marginal,
    forward_correlation,
    joint_distribution,
    no_signaling_check,
    retrospective_conditional,
    retrospective_correlation,
    whole_ensemble_correlation,
)
from .ensembles import AlphaTable, EnsembleSpec, maximally_mixed, product_mixture, uniform_bell_mixture, validate
from .errors import EmptySubensemble, ZeroMarginal
from .qmath import Basis4, ProductAngles, PureState4, bell_basis, inner_product, product_basis, verify_unitarity

__version__ = "0.1.0"
