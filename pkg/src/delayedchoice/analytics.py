"""Closed-form probabilities and correlations for both temporal orders.

Forward order: a pair is prepared in some state (e.g. a Bell state) and the
two observers measure it in the product basis at angles (theta, phi).

Reverse order: the observers measure first, collapsing each pair onto a
product-basis state with relative frequency alpha_ij; a later joint
measurement in an entangled basis then yields outcome A with joint
probability ``alpha_ij * |a_Aij|^2``.  Conditioning the earlier records on A
recovers the correlations of the entangled state A.

"Same" outcomes are (along, along) and (perp, perp), i.e. flat indices 0 and 3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .ensembles import AlphaTable, EnsembleSpec, require_valid
from .errors import ZeroMarginal
from .qmath import (
    TOL,
    Basis4,
    ProductAngles,
    PureState4,
    bell_basis,
    born_probabilities,
    express_in,
    product_basis,
)

ZERO_MARGINAL = 1e-14
TSIRELSON = 2.0 * math.sqrt(2.0)


def _clamp(p: np.ndarray, tol: float = TOL) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if np.any(p < -tol) or np.any(p > 1 + tol):
        raise ValueError(f"probabilities out of range: {p}")
    return np.clip(p, 0.0, 1.0)


@dataclass(frozen=True)
class CorrelationReport:
    p_same: float
    p_diff: float
    correlation: float

    @classmethod
    def from_same(cls, p_same: float) -> "CorrelationReport":
        p_same = float(_clamp(np.array([p_same]))[0])
        p_diff = 1.0 - p_same
        return cls(p_same, p_diff, p_same - p_diff)

    @classmethod
    def from_outcomes(cls, probs: Sequence[float]) -> "CorrelationReport":
        """From a distribution over the four product outcomes (flat order)."""
        p = np.asarray(probs, dtype=float)
        return cls.from_same((p[0] + p[3]) / p.sum())


@dataclass(frozen=True)
class JointDistribution:
    """``p[r, A-1]``: earlier product outcome r (flat index) and later outcome A."""

    p: np.ndarray

    def __post_init__(self):
        arr = np.array(self.p, dtype=float).reshape(4, 4)
        if np.any(arr < -TOL) or abs(arr.sum() - 1.0) > 1e-12:
            raise ValueError(f"not a joint distribution (sum {arr.sum():.17g})")
        arr = np.clip(arr, 0.0, 1.0)
        arr.setflags(write=False)
        object.__setattr__(self, "p", arr)

    def first_marginal(self) -> np.ndarray:
        return self.p.sum(axis=1)


def induced_alpha(ensemble: EnsembleSpec, angles: ProductAngles) -> AlphaTable:
    """Outcome frequencies when ``ensemble`` is measured in ``product_basis(angles)``."""
    require_valid(ensemble)
    basis = product_basis(angles)
    alpha = sum(c.weight * born_probabilities(c.state, basis) for c in ensemble.components)
    return AlphaTable(_clamp(alpha))


def joint_distribution(alpha: AlphaTable, entangled: Basis4) -> JointDistribution:
    """``p[ij][A] = alpha_ij * |a_Aij|^2`` with ``a`` given in the alpha's own product basis.

    Only valid once the earlier measurement has collapsed each pair onto a
    product state, which is why the input is alpha and not a general state.
    """
    if not isinstance(alpha, AlphaTable):
        alpha = AlphaTable(alpha)
    entangled.require_unitary()
    weights = np.abs(entangled.matrix.T) ** 2
    return JointDistribution(alpha.alpha[:, None] * weights)


def entangled_marginal(joint: JointDistribution) -> np.ndarray:
    return _clamp(joint.p.sum(axis=0))


def retrospective_conditional(joint: JointDistribution, outcome_a: int) -> np.ndarray:
    """Distribution over earlier outcomes given later outcome ``outcome_a`` (1-based)."""
    if not 1 <= outcome_a <= 4:
        raise IndexError(f"later outcome must be in 1..4, got {outcome_a}")
    column = joint.p[:, outcome_a - 1]
    total = float(column.sum())
    if total < ZERO_MARGINAL:
        raise ZeroMarginal(outcome_a, total)
    return _clamp(column / total)


def state_correlation(state: PureState4, angles: ProductAngles) -> CorrelationReport:
    return CorrelationReport.from_outcomes(born_probabilities(state, product_basis(angles)))


def forward_correlation(bell_index: int, angles: ProductAngles) -> CorrelationReport:
    """Bell state ``bell_index`` (1..4) measured at ``angles``.

    For B1 this is cos^2(theta - phi) same / sin^2(theta - phi) different.
    """
    return state_correlation(bell_basis().row(bell_index), angles)


def whole_ensemble_correlation(ensemble: EnsembleSpec, angles: ProductAngles) -> CorrelationReport:
    require_valid(ensemble)
    p_same = sum(c.weight * state_correlation(c.state, angles).p_same for c in ensemble.components)
    return CorrelationReport.from_same(p_same)


def reverse_joint(ensemble: EnsembleSpec, angles: ProductAngles, entangled: Basis4) -> JointDistribution:
    """Joint (earlier, later) distribution of the delayed-choice pipeline."""
    alpha = induced_alpha(ensemble, angles)
    return joint_distribution(alpha, express_in(entangled, product_basis(angles)))


def retrospective_correlation(
    angles: ProductAngles,
    ensemble: EnsembleSpec,
    entangled: Basis4,
    outcome_a: int,
) -> CorrelationReport:
    """Correlation of the earlier records matched with later outcome ``outcome_a``."""
    joint = reverse_joint(ensemble, angles, entangled)
    return CorrelationReport.from_outcomes(retrospective_conditional(joint, outcome_a))


def unconditioned_correlation(joint: JointDistribution) -> CorrelationReport:
    """Earlier-record correlation ignoring the later outcome (or with no later measurement)."""
    return CorrelationReport.from_outcomes(joint.first_marginal())


@dataclass(frozen=True)
class ChshReport:
    settings: tuple[ProductAngles, ...]
    correlations: tuple[float, ...]
    s_value: float
    std_error: float | None = field(default=None)


Correlation = Union[float, CorrelationReport]
CorrelationSource = Callable[[ProductAngles], Correlation]


def chsh_settings(a: float, a_prime: float, b: float, b_prime: float) -> tuple[ProductAngles, ...]:
    """Setting order (a,b), (a,b'), (a',b), (a',b')."""
    return (
        ProductAngles(a, b),
        ProductAngles(a, b_prime),
        ProductAngles(a_prime, b),
        ProductAngles(a_prime, b_prime),
    )


def chsh(settings: Sequence[ProductAngles], source: CorrelationSource) -> ChshReport:
    """S = E(a,b) - E(a,b') + E(a',b) + E(a',b').

    ``source`` may return a float or any object with a ``correlation``
    attribute; if those objects also carry ``std_error`` the errors are
    combined in quadrature.
    """
    settings = tuple(settings)
    if len(settings) != 4:
        raise ValueError("chsh needs exactly four settings")
    results = [source(s) for s in settings]
    corr = tuple(float(getattr(r, "correlation", r)) for r in results)
    signs = (1.0, -1.0, 1.0, 1.0)
    s_value = sum(sg * e for sg, e in zip(signs, corr))
    errs = [getattr(r, "std_error", None) for r in results]
    std_error = None if any(e is None for e in errs) else math.sqrt(sum(e * e for e in errs))
    return ChshReport(settings, corr, s_value, std_error)


def observer1_marginal(ensemble: EnsembleSpec, theta: float, phi: float) -> np.ndarray:
    """Observer 1's (along, perp) probabilities with observer 2 at ``phi``."""
    alpha = induced_alpha(ensemble, ProductAngles(theta, phi)).alpha
    return np.array([alpha[0] + alpha[1], alpha[2] + alpha[3]])


def no_signaling_check(ensemble: EnsembleSpec, theta: float, phi_a: float, phi_b: float) -> float:
    """Max change in observer 1's marginal when observer 2 switches ``phi_a`` -> ``phi_b``."""
    m_a = observer1_marginal(ensemble, theta, phi_a)
    m_b = observer1_marginal(ensemble, theta, phi_b)
    return float(np.max(np.abs(m_a - m_b)))
