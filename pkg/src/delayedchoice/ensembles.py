"""Finite mixtures of two-qubit pure states.

Mixtures are kept as weighted lists of pure states rather than density
matrices, so the identity of the drawn component survives into trial records.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidEnsembleError
from .qmath import OUTCOME_LABELS, TOL, ProductAngles, PureState4, bell_basis, product_basis

WEIGHT_TOL = 1e-9


@dataclass(frozen=True)
class Component:
    weight: float
    state: PureState4


@dataclass(frozen=True)
class EnsembleSpec:
    """Weighted mixture of pure states.

    Not validated on construction; call :func:`validate` or
    :func:`require_valid`.
    """

    components: tuple[Component, ...]

    def __post_init__(self):
        object.__setattr__(
            self,
            "components",
            tuple(c if isinstance(c, Component) else Component(float(c[0]), c[1]) for c in self.components),
        )

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[float, PureState4]], *, normalize: bool = False) -> "EnsembleSpec":
        comps = [Component(float(w), s) for w, s in pairs]
        if normalize:
            total = sum(c.weight for c in comps)
            if total > 0:
                comps = [Component(c.weight / total, c.state) for c in comps]
        return cls(tuple(comps))

    @classmethod
    def pure(cls, state: PureState4) -> "EnsembleSpec":
        return cls((Component(1.0, state),))

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components], dtype=float)

    @property
    def states(self) -> tuple[PureState4, ...]:
        return tuple(c.state for c in self.components)

    def __len__(self) -> int:
        return len(self.components)


@dataclass(frozen=True)
class AlphaTable:
    """Relative frequencies of the four product outcomes, flat order 11, 12, 21, 22."""

    alpha: np.ndarray

    def __post_init__(self):
        arr = np.array(self.alpha, dtype=float).reshape(4)
        problems = []
        if not np.all(np.isfinite(arr)):
            problems.append("alpha entries must be finite")
        elif np.any(arr < 0):
            problems.append(f"alpha has negative entries {arr.tolist()}")
        elif abs(arr.sum() - 1.0) > WEIGHT_TOL:
            problems.append(f"alpha sums to {arr.sum():.12g}")
        if problems:
            raise InvalidEnsembleError(problems)
        arr.setflags(write=False)
        object.__setattr__(self, "alpha", arr)

    @classmethod
    def uniform(cls) -> "AlphaTable":
        return cls(np.full(4, 0.25))

    def __getitem__(self, ij: tuple[int, int]) -> float:
        i, j = ij
        return float(self.alpha[OUTCOME_LABELS.index((i, j))])


def uniform_bell_mixture() -> EnsembleSpec:
    return EnsembleSpec(tuple(Component(0.25, row) for row in bell_basis().rows))


def product_mixture(alpha: AlphaTable | Sequence[float], angles: ProductAngles) -> EnsembleSpec:
    """Component ``ij`` has weight ``alpha_ij`` and the matching product-basis row."""
    if not isinstance(alpha, AlphaTable):
        alpha = AlphaTable(alpha)
    rows = product_basis(angles).rows
    return EnsembleSpec(tuple(Component(float(w), s) for w, s in zip(alpha.alpha, rows)))


def maximally_mixed() -> EnsembleSpec:
    """Uniform mixture of computational product states.

    Its density matrix is I/4, so every product-basis measurement gives
    alpha_ij = 1/4 regardless of angles.
    """
    return product_mixture(AlphaTable.uniform(), ProductAngles(0.0, 0.0))


def validate(spec: EnsembleSpec) -> list[str]:
    """Human-readable invariant violations; empty when the ensemble is valid.

    Component numbers in messages are 1-based.
    """
    violations: list[str] = []
    if len(spec.components) == 0:
        return ["ensemble has no components"]
    for k, comp in enumerate(spec.components, start=1):
        if not np.isfinite(comp.weight):
            violations.append(f"component {k} weight is not finite")
        elif comp.weight < 0:
            violations.append(f"component {k} weight {comp.weight:.12g} is negative")
        if not comp.state.is_normalized(TOL):
            violations.append(f"component {k} state norm {comp.state.norm:.12g}")
    total = float(np.sum(spec.weights))
    if np.isfinite(total) and abs(total - 1.0) > WEIGHT_TOL:
        violations.append(f"weights sum to {total:.12g}")
    return violations


def require_valid(spec: EnsembleSpec) -> EnsembleSpec:
    violations = validate(spec)
    if violations:
        raise InvalidEnsembleError(violations)
    return spec
