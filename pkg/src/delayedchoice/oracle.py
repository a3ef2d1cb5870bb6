"""Brute-force enumeration of every measurement path.

A path is (component k, earlier outcome ij, later outcome A) with probability

    weight_k * |<row_ij|psi_k>|^2 * |<B_A|row_ij>|^2

computed term by term in plain Python complex arithmetic.  Nothing here
uses the linear-algebra helpers in :mod:`qmath` or the closed forms in
:mod:`analytics`; that independence is what makes it a useful cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .ensembles import EnsembleSpec
from .qmath import Basis4, ProductAngles

VARIABLES = ("component", "first", "later")


@dataclass(frozen=True)
class Path:
    component: int
    first: tuple[int, int]
    later: int
    probability: float


@dataclass(frozen=True)
class PathDistribution:
    entries: tuple[Path, ...]

    def total(self) -> float:
        return math.fsum(e.probability for e in self.entries)


def _single(angle: float, label: int) -> list[complex]:
    c, s = math.cos(angle), math.sin(angle)
    return [complex(c), complex(s)] if label == 1 else [complex(-s), complex(c)]


def _product_row(theta: float, phi: float, i: int, j: int) -> list[complex]:
    u, v = _single(theta, i), _single(phi, j)
    return [u[0] * v[0], u[0] * v[1], u[1] * v[0], u[1] * v[1]]


def _overlap_sq(bra: list[complex], ket: list[complex]) -> float:
    acc = 0j
    for x, y in zip(bra, ket):
        acc += x.conjugate() * y
    return acc.real * acc.real + acc.imag * acc.imag


def enumerate_paths(ensemble: EnsembleSpec, angles: ProductAngles, later: Basis4) -> PathDistribution:
    """All paths with nonzero probability (at most 64)."""
    later_rows = [[complex(x) for x in row] for row in later.matrix.tolist()]
    entries = []
    for k, comp in enumerate(ensemble.components):
        psi = [complex(x) for x in comp.state.amps.tolist()]
        for i in (1, 2):
            for j in (1, 2):
                row = _product_row(angles.theta, angles.phi, i, j)
                p_first = comp.weight * _overlap_sq(row, psi)
                for a, b_row in enumerate(later_rows, start=1):
                    p = p_first * _overlap_sq(b_row, row)
                    if p > 0.0:
                        entries.append(Path(k, (i, j), a, p))
    return PathDistribution(tuple(entries))


def marginalize(paths: PathDistribution, keep) -> dict[tuple, float]:
    """Sum out every variable not in ``keep``.

    Keys are tuples of the kept values in the fixed order component, first,
    later; keeping nothing gives ``{(): total}``.
    """
    keep = set(keep)
    unknown = keep - set(VARIABLES)
    if unknown:
        raise ValueError(f"unknown variables {sorted(unknown)}")
    acc: dict[tuple, list[float]] = {}
    for e in paths.entries:
        key = tuple(getattr(e, name) for name in VARIABLES if name in keep)
        acc.setdefault(key, []).append(e.probability)
    return {key: math.fsum(vals) for key, vals in acc.items()}
