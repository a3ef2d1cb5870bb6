"""Two-qubit pure states, measurement bases and their checks.

Index convention used everywhere in the package, file formats included:
the amplitude of ``|e_i>_1 |e_j>_2`` (i, j in {1, 2}) sits at flat index
``(i - 1) * 2 + (j - 1)``.  Label 1 is ``|V>`` and label 2 is ``|H>`` in the
photon picture, so the flat order is VV, VH, HV, HH.

Amplitudes are plain Python/numpy complex numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidStateError, NonUnitaryBasisError

TOL = 1e-12

#: Flat index -> (i, j) with 1-based labels.
OUTCOME_LABELS: tuple[tuple[int, int], ...] = ((1, 1), (1, 2), (2, 1), (2, 2))


def flat_index(i: int, j: int) -> int:
    """Flatten a 1-based ``(i, j)`` outcome pair."""
    if i not in (1, 2) or j not in (1, 2):
        raise ValueError(f"outcome labels must be 1 or 2, got ({i}, {j})")
    return (i - 1) * 2 + (j - 1)


def _frozen(values, shape) -> np.ndarray:
    arr = np.array(values, dtype=complex).reshape(shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PureState4:
    """Four complex amplitudes of a two-qubit state.

    Finiteness is enforced on construction.  Normalization is not, so that
    ensemble validation can report a bad state instead of failing to build
    it; use :meth:`require_normalized` or :func:`normalized` where it matters.
    """

    amps: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.amps, (4,))
        if not np.all(np.isfinite(arr)):
            raise InvalidStateError("state amplitudes must be finite")
        object.__setattr__(self, "amps", arr)

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amps) ** 2)))

    def is_normalized(self, tol: float = TOL) -> bool:
        return abs(float(np.sum(np.abs(self.amps) ** 2)) - 1.0) <= tol

    def require_normalized(self, tol: float = TOL) -> "PureState4":
        if not self.is_normalized(tol):
            raise InvalidStateError(f"state norm {self.norm:.12g} != 1")
        return self

    def __getitem__(self, ij: tuple[int, int]) -> complex:
        return complex(self.amps[flat_index(*ij)])

    def __repr__(self) -> str:
        return f"PureState4({np.array2string(self.amps, precision=6)})"


def normalized(amps: Sequence[complex]) -> PureState4:
    arr = np.asarray(amps, dtype=complex)
    n = np.linalg.norm(arr)
    if n == 0:
        raise InvalidStateError("cannot normalize the zero vector")
    return PureState4(arr / n)


def product_state(theta: float, phi: float, *, perp1: bool = False, perp2: bool = False) -> PureState4:
    """Analyzer eigenstate product for angles ``theta`` (particle 1) and ``phi``."""
    return PureState4(np.kron(_analyzer(theta, perp1), _analyzer(phi, perp2)))


def _analyzer(angle: float, perp: bool) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    # along: cos|V> + sin|H>; perpendicular: -sin|V> + cos|H>
    return np.array([-s, c] if perp else [c, s], dtype=complex)


@dataclass(frozen=True, eq=False)
class Basis4:
    """Four measurement eigenstates; row A (0-based A-1) holds ``a_Aij``.

    Construction does not enforce unitarity (see :func:`verify_unitarity`);
    consumers that need a valid basis call :meth:`require_unitary`.
    """

    matrix: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.matrix, (4, 4))
        if not np.all(np.isfinite(arr)):
            raise NonUnitaryBasisError(float("inf"))
        object.__setattr__(self, "matrix", arr)

    @classmethod
    def from_states(cls, rows: Iterable[PureState4]) -> "Basis4":
        return cls(np.stack([r.amps for r in rows]))

    @property
    def rows(self) -> tuple[PureState4, ...]:
        return tuple(PureState4(r) for r in self.matrix)

    def row(self, a: int) -> PureState4:
        """Eigenstate for 1-based outcome ``a``."""
        if not 1 <= a <= 4:
            raise IndexError(f"outcome index must be in 1..4, got {a}")
        return PureState4(self.matrix[a - 1])

    def require_unitary(self, tol: float = TOL) -> "Basis4":
        residual = verify_unitarity(self)
        if residual > tol:
            raise NonUnitaryBasisError(residual)
        return self

    def __repr__(self) -> str:
        return f"Basis4(\n{np.array2string(self.matrix, precision=6)})"


@dataclass(frozen=True)
class ProductAngles:
    """Analyzer angles in radians: ``theta`` for particle 1, ``phi`` for particle 2."""

    theta: float
    phi: float

    def __post_init__(self):
        if not (math.isfinite(self.theta) and math.isfinite(self.phi)):
            raise ValueError(f"angles must be finite, got ({self.theta}, {self.phi})")
        object.__setattr__(self, "theta", float(self.theta))
        object.__setattr__(self, "phi", float(self.phi))

    def canonical(self) -> "ProductAngles":
        """Both angles reduced to [0, pi); probabilities are unchanged."""
        return ProductAngles(self.theta % math.pi, self.phi % math.pi)


def bell_basis() -> Basis4:
    """B1, B2 = (VV +- HH)/sqrt2 and B3, B4 = (VH +- HV)/sqrt2, in that order."""
    h = math.sqrt(0.5)
    return Basis4(
        [
            [h, 0, 0, h],
            [h, 0, 0, -h],
            [0, h, h, 0],
            [0, h, -h, 0],
        ]
    )


def computational_basis() -> Basis4:
    return Basis4(np.eye(4))


def product_basis(angles: ProductAngles) -> Basis4:
    """Rows ordered (along, along), (along, perp), (perp, along), (perp, perp)."""
    t, p = angles.theta, angles.phi
    if not (math.isfinite(t) and math.isfinite(p)):
        raise ValueError("angles must be finite")
    rows = [
        product_state(t, p, perp1=p1, perp2=p2)
        for p1, p2 in ((False, False), (False, True), (True, False), (True, True))
    ]
    return Basis4.from_states(rows)


def verify_unitarity(basis: Basis4) -> float:
    """Largest deviation of the row Gram matrix and column completeness from identity."""
    m = np.asarray(basis.matrix)
    eye = np.eye(4)
    with np.errstate(all="ignore"):
        rows = np.abs(m.conj() @ m.T - eye)
        cols = np.abs(m.T @ m.conj() - eye)
    residual = float(max(rows.max(), cols.max()))
    return residual if math.isfinite(residual) else float("inf")


def inner_product(a: PureState4, b: PureState4) -> complex:
    """``<a|b>``, conjugate-linear in ``a``."""
    return complex(np.vdot(a.amps, b.amps))


def born_probabilities(state: PureState4, basis: Basis4) -> np.ndarray:
    """``|<row_A|state>|^2`` for the four rows, in row order."""
    return np.abs(basis.matrix.conj() @ state.amps) ** 2


def express_in(basis: Basis4, frame: Basis4) -> Basis4:
    """Coefficients of ``basis`` rows expanded in the ``frame`` rows.

    Entry ``[A, r]`` is ``<frame_r|basis_A>``.  The result is unitary when both
    inputs are.
    """
    return Basis4(basis.matrix @ frame.matrix.conj().T)


def same_basis(a: Basis4, b: Basis4, tol: float = 1e-9) -> bool:
    """Row-by-row equality up to a phase per row."""
    overlaps = np.abs(np.sum(a.matrix.conj() * b.matrix, axis=1))
    norms = np.linalg.norm(a.matrix, axis=1) * np.linalg.norm(b.matrix, axis=1)
    return bool(np.all(np.abs(overlaps - norms) <= tol) and np.allclose(norms, 1.0, atol=tol))


def random_unitary_basis(rng: np.random.Generator) -> Basis4:
    """Haar-distributed basis via QR of a complex Gaussian matrix."""
    z = (rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    q = q * (d / np.abs(d))
    return Basis4(q.T)
