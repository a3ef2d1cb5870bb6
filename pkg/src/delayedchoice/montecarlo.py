"""Trial-level simulation of both measurement orders.

Randomness comes from numpy's counter-based Philox generator.  The key is
``(seed, settings_id)`` and trial ``t`` owns counter block ``t``: four 64-bit
words, of which word 0 picks the ensemble component, word 1 the earlier
product outcome and word 2 the later outcome.  A trial's draws therefore
depend only on ``(seed, settings_id, trial_id)``, so chunking and thread
count cannot change any record.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence, Union, overload

import numpy as np

from .analytics import CorrelationReport
from .ensembles import EnsembleSpec, require_valid
from .errors import EmptySubensemble
from .qmath import OUTCOME_LABELS, Basis4, ProductAngles, PureState4, born_probabilities, product_basis

DRAWS_PER_TRIAL = 4
UNMEASURED = "unmeasured"
DEFAULT_CHUNK = 1 << 16

_MASK64 = (1 << 64) - 1
_TO_UNIT = 2.0**-53


def _key(seed: int, settings_id: int) -> list[int]:
    return [int(seed) & _MASK64, int(settings_id) & _MASK64]


def _to_unit(words: np.ndarray) -> np.ndarray:
    return (words >> np.uint64(11)).astype(np.float64) * _TO_UNIT


def uniform_block(seed: int, start: int, stop: int, settings_id: int = 0) -> np.ndarray:
    """Uniforms in [0, 1) for trials ``start..stop-1``, shape ``(n, 4)``."""
    bg = np.random.Philox(key=_key(seed, settings_id))
    if start:
        bg.advance(start)
    words = bg.random_raw((stop - start) * DRAWS_PER_TRIAL)
    return _to_unit(np.asarray(words, dtype=np.uint64)).reshape(-1, DRAWS_PER_TRIAL)


class RngStream:
    """The fixed draw budget of one trial.

    ``next_uniform`` hands out the trial's four uniforms in order and refuses
    to go past them.
    """

    def __init__(self, seed: int, stream_id: int, settings_id: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id)
        self.settings_id = int(settings_id)
        self._draws = uniform_block(self.seed, self.stream_id, self.stream_id + 1, self.settings_id)[0]
        self._pos = 0

    def next_uniform(self) -> float:
        if self._pos >= DRAWS_PER_TRIAL:
            raise RuntimeError(f"trial {self.stream_id} exhausted its {DRAWS_PER_TRIAL}-draw budget")
        u = float(self._draws[self._pos])
        self._pos += 1
        return u

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, settings_id={self.settings_id})"


def _cdf(probs: np.ndarray) -> np.ndarray:
    """Cumulative table with the last nonzero interval closed at exactly 1."""
    p = np.clip(np.asarray(probs, dtype=float), 0.0, None)
    cdf = np.cumsum(p / p.sum(axis=-1, keepdims=True), axis=-1)
    last = p.shape[-1] - 1 - np.argmax((p > 0)[..., ::-1], axis=-1)
    idx = np.arange(p.shape[-1])
    cdf[idx >= np.expand_dims(last, -1)] = 1.0
    return cdf


def _pick(cdf: np.ndarray, u) -> np.ndarray:
    """Outcome r with ``cdf[r-1] <= u < cdf[r]`` (0-based)."""
    u = np.asarray(u, dtype=float)
    return np.sum(cdf <= u[..., None], axis=-1)


@dataclass(frozen=True)
class TrialRecord:
    trial_id: int
    component_index: int
    first_outcome: tuple[int, int]
    later_outcome: Optional[int]
    settings_id: int

    def __post_init__(self):
        if self.first_outcome not in OUTCOME_LABELS:
            raise ValueError(f"bad first outcome {self.first_outcome}")
        if self.later_outcome is not None and not 1 <= self.later_outcome <= 4:
            raise ValueError(f"bad later outcome {self.later_outcome}")


class TrialTable(Sequence[TrialRecord]):
    """Column-oriented list of trial records.

    ``first`` holds the flat earlier-outcome index 0..3; ``later`` holds
    1..4, or 0 when no later measurement was made.
    """

    def __init__(self, trial_id, component, first, later, settings_id):
        n = len(trial_id)
        self.trial_id = np.asarray(trial_id, dtype=np.int64)
        self.component = np.asarray(component, dtype=np.int64)
        self.first = np.asarray(first, dtype=np.int8)
        self.later = np.asarray(later, dtype=np.int8)
        self.settings_id = np.broadcast_to(np.asarray(settings_id, dtype=np.int64), (n,)).copy()

    @classmethod
    def empty(cls) -> "TrialTable":
        return cls([], [], [], [], [])

    @classmethod
    def from_records(cls, records: Iterable[TrialRecord]) -> "TrialTable":
        recs = list(records)
        return cls(
            [r.trial_id for r in recs],
            [r.component_index for r in recs],
            [OUTCOME_LABELS.index(r.first_outcome) for r in recs],
            [r.later_outcome or 0 for r in recs],
            [r.settings_id for r in recs],
        )

    @classmethod
    def concat(cls, tables: Sequence["TrialTable"]) -> "TrialTable":
        if not tables:
            return cls.empty()
        return cls(*(np.concatenate([getattr(t, f) for t in tables]) for f in cls._fields))

    _fields = ("trial_id", "component", "first", "later", "settings_id")

    def __len__(self) -> int:
        return len(self.trial_id)

    @overload
    def __getitem__(self, index: int) -> TrialRecord: ...
    @overload
    def __getitem__(self, index: slice) -> "TrialTable": ...

    def __getitem__(self, index):
        if isinstance(index, slice) or isinstance(index, np.ndarray):
            return self.take(index)
        later = int(self.later[index])
        return TrialRecord(
            trial_id=int(self.trial_id[index]),
            component_index=int(self.component[index]),
            first_outcome=OUTCOME_LABELS[int(self.first[index])],
            later_outcome=later or None,
            settings_id=int(self.settings_id[index]),
        )

    def __iter__(self) -> Iterator[TrialRecord]:
        for k in range(len(self)):
            yield self[k]

    def take(self, index) -> "TrialTable":
        return TrialTable(*(getattr(self, f)[index] for f in self._fields))

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrialTable):
            return NotImplemented
        return all(np.array_equal(getattr(self, f), getattr(other, f)) for f in self._fields)

    def __repr__(self) -> str:
        return f"TrialTable(n={len(self)})"


Records = Union[TrialTable, Iterable[TrialRecord]]


def _as_table(records: Records) -> TrialTable:
    return records if isinstance(records, TrialTable) else TrialTable.from_records(records)


def sample_component(ensemble: EnsembleSpec, rng: RngStream) -> tuple[int, PureState4]:
    """Inverse-CDF draw of a component (0-based index) from one uniform."""
    k = int(_pick(_cdf(ensemble.weights), rng.next_uniform()))
    return k, ensemble.components[k].state


def sample_components(ensemble: EnsembleSpec, n: int, seed: int, settings_id: int = 0) -> np.ndarray:
    """Vectorized :func:`sample_component` for trials ``0..n-1``."""
    u = uniform_block(seed, 0, n, settings_id)[:, 0]
    return _pick(_cdf(ensemble.weights), u)


def measure(state: PureState4, basis: Basis4, rng: RngStream) -> tuple[int, PureState4]:
    """Projective measurement; returns the 1-based outcome and the collapsed state."""
    state.require_normalized()
    basis.require_unitary()
    r = int(_pick(_cdf(born_probabilities(state, basis)), rng.next_uniform()))
    return r + 1, basis.row(r + 1)


@dataclass(frozen=True)
class _Plan:
    weights_cdf: np.ndarray
    first_cdf: np.ndarray  # (K, 4)
    later_cdf: Optional[np.ndarray]  # (4, 4) indexed by first outcome


def _plan(ensemble: EnsembleSpec, angles: ProductAngles, later: Optional[Basis4]) -> _Plan:
    require_valid(ensemble)
    frame = product_basis(angles)
    first = np.stack([born_probabilities(s, frame) for s in ensemble.states])
    later_cdf = None
    if later is not None:
        later.require_unitary()
        later_cdf = _cdf(np.stack([born_probabilities(row, later) for row in frame.rows]))
    return _Plan(_cdf(ensemble.weights), _cdf(first), later_cdf)


def _run_chunk(plan: _Plan, seed: int, settings_id: int, start: int, stop: int) -> TrialTable:
    u = uniform_block(seed, start, stop, settings_id)
    comp = _pick(plan.weights_cdf, u[:, 0])
    first = _pick(plan.first_cdf[comp], u[:, 1])
    if plan.later_cdf is None:
        later = np.zeros(len(u), dtype=np.int8)
    else:
        later = _pick(plan.later_cdf[first], u[:, 2]) + 1
    return TrialTable(np.arange(start, stop), comp, first, later, settings_id)


def _simulate(plan, n, seed, settings_id, workers, chunk_size) -> TrialTable:
    if n < 1:
        raise ValueError("need at least one trial")
    bounds = [(s, min(s + chunk_size, n)) for s in range(0, n, chunk_size)]
    if workers <= 1 or len(bounds) == 1:
        parts = [_run_chunk(plan, seed, settings_id, a, b) for a, b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda ab: _run_chunk(plan, seed, settings_id, *ab), bounds))
    return TrialTable.concat(parts)


def run_forward(
    ensemble: EnsembleSpec,
    angles: ProductAngles,
    n: int,
    seed: int,
    *,
    settings_id: int = 0,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
) -> TrialTable:
    """Prepared pairs measured once in the product basis at ``angles``."""
    return _simulate(_plan(ensemble, angles, None), n, seed, settings_id, workers, chunk_size)


def run_reverse(
    ensemble: EnsembleSpec,
    angles: ProductAngles,
    later: Optional[Basis4],
    n: int,
    seed: int,
    *,
    settings_id: int = 0,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
) -> TrialTable:
    """Product-basis measurement first, then ``later`` on the collapsed pair.

    ``later=None`` skips the second measurement entirely.
    """
    return _simulate(_plan(ensemble, angles, later), n, seed, settings_id, workers, chunk_size)


def simulate_trial(
    ensemble: EnsembleSpec,
    angles: ProductAngles,
    later: Optional[Basis4],
    seed: int,
    trial_id: int,
    settings_id: int = 0,
) -> TrialRecord:
    """One trial through the scalar ops; reproduces the vectorized runs exactly."""
    rng = RngStream(seed, trial_id, settings_id)
    k, state = sample_component(ensemble, rng)
    r, collapsed = measure(state, product_basis(angles), rng)
    a = None
    if later is not None:
        a, _ = measure(collapsed, later, rng)
    return TrialRecord(trial_id, k, OUTCOME_LABELS[r - 1], a, settings_id)


def sort_subensembles(records: Records) -> dict:
    """Partition by later outcome, keeping trial order; absent outcomes go to ``UNMEASURED``."""
    table = _as_table(records)
    buckets = {}
    for a in (1, 2, 3, 4):
        mask = table.later == a
        if mask.any():
            buckets[a] = table.take(mask)
    mask = table.later == 0
    if mask.any():
        buckets[UNMEASURED] = table.take(mask)
    return buckets


def group_by_component(records: Records) -> dict[int, TrialTable]:
    """Diagnostics only: split by the hidden preparation index."""
    table = _as_table(records)
    return {int(k): table.take(table.component == k) for k in np.unique(table.component)}


@dataclass(frozen=True)
class EstimateReport:
    n: int
    p_same: float
    correlation: float
    std_error: float

    def z_score(self, exact: CorrelationReport | float) -> float:
        """Deviation of the correlation estimate in standard errors.

        Falls back to the error implied by the exact value when the sample
        error is zero (all-same or all-different samples).
        """
        e = float(getattr(exact, "correlation", exact))
        se = self.std_error
        if se == 0.0:
            p = (1.0 + e) / 2.0
            se = 2.0 * math.sqrt(max(p * (1.0 - p), 0.0) / self.n)
        diff = self.correlation - e
        if se == 0.0:
            return 0.0 if abs(diff) < 1e-12 else math.copysign(math.inf, diff)
        return diff / se


def first_outcome_counts(records: Records) -> np.ndarray:
    return np.bincount(_as_table(records).first.astype(np.int64), minlength=4)


def estimate_correlation(records: Records) -> EstimateReport:
    table = _as_table(records)
    n = len(table)
    if n == 0:
        raise EmptySubensemble("no records to estimate from")
    counts = first_outcome_counts(table)
    p_same = float(counts[0] + counts[3]) / n
    return EstimateReport(
        n=n,
        p_same=p_same,
        correlation=2.0 * p_same - 1.0,
        std_error=2.0 * math.sqrt(p_same * (1.0 - p_same) / n),
    )
