import math

import numpy as np
import pytest
from hypothesis import strategies as st

from delayedchoice.ensembles import EnsembleSpec
from delayedchoice.qmath import PureState4, random_unitary_basis

_ACCEPTANCE_LINES: list[str] = []

angles_st = st.floats(min_value=-2 * math.pi, max_value=2 * math.pi, allow_nan=False)


@st.composite
def alphas(draw):
    raw = draw(st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=4, max_size=4))
    raw = np.array(raw) + 1e-3
    return raw / raw.sum()


def random_state(rng: np.random.Generator) -> PureState4:
    v = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    return PureState4(v / np.linalg.norm(v))


def random_ensemble(rng: np.random.Generator, k: int | None = None) -> EnsembleSpec:
    k = k or int(rng.integers(1, 6))
    w = rng.random(k) + 0.05
    w = w / w.sum()
    return EnsembleSpec.from_pairs((float(x), random_state(rng)) for x in w)


@pytest.fixture
def rng():
    return np.random.default_rng(20261014)


@pytest.fixture
def basis_rng():
    return lambda seed: random_unitary_basis(np.random.default_rng(seed))


@pytest.fixture
def acceptance_log():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
