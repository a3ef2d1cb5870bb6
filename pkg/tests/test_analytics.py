import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from delayedchoice import oracle
from delayedchoice.analytics import (
    TSIRELSON,
    CorrelationReport,
    JointDistribution,
    chsh,
    chsh_settings,
    entangled_marginal,
    forward_correlation,
    induced_alpha,
    joint_distribution,
    no_signaling_check,
    observer1_marginal,
    retrospective_conditional,
    retrospective_correlation,
    reverse_joint,
    state_correlation,
    unconditioned_correlation,
    whole_ensemble_correlation,
)
from delayedchoice.ensembles import AlphaTable, EnsembleSpec, maximally_mixed, product_mixture, uniform_bell_mixture
from delayedchoice.errors import InvalidEnsembleError, NonUnitaryBasisError, ZeroMarginal
from delayedchoice.qmath import Basis4, ProductAngles, bell_basis, product_basis, random_unitary_basis

from conftest import alphas, angles_st, random_ensemble

BELL = bell_basis()


def oracle_forward(state, angles):
    """Same-outcome probability via oracle path enumeration (first measurement only)."""
    paths = oracle.enumerate_paths(EnsembleSpec.pure(state), angles, BELL)
    first = oracle.marginalize(paths, {"first"})
    return first.get(((1, 1),), 0.0) + first.get(((2, 2),), 0.0)


def test_joint_uniform_alpha_bell():
    joint = joint_distribution(AlphaTable.uniform(), BELL)
    support = np.abs(BELL.matrix.T) > 0
    np.testing.assert_allclose(joint.p[support], 0.125, atol=1e-15)
    assert np.all(joint.p[~support] == 0)


def test_joint_pure_vv():
    joint = joint_distribution([1, 0, 0, 0], BELL)
    np.testing.assert_allclose(joint.p[0], [0.5, 0.5, 0, 0], atol=1e-15)
    assert np.all(joint.p[1:] == 0)
    assert joint.p.sum() == pytest.approx(1.0, abs=1e-12)


def test_joint_rejects_bad_inputs():
    m = np.array(BELL.matrix)
    m[0] *= 1.1
    with pytest.raises(NonUnitaryBasisError):
        joint_distribution(AlphaTable.uniform(), Basis4(m))
    with pytest.raises(InvalidEnsembleError):
        joint_distribution([0.5, 0.5, 0.5, 0], BELL)


def test_entangled_marginal_examples():
    np.testing.assert_allclose(entangled_marginal(joint_distribution(AlphaTable.uniform(), BELL)), [0.25] * 4)
    np.testing.assert_allclose(entangled_marginal(joint_distribution([1, 0, 0, 0], BELL)), [0.5, 0.5, 0, 0])


def test_retrospective_conditional_examples():
    cond = retrospective_conditional(joint_distribution(AlphaTable.uniform(), BELL), 1)
    np.testing.assert_allclose(cond, [0.5, 0, 0, 0.5], atol=1e-15)
    with pytest.raises(ZeroMarginal) as info:
        retrospective_conditional(joint_distribution([1, 0, 0, 0], BELL), 3)
    assert info.value.outcome == 3


def test_forward_correlation_examples():
    assert forward_correlation(1, ProductAngles(0.9, 0.9)).correlation == pytest.approx(1.0, abs=1e-12)
    assert forward_correlation(1, ProductAngles(math.pi / 4, 0)).correlation == pytest.approx(0.0, abs=1e-12)
    rep = forward_correlation(1, ProductAngles(math.pi / 6, 0))
    assert rep.correlation == pytest.approx(math.cos(math.pi / 3), abs=1e-12)
    assert rep.p_same == pytest.approx(oracle_forward(BELL.row(1), ProductAngles(math.pi / 6, 0)), abs=1e-12)


def test_forward_other_bell_states():
    # Born-rule enumeration by the oracle for each Bell state
    for k in (1, 2, 3, 4):
        for t, p in [(0.1, 0.7), (1.3, 0.2), (2.9, 2.0)]:
            a = ProductAngles(t, p)
            assert forward_correlation(k, a).p_same == pytest.approx(oracle_forward(BELL.row(k), a), abs=1e-12)


def test_correlation_report_invariants():
    rep = forward_correlation(3, ProductAngles(0.3, 1.7))
    assert rep.p_same + rep.p_diff == pytest.approx(1.0, abs=1e-12)
    assert rep.correlation == pytest.approx(rep.p_same - rep.p_diff, abs=1e-15)


def test_whole_ensemble_examples():
    for t, p in [(0.0, 0.0), (0.3, 1.2), (2.0, 0.4)]:
        rep = whole_ensemble_correlation(uniform_bell_mixture(), ProductAngles(t, p))
        assert rep.p_same == pytest.approx(0.5, abs=1e-12)
        assert rep.correlation == pytest.approx(0.0, abs=1e-12)
    a = ProductAngles(0.4, 0.1)
    single = whole_ensemble_correlation(EnsembleSpec.pure(BELL.row(1)), a)
    assert single.correlation == pytest.approx(forward_correlation(1, a).correlation, abs=1e-15)


def oracle_retrospective(ensemble, angles, later, a):
    paths = oracle.enumerate_paths(ensemble, angles, later)
    fl = oracle.marginalize(paths, {"first", "later"})
    same = fl.get(((1, 1), a), 0.0) + fl.get(((2, 2), a), 0.0)
    total = sum(v for (first, aa), v in fl.items() if aa == a)
    return same / total


def test_retrospective_correlation_examples():
    a = ProductAngles(math.pi / 6, 0)
    rep = retrospective_correlation(a, maximally_mixed(), BELL, 1)
    assert rep.correlation == pytest.approx(0.5, abs=1e-12)
    assert rep.p_same == pytest.approx(oracle_retrospective(maximally_mixed(), a, BELL, 1), abs=1e-12)
    eq = ProductAngles(1.1, 1.1)
    assert retrospective_correlation(eq, maximally_mixed(), BELL, 1).correlation == pytest.approx(1.0, abs=1e-12)
    assert oracle_retrospective(maximally_mixed(), eq, BELL, 1) == pytest.approx(1.0, abs=1e-12)


def test_unconditioned_is_zero_for_mixed_input():
    joint = reverse_joint(maximally_mixed(), ProductAngles(math.pi / 6, 0), BELL)
    marg = entangled_marginal(joint)
    weighted = sum(
        marg[a - 1] * CorrelationReport.from_outcomes(retrospective_conditional(joint, a)).correlation
        for a in (1, 2, 3, 4)
    )
    assert weighted == pytest.approx(0.0, abs=1e-12)
    assert unconditioned_correlation(joint).correlation == pytest.approx(0.0, abs=1e-12)


def test_retrospective_zero_marginal_propagates():
    vv = EnsembleSpec.pure(product_basis(ProductAngles(0, 0)).row(1))
    with pytest.raises(ZeroMarginal):
        retrospective_correlation(ProductAngles(0, 0), vv, BELL, 3)


def test_chsh_examples():
    settings_ = chsh_settings(0, math.pi / 4, math.pi / 8, 3 * math.pi / 8)
    rep = chsh(settings_, lambda s: retrospective_correlation(s, maximally_mixed(), BELL, 1))
    assert rep.s_value == pytest.approx(2 * math.sqrt(2), abs=1e-12)
    for e, sign in zip(rep.correlations, (1, -1, 1, 1)):
        assert e * sign == pytest.approx(math.sqrt(2) / 2, abs=1e-12)
    zero = chsh(settings_, lambda s: whole_ensemble_correlation(uniform_bell_mixture(), s))
    assert zero.s_value == pytest.approx(0.0, abs=1e-12)
    assert zero.std_error is None


def test_chsh_combines_errors():
    class Est:
        def __init__(self, c, se):
            self.correlation, self.std_error = c, se

    rep = chsh(chsh_settings(0, 1, 2, 3), lambda s: Est(0.5, 0.1))
    assert rep.s_value == pytest.approx(1.0)
    assert rep.std_error == pytest.approx(0.2)
    with pytest.raises(ValueError):
        chsh(chsh_settings(0, 1, 2, 3)[:3], lambda s: 0.0)


def test_chsh_bounded_by_four_for_classical_source():
    rep = chsh(chsh_settings(0, 1, 2, 3), lambda s: 1.0 if s.theta == 0 else -1.0)
    assert abs(rep.s_value) <= 4


def test_no_signaling_examples():
    assert no_signaling_check(uniform_bell_mixture(), 0.3, 0.0, 1.1) <= 1e-12
    np.testing.assert_allclose(observer1_marginal(uniform_bell_mixture(), 0.3, 0.0), [0.5, 0.5], atol=1e-12)
    for t, pa, pb in [(0.1, 0.2, 2.9), (1.7, -1, 3)]:
        assert no_signaling_check(EnsembleSpec.pure(BELL.row(1)), t, pa, pb) <= 1e-12
    vv = product_mixture([1, 0, 0, 0], ProductAngles(0, 0))
    assert no_signaling_check(vv, 0.0, 0.0, 0.8) <= 1e-12
    np.testing.assert_allclose(observer1_marginal(vv, 0.0, 0.8), [1, 0], atol=1e-12)


def test_joint_distribution_validates():
    with pytest.raises(ValueError):
        JointDistribution(np.full((4, 4), 0.1))


@settings(max_examples=150, deadline=None)
@given(alphas(), st.integers(0, 2**32 - 1))
def test_eq6_to_eq8_chain(alpha, seed):
    basis = random_unitary_basis(np.random.default_rng(seed))
    joint = joint_distribution(alpha, basis)
    marg = entangled_marginal(joint)
    assert joint.p.sum() == pytest.approx(1.0, abs=1e-12)
    assert marg.sum() == pytest.approx(1.0, abs=1e-12)
    for a in (1, 2, 3, 4):
        if marg[a - 1] < 1e-14:
            continue
        cond = retrospective_conditional(joint, a)
        assert cond.sum() == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(cond * marg[a - 1], joint.p[:, a - 1], atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(angles_st, angles_st)
def test_forward_reverse_equivalence(t, p):
    a = ProductAngles(t, p)
    for k in (1, 2, 3, 4):
        fwd = forward_correlation(k, a).correlation
        rev = retrospective_correlation(a, maximally_mixed(), BELL, k).correlation
        assert rev == pytest.approx(fwd, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), angles_st, angles_st)
def test_whole_ensemble_nullity_general_input(seed, t, p):
    rng = np.random.default_rng(seed)
    ens, basis, a = random_ensemble(rng), random_unitary_basis(rng), ProductAngles(t, p)
    joint = reverse_joint(ens, a, basis)
    marg = entangled_marginal(joint)
    avg = sum(
        marg[k - 1] * CorrelationReport.from_outcomes(retrospective_conditional(joint, k)).correlation
        for k in (1, 2, 3, 4)
        if marg[k - 1] >= 1e-14
    )
    assert avg == pytest.approx(whole_ensemble_correlation(ens, a).correlation, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), angles_st, angles_st, angles_st)
def test_no_signaling_random(seed, t, pa, pb):
    ens = random_ensemble(np.random.default_rng(seed))
    assert no_signaling_check(ens, t, pa, pb) <= 1e-12


def test_tsirelson_random_bases(rng):
    for _ in range(200):
        basis = random_unitary_basis(rng)
        a, a2, b, b2 = rng.uniform(0, math.pi, 4)
        for k in (1, 2, 3, 4):
            rep = chsh(chsh_settings(a, a2, b, b2), lambda s: retrospective_correlation(s, maximally_mixed(), basis, k))
            assert abs(rep.s_value) <= TSIRELSON + 1e-9


def test_probability_outputs_in_range(rng):
    for _ in range(50):
        ens, a = random_ensemble(rng), ProductAngles(*rng.uniform(-3, 3, 2))
        alpha = induced_alpha(ens, a).alpha
        assert np.all((alpha >= 0) & (alpha <= 1))
        rep = state_correlation(ens.states[0], a)
        assert 0 <= rep.p_same <= 1 and -1 <= rep.correlation <= 1
