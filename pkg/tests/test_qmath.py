import math

import numpy as np
import pytest
from hypothesis import given, settings

from delayedchoice.errors import InvalidStateError, NonUnitaryBasisError
from delayedchoice.qmath import (
    Basis4,
    ProductAngles,
    PureState4,
    bell_basis,
    born_probabilities,
    express_in,
    flat_index,
    inner_product,
    product_basis,
    random_unitary_basis,
    same_basis,
    verify_unitarity,
)

from conftest import angles_st, random_state

H = math.sqrt(0.5)


def test_flat_index_convention():
    assert [flat_index(i, j) for i in (1, 2) for j in (1, 2)] == [0, 1, 2, 3]
    with pytest.raises(ValueError):
        flat_index(0, 1)


def test_bell_rows_match_definition():
    b = bell_basis()
    np.testing.assert_array_equal(b.row(1).amps, [H, 0, 0, H])
    np.testing.assert_array_equal(b.row(2).amps, [H, 0, 0, -H])
    np.testing.assert_array_equal(b.row(3).amps, [0, H, H, 0])
    np.testing.assert_array_equal(b.row(4).amps, [0, H, -H, 0])
    assert verify_unitarity(b) <= 1e-15


def test_state_indexing_by_labels():
    b1 = bell_basis().row(1)
    assert b1[1, 1] == pytest.approx(H)
    assert b1[2, 1] == 0


def test_product_basis_at_zero_is_computational():
    np.testing.assert_allclose(product_basis(ProductAngles(0, 0)).matrix, np.eye(4), atol=0)


def test_product_basis_quarter_turn_maps_v_to_h():
    row1 = product_basis(ProductAngles(math.pi / 2, 0)).row(1)
    np.testing.assert_allclose(row1.amps, [0, 0, 1, 0], atol=1e-15)


def test_product_basis_row_order():
    t, p = 0.4, 1.3
    m = product_basis(ProductAngles(t, p)).matrix
    along = lambda a: np.array([math.cos(a), math.sin(a)])
    perp = lambda a: np.array([-math.sin(a), math.cos(a)])
    expected = [np.kron(along(t), along(p)), np.kron(along(t), perp(p)),
                np.kron(perp(t), along(p)), np.kron(perp(t), perp(p))]
    np.testing.assert_allclose(m, expected, atol=1e-15)


def test_product_basis_unitary_example():
    assert verify_unitarity(product_basis(ProductAngles(math.pi / 6, math.pi / 4))) <= 1e-12


def test_product_basis_rejects_nonfinite():
    with pytest.raises(ValueError):
        product_basis(ProductAngles(float("nan"), 0))


def test_scaled_row_residual():
    m = np.array(bell_basis().matrix)
    m[0] *= 1.1
    # Gram (1,1) entry is 1.21
    assert verify_unitarity(Basis4(m)) == pytest.approx(0.21, abs=1e-12)
    with pytest.raises(NonUnitaryBasisError):
        Basis4(m).require_unitary()


def test_verify_unitarity_never_throws_on_garbage():
    assert verify_unitarity(Basis4(np.zeros((4, 4)))) == pytest.approx(1.0)


def test_inner_product_examples():
    b = bell_basis()
    s = random_state(np.random.default_rng(3))
    assert inner_product(s, s) == pytest.approx(1 + 0j, abs=1e-12)
    assert abs(inner_product(b.row(1), b.row(2))) <= 1e-15
    t, p = 0.7, 0.2
    row1 = product_basis(ProductAngles(t, p)).row(1)
    # direct expansion: sqrt(1/2) (cos t cos p + sin t sin p)
    direct = H * (math.cos(t) * math.cos(p) + math.sin(t) * math.sin(p))
    assert inner_product(b.row(1), row1) == pytest.approx(direct, abs=1e-15)
    assert inner_product(b.row(1), row1) == pytest.approx(math.cos(t - p) / math.sqrt(2), abs=1e-15)


def test_inner_product_conjugate_linear_in_first():
    a = PureState4([1j, 0, 0, 0])
    b = PureState4([1, 0, 0, 0])
    assert inner_product(a, b) == -1j


def test_unnormalized_state_is_buildable_but_flagged():
    s = PureState4([0.8, 0, 0, 0])
    assert s.norm == pytest.approx(0.8)
    with pytest.raises(InvalidStateError):
        s.require_normalized()
    with pytest.raises(InvalidStateError):
        PureState4([float("inf"), 0, 0, 0])


def test_states_are_immutable():
    s = bell_basis().row(1)
    with pytest.raises(ValueError):
        s.amps[0] = 0


def test_canonical_angles():
    a = ProductAngles(-0.5, 4.0).canonical()
    assert 0 <= a.theta < math.pi and 0 <= a.phi < math.pi


@settings(max_examples=200, deadline=None)
@given(angles_st, angles_st)
def test_product_basis_always_unitary(t, p):
    assert verify_unitarity(product_basis(ProductAngles(t, p))) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(angles_st, angles_st)
def test_theta_plus_pi_flips_row_signs_only(t, p):
    a = product_basis(ProductAngles(t, p))
    b = product_basis(ProductAngles(t + math.pi, p))
    assert same_basis(a, b)
    s = bell_basis().row(3)
    np.testing.assert_allclose(born_probabilities(s, a), born_probabilities(s, b), atol=1e-12)


def test_completeness_over_any_basis(rng):
    for _ in range(50):
        s = random_state(rng)
        basis = random_unitary_basis(rng)
        total = sum(abs(inner_product(row, s)) ** 2 for row in basis.rows)
        assert total == pytest.approx(1.0, abs=1e-12)


def test_random_unitary_bases_are_unitary(rng):
    for _ in range(100):
        assert verify_unitarity(random_unitary_basis(rng)) <= 1e-12


def test_express_in_is_change_of_frame(rng):
    basis, frame = random_unitary_basis(rng), random_unitary_basis(rng)
    coeffs = express_in(basis, frame)
    assert verify_unitarity(coeffs) <= 1e-12
    # rebuild basis rows from frame rows
    np.testing.assert_allclose(coeffs.matrix @ frame.matrix, basis.matrix, atol=1e-12)
