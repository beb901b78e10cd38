"""Group/algebra arithmetic against 2x2 matrix oracles."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from ymflow import liealg


def coeffs(max_norm=5.0):
    return st.tuples(
        *[st.floats(-max_norm, max_norm, allow_nan=False) for _ in range(3)]
    ).map(np.array)


def unit_quats():
    return st.tuples(
        *[st.floats(-1.0, 1.0, allow_nan=False) for _ in range(4)]
    ).map(np.array).filter(lambda q: np.linalg.norm(q) > 1e-3).map(
        lambda q: q / np.linalg.norm(q)
    )


@given(coeffs())
@settings(max_examples=200, deadline=None)
def test_exp_matches_matrix_exponential(x):
    q = liealg.exp(x)
    expected = expm(liealg.algebra_to_matrix(x))
    assert np.allclose(liealg.quat_to_matrix(q), expected, atol=1e-12)


def test_exp_series_oracle():
    """For small X, exp agrees with the truncated power series."""
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = 1e-3 * rng.normal(size=3)
        m = liealg.algebra_to_matrix(x)
        series = np.eye(2) + m + m @ m / 2 + m @ m @ m / 6
        assert np.allclose(
            liealg.quat_to_matrix(liealg.exp(x)), series, atol=1e-14
        )


def test_exp_of_zero_is_identity():
    assert np.array_equal(liealg.exp(np.zeros(3)), liealg.IDENTITY_QUAT)


@given(coeffs(max_norm=3.5).filter(lambda x: np.linalg.norm(x) < 1.9 * np.pi))
@settings(max_examples=200, deadline=None)
def test_log_inverts_exp_on_principal_branch(x):
    assert np.allclose(liealg.log(liealg.exp(x)), x, atol=1e-9)


@given(coeffs())
@settings(max_examples=100, deadline=None)
def test_exp_lands_on_the_group(x):
    assert liealg.unitarity_defect(liealg.exp(x)) < 1e-12


@given(unit_quats(), unit_quats())
@settings(max_examples=100, deadline=None)
def test_qmul_matches_matrix_product(p, q):
    lhs = liealg.quat_to_matrix(liealg.qmul(p, q))
    rhs = liealg.quat_to_matrix(p) @ liealg.quat_to_matrix(q)
    assert np.allclose(lhs, rhs, atol=1e-12)


@given(unit_quats())
@settings(max_examples=100, deadline=None)
def test_qconj_is_hermitian_conjugate(q):
    lhs = liealg.quat_to_matrix(liealg.qconj(q))
    rhs = liealg.quat_to_matrix(q).conj().T
    assert np.allclose(lhs, rhs, atol=1e-14)


@given(unit_quats())
@settings(max_examples=50, deadline=None)
def test_matrix_quat_roundtrip(q):
    assert np.allclose(liealg.matrix_to_quat(liealg.quat_to_matrix(q)), q)


@given(coeffs(), coeffs())
@settings(max_examples=100, deadline=None)
def test_inner_product_is_minus_two_trace(x, y):
    mx, my = liealg.algebra_to_matrix(x), liealg.algebra_to_matrix(y)
    assert np.isclose(
        liealg.inner(x, y), -2.0 * np.real(np.trace(mx @ my)), atol=1e-10
    )


@given(coeffs(), coeffs())
@settings(max_examples=100, deadline=None)
def test_bracket_matches_matrix_commutator(x, y):
    mx, my = liealg.algebra_to_matrix(x), liealg.algebra_to_matrix(y)
    comm = mx @ my - my @ mx
    assert np.allclose(
        liealg.algebra_to_matrix(liealg.bracket(x, y)), comm, atol=1e-10
    )


@given(coeffs())
@settings(max_examples=100, deadline=None)
def test_project_ta_is_idempotent_on_algebra(x):
    assert np.allclose(liealg.project_ta(liealg.algebra_to_matrix(x)), x)


def test_project_ta_kills_hermitian_traceful_part():
    m = np.array([[2.0 + 0j, 1.0], [1.0, 3.0]])  # Hermitian with trace
    assert np.allclose(liealg.project_ta(m), 0.0)


def test_project_ta_rejects_non_finite():
    with pytest.raises(ValueError):
        liealg.project_ta(np.array([[np.inf, 0], [0, 0]], dtype=complex))


def test_exp_rejects_non_finite():
    with pytest.raises(ValueError):
        liealg.exp(np.array([np.nan, 0.0, 0.0]))


def test_qnormalize_unit_norm():
    rng = np.random.default_rng(1)
    q = liealg.qnormalize(rng.normal(size=(32, 4)))
    assert liealg.unitarity_defect(q) < 1e-14


def test_basis_is_orthonormal_antihermitian():
    for a in range(3):
        ta = liealg.TA[a]
        assert np.allclose(ta + ta.conj().T, 0.0)
        assert abs(np.trace(ta)) < 1e-15
        for b in range(3):
            val = -2.0 * np.real(np.trace(liealg.TA[a] @ liealg.TA[b]))
            assert np.isclose(val, 1.0 if a == b else 0.0)
