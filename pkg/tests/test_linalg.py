import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from koopfam import linalg
from koopfam.errors import DomainError, IllConditionedError, NumericalError

from oracles import taylor_expm


def test_eig_identity():
    d = linalg.eig(np.eye(2))
    np.testing.assert_allclose(d.values, [1, 1])


def test_eig_harmonic_block():
    # roots of mu^2 + 4 = 0
    d = linalg.eig([[0, 1], [-4, 0]])
    np.testing.assert_allclose(d.values, [2j, -2j], atol=1e-14)


def test_eig_diagonal_standard_basis():
    d = linalg.eig(np.diag([3.0, -1.0]))
    np.testing.assert_allclose(d.values, [3, -1])
    np.testing.assert_allclose(np.abs(d.right), np.eye(2))


def test_eig_canonical_order_ties():
    # equal modulus: real part descending, then imaginary part descending
    vals = linalg.eigvals(np.diag([-2.0, 2.0, 1.0]))
    np.testing.assert_allclose(vals, [2, -2, 1])
    vals = linalg.eigvals([[0, -1], [1, 0]])
    assert vals[0].imag > 0


def test_eig_normalisation_and_biorthogonality():
    A = np.array([[1.0, 2.0, 0.0], [0.5, -1.0, 1.0], [0.0, 0.3, 2.0]])
    d = linalg.eig(A)
    np.testing.assert_allclose(np.linalg.norm(d.right, axis=0), 1.0)
    for j in range(3):
        v = d.right[:, j]
        first = v[np.flatnonzero(np.abs(v) > 1e-12)[0]]
        assert abs(first.imag) < 1e-14 and first.real > 0
    np.testing.assert_allclose(d.left.conj().T @ d.right, np.eye(3), atol=1e-12)
    for i in range(3):
        np.testing.assert_allclose(d.left[:, i].conj() @ A, d.values[i] * d.left[:, i].conj(), atol=1e-12)


def test_eig_rejects_bad_input():
    with pytest.raises(DomainError):
        linalg.eig(np.ones((2, 3)))
    with pytest.raises(DomainError):
        linalg.eig([[np.nan, 0], [0, 1]])


def test_expm_zero_and_diagonal():
    np.testing.assert_array_equal(linalg.expm(np.zeros((3, 3))), np.eye(3))
    np.testing.assert_allclose(linalg.expm(np.diag([0.3, -2.0])), np.diag(np.exp([0.3, -2.0])), rtol=1e-14)


def test_expm_rotation_closed_form():
    E = linalg.expm(0.5 * np.array([[0, 2.0], [-2.0, 0]]))
    ref = np.array([[np.cos(1), np.sin(1)], [-np.sin(1), np.cos(1)]])
    np.testing.assert_allclose(E, ref, atol=1e-15)


def test_expm_against_taylor(rng):
    for _ in range(10):
        A = rng.normal(size=(4, 4)) * 2
        np.testing.assert_allclose(linalg.expm(A), taylor_expm(A), rtol=1e-12, atol=1e-12 * np.exp(np.linalg.norm(A, 2)))


def test_eig_defective_is_explicit():
    with pytest.raises(IllConditionedError):
        linalg.eig([[0.0, 1.0], [0.0, 0.0]])


def test_expm_overflow_is_explicit():
    with pytest.raises(NumericalError):
        linalg.expm(np.array([[1e4]]))


def test_logm_returns_real_for_real_input():
    A = np.array([[-0.1, 0.0], [0.1, 0.0]])
    L = linalg.logm(linalg.expm(A))
    assert np.isrealobj(L)
    np.testing.assert_allclose(L, A, atol=1e-14)


def test_project_trivial_cases():
    e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    c, r = linalg.project_onto_span([e1], e1)
    np.testing.assert_allclose(c, [1])
    np.testing.assert_allclose(r, 0)
    c, r = linalg.project_onto_span([e1], e2)
    np.testing.assert_allclose(c, [0])
    np.testing.assert_allclose(r, e2)


def test_project_two_term_recurrence():
    # any constant 2-D system: x(2dt) lies in span{x(0), x(dt)}
    A = np.array([[0.3, 1.0], [-2.0, -0.1]])
    G = taylor_expm(A * 0.01)
    x0 = np.array([1.0, 0.5])
    x1, x2 = G @ x0, G @ G @ x0
    _, r = linalg.project_onto_span([x0, x1], x2)
    assert np.linalg.norm(r) <= 1e-12 * np.linalg.norm(x2)


def test_project_rank_deficient_min_norm():
    b = np.array([1.0, 1.0, 0.0])
    c, r = linalg.project_onto_span([b, 2 * b], np.array([2.0, 2.0, 1.0]))
    # minimum-norm split of the coefficient 2 over (1, 2)
    np.testing.assert_allclose(c, [0.4, 0.8])
    np.testing.assert_allclose(r, [0, 0, 1], atol=1e-14)


def test_project_dimension_mismatch():
    with pytest.raises(DomainError):
        linalg.project_onto_span([np.ones(3)], np.ones(2))


# Entries on a 1/16 lattice keep the inputs well scaled (no 1e-300 next to 1).
entry = st.integers(-48, 48).map(lambda v: v / 16)
square = st.integers(2, 5).flatmap(lambda n: arrays(np.float64, (n, n), elements=entry))


@given(square)
def test_property_eig_reconstructs(A):
    try:
        d = linalg.eig(A)
    except NumericalError:
        assume(False)  # defective input, outside the contract
    assume(d.condition < 1e6)
    R = d.right
    np.testing.assert_allclose(R @ np.diag(d.values) @ np.linalg.inv(R), A,
                               atol=1e-9 * max(1.0, np.linalg.norm(A, 2)))


@given(square)
def test_property_expm_inverse(A):
    A = A * (5.0 / max(5.0, np.linalg.norm(A, 2)))
    np.testing.assert_allclose(linalg.expm(A) @ linalg.expm(-A), np.eye(A.shape[0]), atol=1e-10 * np.exp(0))


@given(square, st.floats(-1, 1), st.floats(-1, 1))
def test_property_expm_semigroup(A, s, t):
    A = A * (1.0 / max(1.0, np.linalg.norm(A, 2)))
    lhs = linalg.expm((s + t) * A)
    rhs = linalg.expm(s * A) @ linalg.expm(t * A)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


@given(st.integers(2, 6).flatmap(lambda m: st.tuples(
    arrays(np.float64, (m, 3), elements=st.floats(-5, 5, width=64)),
    arrays(np.float64, (m,), elements=st.floats(-5, 5, width=64)))))
def test_property_projection_residual_orthogonal(data):
    B, y = data
    c, r = linalg.project_onto_span(B, y)
    rn = np.linalg.norm(r)
    for b in B.T:
        assert abs(r @ b) <= 1e-10 * max(rn * np.linalg.norm(b), 1e-300) + 1e-13
    np.testing.assert_allclose(B @ c + r, y, atol=1e-9 * max(1, np.linalg.norm(y)))
