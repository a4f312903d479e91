import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sal.errors import ValidationError
from sal.spectral import (
    Spectrum,
    check_symmetric,
    decompose_symmetric,
    from_diagonal,
    jacobi_eigh,
    spectrum_from_config,
    to_ambient,
    to_modal,
)


def sym_matrices(max_d=8):
    return st.integers(1, max_d).flatmap(
        lambda d: arrays(np.float64, (d, d), elements=st.floats(-2, 2, allow_nan=False)).map(lambda a: (a + a.T) / 2)
    )


def test_diagonal_input():
    s = decompose_symmetric(np.diag([2.0, 1.0]))
    assert np.allclose(s.eigenvalues, [2, 1])
    assert np.allclose(s.basis, np.eye(2))


def test_exchange_matrix():
    s = decompose_symmetric([[0.0, 1.0], [1.0, 0.0]])
    assert np.allclose(s.eigenvalues, [1, -1], atol=1e-14)
    r = 1 / math.sqrt(2)
    # sign convention: largest-magnitude entry positive (ties keep the first)
    assert np.allclose(np.abs(s.basis[:, 0]), [r, r])
    assert np.allclose(s.basis[:, 0], [r, r])
    assert abs(s.basis[:, 1] @ np.array([1, -1]) * r) == pytest.approx(1.0)


def test_scalar_matrix_reconstructs():
    s = decompose_symmetric(-np.eye(3))
    assert np.allclose(s.eigenvalues, -1)
    assert s.reconstruction_error(-np.eye(3)) < 1e-12
    assert s.orthonormality_error() < 1e-12


def test_matches_numpy_oracle():
    rng = np.random.default_rng(0)
    for d in (2, 5, 16, 32):
        A = rng.standard_normal((d, d))
        A = A + A.T
        s = decompose_symmetric(A)
        assert np.allclose(s.eigenvalues, np.sort(np.linalg.eigvalsh(A))[::-1], atol=1e-12)
        assert s.reconstruction_error(A) < 1e-12


@settings(max_examples=300, deadline=None)
@given(sym_matrices())
def test_spectrum_invariants(V):
    s = decompose_symmetric(V)
    assert s.orthonormality_error() < 1e-12
    assert s.reconstruction_error(V) < 1e-12
    assert np.all(np.diff(s.eigenvalues) <= 0)
    # sign convention: largest-magnitude component of each column is positive
    idx = np.argmax(np.abs(s.basis), axis=0)
    assert np.all(s.basis[idx, np.arange(s.dim)] > 0)


def test_thousand_random_matrices():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        d = int(rng.integers(1, 9))
        A = rng.uniform(-2, 2, (d, d))
        V = (A + A.T) / 2
        s = decompose_symmetric(V)
        assert s.orthonormality_error() < 1e-12
        assert s.reconstruction_error(V) < 1e-12


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_two_by_two_characteristic_roots(a, b, c):
    V = np.array([[a, b], [b, c]])
    disc = math.sqrt(((a - c) / 2) ** 2 + b * b)
    roots = sorted([(a + c) / 2 + disc, (a + c) / 2 - disc], reverse=True)
    assert np.allclose(decompose_symmetric(V).eigenvalues, roots, atol=1e-10)


def test_jacobi_converges_on_nearly_diagonal():
    A = np.diag([3.0, 2.0, 1.0]) + 1e-9 * np.ones((3, 3))
    w, Q = jacobi_eigh(A)
    assert np.allclose(Q @ np.diag(w) @ Q.T, A, atol=1e-14)


def test_asymmetric_rejected_with_symmetry_message():
    with pytest.raises(ValidationError, match=r"Q\^T K = V = V\^T"):
        check_symmetric([[1.0, 0.5], [0.2, 1.0]])


@pytest.mark.parametrize("bad", [np.ones((2, 3)), [[np.nan, 0], [0, 1]], [[np.inf, 0], [0, 1]]])
def test_malformed_matrix_rejected(bad):
    with pytest.raises(ValidationError):
        decompose_symmetric(bad)


def test_from_diagonal_keeps_order():
    s = from_diagonal([-1.0, 3.0, 0.5])
    assert list(s.eigenvalues) == [-1.0, 3.0, 0.5]
    assert s.top == 1 and s.bottom == 0
    assert np.allclose(s.matrix, np.diag([-1.0, 3.0, 0.5]))


def test_spectrum_from_config():
    assert np.allclose(spectrum_from_config({"diag": [1, 2]}).matrix, np.diag([1, 2]))
    assert np.allclose(spectrum_from_config({"V": [[0, 1], [1, 0]]}).matrix, [[0, 1], [1, 0]])
    with pytest.raises(ValidationError):
        spectrum_from_config({})


def test_to_modal_examples():
    s = decompose_symmetric([[0.0, 1.0], [1.0, 0.0]])
    assert np.allclose(to_modal(s.basis[:, 0], s), [1, 0])
    c = to_modal(np.array([1.0, 0.0]), s)
    assert np.allclose(np.abs(c), [1 / math.sqrt(2)] * 2)
    ident = from_diagonal([1.0, 2.0, 3.0])
    x = np.array([0.6, 0.0, 0.8])
    assert np.allclose(to_modal(x, ident), x)


@settings(max_examples=200, deadline=None)
@given(sym_matrices(6), st.integers(0, 2**32 - 1))
def test_round_trip(V, seed):
    s = decompose_symmetric(V)
    x = np.random.default_rng(seed).standard_normal(s.dim)
    x /= np.linalg.norm(x)
    c = to_modal(x, s)
    assert abs(np.linalg.norm(c) - 1) < 1e-10
    assert np.max(np.abs(to_ambient(c, s) - x)) < 1e-12


def test_to_modal_errors():
    s = from_diagonal([1.0, 2.0])
    with pytest.raises(ValidationError):
        to_modal(np.array([1.0, 1.0]), s)
    with pytest.raises(ValidationError):
        to_modal(np.array([1.0, 0.0, 0.0]), s)
    with pytest.raises(ValidationError):
        to_ambient(np.array([1.0, 0.0, 0.0]), s)


def test_spectrum_is_frozen():
    s = from_diagonal([1.0])
    assert isinstance(s, Spectrum)
    with pytest.raises(Exception):
        s.eigenvalues = np.array([2.0])
