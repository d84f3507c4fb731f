import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brwre.errors import DimensionMismatch, NotIrreducible, ValidationError
from brwre.spectral import frobenius_mu, frobenius_mu_variational, perron, row_growth_rates


def test_closed_forms():
    assert abs(frobenius_mu([[1.0, 1.0], [1.0, 1.0]]) - math.log(2)) <= 1e-12
    assert abs(frobenius_mu([[0.0, 2.0], [3.0, 0.0]]) - 0.5 * math.log(6)) <= 1e-12
    assert frobenius_mu_variational([[0.0, 2.0], [3.0, 0.0]]) == pytest.approx(
        0.5 * math.log(6), abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(1, 6))
def test_against_eigenvalues(seed, k):
    rng = np.random.default_rng(seed)
    A = rng.uniform(0, 2, (k, k)) * (rng.random((k, k)) < 0.7)
    A[np.arange(k), (np.arange(k) + 1) % k] += 0.5   # keep it irreducible
    ref = math.log(max(abs(np.linalg.eigvals(A))))
    assert frobenius_mu(A) == pytest.approx(ref, abs=1e-10)


def test_perron_vector_is_positive_eigenvector():
    A = np.array([[1.0, 2.0, 0.0], [0.0, 0.5, 1.0], [3.0, 0.0, 0.2]])
    mu, v = perron(A)
    assert np.all(v > 0)
    assert np.allclose(A @ v, math.exp(mu) * v, rtol=1e-10)


def test_row_growth_rates_converge():
    A = np.array([[0.2, 1.0], [4.0, 0.1]])
    mu = frobenius_mu(A)
    assert np.max(np.abs(row_growth_rates(A, 2000) - mu)) <= 1e-3


def test_input_checks():
    with pytest.raises(NotIrreducible):
        frobenius_mu([[1.0, 1.0], [0.0, 1.0]])
    with pytest.raises(DimensionMismatch):
        frobenius_mu([[1.0, 1.0]])
    with pytest.raises(ValidationError):
        frobenius_mu([[1.0, -1.0], [1.0, 1.0]])
