"""Frobenius eigenvalue ``mu(A) = lim (1/k) log sum_j (A^k)_ij`` and its dual
over shift-invariant pair measures."""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy.special import xlogy

from .errors import DimensionMismatch, NotIrreducible, ValidationError
from .kernels import kernel_search
from .rng import make_rng
from .typegraph import is_irreducible


def _check(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        raise DimensionMismatch(f"need a nonempty square matrix, got shape {A.shape}")
    if np.any(A < 0) or not np.all(np.isfinite(A)):
        raise ValidationError("matrix must be finite and nonnegative")
    if not is_irreducible(A > 0):
        raise NotIrreducible("matrix is not irreducible")
    return A


def perron(A, tol: float = 1e-13, max_iter: int = 200_000) -> tuple[float, np.ndarray]:
    """``(log spectral radius, right Perron vector)`` of an irreducible matrix.

    Power iteration on ``A / s + I`` (``s`` the largest row sum); the shift
    removes periodicity.  Stops when the Collatz-Wielandt bounds agree to
    ``tol`` on the log scale.
    """
    A = _check(A)
    s = A.sum(axis=1).max()
    M = A / s + np.eye(A.shape[0])
    v = np.ones(A.shape[0])
    for _ in range(max_iter):
        w = M @ v
        ratio = w / v
        lo, hi = ratio.min() - 1.0, ratio.max() - 1.0
        v = w / w.max()
        if lo > 0 and math.log(hi) - math.log(lo) <= tol:
            break
    else:
        warnings.warn("power iteration hit max_iter", RuntimeWarning, stacklevel=2)
    r = 0.5 * (lo + hi)
    return math.log(s) + math.log(r), v


def row_growth_rates(A, k: int) -> np.ndarray:
    """``(1/k) log sum_j (A^k)_ij`` for every row ``i``."""
    A = _check(A)
    v = np.ones(A.shape[0])
    log_scale = 0.0
    for _ in range(k):
        v = A @ v
        m = v.max()
        v /= m
        log_scale += math.log(m)
    return (log_scale + np.log(v)) / k


def frobenius_mu(A, tol: float = 1e-13, check_rows: bool = True) -> float:
    """Log of the Frobenius eigenvalue of a nonnegative irreducible matrix.

    With ``check_rows`` the finite-``k`` growth rates of the first and last
    rows are compared against the bounds implied by the Perron vector.
    """
    mu, v = perron(A, tol)
    if check_rows:
        k = 200
        rates = row_growth_rates(A, k)
        for i in (0, len(v) - 1):
            lo = math.log(v[i] / v.max()) / k
            hi = math.log(v[i] / v.min()) / k
            if not (lo - 1e-9 <= rates[i] - mu <= hi + 1e-9):
                raise ArithmeticError(f"row {i} growth rate {rates[i]} inconsistent with {mu}")
    return mu


def frobenius_mu_variational(A, restarts: int = 3, seed: int = 0) -> float:
    """``sup_nu <nu, log A> - sum nu log(nu / nu_bar)`` over shift-invariant
    measures on the support of ``A`` (multi-start local ascent)."""
    A = _check(A)
    mask = A > 0
    logA = np.log(np.where(mask, A, 1.0))

    def objective(nu: np.ndarray) -> float:
        row = nu.sum(axis=1)
        ent = np.sum(xlogy(nu, nu)) - np.sum(xlogy(row, row))
        return float(np.sum(nu * logA) - ent)

    runs = kernel_search(objective, mask, [list(range(A.shape[0]))], restarts,
                         make_rng(seed), maximize=True)
    return max(r.value for r in runs)
