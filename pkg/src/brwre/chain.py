"""Spatial chain P on X, the type chain p on T, product paths and pair measures.

Product states (i, x) are flattened as ``i * n_sites + x`` wherever a matrix
over T x X is needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyPath,
    NotIrreducible,
    NotShiftInvariant,
    ValidationError,
)
from .rng import make_rng
from .typegraph import TypeGraph, is_irreducible, strongly_connected_components

ROW_TOL = 1e-12


@dataclass(frozen=True)
class SpatialChain:
    P: np.ndarray

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] == 0:
            raise DimensionMismatch(f"P must be a nonempty square matrix, got shape {P.shape}")
        for x, row in enumerate(P):
            if np.any(row < 0) or not np.all(np.isfinite(row)):
                raise ValidationError(f"row {x} of P has a negative or non-finite entry")
            if abs(row.sum() - 1.0) > ROW_TOL:
                raise ValidationError(f"row {x} of P sums to {row.sum():.17g}, not 1")
        if not is_irreducible(P > 0):
            raise NotIrreducible("spatial chain P is not irreducible")
        P.setflags(write=False)
        object.__setattr__(self, "P", P)

    @property
    def n_sites(self) -> int:
        return self.P.shape[0]

    @classmethod
    def trivial(cls) -> "SpatialChain":
        """Single site with ``P = [[1]]``: no migration."""
        return cls(np.ones((1, 1)))


def type_kernel(g: TypeGraph) -> np.ndarray:
    """Uniform random walk on the type graph, ``p_ij = 1{(i,j) in A} / deg(i)``."""
    return g.adjacency / g.outdeg[:, None]


def type_kernel_exact(g: TypeGraph) -> list[list[Fraction]]:
    return [[Fraction(int(g.adjacency[i, j]), int(g.outdeg[i])) for j in range(g.n_types)]
            for i in range(g.n_types)]


def product_kernel(g: TypeGraph, chain: SpatialChain) -> np.ndarray:
    """Transition matrix of the independent pair (T, X) on flattened states."""
    return np.kron(type_kernel(g), chain.P)


def stationary_distribution(K: np.ndarray) -> np.ndarray:
    """A stationary law of the stochastic matrix ``K``.

    For reducible ``K`` the law of the closed class with the smallest member
    is returned.
    """
    K = np.asarray(K, dtype=float)
    n = K.shape[0]
    adj = K > 0
    closed = None
    for c in strongly_connected_components(adj):
        mask = np.zeros(n, dtype=bool)
        mask[c] = True
        if not np.any(adj[np.ix_(mask, ~mask)]):
            closed = c
            break
    sub = K[np.ix_(closed, closed)]
    m = len(closed)
    M = np.eye(m) - sub.T
    M[-1, :] = 1.0
    rhs = np.zeros(m)
    rhs[-1] = 1.0
    pi_c = np.linalg.solve(M, rhs)
    pi = np.zeros(n)
    pi[closed] = np.clip(pi_c, 0.0, None)
    return pi / pi.sum()


@dataclass(frozen=True)
class ProductPath:
    types: np.ndarray
    sites: np.ndarray

    @property
    def n(self) -> int:
        return len(self.types) - 1

    @property
    def steps(self) -> list[tuple[int, int]]:
        return list(zip(self.types.tolist(), self.sites.tolist()))

    def validate(self, g: TypeGraph, chain: SpatialChain) -> None:
        for l in range(1, len(self.types)):
            if not g.adjacency[self.types[l - 1], self.types[l]]:
                raise ValidationError(f"type step {l} is not an edge")
            if chain.P[self.sites[l - 1], self.sites[l]] <= 0:
                raise ValidationError(f"site step {l} has zero probability")


def sample_product_path(g: TypeGraph, chain: SpatialChain, start: tuple[int, int], n: int,
                        seed) -> ProductPath:
    """Run the type walk and the spatial chain independently for ``n`` steps."""
    i, x = start
    if not (0 <= i < g.n_types and 0 <= x < chain.n_sites):
        raise ValidationError(f"start {start} out of range")
    if n < 0:
        raise ValidationError("n must be nonnegative")
    rng = make_rng(seed)
    p_cum = np.cumsum(type_kernel(g), axis=1)
    P_cum = np.cumsum(chain.P, axis=1)
    u = rng.random((n, 2))
    types = np.empty(n + 1, dtype=int)
    sites = np.empty(n + 1, dtype=int)
    types[0], sites[0] = i, x
    for l in range(n):
        t, s = types[l], sites[l]
        types[l + 1] = min(np.searchsorted(p_cum[t], u[l, 0], side="right"), g.n_types - 1)
        sites[l + 1] = min(np.searchsorted(P_cum[s], u[l, 1], side="right"), chain.n_sites - 1)
    return ProductPath(types, sites)


@dataclass(frozen=True)
class PairMeasure:
    """Probability measure on (T x X)^2, ``weights[i, x, j, y]``.

    ``closed`` is set by :func:`empirical_pair_measure`; it is ``None`` for
    measures built directly.
    """

    weights: np.ndarray
    closed: bool | None = field(default=None, compare=False)

    @property
    def n_types(self) -> int:
        return self.weights.shape[0]

    @property
    def n_sites(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def from_matrix(cls, nu: np.ndarray, n_types: int, n_sites: int) -> "PairMeasure":
        return cls(np.asarray(nu, dtype=float).reshape(n_types, n_sites, n_types, n_sites))

    def as_matrix(self) -> np.ndarray:
        s = self.n_types * self.n_sites
        return self.weights.reshape(s, s)

    @cached_property
    def bar_ijx(self) -> np.ndarray:
        """``sum_y nu((i,x),(j,y))`` indexed ``[i, j, x]``."""
        return self.weights.sum(axis=3).transpose(0, 2, 1)

    @cached_property
    def bar_ix(self) -> np.ndarray:
        return self.bar_ijx.sum(axis=1)

    @cached_property
    def bar_ij(self) -> np.ndarray:
        return self.bar_ijx.sum(axis=2)

    @cached_property
    def bar_i(self) -> np.ndarray:
        return self.bar_ij.sum(axis=1)

    @cached_property
    def second_marginal(self) -> np.ndarray:
        return self.weights.sum(axis=(0, 1))

    def marginal_gap(self) -> float:
        """Total-variation distance between the two (T x X)-marginals."""
        return 0.5 * float(np.abs(self.bar_ix - self.second_marginal).sum())

    def validate(self, tol: float = 1e-9) -> None:
        w = self.weights
        if np.any(w < -tol) or abs(w.sum() - 1.0) > tol:
            raise ValidationError("weights are not a probability measure")
        if self.marginal_gap() > tol:
            raise NotShiftInvariant(f"marginal gap {self.marginal_gap():.3g}")


def empirical_pair_measure(path: ProductPath, n_types: int | None = None,
                           n_sites: int | None = None) -> PairMeasure:
    """``(1/n) sum_l delta((T_{l-1}, X_{l-1}), (T_l, X_l))``.

    Dimensions default to the largest type and site seen on the path.
    """
    n = path.n
    if n < 1:
        raise EmptyPath("empirical pair measure needs at least one step")
    n_types = int(path.types.max()) + 1 if n_types is None else n_types
    n_sites = int(path.sites.max()) + 1 if n_sites is None else n_sites
    w = np.zeros((n_types, n_sites, n_types, n_sites))
    np.add.at(w, (path.types[:-1], path.sites[:-1], path.types[1:], path.sites[1:]), 1.0)
    closed = bool(path.types[0] == path.types[-1] and path.sites[0] == path.sites[-1])
    return PairMeasure(w / n, closed=closed)


def stationary_pair_measure(g: TypeGraph, chain: SpatialChain) -> PairMeasure:
    """Pair law ``pi(a) K(a, b)`` of the product chain in equilibrium."""
    K = product_kernel(g, chain)
    pi = np.kron(stationary_distribution(type_kernel(g)), stationary_distribution(chain.P))
    return PairMeasure.from_matrix(pi[:, None] * K, g.n_types, chain.n_sites)
