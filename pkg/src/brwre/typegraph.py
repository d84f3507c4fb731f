"""Type graph G = (T, A) with Weibull parameters on its edges, and simple cycles.

Types are the integers ``0..n_types-1``.  A simple cycle is stored with its
closing vertex repeated, rotated so that it starts at its smallest vertex.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import (
    DanglingType,
    Disconnected,
    DuplicateEdge,
    EnumerationTooLarge,
    NonpositiveRho,
    NotShiftInvariant,
    ValidationError,
)

DEFAULT_TOL = 1e-9


def reachability(adj: np.ndarray) -> np.ndarray:
    """Transitive closure (paths of length >= 1) by Warshall's algorithm."""
    r = np.asarray(adj, dtype=bool).copy()
    for k in range(r.shape[0]):
        r |= r[:, k, None] & r[None, k, :]
    return r


def is_irreducible(adj: np.ndarray) -> bool:
    return bool(reachability(adj).all())


def strongly_connected_components(adj: np.ndarray) -> list[list[int]]:
    """SCCs of a boolean adjacency matrix, each sorted, ordered by smallest member."""
    adj = np.asarray(adj, dtype=bool)
    if adj.shape[0] == 0:
        return []
    _, labels = connected_components(csr_matrix(adj), directed=True, connection="strong")
    comps: dict[int, list[int]] = {}
    for v, lab in enumerate(labels):
        comps.setdefault(int(lab), []).append(v)
    return sorted(comps.values(), key=lambda c: c[0])


@dataclass(frozen=True)
class SimpleCycle:
    """A simple directed cycle ``(i_1, ..., i_l, i_1)``."""

    vertices: tuple[int, ...]

    def __post_init__(self):
        v = tuple(int(a) for a in self.vertices)
        object.__setattr__(self, "vertices", v)
        if len(v) < 2 or v[0] != v[-1]:
            raise ValidationError(f"cycle {v} is not closed")
        if len(set(v[:-1])) != len(v) - 1:
            raise ValidationError(f"cycle {v} repeats a vertex")

    @classmethod
    def from_open(cls, path: Sequence[int]) -> "SimpleCycle":
        """Build from ``(i_1, ..., i_l)`` and rotate to the canonical start."""
        path = [int(a) for a in path]
        k = path.index(min(path))
        rot = path[k:] + path[:k]
        return cls(tuple(rot + [rot[0]]))

    @property
    def length(self) -> int:
        return len(self.vertices) - 1

    def __len__(self) -> int:
        return self.length

    @property
    def edges(self) -> list[tuple[int, int]]:
        v = self.vertices
        return [(v[m], v[m + 1]) for m in range(self.length)]

    def mean(self, rho: np.ndarray) -> float:
        return float(np.mean([rho[i, j] for i, j in self.edges]))

    def __str__(self) -> str:
        return "-".join(str(a) for a in self.vertices)


@dataclass(frozen=True)
class TypePairMeasure:
    """Probability measure on T x T (weights as a dense matrix)."""

    weights: np.ndarray

    @property
    def n_types(self) -> int:
        return self.weights.shape[0]

    def marginal_gap(self) -> float:
        """Largest difference between the two marginals."""
        w = self.weights
        return float(np.max(np.abs(w.sum(axis=1) - w.sum(axis=0))))

    def validate(self, g: "TypeGraph | None" = None, tol: float = DEFAULT_TOL) -> None:
        w = self.weights
        if np.any(w < -tol) or abs(w.sum() - 1.0) > tol:
            raise ValidationError("weights are not a probability measure")
        if self.marginal_gap() > tol:
            raise NotShiftInvariant(f"marginals differ by {self.marginal_gap():.3g}")
        if g is not None and np.any((w > tol) & ~g.adjacency):
            raise ValidationError("measure charges a pair outside A")


@dataclass(frozen=True)
class TypeGraph:
    n_types: int
    edges: tuple[tuple[int, int], ...]
    rho: np.ndarray  # (T, T), zero off A

    @cached_property
    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n_types, self.n_types), dtype=bool)
        for i, j in self.edges:
            a[i, j] = True
        return a

    @cached_property
    def outdeg(self) -> np.ndarray:
        return self.adjacency.sum(axis=1).astype(int)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def strongly_connected(self) -> bool:
        return is_irreducible(self.adjacency)

    def successors(self, i: int) -> list[int]:
        return [int(j) for j in np.flatnonzero(self.adjacency[i])]

    def edge_list(self) -> list[tuple[int, int, float]]:
        return [(i, j, float(self.rho[i, j])) for i, j in self.edges]

    def with_rho(self, rho: np.ndarray) -> "TypeGraph":
        return build_graph([(i, j, rho[i, j]) for i, j in self.edges], self.n_types)

    def check_cycle(self, cycle: SimpleCycle) -> None:
        for i, j in cycle.edges:
            if not (0 <= i < self.n_types and 0 <= j < self.n_types) or not self.adjacency[i, j]:
                raise ValidationError(f"cycle {cycle} uses non-edge ({i},{j})")


def build_graph(edge_list: Iterable[tuple[int, int, float]], n_types: int | None = None) -> TypeGraph:
    """Validate ``(i, j, rho_ij)`` triples and build the type graph.

    ``n_types`` defaults to one more than the largest index mentioned.
    """
    triples = [(int(i), int(j), float(r)) for i, j, r in edge_list]
    if not triples:
        raise DanglingType("graph has no edges")
    if n_types is None:
        n_types = 1 + max(max(i, j) for i, j, _ in triples)
    rho = np.zeros((n_types, n_types))
    seen: set[tuple[int, int]] = set()
    for i, j, r in triples:
        if not (0 <= i < n_types and 0 <= j < n_types):
            raise ValidationError(f"edge ({i},{j}) has an index outside 0..{n_types - 1}")
        if (i, j) in seen:
            raise DuplicateEdge(f"edge ({i},{j}) listed twice")
        if not (r > 0 and np.isfinite(r)):
            raise NonpositiveRho(f"rho[{i},{j}] = {r} is not positive")
        seen.add((i, j))
        rho[i, j] = r
    g = TypeGraph(n_types, tuple(sorted(seen)), rho)
    dangling = [i for i in range(n_types) if g.outdeg[i] == 0]
    if dangling:
        raise DanglingType(f"type {dangling[0]} has no outgoing edge")
    sym = g.adjacency | g.adjacency.T
    n_comp, _ = connected_components(csr_matrix(sym), directed=False)
    if n_comp > 1:
        raise Disconnected(f"type graph has {n_comp} weakly connected components")
    return g


def enumerate_simple_cycles(g: TypeGraph) -> list[SimpleCycle]:
    """All simple cycles of ``g`` (Johnson's algorithm), sorted lexicographically."""
    return simple_cycles_of(g.adjacency)


def simple_cycles_of(adj: np.ndarray, limit: int | None = None) -> list[SimpleCycle]:
    """Johnson's algorithm on a boolean adjacency matrix.

    Raises EnumerationTooLarge once more than ``limit`` cycles are found.
    """
    adj = np.asarray(adj, dtype=bool)
    n = adj.shape[0]
    out: list[SimpleCycle] = []

    for s in range(n):
        # restrict to vertices >= s, then to the SCC containing s
        sub = adj.copy()
        sub[:s, :] = False
        sub[:, :s] = False
        comp = next(c for c in strongly_connected_components(sub) if s in c)
        if len(comp) == 1 and not adj[s, s]:
            continue
        allowed = set(comp)
        succ = {v: [int(w) for w in np.flatnonzero(sub[v]) if int(w) in allowed] for v in comp}
        blocked = {v: False for v in comp}
        bmap: dict[int, set[int]] = {v: set() for v in comp}
        stack: list[int] = []

        def unblock(u: int) -> None:
            todo = [u]
            while todo:
                w = todo.pop()
                if blocked[w]:
                    blocked[w] = False
                    todo.extend(bmap[w])
                    bmap[w].clear()

        def circuit(v: int) -> bool:
            found = False
            stack.append(v)
            blocked[v] = True
            for w in succ[v]:
                if w == s:
                    out.append(SimpleCycle(tuple(stack) + (s,)))
                    if limit is not None and len(out) > limit:
                        raise EnumerationTooLarge(f"more than {limit} simple cycles")
                    found = True
                elif not blocked[w]:
                    if circuit(w):
                        found = True
            if found:
                unblock(v)
            else:
                for w in succ[v]:
                    bmap[w].add(v)
            stack.pop()
            return found

        circuit(s)

    out.sort(key=lambda c: c.vertices)
    return out


def cycle_measure(cycle: SimpleCycle, n_types: int | None = None) -> TypePairMeasure:
    """Uniform measure ``1/|cycle|`` on the edges of ``cycle``."""
    if n_types is None:
        n_types = max(cycle.vertices) + 1
    w = np.zeros((n_types, n_types))
    for i, j in cycle.edges:
        w[i, j] = 1.0 / cycle.length
    return TypePairMeasure(w)


def girth(g: TypeGraph) -> int:
    if np.any(np.diag(g.adjacency)):
        return 1
    return min(c.length for c in enumerate_simple_cycles(g))


def cycle_decomposition(mu: TypePairMeasure, tol: float = DEFAULT_TOL) -> list[tuple[float, SimpleCycle]]:
    """Write a shift-invariant measure as a convex combination of cycle measures.

    Cycles are peeled greedily in lexicographic order: each cycle still fully
    inside the remaining support is removed with the largest multiple that
    keeps the remainder nonnegative.  The decomposition is not unique.
    """
    w = np.array(mu.weights, dtype=float)
    if np.any(w < -tol):
        raise ValidationError("measure has negative weights")
    if mu.marginal_gap() > tol:
        raise NotShiftInvariant(f"marginals differ by {mu.marginal_gap():.3g}")
    support = w > tol
    n = w.shape[0]
    cycles = simple_cycles_of(support)
    rem = w.copy()
    result: list[tuple[float, SimpleCycle]] = []
    for c in cycles:
        vals = [rem[i, j] for i, j in c.edges]
        t = min(vals)
        if t <= tol:
            continue
        for i, j in c.edges:
            rem[i, j] -= t
        result.append((t * c.length, c))
    leftover = float(np.abs(rem).sum())
    if leftover > 10 * tol * max(n * n, 1):
        raise NotShiftInvariant(f"decomposition left mass {leftover:.3g}")
    return result
