"""Leading exponent lambda(rho), second-order constant chi(rho) and the
energy/entropy functionals on pair measures.

lambda(rho) is the best mean of rho along a simple cycle of the type graph;
it is computed with Karp's algorithm and cross-checked against a linear
program over shift-invariant measures.  chi(rho) minimises ``I - S`` over
shift-invariant measures on (T x X)^2 whose type marginal is lambda-optimal.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.special import rel_entr, xlogy

from .chain import PairMeasure, SpatialChain
from .errors import EnumerationTooLarge, PreconditionViolated
from .kernels import Restart, kernel_search
from .rng import make_rng
from .typegraph import (
    SimpleCycle,
    TypeGraph,
    enumerate_simple_cycles,
    girth,
    simple_cycles_of,
    strongly_connected_components,
)

GAMMA_TOL = 1e-9
ENUMERATION_LIMIT = 12
PRODUCT_CYCLE_LIMIT = 20_000


# ---------------------------------------------------------------- lambda ---

def karp_min_mean_cycle(adj: np.ndarray, weight: np.ndarray) -> tuple[float, SimpleCycle | None]:
    """Minimum cycle mean over all SCCs, with a cycle attaining it."""
    best, best_cycle = math.inf, None
    for comp in strongly_connected_components(adj):
        k = len(comp)
        if k == 1 and not adj[comp[0], comp[0]]:
            continue
        sub = adj[np.ix_(comp, comp)]
        w = np.where(sub, weight[np.ix_(comp, comp)], np.inf)
        D = np.full((k + 1, k), np.inf)
        parent = np.full((k + 1, k), -1, dtype=int)
        D[0, 0] = 0.0
        for m in range(1, k + 1):
            cand = D[m - 1][:, None] + w
            parent[m] = np.argmin(cand, axis=0)
            D[m] = cand[parent[m], np.arange(k)]
        value, v_star = math.inf, -1
        for v in range(k):
            if not np.isfinite(D[k, v]):
                continue
            worst = max((D[k, v] - D[m, v]) / (k - m) for m in range(k) if np.isfinite(D[m, v]))
            if worst < value:
                value, v_star = worst, v
        if value < best:
            # walk back k steps from v_star; the walk closes at least one cycle
            walk = [v_star]
            for m in range(k, 0, -1):
                walk.append(parent[m, walk[-1]])
            walk.reverse()
            cyc, cyc_mean = None, math.inf
            stack: list[int] = []
            for v in walk:
                if v in stack:
                    pos = stack.index(v)
                    loop = stack[pos:]
                    mean = np.mean([w[loop[t], loop[(t + 1) % len(loop)]] for t in range(len(loop))])
                    if mean < cyc_mean:
                        cyc, cyc_mean = loop, mean
                    del stack[pos + 1:]
                else:
                    stack.append(v)
            best = value
            best_cycle = SimpleCycle.from_open([comp[v] for v in cyc]) if cyc else None
    return best, best_cycle


@dataclass(frozen=True)
class LambdaResult:
    lam: float
    cycles: list[SimpleCycle]      # Gamma(rho); only a witness when not enumerated
    witness: SimpleCycle | None
    enumerated: bool
    num_cycles: int | None         # |Gamma| when enumerated


def lambda_max_mean_cycle(g: TypeGraph, tol: float = GAMMA_TOL,
                          enumeration_limit: int = ENUMERATION_LIMIT) -> LambdaResult:
    """``lambda(rho)`` as the largest mean of rho along a simple cycle.

    Karp's minimum-mean-cycle algorithm runs on ``-rho``.  The set of optimal
    cycles is enumerated for graphs with at most ``enumeration_limit`` types.
    """
    neg, witness = karp_min_mean_cycle(g.adjacency, -g.rho)
    lam = float(-neg)
    if g.n_types <= enumeration_limit:
        allc = enumerate_simple_cycles(g)
        opt = [c for c in allc if abs(c.mean(g.rho) - lam) <= tol * abs(lam)]
        return LambdaResult(lam, opt, witness, True, len(allc))
    return LambdaResult(lam, [witness] if witness else [], witness, False, None)


def _flow_constraints(g: TypeGraph) -> tuple[np.ndarray, np.ndarray]:
    """Equality system ``M mu = b`` for shift-invariant probability measures on A."""
    T = g.n_types
    M = np.zeros((T + 1, g.n_edges))
    for e, (i, j) in enumerate(g.edges):
        M[i, e] += 1.0
        M[j, e] -= 1.0
        M[T, e] = 1.0
    b = np.zeros(T + 1)
    b[T] = 1.0
    return M, b


def lambda_lp_solution(g: TypeGraph) -> tuple[float, np.ndarray]:
    """Solve ``max <mu, rho>`` over shift-invariant probability measures on A."""
    M, b = _flow_constraints(g)
    c = -np.array([g.rho[i, j] for i, j in g.edges])
    res = linprog(c, A_eq=M, b_eq=b, bounds=(0, None), method="highs-ds")
    if res.status != 0:
        raise RuntimeError(f"LP failed: {res.message}")
    mu = np.zeros((g.n_types, g.n_types))
    for e, (i, j) in enumerate(g.edges):
        mu[i, j] = max(res.x[e], 0.0)
    return float(-res.fun), mu


def lambda_lp_oracle(g: TypeGraph) -> float:
    return lambda_lp_solution(g)[0]


def lp_polytope_vertices(g: TypeGraph, tol: float = 1e-9) -> list[np.ndarray]:
    """All vertices of the polytope of shift-invariant probability measures on A.

    A vertex is a basic feasible solution: its support columns are linearly
    independent, so supports have at most ``rank <= n_types`` edges.  Every such
    edge subset is tried.
    """
    M, b = _flow_constraints(g)
    E = g.n_edges
    rank = np.linalg.matrix_rank(M)
    src = [1 << i for i, _ in g.edges]
    dst = [1 << j for _, j in g.edges]
    found: dict[tuple, np.ndarray] = {}
    for size in range(1, min(rank, E) + 1):
        for S in itertools.combinations(range(E), size):
            out_m = in_m = 0
            for e in S:
                out_m |= src[e]
                in_m |= dst[e]
            if out_m != in_m:
                continue
            cols = M[:, S]
            if np.linalg.matrix_rank(cols) < size:
                continue
            x, *_ = np.linalg.lstsq(cols, b, rcond=None)
            if np.max(np.abs(cols @ x - b)) > tol or np.min(x) <= tol:
                continue
            mu = np.zeros((g.n_types, g.n_types))
            for e, val in zip(S, x):
                mu[g.edges[e]] = val
            found[tuple(np.round(mu.ravel(), 9))] = mu
    return [found[k] for k in sorted(found)]


def optimal_edges(g: TypeGraph, cycles: list[SimpleCycle]) -> np.ndarray:
    """Union of the edges of the given cycles, as a boolean matrix."""
    E = np.zeros((g.n_types, g.n_types), dtype=bool)
    for c in cycles:
        for i, j in c.edges:
            E[i, j] = True
    return E


# ----------------------------------------------------------- functionals ---

def energy_S(nu: PairMeasure, g: TypeGraph) -> float:
    rho = g.rho
    b = nu.bar_ijx
    return float(np.sum(rho[:, :, None] * xlogy(b, b)) + np.sum(nu.bar_ij * xlogy(rho, rho)))


def _reference(nu: PairMeasure, chain: SpatialChain, g: TypeGraph) -> np.ndarray:
    return (nu.bar_ix[:, :, None, None] * chain.P[None, :, None, :]
            * g.adjacency[:, None, :, None])


def entropy_I(nu: PairMeasure, chain: SpatialChain, g: TypeGraph) -> float:
    """Relative entropy of nu w.r.t. ``nu(i,x) P_xy 1{(i,j) in A}``; +inf when
    nu is not absolutely continuous."""
    return float(np.sum(rel_entr(nu.weights, _reference(nu, chain, g))))


def deg_D(nu: PairMeasure, g: TypeGraph) -> float:
    return float(np.sum(nu.bar_i * np.log(g.outdeg)))


def rate_I_prime(nu: PairMeasure, chain: SpatialChain, g: TypeGraph, tol: float = 1e-9) -> float:
    """Pair-measure rate function of the product chain; ``I + D`` on
    shift-invariant measures, +inf otherwise."""
    if nu.marginal_gap() > tol:
        return math.inf
    return entropy_I(nu, chain, g) + deg_D(nu, g)


def chi_objective(nu: PairMeasure, chain: SpatialChain, g: TypeGraph) -> float:
    return entropy_I(nu, chain, g) - energy_S(nu, g)


# ------------------------------------------------------------------ chi ---

@dataclass
class VariationalResult:
    lam: float
    optimal_cycles: list[SimpleCycle]
    chi: float
    minimizer: PairMeasure
    restarts: list[Restart] = field(default_factory=list)
    vertex_value: float | None = None    # best over extreme points, if enumerated
    num_vertices: int | None = None

    @property
    def restart_values(self) -> list[float]:
        return [r.value for r in self.restarts]

    def near_optimal(self, tol: float = 1e-6) -> list[int]:
        """Indices of restarts within ``tol`` of the reported optimum."""
        return [k for k, r in enumerate(self.restarts) if r.value - self.chi <= tol]


def chi_solve(g: TypeGraph, chain: SpatialChain, restarts: int = 20, seed: int = 0,
              cycle_limit: int = PRODUCT_CYCLE_LIMIT) -> VariationalResult:
    """``chi(rho) = inf { I(nu) - S(nu) : nu shift-invariant, type marginal optimal }``.

    The type marginal is lambda-optimal exactly when nu only uses type edges
    lying on optimal cycles, so the search runs over shift-invariant measures
    on the product pattern ``(i,x) -> (j,y)`` with ``(i,j)`` such an edge and
    ``P_xy > 0``.  The objective is evaluated at every extreme point of that
    set (uniform measures on simple cycles of the pattern, when there are at
    most ``cycle_limit``) and locally minimised from ``restarts`` starts; the
    best value found is reported.  The problem is not convex, so this is a
    best-effort global minimum.
    """
    if g.n_types > ENUMERATION_LIMIT:
        raise EnumerationTooLarge(
            f"optimal cycle set needs enumeration, {g.n_types} > {ENUMERATION_LIMIT} types")
    lam_res = lambda_max_mean_cycle(g)
    T, X = g.n_types, chain.n_sites
    E = optimal_edges(g, lam_res.cycles)
    mask = (E[:, None, :, None] & (chain.P > 0)[None, :, None, :]).reshape(T * X, T * X)

    rho = g.rho
    rho_log_rho = xlogy(rho, rho)
    ref_kernel = (chain.P[None, :, None, :] * g.adjacency[:, None, :, None])

    def objective(nu_mat: np.ndarray) -> float:
        w = nu_mat.reshape(T, X, T, X)
        b = w.sum(axis=3)                          # [i, x, j]
        bix = b.sum(axis=2)
        energy = (np.sum(rho[:, None, :] * xlogy(b, b))
                  + np.sum(b.sum(axis=1) * rho_log_rho))
        ent = np.sum(rel_entr(w, bix[:, :, None, None] * ref_kernel))
        return float(ent - energy)

    best_val, best_nu = math.inf, None
    vertex_value, n_vertices = None, None
    try:
        pcycles = simple_cycles_of(mask, limit=cycle_limit)
    except EnumerationTooLarge:
        pcycles = None
    if pcycles is not None:
        n_vertices = len(pcycles)
        for c in pcycles:
            nu = np.zeros((T * X, T * X))
            for a, bb in c.edges:
                nu[a, bb] = 1.0 / c.length
            val = objective(nu)
            if val < best_val:
                best_val, best_nu = val, nu
        vertex_value = best_val

    comps = [c for c in strongly_connected_components(mask)
             if len(c) > 1 or mask[c[0], c[0]]]
    runs = kernel_search(objective, mask, comps, restarts, make_rng(seed))
    for r in runs:
        if r.value < best_val:
            best_val, best_nu = r.value, r.nu
    return VariationalResult(lam_res.lam, lam_res.cycles, float(best_val),
                             PairMeasure.from_matrix(best_nu, T, X), runs,
                             vertex_value, n_vertices)


def _check_no_migration(g: TypeGraph) -> np.ndarray:
    rho_i = np.zeros(g.n_types)
    for i in range(g.n_types):
        vals = g.rho[i, g.adjacency[i]]
        if np.ptp(vals) > 1e-12 * vals.max():
            raise PreconditionViolated(f"rho[{i}, j] depends on j")
        if vals[0] < 1:
            raise PreconditionViolated(f"rho_{i} = {vals[0]} < 1")
        rho_i[i] = vals[0]
    return rho_i


def no_migration_cycle_values(g: TypeGraph) -> list[tuple[float, SimpleCycle]]:
    """``lambda log|c| - mean over c of rho_i log rho_i`` for each optimal cycle."""
    rho_i = _check_no_migration(g)
    lam_res = lambda_max_mean_cycle(g)
    out = []
    for c in lam_res.cycles:
        v = lam_res.lam * math.log(c.length) - float(np.mean(
            [xlogy(rho_i[i], rho_i[i]) for i, _ in c.edges]))
        out.append((v, c))
    return out


def chi_no_migration(g: TypeGraph) -> float:
    """Closed-form chi for a single site with ``rho_ij = rho_i >= 1``."""
    rho_i = _check_no_migration(g)
    if np.ptp(rho_i) == 0:
        r = float(rho_i[0])
        return r * math.log(girth(g)) - r * math.log(r)
    return min(v for v, _ in no_migration_cycle_values(g))


def no_migration_minimizers(g: TypeGraph, tol: float = 1e-12) -> list[SimpleCycle]:
    vals = no_migration_cycle_values(g)
    best = min(v for v, _ in vals)
    return [c for v, c in vals if v - best <= tol * max(1.0, abs(best))]
