"""Expected population sizes in a fixed environment, and the particle simulator.

Two exact routes are provided: powers of the mean-offspring matrix ``B`` on
T x X, and brute-force summation over (type, site) paths.  They are
independent of each other and are cross-checked in the tests.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .chain import SpatialChain, type_kernel
from .environment import Environment
from .errors import DimensionMismatch, TooLarge, ValidationError
from .rng import child_rngs
from .typegraph import TypeGraph

PATH_GUARD = 10**7
DEFAULT_CAP = 10**7
_BIG = 1e280
_SIM_CHUNK = 1000


@dataclass(frozen=True)
class MeanMatrix:
    """``B[(i,x),(j,y)] = m_ij(x) P_xy 1{(i,j) in A}`` on flattened states."""

    matrix: np.ndarray
    n_types: int
    n_sites: int

    def index(self, i: int, x: int) -> int:
        if not (0 <= i < self.n_types and 0 <= x < self.n_sites):
            raise ValidationError(f"state ({i},{x}) out of range")
        return i * self.n_sites + x


def _check_dims(env: Environment, chain: SpatialChain, g: TypeGraph) -> None:
    if env.means.shape != (g.n_types, g.n_types, chain.n_sites):
        raise DimensionMismatch(
            f"environment shape {env.means.shape} does not match "
            f"{g.n_types} types and {chain.n_sites} sites")


def mean_matrix(env: Environment, chain: SpatialChain, g: TypeGraph) -> MeanMatrix:
    _check_dims(env, chain, g)
    m = env.means * g.adjacency[:, :, None]
    B = np.einsum("ijx,xy->ixjy", m, chain.P)
    s = g.n_types * chain.n_sites
    return MeanMatrix(B.reshape(s, s), g.n_types, chain.n_sites)


def _log_power_apply(M: np.ndarray, v: np.ndarray, n: int) -> tuple[np.ndarray, float]:
    """Return ``(w, c)`` with ``M^n v = exp(c) * w``; rescales only near overflow."""
    log_scale = 0.0
    w = np.array(v, dtype=float)
    for _ in range(n):
        w = M @ w
        s = np.max(np.abs(w))
        if s == 0:
            return w, 0.0
        if s > _BIG or s < 1.0 / _BIG:
            w /= s
            log_scale += math.log(s)
    return w, log_scale


def log_population_vector(B: MeanMatrix, n: int) -> np.ndarray:
    """``log u_n(i, x)`` for every start, shape ``(T, X)``."""
    if n < 0:
        raise ValidationError("n must be nonnegative")
    w, c = _log_power_apply(B.matrix, np.ones(B.matrix.shape[0]), n)
    with np.errstate(divide="ignore"):
        return (np.log(w) + c).reshape(B.n_types, B.n_sites)


def log_expected_population(B: MeanMatrix, i: int, x: int, n: int) -> float:
    return float(log_population_vector(B, n)[i, x])


def expected_population(B: MeanMatrix, i: int, x: int, n: int) -> float:
    """``u_n(i, x)``: row sum of ``B^n``, i.e. expected total population."""
    B.index(i, x)
    return math.exp(log_expected_population(B, i, x, n))


def expected_local_population(env: Environment, chain: SpatialChain, g: TypeGraph,
                              i: int, x: int, j: int, y: int, n: int) -> float:
    """Expected number of type-``j`` particles at ``y`` after ``n`` generations,
    started from one type-``i`` particle at ``x``: ``(B^n)[(i,x),(j,y)]``."""
    if n < 0:
        raise ValidationError("n must be nonnegative")
    B = mean_matrix(env, chain, g)
    e = np.zeros(B.matrix.shape[0])
    e[B.index(i, x)] = 1.0
    w, c = _log_power_apply(B.matrix.T, e, n)
    return float(w[B.index(j, y)] * math.exp(c))


def _enumerate_path_products(factors: list[np.ndarray], start: int, n: int) -> list[np.ndarray]:
    """Products of per-step factors along every path of length ``n``.

    Each factor is an ``S x S`` matrix; returns one array per factor with an
    entry per path (paths are kept separate, never merged by endpoint).
    """
    S = factors[0].shape[0]
    last = np.array([start])
    prods = [np.ones(1) for _ in factors]
    for _ in range(n):
        prods = [(p[:, None] * f[last, :]).ravel() for p, f in zip(prods, factors)]
        last = np.tile(np.arange(S), len(last))
    return prods


def _path_count(g: TypeGraph, chain: SpatialChain, n: int) -> int:
    return (g.n_types * chain.n_sites) ** n


def feynman_kac_path_sum(env: Environment, chain: SpatialChain, g: TypeGraph,
                         i: int, x: int, n: int, guard: int = PATH_GUARD) -> float:
    """Sum over all type strings and site paths of ``prod m(x_{l-1}) P``.

    Also evaluates the degree-weighted expectation under the uniform type walk
    and checks the two agree.
    """
    raw = feynman_kac_raw(env, chain, g, i, x, n, guard)
    deg = feynman_kac_degree_form(env, chain, g, i, x, n, guard)
    if not math.isclose(raw, deg, rel_tol=1e-10, abs_tol=0.0):
        raise ArithmeticError(f"path-sum forms disagree: {raw!r} vs {deg!r}")
    return raw


def feynman_kac_raw(env, chain, g, i, x, n, guard=PATH_GUARD) -> float:
    _check_dims(env, chain, g)
    if _path_count(g, chain, n) > guard:
        raise TooLarge(f"{_path_count(g, chain, n)} paths exceed the guard {guard}")
    T, X = g.n_types, chain.n_sites
    # every type string, including those leaving A (they carry m = 0)
    m_step = np.einsum("ijx,xy->ixjy", env.means, np.ones((X, X))).reshape(T * X, T * X)
    p_step = np.kron(np.ones((T, T)), chain.P)
    (m_prod, p_prod) = _enumerate_path_products([m_step, p_step], i * X + x, n)
    return float(np.sum(m_prod * p_prod))


def feynman_kac_degree_form(env, chain, g, i, x, n, guard=PATH_GUARD) -> float:
    """``E_{i,x}[ prod_l m_{T_{l-1} T_l}(X_{l-1}) deg(T_{l-1}) ]`` under the
    uniform type walk and the spatial chain."""
    _check_dims(env, chain, g)
    if _path_count(g, chain, n) > guard:
        raise TooLarge(f"{_path_count(g, chain, n)} paths exceed the guard {guard}")
    T, X = g.n_types, chain.n_sites
    prob = np.kron(type_kernel(g), chain.P)
    gain = np.einsum("ijx,i,xy->ixjy", env.means, g.outdeg.astype(float),
                     np.ones((X, X))).reshape(T * X, T * X)
    (q, v) = _enumerate_path_products([prob, gain], i * X + x, n)
    return float(np.sum(q * v))


@dataclass(frozen=True)
class PopulationState:
    counts: np.ndarray  # (T, X) nonnegative integers
    generation: int = 0

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @classmethod
    def single(cls, n_types: int, n_sites: int, i: int, x: int) -> "PopulationState":
        c = np.zeros((n_types, n_sites), dtype=np.int64)
        c[i, x] = 1
        return cls(c, 0)


@dataclass(frozen=True)
class SimulationResult:
    """Replicated trajectories; generations after a cap overflow hold ``-1``."""

    counts: np.ndarray     # (runs, n + 1, T, X)
    capped_at: np.ndarray  # (runs,), -1 when the cap was never exceeded
    seed: int

    @property
    def totals(self) -> np.ndarray:
        return self.counts.sum(axis=(2, 3))


@dataclass(frozen=True)
class Trajectory:
    states: list[PopulationState]
    cap_exceeded: bool


def _simulate_chunk(means_ixj: np.ndarray, P: np.ndarray, init: np.ndarray, n: int,
                    runs: int, rng: np.random.Generator, cap: int):
    T, X = init.shape
    out = np.full((runs, n + 1, T, X), -1, dtype=np.int64)
    capped = np.full(runs, -1, dtype=np.int64)
    c = np.broadcast_to(init, (runs, T, X)).astype(np.int64)
    out[:, 0] = c
    pvals = P[None, None, :, None, :]
    for gen in range(1, n + 1):
        active = capped < 0
        if not active.any():
            break
        c = np.where(active[:, None, None], c, 0)
        lam = c[:, :, :, None] * means_ixj[None]
        born = rng.poisson(lam)                        # (R, i, x, j)
        moved = rng.multinomial(born, pvals)           # (R, i, x, j, y)
        c = moved.sum(axis=(1, 2))                     # (R, j, y)
        out[active, gen] = c[active]
        over = active & (c.sum(axis=(1, 2)) > cap)
        capped[over] = gen
    return out, capped


def simulate_replicas(env: Environment, chain: SpatialChain, g: TypeGraph,
                      init: PopulationState, n: int, num_runs: int, seed: int,
                      cap: int = DEFAULT_CAP, threads: int = 1) -> SimulationResult:
    """Independent copies of the branching system, aggregated per (type, site) cell.

    Per generation each type-``i`` particle at ``x`` is replaced by
    Poisson(``m_ij(x)``) children of each type ``j`` with ``(i, j)`` in A; the
    children then jump with ``P``.  Per cell the Poisson draws are summed, which
    leaves the law unchanged.  Runs are split into fixed chunks with their own
    seed streams, so output does not depend on ``threads``.
    """
    _check_dims(env, chain, g)
    if init.counts.shape != (g.n_types, chain.n_sites):
        raise DimensionMismatch("initial state has the wrong shape")
    if cap < init.total:
        raise ValidationError("cap is below the initial population")
    if n < 0 or num_runs < 1:
        raise ValidationError("need n >= 0 and num_runs >= 1")
    means_ixj = (env.means * g.adjacency[:, :, None]).transpose(0, 2, 1)
    sizes = [min(_SIM_CHUNK, num_runs - k) for k in range(0, num_runs, _SIM_CHUNK)]
    rngs = child_rngs(seed, len(sizes))
    jobs = [(means_ixj, chain.P, init.counts, n, r, rng, cap) for r, rng in zip(sizes, rngs)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda a: _simulate_chunk(*a), jobs))
    else:
        parts = [_simulate_chunk(*a) for a in jobs]
    counts = np.concatenate([p[0] for p in parts])
    capped = np.concatenate([p[1] for p in parts])
    return SimulationResult(counts, capped, seed)


def simulate_branching(env: Environment, chain: SpatialChain, g: TypeGraph,
                       init: PopulationState, n: int, seed: int,
                       cap: int = DEFAULT_CAP) -> Trajectory:
    """One trajectory; on overflow the partial trajectory ends at the first
    generation above ``cap`` and ``cap_exceeded`` is set."""
    res = simulate_replicas(env, chain, g, init, n, 1, seed, cap)
    last = n if res.capped_at[0] < 0 else int(res.capped_at[0])
    states = [PopulationState(res.counts[0, k].copy(), k) for k in range(last + 1)]
    return Trajectory(states, bool(res.capped_at[0] >= 0))
