"""Annealed moments ``<u_n(i, x)>`` averaged over the canonical environment.

The exact route groups product-chain paths by how often each (type edge,
site) triple is used; the environment average of a path's weight only
depends on those counts.  Everything is kept in log space.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp

from .chain import SpatialChain
from .errors import DPBudgetExceeded, LengthMismatch, ValidationError
from .environment import sample_means
from .rng import child_rngs
from .typegraph import TypeGraph

DP_BUDGET = 5 * 10**7
_MC_CHUNK = 10_000


def _logadd(a: float, b: float) -> float:
    if a < b:
        a, b = b, a
    if b == -math.inf:
        return a
    return a + math.log1p(math.exp(b - a))


def count_slots(g: TypeGraph, n_sites: int) -> list[tuple[int, int, int]]:
    """Dense layout of the count vector: one slot per (i, j, x) with (i, j) in A."""
    return [(i, j, x) for i, j in g.edges for x in range(n_sites)]


def annealed_count_distribution(g: TypeGraph, chain: SpatialChain, i: int, x: int, n: int,
                                budget: int = DP_BUDGET) -> dict[tuple[int, ...], float]:
    """Log of the summed path weight for every reachable terminal count vector.

    A path carries weight ``prod P_{x_{l-1} x_l}`` (type steps count 1 each),
    so the result is ``log sum_{paths with counts c} prod P``.
    """
    T, X = g.n_types, chain.n_sites
    if not (0 <= i < T and 0 <= x < X):
        raise ValidationError(f"start ({i},{x}) out of range")
    if n < 0:
        raise ValidationError("n must be nonnegative")
    slots = count_slots(g, X)
    slot_of = {s: k for k, s in enumerate(slots)}
    logP = np.full((X, X), -math.inf)
    np.log(chain.P, out=logP, where=chain.P > 0)
    moves = {}
    for t in range(T):
        for s in range(X):
            moves[t, s] = [(u, y, slot_of[t, u, s], float(logP[s, y]))
                           for u in g.successors(t) for y in range(X) if chain.P[s, y] > 0]

    layer: dict[tuple[int, int, tuple[int, ...]], float] = {(i, x, (0,) * len(slots)): 0.0}
    for _ in range(n):
        nxt: dict[tuple[int, int, tuple[int, ...]], float] = {}
        for (t, s, counts), lw in layer.items():
            for u, y, k, lp in moves[t, s]:
                c = list(counts)
                c[k] += 1
                key = (u, y, tuple(c))
                w = lw + lp
                prev = nxt.get(key)
                nxt[key] = w if prev is None else _logadd(prev, w)
        if len(nxt) > budget:
            raise DPBudgetExceeded(len(nxt), budget)
        layer = nxt

    by_counts: dict[tuple[int, ...], float] = {}
    for (_, _, counts), lw in layer.items():
        prev = by_counts.get(counts)
        by_counts[counts] = lw if prev is None else _logadd(prev, lw)
    return by_counts


def log_environment_moment(g: TypeGraph, n_sites: int, counts) -> float:
    """``log prod <m_ij(x)^c> = sum log Gamma(rho_ij c + 1)`` over the slots."""
    rho = np.array([g.rho[i, j] for i, j, _ in count_slots(g, n_sites)])
    return float(np.sum(gammaln(rho * np.asarray(counts, dtype=float) + 1.0)))


def annealed_moment_exact(g: TypeGraph, chain: SpatialChain, i: int, x: int, n: int,
                          budget: int = DP_BUDGET) -> float:
    """Exact ``log <u_n(i, x)>`` under the canonical environment law."""
    dist = annealed_count_distribution(g, chain, i, x, n, budget)
    rho = np.array([g.rho[a, b] for a, b, _ in count_slots(g, chain.n_sites)])
    keys = np.array(list(dist.keys()), dtype=float).reshape(len(dist), -1)
    lw = np.fromiter(dist.values(), dtype=float, count=len(dist))
    return float(logsumexp(lw + gammaln(rho[None, :] * keys + 1.0).sum(axis=1)))


@dataclass(frozen=True)
class MCEstimate:
    log_moment: float
    stderr: float          # jackknife standard error of the log estimate
    top_share: float       # mass fraction carried by the largest sample
    num_envs: int

    @property
    def heavy_tail(self) -> bool:
        return self.top_share > 0.5


def _log_u_batch(means: np.ndarray, P: np.ndarray, start: int, n: int) -> np.ndarray:
    """``log u_n`` for a batch of environments ``means[k, i, j, x]``."""
    N, T, _, X = means.shape
    B = np.einsum("kijx,xy->kixjy", means, P).reshape(N, T * X, T * X)
    v = np.ones((N, T * X))
    log_scale = np.zeros(N)
    for _ in range(n):
        v = np.einsum("kab,kb->ka", B, v)
        s = v.max(axis=1)
        v /= s[:, None]
        log_scale += np.log(s)
    return log_scale + np.log(v[:, start])


def _mc_chunk(args):
    rho, P, start, n, size, rng = args
    means = sample_means(rho, P.shape[0], rng, size=(size,))
    return _log_u_batch(means, P, start, n)


def annealed_moment_mc(g: TypeGraph, chain: SpatialChain, i: int, x: int, n: int,
                       num_envs: int, seed: int, threads: int = 1) -> MCEstimate:
    """Monte Carlo ``log <u_n(i, x)>``: exact ``u_n`` per sampled environment,
    averaged in linear scale via log-sum-exp."""
    if num_envs < 2:
        raise ValidationError("num_envs must be at least 2")
    X = chain.n_sites
    sizes = [min(_MC_CHUNK, num_envs - k) for k in range(0, num_envs, _MC_CHUNK)]
    rngs = child_rngs(seed, len(sizes))
    jobs = [(g.rho, chain.P, i * X + x, n, s, r) for s, r in zip(sizes, rngs)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(_mc_chunk, jobs))
    else:
        parts = [_mc_chunk(a) for a in jobs]
    logs = np.concatenate(parts)

    N = len(logs)
    top = logs.max()
    s = np.exp(logs - top)
    total = s.sum()
    est = top + math.log(total) - math.log(N)
    # leave-one-out means; recompute directly when a single sample dominates
    rest = total - s
    for k in np.flatnonzero(rest <= total * 1e-12):
        rest[k] = np.exp(np.delete(logs, k) - top).sum()
    with np.errstate(divide="ignore"):
        loo = top + np.log(rest) - math.log(N - 1)
    stderr = math.sqrt((N - 1) / N * np.sum((loo - loo.mean()) ** 2))
    result = MCEstimate(est, stderr, float(s.max() / total), N)
    if result.heavy_tail:
        warnings.warn(f"one environment carries {result.top_share:.0%} of the MC mass",
                      RuntimeWarning, stacklevel=2)
    return result


@dataclass(frozen=True)
class AsymFit:
    ns: list[int]
    logmoments: list[float]
    lambda_used: float
    r: list[float] = field(default_factory=list)

    @property
    def r_last(self) -> float:
        return self.r[-1]

    @property
    def slope(self) -> float:
        """Least-squares slope of ``r_n`` against ``n``."""
        if len(self.ns) < 2:
            return 0.0
        return float(np.polyfit(np.asarray(self.ns, float), np.asarray(self.r), 1)[0])

    def extrapolate(self) -> float:
        """Limit of ``r_n`` from a fit ``a + b log(n)/n + c/n`` (needs 3 points)."""
        ns = np.asarray(self.ns, dtype=float)
        if len(ns) < 3:
            return self.r_last
        basis = np.column_stack([np.ones_like(ns), np.log(ns) / ns, 1.0 / ns])
        coef, *_ = np.linalg.lstsq(basis, np.asarray(self.r), rcond=None)
        return float(coef[0])


def asymptotic_fit(ns, logmoments, lam: float) -> AsymFit:
    """``r_n = (log <u_n> - lambda log n!) / n``; tends to ``-chi``."""
    ns = [int(k) for k in ns]
    logmoments = [float(v) for v in logmoments]
    if len(ns) != len(logmoments):
        raise LengthMismatch(f"{len(ns)} grid points but {len(logmoments)} moments")
    if any(b <= a for a, b in zip(ns, ns[1:])) or (ns and ns[0] < 1):
        raise ValidationError("n-grid must be positive and increasing")
    r = [(lm - lam * math.lgamma(k + 1.0)) / k for k, lm in zip(ns, logmoments)]
    return AsymFit(ns, logmoments, float(lam), r)
