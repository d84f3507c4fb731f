"""Search over shift-invariant pair measures on a strongly connected support.

A measure with equal marginals and support inside an irreducible pattern is
written as ``nu(a, b) = pi(a) Q(a, b)`` where ``Q`` is a Markov kernel on the
pattern and ``pi`` its stationary law.  ``Q`` is parametrised by row-wise
softmax logits (the first allowed entry of each row is pinned at zero), so
every parameter vector maps to a feasible measure and the search is
unconstrained.  Gradients are finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize


def stationary_irreducible(Q: np.ndarray) -> np.ndarray:
    m = Q.shape[0]
    M = np.eye(m) - Q.T
    M[-1, :] = 1.0
    rhs = np.zeros(m)
    rhs[-1] = 1.0
    pi = np.linalg.solve(M, rhs)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


class KernelParam:
    """Logit parametrisation of kernels on ``states`` restricted to ``mask``.

    ``mask`` is the full ``N x N`` pattern; only rows and columns listed in
    ``states`` are used, and the pattern on them must be strongly connected.
    """

    def __init__(self, mask: np.ndarray, states):
        self.N = mask.shape[0]
        self.states = np.asarray(states, dtype=int)
        sub = mask[np.ix_(self.states, self.states)]
        self.sub = sub
        rows, cols = [], []
        for a in range(len(self.states)):
            allowed = np.flatnonzero(sub[a])
            rows.extend([a] * (len(allowed) - 1))
            cols.extend(allowed[1:].tolist())
        self.free_rows = np.asarray(rows, dtype=int)
        self.free_cols = np.asarray(cols, dtype=int)

    @property
    def dim(self) -> int:
        return len(self.free_rows)

    def kernel(self, theta: np.ndarray) -> np.ndarray:
        L = np.where(self.sub, 0.0, -np.inf)
        L[self.free_rows, self.free_cols] = theta
        L = L - L.max(axis=1, keepdims=True)
        Q = np.exp(L)
        return Q / Q.sum(axis=1, keepdims=True)

    def measure(self, theta: np.ndarray) -> np.ndarray:
        Q = self.kernel(theta)
        pi = stationary_irreducible(Q)
        nu = np.zeros((self.N, self.N))
        nu[np.ix_(self.states, self.states)] = pi[:, None] * Q
        return nu


@dataclass
class Restart:
    states: list[int]
    value: float
    nu: np.ndarray
    trace: list[float] = field(default_factory=list)


def kernel_search(objective: Callable[[np.ndarray], float], mask: np.ndarray, components,
                  restarts: int, rng: np.random.Generator, maximize: bool = False,
                  scale: float = 2.0, maxiter: int = 2000) -> list[Restart]:
    """Multi-start local search of ``objective(nu)`` over each component.

    Restart ``r`` runs on ``components[r % len(components)]``; the first start
    in each component is the uniform kernel, later ones draw logits from
    ``N(0, scale^2)``.  Returns one record per restart, in restart order.
    """
    sign = -1.0 if maximize else 1.0
    params = [KernelParam(mask, c) for c in components]
    n_runs = max(restarts, len(components))
    out: list[Restart] = []
    for r in range(n_runs):
        k = r % len(params)
        par = params[k]
        theta0 = np.zeros(par.dim) if r < len(params) else rng.normal(0.0, scale, par.dim)
        trace: list[float] = []

        def f(theta, par=par):
            return sign * objective(par.measure(theta))

        if par.dim == 0:
            best = theta0
        else:
            res = minimize(f, theta0, method="L-BFGS-B",
                           callback=lambda th: trace.append(sign * f(th)),
                           options={"maxiter": maxiter, "ftol": 1e-15, "gtol": 1e-11,
                                    "maxcor": 20})
            best = res.x
        nu = par.measure(best)
        val = objective(nu)
        if not trace:
            trace.append(val)
        out.append(Restart(list(map(int, par.states)), float(val), nu, trace))
    return out
