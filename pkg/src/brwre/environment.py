"""Random environment of mean offspring numbers with Weibull upper tails.

The canonical law is ``m = E ** rho`` with ``E`` standard exponential, so
``P(m > r) = exp(-r ** (1/rho))`` holds exactly and the log-moment generating
function is ``log Gamma(rho * t + 1)``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, DomainError, ValidationError
from .rng import make_rng
from .typegraph import TypeGraph


@dataclass(frozen=True)
class Environment:
    """Mean offspring field ``means[i, j, y]`` (zero for ``(i, j)`` outside A)."""

    means: np.ndarray
    rho: np.ndarray

    @property
    def n_types(self) -> int:
        return self.means.shape[0]

    @property
    def n_sites(self) -> int:
        return self.means.shape[2]

    def check(self, g: TypeGraph) -> None:
        if self.means.shape[:2] != (g.n_types, g.n_types):
            raise DimensionMismatch(
                f"environment has {self.means.shape[0]} types, graph has {g.n_types}")
        on = g.adjacency[:, :, None]
        if np.any(self.means[np.broadcast_to(~on, self.means.shape)] != 0):
            raise ValidationError("environment charges a pair outside A")
        if np.any(self.means[np.broadcast_to(on, self.means.shape)] <= 0):
            raise ValidationError("mean offspring numbers on A must be positive")

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("i,j,y,m\n")
        t, _, X = self.means.shape
        for i in range(t):
            for j in range(t):
                if self.rho[i, j] <= 0:
                    continue
                for y in range(X):
                    buf.write(f"{i},{j},{y},{self.means[i, j, y]:.17g}\n")
        return buf.getvalue()


def environment_from_csv(text: str, g: TypeGraph, n_sites: int) -> Environment:
    means = np.zeros((g.n_types, g.n_types, n_sites))
    seen = set()
    rows = csv.DictReader(line for line in io.StringIO(text) if not line.startswith("#"))
    for row in rows:
        try:
            i, j, y, m = int(row["i"]), int(row["j"]), int(row["y"]), float(row["m"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"bad environment row {row}: {exc}") from None
        if not (0 <= i < g.n_types and 0 <= j < g.n_types and 0 <= y < n_sites):
            raise DimensionMismatch(f"environment row ({i},{j},{y}) out of range")
        if not g.adjacency[i, j]:
            raise ValidationError(f"environment row ({i},{j},{y}) is not on an edge")
        means[i, j, y] = m
        seen.add((i, j, y))
    missing = [(i, j, y) for i, j in g.edges for y in range(n_sites) if (i, j, y) not in seen]
    if missing:
        raise ValidationError(f"environment lacks entry {missing[0]}")
    env = Environment(means, g.rho.copy())
    env.check(g)
    return env


def sample_means(rho: np.ndarray, n_sites: int, rng: np.random.Generator,
                 size: tuple = ()) -> np.ndarray:
    """Draw ``E ** rho`` for every edge and site; zero off the support of ``rho``."""
    shape = tuple(size) + rho.shape + (n_sites,)
    e = rng.standard_exponential(shape)
    r = rho[..., None]
    return np.where(r > 0, e ** r, 0.0)


def sample_environment(g: TypeGraph, n_sites: int, seed) -> Environment:
    rng = make_rng(seed)
    return Environment(sample_means(g.rho, n_sites, rng), g.rho.copy())


def weibull_tail(rho: float, r):
    """Exact ``P(m > r)`` under the canonical law."""
    return np.exp(-np.power(r, 1.0 / rho))


def log_mgf(rho: float, t: float) -> float:
    """``H(t) = log <m^t> = log Gamma(rho t + 1)``."""
    if not t > 0:
        raise DomainError(f"log_mgf needs t > 0, got {t}")
    if not rho > 0:
        raise DomainError(f"log_mgf needs rho > 0, got {rho}")
    return math.lgamma(rho * t + 1.0)


def assumption_residual(rho: float, c: float, t: float) -> float:
    """``(H(ct) - c H(t)) / t - rho c log c``; tends to zero as ``t`` grows."""
    if not 0 < c < 1:
        raise DomainError(f"c must lie in (0, 1), got {c}")
    return (log_mgf(rho, c * t) - c * log_mgf(rho, t)) / t - rho * c * math.log(c)


@dataclass(frozen=True)
class OffspringLaw:
    mean: float
    family: str = "poisson"

    def __post_init__(self):
        if not self.mean > 0:
            raise DomainError(f"offspring mean must be positive, got {self.mean}")


def offspring_law(mean: float) -> OffspringLaw:
    return OffspringLaw(float(mean))


def sample_offspring(law: OffspringLaw, seed, size=None):
    return make_rng(seed).poisson(law.mean, size=size)
