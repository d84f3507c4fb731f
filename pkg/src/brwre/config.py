"""Plain-text experiment configuration.

A config has an ``[edges]`` section (one ``i j rho`` line per type edge), an
optional ``[spatial]`` section (rows of the migration matrix; a single site
when absent), an optional ``[matrix]`` section (rows of a nonnegative matrix
for the Frobenius command) and a ``[run]`` section of ``key = value`` lines.
Lines starting with ``#`` are comments.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

from .chain import SpatialChain
from .errors import ConfigError, ValidationError
from .typegraph import TypeGraph, build_graph

SECTIONS = ("edges", "spatial", "matrix", "run")
METHODS = ("exact", "mc")


def _num(v: float) -> str:
    return format(v, ".17g")


@dataclass
class ExperimentConfig:
    edges: list[tuple[int, int, float]]
    spatial: list[list[float]] = field(default_factory=lambda: [[1.0]])
    matrix: list[list[float]] | None = None
    start_type: int = 0
    start_site: int = 0
    n: int = 10
    n_grid: list[int] | None = None
    seed: int = 0
    method: str = "exact"
    num_envs: int = 10_000
    restarts: int = 20
    num_runs: int = 1000
    cap: int = 10**7
    dp_budget: int = 5 * 10**7

    def graph(self) -> TypeGraph:
        return build_graph(self.edges)

    def chain(self) -> SpatialChain:
        return SpatialChain(self.spatial)

    def validate(self) -> tuple[TypeGraph, SpatialChain]:
        """Run every module-level check; returns the built graph and chain."""
        g, ch = self.graph(), self.chain()
        if not 0 <= self.start_type < g.n_types:
            raise ValidationError(f"start_type {self.start_type} not in [0, {g.n_types})")
        if not 0 <= self.start_site < ch.n_sites:
            raise ValidationError(f"start_site {self.start_site} not in [0, {ch.n_sites})")
        if self.n < 0:
            raise ValidationError("n must be nonnegative")
        if self.n_grid is not None and (
                not self.n_grid or self.n_grid[0] < 1
                or any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:]))):
            raise ValidationError("n_grid must be positive and strictly increasing")
        if self.method not in METHODS:
            raise ValidationError(f"method must be one of {METHODS}, got {self.method!r}")
        for name in ("num_envs", "restarts", "num_runs", "cap", "dp_budget"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be positive")
        if self.seed < 0:
            raise ValidationError("seed must be nonnegative")
        return g, ch


_RUN_KEYS = {f.name: f for f in fields(ExperimentConfig)
             if f.name not in ("edges", "spatial", "matrix")}
_INT_KEYS = {"start_type", "start_site", "n", "seed", "num_envs", "restarts",
             "num_runs", "cap", "dp_budget"}


def _parse_int(key: str, text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"[run] {key} needs an integer, got {text!r}") from None


def _parse_row(line: str, lineno: int) -> list[float]:
    try:
        return [float(t) for t in line.split()]
    except ValueError:
        raise ConfigError(f"line {lineno}: expected numbers, got {line!r}") from None


def parse_config(text: str) -> ExperimentConfig:
    section = None
    edges: list[tuple[int, int, float]] = []
    spatial: list[list[float]] = []
    matrix: list[list[float]] = []
    run: dict[str, object] = {}
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in SECTIONS:
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            if section in seen:
                raise ConfigError(f"line {lineno}: section [{section}] repeated")
            seen.add(section)
            continue
        if section is None:
            raise ConfigError(f"line {lineno}: content before the first section")
        if section == "edges":
            parts = line.split()
            if len(parts) != 3:
                raise ConfigError(f"line {lineno}: edge lines are 'i j rho', got {line!r}")
            try:
                edges.append((int(parts[0]), int(parts[1]), float(parts[2])))
            except ValueError:
                raise ConfigError(f"line {lineno}: bad edge {line!r}") from None
        elif section == "spatial":
            spatial.append(_parse_row(line, lineno))
        elif section == "matrix":
            matrix.append(_parse_row(line, lineno))
        else:
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep or key not in _RUN_KEYS:
                raise ConfigError(f"line {lineno}: unknown run setting {line!r}")
            if key in _INT_KEYS:
                run[key] = _parse_int(key, value)
            elif key == "n_grid":
                run[key] = [_parse_int(key, t) for t in value.replace(",", " ").split()]
            else:
                run[key] = value
    if not edges:
        raise ConfigError("config has no [edges]")
    for rows, name in ((spatial, "spatial"), (matrix, "matrix")):
        if rows and any(len(r) != len(rows) for r in rows):
            raise ConfigError(f"[{name}] must be a square matrix")
    return ExperimentConfig(edges=edges, spatial=spatial or [[1.0]],
                            matrix=matrix or None, **run)


def dump_config(cfg: ExperimentConfig) -> str:
    """Inverse of :func:`parse_config`; floats are written with 17 digits."""
    out = ["[edges]"]
    out += [f"{i} {j} {_num(r)}" for i, j, r in cfg.edges]
    out.append("[spatial]")
    out += [" ".join(_num(v) for v in row) for row in cfg.spatial]
    if cfg.matrix is not None:
        out.append("[matrix]")
        out += [" ".join(_num(v) for v in row) for row in cfg.matrix]
    out.append("[run]")
    for name in _RUN_KEYS:
        v = getattr(cfg, name)
        if v is None:
            continue
        if name == "n_grid":
            v = " ".join(str(k) for k in v)
        out.append(f"{name} = {v}")
    return "\n".join(out) + "\n"


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)
