"""Command-line entry point: ``brwre <command> CONFIG [options]``.

Exit codes: 0 on success, 2 on invalid input (bad config, failed validation,
unknown command), 3 when a size or budget guard trips.  Outputs go to the
directory given by ``--out``, else ``$BRWRE_OUTPUT_DIR``, else the working
directory.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .annealed import annealed_moment_exact, annealed_moment_mc, asymptotic_fit
from .config import METHODS, ExperimentConfig, load_config
from .environment import Environment, environment_from_csv, sample_environment
from .errors import BudgetExceeded, BrwreError, ConfigError, PreconditionViolated
from .expectation import (PopulationState, log_population_vector, mean_matrix,
                          simulate_replicas)
from .spectral import frobenius_mu, frobenius_mu_variational
from .typegraph import girth
from .variational import chi_no_migration, chi_solve, lambda_lp_oracle, lambda_max_mean_cycle

OUTPUT_ENV = "BRWRE_OUTPUT_DIR"
DEFAULT_GRID = list(range(4, 41, 4))


def fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


class Output:
    """Writes the files of one command invocation."""

    def __init__(self, args, command: str):
        self.dir = args.out or os.environ.get(OUTPUT_ENV) or "."
        self.command = command
        self.stamp = not args.no_timestamp
        os.makedirs(self.dir, exist_ok=True)

    def path(self, name: str) -> str:
        return os.path.join(self.dir, name)

    def header(self, seed: int | None = None, **extra) -> list[str]:
        lines = [f"# brwre {__version__} {self.command}"]
        if seed is not None:
            lines.append(f"# seed = {seed}")
        lines += [f"# {k} = {v}" for k, v in extra.items()]
        if self.stamp:
            lines.append(f"# created = {_dt.datetime.now(_dt.timezone.utc).isoformat()}")
        return lines

    def csv(self, name: str, columns: list[str], rows, seed: int | None = None, **extra) -> str:
        path = self.path(name)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            for line in self.header(seed, **extra):
                fh.write(line + "\n")
            fh.write(",".join(columns) + "\n")
            for row in rows:
                fh.write(",".join(fmt(v) for v in row) + "\n")
        return path

    def jsonl(self, name: str, records: list[dict]) -> str:
        path = self.path(name)
        with open(path, "w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(rec) + "\n")
        return path


def _cycles(cycles) -> list[list[int]]:
    return [list(c.vertices) for c in cycles]


def _environment(args, cfg: ExperimentConfig, g, ch, out: Output) -> tuple[Environment, int | None]:
    """Environment from ``--env`` or sampled from the config seed."""
    if args.env:
        try:
            with open(args.env, encoding="utf-8") as fh:
                env = environment_from_csv(fh.read(), g, ch.n_sites)
        except OSError as exc:
            raise ConfigError(f"cannot read environment {args.env}: {exc.strerror}") from None
        seed = None
    else:
        env, seed = sample_environment(g, ch.n_sites, cfg.seed), cfg.seed
    if args.env_out:
        with open(args.env_out, "w", encoding="utf-8") as fh:
            fh.write("\n".join(out.header(seed)) + "\n" + env.to_csv())
    return env, seed


# --------------------------------------------------------------- commands ---

def cmd_validate(args, cfg: ExperimentConfig, out: Output) -> None:
    g, ch = cfg.validate()
    lam = lambda_max_mean_cycle(g)
    print(f"types={g.n_types}")
    print(f"sites={ch.n_sites}")
    print(f"edges={g.n_edges}")
    print(f"strongly_connected={str(g.strongly_connected).lower()}")
    print(f"girth={girth(g)}")
    print(f"lambda={fmt(lam.lam)}")


def cmd_lambda(args, cfg: ExperimentConfig, out: Output) -> None:
    g, _ = cfg.validate()
    res = lambda_max_mean_cycle(g)
    rec = {"lambda": res.lam, "cycles": _cycles(res.cycles), "num_optimal": len(res.cycles),
           "num_cycles": res.num_cycles, "lp_lambda": lambda_lp_oracle(g), "girth": girth(g),
           "chi": None, "restarts": None, "objective_trace_path": None}
    out.jsonl("lambda.jsonl", [rec])
    print(json.dumps(rec))


def cmd_chi(args, cfg: ExperimentConfig, out: Output) -> None:
    g, ch = cfg.validate()
    restarts = args.restarts if args.restarts is not None else cfg.restarts
    res = chi_solve(g, ch, restarts=restarts, seed=cfg.seed)
    T, X = g.n_types, ch.n_sites
    w = res.minimizer.weights
    nu_rows = [(i, x, j, y, w[i, x, j, y]) for i in range(T) for x in range(X)
               for j in range(T) for y in range(X) if w[i, x, j, y] > 0]
    out.csv("chi_nu.csv", ["i", "x", "j", "y", "nu"], nu_rows, seed=cfg.seed)
    trace_rows = [(k, it, v) for k, r in enumerate(res.restarts) for it, v in enumerate(r.trace)]
    trace = out.csv("chi_trace.csv", ["restart", "iteration", "objective"], trace_rows,
                    seed=cfg.seed)
    rec = {"lambda": res.lam, "cycles": _cycles(res.optimal_cycles), "chi": res.chi,
           "restarts": [{"index": k, "states": r.states, "value": r.value}
                        for k, r in enumerate(res.restarts)],
           "near_optimal": res.near_optimal(),
           "vertex_value": res.vertex_value, "num_vertices": res.num_vertices,
           "seed": cfg.seed, "objective_trace_path": os.path.basename(trace),
           "minimizer_path": "chi_nu.csv"}
    if X == 1:
        try:
            rec["chi_closed_form"] = chi_no_migration(g)
        except PreconditionViolated:
            pass
    out.jsonl("chi.jsonl", [rec])
    if args.figure:
        from .plotting import plot_restarts
        plot_restarts(res.restart_values, [r.trace for r in res.restarts], out.path("chi.png"))
    print(json.dumps(rec))


def cmd_expect(args, cfg: ExperimentConfig, out: Output) -> None:
    g, ch = cfg.validate()
    n = args.n if args.n is not None else cfg.n
    env, seed = _environment(args, cfg, g, ch, out)
    B = mean_matrix(env, ch, g)
    i, x = cfg.start_type, cfg.start_site
    rows = [(k, i, x, math.exp(log_population_vector(B, k)[i, x])) for k in range(n + 1)]
    path = out.csv("expect.csv", ["n", "i", "x", "u_n"], rows, seed=seed)
    print(f"wrote {path}")


def cmd_simulate(args, cfg: ExperimentConfig, out: Output) -> None:
    g, ch = cfg.validate()
    n = args.n if args.n is not None else cfg.n
    runs = args.num_runs if args.num_runs is not None else cfg.num_runs
    env, env_seed = _environment(args, cfg, g, ch, out)
    init = PopulationState.single(g.n_types, ch.n_sites, cfg.start_type, cfg.start_site)
    res = simulate_replicas(env, ch, g, init, n, runs, cfg.seed, cap=cfg.cap,
                            threads=args.threads)
    totals = res.totals
    totals = np.where(res.counts[:, :, 0, 0] < 0, -1, totals)
    rows = [(r, k, totals[r, k]) for r in range(runs) for k in range(n + 1)]
    extra = {"cap": cfg.cap}
    if env_seed is not None:
        extra["environment_seed"] = env_seed
    path = out.csv("simulate.csv", ["run", "n", "total"], rows, seed=cfg.seed, **extra)
    if args.cells:
        T, X = g.n_types, ch.n_sites
        cells = ((r, k, j, y, res.counts[r, k, j, y]) for r in range(runs)
                 for k in range(n + 1) for j in range(T) for y in range(X))
        out.csv("simulate_cells.csv", ["run", "n", "j", "y", "count"], cells,
                seed=cfg.seed, **extra)
    if args.figure:
        from .plotting import plot_simulation
        B = mean_matrix(env, ch, g)
        exact = np.array([math.exp(log_population_vector(B, k)[cfg.start_type, cfg.start_site])
                          for k in range(n + 1)])
        plot_simulation(totals, exact, out.path("simulate.png"))
    print(f"wrote {path}; {int(np.sum(res.capped_at >= 0))} of {runs} runs hit the cap")


def cmd_anneal(args, cfg: ExperimentConfig, out: Output) -> None:
    g, ch = cfg.validate()
    method = args.method or cfg.method
    if method not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}")
    explicit = args.n_grid or cfg.n_grid
    if args.n_grid:
        cfg.n_grid = args.n_grid
        cfg.validate()
    grid = explicit or DEFAULT_GRID
    num_envs = args.num_envs if args.num_envs is not None else cfg.num_envs
    i, x = cfg.start_type, cfg.start_site
    rows = []
    for n in grid:
        if method == "exact":
            try:
                lm = annealed_moment_exact(g, ch, i, x, n, budget=cfg.dp_budget)
            except BudgetExceeded:
                # the default grid is cut to its feasible prefix
                if explicit or not rows:
                    raise
                break
            rows.append((n, lm, 0.0))
        else:
            est = annealed_moment_mc(g, ch, i, x, n, num_envs, cfg.seed, threads=args.threads)
            rows.append((n, est.log_moment, est.stderr))
    seed = cfg.seed if method == "mc" else None
    extra = {"method": method} | ({"num_envs": num_envs} if method == "mc" else {})
    path = out.csv("anneal.csv", ["n", "log_moment", "stderr"], rows, seed=seed, **extra)
    if args.figure:
        from .plotting import plot_anneal
        plot_anneal([r[0] for r in rows], [r[1] for r in rows], out.path("anneal.png"))
    print(f"wrote {path}")


def read_anneal_csv(path: str) -> tuple[list[int], list[float]]:
    try:
        with open(path, encoding="utf-8") as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    ns, lms = [], []
    for row in csv.DictReader(lines):
        try:
            ns.append(int(row["n"]))
            lms.append(float(row["log_moment"]))
        except (KeyError, TypeError, ValueError):
            raise ConfigError(f"{path}: expected columns n,log_moment") from None
    return ns, lms


def cmd_fit(args, cfg: ExperimentConfig | None, out: Output) -> None:
    if args.lam is not None:
        lam = args.lam
    elif cfg is not None:
        g, _ = cfg.validate()
        lam = lambda_max_mean_cycle(g).lam
    else:
        raise ConfigError("fit needs --lambda or a config")
    src = args.input or out.path("anneal.csv")
    ns, lms = read_anneal_csv(src)
    fit = asymptotic_fit(ns, lms, lam)
    limit = fit.extrapolate()
    path = out.csv("fit.csv", ["n", "r_n"], zip(fit.ns, fit.r), **{
        "lambda": fmt(lam), "slope": fmt(fit.slope), "extrapolated_limit": fmt(limit)})
    if args.figure:
        from .plotting import plot_fit
        plot_fit(fit.ns, fit.r, limit, out.path("fit.png"))
    print(f"wrote {path}; r_last={fmt(fit.r_last)} extrapolated={fmt(limit)}")


def cmd_frobenius(args, cfg: ExperimentConfig, out: Output) -> None:
    if cfg.matrix is None:
        raise ConfigError("config has no [matrix] section")
    A = np.array(cfg.matrix, dtype=float)
    mu = frobenius_mu(A)
    dual = frobenius_mu_variational(A, restarts=cfg.restarts, seed=cfg.seed)
    rec = {"mu": mu, "mu_dual": dual, "gap": abs(mu - dual), "seed": cfg.seed}
    out.jsonl("frobenius.jsonl", [rec])
    print(json.dumps(rec))


COMMANDS = {
    "validate": cmd_validate, "lambda": cmd_lambda, "chi": cmd_chi, "expect": cmd_expect,
    "simulate": cmd_simulate, "anneal": cmd_anneal, "fit": cmd_fit, "frobenius": cmd_frobenius,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or .)")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--no-timestamp", action="store_true",
                        help="omit the creation time header line")

    p = argparse.ArgumentParser(prog="brwre", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"brwre {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    def add(name, help_, config_required=True):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.add_argument("config", nargs=None if config_required else "?")
        return sp

    add("validate", "check a config and print basic graph facts")
    add("lambda", "leading exponent and its optimal cycles")
    sp = add("chi", "second-order constant by multi-start search")
    sp.add_argument("--restarts", type=int)
    sp.add_argument("--figure", action="store_true")
    for name, help_ in (("expect", "exact expected population sizes"),
                        ("simulate", "replicated particle simulations")):
        sp = add(name, help_)
        sp.add_argument("--n", type=int)
        sp.add_argument("--env", help="environment CSV (i,j,y,m) to use instead of sampling")
        sp.add_argument("--env-out", help="write the environment used as CSV")
        if name == "simulate":
            sp.add_argument("--num-runs", type=int)
            sp.add_argument("--cells", action="store_true", help="also write per-cell counts")
            sp.add_argument("--figure", action="store_true")
    sp = add("anneal", "annealed moments over an n-grid")
    sp.add_argument("--method", choices=METHODS)
    sp.add_argument("--n-grid", type=lambda s: [int(t) for t in s.replace(",", " ").split()])
    sp.add_argument("--num-envs", type=int)
    sp.add_argument("--figure", action="store_true")
    sp = add("fit", "second-order term r_n from an anneal CSV", config_required=False)
    sp.add_argument("--input", help="anneal CSV (default: anneal.csv in the output directory)")
    sp.add_argument("--lambda", dest="lam", type=float)
    sp.add_argument("--figure", action="store_true")
    add("frobenius", "log Frobenius eigenvalue of the [matrix] section, two ways")
    return p


def _one_line(exc: BaseException) -> str:
    return f"brwre: {type(exc).__name__}: {' '.join(str(exc).split())}"


def run(command: str, config: str | None = None, *options: str) -> int:
    """Programmatic form of ``brwre command config options...``; returns the exit code."""
    return main([command] + ([config] if config else []) + list(options))


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        cfg = load_config(args.config) if args.config else None
        out = Output(args, args.command)
        COMMANDS[args.command](args, cfg, out)
    except BudgetExceeded as exc:
        print(_one_line(exc), file=sys.stderr)
        return 3
    except BrwreError as exc:
        print(_one_line(exc), file=sys.stderr)
        return 2
    return 0
