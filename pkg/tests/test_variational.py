import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import chi_grid_oracle, chi_objective_loops, random_graph, random_stochastic

from brwre.chain import PairMeasure, SpatialChain, stationary_pair_measure
from brwre.errors import EnumerationTooLarge, PreconditionViolated
from brwre.typegraph import build_graph, enumerate_simple_cycles, girth
from brwre.variational import (chi_no_migration, chi_objective, chi_solve, deg_D, energy_S,
                               entropy_I, lambda_lp_solution, lambda_max_mean_cycle,
                               no_migration_minimizers, optimal_edges, rate_I_prime)

TRIV = SpatialChain.trivial()


def test_lp_solution_is_supported_on_optimal_cycles():
    g = build_graph([(0, 0, 1.0), (0, 1, 2.0), (1, 2, 3.0), (2, 0, 1.0), (1, 1, 1.5)])
    lam, mu = lambda_lp_solution(g)
    res = lambda_max_mean_cycle(g)
    assert lam == pytest.approx(res.lam)
    E = optimal_edges(g, res.cycles)
    assert np.all(mu[~E] <= 1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_stationary_measure_has_zero_rate(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, int(rng.integers(1, 4)), density=0.6)
    if not g.strongly_connected:
        return
    ch = SpatialChain(random_stochastic(rng, int(rng.integers(1, 4))))
    nu = stationary_pair_measure(g, ch)
    assert rate_I_prime(nu, ch, g) == pytest.approx(0.0, abs=1e-12)
    assert entropy_I(nu, ch, g) == pytest.approx(-deg_D(nu, g), abs=1e-12)


def test_rate_is_infinite_off_the_shift_invariant_set():
    g = build_graph([(0, 1, 1.0), (1, 0, 1.0)])
    w = np.zeros((2, 1, 2, 1))
    w[0, 0, 1, 0] = 1.0
    assert rate_I_prime(PairMeasure(w), TRIV, g) == math.inf


def test_entropy_infinite_when_not_absolutely_continuous():
    g = build_graph([(0, 1, 1.0), (1, 0, 1.0)])
    w = np.zeros((2, 1, 2, 1))
    w[0, 0, 0, 0] = 1.0  # (0,0) is not an edge
    assert entropy_I(PairMeasure(w), TRIV, g) == math.inf


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_objective_matches_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, 3, density=0.6)
    ch = SpatialChain(random_stochastic(rng, 2))
    w = rng.random((3, 2, 3, 2)) * g.adjacency[:, None, :, None]
    w /= w.sum()
    nu = PairMeasure(w)
    ours = chi_objective(nu, ch, g)
    ref = chi_objective_loops(w.tolist(), g.rho.tolist(), g.adjacency.tolist(), ch.P.tolist())
    assert ours == pytest.approx(ref, rel=1e-12, abs=1e-12)
    assert energy_S(nu, g) == pytest.approx(entropy_I(nu, ch, g) - ref, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("P", [[[0.5, 0.5], [0.5, 0.5]], [[0.9, 0.1], [0.3, 0.7]],
                               [[0.2, 0.8], [0.6, 0.4]]])
@pytest.mark.parametrize("edges", [[(0, 1, 1.0), (1, 0, 1.0)],
                                   [(0, 1, 1.0), (1, 0, 2.0), (0, 0, 1.2)]])
def test_chi_against_grid_oracle(P, edges):
    g = build_graph(edges)
    res = chi_solve(g, SpatialChain(P), restarts=20, seed=0)
    oracle = chi_grid_oracle(g.adjacency.tolist(), g.rho.tolist(), P, samples=1000)
    assert res.chi == pytest.approx(oracle, abs=1e-3)
    assert res.chi <= oracle + 1e-6


def test_symmetric_two_site_value():
    # both type-steps pin their site: chi = 2 log 2
    g = build_graph([(0, 1, 1.0), (1, 0, 1.0)])
    res = chi_solve(g, SpatialChain([[0.5, 0.5], [0.5, 0.5]]))
    assert res.chi == pytest.approx(2 * math.log(2), abs=1e-9)


def test_chi_result_invariants():
    g = build_graph([(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 0.5)])
    ch = SpatialChain([[0.7, 0.3], [0.4, 0.6]])
    res = chi_solve(g, ch, restarts=6, seed=3)
    nu = res.minimizer
    nu.validate(1e-9)
    E = optimal_edges(g, res.optimal_cycles)
    assert np.all(nu.bar_ij[~E] <= 1e-12)
    assert all(c.mean(g.rho) == pytest.approx(res.lam) for c in res.optimal_cycles)
    assert chi_objective(nu, ch, g) == pytest.approx(res.chi, abs=1e-12)
    assert min(res.restart_values) >= res.chi - 1e-12
    assert len(res.restarts) == 6
    assert res.vertex_value >= res.chi
    assert all(res.restarts[k].value - res.chi <= 1e-6 for k in res.near_optimal())


def test_chi_is_reproducible():
    g = build_graph([(0, 1, 1.0), (1, 0, 1.0)])
    ch = SpatialChain([[0.9, 0.1], [0.3, 0.7]])
    a, b = chi_solve(g, ch, restarts=5, seed=9), chi_solve(g, ch, restarts=5, seed=9)
    assert a.chi == b.chi and a.restart_values == b.restart_values


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_no_migration_closed_form_matches_search(seed):
    rng = np.random.default_rng(seed)
    T = int(rng.integers(1, 5))
    base = random_graph(rng, T, density=0.5)
    rho_i = rng.uniform(1.0, 2.5, size=T)
    g = build_graph([(i, j, rho_i[i]) for i, j in base.edges], n_types=T)
    res = chi_solve(g, TRIV, restarts=8, seed=1)
    assert res.chi == pytest.approx(chi_no_migration(g), abs=1e-6)


def test_uniform_minimizers_are_shortest_cycles():
    g = build_graph([(0, 1, 1.5), (1, 0, 1.5), (1, 2, 1.5), (2, 0, 1.5)])
    mins = no_migration_minimizers(g)
    assert {c.length for c in mins} == {girth(g)}
    assert len(enumerate_simple_cycles(g)) == 2


def test_no_migration_preconditions():
    with pytest.raises(PreconditionViolated):
        chi_no_migration(build_graph([(0, 1, 1.0), (0, 0, 2.0), (1, 0, 1.0)]))
    with pytest.raises(PreconditionViolated):
        chi_no_migration(build_graph([(0, 1, 0.5), (1, 0, 0.5)]))


def test_too_many_types():
    g = build_graph([(i, (i + 1) % 13, 1.0) for i in range(13)])
    with pytest.raises(EnumerationTooLarge):
        chi_solve(g, TRIV)
    res = lambda_max_mean_cycle(g)
    assert res.lam == 1.0 and res.cycles[0].length == 13
