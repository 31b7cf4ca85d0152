"""Benchmark sweep plumbing: summaries, fits, instance sampling."""

import numpy as np

from cayleydiff.bench import (
    BenchRow,
    fit_excess_curve,
    run_benchmark,
    sample_instances,
    summarize,
)
from cayleydiff.graphs import sl2p_graph
from cayleydiff.oracle import ProbabilityTables, bfs_distances, exact_score
from cayleydiff.search import SolveResult


def test_summarize_mean_excess_uses_solved_instances_only():
    results = [SolveResult(True, [0] * 5, 5, 10, 0.01),
               SolveResult(True, [0] * 7, 7, 10, 0.01),
               SolveResult(False, [], -1, 10, 0.01)]
    optimal = np.array([4, 6, 2])
    row = summarize(results, optimal, width=2, radius=0)
    assert row.solve_rate == 2 / 3
    assert row.mean_length == 6.0
    assert row.mean_excess == 6.0 - 5.0
    assert row.opt_pct == 0.0


def test_fit_excess_curve_recovers_synthetic_coefficients():
    rows = [BenchRow(2 ** k, 4, 1.0, 0.0, 8.0 / k - 0.3, 0.0, 0.0, 0.0)
            for k in range(1, 7)]
    rows.append(BenchRow(1, 4, 1.0, 0.0, 9.0, 0.0, 0.0, 0.0))  # skipped (log2=0)
    rows.append(BenchRow(4, 2, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0))  # too few cells
    fits = fit_excess_curve(rows)
    assert set(fits) == {4}
    a, b = fits[4]
    assert abs(a - 8.0) < 1e-9 and abs(b + 0.3) < 1e-9


def test_sample_instances_deterministic_and_uniformish():
    g = sl2p_graph(7)
    table = bfs_distances(g)
    a = sample_instances(g, 50, seed=3, dist_table=table)
    b = sample_instances(g, 50, seed=3, dist_table=table)
    assert np.array_equal(a, b)
    for x in a[:10]:
        g.validate_state(x)
    c = sample_instances(g, 50, seed=3)  # direct sampler, no table
    for x in c[:10]:
        g.validate_state(x)


def test_run_benchmark_with_exact_scores_single_cell():
    g = sl2p_graph(3)
    tabs = ProbabilityTables(g, T=10)
    es = exact_score(tabs)
    table = bfs_distances(g)
    starts = tabs.support(10, 0.0)[:12]
    rows = run_benchmark(g, es, 10, [4], [1], starts, dist_table=table)
    assert len(rows) == 1
    row = rows[0]
    assert row.beam_width == 4 and row.ball_radius == 1
    assert 0.0 <= row.solve_rate <= 1.0
    if row.solve_rate > 0:
        assert row.mean_excess >= -1e-9  # beam never beats the oracle
