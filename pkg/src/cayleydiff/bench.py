"""Benchmark sweeps over beam width and ball radius, with optimality
statistics against an exact distance table."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .graphs import CayleyGraph
from .model import ScoreModel
from .oracle import DistanceTable
from .search import BallTable, beam_search, build_ball, t_calibrate

CSV_HEADER = ("beam_width,ball_radius,solve_rate,mean_length,mean_excess,"
              "opt_pct,mean_nodes,mean_seconds")


@dataclass
class BenchRow:
    beam_width: int
    ball_radius: int
    solve_rate: float
    mean_length: float
    mean_excess: float
    opt_pct: float
    mean_nodes: float
    mean_seconds: float

    def csv(self) -> str:
        return (f"{self.beam_width},{self.ball_radius},{self.solve_rate:.4f},"
                f"{self.mean_length:.3f},{self.mean_excess:.3f},{self.opt_pct:.1f},"
                f"{self.mean_nodes:.1f},{self.mean_seconds:.4f}")


def sample_instances(graph: CayleyGraph, n: int, seed: int,
                     dist_table: DistanceTable | None = None) -> np.ndarray:
    """n uniform-random states (uniform over reachable states when a dense
    oracle table is available, else the family's direct sampler)."""
    rng = np.random.default_rng(seed)
    if dist_table is not None and dist_table.dense is not None:
        return dist_table.sample_states(rng, n)
    return np.stack([graph.uniform_random_state(rng) for _ in range(n)])


def solve_instances(graph: CayleyGraph, model: ScoreModel, starts: np.ndarray,
                    T_b: int, width: int, ball: BallTable | None,
                    calibrate: bool = False) -> list:
    solver = lambda s, tb: beam_search(graph, model, s, tb, width, ball)
    results = []
    for s in starts:
        if calibrate:
            results.append(t_calibrate(solver, s, T_b))
        else:
            results.append(solver(s, T_b))
    return results


def summarize(results, optimal: np.ndarray | None,
              width: int, radius: int) -> BenchRow:
    solved = np.array([r.solved for r in results])
    lengths = np.array([r.length for r in results], dtype=np.float64)
    nodes = np.mean([r.nodes_expanded for r in results])
    secs = np.mean([r.wall_time for r in results])
    rate = float(solved.mean())
    if solved.any():
        mean_len = float(lengths[solved].mean())
        if optimal is not None:
            opt = np.asarray(optimal, dtype=np.float64)
            mean_excess = mean_len - float(opt[solved].mean())
            opt_pct = float((lengths[solved] == opt[solved]).mean() * 100.0)
        else:
            mean_excess = float("nan")
            opt_pct = float("nan")
    else:
        mean_len = float("nan")
        mean_excess = float("nan")
        opt_pct = float("nan")
    return BenchRow(width, radius, rate, mean_len, mean_excess, opt_pct,
                    float(nodes), float(secs))


def fit_excess_curve(rows) -> dict[int, tuple[float, float]]:
    """Least-squares fit excess ~ a / log2(B) + b per ball radius.

    Uses cells with beam width >= 2 and a finite mean excess; radii with
    fewer than three such cells are skipped. This is the desk-scale analog of
    the excess-vs-beam-width curve; the coefficients are instance-dependent.
    """
    by_radius: dict[int, list[BenchRow]] = {}
    for r in rows:
        if r.beam_width >= 2 and np.isfinite(r.mean_excess):
            by_radius.setdefault(r.ball_radius, []).append(r)
    fits = {}
    for radius, cells in by_radius.items():
        if len(cells) < 3:
            continue
        x = np.array([1.0 / np.log2(c.beam_width) for c in cells])
        y = np.array([c.mean_excess for c in cells])
        A = np.stack([x, np.ones_like(x)], axis=1)
        (a, b), *_ = np.linalg.lstsq(A, y, rcond=None)
        fits[radius] = (float(a), float(b))
    return fits


def run_benchmark(graph: CayleyGraph, model: ScoreModel, T_b: int,
                  beam_widths, ball_radii, starts: np.ndarray,
                  dist_table: DistanceTable | None = None,
                  calibrate: bool = False, progress=None) -> list[BenchRow]:
    """Full grid sweep; one BenchRow per (beam width, ball radius) cell."""
    optimal = dist_table.distance_batch(starts) if dist_table is not None else None
    balls = {r: build_ball(graph, r) for r in sorted(set(ball_radii))}
    rows = []
    for radius in ball_radii:
        for width in beam_widths:
            t0 = time.perf_counter()
            results = solve_instances(graph, model, starts, T_b, width,
                                      balls[radius], calibrate)
            row = summarize(results, optimal, width, radius)
            rows.append(row)
            if progress is not None:
                progress(row, time.perf_counter() - t0)
    return rows
