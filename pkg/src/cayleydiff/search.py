"""Reverse-process solving: stochastic backward walks, deterministic beam
search with per-step state dedup, two-sided search against a hashed exact
ball, and T-calibration."""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .diffusion import backward_kernel
from .errors import DomainError, FormatError, ResourceLimitError
from .graphs import CayleyGraph

DEFAULT_BALL_BUDGET = 20_000_000


class BallTable:
    """Exact distances within radius R of the goal set, with a first move
    stepping one closer for every non-goal entry (generator index, or -1)."""

    def __init__(self, graph: CayleyGraph, radius: int,
                 entries: dict[bytes, tuple[int, int]]):
        self.graph = graph
        self.radius = radius
        self.entries = entries

    def __len__(self) -> int:
        return len(self.entries)

    def lookup(self, x: np.ndarray):
        return self.entries.get(self.graph.state_key(x))

    def complete(self, x: np.ndarray) -> list[int]:
        """First-move chain from a ball state to a goal (exactly `dist` moves)."""
        moves = []
        hit = self.lookup(x)
        if hit is None:
            raise DomainError("state not in ball")
        while hit[0] > 0:
            moves.append(hit[1])
            x = self.graph.apply_batch(np.asarray(x)[None, :], hit[1])[0]
            hit = self.lookup(x)
            if hit is None:
                raise DomainError("first-move chain left the ball")
        return moves


def build_ball(graph: CayleyGraph, radius: int,
               max_states: int = DEFAULT_BALL_BUDGET) -> BallTable:
    """BFS from all goals out to ``radius``; aborts at the memory budget."""
    if radius < 0:
        raise DomainError("radius must be >= 0")
    inv = graph.generators.inverse_of
    entries: dict[bytes, tuple[int, int]] = {
        graph.state_key(g): (0, -1) for g in graph.goal_states}
    frontier = graph.goal_states.copy()
    for d in range(1, radius + 1):
        fresh = []
        for a in range(graph.n_generators):
            Y = graph.apply_batch(frontier, a)
            back = int(inv[a])
            for y in Y:
                key = y.tobytes()
                if key not in entries:
                    entries[key] = (d, back)
                    fresh.append(y)
                    if len(entries) > max_states:
                        raise ResourceLimitError(
                            f"ball exceeds {max_states} states; achieved radius {d - 1}")
        if not fresh:
            break
        frontier = np.stack(fresh)
    return BallTable(graph, radius, entries)


_BALL_MAGIC = b"CDBT"
_BALL_VERSION = 1


def save_ball(ball: BallTable, path) -> None:
    g = ball.graph
    with open(path, "wb") as fh:
        fh.write(_BALL_MAGIC)
        fh.write(struct.pack("<HIIQ", _BALL_VERSION, ball.radius, g.state_len,
                             len(ball.entries)))
        for key, (dist, move) in ball.entries.items():
            fh.write(key)
            fh.write(struct.pack("<Bb", dist, move))


def load_ball(graph: CayleyGraph, path) -> BallTable:
    with open(path, "rb") as fh:
        raw = fh.read()
    head = 4 + struct.calcsize("<HIIQ")
    if len(raw) < head or raw[:4] != _BALL_MAGIC:
        raise FormatError(f"{path}: not a ball table file")
    version, radius, state_len, count = struct.unpack("<HIIQ", raw[4:head])
    if version != _BALL_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    key_len = state_len * np.dtype(graph.state_dtype).itemsize
    rec = key_len + 2
    if state_len != graph.state_len or len(raw) != head + count * rec:
        raise FormatError(f"{path}: truncated or mismatched ball payload")
    entries = {}
    off = head
    for _ in range(count):
        key = raw[off:off + key_len]
        dist, move = struct.unpack("<Bb", raw[off + key_len:off + rec])
        entries[key] = (dist, move)
        off += rec
    return BallTable(graph, radius, entries)


@dataclass
class SolveResult:
    """Outcome of one solve; ``path`` is a forward word from start to goal."""

    solved: bool
    path: list[int] = field(default_factory=list)
    length: int = -1
    nodes_expanded: int = 0
    wall_time: float = 0.0
    cum_logprob: float | None = None
    horizon: int = 0

    def record(self, graph: CayleyGraph | None = None) -> str:
        names = (" ".join(graph.generators.names[a] for a in self.path)
                 if graph is not None else " ".join(map(str, self.path)))
        return (f"{int(self.solved)},{self.length},{self.nodes_expanded},"
                f"{self.wall_time:.4f},{names}")


def _verify_path(graph: CayleyGraph, start: np.ndarray, path) -> bool:
    return graph.is_goal(graph.apply_word(start, path))


def _finish(graph, start, path, nodes, t0, cum_logprob=None, horizon=0) -> SolveResult:
    res = SolveResult(True, list(path), len(path), nodes,
                      time.perf_counter() - t0, cum_logprob, horizon)
    if not _verify_path(graph, start, res.path):
        raise DomainError("internal error: solution path failed verification")
    return res


def _try_terminal(graph, ball, x):
    """(hit, completion) if x is a goal or inside the ball."""
    if graph.is_goal(x):
        return True, []
    if ball is not None:
        hit = ball.lookup(x)
        if hit is not None:
            return True, ball.complete(x)
    return False, None


def backward_walk(graph: CayleyGraph, model, start: np.ndarray, T_b: int,
                  rng: np.random.Generator, ball: BallTable | None = None) -> SolveResult:
    """Sample the reverse process from time T_b down to 0.

    Stops as soon as the walk touches the goal set or the ball (completing
    optimally through the ball); reaching t=0 elsewhere is an unsolved result.
    """
    t0 = time.perf_counter()
    x = np.asarray(start, dtype=graph.state_dtype)
    path: list[int] = []
    nodes = 0
    for t in range(T_b, 0, -1):
        hit, completion = _try_terminal(graph, ball, x)
        if hit:
            return _finish(graph, start, path + completion, nodes, t0, horizon=T_b)
        score = model.score_state(graph, x, t)
        nodes += 1
        row = backward_kernel(graph, x, t, score)
        a = int(rng.choice(graph.n_generators, p=row.probs))
        path.append(a)
        x = graph.apply_batch(x[None, :], a)[0]
    hit, completion = _try_terminal(graph, ball, x)
    if hit:
        return _finish(graph, start, path + completion, nodes, t0, horizon=T_b)
    return SolveResult(False, [], -1, nodes, time.perf_counter() - t0,
                       horizon=T_b)


def beam_search(graph: CayleyGraph, model, start: np.ndarray, T_b: int,
                width: int, ball: BallTable | None = None,
                alpha: int | None = None,
                rng: np.random.Generator | None = None) -> SolveResult:
    """Deterministic beam over backward walks.

    Keeps the ``width`` partial walks with the highest cumulative backward
    log-probability, deduplicating by state (max cum_logprob wins). With
    ``alpha`` set, each candidate instead samples alpha successor moves from
    its kernel row (requires ``rng``); the default expands all of them.

    width=1 degenerates to the greedy argmax walk and consumes no randomness.
    """
    if width < 1:
        raise DomainError("beam width must be >= 1")
    if alpha is not None and rng is None:
        raise DomainError("sampled expansion needs an rng")
    t0 = time.perf_counter()
    S = graph.n_generators
    states = np.asarray(start, dtype=graph.state_dtype)[None, :]
    logps = np.zeros(1, dtype=np.float64)
    paths = [[]]
    nodes = 0
    for t in range(T_b, 0, -1):
        best = _best_terminal(graph, ball, states, logps, paths)
        if best is not None:
            path, lp = best
            return _finish(graph, start, path, nodes, t0, lp, T_b)
        kernel = model.score_batch(graph, states, t)
        kernel = kernel / kernel.sum(axis=1, keepdims=True)
        nodes += states.shape[0]
        with np.errstate(divide="ignore"):
            step_lp = np.log(kernel)
        if alpha is None:
            cand_lp = (logps[:, None] + step_lp).reshape(-1)
            cand_parent = np.repeat(np.arange(states.shape[0]), S)
            cand_move = np.tile(np.arange(S), states.shape[0])
        else:
            parents, moves = [], []
            for i in range(states.shape[0]):
                draws = rng.choice(S, size=alpha, p=kernel[i])
                parents.extend([i] * alpha)
                moves.extend(int(d) for d in draws)
            cand_parent = np.asarray(parents)
            cand_move = np.asarray(moves)
            cand_lp = logps[cand_parent] + step_lp[cand_parent, cand_move]
        cand_states = graph.apply_mixed(states[cand_parent], cand_move)
        # dedupe by state, keeping the most probable candidate of each
        order = np.argsort(-cand_lp, kind="stable")
        seen = set()
        keep = []
        for idx in order:
            key = cand_states[idx].tobytes()
            if key not in seen:
                seen.add(key)
                keep.append(idx)
                if len(keep) == width:
                    break
        keep = np.asarray(keep)
        # probability-zero walks are not part of the backward process
        keep = keep[np.isfinite(cand_lp[keep])]
        if keep.size == 0:
            return SolveResult(False, [], -1, nodes,
                               time.perf_counter() - t0, horizon=T_b)
        states = cand_states[keep]
        logps = cand_lp[keep]
        paths = [paths[cand_parent[i]] + [int(cand_move[i])] for i in keep]
    best = _best_terminal(graph, ball, states, logps, paths)
    if best is not None:
        path, lp = best
        return _finish(graph, start, path, nodes, t0, lp, T_b)
    return SolveResult(False, [], -1, nodes, time.perf_counter() - t0,
                       cum_logprob=float(logps.max()), horizon=T_b)


def _best_terminal(graph, ball, states, logps, paths):
    """Among candidates touching goal/ball, the shortest completed path
    (ties broken toward higher cumulative log-probability)."""
    best = None
    for i in range(states.shape[0]):
        hit, completion = _try_terminal(graph, ball, states[i])
        if hit:
            total = paths[i] + completion
            key = (len(total), -logps[i])
            if best is None or key < best[0]:
                best = (key, total, float(logps[i]))
    if best is None:
        return None
    return best[1], best[2]


def t_calibrate(solver, start: np.ndarray, T_initial: int) -> SolveResult:
    """Re-run the solver with the horizon shrunk to each new best length.

    ``solver(start, T_b) -> SolveResult``. Stops when an attempt fails or
    stops improving; the returned result is the shortest solution seen.
    """
    best = solver(start, T_initial)
    if not best.solved:
        return best
    while 0 < best.length < best.horizon:
        trial = solver(start, best.length)
        if not trial.solved or trial.length >= best.length:
            break
        best = trial
    return best


def estimate_expected_time(walks, T: int, T_penalty: float) -> float:
    """Mean steps-to-goal with unsolved walks counted as T_penalty."""
    if not walks:
        raise DomainError("estimate_expected_time needs at least one walk")
    vals = [w.length if w.solved else T_penalty for w in walks]
    return float(np.mean(vals))


def estimate_expected_time_weighted(walks, T: int, T_penalty: float) -> float | None:
    """Probability-weighted variant: walks are weighted by their backward
    walk probability (softmax of cum_logprob). None when no walk carries one."""
    pairs = [(w.cum_logprob, w.length if w.solved else T_penalty)
             for w in walks if w.cum_logprob is not None]
    if not pairs:
        return None
    lps = np.array([p[0] for p in pairs], dtype=np.float64)
    vals = np.array([p[1] for p in pairs], dtype=np.float64)
    w = np.exp(lps - lps.max())
    return float((w * vals).sum() / w.sum())
