"""Forward Markov processes on Cayley graphs and the Bayes-reversed kernel.

The uniform process steps with a generator drawn uniformly; the reversed-score
process draws generator ``a`` from ``x`` with probability proportional to the
score of the reverse edge, sigma_{t+1}(x a)_{a^-1}, which upweights moves into
less-visited territory. The backward kernel always assumes the uniform forward
process, so a kernel row is just the score vector normalized to 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericError
from .graphs import CayleyGraph

KERNEL_SUM_TOL = 1e-9


@dataclass
class Trajectory:
    """One forward walk: states[t] = apply(states[t-1], moves[t-1])."""

    states: np.ndarray  # (T+1, state_len)
    moves: np.ndarray   # (T,)

    @property
    def horizon(self) -> int:
        return len(self.moves)


class TrajectoryBatch:
    """A stack of equally long trajectories kept in contiguous arrays."""

    def __init__(self, states: np.ndarray, moves: np.ndarray):
        if states.ndim != 3 or moves.ndim != 2 or states.shape[0] != moves.shape[0] \
                or states.shape[1] != moves.shape[1] + 1:
            raise DomainError("trajectory batch arrays have inconsistent shapes")
        self.states = states
        self.moves = moves

    def __len__(self) -> int:
        return self.states.shape[0]

    def __getitem__(self, i: int) -> Trajectory:
        return Trajectory(self.states[i], self.moves[i])

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @property
    def horizon(self) -> int:
        return self.moves.shape[1]

    @classmethod
    def from_list(cls, trajectories) -> "TrajectoryBatch":
        if isinstance(trajectories, cls):
            return trajectories
        items = list(trajectories)
        if not items:
            raise DomainError("empty trajectory batch")
        return cls(np.stack([t.states for t in items]),
                   np.stack([t.moves for t in items]))


def validate_trajectory(graph: CayleyGraph, traj: Trajectory,
                        goal_start: bool = True) -> None:
    """Check the apply-chain invariant (and goal membership of states[0] when
    the batch was sampled with the exact-goal initialization)."""
    if goal_start and not graph.is_goal(traj.states[0]):
        raise DomainError("trajectory does not start in the goal set")
    for t in range(1, traj.states.shape[0]):
        expect = graph.apply_batch(traj.states[t - 1][None, :], int(traj.moves[t - 1]))[0]
        if not np.array_equal(expect, traj.states[t]):
            raise DomainError(f"states[{t}] is not apply(states[{t - 1}], moves[{t - 1}])")


def forward_step_uniform(graph: CayleyGraph, x: np.ndarray,
                         rng: np.random.Generator) -> tuple[int, np.ndarray]:
    """One uniform-kernel step: a ~ U(S), returns (a, x a)."""
    a = int(rng.integers(graph.n_generators))
    return a, graph.apply_batch(np.asarray(x, dtype=graph.state_dtype)[None, :], a)[0]


def reversed_score_weights(graph: CayleyGraph, X: np.ndarray, t: int,
                           model) -> np.ndarray:
    """Unnormalized move weights sigma_{t+1}(x a)_{a^-1} for each row of X."""
    B = X.shape[0]
    S = graph.n_generators
    nbrs = graph.neighbors_batch(X).reshape(B * S, -1)
    scores = model.score_batch(graph, nbrs, t + 1).reshape(B, S, S)
    inv = graph.generators.inverse_of
    weights = scores[:, np.arange(S), inv]
    if not np.all(np.isfinite(weights)):
        raise NumericError(f"non-finite reversed-score weights at t={t}")
    return weights


def _sample_rows(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row of a row-stochastic matrix."""
    cum = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0]) * cum[:, -1]
    return (u[:, None] >= cum).sum(axis=1)


def forward_step_reversed_score(graph: CayleyGraph, x: np.ndarray, t: int,
                                model, rng: np.random.Generator) -> tuple[int, np.ndarray]:
    """One reversed-score step from time t (0 <= t < model horizon)."""
    if t < 0:
        raise DomainError("time index must be >= 0")
    X = np.asarray(x, dtype=graph.state_dtype)[None, :]
    w = reversed_score_weights(graph, X, t, model)
    probs = w / w.sum(axis=1, keepdims=True)
    a = int(_sample_rows(probs, rng)[0])
    return a, graph.apply_batch(X, a)[0]


def _initial_states(graph, count, rng, n_max):
    X = np.empty((count, graph.state_len), dtype=graph.state_dtype)
    for i in range(count):
        X[i] = graph.scramble(rng, n_max) if n_max > 0 else graph.random_goal(rng)
    return X


def sample_trajectories(graph: CayleyGraph, T: int, count: int, process: str,
                        rng: np.random.Generator, model=None,
                        n_max: int = 0) -> TrajectoryBatch:
    """Sample ``count`` forward walks of exactly T moves.

    ``process`` is "uniform" or "reversed-score" (the latter needs ``model``).
    Starts are uniform over the goal set, or scramble-ball states when
    n_max > 0.
    """
    if T < 1 or count < 1:
        raise DomainError("T and count must be >= 1")
    if process not in ("uniform", "reversed-score"):
        raise DomainError(f"unknown process {process!r}")
    if process == "reversed-score" and model is None:
        raise DomainError("reversed-score sampling requires a model")
    S = graph.n_generators
    states = np.empty((count, T + 1, graph.state_len), dtype=graph.state_dtype)
    moves = np.empty((count, T), dtype=np.int8)
    X = _initial_states(graph, count, rng, n_max)
    states[:, 0] = X
    for t in range(T):
        if process == "uniform":
            A = rng.integers(S, size=count)
        else:
            w = reversed_score_weights(graph, X, t, model)
            probs = w / w.sum(axis=1, keepdims=True)
            A = _sample_rows(probs, rng)
        X = graph.apply_mixed(X, A)
        states[:, t + 1] = X
        moves[:, t] = A
    return TrajectoryBatch(states, moves)


@dataclass
class KernelRow:
    """Backward transition probabilities over the generator set."""

    probs: np.ndarray

    def __post_init__(self):
        s = float(self.probs.sum())
        if not np.isfinite(s) or abs(s - 1.0) > KERNEL_SUM_TOL:
            raise NumericError(f"kernel row sums to {s}, not 1")


def backward_kernel(graph: CayleyGraph, x: np.ndarray, t: int,
                    score: np.ndarray) -> KernelRow:
    """Bayes-reversed row at (x, t) for the uniform forward process.

    With a uniform forward kernel the row is the score vector normalized:
    probs[a] = score[a] / sum(score). Exact scores may contain zeros at the
    support boundary; the row only needs a positive finite total.
    """
    score = np.asarray(score, dtype=np.float64)
    if score.shape != (graph.n_generators,):
        raise DomainError(f"score must have length {graph.n_generators}")
    if not np.all(np.isfinite(score)) or np.any(score < 0):
        raise NumericError("score entries must be finite and non-negative")
    total = score.sum()
    if total <= 0.0:
        raise NumericError("score vector sums to zero")
    return KernelRow(score / total)


def dump_trajectories(batch: TrajectoryBatch, fh) -> None:
    """Debug dump, one trajectory per line: ``t0_state | move,move,...``."""
    for traj in batch:
        start = ",".join(str(int(v)) for v in traj.states[0])
        mov = ",".join(str(int(m)) for m in traj.moves)
        fh.write(f"{start} | {mov}\n")
