"""Exact ground truth: BFS distance tables, time-indexed occupation
probabilities with exact scores on small graphs, and an integer-matrix
shortest-word solver for SL2(Z) over the unit T/U generators."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, FormatError, ResourceLimitError
from .graphs import CayleyGraph

UNREACHED = 255  # sentinel in dense uint8 distance arrays

DEFAULT_STATE_BUDGET = 64_000_000


@dataclass
class DistanceTable:
    """Exact distance-to-goal-set for every reachable state.

    Dense mode stores one byte per rank (rankable families); dict mode maps
    state bytes to distances for small generic graphs.
    """

    graph: CayleyGraph
    dense: np.ndarray | None          # uint8[rank_space], UNREACHED where invalid
    sparse: dict | None               # state bytes -> distance
    count: int
    diameter: int
    mean_distance: float

    def distance(self, x: np.ndarray) -> int:
        if self.dense is not None:
            d = int(self.dense[int(self.graph.rank_batch(np.asarray(x)[None, :])[0])])
        else:
            d = self.sparse.get(self.graph.state_key(x), UNREACHED)
        if d == UNREACHED:
            raise DomainError("state not in the reachable component")
        return d

    def distance_batch(self, X: np.ndarray) -> np.ndarray:
        if self.dense is not None:
            return self.dense[self.graph.rank_batch(X)].astype(np.int64)
        return np.array([self.sparse[self.graph.state_key(x)] for x in X], dtype=np.int64)

    def reachable_ranks(self) -> np.ndarray:
        if self.dense is None:
            raise DomainError("sparse tables do not index by rank")
        return np.flatnonzero(self.dense != UNREACHED)

    def sample_states(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Uniform sample of reachable states (dense tables only)."""
        ranks = self.reachable_ranks()
        return self.graph.unrank_batch(ranks[rng.integers(len(ranks), size=n)])


def _dedupe_frontier(states: np.ndarray, keys: np.ndarray) -> np.ndarray:
    _, first = np.unique(keys, return_index=True)
    return states[first]


def bfs_distances(graph: CayleyGraph, max_states: int = DEFAULT_STATE_BUDGET) -> DistanceTable:
    """Multi-source BFS from the goal set over the full reachable component."""
    if graph.rank_space is not None:
        if graph.rank_space > max_states:
            raise ResourceLimitError(
                f"rank space {graph.rank_space} exceeds budget {max_states}")
        return _bfs_dense(graph, max_states)
    return _bfs_sparse(graph, max_states)


def _bfs_dense(graph, max_states):
    dist = np.full(graph.rank_space, UNREACHED, dtype=np.uint8)
    frontier = graph.goal_states.copy()
    dist[graph.rank_batch(frontier)] = 0
    count = frontier.shape[0]
    total = 0.0
    d = 0
    while frontier.shape[0]:
        d += 1
        if d >= UNREACHED:
            raise ResourceLimitError("graph diameter exceeds uint8 distance storage")
        nxt = []
        for a in range(graph.n_generators):
            Y = graph.apply_batch(frontier, a)
            ranks = graph.rank_batch(Y)
            fresh = dist[ranks] == UNREACHED
            if fresh.any():
                ranks = ranks[fresh]
                ranks = np.unique(ranks)
                dist[ranks] = d  # marks visited; duplicates across a handled below
                nxt.append(Y[fresh])
        if not nxt:
            break
        merged = np.concatenate(nxt)
        merged = _dedupe_frontier(merged, graph.rank_batch(merged))
        frontier = merged
        count += frontier.shape[0]
        total += d * frontier.shape[0]
        if count > max_states:
            raise ResourceLimitError(
                f"reachable component exceeds budget {max_states} at distance {d}")
    reached = dist != UNREACHED
    diameter = int(dist[reached].max()) if count else 0
    return DistanceTable(graph, dist, None, int(count), diameter,
                         float(total / count))


def _bfs_sparse(graph, max_states):
    dist = {graph.state_key(g): 0 for g in graph.goal_states}
    frontier = graph.goal_states.copy()
    count = len(dist)
    total = 0.0
    d = 0
    while frontier.shape[0]:
        d += 1
        fresh_states = []
        for a in range(graph.n_generators):
            Y = graph.apply_batch(frontier, a)
            for y in Y:
                key = y.tobytes()
                if key not in dist:
                    dist[key] = d
                    fresh_states.append(y)
        if not fresh_states:
            break
        frontier = np.stack(fresh_states)
        count += len(fresh_states)
        total += d * len(fresh_states)
        if count > max_states:
            raise ResourceLimitError(
                f"reachable component exceeds budget {max_states} at distance {d}")
    diameter = max(dist.values()) if dist else 0
    return DistanceTable(graph, None, dist, count, int(diameter), total / count)


_TABLE_MAGIC = b"CDDT"
_TABLE_VERSION = 1


def save_distance_table(table: DistanceTable, path) -> None:
    """Flat binary: header + one distance byte per rank slot."""
    if table.dense is None:
        raise DomainError("only dense (rankable) tables are persisted")
    fam = table.graph.family.encode()[:16].ljust(16, b"\0")
    param = getattr(table.graph, "p", 0)
    with open(path, "wb") as fh:
        fh.write(_TABLE_MAGIC)
        fh.write(struct.pack("<H16sIQQId", _TABLE_VERSION, fam, param,
                             len(table.dense), table.count, table.diameter,
                             table.mean_distance))
        fh.write(table.dense.tobytes())


def load_distance_table(graph: CayleyGraph, path) -> DistanceTable:
    with open(path, "rb") as fh:
        raw = fh.read()
    header_len = 4 + struct.calcsize("<H16sIQQId")
    if len(raw) < header_len or raw[:4] != _TABLE_MAGIC:
        raise FormatError(f"{path}: not a distance table file")
    version, fam, param, n, count, diameter, mean = struct.unpack(
        "<H16sIQQId", raw[4:header_len])
    if version != _TABLE_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    fam = fam.rstrip(b"\0").decode()
    if fam != graph.family or (fam == "sl2p" and param != graph.p):
        raise FormatError(f"{path}: table for {fam}({param}) does not match graph")
    if len(raw) != header_len + n or n != graph.rank_space:
        raise FormatError(f"{path}: truncated or mismatched distance payload")
    dense = np.frombuffer(raw[header_len:], dtype=np.uint8).copy()
    return DistanceTable(graph, dense, None, count, diameter, mean)


# ---------------------------------------------------------------------------
# Exact occupation probabilities and scores
# ---------------------------------------------------------------------------

class ProbabilityTables:
    """p_t over an enumerated component for t = 0..T under the uniform walk."""

    def __init__(self, graph: CayleyGraph, T: int, max_states: int = 100_000):
        self.graph = graph
        self.T = T
        states, index = _enumerate_component(graph, max_states)
        self.states = states
        self.index = index
        n = states.shape[0]
        succ = np.empty((n, graph.n_generators), dtype=np.int64)
        for a in range(graph.n_generators):
            Y = graph.apply_batch(states, a)
            succ[:, a] = [index[y.tobytes()] for y in Y]
        self.succ = succ
        probs = np.zeros((T + 1, n), dtype=np.float64)
        for g in graph.goal_states:
            probs[0, index[g.tobytes()]] = 1.0 / graph.goal_states.shape[0]
        w = 1.0 / graph.n_generators
        for t in range(1, T + 1):
            nxt = np.zeros(n, dtype=np.float64)
            for a in range(graph.n_generators):
                np.add.at(nxt, succ[:, a], probs[t - 1] * w)
            probs[t] = nxt
        self.probs = probs

    def state_index(self, x: np.ndarray) -> int:
        key = self.graph.state_key(np.asarray(x, dtype=self.graph.state_dtype))
        if key not in self.index:
            raise DomainError("state not in enumerated component")
        return self.index[key]

    def p(self, t: int, x: np.ndarray) -> float:
        return float(self.probs[t, self.state_index(x)])

    def support(self, t: int, threshold: float = 0.0) -> np.ndarray:
        """States x with p_t(x) > threshold."""
        return self.states[self.probs[t] > threshold]


def _enumerate_component(graph, max_states):
    index = {}
    order = []
    frontier = []
    for g in graph.goal_states:
        key = g.tobytes()
        if key not in index:
            index[key] = len(order)
            order.append(g)
            frontier.append(g)
    frontier = np.stack(frontier)
    while frontier.shape[0]:
        nxt = []
        for a in range(graph.n_generators):
            Y = graph.apply_batch(frontier, a)
            for y in Y:
                key = y.tobytes()
                if key not in index:
                    index[key] = len(order)
                    order.append(y)
                    nxt.append(y)
        if len(order) > max_states:
            raise ResourceLimitError(
                f"component exceeds exact-probability budget {max_states}")
        if not nxt:
            break
        frontier = np.stack(nxt)
    return np.stack(order), index


class ExactScore:
    """Exact score sigma_t(x)_a = p_{t-1}(x a) / p_t(x) from oracle tables.

    Exposes the same ``score_state`` interface as the learned model so the
    search routines can run with ground-truth scores.
    """

    def __init__(self, tables: ProbabilityTables):
        self.tables = tables

    def score_state(self, graph: CayleyGraph, x: np.ndarray, t: int) -> np.ndarray:
        tb = self.tables
        if not 1 <= t <= tb.T:
            raise DomainError(f"time index {t} outside [1, {tb.T}]")
        i = tb.state_index(x)
        px = tb.probs[t, i]
        if px <= 0.0:
            raise DomainError(f"score undefined: p_{t}(x) = 0")
        return tb.probs[t - 1, tb.succ[i]] / px

    def score_batch(self, graph: CayleyGraph, X: np.ndarray, t: int) -> np.ndarray:
        return np.stack([self.score_state(graph, x, t) for x in X])


def exact_score(tables: ProbabilityTables) -> ExactScore:
    return ExactScore(tables)


# ---------------------------------------------------------------------------
# SL2(Z) word solver (exact integer arithmetic)
# ---------------------------------------------------------------------------

SL2Z_GENERATOR_NAMES = ("T+1", "T-1", "U+1", "U-1")

_SL2Z_MATS = {
    "T+1": (1, 1, 0, 1),
    "T-1": (1, -1, 0, 1),
    "U+1": (1, 0, 1, 1),
    "U-1": (1, 0, -1, 1),
}


def sl2z_mul(m1, m2):
    """Exact 2x2 integer product of (a, b, c, d) tuples."""
    a1, b1, c1, d1 = m1
    a2, b2, c2, d2 = m2
    return (a1 * a2 + b1 * c2, a1 * b2 + b1 * d2,
            c1 * a2 + d1 * c2, c1 * b2 + d1 * d2)


def sl2z_word_to_matrix(word) -> tuple:
    m = (1, 0, 0, 1)
    for name in word:
        m = sl2z_mul(m, _SL2Z_MATS[name])
    return m


def _bounded_word_lookup():
    """Shortest words for the small matrices the reduction cannot emit
    directly: -I and the two off-diagonal unit matrices. Found once by a
    bounded BFS over SL2(Z) and checked by exact multiplication."""
    targets = {(-1, 0, 0, -1), (0, 1, -1, 0), (0, -1, 1, 0)}
    found = {}
    frontier = {(1, 0, 0, 1): []}
    seen = {(1, 0, 0, 1)}
    for _ in range(6):
        nxt = {}
        for mat, word in frontier.items():
            for name, gen in _SL2Z_MATS.items():
                m2 = sl2z_mul(mat, gen)
                if m2 in seen or any(abs(v) > 2 for v in m2):
                    continue
                seen.add(m2)
                nxt[m2] = word + [name]
                if m2 in targets and m2 not in found:
                    found[m2] = word + [name]
        frontier = nxt
        if targets <= set(found):
            break
    for mat, word in found.items():
        assert sl2z_word_to_matrix(word) == mat
    return found


_WORD_LOOKUP = None


def _lookup():
    global _WORD_LOOKUP
    if _WORD_LOOKUP is None:
        _WORD_LOOKUP = _bounded_word_lookup()
    return _WORD_LOOKUP


def _power_word(base: str, k: int) -> list:
    """T_k or U_k expanded into |k| unit generator steps."""
    if k == 0:
        return []
    name = base + ("+1" if k > 0 else "-1")
    return [name] * abs(k)


def euclid_solve_with_trace(matrix) -> tuple[list, list]:
    """Solve like ``euclid_solve`` but also return the sequence of
    max(|a|, |b|) values bracketing the division steps, for monotonicity
    checks."""
    a, b, c, d = (int(v) for v in np.asarray(matrix).reshape(-1))
    if a * d - b * c != 1:
        raise DomainError("matrix determinant must be exactly 1")
    lookup = _lookup()
    peeled = []  # factors peeled off the right, innermost last
    maxima = []
    while a != 0 and b != 0 and max(abs(a), abs(b)) > 1:
        maxima.append(max(abs(a), abs(b)))
        if abs(a) >= abs(b):
            # right-multiply by U_{-k}: column 1 -= k * column 2
            if abs(b) == 1:
                k = (a - (1 if a > 0 else -1)) // b  # stop at +-1, not 0
            else:
                k = a // b
            a, c = a - k * b, c - k * d
            peeled.append(("U", k))
        else:
            # right-multiply by T_{-k}: column 2 -= k * column 1
            if abs(a) == 1:
                k = (b - (1 if b > 0 else -1)) // a
            else:
                k = b // a
            b, d = b - k * a, d - k * c
            peeled.append(("T", k))
    maxima.append(max(abs(a), abs(b)))
    if a != 0 and b != 0:  # both entries are units: one exact T-peel zeroes b
        k = b * a  # equals b / a for a, b in {-1, +1}
        b, d = b - k * a, d - k * c
        peeled.append(("T", k))
    if b == 0:
        # a d = 1, so a = d = +-1 and the matrix is +-(U_1)^c
        word = []
        if a == -1:
            word.extend(lookup[(-1, 0, 0, -1)])
            c = -c
        word.extend(_power_word("U", c))
    else:
        # a = 0, -b c = 1: [[0, 1], [-1, d]] = S T_{-d}, [[0, -1], [1, d]] = S^-1 T_d
        if b == 1:
            word = list(lookup[(0, 1, -1, 0)]) + _power_word("T", -d)
        else:
            word = list(lookup[(0, -1, 1, 0)]) + _power_word("T", d)
    for kind, k in reversed(peeled):
        word.extend(_power_word(kind, k))
    return word, maxima


def euclid_solve(matrix) -> list:
    """Word over {T+1, T-1, U+1, U-1} whose exact product is ``matrix``.

    Arbitrary-precision reduction of the top row by the Euclidean algorithm;
    each division step strictly decreases max(|a|, |b|).
    """
    word, _ = euclid_solve_with_trace(matrix)
    return word
