"""Cayley graphs of groups and group actions with invertible generator sets.

Four families are provided:

- ``cube3``: 3x3x3 cube in the quarter-turn metric (12 generators), cubelet
  permutation + orientation state, facet one-hot features.
- ``cube2``: 2x2x2 cube with one corner fixed to quotient out whole-cube
  rotations (6 generators, 3,674,160 states, small enough for exact BFS).
- ``sl2p``: SL2(Z_p) with generators T(+-1), U(+-1) acting by right
  multiplication.
- ``generic-perm``: any permutation group given by a generator file.

States are small integer numpy vectors; all operations are pure and safe to
call concurrently. Batched variants operate on ``(B, state_len)`` matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, EncodingError, FormatError


@dataclass(frozen=True)
class GeneratorSet:
    """Labelled generators with an involutive inverse pairing."""

    names: tuple[str, ...]
    inverse_of: np.ndarray  # int array, inverse_of[inverse_of[a]] == a

    def __post_init__(self):
        inv = np.asarray(self.inverse_of, dtype=np.int64)
        object.__setattr__(self, "inverse_of", inv)
        if len(self.names) != len(inv):
            raise DomainError("generator names and inverse table length mismatch")
        if sorted(inv.tolist()) != list(range(len(inv))):
            raise DomainError("inverse table is not a permutation of generator indices")
        if not np.array_equal(inv[inv], np.arange(len(inv))):
            raise DomainError("inverse table is not an involution")

    @property
    def count(self) -> int:
        return len(self.names)


class CayleyGraph:
    """Base class: a graph family instance (generators, goal set, features)."""

    family: str = "abstract"

    def __init__(self, generators: GeneratorSet, goal_states: np.ndarray,
                 state_dtype=np.int16):
        self.generators = generators
        self.state_dtype = state_dtype
        goals = np.atleast_2d(np.asarray(goal_states, dtype=state_dtype))
        if goals.shape[0] == 0:
            raise DomainError("goal set must be non-empty")
        self.goal_states = goals
        self.state_len = goals.shape[1]
        keys = [g.tobytes() for g in goals]
        if len(set(keys)) != len(keys):
            raise DomainError("goal set states must be pairwise distinct")
        self._goal_keys = frozenset(keys)
        for g in goals:
            self.validate_state(g)

    # -- family hooks -------------------------------------------------------

    def _apply_batch(self, X: np.ndarray, a: int) -> np.ndarray:
        raise NotImplementedError

    def encode_batch(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def validate_state(self, x: np.ndarray) -> None:
        raise NotImplementedError

    @property
    def feature_dim(self) -> int:
        raise NotImplementedError

    @property
    def state_count(self) -> int | None:
        """Exact number of valid encodings, when known in closed form."""
        return None

    @property
    def rank_space(self) -> int | None:
        """Size of the perfect-rank index space, or None if unranked."""
        return None

    def rank_batch(self, X: np.ndarray) -> np.ndarray:
        raise DomainError(f"family {self.family} has no perfect state rank")

    def unrank_batch(self, ranks: np.ndarray) -> np.ndarray:
        raise DomainError(f"family {self.family} has no perfect state rank")

    def uniform_random_state(self, rng: np.random.Generator) -> np.ndarray:
        raise DomainError(f"family {self.family} cannot sample uniform states directly")

    # -- shared operations ---------------------------------------------------

    @property
    def n_generators(self) -> int:
        return self.generators.count

    def apply(self, x: np.ndarray, a: int) -> np.ndarray:
        """Follow edge ``a`` from ``x``; validates its inputs."""
        if not 0 <= a < self.n_generators:
            raise DomainError(f"generator index {a} out of range [0, {self.n_generators})")
        x = np.asarray(x, dtype=self.state_dtype)
        self.validate_state(x)
        return self._apply_batch(x[None, :], int(a))[0]

    def apply_batch(self, X: np.ndarray, a: int) -> np.ndarray:
        """Apply one generator to every row; no per-row validation."""
        if not 0 <= a < self.n_generators:
            raise DomainError(f"generator index {a} out of range [0, {self.n_generators})")
        return self._apply_batch(np.asarray(X, dtype=self.state_dtype), int(a))

    def apply_mixed(self, X: np.ndarray, A: np.ndarray) -> np.ndarray:
        """Apply generator A[i] to row X[i]."""
        X = np.asarray(X, dtype=self.state_dtype)
        A = np.asarray(A)
        out = np.empty_like(X)
        for a in range(self.n_generators):
            mask = A == a
            if mask.any():
                out[mask] = self._apply_batch(X[mask], a)
        return out

    def apply_word(self, x: np.ndarray, word) -> np.ndarray:
        y = np.asarray(x, dtype=self.state_dtype)[None, :]
        for a in word:
            y = self._apply_batch(y, int(a))
        return y[0]

    def neighbors_batch(self, X: np.ndarray) -> np.ndarray:
        """All successors of each row: shape (B, n_generators, state_len)."""
        X = np.asarray(X, dtype=self.state_dtype)
        out = np.empty((X.shape[0], self.n_generators, X.shape[1]), dtype=self.state_dtype)
        for a in range(self.n_generators):
            out[:, a, :] = self._apply_batch(X, a)
        return out

    def encode(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=self.state_dtype)
        self.validate_state(x)
        return self.encode_batch(x[None, :])[0]

    def state_key(self, x: np.ndarray) -> bytes:
        return np.asarray(x, dtype=self.state_dtype).tobytes()

    def is_goal(self, x: np.ndarray) -> bool:
        return self.state_key(x) in self._goal_keys

    def random_goal(self, rng: np.random.Generator) -> np.ndarray:
        return self.goal_states[rng.integers(self.goal_states.shape[0])].copy()

    def scramble(self, rng: np.random.Generator, n_max: int) -> np.ndarray:
        """Apply k ~ U{0..n_max} uniform random generators to a random goal."""
        if n_max < 0:
            raise DomainError("n_max must be >= 0")
        x = self.random_goal(rng)
        k = int(rng.integers(0, n_max + 1))
        for _ in range(k):
            a = int(rng.integers(self.n_generators))
            x = self._apply_batch(x[None, :], a)[0]
        return x

    def parse_state(self, text: str) -> np.ndarray:
        """Parse a comma- or whitespace-separated integer vector."""
        parts = text.replace(",", " ").split()
        try:
            vec = np.array([int(p) for p in parts], dtype=self.state_dtype)
        except ValueError as e:
            raise EncodingError(f"cannot parse state {text!r}: {e}") from None
        self.validate_state(vec)
        return vec


def _one_hot_rows(cols: np.ndarray, width: int) -> np.ndarray:
    """Scatter 1.0 at (row, cols[row, k]) into a (B, width) float32 matrix."""
    B = cols.shape[0]
    out = np.zeros((B, width), dtype=np.float32)
    out[np.arange(B)[:, None], cols] = 1.0
    return out


class PermutationActionGraph(CayleyGraph):
    """Generators act by gathering columns and adding per-column offsets.

    ``new[i] = (old[gather[a][i]] + add[a][i]) mod m`` with the modulus applied
    only on the column spans listed in ``mod_spans`` (orientation coordinates).
    Covers both puzzle cubes and plain permutation groups.
    """

    def __init__(self, generators, goal_states, gather, add=None, mod_spans=(),
                 state_dtype=np.int16):
        self._gather = np.asarray(gather, dtype=np.int64)
        if add is None:
            add = np.zeros_like(self._gather)
        self._add = np.asarray(add, dtype=state_dtype)
        self._mod_spans = tuple(mod_spans)
        super().__init__(generators, goal_states, state_dtype)

    def _apply_batch(self, X, a):
        Y = X[:, self._gather[a]] + self._add[a]
        for span, m in self._mod_spans:
            Y[:, span] %= m
        return Y


class GenericPermutationGraph(PermutationActionGraph):
    """Permutation group acting on positions 0..n-1; state = label layout."""

    family = "generic-perm"

    def __init__(self, perms, names, goal_states=None, params=None):
        perms = np.asarray(perms, dtype=np.int64)
        n = perms.shape[1]
        self.degree = n
        names, perms, inverse_of = _close_under_inverse(list(names), perms)
        gens = GeneratorSet(tuple(names), inverse_of)
        if goal_states is None:
            goal_states = np.arange(n, dtype=np.int16)[None, :]
        self.params = dict(params or {})
        super().__init__(gens, goal_states, gather=perms)

    @property
    def feature_dim(self) -> int:
        return self.degree * self.degree

    def encode_batch(self, X):
        cols = np.arange(self.degree) * self.degree + X
        return _one_hot_rows(cols, self.feature_dim)

    def validate_state(self, x):
        x = np.asarray(x)
        if x.shape != (self.degree,):
            raise EncodingError(f"state length {x.shape} != ({self.degree},)")
        if not np.array_equal(np.sort(x), np.arange(self.degree)):
            raise EncodingError("state is not a permutation of 0..n-1")


def _close_under_inverse(names, perms):
    """Append missing inverse permutations and build the pairing table."""
    seen = {}
    for i, p in enumerate(perms):
        key = tuple(p.tolist())
        if key in seen:
            raise FormatError(f"duplicate generator {names[i]!r} (same permutation as {names[seen[key]]!r})")
        seen[key] = i
    perm_list = [p for p in perms]
    inverse_of = [-1] * len(perm_list)
    i = 0
    while i < len(perm_list):
        if inverse_of[i] >= 0:
            i += 1
            continue
        inv = np.argsort(perm_list[i])
        key = tuple(inv.tolist())
        if key in seen:
            j = seen[key]
            inverse_of[i], inverse_of[j] = j, i
        else:
            perm_list.append(inv)
            names.append(names[i] + "'")
            seen[key] = len(perm_list) - 1
            inverse_of[i] = len(perm_list) - 1
            inverse_of.append(i)
        i += 1
    return names, np.asarray(perm_list, dtype=np.int64), np.asarray(inverse_of)


# ---------------------------------------------------------------------------
# Cube moves (cubelet permutation + orientation, replacement convention:
# slot i receives the cubelet from slot cp[i] and gains co[i] extra twist).
# ---------------------------------------------------------------------------

_CORNER_MOVES = {
    "U": ([3, 0, 1, 2, 4, 5, 6, 7], [0, 0, 0, 0, 0, 0, 0, 0]),
    "R": ([4, 1, 2, 0, 7, 5, 6, 3], [2, 0, 0, 1, 1, 0, 0, 2]),
    "F": ([1, 5, 2, 3, 0, 4, 6, 7], [1, 2, 0, 0, 2, 1, 0, 0]),
    "D": ([0, 1, 2, 3, 5, 6, 7, 4], [0, 0, 0, 0, 0, 0, 0, 0]),
    "L": ([0, 2, 6, 3, 4, 1, 5, 7], [0, 1, 2, 0, 0, 2, 1, 0]),
    "B": ([0, 1, 3, 7, 4, 5, 2, 6], [0, 0, 1, 2, 0, 0, 2, 1]),
}

_EDGE_MOVES = {
    "U": ([3, 0, 1, 2, 4, 5, 6, 7, 8, 9, 10, 11], [0] * 12),
    "R": ([8, 1, 2, 3, 11, 5, 6, 7, 4, 9, 10, 0], [0] * 12),
    "F": ([0, 9, 2, 3, 4, 8, 6, 7, 1, 5, 10, 11], [0, 1, 0, 0, 0, 1, 0, 0, 1, 1, 0, 0]),
    "D": ([0, 1, 2, 3, 5, 6, 7, 4, 8, 9, 10, 11], [0] * 12),
    "L": ([0, 1, 10, 3, 4, 5, 9, 7, 8, 2, 6, 11], [0] * 12),
    "B": ([0, 1, 2, 11, 4, 5, 6, 10, 8, 9, 3, 7], [0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 1, 1]),
}


def _invert_piece_move(perm, ori, modulus):
    perm = np.asarray(perm)
    inv_perm = np.argsort(perm)
    inv_ori = (-np.asarray(ori)[inv_perm]) % modulus
    return inv_perm, inv_ori


def _piece_move_to_gather(perm, ori, base_perm, base_ori, modulus):
    """Translate (perm, ori) of one piece kind into gather/add columns."""
    n = len(perm)
    gather = np.concatenate([base_perm + np.asarray(perm),
                             base_ori + np.asarray(perm)])
    add = np.concatenate([np.zeros(n, dtype=np.int64), np.asarray(ori)])
    return gather, add


class CubeGraph(PermutationActionGraph):
    """Shared facet one-hot feature encoding for the cube families."""

    def __init__(self, generators, goal, gather, add, mod_spans, n_corners,
                 n_edges):
        self.n_corners = n_corners
        self.n_edges = n_edges
        self.n_facets = 3 * n_corners + 2 * n_edges
        super().__init__(generators, goal, gather, add, mod_spans,
                         state_dtype=np.int8)

    @property
    def feature_dim(self) -> int:
        return self.n_facets * self.n_facets

    def facet_labels(self, X: np.ndarray) -> np.ndarray:
        """Label sitting at each facet position: shape (B, n_facets).

        Corner position (slot i, sticker j) holds label 3*cp[i] + (j - co[i]) % 3;
        edge positions use the same scheme with 2 stickers. This is the unique
        facet permutation the cubelet state induces.
        """
        nc, ne = self.n_corners, self.n_edges
        cp = X[:, :nc].astype(np.int64)
        co = X[:, nc:2 * nc].astype(np.int64)
        j = np.arange(3)
        corner = 3 * cp[:, :, None] + (j[None, None, :] - co[:, :, None]) % 3
        parts = [corner.reshape(X.shape[0], 3 * nc)]
        if ne:
            ep = X[:, 2 * nc:2 * nc + ne].astype(np.int64)
            eo = X[:, 2 * nc + ne:].astype(np.int64)
            k = np.arange(2)
            edge = 3 * nc + 2 * ep[:, :, None] + (k[None, None, :] - eo[:, :, None]) % 2
            parts.append(edge.reshape(X.shape[0], 2 * ne))
        return np.concatenate(parts, axis=1)

    def encode_batch(self, X):
        labels = self.facet_labels(np.asarray(X, dtype=self.state_dtype))
        cols = np.arange(self.n_facets) * self.n_facets + labels
        return _one_hot_rows(cols, self.feature_dim)

    def _validate_pieces(self, x):
        nc, ne = self.n_corners, self.n_edges
        x = np.asarray(x)
        if x.shape != (2 * nc + 2 * ne,):
            raise EncodingError(f"state length {x.shape} != ({2 * nc + 2 * ne},)")
        if not np.array_equal(np.sort(x[:nc]), np.arange(nc)):
            raise EncodingError("corner permutation invalid")
        if np.any(x[nc:2 * nc] < 0) or np.any(x[nc:2 * nc] > 2):
            raise EncodingError("corner orientation out of range")
        if ne:
            if not np.array_equal(np.sort(x[2 * nc:2 * nc + ne]), np.arange(ne)):
                raise EncodingError("edge permutation invalid")
            eo = x[2 * nc + ne:]
            if np.any(eo < 0) or np.any(eo > 1):
                raise EncodingError("edge orientation out of range")


class Cube3Graph(CubeGraph):
    family = "cube3"

    def __init__(self):
        names, gathers, adds = _build_cube_moves(
            faces="URFDLB", with_edges=True)
        inverse_of = _adjacent_inverse_pairs(len(names))
        goal = np.concatenate([np.arange(8), np.zeros(8, dtype=np.int64),
                               np.arange(12), np.zeros(12, dtype=np.int64)])
        mod_spans = ((slice(8, 16), 3), (slice(28, 40), 2))
        super().__init__(GeneratorSet(tuple(names), inverse_of), goal[None, :],
                         gathers, adds, mod_spans, n_corners=8, n_edges=12)

    @property
    def state_count(self):
        return 43_252_003_274_489_856_000

    def validate_state(self, x):
        self._validate_pieces(x)

    def uniform_random_state(self, rng: np.random.Generator) -> np.ndarray:
        """Uniform over the solvable orbit (matching parity, zero-sum twists)."""
        cp = rng.permutation(8)
        ep = rng.permutation(12)
        if _permutation_parity(cp) != _permutation_parity(ep):
            ep[[0, 1]] = ep[[1, 0]]
        co = rng.integers(0, 3, size=8)
        co[7] = (-co[:7].sum()) % 3
        eo = rng.integers(0, 2, size=12)
        eo[11] = (-eo[:11].sum()) % 2
        return np.concatenate([cp, co, ep, eo]).astype(self.state_dtype)


class Cube2Graph(CubeGraph):
    """2x2x2 with the DBL corner pinned; only U/R/F twists keep it fixed."""

    family = "cube2"

    _MOVABLE = np.array([0, 1, 2, 3, 4, 5, 7])
    _FACT = np.array([720, 120, 24, 6, 2, 1, 1], dtype=np.int64)
    _POW3 = 3 ** np.arange(6, dtype=np.int64)

    def __init__(self):
        names, gathers, adds = _build_cube_moves(faces="URF", with_edges=False)
        inverse_of = _adjacent_inverse_pairs(len(names))
        goal = np.concatenate([np.arange(8), np.zeros(8, dtype=np.int64)])
        mod_spans = ((slice(8, 16), 3),)
        super().__init__(GeneratorSet(tuple(names), inverse_of), goal[None, :],
                         gathers, adds, mod_spans, n_corners=8, n_edges=0)

    @property
    def state_count(self):
        return 3_674_160  # 7! * 3^6

    @property
    def rank_space(self):
        return 3_674_160

    def validate_state(self, x):
        self._validate_pieces(x)
        if x[6] != 6 or x[8 + 6] != 0:
            raise EncodingError("fixed corner (slot 6) must hold cubelet 6 untwisted")
        if int(x[8:16].sum()) % 3 != 0:
            raise EncodingError("corner twist sum must be 0 mod 3")

    def rank_batch(self, X):
        X = np.asarray(X, dtype=np.int64)
        perm = X[:, self._MOVABLE]
        perm = perm - (perm > 6)  # relabel 7 -> 6 so entries are 0..6
        lehmer = np.zeros(X.shape[0], dtype=np.int64)
        for i in range(6):
            smaller_later = (perm[:, i + 1:] < perm[:, i:i + 1]).sum(axis=1)
            lehmer += smaller_later * self._FACT[i]
        ori = (X[:, 8 + self._MOVABLE[:6]] * self._POW3).sum(axis=1)
        return lehmer * 729 + ori

    def unrank_batch(self, ranks):
        ranks = np.asarray(ranks, dtype=np.int64)
        B = ranks.shape[0]
        lehmer, ori = np.divmod(ranks, 729)
        X = np.zeros((B, 16), dtype=self.state_dtype)
        X[:, 6] = 6
        # decode the Lehmer code back into a permutation of 0..6
        digits = np.empty((B, 7), dtype=np.int64)
        rem = lehmer
        for i in range(7):
            digits[:, i], rem = np.divmod(rem, self._FACT[i])
        for b in range(B):
            avail = list(range(7))
            for i, slot in enumerate(self._MOVABLE):
                v = avail.pop(int(digits[b, i]))
                X[b, slot] = v + (v >= 6)  # relabel 6 -> 7
        od = ori
        for k in range(6):
            X[:, 8 + self._MOVABLE[k]] = od % 3
            od = od // 3
        X[:, 8 + 7] = (-X[:, 8:15].sum(axis=1)) % 3
        return X

    def uniform_random_state(self, rng: np.random.Generator) -> np.ndarray:
        return self.unrank_batch(rng.integers(self.rank_space, size=1))[0]


def _build_cube_moves(faces: str, with_edges: bool):
    """Quarter-turn generator list [F, F', ...] in gather/add column form."""
    names, gathers, adds = [], [], []
    nc = 8
    for f in faces:
        cperm, cori = _CORNER_MOVES[f]
        variants = [(f, cperm, cori)]
        iperm, iori = _invert_piece_move(cperm, cori, 3)
        variants.append((f + "'", iperm, iori))
        for name, p, o in variants:
            g_c, a_c = _piece_move_to_gather(p, o, 0, nc, 3)
            if with_edges:
                eperm, eori = _EDGE_MOVES[f]
                if name.endswith("'"):
                    eperm, eori = _invert_piece_move(eperm, eori, 2)
                g_e, a_e = _piece_move_to_gather(eperm, eori, 2 * nc, 2 * nc + 12, 2)
                g = np.concatenate([g_c, g_e])
                a = np.concatenate([a_c, a_e])
            else:
                g, a = g_c, a_c
            names.append(name)
            gathers.append(g)
            adds.append(a)
    return names, np.asarray(gathers), np.asarray(adds)


def _adjacent_inverse_pairs(n: int) -> np.ndarray:
    inv = np.arange(n)
    inv[0::2] += 1
    inv[1::2] -= 1
    return inv


def _permutation_parity(perm) -> int:
    perm = np.asarray(perm)
    n = len(perm)
    inversions = sum(int(np.sum(perm[i + 1:] < perm[i])) for i in range(n))
    return inversions % 2


def orbit_invariant(graph: CayleyGraph, x: np.ndarray) -> tuple[int, int, int]:
    """Conserved quantities separating the 12 components of the cube3 action:
    (corner twist sum mod 3, edge flip sum mod 2, corner/edge parity bit)."""
    if graph.family != "cube3":
        raise DomainError(f"orbit_invariant is defined for cube3, not {graph.family}")
    x = np.asarray(x)
    graph.validate_state(x)
    twist = int(x[8:16].sum()) % 3
    flip = int(x[28:40].sum()) % 2
    parity = _permutation_parity(x[:8]) ^ _permutation_parity(x[16:28])
    return (twist, flip, parity)


# ---------------------------------------------------------------------------
# SL2(Z_p)
# ---------------------------------------------------------------------------

class SL2Graph(CayleyGraph):
    """SL2(Z_p) with S = {T(+1), T(-1), U(+1), U(-1)}, right multiplication.

    State is the flattened matrix (a, b, c, d) reduced mod p. Each generator
    is a linear map on that vector, applied as an integer matmul mod p.
    """

    family = "sl2p"
    GENERATOR_NAMES = ("T+1", "T-1", "U+1", "U-1")

    def __init__(self, p: int):
        if p < 2:
            raise DomainError("p must be >= 2")
        self.p = int(p)
        # columns of each 4x4 map give the new (a, b, c, d) in terms of the old
        T1 = [[1, 1, 0, 0], [0, 1, 0, 0], [0, 0, 1, 1], [0, 0, 0, 1]]
        Tm = [[1, -1, 0, 0], [0, 1, 0, 0], [0, 0, 1, -1], [0, 0, 0, 1]]
        U1 = [[1, 0, 0, 0], [1, 1, 0, 0], [0, 0, 1, 0], [0, 0, 1, 1]]
        Um = [[1, 0, 0, 0], [-1, 1, 0, 0], [0, 0, 1, 0], [0, 0, -1, 1]]
        self._maps = np.asarray([T1, Tm, U1, Um], dtype=np.int64)
        gens = GeneratorSet(self.GENERATOR_NAMES, np.array([1, 0, 3, 2]))
        identity = np.array([1, 0, 0, 1], dtype=np.int16)
        super().__init__(gens, identity[None, :], state_dtype=np.int16)

    def _apply_batch(self, X, a):
        Y = (X.astype(np.int64) @ self._maps[a]) % self.p
        return Y.astype(self.state_dtype)

    @property
    def feature_dim(self) -> int:
        return 4 * self.p

    def encode_batch(self, X):
        offsets = np.arange(4) * self.p
        cols = offsets[None, :] + np.asarray(X, dtype=np.int64)
        return _one_hot_rows(cols, self.feature_dim)

    def validate_state(self, x):
        x = np.asarray(x)
        if x.shape != (4,):
            raise EncodingError(f"state length {x.shape} != (4,)")
        if np.any(x < 0) or np.any(x >= self.p):
            raise EncodingError(f"entries must lie in [0, {self.p})")
        a, b, c, d = (int(v) for v in x)
        if (a * d - b * c) % self.p != 1:
            raise EncodingError("determinant must be 1 mod p")

    @property
    def state_count(self):
        return self.p * (self.p * self.p - 1)

    @property
    def rank_space(self):
        return self.p ** 4

    def rank_batch(self, X):
        X = np.asarray(X, dtype=np.int64)
        return ((X[:, 0] * self.p + X[:, 1]) * self.p + X[:, 2]) * self.p + X[:, 3]

    def unrank_batch(self, ranks):
        ranks = np.asarray(ranks, dtype=np.int64)
        out = np.empty((ranks.shape[0], 4), dtype=self.state_dtype)
        rem = ranks
        for i in (3, 2, 1, 0):
            out[:, i] = rem % self.p
            rem = rem // self.p
        return out

    def uniform_random_state(self, rng: np.random.Generator) -> np.ndarray:
        while True:
            cand = rng.integers(0, self.p, size=4)
            if (cand[0] * cand[3] - cand[1] * cand[2]) % self.p == 1:
                return cand.astype(self.state_dtype)


# ---------------------------------------------------------------------------
# Constructors and generator files
# ---------------------------------------------------------------------------

def cube3_graph() -> Cube3Graph:
    return Cube3Graph()


def cube2_graph() -> Cube2Graph:
    return Cube2Graph()


def sl2p_graph(p: int) -> SL2Graph:
    return SL2Graph(p)


def cyclic_graph(n: int) -> GenericPermutationGraph:
    """Cyclic group Z_n as a permutation graph with the +-1 shift generators."""
    if n < 3:
        raise DomainError("cyclic graph needs n >= 3 for distinct inverse shifts")
    shift = np.roll(np.arange(n), -1)
    return GenericPermutationGraph([shift], ["s"], params={"n": n})


def load_generator_file(path) -> GenericPermutationGraph:
    """Read a generic-perm generator file.

    Line 1: the permutation degree n. Each later non-empty line: a name token
    followed by n space-separated 0-based images. Missing inverses are added
    automatically with a trailing apostrophe.
    """
    names, perms = [], []
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise FormatError(f"{path}: empty generator file")
    try:
        n = int(lines[0])
    except ValueError:
        raise FormatError(f"{path}: first line must be the permutation degree") from None
    for ln in lines[1:]:
        toks = ln.split()
        if len(toks) != n + 1:
            raise FormatError(f"{path}: expected name + {n} images, got {len(toks)} tokens")
        name = toks[0]
        try:
            perm = np.array([int(t) for t in toks[1:]], dtype=np.int64)
        except ValueError:
            raise FormatError(f"{path}: non-integer image in line {ln!r}") from None
        if not np.array_equal(np.sort(perm), np.arange(n)):
            raise FormatError(f"{path}: line {ln!r} is not a permutation of 0..{n - 1}")
        names.append(name)
        perms.append(perm)
    if not perms:
        raise FormatError(f"{path}: no generators")
    return GenericPermutationGraph(perms, names, params={"file": str(path)})


def load_goal_file(path, graph: CayleyGraph) -> np.ndarray:
    """Read one state per line (comma or whitespace separated integers)."""
    states = []
    with open(path) as fh:
        for ln in fh:
            ln = ln.strip()
            if ln:
                states.append(graph.parse_state(ln))
    if not states:
        raise FormatError(f"{path}: no goal states")
    return np.stack(states)


_FAMILY_BUILDERS = {
    "cube3": lambda **kw: cube3_graph(),
    "cube2": lambda **kw: cube2_graph(),
    "sl2p": lambda **kw: sl2p_graph(kw["p"]),
}


def build_graph(family: str, p: int | None = None, generator_file=None,
                goal_file=None) -> CayleyGraph:
    """Construct a graph instance from config-style parameters."""
    if family == "sl2p":
        if p is None:
            raise DomainError("sl2p requires parameter p")
        g = sl2p_graph(p)
    elif family == "generic-perm":
        if generator_file is None:
            raise DomainError("generic-perm requires a generator file")
        g = load_generator_file(generator_file)
    elif family in _FAMILY_BUILDERS:
        g = _FAMILY_BUILDERS[family]()
    else:
        raise DomainError(f"unknown graph family {family!r}")
    if goal_file is not None:
        goals = load_goal_file(goal_file, g)
        g = _with_goals(g, goals)
    return g


def _with_goals(graph: CayleyGraph, goals: np.ndarray) -> CayleyGraph:
    graph.goal_states = np.atleast_2d(np.asarray(goals, dtype=graph.state_dtype))
    keys = [g.tobytes() for g in graph.goal_states]
    if len(set(keys)) != len(keys):
        raise DomainError("goal set states must be pairwise distinct")
    graph._goal_keys = frozenset(keys)
    for g in graph.goal_states:
        graph.validate_state(g)
    return graph
