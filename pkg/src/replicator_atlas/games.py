"""Game families: linear congestion games and network coordination games.

Both families reduce to the same affine structure.  Flatten every
(player, strategy) pair into one index ``k`` in ``0..M-1``; the expected
cost (or utility) of pure strategy ``k`` against a mixed profile ``p`` is

    v = base + p @ interaction

with a symmetric ``interaction`` matrix whose same-player blocks are zero.
The replicator field, the potential and all equilibrium checks are written
against that form, so they work for either family and vectorize over a
leading batch axis.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterator, Sequence, Union

import numpy as np

from .errors import ConstructionError, DimensionError, DomainError

PROB_TOL = 1e-9
SYMMETRY_TOL = 1e-9


# ---------------------------------------------------------------------------
# Profiles
# ---------------------------------------------------------------------------


def _offsets(shape: Sequence[int]) -> np.ndarray:
    return np.concatenate(([0], np.cumsum(shape)[:-1])).astype(np.intp)


@dataclass(frozen=True, eq=False)
class MixedProfile:
    """One probability vector per player, stored as a single flat array."""

    flat: np.ndarray
    shape: tuple[int, ...]

    def __post_init__(self) -> None:
        shape = tuple(int(k) for k in self.shape)
        flat = np.array(self.flat, dtype=float).reshape(-1)
        if any(k < 1 for k in shape):
            raise DimensionError(f"strategy counts must be positive, got {shape}")
        if flat.size != sum(shape):
            raise DimensionError(
                f"profile has {flat.size} entries but shape {shape} needs {sum(shape)}"
            )
        if not np.all(np.isfinite(flat)):
            raise DomainError("profile has non-finite entries")
        if flat.size and (flat.min() < 0.0 or flat.max() > 1.0):
            raise DomainError("profile entries must lie in [0, 1]")
        sums = np.add.reduceat(flat, _offsets(shape)) if shape else np.zeros(0)
        bad = np.flatnonzero(np.abs(sums - 1.0) > PROB_TOL)
        if bad.size:
            i = int(bad[0])
            raise DomainError(f"player {i} probabilities sum to {sums[i]!r}, not 1")
        flat.setflags(write=False)
        object.__setattr__(self, "flat", flat)
        object.__setattr__(self, "shape", shape)

    @classmethod
    def from_vectors(cls, vectors: Sequence[Sequence[float]]) -> "MixedProfile":
        vecs = [np.asarray(v, dtype=float).reshape(-1) for v in vectors]
        flat = np.concatenate(vecs) if vecs else np.zeros(0)
        return cls(flat, tuple(len(v) for v in vecs))

    @classmethod
    def pure(cls, shape: Sequence[int], choices: Sequence[int]) -> "MixedProfile":
        if len(choices) != len(shape):
            raise DimensionError("one choice per player required")
        flat = np.zeros(sum(shape))
        for off, k, c in zip(_offsets(shape), shape, choices):
            if not 0 <= c < k:
                raise DimensionError(f"strategy {c} out of range for {k} strategies")
            flat[off + c] = 1.0
        return cls(flat, tuple(shape))

    @classmethod
    def uniform(cls, shape: Sequence[int]) -> "MixedProfile":
        return cls.from_vectors([np.full(k, 1.0 / k) for k in shape])

    @property
    def player_count(self) -> int:
        return len(self.shape)

    @property
    def offsets(self) -> np.ndarray:
        return _offsets(self.shape)

    def player(self, i: int) -> np.ndarray:
        off = int(self.offsets[i])
        return self.flat[off : off + self.shape[i]]

    def vectors(self) -> list[np.ndarray]:
        return [self.player(i) for i in range(len(self.shape))]

    def support(self, i: int, tol: float = 0.0) -> np.ndarray:
        return np.flatnonzero(self.player(i) > tol)

    def is_pure(self, tol: float = 0.0) -> bool:
        return all(self.support(i, tol).size == 1 for i in range(len(self.shape)))

    def pure_choices(self, tol: float = 0.0) -> tuple[int, ...] | None:
        if not self.is_pure(tol):
            return None
        return tuple(int(self.support(i, tol)[0]) for i in range(len(self.shape)))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MixedProfile):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.flat, other.flat)

    def __hash__(self) -> int:
        return hash((self.shape, self.flat.tobytes()))

    def __repr__(self) -> str:
        vecs = ", ".join(np.array2string(v, precision=6) for v in self.vectors())
        return f"MixedProfile({vecs})"


# ---------------------------------------------------------------------------
# Shared affine form
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LinearForm:
    """Affine map from a profile to per-strategy values.

    ``sign`` is -1 for cost games and +1 for utility games, so that the
    replicator field is always ``sign * p * (v - v_avg)``.
    """

    shape: tuple[int, ...]
    base: np.ndarray
    interaction: np.ndarray
    sign: float

    @property
    def offsets(self) -> np.ndarray:
        return _offsets(self.shape)

    @property
    def owner(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.shape)), self.shape)

    def values(self, P: np.ndarray) -> np.ndarray:
        return self.base + P @ self.interaction

    def player_sums(self, X: np.ndarray) -> np.ndarray:
        return np.add.reduceat(X, self.offsets, axis=-1)

    def averages(self, P: np.ndarray, V: np.ndarray) -> np.ndarray:
        return self.player_sums(P * V)

    def potential(self, P: np.ndarray) -> np.ndarray:
        # cost: 2 p.base + p.K.p ; utility: p.U.p  (gradient is 2v in both cases)
        # utility games carry a zero base, so this is p.U.p there
        quad = np.einsum("...m,...m->...", P, P @ self.interaction)
        return 2.0 * (P @ self.base) + quad


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# Congestion games
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CongestionGame:
    """Linear congestion game with resource costs ``c_e(x) = a_e * x + b_e``."""

    resources: tuple[tuple[float, float], ...]
    strategies: tuple[tuple[tuple[int, ...], ...], ...]
    form: LinearForm = field(init=False, repr=False, compare=False)

    kind = "cost"

    def __post_init__(self) -> None:
        resources = tuple((float(a), float(b)) for a, b in self.resources)
        for e, (a, b) in enumerate(resources):
            if not (np.isfinite(a) and np.isfinite(b)) or a < 0 or b < 0:
                raise ConstructionError(f"resource {e}: coefficients must be finite and >= 0")
        if not self.strategies:
            raise ConstructionError("a congestion game needs at least one player")
        strategies = []
        for i, sset in enumerate(self.strategies):
            normalized = []
            for s in sset:
                s = [int(e) for e in s]
                if len(set(s)) != len(s):
                    raise ConstructionError(f"player {i}: strategy {s} repeats a resource")
                for e in s:
                    if not 0 <= e < len(resources):
                        raise ConstructionError(f"player {i}: unknown resource {e}")
                normalized.append(tuple(sorted(s)))
            if len(normalized) < 2:
                raise ConstructionError(f"player {i} needs at least 2 strategies")
            if len(set(normalized)) != len(normalized):
                raise ConstructionError(f"player {i} has duplicate strategies")
            strategies.append(tuple(normalized))
        object.__setattr__(self, "resources", resources)
        object.__setattr__(self, "strategies", tuple(strategies))
        object.__setattr__(self, "form", self._build_form())

    def _build_form(self) -> LinearForm:
        shape = self.shape
        a = np.array([r[0] for r in self.resources])
        b = np.array([r[1] for r in self.resources])
        incidence = np.zeros((sum(shape), len(self.resources)))
        k = 0
        for sset in self.strategies:
            for s in sset:
                incidence[k, list(s)] = 1.0
                k += 1
        interaction = (incidence * a) @ incidence.T
        for off, n in zip(_offsets(shape), shape):
            interaction[off : off + n, off : off + n] = 0.0
        base = incidence @ (a + b)
        return LinearForm(shape, _freeze(base), _freeze(interaction), -1.0)

    @property
    def player_count(self) -> int:
        return len(self.strategies)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.strategies)

    def strategy_names(self, i: int) -> list[str]:
        return ["+".join(f"e{e}" for e in s) or "empty" for s in self.strategies[i]]

    def loads(self, choices: Sequence[int]) -> np.ndarray:
        load = np.zeros(len(self.resources))
        for i, c in enumerate(choices):
            load[list(self.strategies[i][c])] += 1.0
        return load


# ---------------------------------------------------------------------------
# Network coordination games
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoordinationEdge:
    """Edge ``(i, j)`` whose matrix is indexed [strategy of i, strategy of j]."""

    i: int
    j: int
    matrix: tuple[tuple[float, ...], ...]

    def __post_init__(self) -> None:
        m = tuple(tuple(float(x) for x in row) for row in self.matrix)
        object.__setattr__(self, "i", int(self.i))
        object.__setattr__(self, "j", int(self.j))
        object.__setattr__(self, "matrix", m)

    def array(self) -> np.ndarray:
        return np.array(self.matrix, dtype=float)


EdgeLike = Union[CoordinationEdge, tuple]


@dataclass(frozen=True)
class NetworkCoordinationGame:
    """Polymatrix coordination game: both endpoints of an edge earn ``A_ij[s_i, s_j]``."""

    vertex_count: int
    strategy_count: int
    edges: tuple[CoordinationEdge, ...]
    strategy_labels: tuple[str, ...] | None = None
    form: LinearForm = field(init=False, repr=False, compare=False)

    kind = "utility"

    def __post_init__(self) -> None:
        n, k = int(self.vertex_count), int(self.strategy_count)
        if n < 1:
            raise ConstructionError("vertex_count must be positive")
        if k < 2:
            raise ConstructionError("strategy_count must be at least 2")
        edges, seen = [], set()
        for e in self.edges:
            if not isinstance(e, CoordinationEdge):
                e = CoordinationEdge(*e)
            if e.i == e.j:
                raise ConstructionError(f"self-loop at vertex {e.i}")
            if not (0 <= e.i < n and 0 <= e.j < n):
                raise ConstructionError(f"edge ({e.i}, {e.j}) references a missing vertex")
            key = frozenset((e.i, e.j))
            if key in seen:
                raise ConstructionError(f"duplicate edge ({e.i}, {e.j})")
            seen.add(key)
            A = e.array()
            if A.shape != (k, k):
                raise ConstructionError(f"edge ({e.i}, {e.j}) matrix must be {k}x{k}")
            if not np.all(np.isfinite(A)):
                raise ConstructionError(f"edge ({e.i}, {e.j}) matrix has non-finite entries")
            edges.append(e)
        labels = self.strategy_labels
        if labels is not None:
            labels = tuple(str(s) for s in labels)
            if len(labels) != k:
                raise ConstructionError("strategy_labels must name every strategy")
        object.__setattr__(self, "vertex_count", n)
        object.__setattr__(self, "strategy_count", k)
        object.__setattr__(self, "edges", tuple(edges))
        object.__setattr__(self, "strategy_labels", labels)
        object.__setattr__(self, "form", self._build_form())

    def _build_form(self) -> LinearForm:
        n, k = self.vertex_count, self.strategy_count
        U = np.zeros((n * k, n * k))
        for e in self.edges:
            A = e.array()
            U[e.i * k : (e.i + 1) * k, e.j * k : (e.j + 1) * k] = A
            U[e.j * k : (e.j + 1) * k, e.i * k : (e.i + 1) * k] = A.T
        if not np.allclose(U, U.T, atol=SYMMETRY_TOL, rtol=0):
            raise ConstructionError("edge payoffs are not symmetric")
        return LinearForm((k,) * n, _freeze(np.zeros(n * k)), _freeze(U), 1.0)

    @property
    def player_count(self) -> int:
        return self.vertex_count

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.strategy_count,) * self.vertex_count

    def strategy_names(self, i: int) -> list[str]:
        if self.strategy_labels is not None:
            return list(self.strategy_labels)
        return [f"s{g}" for g in range(self.strategy_count)]

    def neighbors(self, i: int) -> list[int]:
        out = []
        for e in self.edges:
            if e.i == i:
                out.append(e.j)
            elif e.j == i:
                out.append(e.i)
        return sorted(out)

    def edge_matrix(self, i: int, j: int) -> np.ndarray:
        """Matrix indexed by [strategy of i, strategy of j]."""
        for e in self.edges:
            if (e.i, e.j) == (i, j):
                return e.array()
            if (e.j, e.i) == (i, j):
                return e.array().T
        raise KeyError((i, j))


Game = Union[CongestionGame, NetworkCoordinationGame]


def check_profile(game: Game, p: MixedProfile) -> None:
    if not isinstance(p, MixedProfile):
        raise DimensionError("expected a MixedProfile")
    if p.shape != game.shape:
        raise DimensionError(f"profile shape {p.shape} does not match game shape {game.shape}")


# ---------------------------------------------------------------------------
# Expectations and social objectives
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Expectations:
    """Per-strategy expected values and each player's average.

    ``kind`` is ``"cost"`` or ``"utility"``.
    """

    values: tuple[np.ndarray, ...]
    averages: np.ndarray
    kind: str


def expectations(game: Game, p: MixedProfile) -> Expectations:
    check_profile(game, p)
    V = game.form.values(p.flat)
    avg = game.form.averages(p.flat, V)
    offs = game.form.offsets
    values = tuple(V[o : o + k].copy() for o, k in zip(offs, game.shape))
    return Expectations(values, avg, game.kind)


def social_objective(game: Game, p: MixedProfile) -> float:
    """Social cost (cost games) or social welfare (utility games)."""
    return float(np.sum(expectations(game, p).averages))


def makespan(game: CongestionGame, assignment: MixedProfile | Sequence[int]) -> float:
    """Maximum resource load of a pure assignment."""
    if isinstance(assignment, MixedProfile):
        check_profile(game, assignment)
        choices = assignment.pure_choices()
        if choices is None:
            raise DomainError("makespan is defined for pure assignments only")
    else:
        choices = tuple(int(c) for c in assignment)
        if len(choices) != game.player_count:
            raise DimensionError("one strategy index per player required")
        for i, c in enumerate(choices):
            if not 0 <= c < game.shape[i]:
                raise DimensionError(f"player {i}: strategy {c} out of range")
    return float(game.loads(choices).max())


def pure_profile_count(game: Game) -> int:
    return int(np.prod([int(k) for k in game.shape], dtype=object))


def iter_pure_profiles(game: Game) -> Iterator[tuple[int, ...]]:
    return itertools.product(*(range(k) for k in game.shape))


def optimum(game: Game, limit: int = 10**6, chunk: int = 65536) -> float:
    """Best social objective over pure profiles (min cost / max welfare)."""
    from .errors import ConfigurationError

    if pure_profile_count(game) > limit:
        raise ConfigurationError(
            f"{pure_profile_count(game)} pure profiles exceed the enumeration limit {limit}; "
            "supply the optimum explicitly"
        )
    form = game.form
    offs = form.offsets
    best = np.inf if form.sign < 0 else -np.inf
    it = iter_pure_profiles(game)
    while True:
        block = list(itertools.islice(it, chunk))
        if not block:
            break
        idx = np.asarray(block, dtype=np.intp) + offs
        P = np.zeros((len(block), sum(game.shape)))
        np.put_along_axis(P, idx, 1.0, axis=1)
        obj = form.player_sums(P * form.values(P)).sum(axis=1)
        best = min(best, obj.min()) if form.sign < 0 else max(best, obj.max())
    return float(best)


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------


def balls_bins(n: int, m: int) -> CongestionGame:
    """``n`` identical players choosing one of ``m`` bins with cost equal to the load."""
    n, m = int(n), int(m)
    if n < 1:
        raise ConstructionError("need at least one ball")
    if m < 2:
        raise ConstructionError("need at least two bins so every player has two strategies")
    return CongestionGame(
        resources=((1.0, 0.0),) * m,
        strategies=tuple(tuple((e,) for e in range(m)) for _ in range(n)),
    )


def gw_game(w: float) -> NetworkCoordinationGame:
    """Two-player coordination game with diagonal payoffs 1 (Stag) and ``w`` (Hare)."""
    w = float(w)
    if not w > 0:
        raise ConstructionError("w must be positive")
    return NetworkCoordinationGame(
        2, 2, (CoordinationEdge(0, 1, ((1.0, 0.0), (0.0, w))),), ("Stag", "Hare")
    )


@dataclass(frozen=True)
class StarStagHunt:
    """Star graph of ``leaf_count`` leaves around one center, every edge playing G(w).

    Vertices ``0..n-1`` are the leaves and vertex ``n`` is the center.  For
    ``w < 1`` the strategies are swapped and payoffs rescaled so the edge game
    becomes G(1/w); ``relabeled`` records this.
    """

    leaf_count: int
    w: float

    def __post_init__(self) -> None:
        if int(self.leaf_count) < 1:
            raise ConstructionError("a star needs at least one leaf")
        if not float(self.w) > 0:
            raise ConstructionError("w must be positive")
        object.__setattr__(self, "leaf_count", int(self.leaf_count))
        object.__setattr__(self, "w", float(self.w))

    @property
    def relabeled(self) -> bool:
        return self.w < 1.0

    @property
    def effective_w(self) -> float:
        return 1.0 / self.w if self.relabeled else self.w

    @property
    def center(self) -> int:
        return self.leaf_count

    def to_game(self) -> NetworkCoordinationGame:
        w = self.effective_w
        labels = ("B", "A") if self.relabeled else ("A", "B")
        mat = ((1.0, 0.0), (0.0, w))
        edges = tuple(CoordinationEdge(i, self.center, mat) for i in range(self.leaf_count))
        return NetworkCoordinationGame(self.leaf_count + 1, 2, edges, labels)


def star_stag_hunt(n: int, w: float) -> NetworkCoordinationGame:
    return StarStagHunt(n, w).to_game()
