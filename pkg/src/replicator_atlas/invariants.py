"""Conserved and monotone quantities of the replicator flow, with drift checks.

Every function here has a scalar form taking :class:`MixedProfile` objects
and :class:`InvariantSpec` wraps them so the same quantity can be evaluated
on a stack of flat states (one row per trajectory sample).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dynamics import field_array
from .errors import DimensionError, DomainError, PreconditionError
from .games import Game, MixedProfile, NetworkCoordinationGame, check_profile

FIXED_POINT_TOL = 1e-9

KINDS = (
    "potential",
    "relative_entropy",
    "local_Z",
    "kl_bipartite",
    "star_log_odds",
    "gw_invariant",
    "gw_log_invariant",
    "stag_hunt_log",
)
# gw_invariant is conserved only on its zero set, so it is not listed
CONSERVED = frozenset({"kl_bipartite", "star_log_odds", "gw_log_invariant", "stag_hunt_log"})


def potential(game: Game, p: MixedProfile) -> float:
    """Potential: non-increasing for cost games, non-decreasing for coordination games."""
    check_profile(game, p)
    return float(game.form.potential(p.flat))


def _logs(P: np.ndarray, mask: np.ndarray | slice, logP: np.ndarray | None) -> np.ndarray:
    """ln p on the selected coordinates, from exact logs when available."""
    if logP is not None:
        L = logP[..., mask]
        if np.any(~np.isfinite(L)):
            raise DomainError("p vanishes where a logarithm is needed")
        return L
    Ps = P[..., mask]
    if np.any(Ps <= 0):
        raise DomainError("p vanishes where a logarithm is needed")
    return np.log(Ps)


def _relative_entropy_rows(q: np.ndarray, P: np.ndarray, logP: np.ndarray | None = None) -> np.ndarray:
    mask = q > 0
    qs = q[mask]
    return -np.sum(qs * (_logs(P, mask, logP) - np.log(qs)), axis=-1)


def relative_entropy(q: MixedProfile, p: MixedProfile) -> float:
    """Sum over players of KL(q_i || p_i), restricted to the support of q."""
    if q.shape != p.shape:
        raise DimensionError("q and p have different shapes")
    try:
        val = float(_relative_entropy_rows(q.flat, p.flat))
    except DomainError:
        raise DomainError("p vanishes on the support of q") from None
    return max(val, 0.0) if val > -1e-15 else val


def _bad_strategies(game: Game, q: MixedProfile, tol: float = FIXED_POINT_TOL) -> np.ndarray:
    """Strategies worse than the player's average at q by more than ``tol``
    (ties within rounding are not counted)."""
    form = game.form
    V = form.values(q.flat)
    avg = form.averages(q.flat, V)[form.owner]
    if form.sign < 0:
        return V > avg + tol
    return avg > V + tol


def _require_fixed_point(game: Game, q: MixedProfile) -> None:
    r = float(np.max(np.abs(field_array(game, q.flat))))
    if r >= FIXED_POINT_TOL:
        raise PreconditionError(f"q is not a fixed point (field norm {r:.3g})")


def local_lyapunov_Z(game: Game, q: MixedProfile, p: MixedProfile) -> float:
    """Relative entropy to q plus twice the mass on strategies that are worse at q.

    For cost games the extra index set is {cost above the average at q}; for
    coordination games it is {utility below the average at q}.
    """
    check_profile(game, q)
    check_profile(game, p)
    _require_fixed_point(game, q)
    bad = _bad_strategies(game, q)
    return relative_entropy(q, p) + 2.0 * float(p.flat[bad].sum())


def _cross_entropy(qi: np.ndarray, Pi: np.ndarray, Li: np.ndarray | None) -> np.ndarray:
    """H(q_i, p_i); coordinates with q = 0 contribute nothing."""
    mask = qi > 0
    return -np.sum(qi[mask] * _logs(Pi, mask, Li), axis=-1)


def _check_bipartition(game: NetworkCoordinationGame, left: Sequence[int], right: Sequence[int]) -> None:
    L, R = set(int(v) for v in left), set(int(v) for v in right)
    n = game.player_count
    if L & R or (L | R) != set(range(n)) or len(L) + len(R) != n:
        raise DomainError("partition must cover every vertex exactly once")
    for e in game.edges:
        if (e.i in L) == (e.j in L):
            raise DomainError(f"edge ({e.i},{e.j}) lies inside one side of the partition")


def _kl_rows(game, q: np.ndarray, left, right, P: np.ndarray, logP: np.ndarray | None = None) -> np.ndarray:
    offs = game.form.offsets
    total = 0.0
    for sgn, side in ((1.0, left), (-1.0, right)):
        for i in side:
            sl = slice(offs[i], offs[i] + game.shape[i])
            Li = None if logP is None else logP[..., sl]
            total = total + sgn * _cross_entropy(q[sl], P[..., sl], Li)
    return np.asarray(total)


def kl_bipartite_invariant(
    game: NetworkCoordinationGame,
    q: MixedProfile,
    partition: tuple[Sequence[int], Sequence[int]],
    p: MixedProfile,
) -> float:
    """Signed sum of cross-entropies H(q_i, p_i) over the two sides of a bipartite graph."""
    if not isinstance(game, NetworkCoordinationGame):
        raise DomainError("the bipartite invariant is defined for coordination games")
    check_profile(game, q)
    check_profile(game, p)
    left, right = partition
    _check_bipartition(game, left, right)
    if np.any(q.flat <= 0):
        raise PreconditionError("q must be fully mixed")
    _require_fixed_point(game, q)
    return float(_kl_rows(game, q.flat, left, right, p.flat))


def star_partition(game: NetworkCoordinationGame) -> tuple[list[int], list[int]]:
    """Leaves on the left, center on the right (center is the last vertex)."""
    n = game.player_count - 1
    return list(range(n)), [n]


def star_kl_closed_form(x_solved: Sequence[float], w: float, p: MixedProfile) -> float:
    """Closed form of the bipartite invariant on a star at q = (x', w/(w+1))."""
    xs = np.asarray(x_solved, dtype=float)
    V = p.vectors()
    z = V[-1]
    val = (w / (w + 1)) * np.log(z[0]) + (1 / (w + 1)) * np.log(z[1])
    for xi, v in zip(xs, V[:-1]):
        val -= xi * np.log(v[0]) + (1 - xi) * np.log(v[1])
    return float(val)


def _log_odds_rows(P: np.ndarray, i: int, j: int, logP: np.ndarray | None = None) -> np.ndarray:
    try:
        L = _logs(P, np.array([2 * i, 2 * i + 1, 2 * j, 2 * j + 1]), logP)
    except DomainError:
        raise DomainError("log-odds need interior probabilities") from None
    return (L[..., 0] - L[..., 1]) - (L[..., 2] - L[..., 3])


def star_log_odds_invariant(p: MixedProfile, i: int, j: int) -> float:
    """Difference of the A-versus-B log-odds of leaves i and j."""
    if any(k != 2 for k in p.shape):
        raise DimensionError("star profiles have two strategies per vertex")
    leaves = p.player_count - 1
    if not (0 <= i < leaves and 0 <= j < leaves) or i == j:
        raise DomainError("i and j must be distinct leaves")
    return float(_log_odds_rows(p.flat, i, j))


def _check_gw_args(p1, p2, w) -> None:
    if not w > 0:
        raise DomainError("w must be positive")
    for v in (p1, p2):
        if np.any(np.asarray(v) < 0) or np.any(np.asarray(v) > 1):
            raise DomainError("probabilities must lie in [0,1]")


def gw_invariant(p1, p2, w: float):
    """``p1^w (1-p1) - p2^w (1-p2)`` in Stag coordinates.

    Its zero set is invariant under the G(w) flow; away from that set the
    conserved quantity is the log-ratio :func:`gw_log_invariant`.
    """
    _check_gw_args(p1, p2, w)
    p1, p2 = np.asarray(p1, dtype=float), np.asarray(p2, dtype=float)
    out = p1**w * (1 - p1) - p2**w * (1 - p2)
    return float(out) if out.ndim == 0 else out


def gw_log_invariant(p1, p2, w: float):
    """``ln(p1^w (1-p1)) - ln(p2^w (1-p2))``, conserved along interior G(w) orbits."""
    _check_gw_args(p1, p2, w)
    p1, p2 = np.asarray(p1, dtype=float), np.asarray(p2, dtype=float)
    if np.any((p1 <= 0) | (p1 >= 1) | (p2 <= 0) | (p2 >= 1)):
        raise DomainError("log form needs interior probabilities")
    out = w * np.log(p1) + np.log1p(-p1) - w * np.log(p2) - np.log1p(-p2)
    return float(out) if out.ndim == 0 else out


def stag_hunt_log_invariant(p1, p2, w: float = 2.0):
    """Cross-entropy difference against the mixed equilibrium (w/(w+1), w/(w+1))."""
    return gw_log_invariant(p1, p2, w) / (w + 1)


@dataclass(frozen=True)
class InvariantSpec:
    """A tracked quantity with the parameters its kind needs.

    ``q`` is needed by relative_entropy, local_Z and kl_bipartite;
    ``partition`` by kl_bipartite; ``leaves`` by star_log_odds; ``w`` by the
    G(w) kinds.
    """

    kind: str
    q: MixedProfile | None = None
    partition: tuple[tuple[int, ...], tuple[int, ...]] | None = None
    leaves: tuple[int, int] | None = None
    w: float | None = None
    label: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise DomainError(f"unknown invariant kind {self.kind!r}")
        need = {
            "relative_entropy": ("q",),
            "local_Z": ("q",),
            "kl_bipartite": ("q", "partition"),
            "star_log_odds": ("leaves",),
            "gw_invariant": ("w",),
            "gw_log_invariant": ("w",),
            "stag_hunt_log": ("w",),
        }.get(self.kind, ())
        for name in need:
            if getattr(self, name) is None:
                raise DomainError(f"invariant kind {self.kind!r} requires {name}")
        if self.partition is not None:
            L, R = self.partition
            object.__setattr__(self, "partition", (tuple(int(v) for v in L), tuple(int(v) for v in R)))

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        if self.kind == "star_log_odds":
            return f"star_log_odds_{self.leaves[0]}_{self.leaves[1]}"
        return self.kind

    @property
    def conserved(self) -> bool:
        return self.kind in CONSERVED

    def validate(self, game: Game) -> None:
        if self.q is not None:
            check_profile(game, self.q)
        if self.kind in ("local_Z", "kl_bipartite"):
            _require_fixed_point(game, self.q)
        if self.kind == "kl_bipartite":
            if not isinstance(game, NetworkCoordinationGame):
                raise DomainError("the bipartite invariant is defined for coordination games")
            _check_bipartition(game, *self.partition)
            if np.any(self.q.flat <= 0):
                raise PreconditionError("q must be fully mixed")
        if self.kind in ("gw_invariant", "gw_log_invariant", "stag_hunt_log", "star_log_odds"):
            if any(k != 2 for k in game.shape):
                raise DimensionError(f"{self.kind} needs two strategies per player")
        if self.kind.startswith(("gw", "stag")) and game.player_count != 2:
            raise DimensionError(f"{self.kind} needs a two-player game")

    def evaluate(self, game: Game, p: MixedProfile) -> float:
        check_profile(game, p)
        return float(self.evaluate_batch(game, p.flat[None, :])[0])

    def evaluate_batch(self, game: Game, P: np.ndarray, logP: np.ndarray | None = None) -> np.ndarray:
        """Values on each row of a ``(N, M)`` array of flat profiles.

        ``logP`` (same shape) supplies exact log-probabilities, as produced
        by log-domain integration; logarithmic kinds then use it directly
        instead of taking the log of rounded probabilities.
        """
        P = np.atleast_2d(np.asarray(P, dtype=float))
        if logP is not None:
            logP = np.atleast_2d(np.asarray(logP, dtype=float))
        self.validate(game)
        k = self.kind
        if k == "potential":
            return game.form.potential(P)
        if k == "relative_entropy":
            return _relative_entropy_rows(self.q.flat, P, logP)
        if k == "local_Z":
            bad = _bad_strategies(game, self.q)
            return _relative_entropy_rows(self.q.flat, P, logP) + 2.0 * P[:, bad].sum(axis=1)
        if k == "kl_bipartite":
            L, R = self.partition
            return _kl_rows(game, self.q.flat, L, R, P, logP)
        if k == "star_log_odds":
            return _log_odds_rows(P, *self.leaves, logP)
        if k == "gw_invariant":
            return gw_invariant(P[:, 0], P[:, 2], self.w)
        L = _logs(P, slice(None), logP)
        val = self.w * (L[:, 0] - L[:, 2]) + (L[:, 1] - L[:, 3])
        return val if k == "gw_log_invariant" else val / (self.w + 1)


def drift(values: np.ndarray) -> float:
    """Largest deviation from the initial value."""
    v = np.asarray(values, dtype=float)
    return float(np.max(np.abs(v - v[0]))) if v.size else 0.0


def monotone_violation(values: np.ndarray, direction: int) -> float:
    """Largest step against ``direction`` (-1 non-increasing, +1 non-decreasing); 0 if monotone."""
    d = np.diff(np.asarray(values, dtype=float)) * (1 if direction > 0 else -1)
    return float(max(0.0, -d.min())) if d.size else 0.0


def potential_direction(game: Game) -> int:
    return -1 if game.form.sign < 0 else 1
