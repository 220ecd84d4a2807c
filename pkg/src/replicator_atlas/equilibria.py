"""Nash and weak-stability certificates, spectral classification and balls-and-bins results."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

import numpy as np

from .dynamics import LimitReport, field_array
from .errors import AssumptionError, CapacityError, DomainError, PreconditionError
from .games import (
    Game,
    MixedProfile,
    NetworkCoordinationGame,
    balls_bins,
    check_profile,
)

SPECTRAL_TOL = 1e-6
FIXED_POINT_TOL = 1e-9
SUPPORT_TOL = 1e-9
FD_STEP = 1e-6


@dataclass(frozen=True)
class NashCertificate:
    """Per-player Nash flags and the worst (player, strategy, gap) found.

    The gap is how much worse a support strategy is than the player's best
    response; ``worst`` is None for games where every gap is zero.
    """

    flags: tuple[bool, ...]
    worst: tuple[int, int, float] | None
    tol: float

    @property
    def is_nash(self) -> bool:
        return all(self.flags)

    def __bool__(self) -> bool:
        return self.is_nash


@dataclass(frozen=True)
class WeakStability:
    """Result of the weak-stability test; ``witness`` is (i, gamma, j, delta, delta')."""

    stable: bool
    witness: tuple[int, int, int, int, int] | None = None

    def __bool__(self) -> bool:
        return self.stable


@dataclass(frozen=True)
class StabilityReport:
    eigenvalues: tuple[complex, ...]
    label: str
    max_real: float
    jacobian: np.ndarray | None = None

    @property
    def stable(self) -> bool:
        return self.label == "stable"


def _player_values(game: Game, flat: np.ndarray) -> list[np.ndarray]:
    V = game.form.values(flat)
    offs = game.form.offsets
    return [V[o : o + k] for o, k in zip(offs, game.shape)]


def _regret(game: Game, vals: np.ndarray) -> np.ndarray:
    """How much worse each strategy is than the best one (>= 0)."""
    if game.form.sign < 0:
        return vals - vals.min()
    return vals.max() - vals


def is_nash(game: Game, p: MixedProfile, tol: float = 1e-8, support_tol: float = SUPPORT_TOL) -> NashCertificate:
    check_profile(game, p)
    flags, worst = [], None
    for i, vals in enumerate(_player_values(game, p.flat)):
        reg = _regret(game, vals)
        supp = p.support(i, support_tol)
        k = int(supp[np.argmax(reg[supp])])
        gap = float(reg[k])
        flags.append(gap <= tol)
        if worst is None or gap > worst[2]:
            worst = (i, k, gap)
    return NashCertificate(tuple(flags), worst, tol)


def _randomizing(p: MixedProfile, support_tol: float) -> list[int]:
    return [i for i in range(p.player_count) if len(p.support(i, support_tol)) >= 2]


def is_weakly_stable(
    game: Game, p: MixedProfile, tol: float = 1e-8, support_tol: float = SUPPORT_TOL
) -> WeakStability:
    """Fixing any randomizing player to a support strategy must keep every other
    randomizing player indifferent over their support."""
    if not is_nash(game, p, tol, support_tol):
        raise PreconditionError("weak stability is defined for Nash equilibria")
    mixed = _randomizing(p, support_tol)
    offs = game.form.offsets
    for i in mixed:
        for g in p.support(i, support_tol):
            fixed = p.flat.copy()
            fixed[offs[i] : offs[i] + game.shape[i]] = 0.0
            fixed[offs[i] + g] = 1.0
            vals = _player_values(game, fixed)
            for j in mixed:
                if j == i:
                    continue
                supp = p.support(j, support_tol)
                v = vals[j][supp]
                if v.max() - v.min() > tol:
                    return WeakStability(False, (i, int(g), j, int(supp[v.argmax()]), int(supp[v.argmin()])))
    return WeakStability(True, None)


def _reduction(q: MixedProfile):
    """Pivot per player (argmax of q_i) and the kept (free) flat indices."""
    offs = q.offsets
    pivots = [int(offs[i] + np.argmax(q.player(i))) for i in range(q.player_count)]
    free = [k for k in range(q.flat.size) if k not in set(pivots)]
    return pivots, np.asarray(free, dtype=np.intp)


def reduced_jacobian(game: Game, q: MixedProfile, step: float = FD_STEP) -> np.ndarray:
    """Central-difference Jacobian of the field in the coordinates left after
    eliminating each player's largest coordinate."""
    check_profile(game, q)
    pivots, free = _reduction(q)
    owner = game.form.owner

    def full(r: np.ndarray) -> np.ndarray:
        x = q.flat.copy()
        x[free] = r
        for i, piv in enumerate(pivots):
            others = (owner[free] == i)
            x[piv] = 1.0 - r[others].sum()
        return x

    r0 = q.flat[free].copy()
    J = np.empty((free.size, free.size))
    for c in range(free.size):
        e = np.zeros(free.size)
        e[c] = step
        fp = field_array(game, full(r0 + e))[free]
        fm = field_array(game, full(r0 - e))[free]
        J[:, c] = (fp - fm) / (2 * step)
    return J


def classify_stability(game: Game, q: MixedProfile, tol: float = SPECTRAL_TOL) -> StabilityReport:
    """Label a fixed point unstable iff its reduced Jacobian has an eigenvalue
    with real part above ``tol``."""
    check_profile(game, q)
    r = float(np.max(np.abs(field_array(game, q.flat))))
    if r >= FIXED_POINT_TOL:
        raise PreconditionError(f"not a fixed point (field norm {r:.3g})")
    J = reduced_jacobian(game, q)
    eig = np.linalg.eigvals(J) if J.size else np.zeros(0, dtype=complex)
    mr = float(eig.real.max()) if eig.size else 0.0
    return StabilityReport(
        tuple(complex(z) for z in eig), "unstable" if mr > tol else "stable", mr, J
    )


def certify_limit(game: Game, report: LimitReport, tol: float = 1e-8) -> LimitReport:
    """Attach Nash, weak-stability and spectral results to a resolved limit."""
    if report.classification == "unresolved":
        return report
    q = report.profile
    cert = is_nash(game, q, tol)
    ws = bool(is_weakly_stable(game, q, tol)) if cert.is_nash else False
    stab = None
    if float(np.max(np.abs(field_array(game, q.flat)))) < FIXED_POINT_TOL:
        stab = classify_stability(game, q)
    return replace(report, nash=cert.is_nash, weakly_stable=ws, stability=stab)


def check_distinct_entries(game: NetworkCoordinationGame) -> None:
    """Raise AssumptionError unless every row and column of every edge matrix has distinct entries."""
    for e in game.edges:
        A = e.array()
        for axis, name in ((1, "row"), (0, "column")):
            lines = A if axis == 1 else A.T
            for k, line in enumerate(lines):
                if len(np.unique(line)) != line.size:
                    raise AssumptionError(f"edge ({e.i},{e.j}): {name} {k} has repeated entries")


def randomized_independent_set_check(
    game: NetworkCoordinationGame,
    p: MixedProfile,
    tol: float = 1e-8,
    support_tol: float = SUPPORT_TOL,
    require_weakly_stable: bool = True,
) -> bool:
    """True iff no edge joins two players that randomize.

    With ``require_weakly_stable`` the profile must be a weakly stable Nash
    equilibrium; turning it off checks only the graph condition.
    """
    if not isinstance(game, NetworkCoordinationGame):
        raise DomainError("defined for network coordination games")
    check_profile(game, p)
    check_distinct_entries(game)
    if require_weakly_stable:
        if not is_nash(game, p, tol, support_tol):
            raise PreconditionError("profile is not a Nash equilibrium")
        if not is_weakly_stable(game, p, tol, support_tol):
            raise PreconditionError("profile is not weakly stable")
    mixed = set(_randomizing(p, support_tol))
    return not any(e.i in mixed and e.j in mixed for e in game.edges)


MAX_ENUMERATION_N = 4


def _solve_support(n: int, supports: tuple[tuple[int, ...], ...]) -> np.ndarray | None:
    """Solve the indifference system of balls_bins(n, n) on a support pattern.

    Unknowns are p_{i,e} for e in S_i and one cost level per player. The cost
    of bin e for player i is 1 + sum_{k != i} p_{k,e}.
    """
    var = {}
    for i, S in enumerate(supports):
        for e in S:
            var[(i, e)] = len(var)
    nv = len(var) + n
    rows, rhs = [], []
    for i, S in enumerate(supports):
        for e in S:
            r = np.zeros(nv)
            for k in range(n):
                if k != i and (k, e) in var:
                    r[var[(k, e)]] += 1.0
            r[len(var) + i] = -1.0
            rows.append(r)
            rhs.append(-1.0)
        r = np.zeros(nv)
        for e in S:
            r[var[(i, e)]] = 1.0
        rows.append(r)
        rhs.append(1.0)
    A, b = np.array(rows), np.array(rhs)
    x, *_ = np.linalg.lstsq(A, b, rcond=None)
    if np.max(np.abs(A @ x - b)) > 1e-9:
        return None
    flat = np.zeros(n * n)
    for (i, e), k in var.items():
        flat[i * n + e] = x[k]
    if flat.min() < -1e-12:
        return None
    flat = np.clip(flat, 0.0, 1.0)
    sums = flat.reshape(n, n).sum(axis=1)
    return (flat.reshape(n, n) / sums[:, None]).ravel()


def enumerate_weakly_stable_supports(n: int, tol: float = 1e-8) -> list[MixedProfile]:
    """All weakly stable Nash equilibria of balls_bins(n, n) found by support enumeration.

    Each support pattern is solved by least squares; underdetermined
    patterns contribute their minimum-norm solution.
    """
    n = int(n)
    if n < 2:
        raise DomainError("n must be at least 2")
    if n > MAX_ENUMERATION_N:
        raise CapacityError(f"support enumeration is limited to n <= {MAX_ENUMERATION_N}")
    game = balls_bins(n, n)
    subsets = [s for r in range(1, n + 1) for s in itertools.combinations(range(n), r)]
    found: dict[tuple, MixedProfile] = {}
    for pattern in itertools.product(subsets, repeat=n):
        flat = _solve_support(n, pattern)
        if flat is None:
            continue
        p = MixedProfile(flat, game.shape)
        if not is_nash(game, p, tol):
            continue
        if not is_weakly_stable(game, p, tol):
            continue
        key = tuple(np.round(flat, 9))
        found.setdefault(key, p)
    return [found[k] for k in sorted(found)]


def uncountable_family(n: int, x: float) -> MixedProfile:
    """A Nash equilibrium of balls_bins(n, n) from a one-parameter family.

    The first four balls share bins 0-3 in a cyclic mixed pattern governed by
    ``x``; every further ball sits alone on its own bin.
    """
    n, x = int(n), float(x)
    if n < 4:
        raise DomainError("the family needs at least four balls")
    if not 0.25 <= x <= 0.75:
        raise DomainError("x must lie in [1/4, 3/4]")
    M = np.zeros((n, n))
    M[0, :4] = (x, 1 - x, 0, 0)
    M[1, :4] = (0.5, 0, 0.5, 0)
    M[2, :4] = (0, 0.5, 0, 0.5)
    M[3, :4] = (0, 0, x, 1 - x)
    for k in range(4, n):
        M[k, k] = 1.0
    return MixedProfile(M.ravel(), (n,) * n)

