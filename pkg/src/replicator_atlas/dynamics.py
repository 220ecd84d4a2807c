"""Replicator vector field, simplex-preserving integration and limit detection.

The integrator is an embedded Dormand-Prince 5(4) pair written to run a
whole batch of initial conditions at once: every row keeps its own time,
step size and status, so a row's trajectory does not depend on which other
rows share the batch.  Single trajectories go through the same code with a
batch of one and a recording monitor.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from typing import Callable, Iterable, Protocol, Sequence

import numpy as np

from .errors import DomainError, NumericalFailure, PreconditionError
from .games import Game, MixedProfile, check_profile

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_E = _B5 - _B4

STATUS_ACTIVE = 0
STATUS_CONVERGED = 1
STATUS_HORIZON = 2
STATUS_MAX_STEPS = 3
STATUS_FAILED = 4
STATUS_NAMES = {0: "active", 1: "converged", 2: "horizon", 3: "max_steps", 4: "failed"}


@dataclass(frozen=True)
class IntegratorOptions:
    """Integration settings.

    ``mode`` is ``"clamp"`` (evolve probabilities, clip tiny negatives and
    renormalize after each step) or ``"log"`` (evolve log-probabilities of
    an interior start; exact for invariants that are linear in log p).
    Set ``converge_tol=0`` to run to the horizon unconditionally.
    """

    rtol: float = 1e-8
    atol: float = 1e-10
    horizon: float = 1e4
    converge_tol: float = 1e-9
    converge_steps: int = 3
    max_steps: int = 200_000
    mode: str = "clamp"
    first_step: float = 0.05
    enforce_potential: bool = True

    def __post_init__(self) -> None:
        if not (self.rtol > 0 and self.atol > 0):
            raise DomainError("tolerances must be positive")
        if not self.horizon > 0:
            raise DomainError("horizon must be positive")
        if self.converge_tol < 0:
            raise DomainError("converge_tol must be non-negative")
        if self.converge_steps < 1 or self.max_steps < 1:
            raise DomainError("step counts must be positive")
        if self.mode not in ("clamp", "log"):
            raise DomainError(f"unknown boundary mode {self.mode!r}")
        if not self.first_step > 0:
            raise DomainError("first_step must be positive")


# ---------------------------------------------------------------------------
# Vector field
# ---------------------------------------------------------------------------


def field_array(game: Game, P: np.ndarray) -> np.ndarray:
    """Replicator field for a flat profile or a batch of them (last axis)."""
    form = game.form
    V = form.values(P)
    avg = form.averages(P, V)
    return form.sign * P * (V - avg[..., form.owner])


def replicator_field(game: Game, p: MixedProfile) -> np.ndarray:
    """Tangent vector at ``p``, flat and aligned with ``p.flat``."""
    check_profile(game, p)
    return field_array(game, p.flat)


def field_norm(game: Game, p: MixedProfile) -> float:
    return float(np.max(np.abs(replicator_field(game, p))))


def potential_array(game: Game, P: np.ndarray) -> np.ndarray:
    return game.form.potential(P)


# ---------------------------------------------------------------------------
# State-space helpers
# ---------------------------------------------------------------------------


def _softmax(game: Game, X: np.ndarray) -> np.ndarray:
    form = game.form
    mx = np.maximum.reduceat(X, form.offsets, axis=-1)
    E = np.exp(X - mx[..., form.owner])
    S = form.player_sums(E)
    return E / S[..., form.owner]


def _log_normalize(game: Game, X: np.ndarray) -> np.ndarray:
    form = game.form
    mx = np.maximum.reduceat(X, form.offsets, axis=-1)
    lse = mx + np.log(form.player_sums(np.exp(X - mx[..., form.owner])))
    return X - lse[..., form.owner]


def _renormalize(game: Game, P: np.ndarray) -> np.ndarray:
    form = game.form
    P = np.clip(P, 0.0, 1.0)
    S = form.player_sums(P)
    return P / S[..., form.owner]


class _System:
    """State-space view: probabilities in clamp mode, logs in log mode."""

    def __init__(self, game: Game, mode: str):
        self.game = game
        self.log = mode == "log"

    def to_state(self, P: np.ndarray) -> np.ndarray:
        if self.log:
            if np.any(P <= 0):
                raise DomainError("log-domain integration needs an interior start")
            return _log_normalize(self.game, np.log(P))
        return P.copy()

    def to_prob(self, Y: np.ndarray) -> np.ndarray:
        return _softmax(self.game, Y) if self.log else Y

    def rhs(self, Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """State derivative and probability-space field (for the norm)."""
        form = self.game.form
        P = self.to_prob(Y)
        V = form.values(P)
        gap = form.sign * (V - form.averages(P, V)[..., form.owner])
        pf = P * gap
        return (gap if self.log else pf), pf

    def normalize(self, Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Project back onto the state manifold; also report excursion outside [0,1]."""
        if self.log:
            return _log_normalize(self.game, Y), np.zeros(Y.shape[0])
        exc = np.maximum(np.maximum(-Y.min(axis=1), Y.max(axis=1) - 1.0), 0.0)
        return _renormalize(self.game, Y), exc


# ---------------------------------------------------------------------------
# Batch integration
# ---------------------------------------------------------------------------


Monitor = Callable[[np.ndarray, np.ndarray, np.ndarray, "np.ndarray | None"], None]


@dataclass
class BatchResult:
    """Final states of a batch integration (probability space)."""

    P: np.ndarray
    t: np.ndarray
    status: np.ndarray
    steps: np.ndarray
    field_norm: np.ndarray
    max_excursion: np.ndarray

    def status_name(self, k: int) -> str:
        return STATUS_NAMES[int(self.status[k])]


def integrate_batch(
    game: Game,
    P0: np.ndarray,
    opts: IntegratorOptions | None = None,
    monitor: Monitor | None = None,
    on_failure: str = "raise",
) -> BatchResult:
    """Integrate every row of ``P0`` (shape ``(B, M)``) independently.

    ``monitor(rows, t, P, L)`` is called after each accepted step with the
    row indices that advanced, their new times and probability states; ``L``
    holds the exact log-probabilities in log mode and is None otherwise.  When a
    row's step size underflows, ``on_failure="raise"`` raises
    :class:`NumericalFailure` and ``"mark"`` stops that row with status
    ``failed`` (its state is the last accepted one).
    """
    if on_failure not in ("raise", "mark"):
        raise DomainError(f"unknown failure policy {on_failure!r}")
    opts = opts or IntegratorOptions()
    P0 = np.atleast_2d(np.asarray(P0, dtype=float))
    B = P0.shape[0]
    sys = _System(game, opts.mode)
    form = game.form

    Y = sys.to_state(P0)
    K1, PF = sys.rhs(Y)
    fnorm = np.abs(PF).max(axis=1) if PF.size else np.zeros(B)
    psi = form.potential(sys.to_prob(Y))
    t = np.zeros(B)
    h = np.full(B, min(opts.first_step, opts.horizon))
    status = np.zeros(B, dtype=np.int8)
    steps = np.zeros(B, dtype=np.int64)
    streak = np.zeros(B, dtype=np.int64)
    excursion = np.zeros(B)
    cost_game = form.sign < 0

    while True:
        idx = np.flatnonzero(status == STATUS_ACTIVE)
        if idx.size == 0:
            break
        y, hh = Y[idx], h[idx][:, None]
        ks = [K1[idx]]
        with np.errstate(over="ignore", invalid="ignore"):
            for s in range(1, 6):
                acc = y + hh * sum(a * k for a, k in zip(_A[s], ks) if a != 0.0)
                ks.append(sys.rhs(acc)[0])
            y5 = y + hh * sum(b * k for b, k in zip(_B5[:6], ks) if b != 0.0)
            finite = np.all(np.isfinite(y5), axis=1)
            y5 = np.where(finite[:, None], y5, y)
            y5n, exc = sys.normalize(y5)
            k7, pf7 = sys.rhs(y5n)
            ks.append(k7)
            errvec = hh * sum(e * k for e, k in zip(_E, ks) if e != 0.0)
            scale = opts.atol + opts.rtol * np.maximum(np.abs(y), np.abs(y5))
            err = np.max(np.abs(errvec) / scale, axis=1)
        finite &= np.isfinite(err) & np.all(np.isfinite(k7), axis=1)
        err = np.where(finite, err, np.inf)

        ok = err <= 1.0
        pot_ok = np.ones(idx.size, dtype=bool)
        psi_new = psi[idx]
        if opts.enforce_potential and ok.any():
            psi_new = form.potential(sys.to_prob(y5n))
            slack = np.maximum(opts.rtol, 1e-13 * np.abs(psi[idx]))
            if cost_game:
                pot_ok = psi_new <= psi[idx] + slack
            else:
                pot_ok = psi_new >= psi[idx] - slack
        accept = ok & pot_ok

        with np.errstate(divide="ignore"):
            factor = np.clip(0.9 * err ** -0.2, 0.2, 5.0)
        factor = np.where(finite, factor, 0.25)
        factor = np.where(ok & ~pot_ok, 0.5, factor)
        new_h = h[idx] * np.where(accept, factor, np.minimum(factor, 0.9))

        if accept.any():
            a = idx[accept]
            Y[a] = y5n[accept]
            K1[a] = k7[accept]
            t[a] = t[a] + h[a]
            steps[a] += 1
            excursion[a] = np.maximum(excursion[a], exc[accept])
            if opts.enforce_potential:
                psi[a] = psi_new[accept]
            else:
                psi[a] = form.potential(sys.to_prob(y5n[accept]))
            fn = np.abs(pf7[accept]).max(axis=1)
            fnorm[a] = fn
            streak[a] = np.where(fn < opts.converge_tol, streak[a] + 1, 0)
            if monitor is not None:
                ya = y5n[accept]
                monitor(a, t[a], sys.to_prob(ya), ya if sys.log else None)
            done_conv = streak[a] >= opts.converge_steps
            done_hor = opts.horizon - t[a] <= 1e-12 * max(1.0, opts.horizon)
            done_steps = steps[a] >= opts.max_steps
            status[a[done_steps]] = STATUS_MAX_STEPS
            status[a[done_hor]] = STATUS_HORIZON
            status[a[done_conv]] = STATUS_CONVERGED

        h[idx] = np.minimum(new_h, np.maximum(opts.horizon - t[idx], 0.0))
        tiny = (h[idx] < 1e-14 * np.maximum(1.0, t[idx])) & (status[idx] == STATUS_ACTIVE)
        if tiny.any() and on_failure == "mark":
            status[idx[tiny]] = STATUS_FAILED
        elif tiny.any():
            r = int(idx[np.flatnonzero(tiny)[0]])
            raise NumericalFailure(
                f"step size underflow for row {r} at t={t[r]:.6g}",
                last_time=float(t[r]),
                last_state=sys.to_prob(Y[r]).copy(),
            )

    return BatchResult(sys.to_prob(Y), t, status, steps, fnorm, excursion)


# ---------------------------------------------------------------------------
# Single trajectories
# ---------------------------------------------------------------------------


class TrackedQuantity(Protocol):
    name: str

    def evaluate_batch(self, game: Game, P: np.ndarray, logP: np.ndarray | None = None) -> np.ndarray: ...


@dataclass
class Trajectory:
    """Accepted samples of one integration, with diagnostic series."""

    game: Game
    times: np.ndarray
    states: np.ndarray
    potential: np.ndarray
    field_norm: np.ndarray
    invariants: dict[str, np.ndarray] = field(default_factory=dict)
    status: str = "horizon"
    options: IntegratorOptions = field(default_factory=IntegratorOptions)
    max_excursion: float = 0.0
    log_states: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.times)

    def profile(self, k: int) -> MixedProfile:
        return MixedProfile(self.states[k], self.game.shape)

    @property
    def final(self) -> MixedProfile:
        return self.profile(-1)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def csv_header(self) -> list[str]:
        cols = ["t", "potential", "field_norm", *self.invariants]
        for i, k in enumerate(self.game.shape):
            cols += [f"p_{i}_{g}" for g in range(k)]
        return cols

    def to_csv(self, target: str | os.PathLike | io.TextIOBase | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.csv_header())
        inv = list(self.invariants.values())
        for k in range(len(self.times)):
            row = [self.times[k], self.potential[k], self.field_norm[k]]
            row += [s[k] for s in inv]
            row += list(self.states[k])
            w.writerow([repr(float(x)) for x in row])
        text = buf.getvalue()
        if isinstance(target, (str, os.PathLike)):
            with open(target, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        elif target is not None:
            target.write(text)
        return text


def integrate(
    game: Game,
    p0: MixedProfile,
    opts: IntegratorOptions | None = None,
    invariants: Iterable[TrackedQuantity] = (),
) -> Trajectory:
    """Integrate from ``p0`` and record every accepted step."""
    check_profile(game, p0)
    opts = opts or IntegratorOptions()
    tracked = list(invariants)
    times, states = [0.0], [p0.flat.copy()]
    logs = None
    if opts.mode == "log":
        if np.any(p0.flat <= 0):
            raise DomainError("log-domain integration needs an interior start")
        logs = [_log_normalize(game, np.log(p0.flat))]

    def record(rows, t, P, L):
        times.append(float(t[0]))
        states.append(P[0].copy())
        if logs is not None:
            logs.append(L[0].copy())

    try:
        result = integrate_batch(game, p0.flat[None, :], opts, monitor=record)
    except NumericalFailure as exc:
        exc.last_time = times[-1]
        exc.last_state = MixedProfile(states[-1], game.shape)
        raise
    S = np.vstack(states)
    L = np.vstack(logs) if logs is not None else None
    series = {q.name: np.asarray(q.evaluate_batch(game, S, L), dtype=float) for q in tracked}
    return Trajectory(
        game=game,
        times=np.asarray(times),
        states=S,
        potential=game.form.potential(S),
        field_norm=np.abs(field_array(game, S)).max(axis=1),
        invariants=series,
        status=result.status_name(0),
        options=opts,
        max_excursion=float(result.max_excursion[0]),
        log_states=L,
    )


# ---------------------------------------------------------------------------
# Limits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LimitReport:
    """Classified end state of a trajectory.

    ``classification`` is ``"pure"``, ``"mixed"`` or ``"unresolved"``;
    ``label`` names the pure profile (e.g. ``"(Hare,Hare)"``) or repeats the
    classification.  Equilibrium fields are filled by
    :func:`replicator_atlas.equilibria.certify_limit`.
    """

    profile: MixedProfile
    classification: str
    label: str
    residual: float
    nash: bool | None = None
    weakly_stable: bool | None = None
    stability: object | None = None


def snap(game: Game, P: np.ndarray, snap_tol: float) -> np.ndarray:
    P = np.where(P < snap_tol, 0.0, P)
    P = np.where(P > 1.0 - snap_tol, 1.0, P)
    S = game.form.player_sums(P)
    return P / S[..., game.form.owner]


def pure_label(game: Game, choices: Sequence[int]) -> str:
    return "(" + ",".join(game.strategy_names(i)[c] for i, c in enumerate(choices)) + ")"


def classify_state(
    game: Game, p: np.ndarray, residual: float, snap_tol: float = 1e-6, field_tol: float = 1e-8
) -> LimitReport:
    snapped = snap(game, np.asarray(p, dtype=float), snap_tol)
    prof = MixedProfile(snapped, game.shape)
    choices = prof.pure_choices()
    if choices is not None:
        return LimitReport(prof, "pure", pure_label(game, choices), residual)
    if residual < field_tol:
        return LimitReport(prof, "mixed", "mixed", residual)
    return LimitReport(prof, "unresolved", "unresolved", residual)


def detect_limit(
    trajectory: Trajectory, snap_tol: float = 1e-6, field_tol: float = 1e-8
) -> LimitReport:
    if len(trajectory) == 0:
        raise PreconditionError("empty trajectory")
    return classify_state(
        trajectory.game,
        trajectory.states[-1],
        float(trajectory.field_norm[-1]),
        snap_tol,
        field_tol,
    )


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def _flat_dirichlet(rng: np.random.Generator, shape: Sequence[int]) -> np.ndarray:
    return np.concatenate([rng.dirichlet(np.ones(k)) for k in shape])


def sample_uniform_profile(seed: int, shape: Sequence[int]) -> MixedProfile:
    """Uniform (flat Dirichlet) draw, independently for each player."""
    if any(int(k) < 2 for k in shape):
        raise DomainError("every player needs at least 2 strategies")
    rng = np.random.default_rng(seed)
    return MixedProfile(_flat_dirichlet(rng, shape), tuple(shape))


def stream_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(index)]))


def sample_profiles(master_seed: int, shape: Sequence[int], indices: Iterable[int]) -> np.ndarray:
    """Rows of uniform profiles; row ``k`` depends only on (master_seed, indices[k])."""
    if any(int(k) < 2 for k in shape):
        raise DomainError("every player needs at least 2 strategies")
    rows = [_flat_dirichlet(stream_rng(master_seed, i), shape) for i in indices]
    return np.vstack(rows) if rows else np.zeros((0, sum(shape)))
