"""Regions of attraction: Stag Hunt closed forms, G(w) polytopes, the star
oracle, Monte Carlo average price of anarchy and basin rasters."""

from __future__ import annotations

import csv
import io
import math
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dynamics import (
    STATUS_FAILED,
    IntegratorOptions,
    classify_state,
    field_array,
    integrate_batch,
    sample_profiles,
)
from .errors import ConfigurationError, DomainError, NumericalFailure
from .games import Game, optimum

THREADS_ENV = "REPLICATOR_ATLAS_THREADS"

# reference constants quoted for the whole G(w) class; not computed here
GW_CLASS_LOWER_REFERENCE = 1.15
GW_CLASS_UPPER_REFERENCE = 1.21


# ---------------------------------------------------------------------------
# Stag Hunt G(2)
# ---------------------------------------------------------------------------


def _check_unit(*vals) -> None:
    for v in vals:
        a = np.asarray(v, dtype=float)
        if np.any(~np.isfinite(a)) or np.any(a < 0) or np.any(a > 1):
            raise DomainError("probabilities must lie in [0,1]")


def _scalar(a):
    return float(a) if np.ndim(a) == 0 else a


def stag_hunt_manifold(p1s):
    """Stag probability of player 2 on the stable manifold of the mixed equilibrium."""
    _check_unit(p1s)
    p = np.asarray(p1s, dtype=float)
    disc = np.maximum(1 + 2 * p - 3 * p * p, 0.0)
    return _scalar(0.5 * (1 - p + np.sqrt(disc)))


def stag_hunt_manifold_slope(p1s):
    """dy/dp of :func:`stag_hunt_manifold`; defined on the open interval (0,1)."""
    p = np.asarray(p1s, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise DomainError("slope is defined on the open interval")
    return _scalar(0.5 * (-1 + (1 - 3 * p) / np.sqrt(1 + 2 * p - 3 * p * p)))


def stag_hunt_classify(p1s: float, p2s: float, tol: float = 1e-9) -> str:
    """'Hare' below the manifold, 'Stag' above, 'Manifold' within ``tol``."""
    if not (0 < p1s < 1 and 0 < p2s < 1):
        raise DomainError("classification needs interior probabilities")
    y = stag_hunt_manifold(p1s)
    if p2s < y - tol:
        return "Hare"
    if p2s > y + tol:
        return "Stag"
    return "Manifold"


def stag_hunt_basin_measures() -> tuple[float, float]:
    """Lebesgue measure of the Hare and Stag basins in the unit square."""
    r = 2 * math.sqrt(3) * math.pi
    return (9 + r) / 27, (18 - r) / 27


# ---------------------------------------------------------------------------
# G(w) polytopes and bounds
# ---------------------------------------------------------------------------


def gw_polytope_classify(p1s: float, p2s: float, w: float) -> str:
    """Membership in the inner Hare or Stag polytope; 'Unknown' otherwise.

    The two regions touch at (w/(w+1), w/(w+1)); that point is reported as
    Hare.
    """
    _check_unit(p1s, p2s)
    if not w >= 1:
        raise DomainError("w must be at least 1")
    if p2s <= -w * p1s + w and p2s <= -p1s / w + 1:
        return "Hare"
    if p2s >= -p1s + 2 * w / (w + 1):
        return "Stag"
    return "Unknown"


def gw_triangles(w: float) -> dict[str, np.ndarray]:
    """Forward-invariant triangles (vertices as rows) inside each basin."""
    c = w / (w + 1)
    return {
        "Hare": np.array([[0.0, 0.0], [1.0, 0.0], [c, c]]),
        "Stag": np.array([[c, c], [1.0, (w - 1) / (w + 1)], [1.0, 1.0]]),
    }


def triangle_excess(tri: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Signed distance outside a triangle (<= 0 inside) for each point."""
    pts = np.atleast_2d(pts)
    worst = np.full(len(pts), -np.inf)
    u, v = tri[1] - tri[0], tri[2] - tri[0]
    orient = np.sign(u[0] * v[1] - u[1] * v[0])
    for a, b in ((0, 1), (1, 2), (2, 0)):
        e = tri[b] - tri[a]
        n = np.array([e[1], -e[0]]) * orient / np.hypot(*e)
        worst = np.maximum(worst, (pts - tri[a]) @ n)
    return worst


@dataclass(frozen=True)
class GwBounds:
    w: float
    lower: float
    upper: float
    mu_P_Hare: float
    mu_P_Stag: float


def gw_apoa_bounds(w: float) -> GwBounds:
    if not w >= 1:
        raise DomainError("w must be at least 1")
    w = float(w)
    k = w * (w + 1) ** 2
    return GwBounds(
        w=w,
        lower=k / (k - 2 * w + 2),
        upper=(w * w + w) / (w * w + 1),
        mu_P_Hare=w / (w + 1),
        mu_P_Stag=2 / (w + 1) ** 2,
    )


# ---------------------------------------------------------------------------
# Star graph oracle
# ---------------------------------------------------------------------------


def _leaf_array(x: Sequence[float]) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.size < 1:
        raise DomainError("at least one leaf required")
    if np.any(~np.isfinite(x)) or np.any(x <= 0) or np.any(x >= 1):
        raise DomainError("leaf probabilities must lie strictly inside (0,1)")
    return x


def star_fixed_point_solve(
    x: Sequence[float], w: float, eps: float = 1e-10, max_iter: int = 200
) -> np.ndarray:
    """Mixed fixed point sharing the leaf log-odds differences of ``x``.

    Leaf i keeps the odds ratio c_i relative to leaf 0 and the leaves'
    A-probabilities must sum to wn/(w+1); the common parameter is found by
    bisection on [0,1].
    """
    x = _leaf_array(x)
    if not w > 0 or not eps > 0:
        raise DomainError("w and eps must be positive")
    n = x.size
    target = w * n / (w + 1)
    odds = x / (1 - x)
    c = odds / odds[0]

    def leaves(t: float) -> np.ndarray:
        return c * t / (1 + (c - 1) * t)

    lo, hi = 0.0, 1.0
    best, best_g = 0.5, math.inf
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        g = leaves(mid).sum() - target
        if abs(g) < best_g:
            best, best_g = mid, abs(g)
        if best_g <= eps or mid in (lo, hi):
            break
        if g < 0:
            lo = mid
        else:
            hi = mid
    return leaves(best)


def star_oracle_residual(x: Sequence[float], x_solved: Sequence[float], y: float, w: float) -> float:
    """f(y): unimodal center term minus the product fixed by the leaf invariants."""
    x, xs = np.asarray(x, dtype=float), np.asarray(x_solved, dtype=float)
    a, b = w / (w + 1), 1 / (w + 1)
    lhs = math.exp(a * math.log(y * (w + 1) / w) + b * math.log((1 - y) * (w + 1)))
    logprod = np.sum(xs * np.log(x / xs) + (1 - xs) * np.log((1 - x) / (1 - xs)))
    return lhs - math.exp(float(logprod))


@dataclass(frozen=True)
class StarOracleAnswer:
    """Predicted limit of a star trajectory.

    ``x_solved`` and ``constraint_residual`` are set only when the sign test
    was needed; ``f_value`` is the residual f(y) evaluated there.
    """

    label: str
    x_solved: tuple[float, ...] | None = None
    constraint_residual: float | None = None
    f_value: float | None = None


def star_oracle(x: Sequence[float], y: float, w: float, eps: float = 1e-10) -> StarOracleAnswer:
    """Label ('A', 'B' or 'Mixed') of the limit reached from leaves ``x`` and center ``y``,
    all given as probabilities of strategy A."""
    x = _leaf_array(x)
    if not 0 < y < 1:
        raise DomainError("center probability must lie strictly inside (0,1)")
    if not w > 0 or not eps > 0:
        raise DomainError("w and eps must be positive")
    if w < 1:
        ans = star_oracle(1 - x, 1 - y, 1 / w, eps)
        swap = {"A": "B", "B": "A", "Mixed": "Mixed"}
        xs = None if ans.x_solved is None else tuple(1 - v for v in ans.x_solved)
        return StarOracleAnswer(swap[ans.label], xs, ans.constraint_residual, ans.f_value)

    n = x.size
    thr, yc = w * n / (w + 1), w / (w + 1)
    s = float(x.sum())
    if s > thr and y > yc:
        return StarOracleAnswer("A")
    if s < thr and y < yc:
        return StarOracleAnswer("B")
    xs = star_fixed_point_solve(x, w, eps)
    f = star_oracle_residual(x, xs, y, w)
    res = float(abs(xs.sum() - thr))
    out = tuple(float(v) for v in xs)
    if abs(f) < math.sqrt(eps):
        label = "Mixed"
    elif s > thr:
        label = "A" if f > 0 else "B"
    elif s < thr:
        label = "A" if f < 0 else "B"
    else:
        label = "A" if y > yc else "B"
    return StarOracleAnswer(label, out, res, f)


# ---------------------------------------------------------------------------
# Monte Carlo average price of anarchy
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ApoaEstimate:
    """Monte Carlo average price of anarchy.

    ``histogram`` maps limit labels to fractions of all samples; together
    with ``unresolved_fraction`` it sums to one.
    """

    estimate: float
    std_error: float
    ci_low: float
    ci_high: float
    n_samples: int
    n_resolved: int
    histogram: dict[str, float]
    unresolved_fraction: float
    optimum: float
    kind: str
    seed: int
    mean_objective: float

    @property
    def ci(self) -> tuple[float, float]:
        return self.ci_low, self.ci_high

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "std_error": self.std_error,
            "ci": [self.ci_low, self.ci_high],
            "n_samples": self.n_samples,
            "n_resolved": self.n_resolved,
            "histogram": dict(sorted(self.histogram.items())),
            "unresolved_fraction": self.unresolved_fraction,
            "optimum": self.optimum,
            "kind": self.kind,
            "seed": self.seed,
            "mean_objective": self.mean_objective,
        }


def classify_rows(game: Game, P: np.ndarray, snap_tol: float = 1e-6, field_tol: float = 1e-8):
    """Limit label and social objective for each row (objective is nan if unresolved)."""
    resid = np.abs(field_array(game, P)).max(axis=1)
    labels, objs = [], np.full(len(P), np.nan)
    form = game.form
    for k in range(len(P)):
        rep = classify_state(game, P[k], float(resid[k]), snap_tol, field_tol)
        labels.append(rep.label)
        if rep.classification != "unresolved":
            q = rep.profile.flat
            objs[k] = float(form.player_sums(q * form.values(q)).sum())
    return labels, objs


def _run_chunk(args) -> tuple[list[str], np.ndarray]:
    game, seed, start, stop, opts, snap_tol, field_tol = args
    P0 = sample_profiles(seed, game.shape, range(start, stop))
    res = integrate_batch(game, P0, opts, on_failure="mark")
    labels, objs = classify_rows(game, res.P, snap_tol, field_tol)
    for k in np.flatnonzero(res.status == STATUS_FAILED):
        labels[k], objs[k] = "unresolved", np.nan
    return labels, objs


def worker_count(requested: int | None, jobs: int) -> int:
    cap = os.cpu_count() or 1
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            raise ConfigurationError(f"{THREADS_ENV} must be an integer") from None
    n = cap if requested is None else min(int(requested), cap)
    return max(1, min(n, jobs))


def apoa_monte_carlo(
    game: Game,
    n_samples: int,
    master_seed: int,
    opts: IntegratorOptions | None = None,
    opt: float | None = None,
    chunk: int = 1024,
    workers: int | None = None,
    snap_tol: float = 1e-6,
    field_tol: float = 1e-8,
) -> ApoaEstimate:
    """Average price of anarchy under uniform initial conditions.

    Sample k uses its own RNG stream derived from (master_seed, k), and
    chunks are fixed by sample index, so the result does not depend on the
    number of workers.  Unresolved samples are excluded from the mean.
    """
    n_samples = int(n_samples)
    if n_samples < 1:
        raise DomainError("n_samples must be positive")
    opts = opts or IntegratorOptions()
    if opt is None:
        try:
            opt = optimum(game)
        except ConfigurationError:
            raise ConfigurationError("optimum unavailable; pass opt explicitly") from None
    opt = float(opt)
    if not opt > 0:
        raise DomainError("the optimum must be positive")

    jobs = [
        (game, int(master_seed), s, min(s + chunk, n_samples), opts, snap_tol, field_tol)
        for s in range(0, n_samples, chunk)
    ]
    nw = worker_count(workers, len(jobs))
    if nw > 1:
        with ProcessPoolExecutor(max_workers=nw) as ex:
            parts = list(ex.map(_run_chunk, jobs))
    else:
        parts = [_run_chunk(j) for j in jobs]
    labels = [lab for part in parts for lab in part[0]]
    objs = np.concatenate([part[1] for part in parts])

    ok = np.isfinite(objs)
    k = int(ok.sum())
    if k == 0:
        raise NumericalFailure("no Monte Carlo sample reached a resolved limit")
    vals = objs[ok]
    mean = float(np.mean(vals))
    se_mean = float(np.std(vals, ddof=1) / math.sqrt(k)) if k > 1 else 0.0
    if game.kind == "cost":
        est, se = mean / opt, se_mean / opt
    else:
        est, se = opt / mean, opt * se_mean / mean**2

    counts = Counter(lab for lab in labels if lab != "unresolved")
    hist = {lab: c / n_samples for lab, c in sorted(counts.items())}
    return ApoaEstimate(
        estimate=est,
        std_error=se,
        ci_low=est - 1.96 * se,
        ci_high=est + 1.96 * se,
        n_samples=n_samples,
        n_resolved=k,
        histogram=hist,
        unresolved_fraction=(n_samples - k) / n_samples,
        optimum=opt,
        kind=game.kind,
        seed=int(master_seed),
        mean_objective=mean,
    )


# ---------------------------------------------------------------------------
# Rasters
# ---------------------------------------------------------------------------


@dataclass
class BasinRaster:
    """Limit labels on a regular grid of cell centers.

    ``labels[j][i]`` belongs to the cell centered at (xs[i], ys[j]); x is the
    first-strategy probability of every player but the last, y that of the
    last player.
    """

    xs: np.ndarray
    ys: np.ndarray
    labels: list[list[str]]
    strategy: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def resolution(self) -> int:
        return len(self.xs)

    def fraction(self, label: str) -> float:
        flat = [lab for row in self.labels for lab in row]
        return flat.count(label) / len(flat)

    def label_set(self) -> list[str]:
        return sorted({lab for row in self.labels for lab in row})

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "j", "x", "y", "label"])
        for j, y in enumerate(self.ys):
            for i, x in enumerate(self.xs):
                w.writerow([i, j, repr(float(x)), repr(float(y)), self.labels[j][i]])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "BasinRaster":
        rows = list(csv.DictReader(io.StringIO(text)))
        ni = 1 + max(int(r["i"]) for r in rows)
        nj = 1 + max(int(r["j"]) for r in rows)
        xs, ys = np.zeros(ni), np.zeros(nj)
        labels = [[""] * ni for _ in range(nj)]
        for r in rows:
            i, j = int(r["i"]), int(r["j"])
            xs[i], ys[j] = float(r["x"]), float(r["y"])
            labels[j][i] = r["label"]
        return cls(xs, ys, labels)


def projection_profiles(game: Game, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Flat profiles where all players but the last play strategy 0 with prob x
    and the last player with prob y (rows ordered y-major)."""
    if any(k != 2 for k in game.shape):
        raise DomainError("rasters need two strategies per player")
    X, Y = np.meshgrid(xs, ys)
    X, Y = X.ravel(), Y.ravel()
    n = game.player_count
    P = np.empty((X.size, 2 * n))
    P[:, 0 : 2 * (n - 1) : 2] = X[:, None]
    P[:, 1 : 2 * (n - 1) : 2] = 1 - X[:, None]
    P[:, -2], P[:, -1] = Y, 1 - Y
    return P


def basin_raster(
    game: Game,
    resolution: int,
    opts: IntegratorOptions | None = None,
    snap_tol: float = 1e-6,
    field_tol: float = 1e-8,
) -> BasinRaster:
    """Integrate from every cell center and record the limit label.

    For a two-player game the axes are the two players' first-strategy
    probabilities; for a star the leaves share the x coordinate and the
    center takes y.
    """
    resolution = int(resolution)
    if resolution < 2:
        raise DomainError("resolution must be at least 2")
    centers = (np.arange(resolution) + 0.5) / resolution
    P0 = projection_profiles(game, centers, centers)
    res = integrate_batch(game, P0, opts or IntegratorOptions(), on_failure="mark")
    labels, _ = classify_rows(game, res.P, snap_tol, field_tol)
    for k in np.flatnonzero(res.status == STATUS_FAILED):
        labels[k] = "unresolved"
    grid = [labels[j * resolution : (j + 1) * resolution] for j in range(resolution)]
    return BasinRaster(centers, centers.copy(), grid)
