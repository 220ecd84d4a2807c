"""Acceptance criteria 1-10, each at its stated tolerance.

Each check prints one ``criterion N: PASS|FAIL`` line (also collected into
the pytest terminal summary).  Run on its own with
``python3 -m pytest tests/test_acceptance.py -v`` or ``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import itertools
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import conftest
import oracles
from replicator_atlas.basins import (
    apoa_monte_carlo,
    gw_apoa_bounds,
    gw_triangles,
    stag_hunt_basin_measures,
    stag_hunt_classify,
    stag_hunt_manifold,
    stag_hunt_manifold_slope,
    star_fixed_point_solve,
    star_oracle,
    triangle_excess,
)
from replicator_atlas.dynamics import STATUS_CONVERGED, IntegratorOptions, field_array, integrate_batch
from replicator_atlas.equilibria import (
    classify_stability,
    enumerate_weakly_stable_supports,
    is_nash,
    is_weakly_stable,
    uncountable_family,
)
from replicator_atlas.errors import PreconditionError
from replicator_atlas.games import (
    CongestionGame,
    CoordinationEdge,
    MixedProfile,
    NetworkCoordinationGame,
    balls_bins,
    gw_game,
    star_stag_hunt,
)
from replicator_atlas.invariants import InvariantSpec, star_partition

WS = (1.5, 2.0, 3.0)
STAR_NS = (2, 3, 5)
FIXED_T50 = IntegratorOptions(mode="log", horizon=50.0, converge_tol=0.0)


def _report(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def _two_player(p1, p2) -> np.ndarray:
    p1, p2 = np.asarray(p1), np.asarray(p2)
    return np.column_stack([p1, 1 - p1, p2, 1 - p2])


def _star_rows(game, X, Y) -> np.ndarray:
    a_first = game.strategy_labels[0] == "A"
    cols = []
    for pa in [*X.T, Y]:
        pa = pa if a_first else 1 - pa
        cols += [pa, 1 - pa]
    return np.column_stack(cols)


class _Extremes:
    """Running min and max of a per-row scalar evaluated after each accepted step."""

    def __init__(self, f, init: np.ndarray):
        self.f = f
        self.lo = init.copy()
        self.hi = init.copy()

    def __call__(self, rows, t, P, L) -> None:
        v = self.f(P, L)
        self.lo[rows] = np.minimum(self.lo[rows], v)
        self.hi[rows] = np.maximum(self.hi[rows], v)

    @property
    def spread(self) -> np.ndarray:
        return self.hi - self.lo


def _random_congestion(rng, players=None) -> CongestionGame:
    m = int(rng.integers(2, 4))
    resources = tuple((float(rng.uniform(0.1, 2.0)), float(rng.uniform(0.0, 2.0))) for _ in range(m))
    subsets = [tuple(e for e in range(m) if mask >> e & 1) for mask in range(1, 2**m)]
    strat = []
    for _ in range(players or int(rng.integers(2, 4))):
        k = int(rng.integers(2, 4))
        pick = rng.choice(len(subsets), size=min(k, len(subsets)), replace=False)
        strat.append(tuple(subsets[i] for i in sorted(pick)))
    return CongestionGame(resources, tuple(strat))


def _random_coordination(rng) -> NetworkCoordinationGame:
    n = int(rng.integers(2, 5))
    edges = []
    for i, j in itertools.combinations(range(n), 2):
        if rng.uniform() < 0.7 or not edges:
            edges.append(CoordinationEdge(i, j, tuple(tuple(float(v) for v in row) for row in rng.uniform(-1, 3, (2, 2)))))
    return NetworkCoordinationGame(n, 2, tuple(edges))


def _random_starts(rng, shape, count) -> np.ndarray:
    return np.vstack([np.concatenate([rng.dirichlet(np.ones(k)) for k in shape]) for _ in range(count)])


# ---------------------------------------------------------------------------


def test_criterion_01_stag_hunt_basin_mass() -> None:
    t0 = time.perf_counter()
    est = apoa_monte_carlo(gw_game(2.0), 10_000, 1)
    elapsed = time.perf_counter() - t0
    hare = est.histogram.get("(Hare,Hare)", 0.0)
    ok = abs(hare - 0.7364) <= 0.02 and elapsed < 120.0
    _report(1, ok, f"Hare fraction {hare:.4f} (target 0.7364 +/- 0.02), runtime {elapsed:.1f} s")


def test_criterion_02_exact_measures() -> None:
    hare, stag = stag_hunt_basin_measures()
    r = 2 * math.sqrt(3) * math.pi
    ok = hare == (9 + r) / 27 and stag == (18 - r) / 27 and abs(hare + stag - 1) <= 2 * np.finfo(float).eps
    quad = oracles.hare_area_quadrature()
    ok = ok and abs(hare - quad) <= 1e-12
    _report(2, ok, f"hare={hare!r} stag={stag!r} sum-1={hare + stag - 1:.1e} quad diff={hare - quad:.1e}")


def test_criterion_03_manifold() -> None:
    rng = np.random.default_rng(3)
    pts = rng.uniform(size=(1000, 2))
    res = integrate_batch(gw_game(2.0), _two_player(pts[:, 0], pts[:, 1]))
    checked = agree = 0
    for (a, b), p in zip(pts, res.P):
        if abs(b - stag_hunt_manifold(a)) <= 1e-3:
            continue
        pred = stag_hunt_classify(a, b)
        sim = "Stag" if p[0] > 0.5 and p[2] > 0.5 else "Hare" if p[0] < 0.5 and p[2] < 0.5 else "?"
        checked += 1
        agree += pred == sim
    p1 = (np.arange(100) + 0.5) / 100
    y = stag_hunt_manifold(p1)
    F = field_array(gw_game(2.0), _two_player(p1, y))
    v = F[:, [0, 2]]
    tang = np.column_stack([np.ones_like(p1), stag_hunt_manifold_slope(p1)])
    rel = np.abs(v[:, 0] * tang[:, 1] - v[:, 1] * tang[:, 0]) / (
        np.linalg.norm(v, axis=1) * np.linalg.norm(tang, axis=1) + 1e-300
    )
    ok = agree == checked and rel.max() <= 1e-6
    _report(3, ok, f"agreement {agree}/{checked} outside band, max relative tangency error {rel.max():.1e}")


def _drift(game, spec, P0) -> np.ndarray:
    f = lambda P, L: spec.evaluate_batch(game, P, L)
    mon = _Extremes(f, f(P0, np.log(P0)))
    res = integrate_batch(game, P0, FIXED_T50, monitor=mon)
    assert np.allclose(res.t, 50.0)
    return mon.spread


def test_criterion_04_conservation() -> None:
    rng = np.random.default_rng(4)
    worst = {}
    for w in WS:
        g = gw_game(w)
        P0 = _two_player(rng.uniform(size=100), rng.uniform(size=100))
        s = w / (w + 1)
        q = MixedProfile.from_vectors([[s, 1 - s], [s, 1 - s]])
        worst[f"kl G({w})"] = _drift(g, InvariantSpec("kl_bipartite", q=q, partition=((0,), (1,))), P0).max()
        worst[f"gw_log G({w})"] = _drift(g, InvariantSpec("gw_log_invariant", w=w), P0).max()
    for n in STAR_NS:
        g = star_stag_hunt(n, 2.0)
        P0 = _star_rows(g, rng.uniform(size=(100, n)), rng.uniform(size=100))
        xs = star_fixed_point_solve(rng.uniform(0.2, 0.8, n), 2.0)
        q = MixedProfile.from_vectors([[v, 1 - v] for v in xs] + [[2 / 3, 1 / 3]])
        worst[f"kl star n={n}"] = _drift(g, InvariantSpec("kl_bipartite", q=q, partition=star_partition(g)), P0).max()
        worst[f"log-odds star n={n}"] = _drift(g, InvariantSpec("star_log_odds", leaves=(0, n - 1)), P0).max()
    top = max(worst, key=worst.get)
    ok = all(v <= 1e-6 for v in worst.values())
    _report(4, ok, f"{len(worst)} families x 100 runs, T=50, worst drift {worst[top]:.1e} ({top})")


def _corpus(rng) -> list:
    games = [balls_bins(2, 2), balls_bins(3, 2), balls_bins(3, 3)]
    games += [gw_game(w) for w in (1.0, *WS)]
    games += [star_stag_hunt(n, 2.0) for n in STAR_NS]
    games += [_random_congestion(rng) for _ in range(10)]
    games += [_random_coordination(rng) for _ in range(10)]
    return games


def test_criterion_05_lyapunov_monotonicity() -> None:
    rng = np.random.default_rng(5)
    worst, runs = 0.0, 0
    for game in _corpus(rng):
        sign = game.form.sign
        for mode in ("clamp", "log"):
            opts = IntegratorOptions(mode=mode)
            P0 = _random_starts(rng, game.shape, 20)
            last = game.form.potential(P0)
            state = {"worst": 0.0}

            def mon(rows, t, P, L, last=last, state=state, opts=opts, sign=sign, game=game) -> None:
                psi = game.form.potential(P)
                # a step that moves the potential the wrong way, in units of 10 x rtol x scale
                bad = -sign * (psi - last[rows]) / (10 * opts.rtol * np.maximum(1.0, np.abs(last[rows])))
                state["worst"] = max(state["worst"], float(bad.max()))
                last[rows] = psi

            integrate_batch(game, P0, opts, monitor=mon)
            worst = max(worst, state["worst"])
            runs += len(P0)
    ok = worst <= 1.0
    _report(5, ok, f"{runs} trajectories, worst wrong-way step {worst:.2f} x (10 rtol)")


def test_criterion_06_star_oracle() -> None:
    rng = np.random.default_rng(6)
    n, w = 3, 2.0
    g = star_stag_hunt(n, w)
    X, Y = rng.uniform(size=(500, n)), rng.uniform(size=500)
    res = integrate_batch(g, _star_rows(g, X, Y))
    a_first = g.strategy_labels[0] == "A"
    checked = agree = 0
    for k in range(500):
        ans = star_oracle(X[k], Y[k], w)
        if ans.f_value is not None and abs(ans.f_value) < 1e-3:
            continue
        center_a = res.P[k, -2] if a_first else res.P[k, -1]
        checked += 1
        agree += ans.label == ("A" if center_a > 0.5 else "B")
    rate = agree / checked
    sum_err = scan_err = 0.0
    for _ in range(20):
        x = rng.uniform(0.01, 0.99, int(rng.integers(2, 6)))
        xs = star_fixed_point_solve(x, w)
        sum_err = max(sum_err, abs(xs.sum() - w * len(x) / (w + 1)))
        scan_err = max(scan_err, float(np.max(np.abs(xs - oracles.star_root_scan(x, w)))))
    ok = rate >= 0.99 and sum_err <= 1e-8 and scan_err <= 1e-8
    _report(6, ok, f"agreement {agree}/{checked} ({rate:.2%}), constraint err {sum_err:.1e}, root-scan err {scan_err:.1e}")


def test_criterion_07_gw_bounds() -> None:
    rng = np.random.default_rng(7)
    parts, ok = [], True
    for w in WS:
        b = gw_apoa_bounds(w)
        lower = w * (w + 1) ** 2 / (w * (w + 1) ** 2 - 2 * w + 2)
        upper = (w * w + w) / (w * w + 1)
        assert math.isclose(b.lower, lower) and math.isclose(b.upper, upper)
        est = apoa_monte_carlo(gw_game(w), 10_000, 70 + int(10 * w))
        inside = est.ci_low <= upper and est.ci_high >= lower
        ok &= inside
        parts.append(f"w={w}: {est.estimate:.4f} [{est.ci_low:.4f},{est.ci_high:.4f}] in [{lower:.4f},{upper:.4f}]")
        g = gw_game(w)
        for name, tri in gw_triangles(w).items():
            # uniform points in the triangle
            u = rng.uniform(size=(1000, 2))
            flip = u.sum(axis=1) > 1
            u[flip] = 1 - u[flip]
            pts = tri[0] + u[:, :1] * (tri[1] - tri[0]) + u[:, 1:] * (tri[2] - tri[0])
            P0 = _two_player(pts[:, 0], pts[:, 1])
            f = lambda P, L, tri=tri: triangle_excess(tri, P[:, [0, 2]])
            mon = _Extremes(f, f(P0, None))
            res = integrate_batch(g, P0, monitor=mon)
            target = 1.0 if name == "Stag" else 0.0
            reached = np.all(np.abs(res.P[:, [0, 2]] - target) < 1e-6, axis=1)
            stays = mon.hi <= 1e-9
            ok &= bool(stays.all() and reached.all() and np.all(res.status == STATUS_CONVERGED))
            parts.append(f"{name}(w={w}) invariant {int(stays.sum())}/1000")
    _report(7, ok, "; ".join(parts))


def test_criterion_08_balls_and_bins() -> None:
    est = apoa_monte_carlo(balls_bins(3, 3), 2000, 8)
    ok = abs(est.estimate - 1.0) <= 0.01 and est.unresolved_fraction < 0.005
    counts = []
    for n in (2, 3):
        found = enumerate_weakly_stable_supports(n)
        perms = {tuple(p.pure_choices()) for p in found if p.is_pure()}
        ok &= len(found) == math.factorial(n) and perms == set(itertools.permutations(range(n)))
        counts.append(len(found))
    g4 = balls_bins(4, 4)
    fam = sum(bool(is_nash(g4, uncountable_family(4, x))) for x in np.linspace(0.25, 0.75, 21))
    ok &= fam == 21
    _report(8, ok, f"APoA {est.estimate:.4f}, unresolved {est.unresolved_fraction:.2%}, "
                   f"supports n=2,3: {counts}, family Nash {fam}/21")


def _fixed_point_corpus(rng) -> list:
    out = []
    for game in _corpus(rng):
        for choice in itertools.product(*[range(k) for k in game.shape]):
            out.append((game, MixedProfile.pure(game.shape, choice)))
    for w in (1.0, *WS):
        s = w / (w + 1)
        out.append((gw_game(w), MixedProfile.from_vectors([[s, 1 - s], [s, 1 - s]])))
    out.append((balls_bins(2, 2), MixedProfile.uniform((2, 2))))
    out.append((balls_bins(3, 3), MixedProfile.uniform((3, 3, 3))))
    out += [(balls_bins(4, 4), uncountable_family(4, x)) for x in (0.3, 0.5, 0.7)]
    for n in STAR_NS:
        xs = star_fixed_point_solve(rng.uniform(0.2, 0.8, n), 2.0)
        out.append((star_stag_hunt(n, 2.0), MixedProfile.from_vectors([[v, 1 - v] for v in xs] + [[2 / 3, 1 / 3]])))
    return out


def test_criterion_09_stability_spectra() -> None:
    g = gw_game(2.0)
    mixed = classify_stability(g, MixedProfile.from_vectors([[2 / 3, 1 / 3], [2 / 3, 1 / 3]])).label
    pures = [classify_stability(g, MixedProfile.pure((2, 2), (c, c))).label for c in (0, 1)]
    ok = mixed == "unstable" and pures == ["stable", "stable"]
    rng = np.random.default_rng(9)
    stable = passed = 0
    for game, q in _fixed_point_corpus(rng):
        if not classify_stability(game, q).stable:
            continue
        stable += 1
        try:
            passed += bool(is_weakly_stable(game, q))
        except PreconditionError:
            pass
    ok &= passed == stable and stable > 0
    _report(9, ok, f"G(2): mixed {mixed}, pure {pures}; weakly stable {passed}/{stable} stable fixed points")


def test_criterion_10_five_halves() -> None:
    rng = np.random.default_rng(10)
    worst, margin_ok = 0.0, True
    for k in range(20):
        game = _random_congestion(rng, players=int(rng.integers(2, 4)))
        est = apoa_monte_carlo(game, 300, 1000 + k)
        worst = max(worst, est.estimate)
        margin_ok &= est.estimate <= 2.5 + (est.ci_high - est.estimate)
    _report(10, margin_ok, f"20 random linear congestion games, max APoA estimate {worst:.4f} (limit 2.5 + CI)")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
