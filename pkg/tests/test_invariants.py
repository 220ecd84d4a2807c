"""Potential, relative entropy, local Lyapunov function and conserved quantities."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import stag_profile, star_profile
from strategies import profiles
from replicator_atlas.basins import stag_hunt_manifold, star_fixed_point_solve
from replicator_atlas.dynamics import IntegratorOptions, integrate
from replicator_atlas.errors import DomainError, PreconditionError
from replicator_atlas.games import MixedProfile, balls_bins, gw_game, star_stag_hunt
from replicator_atlas.invariants import (
    InvariantSpec,
    drift,
    gw_invariant,
    gw_log_invariant,
    kl_bipartite_invariant,
    local_lyapunov_Z,
    monotone_violation,
    potential,
    relative_entropy,
    stag_hunt_log_invariant,
    star_kl_closed_form,
    star_log_odds_invariant,
    star_partition,
)

FIXED_T = IntegratorOptions(mode="log", horizon=50.0, converge_tol=0.0)


class TestPotential:
    def test_balls_bins_pure(self, bb22) -> None:
        assert potential(bb22, MixedProfile.pure((2, 2), (0, 1))) == pytest.approx(4.0)

    def test_g2_both_stag(self, g2) -> None:
        assert potential(g2, stag_profile(1.0, 1.0)) == pytest.approx(2.0)

    @given(profiles((2, 2)))
    def test_coordination_potential_is_welfare(self, p) -> None:
        g = gw_game(2.0)
        from replicator_atlas.games import social_objective

        assert potential(g, p) == pytest.approx(social_objective(g, p), abs=1e-12)

    def test_decreases_along_congestion_orbit(self) -> None:
        g = balls_bins(3, 2)
        tr = integrate(g, MixedProfile.from_vectors([[0.3, 0.7], [0.5, 0.5], [0.8, 0.2]]))
        assert monotone_violation(tr.potential, -1) <= 10 * tr.options.rtol


class TestRelativeEntropy:
    def test_zero_at_q(self) -> None:
        q = MixedProfile.from_vectors([[0.2, 0.8], [0.5, 0.5]])
        assert relative_entropy(q, q) == 0.0

    def test_single_player_value(self) -> None:
        q = MixedProfile.from_vectors([[2 / 3, 1 / 3]])
        p = MixedProfile.from_vectors([[0.5, 0.5]])
        want = (2 / 3) * math.log(4 / 3) + (1 / 3) * math.log(2 / 3)
        assert relative_entropy(q, p) == pytest.approx(want, rel=1e-12)
        assert relative_entropy(q, p) == pytest.approx(0.056633, abs=1e-6)

    def test_support_violation(self) -> None:
        q = MixedProfile.from_vectors([[0.5, 0.5]])
        p = MixedProfile.from_vectors([[1.0, 0.0]])
        with pytest.raises(DomainError):
            relative_entropy(q, p)

    @given(profiles((3, 2)), profiles((3, 2), interior=True))
    def test_nonnegative(self, q, p) -> None:
        assert relative_entropy(q, p) >= 0.0

    @given(profiles((3, 2), interior=True))
    def test_zero_only_on_agreement(self, p) -> None:
        q = MixedProfile.pure((3, 2), (0, 1))
        val = relative_entropy(q, p)
        agree = p.flat[0] == 1.0 and p.flat[4] == 1.0
        assert (val == 0.0) == agree


class TestLocalZ:
    def test_zero_at_q(self, g2) -> None:
        q = stag_profile(2 / 3, 2 / 3)
        assert local_lyapunov_Z(g2, q, q) == 0.0

    def test_requires_fixed_point(self, g2) -> None:
        with pytest.raises(PreconditionError):
            local_lyapunov_Z(g2, stag_profile(0.5, 0.5), stag_profile(0.5, 0.5))

    def test_positive_near_pure_hare(self, g2) -> None:
        q = stag_profile(0.0, 0.0)
        p = stag_profile(0.01, 0.02)
        # Stag is the worse strategy at (Hare,Hare); I = -ln(0.99) - ln(0.98)
        want = -math.log(0.99) - math.log(0.98) + 2 * (0.01 + 0.02)
        assert local_lyapunov_Z(g2, q, p) == pytest.approx(want, rel=1e-12)

    def test_decreases_near_mixed_equilibrium_below_potential(self, g2) -> None:
        q = stag_profile(2 / 3, 2 / 3)
        rng = np.random.default_rng(4)
        checked = 0
        while checked < 20:
            d = rng.uniform(-1e-3, 1e-3, size=2)
            p = stag_profile(2 / 3 + d[0], 2 / 3 + d[1])
            if potential(g2, p) >= potential(g2, q):
                continue
            tr = integrate(g2, p, IntegratorOptions(horizon=0.5, converge_tol=0.0, first_step=1e-3))
            # the claim only covers the part of the orbit still below the potential of q
            below = tr.potential < potential(g2, q)
            k = int(np.argmin(below)) if not below.all() else len(below)
            z = InvariantSpec("local_Z", q=q).evaluate_batch(g2, tr.states[:k])
            assert k >= 2
            assert monotone_violation(z, -1) == 0.0
            checked += 1


class TestKlBipartite:
    def test_zero_at_q(self, g2) -> None:
        q = stag_profile(2 / 3, 2 / 3)
        assert kl_bipartite_invariant(g2, q, ([0], [1]), q) == pytest.approx(0.0, abs=1e-15)

    def test_rejects_non_bipartite_partition(self, g2) -> None:
        q = stag_profile(2 / 3, 2 / 3)
        with pytest.raises(DomainError):
            kl_bipartite_invariant(g2, q, ([0, 1], []), q)

    def test_requires_fully_mixed(self, g2) -> None:
        q = stag_profile(1.0, 1.0)
        with pytest.raises(PreconditionError):
            kl_bipartite_invariant(g2, q, ([0], [1]), stag_profile(0.5, 0.5))

    def test_matches_stag_hunt_log_form(self, g2) -> None:
        q = stag_profile(2 / 3, 2 / 3)
        p = stag_profile(0.3, 0.7)
        kl = kl_bipartite_invariant(g2, q, ([0], [1]), p)
        assert kl == pytest.approx(-stag_hunt_log_invariant(0.3, 0.7, 2.0), rel=1e-12)

    def test_drift_g2(self, g2) -> None:
        spec = InvariantSpec("kl_bipartite", q=stag_profile(2 / 3, 2 / 3), partition=((0,), (1,)))
        tr = integrate(g2, stag_profile(0.35, 0.8), FIXED_T, [spec])
        assert drift(tr.invariants["kl_bipartite"]) <= 1e-6

    def test_star_closed_form(self, star3) -> None:
        xs = star_fixed_point_solve([0.3, 0.6, 0.8], 2.0)
        q = star_profile(xs, 2 / 3)
        rng = np.random.default_rng(8)
        for _ in range(5):
            p = star_profile(rng.uniform(0.05, 0.95, 3), rng.uniform(0.05, 0.95))
            val = kl_bipartite_invariant(star3, q, star_partition(star3), p)
            assert val == pytest.approx(star_kl_closed_form(xs, 2.0, p), abs=1e-12)


class TestStarLogOdds:
    def test_equal_leaves(self) -> None:
        assert star_log_odds_invariant(star_profile([0.4, 0.4, 0.7], 0.5), 0, 1) == 0.0

    def test_value(self) -> None:
        val = star_log_odds_invariant(star_profile([0.8, 0.5], 0.5), 0, 1)
        assert val == pytest.approx(math.log(4), rel=1e-12)

    def test_center_is_not_a_leaf(self) -> None:
        with pytest.raises(DomainError):
            star_log_odds_invariant(star_profile([0.8, 0.5], 0.5), 0, 2)

    def test_drift(self, star3) -> None:
        spec = InvariantSpec("star_log_odds", leaves=(0, 2))
        tr = integrate(star3, star_profile([0.2, 0.5, 0.9], 0.6), FIXED_T, [spec])
        assert drift(tr.invariants[spec.name]) <= 1e-6


class TestGw:
    def test_equal_coordinates(self) -> None:
        assert gw_invariant(0.37, 0.37, 2.5) == 0.0

    def test_manifold_zero(self) -> None:
        assert abs(gw_invariant(0.4, stag_hunt_manifold(0.4), 2.0)) <= 1e-12

    @given(st.floats(0.001, 0.999))
    def test_manifold_zero_everywhere(self, p1) -> None:
        assert abs(gw_invariant(p1, stag_hunt_manifold(p1), 2.0)) <= 1e-12

    def test_domain(self) -> None:
        with pytest.raises(DomainError):
            gw_invariant(1.2, 0.3, 2.0)
        with pytest.raises(DomainError):
            gw_log_invariant(0.0, 0.3, 2.0)

    def test_log_drift_g3(self) -> None:
        spec = InvariantSpec("gw_log_invariant", w=3.0)
        tr = integrate(gw_game(3.0), stag_profile(0.7, 0.85), FIXED_T, [spec])
        assert drift(tr.invariants[spec.name]) <= 1e-6

    def test_difference_form_not_conserved_off_zero_set(self, g2) -> None:
        spec = InvariantSpec("gw_invariant", w=2.0)
        tr = integrate(g2, stag_profile(0.3, 0.6), FIXED_T, [spec])
        assert drift(tr.invariants["gw_invariant"]) > 1e-3
        assert not spec.conserved


class TestInvariantSpec:
    def test_missing_parameter(self) -> None:
        with pytest.raises(DomainError):
            InvariantSpec("gw_invariant")
        with pytest.raises(DomainError):
            InvariantSpec("kl_bipartite", q=MixedProfile.uniform((2, 2)))

    def test_unknown_kind(self) -> None:
        with pytest.raises(DomainError):
            InvariantSpec("entropy")

    def test_evaluate_matches_function(self, g2) -> None:
        p = stag_profile(0.25, 0.6)
        assert InvariantSpec("gw_invariant", w=2.0).evaluate(g2, p) == gw_invariant(0.25, 0.6, 2.0)
        assert InvariantSpec("potential").evaluate(g2, p) == pytest.approx(potential(g2, p))

    def test_log_states_agree_with_probabilities(self) -> None:
        g = star_stag_hunt(2, 1.5)
        p = star_profile([0.3, 0.6], 0.4)
        spec = InvariantSpec("star_log_odds", leaves=(0, 1))
        a = spec.evaluate_batch(g, p.flat)
        b = spec.evaluate_batch(g, p.flat, np.log(p.flat))
        np.testing.assert_allclose(a, b, rtol=1e-14)
