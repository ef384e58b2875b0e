import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from offload_game.model import Offer, Scheme, ap_utility, as_arrays, make_profiles
from offload_game.response import (
    ResponseContext,
    best_response_bonus,
    best_response_bonus_all,
    best_response_salary,
    best_response_salary_all,
    best_response_spb,
    best_response_spb_all,
)
from oracles import follower_objective, grid_argmax, random_br_instance


def _pair(a, w, z, T=5.0, p=1.0):
    """AP 0 with net cost ``a`` facing one other AP of quality 1 offloading ``z``."""
    return make_profiles([p + a, 1.0], [w, 1.0], [T, 10.0 * max(z, 1.0)]), [0.0, z]


class TestSalaryPlusBonus:
    def test_nonpositive_net_cost_goes_to_capacity(self):
        prof = make_profiles([2.0, 1.0], [0.5, 0.5], [5.0, 5.0])
        assert best_response_spb(0, [0, 3], Offer(3.0, 17.0), prof) == 5.0

    def test_interior(self):
        prof, d = _pair(1.0, 1.0, 1.0)
        assert best_response_spb(0, d, Offer(1.0, 4.0), prof) == pytest.approx(1.0)

    def test_small_bonus_gives_zero(self):
        prof, d = _pair(1.0, 1.0, 1.0)
        assert best_response_spb(0, d, Offer(1.0, 0.5), prof) == 0.0

    def test_nobody_else_offloads(self):
        prof, d = _pair(1.0, 1.0, 0.0)
        assert best_response_spb(0, d, Offer(1.0, 4.0), prof) == 0.0

    @given(st.floats(0.01, 5), st.floats(0.0, 5), st.floats(0.01, 1), st.floats(0.01, 5))
    def test_zero_bonus_is_salary_rule(self, c, p, w, z):
        prof = make_profiles([c, 1.0], [w, 1.0], [3.0, 10.0])
        d = [0.0, z]
        assert best_response_spb(0, d, Offer(p, 0.0), prof) == best_response_salary(0, Offer(p, 0.0), prof)

    @given(st.floats(0.01, 5), st.floats(0.01, 1), st.floats(0.01, 5), st.floats(0, 50), st.floats(0, 50))
    def test_nondecreasing_in_bonus(self, a, w, z, b1, b2):
        prof, d = _pair(a, w, z)
        lo, hi = sorted((b1, b2))
        assert best_response_spb(0, d, Offer(1.0, lo), prof) <= best_response_spb(0, d, Offer(1.0, hi), prof)


class TestSalaryOnly:
    @pytest.mark.parametrize("p,c,T,expected", [(1.0, 2.0, 4.0, 0.0), (2.0, 2.0, 4.0, 4.0), (5.0, 2.0, 3.0, 3.0)])
    def test_threshold(self, p, c, T, expected):
        prof = make_profiles([c], [0.5], [T])
        assert best_response_salary(0, Offer(p, 0.0), prof) == expected


class TestBonusOnly:
    def test_nobody_else_offloads(self):
        prof = make_profiles([1.0, 1.0], [1.0, 1.0], [5.0, 5.0])
        assert best_response_bonus(0, [0.0, 0.0], 100.0, prof) == 0.0

    def test_interior(self):
        prof = make_profiles([0.5, 1.0], [1.0, 1.0], [5.0, 5.0], [0.5, 0.2])
        assert best_response_bonus(0, [0.0, 1.0], 9.0, prof) == pytest.approx(2.0)

    def test_negative_branch(self):
        prof = make_profiles([3.0, 1.0], [1.0, 1.0], [5.0, 5.0], [1.0, 0.2])
        assert best_response_bonus(0, [0.0, 4.0], 1.0, prof) == 0.0


class TestVectorised:
    def test_matches_scalar(self, rng):
        for _ in range(50):
            prof, d, p, B = random_br_instance(rng, n=5)
            arr = as_arrays(prof)
            offer = Offer(p, B)
            np.testing.assert_allclose(best_response_spb_all(d, offer, arr),
                                       [best_response_spb(i, d, offer, prof) for i in range(5)], rtol=1e-12)
            np.testing.assert_allclose(best_response_bonus_all(d, B, arr),
                                       [best_response_bonus(i, d, B, prof) for i in range(5)], rtol=1e-12)
            np.testing.assert_array_equal(best_response_salary_all(offer, arr),
                                          [best_response_salary(i, offer, prof) for i in range(5)])


class TestGridOracle:
    """Closed-form best responses against brute-force maximisation."""

    def test_oracle_objective_matches_model(self, rng):
        for scheme in ("spb", "salary", "bonus"):
            prof, d, p, B = random_br_instance(rng)
            ctx = ResponseContext.of(0, d, Offer(p, B), prof)
            ap = prof[0]
            for x in (0.0, 0.3, ap.capacity):
                dd = np.array(d)
                dd[0] = x
                ref = follower_objective(np.array([x]), scheme, c=ap.cost, w=ap.quality, z=ctx.z, p=p, B=B,
                                         penalty=ap.penalty, T=ap.capacity)[0]
                got = ap_utility(0, dd, Offer(p, B), prof, Scheme.parse(scheme))
                assert got == pytest.approx(ref, rel=1e-12, abs=1e-12)

    @pytest.mark.parametrize("scheme", ["spb", "salary", "bonus"])
    def test_random_draws(self, rng, scheme):
        for _ in range(200):
            prof, d, p, B = random_br_instance(rng)
            ap = prof[0]
            ctx = ResponseContext.of(0, d, Offer(p, B), prof)
            hi = 10 * ap.capacity if scheme == "bonus" else ap.capacity
            f = lambda x: follower_objective(x, scheme, c=ap.cost, w=ap.quality, z=ctx.z, p=p, B=B,
                                             penalty=ap.penalty, T=ap.capacity)
            x_grid, u_grid, h = grid_argmax(f, 0.0, hi, 10_000)
            if scheme == "spb":
                br = best_response_spb(0, d, Offer(p, B), prof)
            elif scheme == "salary":
                br = best_response_salary(0, Offer(p, 0.0), prof)
            else:
                br = min(best_response_bonus(0, d, B, prof), hi)
            assert abs(br - x_grid) <= h + 1e-6
            assert f(np.array([br]))[0] >= u_grid - 1e-8
