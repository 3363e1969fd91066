import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nneq.market_model import (
    CANONICAL,
    ISP,
    MarketParams,
    MarketSplit,
    Regime,
    StrategyProfile,
    check_full_coverage,
    coverage_bounds,
    cp_payoff,
    farthest_subscriber,
    indifferent_user,
    isp_payoffs,
    split_from_fees,
    user_total_utility,
    user_utility_content,
    user_utility_internet,
)
from nneq.oracle import simulate_users

EQ_FEES = StrategyProfile(p_tilde=1.25, q_N=1.75, q_NN=1.5, p_N=1.5, p_NN=1.25)
EQ_SPLIT = MarketSplit(0.25, 0.75, 0.25, 0.75)

fee = st.floats(-5, 5, allow_nan=False)
params_st = st.builds(
    MarketParams,
    v=st.floats(0, 10),
    v_star=st.floats(0, 10),
    t=st.floats(0.1, 3),
    c=st.floats(0, 2),
)
fees_st = st.builds(StrategyProfile, p_tilde=fee, q_N=fee, q_NN=fee, p_N=fee, p_NN=fee)


class TestParams:
    def test_rejects_nonpositive_t(self):
        with pytest.raises(ValueError):
            MarketParams(v=3, v_star=2, t=0, c=1)
        with pytest.raises(ValueError):
            MarketParams(v=3, v_star=2, t=-1, c=1)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            MarketParams(v=math.inf, v_star=2, t=1, c=1)

    def test_coverage_sufficient(self):
        assert CANONICAL.coverage_sufficient
        assert not MarketParams(v=2.9, v_star=2, t=1, c=1).coverage_sufficient

    def test_delta_q(self):
        assert EQ_FEES.delta_q == -0.25


class TestUtilities:
    def test_internet_examples(self):
        p = MarketParams(v=3.5, v_star=2, t=1, c=1)
        assert user_utility_internet(p, ISP.N, 0.0, StrategyProfile(p_N=1.5)) == 2.0
        assert user_utility_internet(p, ISP.NN, 1.0, StrategyProfile(p_NN=1.25)) == 2.25
        assert user_utility_internet(p, ISP.N, 0.0, StrategyProfile(p_N=p.v)) == 0.0

    def test_content_examples(self):
        p = MarketParams(v=3.5, v_star=2, t=1, c=1)
        assert user_utility_content(p, ISP.N, 0.25, StrategyProfile(q_N=1.75)) == 0.0
        assert user_utility_content(p, ISP.NN, 0.5, StrategyProfile(q_NN=1.5)) == 0.0
        assert user_utility_content(p, ISP.N, 0.0, StrategyProfile(q_N=0)) == 2.0

    def test_total_examples(self):
        assert user_total_utility(CANONICAL, ISP.N, 0.25, EQ_FEES, True) == pytest.approx(1.75, abs=1e-12)
        assert user_total_utility(CANONICAL, ISP.NN, 0.6, EQ_FEES, False) == user_utility_internet(
            CANONICAL, ISP.NN, 0.6, EQ_FEES
        )
        sym = StrategyProfile(q_N=1, q_NN=1, p_N=2, p_NN=2)
        assert user_total_utility(CANONICAL, ISP.N, 0.5, sym, True) == user_total_utility(
            CANONICAL, ISP.NN, 0.5, sym, True
        )

    @pytest.mark.parametrize("x", [-0.01, 1.01])
    def test_rejects_outside_unit_interval(self, x):
        with pytest.raises(ValueError):
            user_utility_internet(CANONICAL, ISP.N, x, EQ_FEES)
        with pytest.raises(ValueError):
            user_utility_content(CANONICAL, ISP.NN, x, EQ_FEES)

    def test_discrete_user_oracle_agrees_at_canonical_equilibrium(self):
        # the best option of every simulated user equals the analytic utility
        split = simulate_users(CANONICAL, EQ_FEES, 100_000)
        assert split.n_N == pytest.approx(0.25, abs=1e-4)
        assert split.n_sub_N == split.n_N and split.n_sub_NN == split.n_NN


class TestPayoffs:
    def test_canonical(self):
        pi_N, pi_NN = isp_payoffs(CANONICAL, EQ_FEES, EQ_SPLIT)
        assert pi_N == pytest.approx(0.125, abs=1e-12)
        assert pi_NN == pytest.approx(1.125, abs=1e-12)
        assert cp_payoff(EQ_FEES, EQ_SPLIT) == pytest.approx(0.625, abs=1e-12)

    def test_zero_margins(self):
        fees = StrategyProfile(p_N=CANONICAL.c, p_NN=CANONICAL.c, p_tilde=0)
        assert isp_payoffs(CANONICAL, fees, MarketSplit(0.3, 0.7, 0.1, 0.2)) == (0.0, 0.0)

    def test_cp_trivial(self):
        assert cp_payoff(StrategyProfile(), EQ_SPLIT) == 0.0
        assert cp_payoff(StrategyProfile(p_tilde=2, q_NN=2, q_N=5), MarketSplit(0, 1, 0, 1)) == 0.0

    def test_transit_term_uses_subscribers(self):
        fees = StrategyProfile(p_tilde=1, p_NN=CANONICAL.c)
        _, pi_NN = isp_payoffs(CANONICAL, fees, MarketSplit(0.4, 0.6, 0.4, 0.5))
        assert pi_NN == 0.5

    @given(params_st, fees_st)
    def test_full_coverage_reduced_form(self, params, fees):
        split = split_from_fees(params, fees)
        _, pi_NN = isp_payoffs(params, fees, split)
        assert pi_NN == pytest.approx((fees.p_NN + fees.p_tilde - params.c) * split.n_NN, abs=1e-12)


class TestIndifferentUser:
    def test_symmetric(self):
        assert indifferent_user(CANONICAL, StrategyProfile(q_N=1, q_NN=1, p_N=2, p_NN=2)) == (0.5, True)

    def test_interior_example_matches_user_simulation(self):
        p = MarketParams(v=10, v_star=5, t=1, c=0)
        fees = StrategyProfile(q_N=0, q_NN=0.1, p_N=1, p_NN=1.2)
        x, interior = indifferent_user(p, fees)
        assert x == pytest.approx(0.65, abs=1e-12) and interior
        assert simulate_users(p, fees, 100_000).n_N == pytest.approx(0.65, abs=1e-5)

    def test_outside_unit_interval(self):
        p = MarketParams(v=10, v_star=5, t=1, c=0)
        fees = StrategyProfile(p_N=0, p_NN=3)
        x, interior = indifferent_user(p, fees)
        assert x == 2.0 and not interior
        assert split_from_fees(p, fees).n_N == 1.0
        assert simulate_users(p, fees, 1000).n_N == 1.0

    @given(params_st, fees_st)
    def test_conservation(self, params, fees):
        s = split_from_fees(params, fees)
        assert s.n_N + s.n_NN == 1.0
        assert s.n_sub_N <= s.n_N and s.n_sub_NN <= s.n_NN

    @given(params_st, fees_st)
    def test_mirror_symmetry(self, params, fees):
        x, _ = indifferent_user(params, fees)
        y, _ = indifferent_user(params, fees.swapped())
        assert x + y == pytest.approx(1.0, abs=1e-12)

    @given(params_st, fees_st)
    def test_indifference_holds(self, params, fees):
        x, interior = indifferent_user(params, fees)
        if not interior:
            return
        u_N = user_total_utility(params, ISP.N, x, fees, True)
        u_NN = user_total_utility(params, ISP.NN, x, fees, True)
        assert abs(u_N - u_NN) < 1e-12 * max(1.0, abs(u_N))


class TestCoverage:
    def test_bounds_coincide_at_tie(self):
        b = coverage_bounds(CANONICAL, 0.3, 0.3)
        assert {b.u_qN, b.u_qNN, b.u_prime_qN, b.u_prime_qNN} == {1.5}
        assert b.regime is Regime.DeltaQGeqPtilde

    def test_bounds_canonical(self):
        b = coverage_bounds(CANONICAL, 1.25, -0.25)
        assert b.regime is Regime.DeltaQLeqPtilde
        assert b.u_prime_qNN == 1.5 and b.u_prime_qN == pytest.approx(1.75, abs=1e-12)

    def test_bounds_mirrored(self):
        b = coverage_bounds(CANONICAL, -2, -0.5)
        assert b.regime is Regime.DeltaQGeqPtilde
        assert b.u_qN == 1.5 and b.u_qNN == pytest.approx(1.75, abs=1e-12)

    @given(st.floats(-5, 5), st.floats(-5, 5))
    def test_bounds_invariants(self, p_tilde, dq):
        b = coverage_bounds(CANONICAL, p_tilde, dq)
        assert b.u_qN == b.u_prime_qNN == CANONICAL.anchor
        assert b.u_qNN - b.u_qN == pytest.approx((dq - p_tilde) / 6, abs=1e-12)
        assert b.u_prime_qN - b.u_prime_qNN == pytest.approx(-(dq - p_tilde) / 6, abs=1e-12)

    def test_farthest_subscriber(self):
        assert farthest_subscriber(CANONICAL, ISP.N, 1.75) == 0.25
        assert farthest_subscriber(CANONICAL, ISP.NN, 1.5) == 0.5
        assert farthest_subscriber(CANONICAL, ISP.N, CANONICAL.v_star) == 0.0

    def test_canonical_equilibrium_is_covered(self):
        assert check_full_coverage(CANONICAL, EQ_FEES, EQ_SPLIT) == (True, True)

    def test_prohibitive_connection_fees(self):
        p = CANONICAL
        fees = StrategyProfile(p_N=p.v + p.t, p_NN=p.v + p.t, q_N=p.v_star, q_NN=p.v_star)
        isp_ok, _ = check_full_coverage(p, fees, split_from_fees(p, fees))
        assert not isp_ok

    def test_prohibitive_subscription_fees(self):
        p = CANONICAL
        fees = StrategyProfile(q_N=p.v_star + p.t, q_NN=p.v_star + p.t, p_N=1.5, p_NN=1.5)
        _, cp_ok = check_full_coverage(p, fees, split_from_fees(p, fees))
        assert not cp_ok

    @settings(max_examples=60, deadline=None)
    @given(params_st, fees_st)
    def test_analytic_check_matches_dense_sampling(self, params, fees):
        split = split_from_fees(params, fees)
        isp_ok, cp_ok = check_full_coverage(params, fees, split)
        n = 4001
        xs = [i / (n - 1) for i in range(n)]
        worst_isp = worst_cp = math.inf
        for x in xs:
            isp = ISP.N if x < split.n_N or (x == split.n_N and split.n_N > 0) else ISP.NN
            if (isp is ISP.N and split.n_N == 0) or (isp is ISP.NN and split.n_NN == 0):
                continue
            g = user_utility_content(params, isp, x, fees)
            worst_isp = min(worst_isp, user_utility_internet(params, isp, x, fees) + max(0.0, g))
            worst_cp = min(worst_cp, g)
        # sampling can only miss violations narrower than the sample spacing
        margin = 2 * params.t / (n - 1)
        if worst_isp < -margin:
            assert not isp_ok
        if worst_isp > margin:
            assert isp_ok
        if worst_cp < -margin:
            assert not cp_ok
        if worst_cp > margin:
            assert cp_ok
