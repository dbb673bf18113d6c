import math

import numpy as np
import pytest
from scipy import stats

from bordaduel.algorithms import (
    AGENT_NAMES,
    Bexp3,
    Bexp3Config,
    BetcConfig,
    BetcGlm,
    EtcBorda,
    EtcBordaConfig,
    HorizonTooSmall,
    Regime,
    UcbBorda,
    UcbBordaConfig,
    betc_glm_run,
    betc_params,
    etc_borda_run,
    etc_budget,
    make_agent,
    run_agent,
)
from bordaduel.instances import HardInstanceSpec, make_hard_instance, make_random_glm
from bordaduel.model import FeatureSet, LinkFunction, StochasticEnv

HARD2 = HardInstanceSpec(2, 1 / 16, (1, -1))


def identical_env(K=2):
    return StochasticEnv(FeatureSet(np.zeros((K, K, 1))), LinkFunction.linear(), [0.0])


class TestBetcParams:
    def test_matching_tau(self):
        tau, _ = betc_params(Regime.MATCHING, 10**6, 128, 7, 1e-6, 0.1)
        assert tau == math.ceil(100 * (7 + math.log(1e6))) == 2082

    def test_matching_epsilon(self):
        _, eps = betc_params("matching", 10**6, 128, 7, 1e-6, 0.1)
        assert eps == pytest.approx(7 ** (1 / 6) * 1e-2, rel=1e-12)
        assert eps == pytest.approx(0.013831, abs=5e-7)

    def test_fewer_arms(self):
        tau, eps = betc_params(Regime.FEWER_ARMS, 10**6, 128, 7, 1e-6, 0.1)
        assert tau == math.ceil((7 * math.log(1.28e8)) ** (1 / 3) * 1e4)
        assert eps == pytest.approx(7 ** (1 / 3) * 1e-2 * math.log(3 * 128**2 / 1e-6) ** (-1 / 6))

    def test_validation(self):
        with pytest.raises(ValueError):
            betc_params("matching", 100, 4, 2, 1.5, 0.1)
        with pytest.raises(ValueError):
            betc_params("matching", 100, 4, 2, 0.1, 0.0)


class TestBetc:
    def test_identical_items_zero_regret(self):
        env = identical_env()
        res = betc_glm_run(env, BetcConfig(T=500), np.random.default_rng(0))
        assert np.all(res.trace.per_round == 0.0)
        assert len(res.trace.cumulative) == 500

    def test_commits_to_winner(self):
        env = make_hard_instance(HARD2)
        hits = 0
        for seed in range(50):
            res = betc_glm_run(env, BetcConfig(T=100_000), np.random.default_rng(seed))
            assert not res.no_commit
            hits += res.i_hat == env.winner
        assert hits >= 45

    def test_phase_discipline_and_flat_tail(self):
        env = make_hard_instance(HARD2)
        T = 20_000
        agent_rng, env_rng = np.random.default_rng(3).spawn(2)
        agent = BetcGlm(env.features, env.link, BetcConfig(T=T), agent_rng)
        trace = run_agent(env, agent, T, env_rng)
        end = agent.explore_end
        assert end < T
        assert agent.i_hat == env.winner
        assert {agent.select_pair(t) for t in range(end + 1, T + 1)} == {(agent.i_hat, agent.i_hat)}
        assert np.all(trace.per_round[end:] == 0.0)

    def test_explicit_tau_and_epsilon(self):
        env = make_hard_instance(HARD2)
        agent = BetcGlm(env.features, env.link, BetcConfig(T=10_000, tau=7, epsilon=0.3), np.random.default_rng(0))
        assert agent.tau == 7
        assert agent.N == sum(math.ceil(agent.d_eff * w / 0.09) for w in agent.design.weights.values())

    def test_horizon_too_small(self):
        env = make_hard_instance(HARD2)
        with pytest.warns(HorizonTooSmall):
            res = betc_glm_run(env, BetcConfig(T=200), np.random.default_rng(0))
        assert res.no_commit and res.i_hat is None
        assert res.trace.rounds_recorded == 200

    def test_deterministic(self):
        env = make_hard_instance(HARD2)
        a = betc_glm_run(env, BetcConfig(T=5000), np.random.default_rng(11)).trace.per_round
        b = betc_glm_run(env, BetcConfig(T=5000), np.random.default_rng(11)).trace.per_round
        assert np.array_equal(a, b)


class TestBexp3:
    def scalar_agent(self):
        fs = FeatureSet.from_upper(2, {(0, 1): [1.0]})
        return Bexp3(fs, Bexp3Config(eta=0.01, gamma=0.1), np.random.default_rng(0))

    def test_initial_uniform(self):
        env = make_hard_instance(HARD2)
        agent = make_agent("bexp3", env, 1000, np.random.default_rng(0))
        np.testing.assert_array_equal(agent.q, np.full(8, 1 / 8))

    def test_scalar_example(self):
        agent = self.scalar_agent()
        assert agent.information()[0, 0] == pytest.approx(0.5)
        est = agent.estimate(0, 1, 1)
        np.testing.assert_allclose(est, [1.0, -1.0], atol=1e-9)

    def test_zero_outcome_gives_zero(self):
        np.testing.assert_array_equal(self.scalar_agent().estimate(0, 1, 0), 0.0)

    def test_unbiased_at_fixed_q(self):
        rng = np.random.default_rng(2)
        env = make_random_glm(5, 2, LinkFunction.linear(), rng)
        agent = Bexp3(env.features, Bexp3Config(0.01, 0.2), rng)
        agent.q = rng.dirichlet(np.ones(5)) * 0.8 + 0.2 / 5
        # exact expectation by enumerating every pair and outcome
        mean = sum(
            agent.q[i] * agent.q[j] * env.P[i, j] * agent.estimate(i, j, 1) for i in range(5) for j in range(5)
        )
        np.testing.assert_allclose(mean, env.borda - 0.5, atol=1e-9)

    def test_default_config(self):
        cfg = Bexp3Config.default(10**6, 32, 5, 0.1)
        eta = math.log(32) ** (2 / 3) * 5 ** (-1 / 3) * 1e-4
        assert cfg.eta == pytest.approx(eta)
        assert cfg.gamma == pytest.approx(math.sqrt(eta * 5 / 0.1))

    def test_default_config_cap(self):
        cfg = Bexp3Config.default(100, 32, 5, 0.1)
        assert cfg.gamma == 0.5
        assert cfg.eta <= 0.1 * 0.25 + 1e-15

    def test_floor_and_bound_invariants(self):
        env = make_hard_instance(HARD2)
        T = 3000
        agent = make_agent("bexp3", env, T, np.random.default_rng(1))
        lam = env.features.lambda0_in_span()
        gamma = agent.config.gamma
        u = np.random.default_rng(2).random(T)
        for t in range(1, T + 1):
            i, j = agent.select_pair(t)
            assert 0 <= i < 8 and 0 <= j < 8
            agent.observe(t, i, j, int(u[t - 1] < env.P[i, j]))
            assert agent.q.min() >= gamma / 8 - 1e-12
            assert agent.q.sum() == pytest.approx(1.0, abs=1e-12)
            assert np.abs(agent.last_estimate).max() <= 1 / (lam * gamma**2) + 1e-9


class TestUcb:
    def test_first_pick_lowest_index(self):
        agent = UcbBorda(5, UcbBordaConfig(), np.random.default_rng(0))
        assert agent.select_pair(1)[0] == 0

    def test_plays_every_arm_first(self):
        agent = UcbBorda(4, UcbBordaConfig(), np.random.default_rng(0))
        firsts = []
        for t in range(1, 5):
            i, j = agent.select_pair(t)
            firsts.append(i)
            agent.observe(t, i, j, 1)
        assert firsts == [0, 1, 2, 3]

    def test_ratio(self):
        agent = UcbBorda(3, UcbBordaConfig(), np.random.default_rng(0))
        for t, r in enumerate([1, 1, 0, 1], start=1):
            agent.observe(t, 2, 0, r)
        assert agent.borda_hat[2] == 0.75
        assert agent.n[0] == 0

    def test_index_formula(self):
        agent = UcbBorda(2, UcbBordaConfig(alpha=0.3), np.random.default_rng(0))
        agent.observe(1, 0, 1, 1)
        agent.observe(2, 1, 0, 0)
        agent.observe(3, 1, 0, 1)
        np.testing.assert_allclose(
            agent.index(4), [1.0 + math.sqrt(0.3 * math.log(4)), 0.5 + math.sqrt(0.3 * math.log(4) / 2)]
        )

    def test_opponent_uniform(self):
        K = 7
        agent = UcbBorda(K, UcbBordaConfig(), np.random.default_rng(5))
        u = np.random.default_rng(6).random(100_000)
        counts = np.zeros(K)
        for t in range(1, 100_001):
            i, j = agent.select_pair(t)
            counts[j] += 1
            agent.observe(t, i, j, int(u[t - 1] < 0.3 + 0.05 * i))
        assert stats.chisquare(counts).pvalue > 1e-3

    def test_alpha_positive(self):
        with pytest.raises(ValueError):
            UcbBordaConfig(alpha=0.0)


class TestEtc:
    def test_budget(self):
        expected = math.ceil(100 ** (-2 / 3) * 1e4 * math.log(1e8) ** (1 / 3))
        assert etc_budget(10**6, 100, 1e-6) == expected == 1226

    def test_round_robin_wraps(self):
        agent = EtcBorda(EtcBordaConfig(T=1000, K=4, N=5), np.random.default_rng(0))
        assert [agent.select_pair(t)[0] for t in range(1, 10)] == [0, 1, 2, 3, 0, 1, 2, 3, 0]

    def test_counts_after_exploration(self):
        env = make_hard_instance(HARD2)
        trace, agent = etc_borda_run(env, EtcBordaConfig(T=5000, K=8, N=50), np.random.default_rng(0))
        np.testing.assert_array_equal(agent.n, 50)
        assert trace.rounds_recorded == 5000
        assert agent.select_pair(401) == (agent.i_hat, agent.i_hat)

    @pytest.mark.filterwarnings("ignore:d_core \\* delta")
    def test_commits_to_winner(self):
        rng = np.random.default_rng(9)
        env = make_hard_instance(HardInstanceSpec.random(2, rng))
        hits = 0
        for seed in range(50):
            _, agent = etc_borda_run(env, EtcBordaConfig(T=20_000, K=8), np.random.default_rng(seed))
            hits += agent.i_hat == env.winner
        assert hits >= 45

    def test_horizon_too_small(self):
        with pytest.warns(HorizonTooSmall):
            EtcBorda(EtcBordaConfig(T=10, K=4, N=5), np.random.default_rng(0))


class TestMakeAgent:
    @pytest.mark.parametrize("name", AGENT_NAMES)
    def test_identical_items_zero_regret(self, name):
        env = identical_env(3)
        agent_rng, env_rng = np.random.default_rng(0).spawn(2)
        trace = run_agent(env, make_agent(name, env, 300, agent_rng), 300, env_rng)
        assert np.all(trace.cumulative == 0.0)

    @pytest.mark.parametrize("name", AGENT_NAMES)
    def test_deterministic_and_in_range(self, name):
        env = make_hard_instance(HARD2)

        def run():
            agent_rng, env_rng = np.random.default_rng(4).spawn(2)
            return run_agent(env, make_agent(name, env, 2000, agent_rng), 2000, env_rng)

        a, b = run(), run()
        assert np.array_equal(a.per_round, b.per_round)
        assert np.all(a.per_round >= 0)

    def test_unknown(self):
        with pytest.raises(ValueError):
            make_agent("thompson", identical_env(), 10, np.random.default_rng(0))
