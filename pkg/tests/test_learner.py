import math

import numpy as np
import pytest

from gsac.core import AgentSpaces, DomainFactor, NetworkGraph
from gsac.envs import build_synthetic
from gsac.learner import (
    LocalizedPolicy,
    StepsizeSchedule,
    TruncatedCritic,
    actor_update,
    adapt_and_deploy,
    build_acr_keys,
    build_raw_keys,
    critic_td_update,
    episode_return,
    evaluate_policy,
    exact_q_oracle,
    run_meta_training,
    sample_action,
)


class TestStepsizeSchedule:
    def test_constant(self):
        s = StepsizeSchedule(alpha=0.1, eta=0.01)
        assert s.alpha_at(0) == s.alpha_at(1000) == 0.1
        assert s.eta_at(0) == s.eta_at(99) == 0.01

    def test_decaying(self):
        s = StepsizeSchedule(critic_mode="decaying", h=2.0, t0=4.0,
                             actor_mode="decaying", eta=0.1)
        assert s.alpha_at(0) == 0.5
        assert s.alpha_at(6) == 0.2
        assert s.eta_at(3) == pytest.approx(0.05)

    def test_invalid_mode(self):
        with pytest.raises(ValueError):
            StepsizeSchedule(critic_mode="linear")

    def test_nonpositive_rejected(self):
        with pytest.raises(ValueError):
            StepsizeSchedule(alpha=0.0)


class TestLocalizedPolicy:
    def test_probs_sum_to_one(self):
        p = LocalizedPolicy((3,), tau_soft=0.5)
        p.logits[0]["k"] = np.array([1.0, -2.0, 0.5])
        pr = p.probs(0, "k")
        assert pr.sum() == pytest.approx(1.0)
        assert np.all(pr > 0)

    def test_unseen_key_is_uniform(self):
        p = LocalizedPolicy((4,))
        assert np.allclose(p.probs(0, "new"), 0.25)

    def test_two_action_sigmoid_example(self):
        # theta = (1, 0), tau = 0.5: p(a=0) = sigmoid(2) ~ 0.8808
        p = LocalizedPolicy((2,), tau_soft=0.5)
        p.logits[0]["k"] = np.array([1.0, 0.0])
        assert p.probs(0, "k")[0] == pytest.approx(1 / (1 + math.exp(-2)), abs=1e-6)

    def test_grad_log_zero_sum_and_finite_difference(self):
        p = LocalizedPolicy((3,), tau_soft=0.7)
        theta = np.array([0.3, -0.4, 1.1])
        p.logits[0]["k"] = theta.copy()
        for a in range(3):
            g = p.grad_log(0, "k", a)
            assert g.sum() == pytest.approx(0.0, abs=1e-12)
            eps = 1e-6
            for d in range(3):
                p.logits[0]["k"] = theta.copy()
                p.logits[0]["k"][d] += eps
                up = math.log(p.probs(0, "k")[a])
                p.logits[0]["k"] = theta.copy()
                p.logits[0]["k"][d] -= eps
                down = math.log(p.probs(0, "k")[a])
                fd = (up - down) / (2 * eps)
                assert g[d] == pytest.approx(fd, rel=1e-4, abs=1e-8)
            p.logits[0]["k"] = theta.copy()

    def test_sample_action_distribution(self):
        p = LocalizedPolicy((2,), tau_soft=0.5)
        p.logits[0]["k"] = np.array([1.0, 0.0])
        rng = np.random.default_rng(0)
        draws = [sample_action(p, 0, "k", rng) for _ in range(4000)]
        assert np.mean([a == 0 for a in draws]) == pytest.approx(0.8808, abs=0.02)

    def test_actor_update_clamps(self):
        p = LocalizedPolicy((2,), theta_max=1.0)
        actor_update(p, [{"k": np.array([100.0, -100.0])}], eta=1.0)
        assert np.array_equal(p.logits[0]["k"], [1.0, -1.0])

    def test_invalid_temperature(self):
        with pytest.raises(ValueError):
            LocalizedPolicy((2,), tau_soft=0.0)


class TestCritic:
    def test_td_update_from_zero(self):
        c = TruncatedCritic(1, 1.0, 0.95)
        delta = critic_td_update(c, 0, "prev", "cur", reward=1.0, alpha=0.1)
        assert c.get(0, "prev") == pytest.approx(0.1)
        assert delta == pytest.approx(0.1)

    def test_td_fixed_point(self):
        # self-loop with constant reward: Q converges to r/(1-gamma)
        c = TruncatedCritic(1, 1.0, 0.5)
        for _ in range(500):
            critic_td_update(c, 0, "k", "k", reward=1.0, alpha=0.2)
        assert c.get(0, "k") == pytest.approx(2.0, abs=1e-6)

    def test_clamped_to_q_range(self):
        c = TruncatedCritic(1, 1.0, 0.9)
        critic_td_update(c, 0, "k", "k", reward=100.0, alpha=1.0)
        assert c.get(0, "k") <= c.q_max

    def test_reset_and_key_count(self):
        c = TruncatedCritic(2, 1.0, 0.9)
        critic_td_update(c, 0, "a", "b", 1.0, 0.1)
        critic_td_update(c, 1, "a", "b", 1.0, 0.1)
        assert c.key_count() == 2
        c.reset()
        assert c.key_count() == 0


def _env(seed=0):
    graph = NetworkGraph.chain(2)
    spaces = AgentSpaces.uniform(2, 1, 2, 2)
    return build_synthetic(graph, spaces, 1.0, (0.3, 0.7), seed)


class TestKeys:
    def test_raw_keys_cover_neighborhood(self):
        env = _env()
        keys = build_raw_keys(env.graph, env.spaces, 1)
        assert keys[0].value_comps == ((0, 0), (1, 0))
        assert keys[0].action_agents == (0, 1)

    def test_acr_keys_subset_of_raw(self):
        env = _env()
        raw = build_raw_keys(env.graph, env.spaces, 1)
        acr = build_acr_keys(env.masks, env.graph, env.spaces, 1)
        for i in range(2):
            assert set(acr[i].value_comps) <= set(raw[i].value_comps)
            assert set(acr[i].policy_comps) <= set(raw[i].policy_comps)

    def test_critic_key_contents(self):
        env = _env()
        keys = build_raw_keys(env.graph, env.spaces, 1)
        omega = DomainFactor.scalar(2, (0.3, 0.7), 0.7)
        skey, akey, wkey = keys[0].critic_key(((1,), (0,)), (0, 1), omega)
        assert skey == (1, 0)
        assert akey == (0, 1)
        assert wkey == (1, 1)


class TestOracle:
    def test_bellman_residual(self):
        env = _env()
        spaces = env.spaces
        dists = [np.full(2, 0.5) for _ in range(2)]
        oracle = exact_q_oracle(env, lambda s: dists, 0.9)
        # spot-check the Bellman equation at a few entries
        pi = 0.25  # uniform joint action probability
        for si in (0, 2):
            for ai in (1, 3):
                s, a = oracle.states[si], oracle.actions[ai]
                r = env.kernel.expected_reward(0, s, a, env.omega)
                nxt = 0.0
                d0 = env.kernel.local_dist(0, s, a, env.omega)
                d1 = env.kernel.local_dist(1, s, a, env.omega)
                for sj, s2 in enumerate(oracle.states):
                    p = d0[s2[0][0]] * d1[s2[1][0]]
                    v = sum(pi * oracle.q[0][sj, aj] for aj in range(4))
                    nxt += p * v
                assert oracle.q[0][si, ai] == pytest.approx(r + 0.9 * nxt, abs=1e-7)

    def test_q_range(self):
        env = _env()
        dists = [np.full(2, 0.5) for _ in range(2)]
        oracle = exact_q_oracle(env, lambda s: dists, 0.9)
        for q in oracle.q:
            assert np.all(q >= 0) and np.all(q <= env.rbar / 0.1 + 1e-9)

    def test_capacity_guard(self):
        graph = NetworkGraph.ring(4)
        spaces = AgentSpaces.uniform(4, 2, 4, 4)
        env = build_synthetic(graph, spaces, 0.3, (0.3, 0.7), 0)
        dists = [np.full(4, 0.25) for _ in range(4)]
        with pytest.raises(ValueError, match="too large"):
            exact_q_oracle(env, lambda s: dists, 0.9)


class TestTrainingLoop:
    def test_meta_training_shapes_and_determinism(self):
        env = _env()
        keys = build_acr_keys(env.masks, env.graph, env.spaces, 1)
        schedule = StepsizeSchedule()
        sources = [env.with_omega_value(v) for v in (0.3, 0.7)]
        omegas = [e.omega for e in sources]
        p1, logs1 = run_meta_training(sources, omegas, keys, 25, 5, schedule, seed=4)
        p2, logs2 = run_meta_training(sources, omegas, keys, 25, 5, schedule, seed=4)
        assert len(logs1) == 25
        assert [l.return_discounted for l in logs1] == [l.return_discounted for l in logs2]
        q_max = env.rbar / (1 - 0.95)
        for log in logs1:
            assert 0.0 <= log.return_discounted <= q_max
            assert np.isfinite(log.grad_norm)
            assert log.domain_index in (0, 1)

    def test_episode_return(self):
        rewards = [(1.0, 1.0), (0.0, 1.0)]
        assert episode_return(rewards, 0.5) == pytest.approx(1.0 + 0.5 * 0.5)

    def test_evaluate_policy_no_learning(self):
        env = _env()
        keys = build_acr_keys(env.masks, env.graph, env.spaces, 1)
        policy = LocalizedPolicy(env.spaces.action_cards)
        logs = evaluate_policy(env, policy, keys, env.omega, 4, 5, 0, 0.95)
        assert len(logs) == 4
        assert all(l.grad_norm == 0.0 for l in logs)

    def test_adapt_requires_trajectories(self):
        env = _env()
        keys = build_acr_keys(env.masks, env.graph, env.spaces, 1)
        policy = LocalizedPolicy(env.spaces.action_cards)
        with pytest.raises(ValueError):
            adapt_and_deploy(policy, env, env.masks, keys, 0, 0, 2, 5)

    def test_adapt_returns_estimate_and_logs(self):
        env = _env()
        keys = build_acr_keys(env.masks, env.graph, env.spaces, 1)
        policy = LocalizedPolicy(env.spaces.action_cards)
        est, logs = adapt_and_deploy(
            policy, env.with_omega_value(0.7), env.masks, keys, 10, 0, 3, 5,
            omega_grid=(0.3, 0.7),
        )
        assert len(logs) == 3
        assert all(v in (0.3, 0.7) for v in est.omega_hat)
