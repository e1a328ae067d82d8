"""Comparison methods sharing the truncated actor-critic machinery.

All three train with the same trainer, stepping, RNG discipline, and return
accounting as the main pipeline; they differ only in what the tables condition
on and how they behave at the target domain:

- SAC-MTL: raw kappa-hop tables conditioned on a one-hot source-domain id;
  deployed on the target with the id of the nearest source (by omega), no
  target updates;
- SAC-FT : one unconditioned policy pooled across sources, then fine-tuned in
  the target domain for a fixed episode budget (returns logged through
  fine-tuning);
- SAC-LFS: trained from scratch in the target domain only.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Sequence

from gsac.core import DomainFactor
from gsac.envs.base import Environment
from gsac.learner import (
    AgentKeys,
    EpisodeLog,
    LocalizedPolicy,
    StepsizeSchedule,
    build_raw_keys,
    evaluate_policy,
    run_meta_training,
)


def build_unconditioned_keys(graph, spaces, kappa: int) -> tuple[AgentKeys, ...]:
    """Raw kappa-hop key specs with no domain conditioning."""
    return tuple(
        replace(k, critic_omega=(), policy_omega=())
        for k in build_raw_keys(graph, spaces, kappa)
    )


def one_hot_domain_factor(n: int, num_domains: int, m: int) -> DomainFactor:
    """Domain id m as a shared grid index (the tabular form of a one-hot z)."""
    if not (0 <= m < num_domains):
        raise ValueError(f"domain id {m} outside 0..{num_domains - 1}")
    grid = tuple(float(v) for v in range(num_domains))
    return DomainFactor(
        grids=tuple((grid,) for _ in range(n)),
        indices=tuple((m,) for _ in range(n)),
    )


def nearest_source_domain(source_omegas: Sequence[float], target_omega: float) -> int:
    """z' assignment: index of the source omega closest to the target's."""
    return min(
        range(len(source_omegas)), key=lambda m: abs(source_omegas[m] - target_omega)
    )


def run_sac_mtl(
    source_envs: Sequence[Environment],
    target_env: Environment,
    kappa: int,
    iterations: int,
    horizon: int,
    schedule: StepsizeSchedule,
    seed: int,
    eval_episodes: int,
    gamma: float = 0.95,
    tau_soft: float = 0.5,
    theta_max: float = 50.0,
    warm_start: bool = False,
) -> tuple[LocalizedPolicy, list[EpisodeLog], list[EpisodeLog]]:
    """Raw tables conditioned on the source-domain id; nearest-source id at test."""
    env0 = source_envs[0]
    n = env0.spaces.n
    keys = build_raw_keys(env0.graph, env0.spaces, kappa)
    # Conditioning is the domain id itself, not an omega estimate.
    keys = tuple(
        replace(
            k,
            critic_omega=((k.agent, 0),),
            policy_omega=((k.agent, 0),),
        )
        for k in keys
    )
    conds = [one_hot_domain_factor(n, len(source_envs), m) for m in range(len(source_envs))]
    policy, train_logs = run_meta_training(
        source_envs, conds, keys, iterations, horizon, schedule, seed,
        gamma=gamma, tau_soft=tau_soft, theta_max=theta_max, warm_start=warm_start,
    )
    z_prime = nearest_source_domain(
        [e.omega.value(0, 0) for e in source_envs], target_env.omega.value(0, 0)
    )
    eval_logs = evaluate_policy(
        target_env, policy, keys, one_hot_domain_factor(n, len(source_envs), z_prime),
        eval_episodes, horizon, seed + 1, gamma,
    )
    return policy, train_logs, eval_logs


def run_sac_ft(
    source_envs: Sequence[Environment],
    target_env: Environment,
    kappa: int,
    iterations: int,
    horizon: int,
    schedule: StepsizeSchedule,
    seed: int,
    fine_tune_budget: int,
    gamma: float = 0.95,
    tau_soft: float = 0.5,
    theta_max: float = 50.0,
    warm_start: bool = False,
) -> tuple[LocalizedPolicy, list[EpisodeLog], list[EpisodeLog]]:
    """Pooled unconditioned training, then fine-tuning episodes on the target.

    The fine-tuning logs are the adaptation-window returns (budget defaults to
    the evaluation window at the call site, keeping curves comparable).
    """
    env0 = source_envs[0]
    keys = build_unconditioned_keys(env0.graph, env0.spaces, kappa)
    dummy = [e.omega for e in source_envs]  # never indexed: keys carry no omega slots
    policy, train_logs = run_meta_training(
        source_envs, dummy, keys, iterations, horizon, schedule, seed,
        gamma=gamma, tau_soft=tau_soft, theta_max=theta_max, warm_start=warm_start,
    )
    policy, ft_logs = run_meta_training(
        [target_env], [target_env.omega], keys, fine_tune_budget, horizon, schedule,
        seed + 1, gamma=gamma, tau_soft=tau_soft, theta_max=theta_max,
        warm_start=warm_start, policy=policy,
    )
    return policy, train_logs, ft_logs


def run_sac_lfs(
    target_env: Environment,
    kappa: int,
    horizon: int,
    schedule: StepsizeSchedule,
    seed: int,
    episodes: int,
    gamma: float = 0.95,
    tau_soft: float = 0.5,
    theta_max: float = 50.0,
    warm_start: bool = False,
) -> tuple[LocalizedPolicy, list[EpisodeLog]]:
    """From-scratch training in the target domain; its logs are the few-shot curve."""
    keys = build_unconditioned_keys(target_env.graph, target_env.spaces, kappa)
    policy, logs = run_meta_training(
        [target_env], [target_env.omega], keys, episodes, horizon, schedule, seed,
        gamma=gamma, tau_soft=tau_soft, theta_max=theta_max, warm_start=warm_start,
    )
    return policy, logs
