"""Tabular truncated actor-critic with localized policies.

The critic for agent i is a table over (value-ACR state tuple, kappa-hop
joint action tuple, domain grid-index tuple), default 0 for unvisited keys
and clamped to [0, rbar/(1-gamma)]. The policy is a per-agent softmax over
logits keyed by (policy-ACR state tuple, domain grid-index tuple). An
ACR-free mode keys both tables on the raw neighborhood instead (same code
path, different key spec).

Meta-training: each outer iteration samples a source domain uniformly,
reinitializes the critic to zeros (warm starting is an opt-in ablation),
rolls one episode of T steps (T+1 actions) with in-episode TD updates, then
applies one truncated policy-gradient step using the end-of-episode critic.
Adaptation estimates the target domain factor from a few random trajectories
and deploys the trained policy conditioned on it, with no further updates.

The exact-Q oracle evaluates a product policy on the enumerated joint kernel
and reports, per agent and hop radius, the sup of |Q_i(s,a) - Q_i(s',a')|
over pairs agreeing inside the radius — the quantity the exponential-decay
bound controls.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Callable, Sequence

import numpy as np

from gsac.acr import acr_state_key, domain_acr, policy_acr_fixed_point, value_acr
from gsac.core import (
    CausalMasks,
    DomainFactor,
    GlobalState,
    JointAction,
    k_hop_neighborhood,
    neighborhood_components,
)
from gsac.discovery import estimate_domain_factor
from gsac.envs.base import (
    Environment,
    decode_local,
    reset,
    rollout_random,
    step,
    substream,
)

ORACLE_CAPACITY = 2_000_000  # max |S| x |A| joint entries


@dataclass(frozen=True)
class StepsizeSchedule:
    """Critic stepsize alpha_t and actor stepsize eta_k.

    Modes: "constant" (alpha, eta fixed) or "decaying" (alpha_t = h/(t+t0),
    eta_k = eta/sqrt(k+1)).
    """

    critic_mode: str = "constant"
    alpha: float = 0.1
    h: float = 1.0
    t0: float = 1.0
    actor_mode: str = "constant"
    eta: float = 0.01

    def __post_init__(self):
        if self.critic_mode not in ("constant", "decaying"):
            raise ValueError(f"unknown critic stepsize mode {self.critic_mode!r}")
        if self.actor_mode not in ("constant", "decaying"):
            raise ValueError(f"unknown actor stepsize mode {self.actor_mode!r}")
        if min(self.alpha, self.h, self.t0, self.eta) <= 0:
            raise ValueError("all stepsize parameters must be > 0")

    def alpha_at(self, t: int) -> float:
        if self.critic_mode == "constant":
            return self.alpha
        return self.h / (t + self.t0)

    def eta_at(self, k: int) -> float:
        if self.actor_mode == "constant":
            return self.eta
        return self.eta / np.sqrt(k + 1)


@dataclass(frozen=True)
class AgentKeys:
    """Key layout of one agent's critic and policy tables.

    The critic key is (state values at value_comps, actions of action_agents,
    omega grid indices at critic_omega); the policy key is (state values at
    policy_comps, omega grid indices at policy_omega).
    """

    agent: int
    value_comps: tuple[tuple[int, int], ...]
    action_agents: tuple[int, ...]
    critic_omega: tuple[tuple[int, int], ...]
    policy_comps: tuple[tuple[int, int], ...]
    policy_omega: tuple[tuple[int, int], ...]

    def critic_key(self, state: GlobalState, action: JointAction, omega: DomainFactor):
        return (
            acr_state_key(state, self.value_comps),
            tuple(action[a] for a in self.action_agents),
            tuple(omega.index(k, j) for (k, j) in self.critic_omega),
        )

    def policy_key(self, state: GlobalState, omega: DomainFactor):
        return (
            acr_state_key(state, self.policy_comps),
            tuple(omega.index(k, j) for (k, j) in self.policy_omega),
        )


def build_acr_keys(
    masks: CausalMasks, graph, spaces, kappa: int
) -> tuple[AgentKeys, ...]:
    """Compact key specs from the ACR constructions."""
    pol = policy_acr_fixed_point(masks, graph, spaces)
    out = []
    for i in range(graph.n):
        v = value_acr(masks, graph, spaces, i, kappa)
        dv = domain_acr(masks, graph, spaces, v, i)
        dp = domain_acr(masks, graph, spaces, pol[i], i)
        out.append(AgentKeys(
            agent=i,
            value_comps=v.components,
            action_agents=k_hop_neighborhood(graph, i, kappa),
            critic_omega=dv.components,
            policy_comps=pol[i].components,
            policy_omega=dp.components,
        ))
    return tuple(out)


def build_raw_keys(graph, spaces, kappa: int) -> tuple[AgentKeys, ...]:
    """ACR-free key specs: raw neighborhood states, actions, and omegas."""
    out = []
    for i in range(graph.n):
        hood = k_hop_neighborhood(graph, i, kappa)
        out.append(AgentKeys(
            agent=i,
            value_comps=neighborhood_components(graph, spaces, i, kappa),
            action_agents=hood,
            critic_omega=tuple((k, 0) for k in hood),
            policy_comps=neighborhood_components(graph, spaces, i, 1),
            policy_omega=tuple((k, 0) for k in graph.neighbors(i)),
        ))
    return tuple(out)


class TruncatedCritic:
    """Per-agent Q tables; unvisited keys read 0, values clamp to [0, rbar/(1-gamma)]."""

    def __init__(self, n: int, rbar: float, gamma: float):
        self.n = n
        self.q_max = rbar / (1.0 - gamma)
        self.gamma = gamma
        self.tables: list[dict] = [dict() for _ in range(n)]

    def get(self, i: int, key) -> float:
        return self.tables[i].get(key, 0.0)

    def reset(self) -> None:
        for t in self.tables:
            t.clear()

    def key_count(self) -> int:
        return sum(len(t) for t in self.tables)


def critic_td_update(
    critic: TruncatedCritic, i: int, key_prev, key_cur, reward: float, alpha: float
) -> float:
    """One SARSA-style backup on key_prev; returns |change| for logging."""
    old = critic.get(i, key_prev)
    target = reward + critic.gamma * critic.get(i, key_cur)
    new = (1.0 - alpha) * old + alpha * target
    new = min(max(new, 0.0), critic.q_max)
    critic.tables[i][key_prev] = new
    return abs(new - old)


class LocalizedPolicy:
    """Per-agent softmax over logit tables; unseen keys read all-zero logits."""

    def __init__(
        self,
        action_cards: Sequence[int],
        tau_soft: float = 0.5,
        theta_max: float = 50.0,
    ):
        if tau_soft <= 0:
            raise ValueError(f"softmax temperature must be > 0, got {tau_soft}")
        if theta_max <= 0:
            raise ValueError(f"logit bound must be > 0, got {theta_max}")
        self.action_cards = tuple(action_cards)
        self.tau = tau_soft
        self.theta_max = theta_max
        self.logits: list[dict] = [dict() for _ in range(len(self.action_cards))]

    def theta(self, i: int, key) -> np.ndarray:
        t = self.logits[i].get(key)
        if t is None:
            return np.zeros(self.action_cards[i])
        return t

    def probs(self, i: int, key) -> np.ndarray:
        z = self.theta(i, key) / self.tau
        z = z - z.max()
        e = np.exp(z)
        return e / e.sum()

    def grad_log(self, i: int, key, a: int) -> np.ndarray:
        """d/dtheta log pi(a|key) = (e_a - pi) / tau."""
        g = -self.probs(i, key)
        g[a] += 1.0
        return g / self.tau


def sample_action(policy: LocalizedPolicy, i: int, key, rng: np.random.Generator) -> int:
    p = policy.probs(i, key)
    return int(np.searchsorted(np.cumsum(p), rng.random(), side="right").clip(0, len(p) - 1))


def actor_update(policy: LocalizedPolicy, gradients: Sequence[dict], eta: float) -> None:
    """theta += eta * g per key, then clamp to [-theta_max, theta_max]."""
    for i, table in enumerate(gradients):
        for key, g in table.items():
            th = np.array(policy.theta(i, key))
            th += eta * g
            np.clip(th, -policy.theta_max, policy.theta_max, out=th)
            policy.logits[i][key] = th


@dataclass
class EpisodeLog:
    k: int
    domain_index: int
    states: tuple[GlobalState, ...]
    actions: tuple[JointAction, ...]
    rewards: tuple[tuple[float, ...], ...]  # per step, per agent
    return_discounted: float
    grad_norm: float
    critic_delta: float  # mean |TD change| over the episode's updates


def episode_return(rewards: Sequence[tuple[float, ...]], gamma: float) -> float:
    """Discounted sum of the global (agent-mean) reward."""
    return float(sum(
        gamma**t * (sum(r) / len(r)) for t, r in enumerate(rewards)
    ))


def estimate_policy_gradient(
    states: Sequence[GlobalState],
    actions: Sequence[JointAction],
    critic: TruncatedCritic,
    policy: LocalizedPolicy,
    keys: Sequence[AgentKeys],
    omega: DomainFactor,
    gamma: float,
) -> list[dict]:
    """Truncated policy gradient from one episode and the final critic.

    g_i = sum_t gamma^t (1/n) sum_{j in N_i^kappa} Q_j(key_j(t))
          * grad_theta_i log pi_i(a_i(t) | policy key_i(t)),
    accumulated sparsely per visited policy key.
    """
    n = len(keys)
    hoods = [set(keys[i].action_agents) for i in range(n)]
    grads: list[dict] = [dict() for _ in range(n)]
    for t, (s, a) in enumerate(zip(states, actions)):
        qvals = [critic.get(j, keys[j].critic_key(s, a, omega)) for j in range(n)]
        for i in range(n):
            scale = gamma**t * sum(qvals[j] for j in hoods[i]) / n
            if scale == 0.0:
                continue
            pkey = keys[i].policy_key(s, omega)
            g = grads[i].get(pkey)
            if g is None:
                g = np.zeros(policy.action_cards[i])
                grads[i][pkey] = g
            g += scale * policy.grad_log(i, pkey, a[i])
    return grads


def gradient_norm(grads: Sequence[dict]) -> float:
    total = 0.0
    for table in grads:
        for g in table.values():
            total += float((g * g).sum())
    return float(np.sqrt(total))


def run_episode(
    env: Environment,
    policy: LocalizedPolicy,
    critic: TruncatedCritic,
    keys: Sequence[AgentKeys],
    cond_omega: DomainFactor,
    horizon: int,
    schedule: StepsizeSchedule,
    ep_seed: int,
) -> tuple[list[GlobalState], list[JointAction], list[tuple[float, ...]], float]:
    """One episode of `horizon` steps (horizon+1 actions) with in-episode TD.

    cond_omega is the (estimated) domain factor used for table conditioning;
    the environment steps under its own true omega. Returns states, actions,
    rewards, and the mean absolute TD change.
    """
    n = env.spaces.n
    states: list[GlobalState] = [reset(env, ep_seed)]
    actions: list[JointAction] = []
    rewards: list[tuple[float, ...]] = []
    deltas: list[float] = []
    prev_keys = None
    for t in range(horizon + 1):
        s = states[-1]
        a = tuple(
            sample_action(
                policy, i, keys[i].policy_key(s, cond_omega),
                substream(ep_seed, t + 1, n + i, 4),
            )
            for i in range(n)
        )
        actions.append(a)
        cur_keys = [keys[i].critic_key(s, a, cond_omega) for i in range(n)]
        if prev_keys is not None:
            alpha = schedule.alpha_at(t - 1)
            for i in range(n):
                deltas.append(critic_td_update(
                    critic, i, prev_keys[i], cur_keys[i], rewards[-1][i], alpha
                ))
        prev_keys = cur_keys
        if t < horizon:
            nxt, r = step(env, s, a, ep_seed, t + 1)
            states.append(nxt)
            rewards.append(r)
    delta = float(np.mean(deltas)) if deltas else 0.0
    return states, actions, rewards, delta


def run_meta_training(
    source_envs: Sequence[Environment],
    omega_hats: Sequence[DomainFactor],
    keys: Sequence[AgentKeys],
    iterations: int,
    horizon: int,
    schedule: StepsizeSchedule,
    seed: int,
    gamma: float = 0.95,
    tau_soft: float = 0.5,
    theta_max: float = 50.0,
    warm_start: bool = False,
    policy: LocalizedPolicy | None = None,
) -> tuple[LocalizedPolicy, list[EpisodeLog]]:
    """Meta actor-critic over the source domains.

    Each outer iteration: sample a domain uniformly, zero the critic (unless
    warm_start), roll one episode with TD updates, take one actor step with
    eta_k. omega_hats are the Phase-1 estimates used for conditioning.
    """
    if len(source_envs) != len(omega_hats) or len(source_envs) == 0:
        raise ValueError("need one omega estimate per source env (>= 1 domain)")
    env0 = source_envs[0]
    n = env0.spaces.n
    if policy is None:
        policy = LocalizedPolicy(env0.spaces.action_cards, tau_soft, theta_max)
    critic = TruncatedCritic(n, env0.rbar, gamma)
    logs: list[EpisodeLog] = []
    domain_rng = np.random.default_rng((seed, 55))
    for k in range(iterations):
        m = int(domain_rng.integers(0, len(source_envs)))
        if not warm_start:
            critic.reset()
        ep_seed = int(np.random.default_rng((seed, 56, k)).integers(0, 2**63 - 1))
        states, actions, rewards, delta = run_episode(
            source_envs[m], policy, critic, keys, omega_hats[m],
            horizon, schedule, ep_seed,
        )
        grads = estimate_policy_gradient(
            states, actions, critic, policy, keys, omega_hats[m], gamma,
        )
        actor_update(policy, grads, schedule.eta_at(k))
        logs.append(EpisodeLog(
            k=k,
            domain_index=m,
            states=tuple(states),
            actions=tuple(actions),
            rewards=tuple(rewards),
            return_discounted=episode_return(rewards, gamma),
            grad_norm=gradient_norm(grads),
            critic_delta=delta,
        ))
    return policy, logs


def evaluate_policy(
    env: Environment,
    policy: LocalizedPolicy,
    keys: Sequence[AgentKeys],
    cond_omega: DomainFactor,
    episodes: int,
    horizon: int,
    seed: int,
    gamma: float,
) -> list[EpisodeLog]:
    """Frozen-policy rollouts; returns one log per episode (no learning)."""
    n = env.spaces.n
    logs = []
    for ep in range(episodes):
        ep_seed = int(np.random.default_rng((seed, 57, ep)).integers(0, 2**63 - 1))
        state = reset(env, ep_seed)
        states, actions, rewards = [state], [], []
        for t in range(horizon):
            a = tuple(
                sample_action(
                    policy, i, keys[i].policy_key(state, cond_omega),
                    substream(ep_seed, t + 1, n + i, 4),
                )
                for i in range(n)
            )
            actions.append(a)
            state, r = step(env, state, a, ep_seed, t + 1)
            states.append(state)
            rewards.append(r)
        logs.append(EpisodeLog(
            k=ep, domain_index=-1,
            states=tuple(states), actions=tuple(actions), rewards=tuple(rewards),
            return_discounted=episode_return(rewards, gamma),
            grad_norm=0.0, critic_delta=0.0,
        ))
    return logs


def adapt_and_deploy(
    policy: LocalizedPolicy,
    target_env: Environment,
    masks: CausalMasks,
    keys: Sequence[AgentKeys],
    t_a_episodes: int,
    seed: int,
    eval_episodes: int,
    horizon: int,
    gamma: float = 0.95,
    omega_grid: Sequence[float] | None = None,
):
    """Estimate the target domain factor, then deploy with no further updates.

    Returns (DomainEstimate, evaluation EpisodeLogs). Conditioning pools the
    per-agent likelihoods into one consensus grid point: within a domain all
    agents share the latent value, so during training every conditioning slot
    of a table key carries the same grid index — a key mixing different
    per-agent estimates can never have been visited and would read as an
    untrained (uniform) entry.
    """
    if t_a_episodes < 1:
        raise ValueError("adaptation requires at least one trajectory (t_a_episodes >= 1)")
    grid = tuple(sorted(omega_grid)) if omega_grid is not None else \
        target_env.omega.grids[0][0]
    trs = rollout_random(target_env, episodes=t_a_episodes, horizon=horizon, seed=seed)
    est = estimate_domain_factor(trs, masks, target_env, grid)
    # Condition on the training grid: table keys are grid indices, so the
    # deployment factor must index the same grid the policy was trained on.
    cond = consensus_domain_factor(est, target_env.spaces.n)
    logs = evaluate_policy(
        target_env, policy, keys, cond, eval_episodes, horizon, seed + 1, gamma
    )
    return est, logs


def consensus_domain_factor(est, n: int) -> DomainFactor:
    """Shared-index DomainFactor from pooled per-agent likelihoods.

    Sums the per-agent negative log-likelihood profiles and takes the argmin
    grid point for every agent (ties break to the smallest grid value). This
    is the maximum-likelihood estimate under the shared-latent structure of a
    domain, and it keeps every table key domain-consistent.
    """
    totals = [sum(agent_nll[g] for agent_nll in est.nll)
              for g in range(len(est.grid))]
    j = int(np.argmin(totals))
    return DomainFactor(
        grids=tuple((est.grid,) for _ in range(n)),
        indices=tuple((j,) for _ in range(n)),
    )


@dataclass(frozen=True)
class OracleResult:
    states: tuple[GlobalState, ...]
    actions: tuple[JointAction, ...]
    q: tuple[np.ndarray, ...]  # per agent, shape (|S|, |A|)
    decay: dict  # kappa -> per-agent sup |Q(s,a) - Q(s',a')| over kappa-agreeing pairs

    def state_index(self, s: GlobalState) -> int:
        return self._sidx[s]

    def action_index(self, a: JointAction) -> int:
        return self._aidx[a]

    def __post_init__(self):
        object.__setattr__(self, "_sidx", {s: k for k, s in enumerate(self.states)})
        object.__setattr__(self, "_aidx", {a: k for k, a in enumerate(self.actions)})


def exact_q_oracle(
    env: Environment,
    policy_probs: Callable[[GlobalState], Sequence[np.ndarray]],
    gamma: float,
    tolerance: float = 1e-10,
    kappas: Sequence[int] = (),
) -> OracleResult:
    """Dense per-agent policy evaluation on the enumerated joint kernel.

    policy_probs(state) gives each agent's action distribution (product
    policy). For each requested kappa, also measures the worst Q difference
    across state-action pairs identical inside N_i^kappa.
    """
    spaces = env.spaces
    n = spaces.n
    states = tuple(
        tuple(decode_local(k, spaces.state_cards[i]) for i, k in enumerate(combo))
        for combo in product(*[range(spaces.local_state_count(i)) for i in range(n)])
    )
    actions = tuple(product(*[range(spaces.action_cards[i]) for i in range(n)]))
    ns, na = len(states), len(actions)
    if ns * na > ORACLE_CAPACITY:
        raise ValueError(
            f"joint space too large for the exact oracle: {ns} x {na} entries "
            f"(limit {ORACLE_CAPACITY})"
        )

    # P[s, a, s'] as a product of local kernels; R[i, s, a] exact.
    p = np.ones((ns, na, ns))
    r = np.zeros((n, ns, na))
    local_counts = [spaces.local_state_count(i) for i in range(n)]
    for si, s in enumerate(states):
        for ai, a in enumerate(actions):
            dists = [env.kernel.local_dist(i, s, a, env.omega) for i in range(n)]
            row = dists[0]
            for i in range(1, n):
                row = np.outer(row, dists[i]).ravel()
            p[si, ai] = row
            for i in range(n):
                r[i, si, ai] = env.kernel.expected_reward(i, s, a, env.omega)
    # The joint enumeration above must match `states` ordering: both are
    # row-major products of per-agent local indices.
    pi = np.zeros((ns, na))
    for si, s in enumerate(states):
        dists = policy_probs(s)
        row = np.asarray(dists[0])
        for i in range(1, n):
            row = np.outer(row, np.asarray(dists[i])).ravel()
        pi[si] = row

    q_max = env.rbar / (1.0 - gamma)
    qs = []
    for i in range(n):
        q = np.zeros((ns, na))
        while True:
            v = (pi * q).sum(axis=1)  # V(s') under the product policy
            q_new = r[i] + gamma * (p @ v)
            gap = float(np.abs(q_new - q).max())
            q = q_new
            if gap <= tolerance * (1 - gamma):
                break
        qs.append(np.clip(q, 0.0, q_max))

    decay = {}
    for kappa in kappas:
        per_agent = []
        for i in range(n):
            hood = set(k_hop_neighborhood(env.graph, i, kappa))
            groups: dict = {}
            for si, s in enumerate(states):
                skey = tuple(s[j] for j in sorted(hood))
                for ai, a in enumerate(actions):
                    akey = tuple(a[j] for j in sorted(hood))
                    g = groups.setdefault((skey, akey), [np.inf, -np.inf])
                    val = qs[i][si, ai]
                    g[0] = min(g[0], val)
                    g[1] = max(g[1], val)
            per_agent.append(max(hi - lo for lo, hi in groups.values()))
        decay[kappa] = tuple(per_agent)
    return OracleResult(states=states, actions=actions, q=tuple(qs), decay=decay)
