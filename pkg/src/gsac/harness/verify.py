"""Brute-force verification checks, shared by the CLI (`verify`) and the
acceptance tests.

Every check returns CheckResult(s) with the measured quantity and its bound so
failures are self-explanatory. Defaults match the acceptance settings; the
fast suite runs only the enumerable-oracle checks, the full suite adds the
Monte-Carlo rate checks.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, replace

import numpy as np

from gsac.acr import (
    acr_state_key,
    placeholder_fill,
    policy_acr_fixed_point,
    project,
    value_acr,
)
from gsac.baselines import build_unconditioned_keys
from gsac.core import (
    AgentSpaces,
    CausalMasks,
    NetworkGraph,
    k_hop_neighborhood,
    neighborhood_components,
)
from gsac.discovery import estimate_domain_factor, recover_causal_masks
from gsac.envs import build_synthetic, build_wireless
from gsac.envs.base import reset, rollout_random, step, substream
from gsac.harness.config import ExperimentConfig
from gsac.harness.runner import run_experiment
from gsac.learner import (
    LocalizedPolicy,
    TruncatedCritic,
    critic_td_update,
    estimate_policy_gradient,
    exact_q_oracle,
    sample_action,
)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    measured: float
    bound: float
    detail: str = ""

    def __str__(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        line = f"[{tag}] {self.name}: measured={self.measured:.6g} bound={self.bound:.6g}"
        return line + (f" ({self.detail})" if self.detail else "")


def _uniform_policy(spaces: AgentSpaces):
    dists = [np.full(spaces.action_cards[i], 1.0 / spaces.action_cards[i])
             for i in range(spaces.n)]

    def probs(_state):
        return dists

    return probs


def _all_components(spaces: AgentSpaces):
    return tuple((i, j) for i in range(spaces.n) for j in range(spaces.d_s(i)))


def _flat_to_state(flat, spaces: AgentSpaces):
    out, k = [], 0
    for i in range(spaces.n):
        d = spaces.d_s(i)
        out.append(tuple(flat[k:k + d]))
        k += d
    return tuple(out)


def _ring_env(n_agents: int, seed: int, mask_density: float = 1.0,
              reward_density: float = 0.5):
    graph = NetworkGraph.ring(n_agents)
    spaces = AgentSpaces.uniform(n_agents, 1, 2, 2)
    return build_synthetic(
        graph, spaces, mask_density, (0.3, 0.7), seed,
        reward_density=reward_density,
    )


def check_decay_bound(
    n_agents: int = 6,
    kappas=(0, 1, 2, 3),
    gamma: float = 0.95,
    seed: int = 0,
    bound_gamma: float | None = None,
) -> list[CheckResult]:
    """Sup Q-difference outside the kappa-hop neighborhood vs the geometric bound.

    bound_gamma overrides the discount used in the bound only (mutation
    testing: a mismatched discount must make the check fail).
    """
    env = _ring_env(n_agents, seed)
    gb = gamma if bound_gamma is None else bound_gamma
    # A state-dependent product policy: under uniform actions the mod-card
    # shift kernel uniformizes every child in one step, which makes the
    # measured decay vacuously zero beyond one hop.
    spaces = env.spaces
    rng = np.random.default_rng((seed, 21))
    tables = [
        {v: (lambda d: d / d.sum())(rng.random(spaces.action_cards[i]) + 0.1)
         for v in range(spaces.state_cards[i][0])}
        for i in range(spaces.n)
    ]

    def probs(s):
        return [tables[i][s[i][0]] for i in range(spaces.n)]

    oracle = exact_q_oracle(env, probs, gamma, kappas=kappas)
    out = []
    for kappa in kappas:
        measured = max(oracle.decay[kappa])
        bound = env.rbar * gb ** (kappa + 1) / (1.0 - gb)
        out.append(CheckResult(
            name=f"decay_bound[kappa={kappa}]",
            passed=measured <= bound,
            measured=measured,
            bound=bound,
        ))
    return out


def check_acr_error_bounds(
    n_agents: int = 6,
    kappas=(0, 1, 2),
    gamma: float = 0.95,
    seed: int = 5,
) -> list[CheckResult]:
    """Truncation error of the compact critics vs the 2x and 3x geometric bounds.

    2x: Q evaluated at the placeholder-filled value-compact state/action vs Q.
    3x: same comparison against the Q of the policy projected onto its
    compact inputs (value + policy compression).
    """
    env = _ring_env(n_agents, seed, mask_density=0.7, reward_density=0.4)
    spaces, graph, masks = env.spaces, env.graph, env.masks
    n = spaces.n
    all_comps = _all_components(spaces)
    pol = policy_acr_fixed_point(masks, graph, spaces)

    def rep_state(s, comps):
        flat_full = tuple(v for loc in s for v in loc)
        filled = placeholder_fill(all_comps, comps, project(all_comps, comps, flat_full))
        return _flat_to_state(filled, spaces)

    # A seeded full-state product policy and its policy-compact projection.
    rng = np.random.default_rng((seed, 31))
    base: dict = {}
    q_pi = exact_q_oracle(env, _uniform_policy(spaces), gamma)  # for the state list
    for s in q_pi.states:
        dists = []
        for i in range(n):
            d = rng.random(spaces.action_cards[i]) + 0.1
            dists.append(d / d.sum())
        base[s] = dists

    def pi_base(s):
        return base[s]

    def pi_projected(s):
        return [base[rep_state(s, pol[i].components)][i] for i in range(n)]

    q_pi = exact_q_oracle(env, pi_base, gamma)
    q_proj = exact_q_oracle(env, pi_projected, gamma)

    out = []
    for kappa in kappas:
        vcomps = [value_acr(masks, graph, spaces, i, kappa).components for i in range(n)]
        hoods = [set(k_hop_neighborhood(graph, i, kappa)) for i in range(n)]
        m2 = 0.0
        m3 = 0.0
        for i in range(n):
            for si, s in enumerate(q_pi.states):
                s_fill = rep_state(s, vcomps[i])
                sfi = q_pi.state_index(s_fill)
                for ai, a in enumerate(q_pi.actions):
                    a_fill = tuple(a[j] if j in hoods[i] else 0 for j in range(n))
                    afi = q_pi.action_index(a_fill)
                    m2 = max(m2, abs(q_pi.q[i][si, ai] - q_pi.q[i][sfi, afi]))
                    m3 = max(m3, abs(q_pi.q[i][si, ai] - q_proj.q[i][sfi, afi]))
        unit = env.rbar * gamma ** (kappa + 1) / (1.0 - gamma)
        out.append(CheckResult(
            name=f"value_acr_bound[kappa={kappa}]",
            passed=m2 <= 2 * unit, measured=m2, bound=2 * unit,
        ))
        out.append(CheckResult(
            name=f"doubly_compact_bound[kappa={kappa}]",
            passed=m3 <= 3 * unit, measured=m3, bound=3 * unit,
        ))
    return out


def _exactness_env(seed: int):
    """2-agent chain where component 1 of each agent is decision-irrelevant."""
    graph = NetworkGraph.chain(2)
    spaces = AgentSpaces.uniform(2, 2, 2, 2)
    s_to_s, a_to_s, w_to_s, s_to_r, a_to_r, w_to_r = [], [], [], [], [], []
    for i in range(2):
        nbr = neighborhood_components(graph, spaces, i, 1)
        rows = []
        # component 0: coupled across agents; component 1: isolated chain
        bits0 = [1 if j == 0 else 0 for (_, j) in nbr]
        rows.append(tuple(bits0))
        bits1 = [1 if (k, j) == (i, 1) else 0 for (k, j) in nbr]
        rows.append(tuple(bits1))
        s_to_s.append(tuple(rows))
        a_to_s.append((1, 0))
        w_to_s.append(((0,), (0,)))
        s_to_r.append((1, 0))
        a_to_r.append(1)
        w_to_r.append((0,))
    masks = CausalMasks(
        s_to_s=tuple(s_to_s), a_to_s=tuple(a_to_s), w_to_s=tuple(w_to_s),
        s_to_r=tuple(s_to_r), a_to_r=tuple(a_to_r), w_to_r=tuple(w_to_r),
    )
    return build_synthetic(graph, spaces, 0.5, (0.3, 0.7), seed, masks=masks)


def check_policy_acr_exactness(seed: int = 7, tol: float = 1e-9) -> CheckResult:
    """Under a policy measurable in the fixed-point compact representation,
    Q must be exactly invariant to the non-compact state components."""
    env = _exactness_env(seed)
    graph, spaces, masks = env.graph, env.spaces, env.masks
    n = spaces.n
    pol = policy_acr_fixed_point(masks, graph, spaces)

    rng = np.random.default_rng((seed, 41))
    tables = []
    for i in range(n):
        t = {}
        for combo in np.ndindex(*(2,) * len(pol[i].components)):
            d = rng.random(spaces.action_cards[i]) + 0.1
            t[tuple(int(v) for v in combo)] = d / d.sum()
        tables.append(t)

    def probs(s):
        return [tables[i][acr_state_key(s, pol[i].components)] for i in range(n)]

    # Ancestral closure of the union of compact sets under the state parents:
    # Q can only depend on these components (everything else is provably inert).
    closure = set()
    for i in range(n):
        closure |= set(pol[i].components)
    changed = True
    while changed:
        changed = False
        for (k, j) in list(closure):
            for parent in masks.state_parents(graph, spaces, k, j):
                if parent not in closure:
                    closure.add(parent)
                    changed = True
    closure = tuple(sorted(closure))
    if len(closure) >= sum(spaces.d_s(i) for i in range(n)):
        raise RuntimeError("exactness fixture degenerate: no inert components")

    oracle = exact_q_oracle(env, probs, 0.95)
    measured = 0.0
    for i in range(n):
        groups: dict = {}
        for si, s in enumerate(oracle.states):
            key = acr_state_key(s, closure)
            for ai in range(len(oracle.actions)):
                g = groups.setdefault((key, ai), [np.inf, -np.inf])
                v = oracle.q[i][si, ai]
                g[0] = min(g[0], v)
                g[1] = max(g[1], v)
        measured = max(measured, max(hi - lo for lo, hi in groups.values()))
    return CheckResult(
        name="policy_acr_exactness", passed=measured <= tol,
        measured=measured, bound=tol,
        detail=f"inert components: {sum(spaces.d_s(i) for i in range(n)) - len(closure)}",
    )


def check_acr_dimensionality() -> CheckResult:
    """Interior agents of the grid-3 wireless env: raw 1-hop policy features
    number 5x4=20; the compact representation keeps 5x2=10."""
    env = build_wireless(3, 0.5, seed=0)
    graph, spaces = env.graph, env.spaces
    interior = next(i for i in range(graph.n) if len(graph.neighbors(i)) == 5)
    raw = len(neighborhood_components(graph, spaces, interior, 1))
    acr = len(policy_acr_fixed_point(env.masks, graph, spaces)[interior].components)
    return CheckResult(
        name="acr_dimensionality", passed=(raw == 20 and acr == 10),
        measured=acr, bound=10, detail=f"raw={raw} (want 20), compact={acr} (want 10)",
    )


def check_critic_convergence(
    steps: int = 50_000,
    checkpoint: int = 5_000,
    gamma: float = 0.95,
    h: float = 40.0,
    t0: float = 40.0,
    seed: int = 9,
) -> list[CheckResult]:
    """Long-run temporal-difference evaluation of a frozen uniform policy on a
    2-agent chain vs the exact oracle, with the decaying stepsize h/(t+t0).

    t counts visits of the updated table entry (asynchronous updates decay
    per entry, matching the stepsize condition of the convergence analysis).
    """
    graph = NetworkGraph.chain(2)
    spaces = AgentSpaces.uniform(2, 1, 2, 2)
    env = build_synthetic(graph, spaces, 1.0, (0.3, 0.7), seed)
    n = spaces.n
    keys = build_unconditioned_keys(graph, spaces, kappa=1)
    oracle = exact_q_oracle(env, _uniform_policy(spaces), gamma)

    critic = TruncatedCritic(n, env.rbar, gamma)
    rng = np.random.default_rng((seed, 61))

    def uniform_action():
        return tuple(int(rng.integers(0, spaces.action_cards[i])) for i in range(n))

    def sup_error() -> float:
        worst = 0.0
        for i in range(n):
            for si, s in enumerate(oracle.states):
                for ai, a in enumerate(oracle.actions):
                    est = critic.get(i, keys[i].critic_key(s, a, env.omega))
                    worst = max(worst, abs(est - oracle.q[i][si, ai]))
        return worst

    ep_seed = int(np.random.default_rng((seed, 62)).integers(0, 2**63 - 1))
    state = reset(env, ep_seed)
    action = uniform_action()
    err_at_checkpoint = None
    visits: list[dict] = [dict() for _ in range(n)]
    for t in range(steps):
        nxt, rewards = step(env, state, action, ep_seed, t + 1)
        nxt_action = uniform_action()
        for i in range(n):
            key = keys[i].critic_key(state, action, env.omega)
            v = visits[i].get(key, 0)
            visits[i][key] = v + 1
            alpha = h / (v + t0)
            critic_td_update(
                critic, i, key,
                keys[i].critic_key(nxt, nxt_action, env.omega),
                rewards[i], min(alpha, 1.0),
            )
        state, action = nxt, nxt_action
        if t + 1 == checkpoint:
            err_at_checkpoint = sup_error()
    err_final = sup_error()
    bound = 0.05 * env.rbar / (1.0 - gamma)
    return [
        CheckResult(
            name="critic_convergence_sup_error", passed=err_final <= bound,
            measured=err_final, bound=bound,
        ),
        CheckResult(
            name="critic_convergence_monotone", passed=err_final <= err_at_checkpoint,
            measured=err_final, bound=err_at_checkpoint,
            detail=f"error at {checkpoint} steps vs {steps} steps",
        ),
    ]


def check_gradient_cosine(
    episodes: int = 50_000,
    horizon: int = 5,
    gamma: float = 0.95,
    seed: int = 11,
) -> CheckResult:
    """Mean of the sampled truncated policy gradients vs its exact expectation
    (enumerated on a 1-agent env with an oracle-valued critic)."""
    graph = NetworkGraph.chain(1)
    spaces = AgentSpaces.uniform(1, 1, 3, 2)
    env = build_synthetic(graph, spaces, 1.0, (0.3, 0.7), seed)
    keys = build_unconditioned_keys(graph, spaces, kappa=1)
    policy = LocalizedPolicy(spaces.action_cards)
    rng = np.random.default_rng((seed, 71))

    oracle_states = [((v,),) for v in range(3)]
    for s in oracle_states:
        policy.logits[0][keys[0].policy_key(s, env.omega)] = rng.normal(size=2)

    def probs(s):
        return [policy.probs(0, keys[0].policy_key(s, env.omega))]

    oracle = exact_q_oracle(env, probs, gamma)
    critic = TruncatedCritic(1, env.rbar, gamma)
    for si, s in enumerate(oracle.states):
        for ai, a in enumerate(oracle.actions):
            critic.tables[0][keys[0].critic_key(s, a, env.omega)] = oracle.q[0][si, ai]

    # Exact expectation: sum_t gamma^t P_t(s) sum_a pi(a|s) Q(s,a) grad_log.
    ns = len(oracle.states)
    p_joint = np.zeros((ns, ns))  # state transition under the policy
    for si, s in enumerate(oracle.states):
        pi = probs(s)[0]
        for ai, a in enumerate(oracle.actions):
            dist = env.kernel.local_dist(0, s, a, env.omega)
            p_joint[si] += pi[ai] * dist
    rho = np.array([env.kernel.initial_dist(0, env.omega)[
        oracle.state_index(s)] for s in oracle.states])
    exact: dict = {}
    p_t = rho.copy()
    for t in range(horizon + 1):
        for si, s in enumerate(oracle.states):
            pkey = keys[0].policy_key(s, env.omega)
            g = exact.setdefault(pkey, np.zeros(2))
            pi = probs(s)[0]
            for ai in range(len(oracle.actions)):
                g += (gamma**t * p_t[si] * pi[ai] * oracle.q[0][si, ai]
                      * policy.grad_log(0, pkey, ai))
        p_t = p_t @ p_joint

    # Monte-Carlo mean of the episode estimator (critic frozen at oracle values).
    mean: dict = {}
    for ep in range(episodes):
        ep_seed = int(np.random.default_rng((seed, 72, ep)).integers(0, 2**63 - 1))
        state = reset(env, ep_seed)
        states, actions = [state], []
        for t in range(horizon + 1):
            a = sample_action(
                policy, 0, keys[0].policy_key(states[-1], env.omega),
                substream(ep_seed, t + 1, 1, 4),
            )
            actions.append((a,))
            if t < horizon:
                nxt, _ = step(env, states[-1], actions[-1], ep_seed, t + 1)
                states.append(nxt)
        grads = estimate_policy_gradient(
            states, actions, critic, policy, keys, env.omega, gamma
        )
        for key, g in grads[0].items():
            mean.setdefault(key, np.zeros(2))
            mean[key] += g
    for key in mean:
        mean[key] /= episodes

    all_keys = sorted(set(exact) | set(mean), key=repr)
    v_exact = np.concatenate([exact.get(k, np.zeros(2)) for k in all_keys])
    v_mean = np.concatenate([mean.get(k, np.zeros(2)) for k in all_keys])
    cos = float(v_exact @ v_mean / (np.linalg.norm(v_exact) * np.linalg.norm(v_mean)))
    return CheckResult(
        name="gradient_cosine", passed=cos >= 0.95, measured=cos, bound=0.95,
        detail=f"{episodes} episodes, horizon {horizon}",
    )


def _recovery_env(seed: int):
    graph = NetworkGraph.chain(2)
    spaces = AgentSpaces.uniform(2, 2, 3, 2)
    return build_synthetic(graph, spaces, 0.5, (0.2, 0.5, 0.8), seed)


def check_recovery_rates(
    seeds: int = 20,
    transition_counts=(500, 1500, 5000),
    horizon: int = 10,
) -> list[CheckResult]:
    """Exact-mask recovery rate on the synthetic family: >= 95% at the largest
    sample size and non-decreasing in the sample size."""
    rates = []
    for count in transition_counts:
        hits = 0
        for s in range(seeds):
            env = _recovery_env(s)
            data = [
                rollout_random(env.with_omega_value(v), count // horizon, horizon,
                               int(np.random.default_rng((s, 81, m)).integers(2**63)))
                for m, v in enumerate(env.omega.grids[0][0])
            ]
            result = recover_causal_masks(data, env.graph, env.spaces)
            hits += int(result.masks == env.masks)
        rates.append(hits / seeds)
    monotone = all(rates[i] <= rates[i + 1] for i in range(len(rates) - 1))
    return [
        CheckResult(
            name="recovery_rate_final", passed=rates[-1] >= 0.95,
            measured=rates[-1], bound=0.95,
            detail=f"rates at {tuple(transition_counts)}: {rates}",
        ),
        CheckResult(
            name="recovery_rate_monotone", passed=monotone,
            measured=min(rates[i + 1] - rates[i] for i in range(len(rates) - 1)),
            bound=0.0, detail=f"rates: {rates}",
        ),
    ]


def check_wireless_distractors(
    seeds: int = 20,
    episodes: int = 250,
    horizon: int = 10,
) -> CheckResult:
    """The two noise components of the wireless state must never be accepted
    as parents of any state component or reward."""
    clean = 0
    for s in range(seeds):
        env = build_wireless(1, 0.2, seed=s)
        d = env.kernel.d
        data = [
            rollout_random(env.with_omega_value(v), episodes, horizon,
                           int(np.random.default_rng((s, 82, m)).integers(2**63)))
            for m, v in enumerate((0.2, 0.8))
        ]
        result = recover_causal_masks(data, env.graph, env.spaces)
        ok = True
        for i in range(env.graph.n):
            nbr = neighborhood_components(env.graph, env.spaces, i, 1)
            dz = [k for k, (a, j) in enumerate(nbr) if j >= d]
            for row in result.masks.s_to_s[i]:
                ok &= all(row[k] == 0 for k in dz)
            ok &= all(result.masks.s_to_r[i][j] == 0
                      for j in range(env.spaces.d_s(i)) if j >= d)
        clean += int(ok)
    return CheckResult(
        name="wireless_distractors_excluded", passed=clean == seeds,
        measured=clean, bound=seeds, detail=f"{clean}/{seeds} seeds clean",
    )


def check_domain_estimation(
    seeds: int = 50,
    t_e_small: int = 20,
    t_e_large: int = 320,
    horizon: int = 10,
    true_omega: float = 0.5,
) -> list[CheckResult]:
    """Grid MLE on the grid-3 wireless env: hit rate at the small sample size
    and mean-error monotonicity in the sample size."""
    env = build_wireless(3, true_omega, seed=0)
    grid = (0.2, 0.5, 0.8)
    hits = 0
    errs_small, errs_large = [], []
    for s in range(seeds):
        base = int(np.random.default_rng((s, 83)).integers(2**63))
        trs = rollout_random(env, t_e_large, horizon, base)
        small = trs[: t_e_small * horizon]
        est_s = estimate_domain_factor(small, env.masks, env, grid)
        est_l = estimate_domain_factor(trs, env.masks, env, grid)
        hits += int(all(v == true_omega for v in est_s.omega_hat))
        errs_small.append(np.mean([abs(v - true_omega) for v in est_s.omega_hat]))
        errs_large.append(np.mean([abs(v - true_omega) for v in est_l.omega_hat]))
    rate = hits / seeds
    m_small, m_large = float(np.mean(errs_small)), float(np.mean(errs_large))
    return [
        CheckResult(
            name="domain_estimation_rate", passed=rate >= 0.9,
            measured=rate, bound=0.9,
            detail=f"all-agent hit rate at T_e={t_e_small} episodes",
        ),
        CheckResult(
            name="domain_estimation_monotone", passed=m_large <= m_small,
            measured=m_large, bound=m_small,
            detail=f"mean |error| at T_e={t_e_large} vs T_e={t_e_small}",
        ),
    ]


def check_determinism(config: ExperimentConfig | None = None) -> CheckResult:
    """Two runs of the same config must write byte-identical metrics CSVs."""
    with tempfile.TemporaryDirectory() as tmp:
        if config is None:
            config = ExperimentConfig(
                kind="synthetic", n_agents=2, d_s=2, state_card=3, action_card=2,
                iterations=20, recovery_episodes=50, eval_episodes=5,
                omega_target=0.5, out=os.path.join(tmp, "a"),
            )
        else:
            config = replace(config, out=os.path.join(tmp, "a"))
        m1 = run_experiment(config)
        m2 = run_experiment(replace(config, out=os.path.join(tmp, "b")))
        if not (m1.ok and m2.ok):
            return CheckResult(
                name="determinism", passed=False, measured=0.0, bound=1.0,
                detail=f"run failures: {m1.failures + m2.failures}",
            )
        with open(m1.metrics_csv, "rb") as fh:
            b1 = fh.read()
        with open(m2.metrics_csv, "rb") as fh:
            b2 = fh.read()
    return CheckResult(
        name="determinism", passed=b1 == b2, measured=float(b1 == b2), bound=1.0,
        detail=f"{len(b1)} bytes vs {len(b2)} bytes",
    )


def verify_suite(level: str = "fast") -> list[CheckResult]:
    """fast: exact-oracle checks on enumerable envs; full adds the
    Monte-Carlo rate checks (several minutes)."""
    if level not in ("fast", "full"):
        raise ValueError(f"level must be fast|full, got {level!r}")
    results: list[CheckResult] = []
    results += check_decay_bound()
    results += check_acr_error_bounds()
    results.append(check_policy_acr_exactness())
    results.append(check_acr_dimensionality())
    results.append(check_determinism())
    if level == "full":
        results += check_critic_convergence()
        results.append(check_gradient_cosine())
        results += check_recovery_rates()
        results.append(check_wireless_distractors())
        results += check_domain_estimation()
    return results
