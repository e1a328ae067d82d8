"""Environment interface with per-agent factorized transitions.

Stepping is a pure function of (state, action, seed, t): every random draw
comes from a named substream keyed by (seed, t, agent, tag), so per-agent
sampling order cannot change the joint distribution and identical seeds
reproduce trajectories bit-for-bit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from gsac.core import (
    AgentSpaces,
    CausalMasks,
    DomainFactor,
    GlobalState,
    JointAction,
    NetworkGraph,
    validate_action,
    validate_state,
)

# Substream tags.
_TAG_STATE = 0
_TAG_REWARD = 1
_TAG_EDGE = 2
_TAG_RESET = 3


def substream(seed: int, t: int, entity: int, tag: int) -> np.random.Generator:
    return np.random.default_rng((int(seed), int(t), int(entity), int(tag)))


def encode_local(values: Sequence[int], cards: Sequence[int]) -> int:
    """Mixed-radix encoding, first component most significant."""
    idx = 0
    for v, c in zip(values, cards):
        idx = idx * c + v
    return idx


def decode_local(idx: int, cards: Sequence[int]) -> tuple[int, ...]:
    out = []
    for c in reversed(cards):
        out.append(idx % c)
        idx //= c
    return tuple(reversed(out))


class Kernel:
    """Exact local transition/reward model of an environment.

    Subclasses must implement `local_dist` and `expected_reward`; the default
    sampling paths draw from those, which keeps sampled and enumerated
    behavior consistent by construction.
    """

    def local_dist(
        self, i: int, state: GlobalState, action: JointAction, omega: DomainFactor
    ) -> np.ndarray:
        """Distribution over agent i's next local state (mixed-radix indexed)."""
        raise NotImplementedError

    def expected_reward(
        self, i: int, state: GlobalState, action: JointAction, omega: DomainFactor
    ) -> float:
        raise NotImplementedError

    def initial_dist(self, i: int, omega: DomainFactor) -> np.ndarray:
        """Per-agent initial local-state distribution (rho0 factorizes)."""
        raise NotImplementedError

    def sample_next_state(
        self,
        state: GlobalState,
        action: JointAction,
        omega: DomainFactor,
        spaces: AgentSpaces,
        seed: int,
        t: int,
    ) -> GlobalState:
        nxt = []
        for i in range(spaces.n):
            p = self.local_dist(i, state, action, omega)
            rng = substream(seed, t, i, _TAG_STATE)
            idx = int(np.searchsorted(np.cumsum(p), rng.random(), side="right"))
            idx = min(idx, len(p) - 1)
            nxt.append(decode_local(idx, spaces.state_cards[i]))
        return tuple(nxt)

    def sample_rewards(
        self,
        state: GlobalState,
        action: JointAction,
        omega: DomainFactor,
        spaces: AgentSpaces,
        seed: int,
        t: int,
    ) -> tuple[float, ...]:
        # Deterministic rewards by default; stochastic envs override.
        return tuple(
            self.expected_reward(i, state, action, omega) for i in range(spaces.n)
        )


@dataclass(frozen=True)
class Environment:
    """Immutable environment spec. Stepping never mutates it."""

    name: str
    graph: NetworkGraph
    spaces: AgentSpaces
    masks: CausalMasks  # ground truth; learners may not look at it
    omega: DomainFactor
    kernel: Kernel
    rbar: float = 1.0

    def with_omega(self, omega: DomainFactor) -> "Environment":
        return Environment(
            name=self.name,
            graph=self.graph,
            spaces=self.spaces,
            masks=self.masks,
            omega=omega,
            kernel=self.kernel,
            rbar=self.rbar,
        )

    def with_omega_value(self, value: float) -> "Environment":
        return self.with_omega(self.omega.with_value(None, value))

    def transition_prob(
        self,
        i: int,
        state: GlobalState,
        action: JointAction,
        next_local: tuple[int, ...],
        omega: DomainFactor,
    ) -> float:
        p = self.kernel.local_dist(i, state, action, omega)
        return float(p[encode_local(next_local, self.spaces.state_cards[i])])


@dataclass(frozen=True)
class Transition:
    state: GlobalState
    action: JointAction
    rewards: tuple[float, ...]
    next_state: GlobalState
    t: int

    def __post_init__(self):
        if not (len(self.state) == len(self.action) == len(self.rewards) == len(self.next_state)):
            raise ValueError("transition fields disagree on agent count")


def reset(env: Environment, seed: int) -> GlobalState:
    """Initial state drawn from rho0; deterministic given seed."""
    state = []
    for i in range(env.spaces.n):
        p = env.kernel.initial_dist(i, env.omega)
        rng = substream(seed, 0, i, _TAG_RESET)
        idx = int(np.searchsorted(np.cumsum(p), rng.random(), side="right"))
        idx = min(idx, len(p) - 1)
        state.append(decode_local(idx, env.spaces.state_cards[i]))
    return tuple(state)


def step(
    env: Environment,
    state: GlobalState,
    action: JointAction,
    seed: int,
    t: int,
) -> tuple[GlobalState, tuple[float, ...]]:
    """One synchronous step; rewards are bounded in [0, rbar]."""
    validate_state(state, env.spaces)
    validate_action(action, env.spaces)
    nxt = env.kernel.sample_next_state(state, action, env.omega, env.spaces, seed, t)
    rewards = env.kernel.sample_rewards(state, action, env.omega, env.spaces, seed, t)
    return nxt, rewards


def rollout_random(
    env: Environment, episodes: int, horizon: int, seed: int
) -> list[Transition]:
    """Uniform-random-action trajectories (exploration data for recovery/MLE)."""
    out: list[Transition] = []
    for ep in range(episodes):
        ep_seed = int(np.random.default_rng((seed, ep)).integers(0, 2**63 - 1))
        state = reset(env, ep_seed)
        for t in range(horizon):
            arng = substream(ep_seed, t + 1, env.spaces.n, _TAG_STATE)
            action = tuple(
                int(arng.integers(0, env.spaces.action_cards[i]))
                for i in range(env.spaces.n)
            )
            nxt, rewards = step(env, state, action, ep_seed, t + 1)
            out.append(Transition(state, action, rewards, nxt, t))
            state = nxt
    return out


def write_trajectory_csv(transitions: Sequence[Transition], path: str) -> None:
    """One row per (t, agent, component, value), with action/reward columns."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "agent", "component", "value", "next_value", "action", "reward"])
        for tr in transitions:
            for i in range(len(tr.state)):
                for j, v in enumerate(tr.state[i]):
                    w.writerow(
                        [tr.t, i, j, v, tr.next_state[i][j], tr.action[i],
                         repr(float(tr.rewards[i]))]
                    )
