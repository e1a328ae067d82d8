"""Agent-centered representations (ACRs) built from causal masks.

Three compact representations, all pure functions of the masks:

- value ACR: the state components inside N_i^kappa that can influence agent
  i's reward within kappa steps (level 0 = direct reward parents; level k'
  adds any component with an edge into the previous level);
- policy ACR: a network fixed point computed by local rounds — each agent
  starts from its direct reward parents and adds any own component that feeds
  some neighbor's current set; the agent then conditions its policy on the
  union of its neighbors' sets (a finite variant runs exactly kappa-1 rounds
  and under-approximates the fixed point);
- domain ACR: the latent-factor coordinates with a direct reward link or an
  edge into a state component of a given state ACR.

Components are always kept in canonical order: ascending agent id, then
ascending component index.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from gsac.core import (
    AgentSpaces,
    CausalMasks,
    NetworkGraph,
    k_hop_neighborhood,
    neighborhood_components,
)

Component = tuple[int, int]  # (agent, component index)


def _canon(comps) -> tuple[Component, ...]:
    return tuple(sorted(set(comps)))


@dataclass(frozen=True)
class ValueACR:
    agent: int
    kappa: int
    components: tuple[Component, ...]  # subset of components of s_{N_i^kappa}


@dataclass(frozen=True)
class PolicyACR:
    agent: int
    own: tuple[Component, ...]  # s°_i, this agent's contribution
    components: tuple[Component, ...]  # s°_{N_i}, what the policy conditions on


@dataclass(frozen=True)
class DomainACR:
    agent: int
    components: tuple[Component, ...]  # (agent, omega coordinate) pairs


def _reward_parents(masks: CausalMasks, i: int) -> tuple[Component, ...]:
    return tuple((i, j) for j in masks.reward_state_parents(i))


def value_acr(
    masks: CausalMasks, graph: NetworkGraph, spaces: AgentSpaces, i: int, kappa: int
) -> ValueACR:
    """Level-0 = reward parents of r_i; each level adds components feeding it."""
    if kappa < 0:
        raise ValueError(f"kappa must be >= 0, got {kappa}")
    acr = set(_reward_parents(masks, i))
    for k in range(1, kappa + 1):
        frontier = set()
        prev = set(acr)
        for src in neighborhood_components(graph, spaces, i, k):
            for dst in prev:
                if masks.has_state_edge(graph, spaces, src, dst):
                    frontier.add(src)
                    break
        acr |= frontier
    return ValueACR(agent=i, kappa=kappa, components=_canon(acr))


def policy_acr_fixed_point(
    masks: CausalMasks, graph: NetworkGraph, spaces: AgentSpaces
) -> tuple[PolicyACR, ...]:
    """Local propagation to a network-wide fixed point.

    Round semantics are bulk-synchronous: all agents inspect the same
    previous-round sets, and the loop stops at the first round in which no
    agent adds anything.
    """
    own: list[set[Component]] = [set(_reward_parents(masks, i)) for i in range(graph.n)]
    while True:
        added = False
        prev = [set(s) for s in own]
        for i in range(graph.n):
            target = set()
            for k in graph.neighbors(i):
                target |= prev[k]
            for j in range(spaces.d_s(i)):
                if (i, j) in own[i]:
                    continue
                if any(
                    masks.has_state_edge(graph, spaces, (i, j), dst) for dst in target
                ):
                    own[i].add((i, j))
                    added = True
        if not added:
            break
    return tuple(
        PolicyACR(
            agent=i,
            own=_canon(own[i]),
            components=_canon(set().union(*(own[k] for k in graph.neighbors(i)))),
        )
        for i in range(graph.n)
    )


def policy_acr_finite(
    masks: CausalMasks, graph: NetworkGraph, spaces: AgentSpaces, kappa: int
) -> tuple[PolicyACR, ...]:
    """Exactly kappa-1 propagation rounds, then one neighborhood union.

    Always a subset of the fixed point; equal to it once kappa-1 reaches the
    fixed point's round count.
    """
    if kappa < 1:
        raise ValueError(f"kappa must be >= 1, got {kappa}")
    own: list[set[Component]] = [set(_reward_parents(masks, i)) for i in range(graph.n)]
    for _ in range(kappa - 1):
        prev = [set(s) for s in own]
        for i in range(graph.n):
            target = set()
            for k in graph.neighbors(i):
                target |= prev[k]
            for j in range(spaces.d_s(i)):
                if (i, j) not in own[i] and any(
                    masks.has_state_edge(graph, spaces, (i, j), dst) for dst in target
                ):
                    own[i].add((i, j))
    return tuple(
        PolicyACR(
            agent=i,
            own=_canon(own[i]),
            components=_canon(set().union(*(own[k] for k in graph.neighbors(i)))),
        )
        for i in range(graph.n)
    )


def domain_acr(
    masks: CausalMasks,
    graph: NetworkGraph,
    spaces: AgentSpaces,
    state_acr: ValueACR | PolicyACR,
    i: int,
) -> DomainACR:
    """Omega coordinates with a direct reward link or an edge into the state ACR."""
    comps: set[Component] = set()
    for j, bit in enumerate(masks.w_to_r[i]):
        if bit:
            comps.add((i, j))
    for (k, j) in state_acr.components:
        for w, bit in enumerate(masks.w_to_s[k][j]):
            if bit:
                comps.add((k, w))
    return DomainACR(agent=i, components=_canon(comps))


def placeholder_fill(
    full_components: Sequence[Component],
    acr_components: Sequence[Component],
    values: Sequence[int],
) -> tuple[int, ...]:
    """Embed compact ACR values into a full component tuple.

    Non-ACR slots get the canonical placeholder 0 (always in-range: component
    value 0 / null action). `values` must cover the ACR exactly, in its order.
    """
    if len(values) != len(acr_components):
        raise ValueError(
            f"got {len(values)} values for {len(acr_components)} ACR components"
        )
    lookup = dict(zip(acr_components, values))
    extra = set(acr_components) - set(full_components)
    if extra:
        raise ValueError(f"ACR components {sorted(extra)} not in the full tuple spec")
    return tuple(lookup.get(c, 0) for c in full_components)


def project(
    full_components: Sequence[Component],
    acr_components: Sequence[Component],
    full_values: Sequence[int],
) -> tuple[int, ...]:
    """Extract ACR values (in ACR order) from a full component tuple."""
    idx = {c: k for k, c in enumerate(full_components)}
    try:
        return tuple(full_values[idx[c]] for c in acr_components)
    except KeyError as e:
        raise ValueError(f"ACR component {e.args[0]} not in the full tuple spec") from None


def acr_state_key(state, acr_components: Sequence[Component]) -> tuple[int, ...]:
    """Compact key for a global state: ACR component values in canonical order."""
    return tuple(state[k][j] for (k, j) in acr_components)
