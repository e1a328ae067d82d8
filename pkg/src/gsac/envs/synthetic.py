"""Random factored environment with known ground-truth masks.

Built so the structural-identifiability preconditions hold by construction.
Each state component follows a shift kernel: with probability `tv_margin`
the next value is

    (sum of structural-parent values + action + omega grid index + offset) mod card

and with probability 1 - tv_margin it is uniform. Changing any single parent
value moves the point mass to a different cell, so the child law shifts by
exactly `tv_margin` in total variation — one uniform detectability margin
per parent, with no probability budget shared between parents. The build
refuses configurations where modular aliasing could cancel a parent's effect
(parent cardinality, action cardinality, or grid size exceeding the child's
cardinality).

Rewards are deterministic seeded tables over the masked (s_i, a_i, omega)
arguments, which keeps them in [0, 1] and dependent on exactly the masked
parents.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gsac.core import (
    AgentSpaces,
    CausalMasks,
    DomainFactor,
    GlobalState,
    JointAction,
    NetworkGraph,
    neighborhood_components,
)
from gsac.envs.base import Environment, Kernel


@dataclass(frozen=True)
class _ChildSpec:
    state_parents: tuple[tuple[int, int], ...]  # (agent, comp) pairs
    action_parent: bool
    omega_parent: bool
    offset: int


class SyntheticKernel(Kernel):
    def __init__(
        self,
        graph: NetworkGraph,
        spaces: AgentSpaces,
        children: tuple[tuple[_ChildSpec, ...], ...],
        tv_margin: float,
        seed: int,
        masks: CausalMasks,
    ):
        self.graph = graph
        self.spaces = spaces
        self.children = children
        self.tv_margin = tv_margin
        self.seed = seed
        self.masks = masks
        self._reward_cache: dict[tuple, float] = {}

    def _child_dist(
        self, i: int, j: int, state: GlobalState, action: JointAction, omega: DomainFactor
    ) -> np.ndarray:
        spec = self.children[i][j]
        card = self.spaces.state_cards[i][j]
        pos = spec.offset
        for (pa, pj) in spec.state_parents:
            pos += state[pa][pj]
        if spec.action_parent:
            pos += action[i]
        if spec.omega_parent:
            pos += omega.index(i, 0)
        dist = np.full(card, (1.0 - self.tv_margin) / card)
        dist[pos % card] += self.tv_margin
        return dist

    def local_dist(
        self, i: int, state: GlobalState, action: JointAction, omega: DomainFactor
    ) -> np.ndarray:
        dist = self._child_dist(i, 0, state, action, omega)
        for j in range(1, self.spaces.d_s(i)):
            dist = np.outer(dist, self._child_dist(i, j, state, action, omega)).ravel()
        return dist

    def expected_reward(
        self, i: int, state: GlobalState, action: JointAction, omega: DomainFactor
    ) -> float:
        key_parts: list[int] = [i]
        for j in self.masks.reward_state_parents(i):
            key_parts.append(state[i][j])
        if self.masks.a_to_r[i]:
            key_parts.append(action[i])
        for j, bit in enumerate(self.masks.w_to_r[i]):
            if bit:
                key_parts.append(omega.index(i, j))
        key = tuple(key_parts)
        if key not in self._reward_cache:
            rng = np.random.default_rng((self.seed, 777) + key)
            self._reward_cache[key] = float(rng.random())
        return self._reward_cache[key]

    def initial_dist(self, i: int, omega: DomainFactor) -> np.ndarray:
        m = self.spaces.local_state_count(i)
        return np.full(m, 1.0 / m)


def build_synthetic(
    graph: NetworkGraph,
    spaces: AgentSpaces,
    mask_density: float,
    omega_grid: tuple[float, ...],
    seed: int,
    d_max: int = 2,
    tv_margin: float = 0.7,
    reward_density: float = 0.5,
    omega_value: float | None = None,
    masks: CausalMasks | None = None,
) -> Environment:
    """Random sparse-mask tabular environment with retained ground truth.

    Every state component always has itself as a parent (density 0 on the
    rest makes each component an independent chain). In-degree over state
    parents is capped at d_max. Pass `masks` to pin the structure instead of
    sampling it.
    """
    if not (0 <= mask_density <= 1):
        raise ValueError(f"mask_density must be in [0, 1], got {mask_density}")
    if not (0.0 < tv_margin < 1.0):
        raise ValueError(f"tv_margin must be in (0, 1), got {tv_margin}")
    grid = tuple(sorted(float(x) for x in omega_grid))
    if any(not (0.0 < g < 1.0) for g in grid):
        raise ValueError(f"omega grid values must lie in (0, 1), got {grid}")
    rng = np.random.default_rng((seed, 101))

    if masks is None:
        masks = _sample_masks(graph, spaces, mask_density, rng, d_max, reward_density)

    children = _child_specs(graph, spaces, masks, rng)
    _check_aliasing(spaces, children, grid)

    om_value = grid[len(grid) // 2] if omega_value is None else float(omega_value)
    omega = DomainFactor.scalar(graph.n, grid, om_value)
    kernel = SyntheticKernel(graph, spaces, children, tv_margin, seed, masks)
    return Environment(
        name="synthetic", graph=graph, spaces=spaces, masks=masks,
        omega=omega, kernel=kernel, rbar=1.0,
    )


def _sample_masks(
    graph: NetworkGraph,
    spaces: AgentSpaces,
    density: float,
    rng: np.random.Generator,
    d_max: int,
    reward_density: float,
) -> CausalMasks:
    s_to_s, a_to_s, w_to_s = [], [], []
    s_to_r, a_to_r, w_to_r = [], [], []
    for i in range(graph.n):
        nbr = neighborhood_components(graph, spaces, i, 1)
        rows, abits, wbits = [], [], []
        for j in range(spaces.d_s(i)):
            bits = [0] * len(nbr)
            bits[nbr.index((i, j))] = 1  # self edge always present
            extras = [k for k, c in enumerate(nbr) if c != (i, j)]
            rng.shuffle(extras)
            taken = 1
            for k in extras:
                if taken >= d_max:
                    break
                if rng.random() < density:
                    bits[k] = 1
                    taken += 1
            rows.append(tuple(bits))
            abits.append(1 if rng.random() < density else 0)
            wbits.append((1 if rng.random() < density else 0,))
        s_to_s.append(tuple(rows))
        a_to_s.append(tuple(abits))
        w_to_s.append(tuple(wbits))
        s_to_r.append(tuple(1 if rng.random() < reward_density else 0 for _ in range(spaces.d_s(i))))
        a_to_r.append(1 if rng.random() < reward_density else 0)
        w_to_r.append((1 if rng.random() < reward_density else 0,))
    return CausalMasks(
        s_to_s=tuple(s_to_s), a_to_s=tuple(a_to_s), w_to_s=tuple(w_to_s),
        s_to_r=tuple(s_to_r), a_to_r=tuple(a_to_r), w_to_r=tuple(w_to_r),
    )


def _child_specs(
    graph: NetworkGraph,
    spaces: AgentSpaces,
    masks: CausalMasks,
    rng: np.random.Generator,
) -> tuple[tuple[_ChildSpec, ...], ...]:
    out = []
    for i in range(graph.n):
        specs = []
        for j in range(spaces.d_s(i)):
            parents = masks.state_parents(graph, spaces, i, j)
            act = bool(masks.a_to_s[i][j])
            omg = bool(masks.w_to_s[i][j][0]) if masks.w_to_s[i][j] else False
            card = spaces.state_cards[i][j]
            specs.append(_ChildSpec(parents, act, omg, int(rng.integers(0, card))))
        out.append(tuple(specs))
    return tuple(out)


def _check_aliasing(
    spaces: AgentSpaces,
    children: tuple[tuple[_ChildSpec, ...], ...],
    grid: tuple[float, ...],
) -> None:
    """Refuse structures where a parent's effect could alias away mod card."""
    for i in range(spaces.n):
        for j, spec in enumerate(children[i]):
            card = spaces.state_cards[i][j]
            for (pa, pj) in spec.state_parents:
                if spaces.state_cards[pa][pj] > card:
                    raise ValueError(
                        f"child ({i},{j}): parent ({pa},{pj}) cardinality exceeds the "
                        f"child's; the flip margin would not be guaranteed"
                    )
            if spec.action_parent and spaces.action_cards[i] > card:
                raise ValueError(
                    f"child ({i},{j}): action cardinality {spaces.action_cards[i]} "
                    f"exceeds the child's {card}; the flip margin would not be guaranteed"
                )
            if spec.omega_parent and len(grid) > card:
                raise ValueError(
                    f"child ({i},{j}): grid size {len(grid)} exceeds the child "
                    f"cardinality {card}; distinct grid values would alias"
                )
