"""Random-access wireless network on a 2-D user grid.

Users sit at the nodes of a (grid_size+1) x (grid_size+1) lattice; one access
point sits on every lattice edge, so two users interact iff they are
4-adjacent (they share exactly one access point). The local state is
(b_1..b_d, z_1, z_2): b_k says whether a packet with residual deadline k is
queued, and the z components are decision-irrelevant uniform noise refreshed
every step (a channel-quality indicator and a coordinate readout that carry
no information about rewards or dynamics).

Per step for user i:
  1. if the action picks an access point and the queue is nonempty, the
     earliest-deadline packet is transmitted and leaves the queue (success
     only affects the reward: it requires that no other user transmitted to
     the same access point, and then pays 1 with probability q_i);
  2. deadlines age: any packet left in bin 1 expires, bins shift down;
  3. a new packet arrives into bin d with probability omega_i.

Step 1-3 make the local transition kernel depend only on (b_i, a_i, omega_i),
so transitions factorize exactly per agent and the per-agent likelihood in
omega is exact (bin d is a pure Bernoulli(omega) observation).
"""

from __future__ import annotations

from typing import Sequence

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
from gsac.envs.base import Environment, Kernel, _TAG_REWARD, substream


def _next_bits(bits: tuple[int, ...], transmit: bool, d: int) -> tuple[int, ...]:
    """Deterministic part of the queue update (bins 1..d-1); bin d is the arrival."""
    b = list(bits)
    if transmit and any(b):
        b[min(k for k in range(d) if b[k])] = 0
    return tuple(b[1:])  # bin-1 packet expires; bins shift down


class WirelessKernel(Kernel):
    def __init__(
        self,
        side: int,
        d: int,
        z_cards: tuple[int, ...],
        ap_of: tuple[tuple[int, ...], ...],
        q: np.ndarray,
        spaces: AgentSpaces,
    ):
        self.side = side
        self.d = d
        self.z_cards = z_cards
        self.ap_of = ap_of  # per user, sorted access-point ids; action k>0 -> ap_of[i][k-1]
        self.q = q
        self.spaces = spaces

    def _transmitters(self, state: GlobalState, action: JointAction) -> dict[int, list[int]]:
        by_ap: dict[int, list[int]] = {}
        for i, a in enumerate(action):
            if a > 0 and any(state[i][: self.d]):
                by_ap.setdefault(self.ap_of[i][a - 1], []).append(i)
        return by_ap

    def local_dist(
        self, i: int, state: GlobalState, action: JointAction, omega: DomainFactor
    ) -> np.ndarray:
        bits = state[i][: self.d]
        head = _next_bits(bits, action[i] > 0, self.d)
        om = omega.value(i, 0)
        dist = np.zeros(1)
        dist[0] = 1.0
        for v in head:
            comp = np.zeros(2)
            comp[v] = 1.0
            dist = np.outer(dist, comp).ravel()
        dist = np.outer(dist, np.array([1.0 - om, om])).ravel()  # arrival bin
        for zc in self.z_cards:
            dist = np.outer(dist, np.full(zc, 1.0 / zc)).ravel()
        return dist

    def expected_reward(
        self, i: int, state: GlobalState, action: JointAction, omega: DomainFactor
    ) -> float:
        by_ap = self._transmitters(state, action)
        a = action[i]
        if a > 0 and any(state[i][: self.d]) and len(by_ap[self.ap_of[i][a - 1]]) == 1:
            return float(self.q[i])
        return 0.0

    def sample_rewards(
        self, state, action, omega, spaces, seed: int, t: int
    ) -> tuple[float, ...]:
        by_ap = self._transmitters(state, action)
        sole = set()
        for users in by_ap.values():
            if len(users) == 1:
                sole.add(users[0])
        out = []
        for i in range(spaces.n):
            if i in sole:
                rng = substream(seed, t, i, _TAG_REWARD)
                out.append(1.0 if rng.random() < self.q[i] else 0.0)
            else:
                out.append(0.0)
        return tuple(out)

    def initial_dist(self, i: int, omega: DomainFactor) -> np.ndarray:
        om = omega.value(i, 0)
        dist = np.zeros(1)
        dist[0] = 1.0
        for _ in range(self.d):
            dist = np.outer(dist, np.array([1.0 - om, om])).ravel()
        for zc in self.z_cards:
            dist = np.outer(dist, np.full(zc, 1.0 / zc)).ravel()
        return dist


def build_wireless(
    grid_size: int,
    arrival_prob: float,
    deadline: int = 2,
    seed: int = 0,
    omega_grid: Sequence[float] = (0.2, 0.5, 0.8),
    success_prob: float | Sequence[float] | None = None,
    z_cards: tuple[int, ...] = (2, 2),
) -> Environment:
    """n = (grid_size+1)^2 users; arrival_prob must lie on omega_grid."""
    if grid_size < 1:
        raise ValueError(f"grid_size must be >= 1, got {grid_size}")
    if deadline < 1:
        raise ValueError(f"deadline must be >= 1, got {deadline}")
    side = grid_size + 1
    n = side * side

    # Access points on lattice edges; users sharing an AP are 4-adjacent.
    edges = []
    for r in range(side):
        for c in range(side):
            u = r * side + c
            if c + 1 < side:
                edges.append((u, u + 1))
            if r + 1 < side:
                edges.append((u, u + side))
    graph = NetworkGraph.from_edges(n, edges)
    ap_lists: list[list[int]] = [[] for _ in range(n)]
    for ap_id, (u, v) in enumerate(edges):
        ap_lists[u].append(ap_id)
        ap_lists[v].append(ap_id)
    ap_of = tuple(tuple(sorted(s)) for s in ap_lists)

    d = deadline
    spaces = AgentSpaces(
        state_cards=tuple(tuple([2] * d + list(z_cards)) for _ in range(n)),
        action_cards=tuple(len(ap_of[i]) + 1 for i in range(n)),
    )

    rng = np.random.default_rng((seed, 202))
    if success_prob is None:
        q = rng.random(n)
    elif np.isscalar(success_prob):
        q = np.full(n, float(success_prob))
    else:
        q = np.asarray(success_prob, dtype=float)
        if q.shape != (n,):
            raise ValueError(f"success_prob must have {n} entries")

    masks = _wireless_masks(graph, spaces, d)
    omega = DomainFactor.scalar(n, omega_grid, arrival_prob)
    kernel = WirelessKernel(side, d, tuple(z_cards), ap_of, q, spaces)
    return Environment(
        name="wireless", graph=graph, spaces=spaces, masks=masks,
        omega=omega, kernel=kernel, rbar=1.0,
    )


def _wireless_masks(graph: NetworkGraph, spaces: AgentSpaces, d: int) -> CausalMasks:
    n = graph.n
    s_to_s, a_to_s, w_to_s = [], [], []
    s_to_r, a_to_r, w_to_r = [], [], []
    for i in range(n):
        nbr = neighborhood_components(graph, spaces, i, 1)
        d_s = spaces.d_s(i)
        rows, abits, wbits = [], [], []
        for j in range(d_s):
            bits = [0] * len(nbr)
            if j < d - 1:
                # aged queue bin: depends on every own queue bit and the action
                for k in range(d):
                    bits[nbr.index((i, k))] = 1
                rows.append(tuple(bits))
                abits.append(1)
                wbits.append((0,))
            elif j == d - 1:
                rows.append(tuple(bits))  # arrival bin: pure Bernoulli(omega)
                abits.append(0)
                wbits.append((1,))
            else:
                rows.append(tuple(bits))  # distractors: parent-free
                abits.append(0)
                wbits.append((0,))
        s_to_s.append(tuple(rows))
        a_to_s.append(tuple(abits))
        w_to_s.append(tuple(wbits))
        s_to_r.append(tuple([1] * d + [0] * (d_s - d)))
        a_to_r.append(1)
        w_to_r.append((0,))
    return CausalMasks(
        s_to_s=tuple(s_to_s), a_to_s=tuple(a_to_s), w_to_s=tuple(w_to_s),
        s_to_r=tuple(s_to_r), a_to_r=tuple(a_to_r), w_to_r=tuple(w_to_r),
    )
