"""Signalized traffic grid with conserved vehicle flow.

Intersections sit on a grid_size x grid_size lattice (4-connected). Agent i's
local state holds one bounded queue x_{i->j} per outgoing road, ordered by
destination id; its action is a signal pattern, one green/red bit per
outgoing road (bit r of the action index controls the road with rank r;
action 0 is all-red).

Per step, each directed road (i->j) gets a shared capacity draw
C_{ij} ~ Binomial(2, omega_i); min(C_{ij} * y_{ij}, x_{ij}) vehicles leave
queue x_{ij} and arrive at intersection j, where total inflow is split across
j's outgoing queues by a deterministic round-robin (rank order, remainder to
the lowest ranks). Queues clip at the capacity. The same C draw governs the
departure side and the arrival side, so vehicles are conserved up to clipping.

Reward: r_i = (cap * m_i - sum of i's queues) / (cap * m_i), i.e. 1 when all
queues are empty and 0 when all are full.
"""

from __future__ import annotations

from math import comb
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
from gsac.envs.base import Environment, Kernel, _TAG_EDGE, encode_local, substream


def _binom2_pmf(p: float) -> tuple[float, float, float]:
    return tuple(comb(2, k) * p**k * (1.0 - p) ** (2 - k) for k in range(3))


def _split(total: int, m: int) -> tuple[int, ...]:
    return tuple(total // m + (1 if r < total % m else 0) for r in range(m))


class TrafficKernel(Kernel):
    def __init__(self, graph: NetworkGraph, out: tuple[tuple[int, ...], ...], cap: int):
        self.graph = graph
        self.out = out  # out[i]: destinations of i's outgoing roads, rank order
        self.cap = cap
        self.edge_id = {}
        for i in range(graph.n):
            for j in out[i]:
                self.edge_id[(i, j)] = len(self.edge_id)
        # rank of road (k -> i) within k's outgoing roads
        self.rank = {(k, j): r for k in range(graph.n) for r, j in enumerate(out[k])}

    def _moved(self, x: int, a: int, r: int, c: int) -> int:
        return min(c * ((a >> r) & 1), x)

    def _next_local(
        self, i: int, state: GlobalState, action: JointAction,
        c_out: Sequence[int], c_in: Sequence[int],
    ) -> tuple[int, ...]:
        """Next queues at i given capacity draws on its out roads and in roads."""
        inflow = 0
        for pos, k in enumerate(self.out[i]):  # in-neighbors = out-neighbors
            r = self.rank[(k, i)]
            inflow += self._moved(state[k][r], action[k], r, c_in[pos])
        share = _split(inflow, len(self.out[i]))
        nxt = []
        for r in range(len(self.out[i])):
            kept = state[i][r] - self._moved(state[i][r], action[i], r, c_out[r])
            nxt.append(min(kept + share[r], self.cap))
        return tuple(nxt)

    def local_dist(
        self, i: int, state: GlobalState, action: JointAction, omega: DomainFactor
    ) -> np.ndarray:
        m = len(self.out[i])
        cards = tuple([self.cap + 1] * m)
        dist = np.zeros((self.cap + 1) ** m)
        pmf_out = [_binom2_pmf(omega.value(i, 0))] * m
        pmf_in = [_binom2_pmf(omega.value(k, 0)) for k in self.out[i]]
        combos = [()]
        for _ in range(2 * m):
            combos = [c + (v,) for c in combos for v in range(3)]
        for draw in combos:
            c_out, c_in = draw[:m], draw[m:]
            p = 1.0
            for r in range(m):
                p *= pmf_out[r][c_out[r]] * pmf_in[r][c_in[r]]
            if p > 0.0:
                nxt = self._next_local(i, state, action, c_out, c_in)
                dist[encode_local(nxt, cards)] += p
        return dist

    def expected_reward(
        self, i: int, state: GlobalState, action: JointAction, omega: DomainFactor
    ) -> float:
        m = len(self.out[i])
        return (self.cap * m - sum(state[i])) / (self.cap * m)

    def initial_dist(self, i: int, omega: DomainFactor) -> np.ndarray:
        size = (self.cap + 1) ** len(self.out[i])
        return np.full(size, 1.0 / size)

    def sample_next_state(
        self, state, action, omega, spaces, seed: int, t: int
    ) -> GlobalState:
        # One shared draw per directed road; departures and arrivals both see
        # it, so the sampled dynamics conserve vehicles up to clipping.
        c = {}
        for (i, j), e in self.edge_id.items():
            rng = substream(seed, t, spaces.n + e, _TAG_EDGE)
            c[(i, j)] = int(rng.binomial(2, omega.value(i, 0)))
        return tuple(
            self._next_local(
                i, state, action,
                [c[(i, j)] for j in self.out[i]],
                [c[(k, i)] for k in self.out[i]],
            )
            for i in range(spaces.n)
        )


def build_traffic(
    grid_size: int,
    flow_prob: float,
    capacity: int = 2,
    seed: int = 0,
    omega_grid: Sequence[float] = (0.2, 0.5, 0.8),
) -> Environment:
    """n = grid_size^2 intersections; flow_prob must lie on omega_grid."""
    if grid_size < 2:
        raise ValueError(f"grid_size must be >= 2, got {grid_size}")
    if capacity < 1:
        raise ValueError(f"capacity must be >= 1, got {capacity}")
    graph = NetworkGraph.grid(grid_size, grid_size)
    n = graph.n
    out = tuple(tuple(j for j in graph.adj[i] if j != i) for i in range(n))
    spaces = AgentSpaces(
        state_cards=tuple(tuple([capacity + 1] * len(out[i])) for i in range(n)),
        action_cards=tuple(2 ** len(out[i]) for i in range(n)),
    )
    masks = _traffic_masks(graph, spaces, out)
    omega = DomainFactor.scalar(n, omega_grid, flow_prob)
    kernel = TrafficKernel(graph, out, capacity)
    return Environment(
        name="traffic", graph=graph, spaces=spaces, masks=masks,
        omega=omega, kernel=kernel, rbar=1.0,
    )


def _traffic_masks(
    graph: NetworkGraph, spaces: AgentSpaces, out: tuple[tuple[int, ...], ...]
) -> CausalMasks:
    n = graph.n
    rank = {(k, j): r for k in range(n) for r, j in enumerate(out[k])}
    s_to_s, a_to_s, w_to_s = [], [], []
    s_to_r, a_to_r, w_to_r = [], [], []
    for i in range(n):
        nbr = neighborhood_components(graph, spaces, i, 1)
        m = len(out[i])
        rows = []
        for r in range(m):
            bits = [0] * len(nbr)
            bits[nbr.index((i, r))] = 1  # own queue on that road
            for k in out[i]:  # queues pointed at i on each in-road
                bits[nbr.index((k, rank[(k, i)]))] = 1
            rows.append(tuple(bits))
        s_to_s.append(tuple(rows))
        a_to_s.append(tuple([1] * m))
        w_to_s.append(tuple([(1,)] * m))
        s_to_r.append(tuple([1] * m))
        a_to_r.append(0)
        w_to_r.append((0,))
    return CausalMasks(
        s_to_s=tuple(s_to_s), a_to_s=tuple(a_to_s), w_to_s=tuple(w_to_s),
        s_to_r=tuple(s_to_r), a_to_r=tuple(a_to_r), w_to_r=tuple(w_to_r),
    )
