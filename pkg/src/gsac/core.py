"""Graph structure, agent spaces, causal masks, and domain factors.

All types here are immutable after construction and shared freely by the
environment, discovery, representation, and learning modules.

Addressing conventions used throughout the package:

- agents are dense integer ids 0..n-1
- state components of agent i are (i, j) pairs with j in 0..d_s(i)-1
- tuples spanning a neighborhood are ordered by ascending agent id, and
  within an agent by ascending component index
- action index 0 is always the idle/null action of an environment
"""

from __future__ import annotations

from dataclasses import dataclass
from collections import deque
from typing import Iterable, Sequence

# A global state is a tuple (per agent) of tuples (per component) of ints.
GlobalState = tuple[tuple[int, ...], ...]
# A joint action is a tuple of per-agent action indices.
JointAction = tuple[int, ...]


@dataclass(frozen=True)
class NetworkGraph:
    """Symmetric interaction graph over n agents; every agent neighbors itself."""

    n: int
    # adj[i] is the sorted tuple of neighbors of i, including i itself
    adj: tuple[tuple[int, ...], ...]

    @staticmethod
    def from_edges(n: int, edges: Iterable[tuple[int, int]]) -> "NetworkGraph":
        if n < 1:
            raise ValueError(f"agent count must be >= 1, got {n}")
        nbrs = [{i} for i in range(n)]
        for a, b in edges:
            if not (0 <= a < n and 0 <= b < n):
                raise ValueError(f"edge ({a},{b}) references agent outside 0..{n - 1}")
            nbrs[a].add(b)
            nbrs[b].add(a)
        return NetworkGraph(n=n, adj=tuple(tuple(sorted(s)) for s in nbrs))

    @staticmethod
    def ring(n: int) -> "NetworkGraph":
        return NetworkGraph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])

    @staticmethod
    def chain(n: int) -> "NetworkGraph":
        return NetworkGraph.from_edges(n, [(i, i + 1) for i in range(n - 1)])

    @staticmethod
    def grid(rows: int, cols: int) -> "NetworkGraph":
        """4-connected grid, agents numbered row-major."""
        edges = []
        for r in range(rows):
            for c in range(cols):
                i = r * cols + c
                if c + 1 < cols:
                    edges.append((i, i + 1))
                if r + 1 < rows:
                    edges.append((i, i + cols))
        return NetworkGraph.from_edges(rows * cols, edges)

    def neighbors(self, i: int) -> tuple[int, ...]:
        return self.adj[i]

    def edges(self) -> tuple[tuple[int, int], ...]:
        out = []
        for i in range(self.n):
            for j in self.adj[i]:
                if j > i:
                    out.append((i, j))
        return tuple(out)

    def diameter(self) -> int:
        worst = 0
        for i in range(self.n):
            dist = self._bfs(i)
            if any(d < 0 for d in dist):
                raise ValueError("graph is disconnected; diameter undefined")
            worst = max(worst, max(dist))
        return worst

    def _bfs(self, i: int) -> list[int]:
        dist = [-1] * self.n
        dist[i] = 0
        q = deque([i])
        while q:
            u = q.popleft()
            for v in self.adj[u]:
                if dist[v] < 0:
                    dist[v] = dist[u] + 1
                    q.append(v)
        return dist


def k_hop_neighborhood(graph: NetworkGraph, i: int, kappa: int) -> tuple[int, ...]:
    """N_i^kappa in ascending agent-id order. N_i^0 = {i}."""
    if not (0 <= i < graph.n):
        raise ValueError(f"agent id {i} outside 0..{graph.n - 1}")
    if kappa < 0:
        raise ValueError(f"kappa must be >= 0, got {kappa}")
    dist = graph._bfs(i)
    return tuple(j for j in range(graph.n) if 0 <= dist[j] <= kappa)


@dataclass(frozen=True)
class AgentSpaces:
    """Finite local state/action spaces.

    state_cards[i][j] is the cardinality of component j of agent i;
    action_cards[i] is the local action cardinality of agent i.
    """

    state_cards: tuple[tuple[int, ...], ...]
    action_cards: tuple[int, ...]

    def __post_init__(self):
        if len(self.state_cards) != len(self.action_cards):
            raise ValueError("state_cards and action_cards disagree on agent count")
        for i, cards in enumerate(self.state_cards):
            if len(cards) < 1 or any(c < 1 for c in cards):
                raise ValueError(f"agent {i}: all component cardinalities must be >= 1")
        if any(a < 1 for a in self.action_cards):
            raise ValueError("all action cardinalities must be >= 1")

    @staticmethod
    def uniform(n: int, d_s: int, state_card: int, action_card: int) -> "AgentSpaces":
        return AgentSpaces(
            state_cards=tuple(tuple([state_card] * d_s) for _ in range(n)),
            action_cards=tuple([action_card] * n),
        )

    @property
    def n(self) -> int:
        return len(self.action_cards)

    def d_s(self, i: int) -> int:
        return len(self.state_cards[i])

    def local_state_count(self, i: int) -> int:
        p = 1
        for c in self.state_cards[i]:
            p *= c
        return p


def neighborhood_components(
    graph: NetworkGraph, spaces: AgentSpaces, i: int, kappa: int = 1
) -> tuple[tuple[int, int], ...]:
    """Canonically ordered (agent, component) pairs over N_i^kappa."""
    return tuple(
        (a, j) for a in k_hop_neighborhood(graph, i, kappa) for j in range(spaces.d_s(a))
    )


@dataclass(frozen=True)
class CausalMasks:
    """Binary dependency structure of the factored generative model.

    - s_to_s[i][j]: bits over neighborhood_components(graph, spaces, i, 1);
      parents of next-step component (i, j) among current neighborhood states.
    - a_to_s[i][j]: 1 iff agent i's own action is a parent of component (i, j).
    - w_to_s[i][j]: bits over agent i's own domain-factor coordinates.
    - s_to_r[i]: bits over agent i's own state components (reward parents).
    - a_to_r[i]: 1 iff the local action is a reward parent.
    - w_to_r[i]: bits over agent i's own domain-factor coordinates.
    """

    s_to_s: tuple[tuple[tuple[int, ...], ...], ...]
    a_to_s: tuple[tuple[int, ...], ...]
    w_to_s: tuple[tuple[tuple[int, ...], ...], ...]
    s_to_r: tuple[tuple[int, ...], ...]
    a_to_r: tuple[int, ...]
    w_to_r: tuple[tuple[int, ...], ...]

    def state_parents(
        self, graph: NetworkGraph, spaces: AgentSpaces, i: int, j: int
    ) -> tuple[tuple[int, int], ...]:
        comps = neighborhood_components(graph, spaces, i, 1)
        bits = self.s_to_s[i][j]
        return tuple(c for c, b in zip(comps, bits) if b)

    def reward_state_parents(self, i: int) -> tuple[int, ...]:
        return tuple(j for j, b in enumerate(self.s_to_r[i]) if b)

    def has_state_edge(
        self, graph: NetworkGraph, spaces: AgentSpaces,
        src: tuple[int, int], dst: tuple[int, int],
    ) -> bool:
        """True iff component src(t) is a parent of component dst(t+1)."""
        di, dj = dst
        return src in self.state_parents(graph, spaces, di, dj)


def validate_masks(
    masks: CausalMasks, graph: NetworkGraph, spaces: AgentSpaces
) -> list[str]:
    """Every dimension/locality violation, as human-readable strings.

    An empty list means the masks are valid. Violations are return values,
    not exceptions.
    """
    v: list[str] = []
    n = graph.n
    for name, field, per_component in (
        ("s_to_s", masks.s_to_s, True),
        ("a_to_s", masks.a_to_s, True),
        ("w_to_s", masks.w_to_s, True),
        ("s_to_r", masks.s_to_r, False),
        ("a_to_r", masks.a_to_r, False),
        ("w_to_r", masks.w_to_r, False),
    ):
        if len(field) != n:
            v.append(f"{name}: expected {n} agent entries, got {len(field)}")
    if v:
        return v

    n_w = domain_dims(masks)
    for i in range(n):
        d = spaces.d_s(i)
        nbr = neighborhood_components(graph, spaces, i, 1)
        if len(masks.s_to_s[i]) != d:
            v.append(f"s_to_s[{i}]: expected {d} child components, got {len(masks.s_to_s[i])}")
            continue
        if len(masks.a_to_s[i]) != d:
            v.append(f"a_to_s[{i}]: expected {d} child components, got {len(masks.a_to_s[i])}")
        if len(masks.w_to_s[i]) != d:
            v.append(f"w_to_s[{i}]: expected {d} child components, got {len(masks.w_to_s[i])}")
        for j in range(d):
            bits = masks.s_to_s[i][j]
            if len(bits) != len(nbr):
                v.append(
                    f"s_to_s[{i}][{j}]: expected {len(nbr)} bits over the 1-hop "
                    f"neighborhood components, got {len(bits)}"
                )
            if j < len(masks.w_to_s[i]) and len(masks.w_to_s[i][j]) != n_w[i]:
                v.append(
                    f"w_to_s[{i}][{j}]: expected {n_w[i]} domain-factor bits, "
                    f"got {len(masks.w_to_s[i][j])}"
                )
        if len(masks.s_to_r[i]) != d:
            v.append(f"s_to_r[{i}]: expected {d} bits, got {len(masks.s_to_r[i])}")
        if len(masks.w_to_r[i]) != n_w[i]:
            v.append(f"w_to_r[{i}]: expected {n_w[i]} bits, got {len(masks.w_to_r[i])}")
    return v


def domain_dims(masks: CausalMasks) -> list[int]:
    """Per-agent domain-factor dimensionality implied by the mask shapes."""
    dims = []
    for i in range(len(masks.w_to_r)):
        if masks.w_to_s[i]:
            dims.append(max(len(masks.w_to_r[i]), max(len(b) for b in masks.w_to_s[i])))
        else:
            dims.append(len(masks.w_to_r[i]))
    return dims


@dataclass(frozen=True)
class DomainFactor:
    """Per-agent latent vector on a finite grid.

    grids[i][j] is the sorted tuple of admissible values for coordinate j of
    agent i; indices[i][j] selects the current value. Storing (index, grid)
    pairs keeps tabular conditioning exact: the index round-trips to the
    value with no floating-point ambiguity.
    """

    grids: tuple[tuple[tuple[float, ...], ...], ...]
    indices: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if len(self.grids) != len(self.indices):
            raise ValueError("grids and indices disagree on agent count")
        for i, (g, idx) in enumerate(zip(self.grids, self.indices)):
            if len(g) != len(idx):
                raise ValueError(f"agent {i}: grids and indices disagree on dimension")
            for j, (grid, k) in enumerate(zip(g, idx)):
                if len(grid) < 1:
                    raise ValueError(f"agent {i} coord {j}: empty grid")
                if not (0 <= k < len(grid)):
                    raise ValueError(f"agent {i} coord {j}: index {k} off the grid")

    @staticmethod
    def scalar(n: int, grid: Sequence[float], value: float) -> "DomainFactor":
        """All agents share one scalar coordinate set to `value` (must be on grid)."""
        g = tuple(sorted(float(x) for x in grid))
        try:
            k = g.index(float(value))
        except ValueError:
            raise ValueError(f"value {value} is not on the grid {g}") from None
        return DomainFactor(
            grids=tuple((g,) for _ in range(n)),
            indices=tuple((k,) for _ in range(n)),
        )

    def dim(self, i: int) -> int:
        return len(self.grids[i])

    def value(self, i: int, j: int = 0) -> float:
        return self.grids[i][j][self.indices[i][j]]

    def index(self, i: int, j: int = 0) -> int:
        return self.indices[i][j]

    def with_value(self, i_or_all: int | None, value: float, j: int = 0) -> "DomainFactor":
        """New factor with coordinate j set to `value` for one agent or all."""
        idx = [list(t) for t in self.indices]
        agents = range(len(self.grids)) if i_or_all is None else [i_or_all]
        for a in agents:
            grid = self.grids[a][j]
            if float(value) not in grid:
                raise ValueError(f"value {value} is not on agent {a}'s grid {grid}")
            idx[a][j] = grid.index(float(value))
        return DomainFactor(grids=self.grids, indices=tuple(tuple(t) for t in idx))


def validate_state(state: GlobalState, spaces: AgentSpaces) -> None:
    if len(state) != spaces.n:
        raise ValueError(f"state has {len(state)} agents, expected {spaces.n}")
    for i, comps in enumerate(state):
        cards = spaces.state_cards[i]
        if len(comps) != len(cards):
            raise ValueError(f"agent {i}: state has {len(comps)} components, expected {len(cards)}")
        for j, (x, c) in enumerate(zip(comps, cards)):
            if not (0 <= x < c):
                raise ValueError(f"agent {i} component {j}: value {x} outside 0..{c - 1}")


def validate_action(action: JointAction, spaces: AgentSpaces) -> None:
    if len(action) != spaces.n:
        raise ValueError(f"action has {len(action)} agents, expected {spaces.n}")
    for i, (a, c) in enumerate(zip(action, spaces.action_cards)):
        if not (0 <= a < c):
            raise ValueError(f"agent {i}: action {a} outside 0..{c - 1}")
