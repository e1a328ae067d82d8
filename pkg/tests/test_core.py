import pytest
from hypothesis import given, strategies as st

from gsac.core import (
    AgentSpaces,
    CausalMasks,
    DomainFactor,
    NetworkGraph,
    domain_dims,
    k_hop_neighborhood,
    neighborhood_components,
    validate_action,
    validate_masks,
    validate_state,
)
from gsac.envs.base import decode_local, encode_local


class TestNetworkGraph:
    def test_ring_neighbors_include_self(self):
        g = NetworkGraph.ring(6)
        for i in range(6):
            nbrs = g.neighbors(i)
            assert i in nbrs
            assert len(nbrs) == 3

    def test_chain_endpoints(self):
        g = NetworkGraph.chain(4)
        assert set(g.neighbors(0)) == {0, 1}
        assert set(g.neighbors(1)) == {0, 1, 2}

    def test_grid_interior_degree(self):
        g = NetworkGraph.grid(3, 3)
        assert set(g.neighbors(4)) == {1, 3, 4, 5, 7}

    def test_ring_diameter(self):
        assert NetworkGraph.ring(6).diameter() == 3
        assert NetworkGraph.chain(5).diameter() == 4

    def test_single_agent(self):
        g = NetworkGraph.chain(1)
        assert g.neighbors(0) == (0,)
        assert g.diameter() == 0

    def test_from_edges_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            NetworkGraph.from_edges(2, [(0, 5)])


class TestKHopNeighborhood:
    def test_zero_hops_is_self(self):
        g = NetworkGraph.ring(5)
        assert k_hop_neighborhood(g, 2, 0) == (2,)

    def test_monotone_in_kappa(self):
        g = NetworkGraph.ring(8)
        prev = set()
        for kappa in range(5):
            cur = set(k_hop_neighborhood(g, 0, kappa))
            assert prev <= cur
            prev = cur

    def test_covers_graph_at_diameter(self):
        g = NetworkGraph.ring(6)
        assert set(k_hop_neighborhood(g, 0, g.diameter())) == set(range(6))

    def test_rejects_bad_agent(self):
        with pytest.raises(ValueError):
            k_hop_neighborhood(NetworkGraph.ring(3), 7, 1)


class TestAgentSpaces:
    def test_uniform(self):
        sp = AgentSpaces.uniform(3, 2, 4, 2)
        assert sp.n == 3
        assert sp.d_s(0) == 2
        assert sp.state_cards[1] == (4, 4)
        assert sp.local_state_count(2) == 16

    def test_neighborhood_components_order(self):
        g = NetworkGraph.chain(3)
        sp = AgentSpaces.uniform(3, 2, 2, 2)
        comps = neighborhood_components(g, sp, 1, 1)
        assert comps == ((0, 0), (0, 1), (1, 0), (1, 1), (2, 0), (2, 1))


class TestEncodeDecode:
    @given(st.lists(st.integers(2, 5), min_size=1, max_size=4), st.data())
    def test_roundtrip(self, cards, data):
        values = tuple(data.draw(st.integers(0, c - 1)) for c in cards)
        idx = encode_local(values, tuple(cards))
        assert decode_local(idx, tuple(cards)) == values
        assert 0 <= idx < int(__import__("math").prod(cards))

    def test_first_component_most_significant(self):
        assert encode_local((1, 0), (2, 3)) == 3
        assert encode_local((0, 1), (2, 3)) == 1


def _full_masks(graph, spaces, omega_dim=1):
    s_to_s, a_to_s, w_to_s = [], [], []
    s_to_r, a_to_r, w_to_r = [], [], []
    for i in range(graph.n):
        nbr = neighborhood_components(graph, spaces, i, 1)
        d = spaces.d_s(i)
        s_to_s.append(tuple(tuple([1] * len(nbr)) for _ in range(d)))
        a_to_s.append(tuple([1] * d))
        w_to_s.append(tuple(tuple([1] * omega_dim) for _ in range(d)))
        s_to_r.append(tuple([1] * d))
        a_to_r.append(1)
        w_to_r.append(tuple([1] * omega_dim))
    return CausalMasks(
        s_to_s=tuple(s_to_s), a_to_s=tuple(a_to_s), w_to_s=tuple(w_to_s),
        s_to_r=tuple(s_to_r), a_to_r=tuple(a_to_r), w_to_r=tuple(w_to_r),
    )


class TestCausalMasks:
    def test_full_masks_validate(self):
        g = NetworkGraph.chain(2)
        sp = AgentSpaces.uniform(2, 2, 2, 2)
        assert validate_masks(_full_masks(g, sp), g, sp) == []

    def test_wrong_row_width_reported(self):
        g = NetworkGraph.chain(2)
        sp = AgentSpaces.uniform(2, 2, 2, 2)
        m = _full_masks(g, sp)
        bad = CausalMasks(
            s_to_s=((m.s_to_s[0][0][:-1], m.s_to_s[0][1]), m.s_to_s[1]),
            a_to_s=m.a_to_s, w_to_s=m.w_to_s,
            s_to_r=m.s_to_r, a_to_r=m.a_to_r, w_to_r=m.w_to_r,
        )
        assert validate_masks(bad, g, sp) != []

    def test_state_parents(self):
        g = NetworkGraph.chain(2)
        sp = AgentSpaces.uniform(2, 1, 2, 2)
        m = _full_masks(g, sp)
        assert m.state_parents(g, sp, 0, 0) == ((0, 0), (1, 0))

    def test_domain_dims(self):
        g = NetworkGraph.chain(2)
        sp = AgentSpaces.uniform(2, 1, 2, 2)
        assert domain_dims(_full_masks(g, sp, omega_dim=2)) == [2, 2]


class TestDomainFactor:
    def test_scalar_on_grid(self):
        f = DomainFactor.scalar(3, (0.2, 0.5, 0.8), 0.5)
        assert f.value(1) == 0.5
        assert f.index(2) == 1
        assert f.dim(0) == 1

    def test_scalar_off_grid_rejected(self):
        with pytest.raises(ValueError):
            DomainFactor.scalar(2, (0.2, 0.8), 0.5)

    def test_with_value_all_agents(self):
        f = DomainFactor.scalar(2, (0.2, 0.8), 0.2)
        g = f.with_value(None, 0.8)
        assert g.value(0) == g.value(1) == 0.8
        assert f.value(0) == 0.2  # original untouched

    def test_with_value_single_agent_off_grid(self):
        f = DomainFactor.scalar(2, (0.2, 0.8), 0.2)
        with pytest.raises(ValueError):
            f.with_value(0, 0.3)


class TestValidators:
    def test_state_shape(self):
        sp = AgentSpaces.uniform(2, 2, 2, 2)
        validate_state(((0, 1), (1, 0)), sp)
        with pytest.raises(ValueError):
            validate_state(((0, 1),), sp)
        with pytest.raises(ValueError):
            validate_state(((0, 2), (1, 0)), sp)

    def test_action_range(self):
        sp = AgentSpaces.uniform(2, 1, 2, 3)
        validate_action((0, 2), sp)
        with pytest.raises(ValueError):
            validate_action((0, 3), sp)
