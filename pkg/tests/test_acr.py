import pytest

from gsac.acr import (
    acr_state_key,
    domain_acr,
    placeholder_fill,
    policy_acr_finite,
    policy_acr_fixed_point,
    project,
    value_acr,
)
from gsac.core import AgentSpaces, CausalMasks, NetworkGraph, neighborhood_components
from tests.test_core import _full_masks


def _empty_reward_masks(graph, spaces):
    """Fully-connected dynamics, but rewards depend on nothing."""
    m = _full_masks(graph, spaces)
    n = graph.n
    return CausalMasks(
        s_to_s=m.s_to_s, a_to_s=m.a_to_s, w_to_s=m.w_to_s,
        s_to_r=tuple(tuple([0] * spaces.d_s(i)) for i in range(n)),
        a_to_r=tuple([0] * n),
        w_to_r=tuple((0,) for _ in range(n)),
    )


class TestValueACR:
    def test_level_zero_is_reward_parents(self):
        g = NetworkGraph.chain(3)
        sp = AgentSpaces.uniform(3, 2, 2, 2)
        m = _full_masks(g, sp)
        acr = value_acr(m, g, sp, 1, 0)
        assert acr.components == ((1, 0), (1, 1))

    def test_full_masks_give_full_neighborhood(self):
        g = NetworkGraph.ring(5)
        sp = AgentSpaces.uniform(5, 1, 2, 2)
        m = _full_masks(g, sp)
        for kappa in (1, 2):
            acr = value_acr(m, g, sp, 0, kappa)
            assert set(acr.components) == set(
                neighborhood_components(g, sp, 0, kappa)
            )

    def test_empty_reward_masks_give_empty_acr(self):
        g = NetworkGraph.ring(4)
        sp = AgentSpaces.uniform(4, 2, 2, 2)
        m = _empty_reward_masks(g, sp)
        assert value_acr(m, g, sp, 0, 3).components == ()

    def test_monotone_in_kappa(self):
        g = NetworkGraph.ring(6)
        sp = AgentSpaces.uniform(6, 1, 2, 2)
        m = _full_masks(g, sp)
        prev = set()
        for kappa in range(4):
            cur = set(value_acr(m, g, sp, 2, kappa).components)
            assert prev <= cur
            prev = cur

    def test_negative_kappa_rejected(self):
        g = NetworkGraph.chain(2)
        sp = AgentSpaces.uniform(2, 1, 2, 2)
        with pytest.raises(ValueError):
            value_acr(_full_masks(g, sp), g, sp, 0, -1)


class TestPolicyACR:
    def test_finite_subset_of_fixed_point(self):
        g = NetworkGraph.ring(6)
        sp = AgentSpaces.uniform(6, 2, 2, 2)
        m = _full_masks(g, sp)
        fixed = policy_acr_fixed_point(m, g, sp)
        for kappa in (1, 2, 3):
            finite = policy_acr_finite(m, g, sp, kappa)
            for i in range(6):
                assert set(finite[i].own) <= set(fixed[i].own)
                assert set(finite[i].components) <= set(fixed[i].components)

    def test_finite_reaches_fixed_point(self):
        g = NetworkGraph.ring(6)
        sp = AgentSpaces.uniform(6, 2, 2, 2)
        m = _full_masks(g, sp)
        fixed = policy_acr_fixed_point(m, g, sp)
        finite = policy_acr_finite(m, g, sp, g.diameter() + 2)
        for i in range(6):
            assert finite[i].own == fixed[i].own
            assert finite[i].components == fixed[i].components

    def test_empty_rewards_fixed_point_is_empty(self):
        g = NetworkGraph.chain(3)
        sp = AgentSpaces.uniform(3, 1, 2, 2)
        m = _empty_reward_masks(g, sp)
        for p in policy_acr_fixed_point(m, g, sp):
            assert p.own == () and p.components == ()

    def test_finite_kappa_zero_rejected(self):
        g = NetworkGraph.chain(2)
        sp = AgentSpaces.uniform(2, 1, 2, 2)
        with pytest.raises(ValueError):
            policy_acr_finite(_full_masks(g, sp), g, sp, 0)


class TestDomainACR:
    def test_direct_reward_link_included(self):
        g = NetworkGraph.chain(2)
        sp = AgentSpaces.uniform(2, 1, 2, 2)
        m = _full_masks(g, sp)
        v = value_acr(m, g, sp, 0, 0)
        d = domain_acr(m, g, sp, v, 0)
        assert (0, 0) in d.components

    def test_state_acr_omega_parents_included(self):
        g = NetworkGraph.chain(2)
        sp = AgentSpaces.uniform(2, 1, 2, 2)
        m = _full_masks(g, sp)
        v = value_acr(m, g, sp, 0, 1)  # includes neighbor components
        d = domain_acr(m, g, sp, v, 0)
        assert (1, 0) in d.components

    def test_no_links_empty(self):
        g = NetworkGraph.chain(2)
        sp = AgentSpaces.uniform(2, 1, 2, 2)
        m = _empty_reward_masks(g, sp)
        v = value_acr(m, g, sp, 0, 2)
        assert domain_acr(m, g, sp, v, 0).components == ()


class TestPlaceholderOps:
    FULL = ((0, 0), (0, 1), (1, 0))

    def test_fill_and_project_roundtrip(self):
        acr = ((0, 1), (1, 0))
        filled = placeholder_fill(self.FULL, acr, (3, 7))
        assert filled == (0, 3, 7)
        assert project(self.FULL, acr, filled) == (3, 7)

    def test_fill_length_mismatch(self):
        with pytest.raises(ValueError):
            placeholder_fill(self.FULL, ((0, 1),), (1, 2))

    def test_fill_unknown_component(self):
        with pytest.raises(ValueError):
            placeholder_fill(self.FULL, ((5, 5),), (1,))

    def test_project_unknown_component(self):
        with pytest.raises(ValueError):
            project(self.FULL, ((5, 5),), (0, 0, 0))

    def test_acr_state_key(self):
        state = ((4, 5), (6,))
        assert acr_state_key(state, ((1, 0), (0, 1))) == (6, 5)
