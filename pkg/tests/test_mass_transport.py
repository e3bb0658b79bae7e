from fractions import Fraction

import networkx as nx
import numpy as np
import pytest

from nonuni.generators import gen_diestel_leader, gen_grandmother, gen_regular_tree
from nonuni.graph_core import GraphPatch, PatchError
from nonuni.mass_transport import (BOUNDED_RULES, RULES, BallNotInterior, avg_degree_finite_tree, check_eligible,
                                   component_share_conservation, forest_degree_bound_check, get_rule,
                                   mtp_unimodular_check, mtp_weighted_check)
from nonuni.percolation import PercConfig, percolate


def test_grandmother_counterexample(gm2):
    r = mtp_unimodular_check(gm2, get_rule("unit_to_children"), gm2.root)
    assert (r.sent, r.received, r.equal) == (2, 1, False)
    w = mtp_weighted_check(gm2, get_rule("unit_to_children"), gm2.root)
    assert (w.sent, w.weighted_received, w.equal) == (2, 2, True)


def test_results_are_exact(gm2):
    r = mtp_weighted_check(gm2, get_rule("unit_to_grandchildren"), gm2.root)
    assert isinstance(r.sent, Fraction) and isinstance(r.weighted_received, Fraction)


@pytest.mark.parametrize("name", sorted(BOUNDED_RULES))
def test_weighted_identity_on_dl(name):
    p = gen_diestel_leader(3, 2, 5)
    rule = get_rule(name)
    checked = 0
    for v in range(p.n_vertices):
        if check_eligible(p, rule, v):
            assert mtp_weighted_check(p, rule, v).equal
            checked += 1
    assert checked > 0


def test_unimodular_tree_checks_coincide():
    p = gen_regular_tree(3, 4)
    rule = get_rule("unit_to_children")
    r = mtp_unimodular_check(p, rule, p.root)
    w = mtp_weighted_check(p, rule, p.root)
    assert r == tuple(w)


def test_boundary_ball_rejected(gm2_small):
    boundary = next(v for v in range(gm2_small.n_vertices) if not gm2_small.interior[v])
    with pytest.raises(BallNotInterior):
        mtp_weighted_check(gm2_small, get_rule("unit_to_children"), boundary)
    with pytest.raises(ValueError, match="bounded range"):
        mtp_weighted_check(gm2_small, get_rule("component_share"), gm2_small.root)
    with pytest.raises(ValueError, match="unknown rule"):
        get_rule("no_such_rule")


def test_component_share_conservation(gm2_small):
    for t in range(5):
        out = percolate(gm2_small, PercConfig(0.55, seed=11, trial_index=t))
        assert component_share_conservation(gm2_small, out)
    assert RULES["component_share"].range is None


def _tree_patch(edges, n, levels=None, ratio=2):
    adj = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    levels = levels if levels is not None else [0] * n
    jumps = {abs(levels[a] - levels[b]) for a, b in edges} or {0}
    return GraphPatch(tuple(tuple(sorted(a)) for a in adj), 0, tuple(levels), Fraction(ratio),
                      tuple([False] * n), "test", {}, None, frozenset(jumps))


def test_avg_degree_tree():
    g = nx.path_graph(5)
    assert avg_degree_finite_tree(_tree_patch(list(g.edges), 5)) == Fraction(8, 5)
    with pytest.raises(PatchError):
        avg_degree_finite_tree(_tree_patch([(0, 1), (1, 2), (2, 0)], 3))


def test_forest_bound_and_rejections():
    edges = [(0, 1), (1, 2)]
    res = forest_degree_bound_check(_tree_patch(edges, 3, levels=[0, 1, 1]), mu=2)
    assert res.holds and res.lhs <= res.rhs
    with pytest.raises(PatchError, match="spread"):
        forest_degree_bound_check(_tree_patch(edges, 3, levels=[0, 1, 2]), mu=2)
    with pytest.raises(PatchError, match="cycle"):
        forest_degree_bound_check(_tree_patch([(0, 1), (1, 2), (0, 2)], 3), mu=2)
