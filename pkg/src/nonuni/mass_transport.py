"""Exact mass transport checks.

A rule maps a vertex ``x`` to the masses it sends, ``{y: f(x, y)}``.
For a diagonally invariant rule on a transitive graph the mass received
at ``x`` equals the mass sent once every incoming amount is reweighted by
``w(y) / w(x)``; without the reweighting the two sides agree only when the
graph is unimodular.  Everything here is exact rational arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping, NamedTuple

import networkx as nx

from .graph_core import GraphPatch, PatchError, interior_ball, weight_of
from .percolation import CLOSED, PercOutcome

ZERO = Fraction(0)
ONE = Fraction(1)


class BallNotInterior(ValueError):
    """The ball the check needs reaches the patch boundary."""


SendFn = Callable[[GraphPatch, int, "PercOutcome | None"], Mapping[int, Fraction]]


@dataclass(frozen=True)
class MassRule:
    """A mass function ``f(x, y)``, given by what each ``x`` sends out.

    ``range`` bounds ``dist(x, y)`` over the support; ``None`` marks a rule
    whose reach depends on the configuration.
    """
    name: str
    range: int | None
    send: SendFn
    needs_configuration: bool = False

    def evaluate(self, patch: GraphPatch, x: int, y: int, outcome: PercOutcome | None = None) -> Fraction:
        return Fraction(self.send(patch, x, outcome).get(y, ZERO))


def _down(patch: GraphPatch, x: int) -> list[int]:
    lx = patch.level[x]
    return [u for u in patch.adjacency[x] if patch.level[u] == lx + 1]


def _unit_to_children(patch, x, outcome=None):
    return {u: ONE for u in _down(patch, x)}


def _unit_to_neighbors(patch, x, outcome=None):
    return {u: ONE for u in patch.adjacency[x]}


def _unit_to_grandchildren(patch, x, outcome=None):
    # endpoints of two-step descending paths, each counted once
    return {g: ONE for c in _down(patch, x) for g in _down(patch, c)}


def _zero(patch, x, outcome=None):
    return {}


def _component_share(patch, x, outcome=None):
    if outcome is None:
        raise ValueError("component_share needs a percolation outcome")
    lab = outcome.labels[x]
    if lab == CLOSED:
        return {}
    members = outcome.cluster(int(lab))
    share = Fraction(1, len(members))
    return {int(y): share for y in members}


RULES: dict[str, MassRule] = {
    "unit_to_children": MassRule("unit_to_children", 1, _unit_to_children),
    "unit_to_neighbors": MassRule("unit_to_neighbors", 1, _unit_to_neighbors),
    "unit_to_grandchildren": MassRule("unit_to_grandchildren", 2, _unit_to_grandchildren),
    "zero": MassRule("zero", 0, _zero),
    "component_share": MassRule("component_share", None, _component_share, needs_configuration=True),
}

BOUNDED_RULES = tuple(name for name, r in RULES.items() if r.range is not None)


def get_rule(name: str) -> MassRule:
    try:
        return RULES[name]
    except KeyError:
        raise ValueError(f"unknown rule {name!r}; choose from {sorted(RULES)}") from None


class MTPResult(NamedTuple):
    sent: Fraction
    received: Fraction
    equal: bool


class WeightedMTPResult(NamedTuple):
    sent: Fraction
    weighted_received: Fraction
    equal: bool


def _ball(patch: GraphPatch, rule: MassRule, x: int) -> frozenset[int]:
    if rule.range is None:
        raise ValueError(f"rule {rule.name!r} has no bounded range; check conservation instead")
    ball = interior_ball(patch, x, rule.range)
    if not ball.all_interior:
        raise BallNotInterior(f"B({x}, {rule.range}) reaches the patch boundary")
    return ball.vertices


def check_eligible(patch: GraphPatch, rule: MassRule, x: int) -> bool:
    """Whether the identity checks can be run at ``x``."""
    try:
        _ball(patch, rule, x)
    except BallNotInterior:
        return False
    return True


def _flows(patch, rule, x, outcome):
    ball = _ball(patch, rule, x)
    sent = sum(rule.send(patch, x, outcome).values(), ZERO)
    incoming = [(y, rule.send(patch, y, outcome).get(x, ZERO)) for y in ball]
    return sent, [(y, m) for y, m in incoming if m]


def mtp_unimodular_check(patch: GraphPatch, rule: MassRule, x: int,
                         outcome: PercOutcome | None = None) -> MTPResult:
    sent, incoming = _flows(patch, rule, x, outcome)
    received = sum((m for _, m in incoming), ZERO)
    return MTPResult(sent, received, sent == received)


def mtp_weighted_check(patch: GraphPatch, rule: MassRule, x: int,
                       outcome: PercOutcome | None = None) -> WeightedMTPResult:
    sent, incoming = _flows(patch, rule, x, outcome)
    wx = weight_of(patch, x)
    received = sum((m * weight_of(patch, y) for y, m in incoming), ZERO) / wx
    return WeightedMTPResult(sent, received, sent == received)


def component_share_conservation(patch: GraphPatch, outcome: PercOutcome) -> bool:
    """Within every cluster, total mass sent equals total mass received."""
    rule = RULES["component_share"]
    sent: dict[int, Fraction] = {}
    received: dict[int, Fraction] = {}
    for x in range(patch.n_vertices):
        lab = int(outcome.labels[x])
        if lab == CLOSED:
            continue
        out = rule.send(patch, x, outcome)
        sent[lab] = sent.get(lab, ZERO) + sum(out.values(), ZERO)
        for y, m in out.items():
            ly = int(outcome.labels[y])
            received[ly] = received.get(ly, ZERO) + m
    return sent == received and all(v == len(outcome.cluster(k)) for k, v in sent.items())


# --------------------------------------------------------------------------
# forests

def _as_graph(tree: GraphPatch) -> nx.Graph:
    g = nx.Graph()
    g.add_nodes_from(range(tree.n_vertices))
    g.add_edges_from(tree.edges.tolist())
    return g


def avg_degree_finite_tree(tree: GraphPatch) -> Fraction:
    if tree.n_vertices == 0:
        raise PatchError("empty graph")
    if not nx.is_tree(_as_graph(tree)):
        raise PatchError("input is not a tree")
    v = tree.n_vertices
    return Fraction(2 * (v - 1), v)


class DegreeBound(NamedTuple):
    lhs: Fraction
    rhs: Fraction
    holds: bool


def forest_degree_bound_check(forest: GraphPatch, mu, weights: Mapping[int, Fraction] | None = None) -> DegreeBound:
    """Compare ``sum w(x) deg(x)`` with ``2 mu sum w(x)`` on a finite forest.

    Weights default to the level weights of the patch.  Every component
    must be a tree whose weights spread by at most a factor ``mu``.
    """
    mu = Fraction(mu)
    w = {v: Fraction(weights[v]) if weights is not None else weight_of(forest, v)
         for v in range(forest.n_vertices)}
    g = _as_graph(forest)
    for comp in nx.connected_components(g):
        sub = g.subgraph(comp)
        if sub.number_of_edges() != len(comp) - 1:
            raise PatchError("forest component contains a cycle")
        ws = [w[v] for v in comp]
        if max(ws) > mu * min(ws):
            raise PatchError(f"component weight spread {max(ws) / min(ws)} exceeds mu={mu}")
    lhs = sum((w[v] * forest.degree(v) for v in g), ZERO)
    rhs = 2 * mu * sum(w.values(), ZERO)
    return DegreeBound(lhs, rhs, lhs <= rhs)
