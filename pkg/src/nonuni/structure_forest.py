"""Forest built from the encounter points of one cluster.

Pipeline, all inside a single percolation cluster and a single class of
the 1-partition:

1. ``build_gamma_w``: graph on the encounter points W, two points joined
   when some open path between them meets no other point of W.
2. ``build_m_digraph``: every v sends one arc into each component of
   Gamma_W minus v, aimed at a vertex of that component closest to v in
   the open graph (uniform among ties).
3. ``break_cycles``: the undirected support has edge-disjoint cycles;
   one uniformly chosen edge per cycle is removed, leaving a forest F.
4. ``build_phi``: an extra site percolation on V(F) picks leaders; bags
   are Voronoi cells of the leaders in F and leaders of adjacent bags are
   joined, which gives the leader forest Phi.
5. ``exhaustion_restrict``: keep a Phi edge when its ends share an open
   component inside one box of a box partition of the level line.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import networkx as nx
import numpy as np

from . import rng as rngmod
from .graph_core import GraphPatch, InvariantViolation
from .partitions import BoxPartition, one_partition
from .percolation import PercOutcome, encounter_points, union_find_labels

Edge = tuple[int, int]


def _is_forest(g: nx.Graph) -> bool:
    return g.number_of_nodes() == 0 or nx.is_forest(g)


def _open_bfs(patch: GraphPatch, outcome: PercOutcome, source: int, stop: frozenset[int] = frozenset()):
    """Open-graph distances from ``source``; vertices in ``stop`` are reached but not expanded."""
    dist = {source: 0}
    queue = deque([source])
    while queue:
        v = queue.popleft()
        if v in stop and v != source:
            continue
        for u in outcome.open_neighbours(patch, v):
            if u not in dist:
                dist[u] = dist[v] + 1
                queue.append(u)
    return dist


@dataclass
class EncounterGraph:
    W: list[int]
    edges: list[Edge]
    distances: dict[int, dict[int, int]] = field(repr=False)

    def graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(self.W)
        g.add_edges_from(self.edges)
        return g


def build_gamma_w(patch: GraphPatch, outcome: PercOutcome, class_levels: Iterable[int],
                  encounter_list: Sequence[int]) -> EncounterGraph:
    labels = {int(outcome.labels[v]) for v in encounter_list}
    if len(labels) > 1:
        raise ValueError("encounter points come from different clusters")
    levels = set(class_levels)
    W = sorted(int(v) for v in encounter_list if patch.level[v] in levels)
    Wset = frozenset(W)
    edges = set()
    distances = {}
    for a in W:
        full = _open_bfs(patch, outcome, a)
        distances[a] = {b: full[b] for b in W}
        for b in _open_bfs(patch, outcome, a, stop=Wset):
            if b in Wset and b != a:
                edges.add((min(a, b), max(a, b)))
    return EncounterGraph(W, sorted(edges), distances)


def adjacent_components(gamma: EncounterGraph, v: int) -> list[list[int]]:
    """Components of Gamma_W minus v that contain a neighbour of v, in canonical order."""
    g = gamma.graph()
    nbrs = set(g[v])
    h = g.subgraph([u for u in gamma.W if u != v])
    comps = [sorted(c) for c in nx.connected_components(h) if nbrs & c]
    return sorted(comps)


def build_m_digraph(gamma: EncounterGraph, rng: np.random.Generator) -> list[Edge]:
    arcs = []
    for v in gamma.W:
        d = gamma.distances[v]
        for comp in adjacent_components(gamma, v):
            best = min(d[u] for u in comp)
            ties = [u for u in comp if d[u] == best]
            arcs.append((v, ties[int(rng.integers(len(ties)))]))
    return arcs


def support(arcs: Iterable[Edge]) -> nx.Graph:
    """Undirected simple graph under the arcs; antiparallel arcs become one edge."""
    g = nx.Graph()
    for a, b in arcs:
        g.add_edge(a, b)
    return g


@dataclass
class MReport:
    blocks: int
    cycles: int
    max_block_outdegree: int
    degree_checked: int
    degree_failures: int


def check_m_invariants(gamma: EncounterGraph, arcs: list[Edge]) -> MReport:
    """Structural facts about the arc set; raises InvariantViolation when one fails.

    Every block of the support has at most one cycle, no vertex sends
    two arcs inside one block, and a point with at least three adjacent
    components of Gamma_W minus itself has support degree at least three.
    """
    g = support(arcs)
    arcset = set(arcs)
    n_blocks = cycles = max_out = 0
    for block in nx.biconnected_component_edges(g):
        block = [tuple(e) for e in block]
        n_blocks += 1
        verts = {x for e in block for x in e}
        if len(block) > len(verts):
            raise InvariantViolation(f"block on {sorted(verts)} holds more than one cycle")
        if len(block) == len(verts) and len(verts) > 2:
            cycles += 1
        out: dict[int, int] = {}
        for a, b in block:
            for s, t in ((a, b), (b, a)):
                if (s, t) in arcset:
                    out[s] = out.get(s, 0) + 1
        worst = max(out.values(), default=0)
        max_out = max(max_out, worst)
        if worst > 1:
            raise InvariantViolation(f"a vertex sends {worst} arcs inside block {sorted(verts)}")
    checked = failures = 0
    for v in gamma.W:
        if len(adjacent_components(gamma, v)) >= 3:
            checked += 1
            if v not in g or g.degree(v) < 3:
                failures += 1
    if failures:
        raise InvariantViolation(f"{failures} encounter points have support degree < 3")
    return MReport(n_blocks, cycles, max_out, checked, failures)


def break_cycles(arcs: Iterable[Edge], rng: np.random.Generator, vertices: Iterable[int] = ()) -> tuple[nx.Graph, list[Edge]]:
    """Remove one uniformly chosen edge from every cycle of the support."""
    g = support(arcs)
    g.add_nodes_from(vertices)
    removed = []
    for block in sorted(sorted(tuple(sorted(e)) for e in b) for b in nx.biconnected_component_edges(g)):
        verts = {x for e in block for x in e}
        if len(block) > len(verts):
            raise InvariantViolation(f"block on {sorted(verts)} holds more than one cycle")
        if len(block) == len(verts) and len(verts) > 2:
            e = block[int(rng.integers(len(block)))]
            removed.append(e)
    g.remove_edges_from(removed)
    if not _is_forest(g):
        raise InvariantViolation("cycle deletion left a cycle")
    return g, removed


@dataclass
class LeaderForest:
    leaders: list[int]
    bag_of: dict[int, int]
    edges: list[Edge]

    @property
    def mean_leader_degree(self) -> float:
        if not self.leaders:
            return 0.0
        return 2 * len(self.edges) / len(self.leaders)


def build_phi(F: nx.Graph, density: float, rng: np.random.Generator,
              leaders: Iterable[int] | None = None) -> LeaderForest:
    """Leader forest of Voronoi bags.

    Leaders come from Bernoulli(density) site percolation on V(F),
    resampled per component until it has one, unless given explicitly.
    Ties in F-distance go to the leader with the higher random priority,
    which keeps every bag connected.
    """
    if not 0 < density <= 1:
        raise ValueError("density must lie in (0, 1]")
    if not _is_forest(F):
        raise InvariantViolation("F is not a forest")
    if leaders is None:
        chosen = []
        for comp in sorted(sorted(c) for c in nx.connected_components(F)):
            while True:
                open_ = rng.random(len(comp)) < density
                if open_.any():
                    break
            chosen.extend(v for v, o in zip(comp, open_) if o)
    else:
        chosen = sorted(set(leaders))
        for comp in nx.connected_components(F):
            if not comp & set(chosen):
                raise ValueError("every component of F needs a leader")
    order = [chosen[i] for i in rng.permutation(len(chosen))]
    bag_of = {v: v for v in order}
    queue = deque(order)
    while queue:
        v = queue.popleft()
        for u in sorted(F[v]):
            if u not in bag_of:
                bag_of[u] = bag_of[v]
                queue.append(u)
    phi = {(min(bag_of[a], bag_of[b]), max(bag_of[a], bag_of[b]))
           for a, b in F.edges if bag_of[a] != bag_of[b]}
    result = LeaderForest(sorted(chosen), dict(sorted(bag_of.items())), sorted(phi))
    g = nx.Graph(result.edges)
    if g.number_of_edges() and not _is_forest(g):
        raise InvariantViolation("leader graph has a cycle")
    return result


def exhaustion_restrict(phi_edges: Iterable[Edge], patch: GraphPatch, outcome: PercOutcome,
                        box: BoxPartition) -> dict[tuple[int, ...], list[Edge]]:
    """Phi edges whose ends lie in one open component of a single box of levels."""
    if box.n != 1:
        raise ValueError("levels form a line; use a one-dimensional box partition")
    cls = [box.class_of((lv,)) for lv in patch.level]
    e = patch.edges
    keep = outcome.open_edges & np.array([cls[a] == cls[b] for a, b in e.tolist()], dtype=bool)
    comp = union_find_labels(patch.n_vertices, e[keep])
    out: dict[tuple[int, ...], list[Edge]] = {}
    for a, b in phi_edges:
        if cls[a] == cls[b] and comp[a] == comp[b]:
            out.setdefault(cls[a], []).append((a, b))
    return dict(sorted(out.items()))


# --------------------------------------------------------------------------
# whole pipeline

@dataclass
class PipelineResult:
    cluster_label: int
    class_index: int
    class_levels: list[int]
    threshold: int
    encounter_points: list[int]
    gamma: EncounterGraph
    m_arcs: list[Edge]
    m_report: MReport
    forest_edges: list[Edge]
    removed_edges: list[Edge]
    phi: LeaderForest
    touches_boundary: bool

    def to_dict(self) -> dict:
        return {
            "cluster_label": self.cluster_label,
            "class_index": self.class_index,
            "class_levels": self.class_levels,
            "threshold": self.threshold,
            "encounter_points": self.encounter_points,
            "W": self.gamma.W,
            "gamma_edges": [list(e) for e in self.gamma.edges],
            "m_arcs": [list(e) for e in self.m_arcs],
            "m_blocks": self.m_report.blocks,
            "m_cycles": self.m_report.cycles,
            "forest_edges": [list(e) for e in self.forest_edges],
            "removed_edges": [list(e) for e in self.removed_edges],
            "leaders": self.phi.leaders,
            "phi_edges": [list(e) for e in self.phi.edges],
            "mean_leader_degree": self.phi.mean_leader_degree,
            "touches_boundary": self.touches_boundary,
        }


def largest_cluster(outcome: PercOutcome) -> int:
    labels, counts = np.unique(outcome.labels[outcome.labels >= 0], return_counts=True)
    return int(labels[np.argmax(counts)])


def forest_pipeline(patch: GraphPatch, outcome: PercOutcome, U: float, class_index: int,
                    threshold: int, density: float, seed: int,
                    cluster_label: int | None = None) -> PipelineResult:
    if cluster_label is None:
        cluster_label = largest_cluster(outcome)
    part = one_partition(patch, U)
    levels = part.classes().get(class_index, [])
    enc = encounter_points(patch, outcome, cluster_label, threshold)
    g = rngmod.generator(seed, rngmod.FOREST)
    gamma = build_gamma_w(patch, outcome, levels, enc)
    arcs = build_m_digraph(gamma, g)
    report = check_m_invariants(gamma, arcs)
    F, removed = break_cycles(arcs, g, gamma.W)
    phi = build_phi(F, density, g)
    members = outcome.cluster(cluster_label)
    return PipelineResult(
        cluster_label=cluster_label,
        class_index=class_index,
        class_levels=levels,
        threshold=threshold,
        encounter_points=enc,
        gamma=gamma,
        m_arcs=arcs,
        m_report=report,
        forest_edges=sorted(tuple(sorted(e)) for e in F.edges),
        removed_edges=removed,
        phi=phi,
        touches_boundary=not all(patch.interior[v] for v in members),
    )
