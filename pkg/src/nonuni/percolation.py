"""Bernoulli bond and site percolation on patches.

Openness of edge ``e`` in trial ``t`` is ``uniform(key(seed, t), e) < p``:
the same uniforms serve every ``p``, which gives the monotone coupling,
and a single edge can be queried lazily during cluster exploration.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from . import rng
from .generators import GeneratorSpec, gen_diestel_leader, gen_grandmother, gen_regular_tree
from .graph_core import GraphPatch
from .parallel import blocks, map_ordered

CLOSED = -1


@dataclass(frozen=True)
class PercConfig:
    p: float
    mode: str = "bond"
    seed: int = 0
    trial_index: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p={self.p} outside [0, 1]")
        if self.mode not in ("bond", "site"):
            raise ValueError(f"mode must be 'bond' or 'site', not {self.mode!r}")


@dataclass(eq=False)
class PercOutcome:
    """Open edges (and sites) of one configuration plus cluster labels.

    ``labels[v]`` is the smallest vertex id in v's cluster, or ``CLOSED``
    for a closed site.  In site mode an edge counts as open iff both
    endpoints are open.
    """
    mode: str
    open_edges: np.ndarray
    labels: np.ndarray
    open_sites: np.ndarray | None = None

    @property
    def n_vertices(self) -> int:
        return len(self.labels)

    def cluster(self, label: int) -> np.ndarray:
        members = np.flatnonzero(self.labels == label)
        if len(members) == 0:
            raise KeyError(f"no cluster labelled {label}")
        return members

    def open_neighbours(self, patch: GraphPatch, v: int) -> list[int]:
        return [u for u, e in zip(patch.adjacency[v], patch.incident_edges[v]) if self.open_edges[e]]


def union_find_labels(n: int, pairs: np.ndarray) -> np.ndarray:
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in pairs.tolist():
        ra, rb = find(a), find(b)
        if ra != rb:
            # smaller id becomes the root, so roots are the canonical labels
            if ra < rb:
                parent[rb] = ra
            else:
                parent[ra] = rb
    return np.array([find(v) for v in range(n)], dtype=np.int64)


def outcome_from_open_edges(patch: GraphPatch, open_edges, open_sites=None) -> PercOutcome:
    open_edges = np.asarray(open_edges, dtype=bool)
    if len(open_edges) != patch.n_edges:
        raise ValueError("open-edge mask does not match the patch")
    mode = "bond"
    if open_sites is not None:
        mode = "site"
        open_sites = np.asarray(open_sites, dtype=bool)
        e = patch.edges
        open_edges = open_edges & open_sites[e[:, 0]] & open_sites[e[:, 1]]
    labels = union_find_labels(patch.n_vertices, patch.edges[open_edges])
    if open_sites is not None:
        labels[~open_sites] = CLOSED
    return PercOutcome(mode, open_edges, labels, open_sites)


def percolate(patch: GraphPatch, cfg: PercConfig) -> PercOutcome:
    if cfg.mode == "bond":
        key = rng.stream_key(cfg.seed, cfg.trial_index, rng.BOND)
        return outcome_from_open_edges(patch, rng.uniforms(key, np.arange(patch.n_edges)) < cfg.p)
    key = rng.stream_key(cfg.seed, cfg.trial_index, rng.SITE)
    sites = rng.uniforms(key, np.arange(patch.n_vertices)) < cfg.p
    return outcome_from_open_edges(patch, np.ones(patch.n_edges, dtype=bool), sites)


def _check_outcome(patch: GraphPatch, outcome: PercOutcome) -> None:
    if outcome.n_vertices != patch.n_vertices or len(outcome.open_edges) != patch.n_edges:
        raise ValueError("outcome does not belong to this patch")


# --------------------------------------------------------------------------
# cluster statistics

@dataclass(frozen=True)
class ClusterStats:
    label: int
    size: int
    per_level_counts: dict[int, int]
    min_level: int
    max_level: int
    touches_boundary: bool


def cluster_stats(patch: GraphPatch, outcome: PercOutcome) -> list[ClusterStats]:
    _check_outcome(patch, outcome)
    labels = outcome.labels
    lv = patch.level_array
    boundary = ~np.asarray(patch.interior, dtype=bool)
    out = []
    order = np.argsort(labels, kind="stable")
    sorted_labels = labels[order]
    starts = np.flatnonzero(np.r_[True, sorted_labels[1:] != sorted_labels[:-1]])
    ends = np.r_[starts[1:], len(order)]
    for s, e in zip(starts, ends):
        lab = int(sorted_labels[s])
        if lab == CLOSED:
            continue
        members = order[s:e]
        levels, counts = np.unique(lv[members], return_counts=True)
        out.append(ClusterStats(
            label=lab,
            size=int(e - s),
            per_level_counts={int(a): int(b) for a, b in zip(levels, counts)},
            min_level=int(levels[0]),
            max_level=int(levels[-1]),
            touches_boundary=bool(boundary[members].any()),
        ))
    return out


class Verdict(str, Enum):
    HEAVY_LIKE = "heavy_like"
    LIGHT_LIKE = "light_like"
    INCONCLUSIVE = "inconclusive"


def heavy_proxy(stats: ClusterStats, window: tuple[int, int], threshold: int) -> Verdict:
    """Finite-window guess at heavy/light.

    Heavy-like: at least ``threshold`` vertices on every level of the
    window.  Light-like: the cluster never reaches the patch boundary.
    """
    lo, hi = window
    if hi < lo:
        raise ValueError("empty level window")
    if threshold < 1:
        raise ValueError("threshold must be >= 1")
    if all(stats.per_level_counts.get(lv, 0) >= threshold for lv in range(lo, hi + 1)):
        return Verdict.HEAVY_LIKE
    if not stats.touches_boundary:
        return Verdict.LIGHT_LIKE
    return Verdict.INCONCLUSIVE


# --------------------------------------------------------------------------
# encounter points

def separation_sizes(vertices: Sequence[int], nbrs) -> dict[int, list[int]]:
    """For each vertex v of a connected graph, component sizes of the graph minus v.

    ``nbrs(v)`` must return neighbours inside ``vertices``.  Iterative
    Tarjan lowpoint recursion.
    """
    n = len(vertices)
    if n == 0:
        return {}
    disc: dict[int, int] = {}
    low: dict[int, int] = {}
    sub: dict[int, int] = {}
    pieces: dict[int, list[int]] = {v: [] for v in vertices}
    root = vertices[0]
    disc[root] = low[root] = 0
    sub[root] = 1
    stack = [(root, -1, iter(nbrs(root)))]
    counter = 1
    while stack:
        v, parent, it = stack[-1]
        advanced = False
        for u in it:
            if u not in disc:
                disc[u] = low[u] = counter
                counter += 1
                sub[u] = 1
                stack.append((u, v, iter(nbrs(u))))
                advanced = True
                break
            if u != parent:
                low[v] = min(low[v], disc[u])
        if advanced:
            continue
        stack.pop()
        if parent != -1:
            sub[parent] += sub[v]
            low[parent] = min(low[parent], low[v])
            if low[v] >= disc[parent]:
                pieces[parent].append(sub[v])
    if len(disc) != n:
        raise ValueError("graph is not connected")
    for v in vertices:
        rest = n - 1 - sum(pieces[v])
        if rest > 0:
            pieces[v].append(rest)
    return pieces


def encounter_points(patch: GraphPatch, outcome: PercOutcome, cluster_label: int,
                     big_threshold: int) -> list[int]:
    """Cluster vertices whose removal leaves >= 3 pieces of size >= big_threshold."""
    _check_outcome(patch, outcome)
    members = [int(v) for v in outcome.cluster(cluster_label)]
    pieces = separation_sizes(members, lambda v: outcome.open_neighbours(patch, v))
    return sorted(v for v in members if sum(s >= big_threshold for s in pieces[v]) >= 3)


# --------------------------------------------------------------------------
# good blocks

@dataclass(frozen=True)
class Block:
    vertices: frozenset[int]
    x_prime: int
    bottom_band: tuple[int, int]
    side_boundary: frozenset[int]


def _long_edge(patch: GraphPatch, x: int) -> tuple[int, int]:
    jump = max(patch.level[u] - patch.level[x] for u in patch.adjacency[x])
    lowest = [u for u in patch.adjacency[x] if patch.level[u] - patch.level[x] == jump]
    if patch.labels is not None:
        return min(lowest, key=lambda u: patch.labels[u]), jump
    return min(lowest), jump


def block(patch: GraphPatch, x: int, i: int, r: int) -> Block:
    """The block hanging below ``x``: ball of radius r, levels of G'(x), i level bands."""
    if i < 1 or r < 1:
        raise ValueError("need i >= 1 and r >= 1")
    if not patch.interior[x]:
        raise ValueError("block not interior: x is a boundary vertex")
    xp, jump = _long_edge(patch, x)
    if jump <= 0:
        raise ValueError("x has no neighbour below it")
    top = patch.level[x]
    lo, hi = top + jump, top + i * jump            # G'(x) levels, exclusive bottom
    ball = patch.distances_from(x, limit=r)
    verts = {x} | {v for v in ball if lo <= patch.level[v] < hi}
    if not all(patch.interior[v] for v in verts):
        raise ValueError("block not interior to the patch")
    side = frozenset(
        v for v in verts - {x, xp}
        if any(patch.level[w] < hi and w not in verts for w in patch.adjacency[v])
    )
    return Block(frozenset(verts), xp, (top + (i - 1) * jump, hi), side)


def good_block_check(patch: GraphPatch, outcome: PercOutcome, x: int, i: int, r: int, k: int) -> bool:
    _check_outcome(patch, outcome)
    b = block(patch, x, i, r)
    comp = {x}
    stack = []
    if b.x_prime in b.vertices and outcome.open_edges[
            patch.incident_edges[x][patch.adjacency[x].index(b.x_prime)]]:
        comp.add(b.x_prime)
        stack.append(b.x_prime)
    while stack:
        v = stack.pop()
        for u in outcome.open_neighbours(patch, v):
            if u != x and u in b.vertices and u not in comp:
                comp.add(u)
                stack.append(u)
    lo, hi = b.bottom_band
    bottom = sum(1 for v in comp if lo <= patch.level[v] < hi)
    return bottom >= k and not (comp & b.side_boundary)


# --------------------------------------------------------------------------
# survival and sweeps

def wilson_interval(successes: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    phat = successes / n
    denom = 1 + z * z / n
    centre = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


SURVIVAL_FAMILIES = ("regular_tree", "grandmother", "diestel_leader")


@lru_cache(maxsize=8)
def _survival_setup(family: str, params: tuple, depth: int):
    p = dict(params)
    if family == "regular_tree":
        patch = gen_regular_tree(p.get("k_plus_1", 3), depth)
        dist = patch.distances_from(patch.root)
        progress = [dist[v] for v in range(patch.n_vertices)]
    elif family == "grandmother":
        patch = gen_grandmother(p.get("k", 2), up=0, down=depth)
        progress = list(patch.level)
    elif family == "diestel_leader":
        patch = gen_diestel_leader(p.get("k", 2), p.get("n", 2), depth)
        dist = patch.distances_from(patch.root)
        progress = [dist[v] for v in range(patch.n_vertices)]
    else:
        raise ValueError(f"survival is defined for {SURVIVAL_FAMILIES}, not {family!r}")
    return patch, progress


def survival_patch(gen: GeneratorSpec, depth: int) -> tuple[GraphPatch, list[int]]:
    """Patch used for survival runs plus each vertex's progress toward ``depth``.

    Trees and DL graphs: graph distance from the root in a ball of radius
    ``depth``.  Grandmother graphs: level below the root in the subtree of
    the root, so only downward growth is counted.
    """
    return _survival_setup(gen.family, tuple(sorted(gen.params.items())), depth)


def explore_root_cluster(patch: GraphPatch, progress: Sequence[int], depth: int, p: float,
                         seed: int, trial: int) -> tuple[bool, int]:
    """Deepest-first exploration of the root's open cluster.

    Stops as soon as a vertex with ``progress >= depth`` is reached.  Uses
    exactly the edge uniforms of :func:`percolate`.
    """
    key = rng.stream_key(seed, trial, rng.BOND)
    root = patch.root
    seen = {root}
    heap = [(-progress[root], root)]
    adj, inc = patch.adjacency, patch.incident_edges
    while heap:
        _, v = heapq.heappop(heap)
        if progress[v] >= depth:
            return True, len(seen)
        for u, e in zip(adj[v], inc[v]):
            if u not in seen and rng.uniform(key, e) < p:
                seen.add(u)
                heapq.heappush(heap, (-progress[u], u))
    return False, len(seen)


def _survival_chunk(task) -> int:
    family, params, depth, p, seed, start, stop = task
    patch, progress = _survival_setup(family, params, depth)
    return sum(explore_root_cluster(patch, progress, depth, p, seed, t)[0] for t in range(start, stop))


@dataclass(frozen=True)
class SurvivalEstimate:
    p: float
    trials: int
    survivals: int
    rate: float
    ci_low: float
    ci_high: float


def survival_estimate(gen: GeneratorSpec, p: float, depth: int, trials: int, seed: int,
                      workers: int = 1) -> SurvivalEstimate:
    if trials < 1:
        raise ValueError("need at least one trial")
    params = tuple(sorted(gen.params.items()))
    _survival_setup(gen.family, params, depth)
    tasks = [(gen.family, params, depth, p, seed, a, b) for a, b in blocks(trials)]
    hits = sum(map_ordered(_survival_chunk, tasks, workers))
    lo, hi = wilson_interval(hits, trials)
    return SurvivalEstimate(p, trials, hits, hits / trials, lo, hi)


@dataclass(frozen=True)
class SweepRow:
    p: float
    trials: int
    survivals: int
    survival_rate: float
    ci_low: float
    ci_high: float
    mean_cluster_size: float
    cluster_count: float


SWEEP_COLUMNS = ("p", "trials", "survivals", "survival_rate", "ci_low", "ci_high",
                 "mean_cluster_size", "cluster_count")


def sweep(gen: GeneratorSpec, p_grid: Iterable[float], depth: int, trials: int, seed: int,
          stats_trials: int = 0, workers: int = 1) -> list[SweepRow]:
    """Survival versus p, with the same trial streams at every p.

    ``mean_cluster_size`` (size of the root's cluster) and
    ``cluster_count`` come from full percolation of the first
    ``stats_trials`` trials; they are NaN when ``stats_trials == 0``.
    """
    rows = []
    patch, _ = survival_patch(gen, depth)
    for p in p_grid:
        est = survival_estimate(gen, p, depth, trials, seed, workers)
        sizes, counts = [], []
        for t in range(min(stats_trials, trials)):
            out = percolate(patch, PercConfig(p, "bond", seed, t))
            sizes.append(int(np.sum(out.labels == out.labels[patch.root])))
            counts.append(len(np.unique(out.labels)))
        rows.append(SweepRow(
            p=p, trials=trials, survivals=est.survivals, survival_rate=est.rate,
            ci_low=est.ci_low, ci_high=est.ci_high,
            mean_cluster_size=float(np.mean(sizes)) if sizes else math.nan,
            cluster_count=float(np.mean(counts)) if counts else math.nan,
        ))
    return rows
