"""A spanning tree of M x K4 whose Bernoulli(p) clusters are all finite.

M is the grandmother graph over the 3-regular tree T, and the tree omega
only uses edges of T x K4 (box product, four sheets).  Tree vertices are
``(level, idx)`` below a fixed top vertex ``(0, 0)``, with children
``(level + 1, 2 idx)`` and ``(level + 1, 2 idx + 1)``; graph vertices add a
sheet ``s`` in Z/4.

The gap between levels z - 1 and z is open with probability q.  Closed
gaps cut T x K4 into components F x K4 with F a binary tree T_k.  In each
component a closed DFS tour of F is unrolled onto sheets j, j+1, j+2 (the
i-th visit of x uses sheet j + i - 1) to give a path Q, a copy R of F
sits on sheet j + 3, the end of Q is joined to the top of R, and the
root of every component below hangs from the R-copy of its parent.
Sheets still missing at some x are then attached to a random member.

Going down from a component root a percolation cluster must cross all of
Q to go any further, which is what makes every cluster finite.  The
random tree Upsilon records the same growth without the sheets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from . import rng as rngmod
from .generators import gen_upsilon_n, leaves
from .graph_core import GraphPatch, InvariantViolation
from .percolation import PercConfig, percolate, wilson_interval

TreeVertex = tuple[int, int]
Vertex = tuple[int, int, int]


# --------------------------------------------------------------------------
# closed tours

@dataclass(frozen=True)
class ClosedTour:
    kdepth: int
    vertices: tuple[TreeVertex, ...]     # (depth, idx) in T_k, root (0, 0)

    @property
    def length(self) -> int:
        return len(self.vertices) - 1

    def visit_counts(self) -> dict[TreeVertex, int]:
        out: dict[TreeVertex, int] = {}
        for v in self.vertices:
            out[v] = out.get(v, 0) + 1
        return out


def dfs_closed_tour(kdepth: int, rng: np.random.Generator | None = None) -> ClosedTour:
    """Depth-first closed walk of T_k from the root.

    Children are taken left first, or in a uniformly random order at each
    vertex when ``rng`` is given.
    """
    if kdepth < 0:
        raise ValueError("kdepth must be >= 0")
    walk: list[TreeVertex] = [(0, 0)]
    stack: list[tuple[TreeVertex, list[TreeVertex]]] = []

    def kids(v):
        if v[0] == kdepth:
            return []
        ch = [(v[0] + 1, 2 * v[1]), (v[0] + 1, 2 * v[1] + 1)]
        if rng is not None and rng.random() < 0.5:
            ch.reverse()
        return ch

    stack.append(((0, 0), kids((0, 0))))
    while stack:
        v, todo = stack[-1]
        if todo:
            c = todo.pop(0)
            walk.append(c)
            stack.append((c, kids(c)))
        else:
            stack.pop()
            if stack:
                walk.append(stack[-1][0])
    return ClosedTour(kdepth, tuple(walk))


# --------------------------------------------------------------------------
# the random tree Upsilon

@dataclass
class UpsilonTree:
    q: float
    X: list[int]
    depth_budget: int | None = None

    @property
    def depths(self) -> list[int]:
        """Depth of the leaves after each block: sum of 2**X_i + X_i."""
        out, d = [], 0
        for x in self.X:
            d += 2 ** x + x
            out.append(d)
        return out


def sample_gaps(g: np.random.Generator, q: float, size: int) -> np.ndarray:
    """I.i.d. block depths with P(X = j) = q**j (1 - q)."""
    return g.geometric(1 - q, size=size) - 1


def build_upsilon(q: float, depth_budget: int, seed: int, X: Sequence[int] | None = None) -> UpsilonTree:
    """Sample blocks until the tree is deeper than ``depth_budget``.

    ``X`` replaces the random stream (the blocks are then taken as given
    and truncated at the budget in the same way).
    """
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    if depth_budget < 0:
        raise ValueError("depth budget must be >= 0")
    out: list[int] = []
    depth = 0
    if X is not None:
        for x in X:
            if depth > depth_budget:
                break
            if x < 0:
                raise ValueError("block depths are >= 0")
            out.append(int(x))
            depth += 2 ** x + x
        return UpsilonTree(q, out, depth_budget)
    g = rngmod.generator(seed, rngmod.UPSILON)
    while depth <= depth_budget:
        for x in sample_gaps(g, q, 64).tolist():
            out.append(x)
            depth += 2 ** x + x
            if depth > depth_budget:
                break
    return UpsilonTree(q, out, depth_budget)


@dataclass(frozen=True)
class GrowthRow:
    n: int
    X_n: int
    S_n: int
    L_n: int
    depth: int
    ratio: Fraction          # log2 S_n / L_n
    lag_ratio: Fraction      # log2 S_{n-1} / L_n


GROWTH_COLUMNS = ("n", "X_n", "S_n", "L_n", "depth", "ratio", "lag_ratio")


def growth_stats(ups: UpsilonTree) -> list[GrowthRow]:
    """Level sizes after each block.

    ``S_n = 2**(X_1 + ... + X_n)`` vertices sit at the bottom of block n;
    ``L_n = 2**X_1 + ... + 2**X_n`` is the depth up to the bounded
    factor that ignores the binary parts, and ``depth`` is the exact one.
    """
    if not ups.X:
        raise ValueError("need at least one complete block")
    rows = []
    sx = ln = depth = 0
    for n, x in enumerate(ups.X, start=1):
        prev = sx
        sx += x
        ln += 2 ** x
        depth += 2 ** x + x
        rows.append(GrowthRow(n, x, 2 ** sx, ln, depth, Fraction(sx, ln), Fraction(prev, ln)))
    return rows


def materialize_upsilon(X: Sequence[int], max_vertices: int = 2_000_000) -> GraphPatch:
    """The tree after the given blocks: each leaf gets a fresh Upsilon_{X_j}."""
    parent: list[int] = [-1]
    depth = [0]
    frontier = [0]
    for x in X:
        new_frontier = []
        for z in frontier:
            cur = z
            for _ in range(2 ** x):
                parent.append(cur)
                depth.append(depth[cur] + 1)
                cur = len(parent) - 1
            level = [cur]
            for _ in range(x):
                nxt = []
                for v in level:
                    for _ in range(2):
                        parent.append(v)
                        depth.append(depth[v] + 1)
                        nxt.append(len(parent) - 1)
                level = nxt
            new_frontier.extend(level)
            if len(parent) > max_vertices:
                raise ValueError(f"tree exceeds {max_vertices} vertices")
        frontier = new_frontier
    adj: list[list[int]] = [[] for _ in parent]
    for v, p in enumerate(parent):
        if p >= 0:
            adj[v].append(p)
            adj[p].append(v)
    return GraphPatch(
        adjacency=tuple(tuple(sorted(a)) for a in adj),
        root=0,
        level=tuple(depth),
        level_ratio=Fraction(1),
        interior=tuple(True for _ in parent),
        generator="upsilon",
        params={"X": list(X)},
        transitive_degree=None,
        allowed_jumps=frozenset({1}),
    )


def lag_ratio_samples(q: float, n: int, samples: int, seed: int) -> np.ndarray:
    """``log2 S_{n-1} / L_n`` for independent trees (only n blocks are drawn)."""
    g = rngmod.generator(seed, rngmod.UPSILON, n)
    X = sample_gaps(g, q, (samples, n)).astype(object)
    num = X[:, :-1].sum(axis=1)
    den = (2 ** X).sum(axis=1)
    return np.array([float(Fraction(int(a), int(b))) for a, b in zip(num, den)])


@dataclass(frozen=True)
class CrossingEstimate:
    n: int
    p: float
    trials: int
    crossings: int
    rate: float
    ci_high: float
    union_bound: float


def upsilon_crossing(n: int, p: float, trials: int, seed: int) -> CrossingEstimate:
    """How often the root of Upsilon_n is joined to a bottom leaf by open edges.

    Compared with the union bound ``2**n p**(2**n + n)`` over the 2**n
    root-to-leaf lines.
    """
    patch = gen_upsilon_n(n)
    bottom = np.array(leaves(patch))
    hits = 0
    for t in range(trials):
        out = percolate(patch, PercConfig(p, "bond", seed, t))
        hits += bool((out.labels[bottom] == out.labels[patch.root]).any())
    _, hi = wilson_interval(hits, trials)
    return CrossingEstimate(n, p, trials, hits, hits / trials, hi, 2 ** n * p ** (2 ** n + n))


# --------------------------------------------------------------------------
# omega

@dataclass(frozen=True)
class Row:
    top: int        # first level
    k: int          # components are T_k x K4

    @property
    def bottom(self) -> int:
        return self.top + self.k


def rows_from_gaps(levels: int, closed: Iterable[int]) -> list[Row]:
    """Level rows between closed gaps; gap z sits between levels z - 1 and z."""
    cuts = sorted({z for z in closed if 1 <= z <= levels - 1})
    starts = [0, *cuts]
    ends = [*cuts, levels]
    return [Row(a, b - a - 1) for a, b in zip(starts, ends)]


@dataclass
class Component:
    top: TreeVertex
    k: int
    j: int
    q_path: list[Vertex] = field(repr=False)

    @property
    def root(self) -> Vertex:
        return self.q_path[0]

    def tree_vertices(self) -> list[TreeVertex]:
        l0, i0 = self.top
        return [(l0 + d, i0 * 2 ** d + t) for d in range(self.k + 1) for t in range(2 ** d)]


@dataclass
class OmegaTree:
    levels: int
    q: float
    seed: int
    closed_gaps: list[int]
    rows: list[Row]
    width: int | None
    components: list[Component] = field(default_factory=list, repr=False)
    edges: list[tuple[Vertex, Vertex]] = field(default_factory=list, repr=False)

    @property
    def materialized(self) -> bool:
        return bool(self.components)

    @property
    def root(self) -> Vertex:
        return self.components[0].root

    def vertices(self) -> list[Vertex]:
        return [(l, i, s) for c in self.components for (l, i) in c.tree_vertices() for s in range(4)]

    def to_dict(self) -> dict:
        return {
            "levels": self.levels,
            "q": self.q,
            "seed": self.seed,
            "width": self.width,
            "closed_gaps": self.closed_gaps,
            "rows": [[r.top, r.k] for r in self.rows],
            "components": [{"top": list(c.top), "k": c.k, "j": c.j} for c in self.components],
            "edges": [[list(a), list(b)] for a, b in self.edges],
        }


DEFAULT_WIDTH = 4


def build_omega(window_levels: int, q: float, seed: int, width: int | None = DEFAULT_WIDTH,
                closed_gaps: Iterable[int] | None = None, materialize: bool = True) -> OmegaTree:
    """Assemble omega on a window of levels ``0 .. window_levels - 1``.

    The window's top and bottom act as closed gaps.  At most ``width``
    components are kept per row (the leftmost children of kept leaves;
    ``None`` keeps all), so the result is a union of whole components
    closed under taking parents.
    """
    if window_levels < 3:
        raise ValueError("window must span at least 3 levels")
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    if width is not None and width < 1:
        raise ValueError("width must be >= 1")
    g = rngmod.generator(seed, rngmod.OMEGA)
    gap_open = g.random(window_levels - 1) < q
    if closed_gaps is None:
        closed = [z for z, o in zip(range(1, window_levels), gap_open) if not o]
    else:
        closed = sorted(set(int(z) for z in closed_gaps))
        if any(not 1 <= z < window_levels for z in closed):
            raise ValueError("closed gaps must lie in 1 .. window_levels - 1")
    rows = rows_from_gaps(window_levels, closed)
    omega = OmegaTree(window_levels, q, seed, closed, rows, width)
    if materialize:
        _materialize(omega, g)
    return omega


def _materialize(omega: OmegaTree, g: np.random.Generator) -> None:
    tours: dict[int, ClosedTour] = {}
    edges: list[tuple[Vertex, Vertex]] = []
    members: dict[TreeVertex, set[int]] = {}
    parent_comp: dict[TreeVertex, Component] = {}
    tops = [(0, 0)]
    for r, row in enumerate(omega.rows):
        if omega.width is not None:
            tops = tops[:omega.width]
        comps = []
        for top in tops:
            j = int(g.integers(4))
            tour = dfs_closed_tour(row.k, g)
            l0, i0 = top
            seen: dict[TreeVertex, int] = {}
            q_path: list[Vertex] = []
            for d, t in tour.vertices:
                x = (l0 + d, i0 * 2 ** d + t)
                c = seen.get(x, 0)
                seen[x] = c + 1
                q_path.append((x[0], x[1], (j + c) % 4))
            comp = Component(top, row.k, j, q_path)
            edges.extend(zip(q_path, q_path[1:]))
            r_sheet = (j + 3) % 4
            for x in comp.tree_vertices():
                members.setdefault(x, set())
                if x != top:
                    p = (x[0] - 1, x[1] // 2)
                    edges.append(((p[0], p[1], r_sheet), (x[0], x[1], r_sheet)))
                members[x].add(r_sheet)
            for v in q_path:
                members[(v[0], v[1])].add(v[2])
            edges.append((q_path[-1], (l0, i0, r_sheet)))
            if top in parent_comp:
                pc = parent_comp[top]
                pv = (l0 - 1, i0 // 2, (pc.j + 3) % 4)
                edges.append((pv, comp.root))
            comps.append(comp)
        omega.components.extend(comps)
        if r + 1 < len(omega.rows):
            nxt = []
            for comp in comps:
                l0, i0 = comp.top
                base = i0 * 2 ** comp.k
                for t in range(2 ** comp.k):
                    for c in (0, 1):
                        child = (l0 + comp.k + 1, 2 * (base + t) + c)
                        parent_comp[child] = comp
                        nxt.append(child)
            tops = nxt
    # attach missing sheets to a uniformly chosen member of each 4-tuple
    for x in sorted(members):
        have = sorted(members[x])
        anchor = have[int(g.integers(len(have)))]
        for s in range(4):
            if s not in members[x]:
                edges.append(((x[0], x[1], anchor), (x[0], x[1], s)))
    omega.edges = edges


# --------------------------------------------------------------------------
# verification

@dataclass
class SpanningReport:
    n_vertices: int
    n_edges: int
    connected: bool
    acyclic: bool
    gprime_only: bool
    sheets_ok: bool
    components_ok: bool
    top_root_waived: bool = True
    problems: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return (self.connected and self.acyclic and self.gprime_only and self.sheets_ok
                and self.components_ok and self.n_edges == self.n_vertices - 1)


def _in_gprime(a: Vertex, b: Vertex) -> bool:
    if (a[0], a[1]) == (b[0], b[1]):
        return a[2] != b[2]
    if a[0] > b[0]:
        a, b = b, a
    return b[0] == a[0] + 1 and b[1] // 2 == a[1]


def verify_spanning_tree(omega: OmegaTree) -> SpanningReport:
    if not omega.materialized:
        raise ValueError("omega was built without materialising its edges")
    verts = omega.vertices()
    index = {v: i for i, v in enumerate(verts)}
    problems = []
    parent = list(range(len(verts)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    acyclic = True
    gprime = True
    for a, b in omega.edges:
        if a not in index or b not in index:
            problems.append(f"edge {a}-{b} leaves the window")
            gprime = False
            continue
        if not _in_gprime(a, b):
            gprime = False
            problems.append(f"edge {a}-{b} is not an edge of T x K4")
        ra, rb = find(index[a]), find(index[b])
        if ra == rb:
            acyclic = False
        else:
            parent[ra] = rb
    connected = len({find(i) for i in range(len(verts))}) == 1

    sheets_ok = True
    comps_ok = True
    comp_of = {}
    for ci, c in enumerate(omega.components):
        for x in c.tree_vertices():
            comp_of[x] = ci
        if any(v[2] == (c.j + 3) % 4 for v in c.q_path):
            sheets_ok = False
            problems.append(f"Q of component at {c.top} uses sheet j+3")
    internal = [0] * len(omega.components)
    r_edges_ok = True
    for a, b in omega.edges:
        ca, cb = comp_of.get((a[0], a[1])), comp_of.get((b[0], b[1]))
        if ca is not None and ca == cb:
            internal[ca] += 1
            c = omega.components[ca]
            rs = (c.j + 3) % 4
            if (a[0], a[1]) != (b[0], b[1]) and (a[2] == rs) != (b[2] == rs):
                # a tree edge between two sheets must be the Q-to-R connector
                if {a, b} != {c.q_path[-1], (c.top[0], c.top[1], rs)}:
                    r_edges_ok = False
    if not r_edges_ok:
        sheets_ok = False
        problems.append("an R edge leaves sheet j+3")
    for ci, c in enumerate(omega.components):
        n = 4 * (2 ** (c.k + 1) - 1)
        if internal[ci] != n - 1:
            comps_ok = False
            problems.append(f"component at {c.top} carries {internal[ci]} edges, expected {n - 1}")
    return SpanningReport(len(verts), len(omega.edges), connected, acyclic, gprime,
                          sheets_ok, comps_ok, True, problems)


def omega_patch(omega: OmegaTree) -> tuple[GraphPatch, dict[Vertex, int]]:
    """omega as a patch (levels = tree levels), for explicit percolation."""
    verts = omega.vertices()
    index = {v: i for i, v in enumerate(verts)}
    adj: list[set[int]] = [set() for _ in verts]
    for a, b in omega.edges:
        adj[index[a]].add(index[b])
        adj[index[b]].add(index[a])
    patch = GraphPatch(
        adjacency=tuple(tuple(sorted(s)) for s in adj),
        root=index[omega.root],
        level=tuple(v[0] for v in verts),
        level_ratio=Fraction(1),
        interior=tuple(False for _ in verts),
        generator="omega",
        params={"levels": omega.levels, "q": omega.q, "seed": omega.seed},
        transitive_degree=None,
        allowed_jumps=frozenset({0, 1}),
    )
    return patch, index


# --------------------------------------------------------------------------
# percolation on omega

def _deepest_on_q(k: int, run: int) -> int:
    """Depth reached after ``run`` open tour edges: a DFS tour starts by
    walking straight down, so this is ``min(run, k)`` for every child order."""
    return min(run, k)


def _max_partial_run(g: np.random.Generator, n: int, p: float, full_len: int) -> int:
    """Largest initial run of open edges among n paths, given none has ``full_len`` open."""
    if p <= 0:
        return 0
    c = 1 - p ** full_len
    u = g.random()
    target = 1 - u ** (1 / n) * c
    if target <= 0:
        return full_len - 1
    m = math.ceil(math.log(target) / math.log(p)) - 1
    return min(max(m, 0), full_len - 1)


def root_cluster_depths(rows: Sequence[Row], p: float, trials: int, seed: int,
                        stream: int = 0) -> np.ndarray:
    """Deepest level reached by the root cluster, one value per trial.

    Exact reduction of Bernoulli(p) percolation on omega along the rows:
    a component root goes further only if its whole Q path and the
    connector are open (``2 (2**(k+1) - 2) + 1`` edges); the copy R of T_k
    then thins binomially level by level and every reached R-leaf has two
    child roots, each attached by one edge.
    """
    if not 0 <= p <= 1:
        raise ValueError("p outside [0, 1]")
    g = rngmod.generator(seed, rngmod.OMEGA, 1, stream)
    out = np.zeros(trials, dtype=np.int64)
    for t in range(trials):
        alive = 1
        deepest = 0
        for row in rows:
            qlen = 2 * (2 ** (row.k + 1) - 2)
            full = int(g.binomial(alive, p ** (qlen + 1))) if p > 0 else 0
            if full == 0:
                run = _max_partial_run(g, alive, p, qlen + 1)
                deepest = max(deepest, row.top + _deepest_on_q(row.k, min(run, qlen)))
                break
            deepest = row.bottom
            reached = full
            for _ in range(row.k):
                reached = int(g.binomial(2 * reached, p))
                if reached == 0:
                    break
            if reached == 0:
                break
            alive = int(g.binomial(2 * reached, p))
            if alive == 0:
                break
        out[t] = deepest
    return out


@dataclass(frozen=True)
class SurvivalPoint:
    depth: int
    trials: int
    survivals: int
    rate: float
    ci_low: float
    ci_high: float


SURVIVAL_COLUMNS = ("depth", "trials", "survivals", "survival_rate", "ci_low", "ci_high")


def survival_curve(deepest: np.ndarray, depths: Iterable[int]) -> list[SurvivalPoint]:
    n = len(deepest)
    out = []
    for d in depths:
        s = int((deepest >= d).sum())
        lo, hi = wilson_interval(s, n)
        out.append(SurvivalPoint(int(d), n, s, s / n, lo, hi))
    return out


def percolate_omega(omega: OmegaTree, p: float, trials: int, seed: int,
                    depths: Iterable[int] | None = None) -> list[SurvivalPoint]:
    """P(root cluster reaches depth d) on this omega (its gap sequence is fixed)."""
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    if depths is None:
        depths = range(omega.levels)
    return survival_curve(root_cluster_depths(omega.rows, p, trials, seed), depths)


def annealed_survival(levels: int, q: float, p: float, trials: int, seed: int,
                      depths: Iterable[int]) -> list[SurvivalPoint]:
    """Same curve with a fresh gap sequence for every trial."""
    deepest = np.zeros(trials, dtype=np.int64)
    for t in range(trials):
        om = build_omega(levels, q, rngmod.stream_key(seed, t, rngmod.OMEGA), materialize=False)
        deepest[t] = root_cluster_depths(om.rows, p, 1, seed, stream=t)[0]
    return survival_curve(deepest, depths)


def explicit_root_depths(omega: OmegaTree, p: float, trials: int, seed: int) -> np.ndarray:
    """Deepest level of the root cluster by full percolation of a materialised omega."""
    patch, _ = omega_patch(omega)
    lv = patch.level_array
    out = np.zeros(trials, dtype=np.int64)
    for t in range(trials):
        o = percolate(patch, PercConfig(p, "bond", seed, t))
        out[t] = lv[o.labels == o.labels[patch.root]].max()
    return out


def omega_consistency(omega: OmegaTree) -> None:
    """Raise InvariantViolation when :func:`verify_spanning_tree` finds a problem."""
    rep = verify_spanning_tree(omega)
    if not rep.ok:
        raise InvariantViolation("; ".join(rep.problems) or "omega is not a spanning tree")
