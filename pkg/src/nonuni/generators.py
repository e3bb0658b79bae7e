"""Finite patches of the graph families: grandmother graphs, Diestel-Leader
graphs, the self-similar bag construction, box products and plain trees.

Layered trees use horofunction coordinates.  A vertex of a layered tree is
``(layer, digits)``: follow the distinguished ray up to layer
``layer - len(digits)`` and then descend by the child indices in
``digits``.  Digit strings never start with 0 (a leading 0 step stays on
the ray), which makes the representation canonical.  Within a graph the
layer is usually implied by the vertex label, so most helpers work on the
digit strings alone.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Hashable

from .graph_core import GraphPatch, build_patch

Digits = tuple[int, ...]

MAX_ADDRESS = 64

FAMILIES = (
    "grandmother",
    "diestel_leader",
    "self_similar",
    "box_product",
    "regular_tree",
    "binary_tree_Tk",
    "upsilon_n",
)


def child_digits(d: Digits, c: int) -> Digits:
    return d + (c,) if (d or c) else ()


def parent_digits(d: Digits) -> Digits:
    return d[:-1]


def _bfs(start: Hashable, neighbours: Callable[[Any], list], radius: int) -> list:
    seen = {start: 0}
    order = [start]
    queue = deque([start])
    while queue:
        v = queue.popleft()
        if seen[v] == radius:
            continue
        for u in neighbours(v):
            if u not in seen:
                seen[u] = seen[v] + 1
                order.append(u)
                queue.append(u)
    return order


@dataclass(frozen=True)
class GeneratorSpec:
    family: str
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {FAMILIES}")

    def build(self) -> GraphPatch:
        p = dict(self.params)
        if self.family == "grandmother":
            return gen_grandmother(**p)
        if self.family == "diestel_leader":
            return gen_diestel_leader(**p)
        if self.family == "self_similar":
            return gen_self_similar(**p)
        if self.family == "regular_tree":
            return gen_regular_tree(**p)
        if self.family == "binary_tree_Tk":
            return gen_binary_Tk(**p)
        if self.family == "upsilon_n":
            return gen_upsilon_n(**p)
        # box_product: {"base": {...GeneratorSpec...}, "m": int}
        base = p["base"]
        return gen_box_product(GeneratorSpec(base["family"], base.get("params", {})).build(), p["m"])


# --------------------------------------------------------------------------
# grandmother graph

def _gm_neighbours(k: int):
    def nbrs(v):
        layer, d = v
        par = (layer - 1, parent_digits(d))
        gpar = (layer - 2, parent_digits(par[1]))
        kids = [(layer + 1, child_digits(d, c)) for c in range(k)]
        gkids = [(layer + 2, child_digits(kd, c)) for _, kd in kids for c in range(k)]
        return [par, gpar, *kids, *gkids]
    return nbrs


def tree_distance_to_root(v: tuple[int, Digits]) -> int:
    layer, d = v
    return len(d) + abs(layer - len(d))


def gen_grandmother(k: int, up: int, down: int, radius: int | None = None) -> GraphPatch:
    """Grandmother graph on the (k+1)-regular family tree.

    Without ``radius`` the patch is every descendant of the root's ancestor
    at level ``-up`` down to level ``down``.  With ``radius`` it is instead
    the ball of that radius in the underlying tree, cut to levels
    ``-up..down``; this keeps large ``k`` affordable.
    """
    if k < 2 or up < 0 or down < 1 or up + down < 2:
        raise ValueError("need k >= 2, up >= 0, down >= 1, up + down >= 2")
    tree_nbrs = lambda v: [(v[0] - 1, parent_digits(v[1]))] + [
        (v[0] + 1, child_digits(v[1], c)) for c in range(k)]
    if radius is None:
        top = (-up, ())
        labels = _bfs(top, lambda v: [u for u in tree_nbrs(v)[1:] if u[0] <= down], up + down)
    else:
        if radius < 1:
            raise ValueError("radius must be >= 1")
        labels = [v for v in _bfs((0, ()), tree_nbrs, radius) if -up <= v[0] <= down]
    params = {"k": k, "up": up, "down": down}
    if radius is not None:
        params["radius"] = radius
    return build_patch(
        labels, _gm_neighbours(k), lambda v: v[0],
        root_label=(0, ()), level_ratio=Fraction(k), degree=k * k + k + 2,
        allowed_jumps={1, 2}, generator="grandmother", params=params,
    )


# --------------------------------------------------------------------------
# Diestel-Leader graphs

def _dl_neighbours(k: int, n: int):
    # label (t, a, b): a addresses the (k+1)-regular tree at layer t, b the
    # (n+1)-regular tree, whose children sit one layer *up*.
    def nbrs(v):
        t, a, b = v
        down = [(t + 1, child_digits(a, c), parent_digits(b)) for c in range(k)]
        up = [(t - 1, parent_digits(a), child_digits(b, e)) for e in range(n)]
        return down + up
    return nbrs


def gen_diestel_leader(k: int, n: int, radius: int, max_address: int = MAX_ADDRESS) -> GraphPatch:
    """Ball of the given radius around ``(0, (), ())`` in DL(k, n)."""
    if k < 1 or n < 1 or radius < 1:
        raise ValueError("need k, n, radius >= 1")
    if radius > max_address:
        raise ValueError(f"radius {radius} overflows the address length {max_address}")
    nbrs = _dl_neighbours(k, n)
    labels = _bfs((0, (), ()), nbrs, radius)
    return build_patch(
        labels, nbrs, lambda v: v[0],
        root_label=(0, (), ()), level_ratio=Fraction(k, n), degree=k + n,
        allowed_jumps={1}, generator="diestel_leader",
        params={"k": k, "n": n, "radius": radius},
    )


# --------------------------------------------------------------------------
# self-similar construction over DL(2,2)

def _ss_neighbours(v):
    i, t, a, b = v
    same = [(i, *u) for u in _dl_neighbours(2, 2)((t, a, b))]
    # the bag of v one level down is {(siblings in T) x (siblings in T')}
    down = [(i + 1, t + 1, child_digits(a, c), child_digits(b, e)) for c in (0, 1) for e in (0, 1)]
    up = [(i - 1, t - 1, parent_digits(a), parent_digits(b))]
    return same + down + up


def bag_of(label) -> tuple:
    """Canonical bag name of a self-similar vertex: its parents in both trees."""
    i, t, a, b = label
    return (t - 1, parent_digits(a), parent_digits(b))


def gen_self_similar(levels: int, extent: int) -> GraphPatch:
    """Stack of DL(2,2) copies, each vertex joined to a whole bag one level down.

    Level 0 holds the DL(2,2) ball of radius ``extent``; level ``i+1`` holds
    every bag hanging below level ``i``.
    """
    if levels < 2:
        raise ValueError("need at least 2 levels")
    if extent < 1:
        raise ValueError("extent must be >= 1 to embed a full bag")
    layer0 = _bfs((0, (), ()), _dl_neighbours(2, 2), extent)
    labels = [(0, *v) for v in layer0]
    frontier = labels
    for i in range(1, levels):
        nxt = []
        for v in frontier:
            nxt.extend(_ss_neighbours(v)[4:8])
        labels.extend(nxt)
        frontier = nxt
    return build_patch(
        labels, _ss_neighbours, lambda v: v[0],
        root_label=(0, 0, (), ()), level_ratio=Fraction(4), degree=9,
        allowed_jumps={0, 1}, generator="self_similar",
        params={"levels": levels, "extent": extent},
    )


# --------------------------------------------------------------------------
# box product with K_m

def gen_box_product(h: GraphPatch, m: int) -> GraphPatch:
    """``h`` boxed with the complete graph K_m: (x,i)~(y,j) iff x~y or x==y, minus loops."""
    if h.n_vertices == 0:
        raise ValueError("base patch is empty")
    if m < 2:
        raise ValueError("m must be >= 2")
    adj = []
    for x in range(h.n_vertices):
        for i in range(m):
            nb = [x * m + j for j in range(m) if j != i]
            nb += [y * m + j for y in h.adjacency[x] for j in range(m)]
            adj.append(tuple(sorted(nb)))
    base_labels = h.labels if h.labels is not None else tuple(range(h.n_vertices))
    degree = None if h.transitive_degree is None else (h.transitive_degree + 1) * m - 1
    return GraphPatch(
        adjacency=tuple(adj),
        root=h.root * m,
        level=tuple(h.level[x] for x in range(h.n_vertices) for _ in range(m)),
        level_ratio=h.level_ratio,
        interior=tuple(h.interior[x] for x in range(h.n_vertices) for _ in range(m)),
        generator="box_product",
        params={"base": {"family": h.generator, "params": h.params}, "m": m},
        transitive_degree=degree,
        allowed_jumps=frozenset(h.allowed_jumps | {0}),
        labels=tuple((lab, j) for lab in base_labels for j in range(m)),
    )


# --------------------------------------------------------------------------
# unimodular controls and finite trees

def gen_regular_tree(k_plus_1: int, radius: int) -> GraphPatch:
    """Ball in the (k+1)-regular tree, levels read off a fixed end (ratio 1)."""
    if k_plus_1 < 3 or radius < 0:
        raise ValueError("need k_plus_1 >= 3 and radius >= 0")
    k = k_plus_1 - 1
    nbrs = lambda v: [(v[0] - 1, parent_digits(v[1]))] + [
        (v[0] + 1, child_digits(v[1], c)) for c in range(k)]
    labels = _bfs((0, ()), nbrs, radius)
    return build_patch(
        labels, nbrs, lambda v: v[0],
        root_label=(0, ()), level_ratio=Fraction(1), degree=k_plus_1,
        allowed_jumps={1}, generator="regular_tree",
        params={"k_plus_1": k_plus_1, "radius": radius},
    )


def _finite_tree(labels, parent: dict, generator: str, params: dict) -> GraphPatch:
    index = {lab: i for i, lab in enumerate(labels)}
    adj: list[set[int]] = [set() for _ in labels]
    depth = [0] * len(labels)
    for lab in labels:
        p = parent.get(lab)
        if p is not None:
            a, b = index[lab], index[p]
            adj[a].add(b)
            adj[b].add(a)
            depth[a] = depth[b] + 1
    return GraphPatch(
        adjacency=tuple(tuple(sorted(s)) for s in adj),
        root=0,
        level=tuple(depth),
        level_ratio=Fraction(1),
        interior=tuple(True for _ in labels),
        generator=generator,
        params=params,
        transitive_degree=None,
        allowed_jumps=frozenset({1}),
        labels=tuple(labels),
    )


def gen_binary_Tk(kdepth: int) -> GraphPatch:
    """Rooted binary tree of depth ``kdepth``; labels are bit tuples."""
    if kdepth < 0:
        raise ValueError("depth must be >= 0")
    labels: list[Digits] = [()]
    parent: dict = {(): None}
    for lab in labels:
        if len(lab) < kdepth:
            for c in (0, 1):
                labels.append(lab + (c,))
                parent[lab + (c,)] = lab
    return _finite_tree(labels, parent, "binary_tree_Tk", {"kdepth": kdepth})


def gen_upsilon_n(n: int) -> GraphPatch:
    """Path of 2**n edges from the root, then a binary tree of depth n."""
    if n < 0:
        raise ValueError("n must be >= 0")
    length = 2 ** n
    labels: list = [("p", i) for i in range(length)]
    parent: dict = {("p", 0): None}
    for i in range(1, length):
        parent[("p", i)] = ("p", i - 1)
    labels.append(("t", ()))
    parent[("t", ())] = ("p", length - 1)
    j = length
    while j < len(labels):
        _, bits = labels[j]
        if len(bits) < n:
            for c in (0, 1):
                labels.append(("t", bits + (c,)))
                parent[("t", bits + (c,))] = ("t", bits)
        j += 1
    return _finite_tree(labels, parent, "upsilon_n", {"n": n})


def leaves(patch: GraphPatch) -> list[int]:
    """Non-root vertices of degree 1 (for rooted finite trees)."""
    return [v for v in range(patch.n_vertices) if v != patch.root and patch.degree(v) == 1]
