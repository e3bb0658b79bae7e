"""Finite patches of transitive graphs with exact level and weight bookkeeping.

A patch is a finite induced subgraph of an infinite transitive graph.  Each
vertex carries an integer level (larger means further down) and the
generator declares the exact ratio between the weights of two adjacent
levels, so weights are ``level_ratio ** -level`` with ``w(root) == 1``.
Vertices whose whole neighbourhood in the infinite graph is present are
flagged ``interior``; identity checks only ever look at those.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Any, Iterable, NamedTuple, Sequence

import numpy as np


class PatchError(ValueError):
    """A patch violates one of its structural invariants."""


class InvariantViolation(RuntimeError):
    """A construction produced output that breaks a property it must have."""


@dataclass(eq=False)
class GraphPatch:
    adjacency: tuple[tuple[int, ...], ...]
    root: int
    level: tuple[int, ...]
    level_ratio: Fraction
    interior: tuple[bool, ...]
    generator: str
    params: dict[str, Any]
    transitive_degree: int | None
    allowed_jumps: frozenset[int]
    labels: tuple[Any, ...] | None = field(default=None, repr=False)

    def __post_init__(self):
        self.level_ratio = Fraction(self.level_ratio)
        self.validate()

    def validate(self) -> None:
        n = len(self.adjacency)
        if len(self.level) != n or len(self.interior) != n:
            raise PatchError("level/interior arrays do not match vertex count")
        if not 0 <= self.root < max(n, 1):
            raise PatchError(f"root {self.root} outside 0..{n - 1}")
        if self.level_ratio <= 0:
            raise PatchError("level_ratio must be positive")
        for v, nbrs in enumerate(self.adjacency):
            if list(nbrs) != sorted(set(nbrs)):
                raise PatchError(f"neighbour list of {v} not sorted/unique")
            for u in nbrs:
                if u == v:
                    raise PatchError(f"self-loop at {v}")
                if not 0 <= u < n:
                    raise PatchError(f"edge {v}-{u} leaves the patch")
                if abs(self.level[u] - self.level[v]) not in self.allowed_jumps:
                    raise PatchError(
                        f"edge {v}-{u} jumps {abs(self.level[u] - self.level[v])} levels")
            if self.transitive_degree is not None and self.interior[v]:
                if len(nbrs) != self.transitive_degree:
                    raise PatchError(
                        f"interior vertex {v} has degree {len(nbrs)} != {self.transitive_degree}")
        for v, nbrs in enumerate(self.adjacency):
            for u in nbrs:
                if v not in self._nbr_sets[u]:
                    raise PatchError(f"adjacency not symmetric at {v}-{u}")

    @cached_property
    def _nbr_sets(self) -> list[frozenset[int]]:
        return [frozenset(a) for a in self.adjacency]

    # -- basic queries -------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return len(self.adjacency)

    def degree(self, v: int) -> int:
        return len(self.adjacency[v])

    def has_edge(self, u: int, v: int) -> bool:
        return v in self._nbr_sets[u]

    @cached_property
    def edges(self) -> np.ndarray:
        """Edges as an ``(E, 2)`` int array, ``u < v``, lexicographically sorted.

        The row index is the canonical edge id used by percolation streams.
        """
        out = [(v, u) for v, nbrs in enumerate(self.adjacency) for u in nbrs if v < u]
        if not out:
            return np.zeros((0, 2), dtype=np.int64)
        return np.array(out, dtype=np.int64)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def incident_edges(self) -> tuple[tuple[int, ...], ...]:
        """Edge ids incident to each vertex, aligned with ``adjacency``."""
        eid = {(int(a), int(b)): i for i, (a, b) in enumerate(self.edges)}
        return tuple(
            tuple(eid[(min(v, u), max(v, u))] for u in nbrs)
            for v, nbrs in enumerate(self.adjacency)
        )

    @cached_property
    def level_array(self) -> np.ndarray:
        return np.asarray(self.level, dtype=np.int64)

    def levels_present(self) -> list[int]:
        return sorted(set(self.level))

    def level_sizes(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for lv in self.level:
            out[lv] = out.get(lv, 0) + 1
        return dict(sorted(out.items()))

    def distances_from(self, source: int, limit: int | None = None) -> dict[int, int]:
        dist = {source: 0}
        queue = deque([source])
        while queue:
            v = queue.popleft()
            d = dist[v]
            if limit is not None and d >= limit:
                continue
            for u in self.adjacency[v]:
                if u not in dist:
                    dist[u] = d + 1
                    queue.append(u)
        return dist

    def index_of(self, label: Any) -> int:
        if self.labels is None:
            raise KeyError("patch carries no vertex labels")
        return self._label_index[label]

    @cached_property
    def _label_index(self) -> dict[Any, int]:
        return {lab: i for i, lab in enumerate(self.labels or ())}

    def subgraph(self, vertices: Iterable[int], edges: Iterable[tuple[int, int]] | None = None,
                 name: str | None = None) -> "GraphPatch":
        """Patch on ``vertices`` with the given edges (default: induced edges).

        Levels and ratio carry over; interior flags are cleared and the
        result is not treated as transitive.
        """
        keep = sorted(set(vertices))
        new_id = {v: i for i, v in enumerate(keep)}
        adj: list[set[int]] = [set() for _ in keep]
        if edges is None:
            for v in keep:
                for u in self.adjacency[v]:
                    if u in new_id:
                        adj[new_id[v]].add(new_id[u])
        else:
            for a, b in edges:
                adj[new_id[a]].add(new_id[b])
                adj[new_id[b]].add(new_id[a])
        jumps = {abs(self.level[a] - self.level[b]) for a in keep for b in self.adjacency[a]}
        root = new_id.get(self.root, 0)
        return GraphPatch(
            adjacency=tuple(tuple(sorted(s)) for s in adj),
            root=root,
            level=tuple(self.level[v] for v in keep),
            level_ratio=self.level_ratio,
            interior=tuple(False for _ in keep),
            generator=name or f"subgraph({self.generator})",
            params={"parent": self.generator, **self.params},
            transitive_degree=None,
            allowed_jumps=frozenset(jumps | set(self.allowed_jumps)),
            labels=tuple(self.labels[v] for v in keep) if self.labels else None,
        )

    # -- serialisation --------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        return {
            "generator": self.generator,
            "params": self.params,
            "V": self.n_vertices,
            "root": self.root,
            "level_ratio": str(self.level_ratio),
            "transitive_degree": self.transitive_degree,
            "allowed_jumps": sorted(self.allowed_jumps),
            "edges": self.edges.tolist(),
            "level": list(self.level),
            "interior": [bool(b) for b in self.interior],
            "labels": None if self.labels is None else [_label_to_json(x) for x in self.labels],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "GraphPatch":
        n = d["V"]
        adj: list[list[int]] = [[] for _ in range(n)]
        for a, b in d["edges"]:
            adj[a].append(b)
            adj[b].append(a)
        return cls(
            adjacency=tuple(tuple(sorted(a)) for a in adj),
            root=d.get("root", 0),
            level=tuple(d["level"]),
            level_ratio=Fraction(d.get("level_ratio", "1")),
            interior=tuple(bool(b) for b in d["interior"]),
            generator=d["generator"],
            params=dict(d.get("params", {})),
            transitive_degree=d.get("transitive_degree"),
            allowed_jumps=frozenset(d.get("allowed_jumps", {abs(d["level"][a] - d["level"][b])
                                                             for a, b in d["edges"]})),
            labels=None if d.get("labels") is None else tuple(_label_from_json(x) for x in d["labels"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "GraphPatch":
        return cls.from_dict(json.loads(text))


def _label_to_json(x):
    return [_label_to_json(y) for y in x] if isinstance(x, tuple) else x


def _label_from_json(x):
    return tuple(_label_from_json(y) for y in x) if isinstance(x, list) else x


def build_patch(
    labels: Sequence[Any],
    neighbours,
    level_of,
    *,
    root_label: Any,
    level_ratio: Fraction,
    degree: int | None,
    allowed_jumps: Iterable[int],
    generator: str,
    params: dict[str, Any],
) -> GraphPatch:
    """Induced patch on ``labels``.

    ``neighbours(label)`` lists the label's neighbours in the infinite
    graph; a vertex is interior iff all of them are in the label set.
    """
    index = {lab: i for i, lab in enumerate(labels)}
    adj = []
    interior = []
    for lab in labels:
        nbrs = neighbours(lab)
        inside = sorted({index[u] for u in nbrs if u in index})
        adj.append(tuple(inside))
        interior.append(len(inside) == len(set(nbrs)))
    return GraphPatch(
        adjacency=tuple(adj),
        root=index[root_label],
        level=tuple(level_of(lab) for lab in labels),
        level_ratio=Fraction(level_ratio),
        interior=tuple(interior),
        generator=generator,
        params=params,
        transitive_degree=degree,
        allowed_jumps=frozenset(allowed_jumps),
        labels=tuple(labels),
    )


def _check_vertex(patch: GraphPatch, v: int) -> None:
    if not 0 <= v < patch.n_vertices:
        raise KeyError(f"unknown vertex id {v}")


def weight_of(patch: GraphPatch, v: int) -> Fraction:
    """Exact weight ``level_ratio ** -level(v)``, normalised so the root level weighs 1."""
    _check_vertex(patch, v)
    return patch.level_ratio ** (patch.level[patch.root] - patch.level[v])


def mu_of(patch: GraphPatch) -> Fraction:
    """Largest weight ratio across an edge of the patch."""
    if patch.n_edges == 0:
        raise PatchError("mu is undefined on an edgeless patch")
    lv = patch.level_array
    jump = int(np.abs(lv[patch.edges[:, 0]] - lv[patch.edges[:, 1]]).max())
    r = patch.level_ratio if patch.level_ratio >= 1 else 1 / patch.level_ratio
    return r ** jump


class Ball(NamedTuple):
    vertices: frozenset[int]
    all_interior: bool


def interior_ball(patch: GraphPatch, center: int, r: int) -> Ball:
    """Vertices within graph distance ``r`` of ``center``."""
    _check_vertex(patch, center)
    if r < 0:
        raise ValueError("radius must be nonnegative")
    verts = frozenset(patch.distances_from(center, limit=r))
    return Ball(verts, all(patch.interior[v] for v in verts))
