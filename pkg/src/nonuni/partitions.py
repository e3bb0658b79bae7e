"""Partitions of the level line: unit-width log-weight classes, slabs,
separating level sets, and the box exhaustion of Z^n.

Levels enter only through ``t = log_mu w(level)``, which is an exact
rational: with maximal level jump J, ``t = s * (level(root) - level) / J``
where ``s`` is the sign of ``log level_ratio``.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .graph_core import GraphPatch, mu_of


def _max_jump(patch: GraphPatch) -> int:
    lv = patch.level_array
    e = patch.edges
    return int(np.abs(lv[e[:, 0]] - lv[e[:, 1]]).max())


def log_mu_weight(patch: GraphPatch, level: int) -> Fraction:
    """Exact ``log_mu w`` of a level, for a patch with ``mu > 1``."""
    if patch.level_ratio == 1:
        raise ValueError("log_mu is undefined when mu = 1 (unimodular input)")
    sign = 1 if patch.level_ratio > 1 else -1
    return Fraction(sign * (patch.level[patch.root] - level), _max_jump(patch))


@dataclass(frozen=True)
class Slab:
    """Levels with ``mu**a < w <= mu**b``, i.e. ``a < log_mu w <= b``."""
    a: Fraction
    b: Fraction

    def __post_init__(self):
        object.__setattr__(self, "a", Fraction(self.a))
        object.__setattr__(self, "b", Fraction(self.b))
        if self.b - self.a < 1:
            raise ValueError(f"slab width {self.b - self.a} < 1")

    def contains(self, t: Fraction) -> bool:
        return self.a < t <= self.b


def slab_members(patch: GraphPatch, slab: Slab) -> set[int]:
    return {lv for lv in patch.levels_present() if slab.contains(log_mu_weight(patch, lv))}


@dataclass(frozen=True)
class OnePartition:
    """Level classes ``{log_mu w in [n + U, n + 1 + U)}``, indexed by n."""
    U: Fraction
    mu: Fraction
    spacing: Fraction          # gap between consecutive level log-weights
    patch: GraphPatch

    def class_of(self, level: int) -> int:
        return math.floor(log_mu_weight(self.patch, level) - self.U)

    def classes(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {}
        for lv in self.patch.levels_present():
            out.setdefault(self.class_of(lv), []).append(lv)
        return dict(sorted(out.items()))

    def class_slab(self, n: int) -> Slab:
        """Width-one slab with exactly the levels of class ``n``.

        The class interval is closed on the left and the slab on the right,
        so both ends are pulled down by less than the level spacing.
        """
        t = self.U / self.spacing
        frac = t - math.floor(t)
        eps = (frac if frac else 1) * self.spacing / 2
        return Slab(n + self.U - eps, n + 1 + self.U - eps)


def one_partition(patch: GraphPatch, U) -> OnePartition:
    U = Fraction(U)
    if not 0 <= U <= 1:
        raise ValueError("U must lie in [0, 1]")
    mu = mu_of(patch)
    if mu == 1:
        raise ValueError("one_partition needs a nonunimodular patch (mu > 1)")
    return OnePartition(U, mu, Fraction(1, _max_jump(patch)), patch)


def separating_level_set(patch: GraphPatch, l1: int, l2: int) -> bool:
    """Whether removing levels ``l1..l2`` cuts everything above from everything below."""
    if l1 > l2:
        raise ValueError(f"level {l1} lies below level {l2}")
    lv = patch.level
    above = [v for v in range(patch.n_vertices) if lv[v] < l1]
    if not above or not any(x > l2 for x in lv):
        return True
    seen = set(above)
    queue = deque(above)
    while queue:
        v = queue.popleft()
        for u in patch.adjacency[v]:
            if u in seen or l1 <= lv[u] <= l2:
                continue
            if lv[u] > l2:
                return False
            seen.add(u)
            queue.append(u)
    return True


# --------------------------------------------------------------------------
# box exhaustion of Z^n

@dataclass(frozen=True)
class BoxPartition:
    n: int
    m: int
    offset: tuple[int, ...]

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError("need n >= 1 and m >= 1")
        if len(self.offset) != self.n or not all(1 <= x <= self.m for x in self.offset):
            raise ValueError(f"offset {self.offset} not in {{1..{self.m}}}^{self.n}")

    def class_of(self, v: Sequence[int]) -> tuple[int, ...]:
        return zn_exhaustion(self.n, self.m, self.offset, v)


def zn_exhaustion(n: int, m: int, offset: Sequence[int], v: Sequence[int]) -> tuple[int, ...]:
    """Box containing ``v``: componentwise ``floor((v_i - x_i) / m)``."""
    if len(offset) != n or len(v) != n:
        raise ValueError("dimension mismatch")
    if not all(1 <= x <= m for x in offset):
        raise ValueError(f"offset {tuple(offset)} not in {{1..{m}}}^{n}")
    return tuple((vi - xi) // m for vi, xi in zip(v, offset))


def same_class_fraction(v: Sequence[int], w: Sequence[int], m: int) -> Fraction:
    """Share of the m^n offsets that put ``v`` and ``w`` in one box (enumerated)."""
    n = len(v)
    hits = sum(
        zn_exhaustion(n, m, x, v) == zn_exhaustion(n, m, x, w)
        for x in itertools.product(range(1, m + 1), repeat=n)
    )
    return Fraction(hits, m ** n)


def same_class_formula(v: Sequence[int], w: Sequence[int], m: int) -> Fraction:
    out = Fraction(1)
    for a, b in zip(v, w):
        out *= max(Fraction(0), 1 - Fraction(abs(a - b), m))
    return out
