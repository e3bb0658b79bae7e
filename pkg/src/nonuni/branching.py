"""Branching process with bounded interactions.

Every vertex of generation m has exactly k children with probability p
and none otherwise.  In ``independent`` mode the coins are independent;
in ``sliding_window(a)`` mode the coin of vertex i is

    (U_i + U_{i+1} + ... + U_{i+a}) mod 2**32 < p * 2**32

for i.i.d. 32-bit uniforms ``U``, so each coin is still Bernoulli(p) but
depends on the coins of the 2a vertices within distance a of i.

Only generation sizes are kept.  Trials are simulated in fixed blocks,
each with its own Philox stream keyed by (seed, block), so the output is
the same for any number of workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .parallel import blocks, map_ordered
from .percolation import wilson_interval

TRIAL_BLOCK = 8192
TWO32 = 1 << 32
CHUNK = 1 << 22            # uniforms drawn at once in sliding mode


@dataclass(frozen=True)
class BranchingConfig:
    k: int
    p: float
    interaction: str = "independent"
    window: int = 0
    max_generations: int = 40
    trials: int = 1000
    seed: int = 0
    cap: int = 10 ** 6

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p outside [0, 1]")
        if self.interaction not in ("independent", "sliding_window"):
            raise ValueError(f"unknown interaction {self.interaction!r}")
        if self.interaction == "sliding_window" and self.window < 1:
            raise ValueError("sliding_window needs window >= 1")
        if self.interaction == "independent" and self.window != 0:
            raise ValueError("independent mode has window 0")
        if self.max_generations < 0 or self.trials < 1 or self.cap < 1:
            raise ValueError("need max_generations >= 0, trials >= 1, cap >= 1")

    @property
    def alpha(self) -> int:
        return 2 * self.window

    @classmethod
    def from_alpha(cls, alpha: int, **kw) -> "BranchingConfig":
        if alpha < 0 or alpha % 2:
            raise ValueError("alpha must be a nonnegative even number (alpha = 2a)")
        if alpha == 0:
            return cls(interaction="independent", window=0, **kw)
        return cls(interaction="sliding_window", window=alpha // 2, **kw)


@dataclass
class BranchingTrace:
    sizes: np.ndarray
    survived: bool
    truncated: bool
    pk: float = field(repr=False, default=1.0)

    @property
    def martingale(self) -> np.ndarray:
        m = np.arange(len(self.sizes))
        return self.sizes / self.pk ** m


@dataclass
class BlockResult:
    sizes: np.ndarray          # (trials, max_generations + 1); -1 after truncation
    survived: np.ndarray
    truncated: np.ndarray


def _window_successes(g: np.random.Generator, a: int, p: float, sizes: np.ndarray) -> np.ndarray:
    seg = sizes + a
    u = g.integers(0, TWO32, size=int(seg.sum()), dtype=np.uint64)
    cs = np.concatenate(([0], np.cumsum(u, dtype=np.uint64)))
    starts = np.concatenate(([0], np.cumsum(seg)[:-1]))
    owner = np.repeat(np.arange(len(sizes)), sizes)
    pos = np.arange(int(sizes.sum())) - np.repeat(np.cumsum(sizes) - sizes, sizes)
    i = starts[owner] + pos
    window_sum = (cs[i + a + 1] - cs[i]) % np.uint64(TWO32)
    ok = window_sum < np.uint64(round(p * TWO32))
    return np.bincount(owner, weights=ok, minlength=len(sizes)).astype(np.int64)


def _successes(g: np.random.Generator, cfg: BranchingConfig, sizes: np.ndarray) -> np.ndarray:
    if cfg.interaction == "independent":
        return g.binomial(sizes, cfg.p)
    # bounded memory: draw the windows for consecutive groups of trials
    out = np.empty(len(sizes), dtype=np.int64)
    bounds = np.cumsum(sizes + cfg.window)
    lo = 0
    while lo < len(sizes):
        base = bounds[lo - 1] if lo else 0
        hi = max(lo + 1, int(np.searchsorted(bounds, base + CHUNK, side="right")))
        out[lo:hi] = _window_successes(g, cfg.window, cfg.p, sizes[lo:hi])
        lo = hi
    return out


def simulate_block(cfg: BranchingConfig, start: int, stop: int) -> BlockResult:
    """Trials ``start..stop-1``; the stream depends only on (seed, start)."""
    g = rng.generator(cfg.seed, rng.BRANCHING, start)
    n = stop - start
    G = cfg.max_generations
    sizes = np.zeros((n, G + 1), dtype=np.int64)
    sizes[:, 0] = 1
    truncated = np.zeros(n, dtype=bool)
    current = np.ones(n, dtype=np.int64)
    for m in range(G):
        active = np.flatnonzero((current > 0) & ~truncated)
        if len(active) == 0:
            break
        nxt = cfg.k * _successes(g, cfg, current[active])
        over = nxt > cfg.cap
        truncated[active[over]] = True
        current[active] = np.where(over, -1, nxt)
        sizes[active, m + 1] = current[active]
    sizes[np.cumsum(sizes < 0, axis=1) > 0] = -1
    survived = truncated | (sizes[:, G] > 0)
    return BlockResult(sizes, survived, truncated)


def _block_task(args):
    cfg, start, stop = args
    return simulate_block(cfg, start, stop)


def run_trials(cfg: BranchingConfig, workers: int = 1) -> BlockResult:
    tasks = [(cfg, a, b) for a, b in blocks(cfg.trials, TRIAL_BLOCK)]
    parts = map_ordered(_block_task, tasks, workers)
    return BlockResult(
        np.concatenate([r.sizes for r in parts]),
        np.concatenate([r.survived for r in parts]),
        np.concatenate([r.truncated for r in parts]),
    )


def simulate(cfg: BranchingConfig, trial: int = 0) -> BranchingTrace:
    """One trace; identical to row ``trial`` of :func:`run_trials`."""
    if not 0 <= trial < cfg.trials:
        raise ValueError("trial index out of range")
    start = (trial // TRIAL_BLOCK) * TRIAL_BLOCK
    res = simulate_block(cfg, start, min(start + TRIAL_BLOCK, cfg.trials))
    i = trial - start
    return BranchingTrace(res.sizes[i], bool(res.survived[i]), bool(res.truncated[i]), cfg.p * cfg.k)


@dataclass(frozen=True)
class SurvivalResult:
    trials: int
    survivals: int
    rate: float
    ci_low: float
    ci_high: float
    truncated: int


def survival_probability(cfg: BranchingConfig, workers: int = 1) -> SurvivalResult:
    """Fraction of trials alive at ``max_generations`` (or truncated at the cap)."""
    res = run_trials(cfg, workers)
    s = int(res.survived.sum())
    lo, hi = wilson_interval(s, cfg.trials)
    return SurvivalResult(cfg.trials, s, s / cfg.trials, lo, hi, int(res.truncated.sum()))


def gw_extinction_oracle(k: int, p: float, tol: float = 1e-12, max_iter: int = 10 ** 7) -> float:
    """Smallest root of ``q = (1 - p) + p q**k`` by monotone iteration from 0."""
    if k < 1 or not 0 <= p <= 1:
        raise ValueError("need k >= 1 and p in [0, 1]")
    if k * p <= 1:
        return 1.0 if not (k == 1 and p == 1) else 0.0
    q = 0.0
    for _ in range(max_iter):
        nxt = (1 - p) + p * q ** k
        if abs(nxt - q) < tol:
            return nxt
        q = nxt
    return q


def second_moment_bound(k: int, p: float, alpha: float, m: int) -> float:
    """``1 + alpha k^2 sum_{i=1}^{m+1} (pk)^{-i}``."""
    r = 1.0 / (p * k)
    return 1.0 + alpha * k * k * sum(r ** i for i in range(1, m + 2))


@dataclass(frozen=True)
class MartingaleRow:
    m: int
    mean_size: float
    mean_Y: float
    se_Y: float
    second_moment_Y: float
    se_second_moment: float
    alive_fraction: float
    bound_alpha: float
    bound_alpha_self: float


MARTINGALE_COLUMNS = ("m", "mean_size", "mean_Y", "se_Y", "second_moment_Y", "se_second_moment",
                      "alive_fraction", "bound_alpha", "bound_alpha_self")


def martingale_diagnostics(cfg: BranchingConfig, result: BlockResult) -> list[MartingaleRow]:
    """Per-generation moments of ``Y_m = |O_m| / (pk)^m``.

    The second moment is compared with the bound both for alpha as
    configured and for alpha + 1, which also counts each vertex paired
    with itself.  Generations touched by truncation are not reported.
    """
    pk = cfg.p * cfg.k
    if pk <= 1:
        raise ValueError("martingale normalisation needs kp > 1")
    sizes = result.sizes
    n = len(sizes)
    rows = []
    for m in range(sizes.shape[1]):
        col = sizes[:, m]
        if (col < 0).any():
            break
        y = col / pk ** m
        y2 = y * y
        rows.append(MartingaleRow(
            m=m,
            mean_size=float(col.mean()),
            mean_Y=float(y.mean()),
            se_Y=float(y.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan,
            second_moment_Y=float(y2.mean()),
            se_second_moment=float(y2.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan,
            alive_fraction=float((col > 0).mean()),
            bound_alpha=second_moment_bound(cfg.k, cfg.p, cfg.alpha, m),
            bound_alpha_self=second_moment_bound(cfg.k, cfg.p, cfg.alpha + 1, m),
        ))
    return rows
