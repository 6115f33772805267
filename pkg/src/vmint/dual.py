"""Coalescing random-walk system dual to the interface dynamics.

One walker starts from every site of interest and traces an opinion back
through time: it rings at rate 1, jumps by a step drawn from the same law
the forward process copies along, and merges into any walker it lands on
(opinions with a common ancestor stay equal forever).  The three estimators
built on top of the system:

* `dual_marginal`: single-site marginal of the forward process started from
  the step profile, computed as P(walker from x ends at a site <= 0).
* `density`: fraction of sites still carrying a live walker after the system
  ran for a while, measured in the core of a window.
* `crossing_census`: how often neighbouring survivors finish on opposite
  sides of the origin in reversed order, the event that separates the
  inversion count from the interface width.

Dual time runs forward here; only distributional identities are verified,
so no pathwise coupling with the forward engine is attempted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _dual_core as _dc
from .kernels import Kernel
from .report import EstimateReport, binomial_report, mean_report

__all__ = [
    "WalkerSet", "CrossingEvent", "init_walkers", "evolve",
    "dual_marginal", "density", "crossing_census",
]


@dataclass
class WalkerSet:
    """Coalescing walkers with their merge history.

    Walker ids are 0..n-1 in increasing order of the starting sites.  The
    position array is only meaningful at union-find roots; an absorbed
    walker's current site is its root's site.
    """

    clock: float = 0.0
    merge_log: list = field(default_factory=list)
    _pos: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    _parent: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))

    @property
    def walker_count(self) -> int:
        return int(self._pos.size)

    @property
    def live_count(self) -> int:
        return sum(1 for i in range(self._pos.size) if self.find(i) == i)

    def find(self, walker_id: int) -> int:
        """Union-find root: the id of the walker this one merged into."""
        return int(_dc._uf_find(self._parent, int(walker_id)))

    def position(self, walker_id: int) -> int:
        return int(self._pos[self.find(walker_id)])

    @property
    def walkers(self) -> list[tuple[int, int]]:
        """Live (walker_id, site) pairs in increasing site order."""
        out = [(i, int(self._pos[i]))
               for i in range(self._pos.size) if self.find(i) == i]
        out.sort(key=lambda t: t[1])
        return out

    def merge_history_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("merge_time,absorbed_id,surviving_id\n")
            for t, a, s in self.merge_log:
                fh.write(f"{t!r},{a},{s}\n")


def init_walkers(sites) -> WalkerSet:
    """One walker per site; ids follow increasing site order."""
    arr = np.array(sorted(int(s) for s in sites), dtype=np.int64)
    if arr.size != np.unique(arr).size:
        raise ValueError("walker start sites must be distinct")
    return WalkerSet(clock=0.0, merge_log=[],
                     _pos=arr, _parent=np.arange(arr.size, dtype=np.int64))


def evolve(ws: WalkerSet, kernel: Kernel, duration: float,
           rng: np.random.Generator) -> WalkerSet:
    """Advance the system by `duration` (in place; returns the same set)."""
    duration = float(duration)
    if duration < 0:
        raise ValueError("duration must be nonnegative")
    n = ws._pos.size
    if n == 0 or duration == 0.0:
        ws.clock += duration
        return ws
    log_t = np.empty(n, dtype=np.float64)
    log_a = np.empty(n, dtype=np.int64)
    log_s = np.empty(n, dtype=np.int64)
    nlog, _ = _dc._evolve_system(
        ws._pos, ws._parent, ws.clock, duration,
        kernel.sites, kernel.alias_cut, kernel.alias_idx, rng,
        log_t, log_a, log_s, 0,
    )
    for i in range(nlog):
        ws.merge_log.append((float(log_t[i]), int(log_a[i]), int(log_s[i])))
    ws.clock += duration
    return ws


def dual_marginal(kernel: Kernel, x: int, t: float, reps: int,
                  rng: np.random.Generator) -> EstimateReport:
    """P(forward value at x equals 1 at time t), from the step profile.

    The value at x is the initial value at the end of a single backward
    walk, so the estimate is P(x + walk displacement over [0, t] <= 0).
    Only the jump count matters at a fixed horizon, so replicates are
    vectorized as compound-Poisson sums.
    """
    x, t, reps = int(x), float(t), int(reps)
    if reps < 1:
        raise ValueError("need at least one replicate")
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0.0:
        v = 1.0 if x <= 0 else 0.0
        return EstimateReport(v, v, v, reps,
                              metadata={"experiment": "dual_marginal",
                                        "x": x, "t": t, "exact": True})
    counts = rng.poisson(t, size=reps)
    steps = kernel.sites[
        np.searchsorted(kernel.cdf, rng.random(int(counts.sum())),
                        side="right")
    ]
    csum = np.concatenate([[0], np.cumsum(steps)])
    ends = np.cumsum(counts)
    finals = x + csum[ends] - csum[ends - counts]
    hits = int(np.count_nonzero(finals <= 0))
    rep = binomial_report(hits, reps)
    rep.metadata.update(experiment="dual_marginal", x=x, t=t)
    return rep


def _core_bounds(window: int, horizon: float, kernel: Kernel):
    """Window placement and the core kept after discarding edge margins."""
    window = int(window)
    if window < 100:
        raise ValueError("window must be at least 100")
    sigma = math.sqrt(float(np.dot(kernel.sites.astype(np.float64) ** 2,
                                   kernel.masses)))
    margin = int(math.ceil(10.0 * math.sqrt(horizon) * sigma))
    lo = -(window // 2)
    core_lo = lo + margin
    core_hi = lo + window - 1 - margin
    if core_hi < core_lo:
        raise ValueError(
            f"window {window} too small: edge margin {margin} per side "
            f"leaves no core (need > {2 * margin} sites)"
        )
    return lo, core_lo, core_hi


def density(kernel: Kernel, K: float, window: int, reps: int,
            rng: np.random.Generator) -> EstimateReport:
    """Live-walker density after time K, started from every window site.

    A margin of 10 sqrt(K) sigma is dropped on each side so that the core
    is insensitive to the missing walkers beyond the window edges.
    """
    K, reps = float(K), int(reps)
    if K < 0:
        raise ValueError("K must be nonnegative")
    if reps < 1:
        raise ValueError("need at least one replicate")
    window = int(window)
    if K == 0.0:
        if window < 100:
            raise ValueError("window must be at least 100")
        return EstimateReport(1.0, 1.0, 1.0, reps,
                              metadata={"experiment": "density",
                                        "K": K, "window": window,
                                        "exact": True})
    lo, core_lo, core_hi = _core_bounds(window, K, kernel)
    core_len = core_hi - core_lo + 1
    vals = np.empty(reps, dtype=np.float64)
    for r in range(reps):
        cnt = _dc._density_once(lo, window, K, core_lo, core_hi,
                                kernel.sites, kernel.alias_cut,
                                kernel.alias_idx, rng)
        vals[r] = cnt / core_len
    rep = mean_report(vals, rng)
    rep.metadata.update(experiment="density", K=K, window=window,
                        core=core_len, margin=core_lo - lo)
    return rep


@dataclass
class CrossingEvent:
    """One neighbouring survivor pair observed through the second leg.

    pair: their sites at the split time (left < right); final_positions:
    where the two ancestral lines ended; coalesced: the lines merged during
    the second leg; crossed: they did not merge yet finished in reversed
    order about the origin (left line >= 0 > right line).
    """

    pair: tuple[int, int]
    final_positions: tuple[int, int]
    coalesced: bool
    crossed: bool

    def __post_init__(self):
        if self.crossed and self.coalesced:
            raise ValueError("a coalesced pair cannot be crossed")


def crossing_census(kernel: Kernel, t: float, K: float, window: int,
                    reps: int, rng: np.random.Generator):
    """Window-restricted census of order-reversing survivor pairs.

    Walkers start from every site of the window and run to dual time K;
    neighbouring survivors are paired off and the same system runs on to
    time t.  A pair counts as crossed when its two lines never merged and
    finish with the left one >= 0 and the right one < 0.  Returns the
    per-replicate probability that at least one pair crossed (a lower
    bound for the full-lattice event; the window truncation can only lose
    pairs) together with every pair observed.

    K == t is the degenerate census: no second leg, nothing can cross.
    """
    t, K, reps, window = float(t), float(K), int(reps), int(window)
    if t < K:
        raise ValueError("need t >= K: the pairs run over [K, t]")
    if K < 0:
        raise ValueError("K must be nonnegative")
    if reps < 1:
        raise ValueError("need at least one replicate")
    if window < 2:
        raise ValueError("window must hold at least two walkers")
    if t == K:
        rep = binomial_report(0, reps)
        rep.metadata.update(experiment="crossing_census", t=t, K=K,
                            window=window, window_restricted=True,
                            degenerate=True)
        return rep, []
    lo = -(window // 2)
    wpos = np.empty(window, dtype=np.int64)
    zpos = np.empty(window, dtype=np.int64)
    fin_w = np.empty(window, dtype=np.int64)
    fin_z = np.empty(window, dtype=np.int64)
    coal = np.empty(window, dtype=np.bool_)
    hits = 0
    events: list[CrossingEvent] = []
    for r in range(reps):
        npairs = _dc._census_once(lo, window, K, t,
                                  kernel.sites, kernel.alias_cut,
                                  kernel.alias_idx, rng,
                                  wpos, zpos, fin_w, fin_z, coal)
        any_crossed = False
        for q in range(npairs):
            crossed = (not coal[q]) and fin_w[q] >= 0 > fin_z[q]
            any_crossed = any_crossed or crossed
            events.append(CrossingEvent(
                pair=(int(wpos[q]), int(zpos[q])),
                final_positions=(int(fin_w[q]), int(fin_z[q])),
                coalesced=bool(coal[q]),
                crossed=crossed,
            ))
        hits += any_crossed
    rep = binomial_report(hits, reps)
    rep.metadata.update(experiment="crossing_census", t=t, K=K,
                        window=window, window_restricted=True)
    return rep, events
