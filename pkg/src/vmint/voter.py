"""Interface-tracking simulation of the one-dimensional two-opinion lattice.

The process starts from the step profile (ones on the left half line, zeros
from site 1 on) and every site copies, at rate 1, the current value of a
neighbour drawn from the step law.  Only the disagreement region is ever
stored: `InterfaceState` records the leftmost zero l, the rightmost one r,
the bit pattern on [l, r] and the running inversion count (number of pairs
a < b with value 0 at a and 1 at b).

Two law-identical engines are provided.  The window engine materializes
[l-1, r+1] and is the reference implementation; the sparse engine stores only
deviations from a two-sided profile and wins by orders of magnitude when the
step law has heavy tails (large windows, few actual disagreements).  The
`auto` setting picks one from the expected materialized-window load.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _voter_core as _core
from . import _voter_sparse as _sparse
from .kernels import Kernel, _alias_tables

HYBRID_CAP_DEFAULT = 2 ** 20
SPARSE_LOAD_THRESHOLD = 64.0


class CapExceeded(RuntimeError):
    """Raised when the disagreement region outgrows the configured cap."""

    def __init__(self, cap, time, left_zero, right_one):
        super().__init__(
            f"hybrid zone exceeded cap ({cap}): size "
            f"{right_one - left_zero + 1} at time {time:.6g}"
        )
        self.cap = cap
        self.time = time
        self.left_zero = left_zero
        self.right_one = right_one


@dataclass
class InterfaceState:
    """Snapshot of the disagreement region at a fixed time.

    `inversion_count` of None means "recount from the bit pattern"; engines
    pass their incrementally maintained count when tracking is on.
    """

    time: float
    left_zero: int
    right_one: int
    hybrid: np.ndarray = field(default_factory=lambda: np.zeros(0, np.uint8))
    inversion_count: int | None = None

    def __post_init__(self):
        self.hybrid = np.asarray(self.hybrid, dtype=np.uint8)
        l, r = self.left_zero, self.right_one
        if r < l:
            if r != l - 1:
                raise ValueError("sorted state must have right_one == left_zero - 1")
            if self.hybrid.size:
                raise ValueError("sorted state carries an empty hybrid pattern")
            if self.inversion_count:
                raise ValueError("sorted state has no inversions")
            self.inversion_count = 0
        else:
            if self.hybrid.size != r - l + 1:
                raise ValueError("hybrid pattern must cover [left_zero, right_one]")
            if self.hybrid[0] != 0:
                raise ValueError("left_zero must hold a zero")
            if self.hybrid[-1] != 1:
                raise ValueError("right_one must hold a one")
        if self.inversion_count is None:
            self.inversion_count = self.recount_inversions()

    @property
    def size(self) -> int:
        """Width of the disagreement region, 0 when fully sorted."""
        return max(self.right_one - self.left_zero + 1, 0)

    def value_at(self, x: int) -> int:
        if x < self.left_zero:
            return 1
        if x > self.right_one:
            return 0
        return int(self.hybrid[x - self.left_zero])

    def recount_inversions(self) -> int:
        """Recompute the inversion count from the bit pattern (validation)."""
        if not self.hybrid.size:
            return 0
        # ones strictly to the right of each position, summed over the zeros
        ones_after = np.cumsum(self.hybrid[::-1].astype(np.int64))[::-1]
        ones_after = np.concatenate([ones_after[1:], [0]])
        return int(ones_after[self.hybrid == 0].sum())


def init_heavyside() -> InterfaceState:
    """Step initial profile: ones at sites <= 0, zeros from site 1 on."""
    return InterfaceState(time=0.0, left_zero=1, right_one=0)


def interface_stats(state: InterfaceState) -> dict:
    return {
        "time": state.time,
        "left_zero": state.left_zero,
        "right_one": state.right_one,
        "size": state.size,
        "inversions": state.inversion_count,
    }


def expected_window_load(kernel: Kernel) -> float:
    """Expected number of materialized window sites per unit width of the
    exterior, 2 * sum_d min(1, TT(d)).  Small for thin tails, huge for
    heavy ones; drives the auto engine choice."""
    load = 0.0
    for table in (kernel.dtail_pos, kernel.dtail_neg):
        for d in range(1, table.size):
            load += min(1.0, table[d])
    return load


def select_engine(kernel: Kernel) -> str:
    return "sparse" if expected_window_load(kernel) > SPARSE_LOAD_THRESHOLD else "window"


def _tables(kernel: Kernel):
    return (
        kernel.sites, kernel.masses, kernel.cdf,
        kernel.tail_pos, kernel.tail_neg, kernel.dtail_pos, kernel.dtail_neg,
        kernel.alias_cut, kernel.alias_idx,
    )


def _far_step_tables(kernel: Kernel):
    """Alias tables for the step law conditioned on |z| > REFINE_W, plus the
    conditioning mass.  Zero-size tables when the kernel has no such steps."""
    far = np.abs(kernel.sites) > _sparse.REFINE_W
    sites = kernel.sites[far]
    mass = float(kernel.masses[far].sum())
    if sites.size == 0 or mass <= 0.0:
        return (np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.float64),
                np.zeros(0, dtype=np.int64), 0.0)
    cut, idx = _alias_tables(kernel.masses[far] / mass)
    return sites, cut, idx, mass


class WindowEngine:
    """Materialized-window simulation handle; reusable across horizons."""

    def __init__(self, kernel: Kernel, state: InterfaceState,
                 track_inversions: bool = True,
                 hybrid_cap: int = HYBRID_CAP_DEFAULT):
        self.kernel = kernel
        self.track_inversions = bool(track_inversions)
        self.hybrid_cap = int(hybrid_cap)
        l, r = state.left_zero, state.right_one
        n = r - l + 3
        cap = max(64, 4 * n)
        off = (cap - n) // 2
        bits = np.empty(cap, dtype=np.uint8)
        w_lo = l - 1
        for i in range(n):
            x = w_lo + i
            bits[off + i] = state.value_at(x)
        self.bits = bits
        self.si = np.zeros(8, dtype=np.int64)
        self.si[_core.W_LO] = w_lo
        self.si[_core.N] = n
        self.si[_core.OFF] = off
        self.si[_core.L] = l
        self.si[_core.R] = r
        self.si[_core.B] = state.inversion_count
        self.sf = np.zeros(3, dtype=np.float64)
        self.sf[_core.T] = state.time
        _core._recompute(self.bits, self.si, self.sf, kernel.tail_pos,
                         kernel.tail_neg, kernel.dtail_pos, kernel.dtail_neg)

    def run(self, horizon: float, rng: np.random.Generator) -> None:
        self.bits = _core.evolve_window(
            self.bits, self.si, self.sf, *_tables(self.kernel),
            float(horizon), self.track_inversions, self.hybrid_cap, rng,
        )
        self._check_cap()

    def apply_copy(self, x: int, z: int) -> None:
        """Deterministically apply the event 'site x copies from x + z'."""
        k = self.kernel
        self.bits = _core.apply_copy(
            self.bits, self.si, self.sf,
            k.sites, k.masses, k.cdf, k.tail_pos, k.tail_neg,
            k.dtail_pos, k.dtail_neg,
            int(x), int(z), self.track_inversions, self.hybrid_cap,
        )
        self._check_cap()

    def rates(self) -> dict:
        """Current event-stream intensities (debug/validation hook)."""
        return {
            "window": float(self.si[_core.N]),
            "exterior_left": float(self.sf[_core.RL]),
            "exterior_right": float(self.sf[_core.RR]),
        }

    def _check_cap(self):
        if self.si[_core.STATUS] == _core.STATUS_CAP:
            raise CapExceeded(self.hybrid_cap, float(self.sf[_core.T]),
                              int(self.si[_core.L]), int(self.si[_core.R]))

    def state(self) -> InterfaceState:
        si, sf = self.si, self.sf
        l, r = int(si[_core.L]), int(si[_core.R])
        off = int(si[_core.OFF])
        w_lo = int(si[_core.W_LO])
        if r >= l:
            lo = off + (l - w_lo)
            hybrid = self.bits[lo:lo + (r - l + 1)].copy()
        else:
            hybrid = np.zeros(0, dtype=np.uint8)
        b = int(si[_core.B]) if self.track_inversions else None
        return InterfaceState(
            time=float(sf[_core.T]), left_zero=l, right_one=r,
            hybrid=hybrid, inversion_count=b,
        )


class SparseEngine:
    """Deviation-set simulation handle; same law as WindowEngine."""

    def __init__(self, kernel: Kernel, state: InterfaceState,
                 track_inversions: bool = True,
                 hybrid_cap: int = HYBRID_CAP_DEFAULT):
        self.kernel = kernel
        self.track_inversions = bool(track_inversions)
        self.hybrid_cap = int(hybrid_cap)
        l, r = state.left_zero, state.right_one
        m = (l + r) // 2 if r >= l else r
        zeros_list = []
        ones_list = []
        for x in range(l, r + 1):
            v = state.value_at(x)
            if x <= m and v == 0:
                zeros_list.append(x)
            elif x > m and v == 1:
                ones_list.append(x)
        nz, no = len(zeros_list), len(ones_list)
        zsite = np.empty(max(64, 2 * nz), dtype=np.int64)
        osite = np.empty(max(64, 2 * no), dtype=np.int64)
        zsite[:nz] = zeros_list
        osite[:no] = ones_list
        self.zsite = zsite
        self.osite = osite
        self.wz = np.empty(zsite.size, dtype=np.float64)
        self.rz = np.empty(zsite.size, dtype=np.float64)
        self.wo = np.empty(osite.size, dtype=np.float64)
        self.ro = np.empty(osite.size, dtype=np.float64)
        self.zk, self.zv = _sparse._hgrow(zsite, nz)
        self.ok, self.ov = _sparse._hgrow(osite, no)
        self.si = np.zeros(11, dtype=np.int64)
        self.si[_sparse.M] = m
        self.si[_sparse.L] = l
        self.si[_sparse.R] = r
        self.si[_sparse.B] = state.inversion_count
        self.si[_sparse.NZ] = nz
        self.si[_sparse.NO] = no
        self.si[_sparse.DLAST] = nz + no
        self.sf = np.zeros(5, dtype=np.float64)
        self.sf[_sparse.T] = state.time
        # per-class event tallies, see _voter_sparse.C_* for the layout
        self.counters = np.zeros(_sparse.N_COUNTERS, dtype=np.int64)
        self._pw = _sparse._step_window(kernel.sites, kernel.masses,
                                        _sparse.REFINE_W)
        ft = _far_step_tables(kernel)
        self._ft_sites, self._ft_cut, self._ft_idx, self._rint = ft
        _sparse._rebuild_partition(
            self.zsite, self.wz, self.rz, self.zk, self.zv,
            self.osite, self.wo, self.ro, self.ok, self.ov,
            self.si, self.sf, kernel.tail_pos, kernel.tail_neg,
            self._pw, _sparse.REFINE_W,
        )

    def run(self, horizon: float, rng: np.random.Generator) -> None:
        out = _sparse.evolve_sparse(
            self.zsite, self.wz, self.rz, self.zk, self.zv,
            self.osite, self.wo, self.ro, self.ok, self.ov,
            self.si, self.sf, *_tables(self.kernel),
            self._ft_sites, self._ft_cut, self._ft_idx, self._rint,
            float(horizon), self.track_inversions, self.hybrid_cap,
            self.counters, rng,
        )
        (self.zsite, self.wz, self.rz, self.zk, self.zv,
         self.osite, self.wo, self.ro, self.ok, self.ov) = out
        if self.si[_sparse.STATUS] == _core.STATUS_CAP:
            raise CapExceeded(self.hybrid_cap, float(self.sf[_sparse.T]),
                              int(self.si[_sparse.L]), int(self.si[_sparse.R]))

    def rates(self) -> dict:
        tt1p = self.kernel.dtail_pos[1] if self.kernel.dtail_pos.size > 1 else 0.0
        tt1n = self.kernel.dtail_neg[1] if self.kernel.dtail_neg.size > 1 else 0.0
        nzi = float(self.si[_sparse.NZ] - self.si[_sparse.ZP])
        noi = float(self.si[_sparse.NO] - self.si[_sparse.OP])
        return {
            "deviations": float(self.si[_sparse.NZ] + self.si[_sparse.NO]),
            "aggregate_left": float(self.sf[_sparse.RLZ]) + nzi * self._rint + tt1p,
            "aggregate_right": float(self.sf[_sparse.RRO]) + noi * self._rint + tt1n,
            "ring_zero": float(self.sf[_sparse.R1Z]) + nzi * self._rint,
            "ring_one": float(self.sf[_sparse.R1O]) + noi * self._rint,
        }

    def audit(self) -> float:
        """Max discrepancy between the live rate bookkeeping and an exact
        recomputation from the configuration.

        Checks every boundary-segment weight, the four rate sums, the
        site-to-index hash, and that every interior-segment entry really has
        a same-valued radius-W neighbourhood clear of the pivot.  Anything
        above float noise means the incremental updates drifted.
        """
        k = self.kernel
        return float(_sparse._audit_partition(
            self.zsite, self.wz, self.rz, self.zk, self.zv,
            self.osite, self.wo, self.ro, self.ok, self.ov,
            self.si, self.sf, k.tail_pos, k.tail_neg,
            self._pw, _sparse.REFINE_W, self._rint,
        ))

    def state(self) -> InterfaceState:
        si = self.si
        l, r = int(si[_sparse.L]), int(si[_sparse.R])
        m = int(si[_sparse.M])
        if r >= l:
            hybrid = np.zeros(r - l + 1, dtype=np.uint8)
            for x in range(l, min(m, r) + 1):
                hybrid[x - l] = 1
            for i in range(int(si[_sparse.NZ])):
                x = int(self.zsite[i])
                if l <= x <= r:
                    hybrid[x - l] = 0
            for i in range(int(si[_sparse.NO])):
                x = int(self.osite[i])
                if l <= x <= r:
                    hybrid[x - l] = 1
        else:
            hybrid = np.zeros(0, dtype=np.uint8)
        b = int(si[_sparse.B]) if self.track_inversions else None
        return InterfaceState(
            time=float(self.sf[_sparse.T]), left_zero=l, right_one=r,
            hybrid=hybrid, inversion_count=b,
        )


_ENGINES = {"window": WindowEngine, "sparse": SparseEngine}


def _make_engine(kernel, state, engine, track_inversions, hybrid_cap):
    name = select_engine(kernel) if engine == "auto" else engine
    if name not in _ENGINES:
        raise ValueError(f"unknown engine {engine!r}; use auto, window or sparse")
    return _ENGINES[name](kernel, state, track_inversions, hybrid_cap)


def run_voter(kernel: Kernel, state: InterfaceState, horizon: float,
              rng: np.random.Generator, engine: str = "auto",
              track_inversions: bool = True,
              hybrid_cap: int = HYBRID_CAP_DEFAULT) -> InterfaceState:
    """Evolve `state` until absolute time `horizon` and return the snapshot.

    Raises CapExceeded when the disagreement region outgrows `hybrid_cap`;
    the exception carries the abort time and boundary positions.
    """
    if horizon < state.time:
        raise ValueError("horizon lies before the state's current time")
    handle = _make_engine(kernel, state, engine, track_inversions, hybrid_cap)
    handle.run(float(horizon), rng)
    return handle.state()


def run_voter_snapshots(kernel: Kernel, state: InterfaceState, times,
                        rng: np.random.Generator, engine: str = "auto",
                        track_inversions: bool = True,
                        hybrid_cap: int = HYBRID_CAP_DEFAULT):
    """Evolve through an increasing list of absolute times, returning one
    snapshot per time.  A cap abort raises CapExceeded with the snapshots
    collected so far attached as `.completed`."""
    times = [float(t) for t in times]
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("snapshot times must be non-decreasing")
    if times and times[0] < state.time:
        raise ValueError("first snapshot lies before the state's current time")
    handle = _make_engine(kernel, state, engine, track_inversions, hybrid_cap)
    out = []
    for t in times:
        try:
            handle.run(t, rng)
        except CapExceeded as exc:
            exc.completed = out
            raise
        out.append(handle.state())
    return out
