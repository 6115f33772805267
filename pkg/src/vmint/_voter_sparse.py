"""Jitted event loop for the sparse deviation-set voter engine.

Instead of materializing the hybrid window this engine stores only the sites
that deviate from a two-sided reference profile (all ones up to a pivot m,
all zeros after it): `zsite` holds the sites <= m currently at 0, `osite`
the sites > m currently at 1.  Flips of conforming sites are generated by
two aggregate streams, deviation flips by two ring streams; all four rates
are exact majorants thinned per event, so the generated law is identical to
the full construction.

The majorants are sharpened with local occupancy: a copy along a step of
size <= W whose source already agrees with the target is a no-op and is
excluded from the event rate up front instead of being sampled and
rejected.  Sites whose whole radius-W neighbourhood is same-valued (and
which sit at least W clear of the pivot) all share one exact ring rate
`rint` and one aggregate upper weight `rint`, so they live in an interior
segment that is sampled uniformly with no rejection at all; only the
boundary segment (sites near a differing value or near the pivot) carries
per-site weights.  Each array is packed as [0, p) boundary, [p, n)
interior, with an open-addressing hash of site -> packed index making every
flip O(W) with no sorted-order maintenance.

Interior membership is kept conservative: mutations eagerly demote the
interior sites they touch, while boundary sites that become interior again
are only reclaimed by the periodic repartition (every ~ndev/2 mutations).
A boundary entry with an interior-quality rate is still exact, so laziness
costs speed, never correctness.

State arrays:
si (int64): M, L, R, B, NZ, NO, STATUS, DLAST, ZP, OP, MUTC
sf (float64): T, RLZ, RRO, R1Z, R1O  (boundary-segment sums only;
  interior adds count * rint on top)
"""

from __future__ import annotations

import numpy as np
from numba import njit

from ._voter_core import STATUS_CAP, STATUS_OK, _draw_step_alias, _tail

M, L, R, B, NZ, NO, STATUS, DLAST, ZP, OP, MUTC = range(11)
T, RLZ, RRO, R1Z, R1O = 0, 1, 2, 3, 4

# event accounting slots, exposed on SparseEngine.counters
(C_RING_NOOP, C_HEAL, C_FLIP, C_SOURCE_THIN, C_TARGET_THIN,
 C_RING_PICK_REJ, C_RING_Z_REJ, C_AGG_PICK_REJ, C_AGG_Z_REJ) = range(9)
N_COUNTERS = 9

# occupancy-exclusion radius of the refined rates; any step law works with
# any W (terms beyond the kernel radius contribute zero mass)
REFINE_W = 8

H_EMPTY = np.int64(-(2 ** 62))

_U1 = np.uint64(1)
_U33 = np.uint64(33)
_MIX = np.uint64(0xFF51AFD7ED558CCD)
_MIX2 = np.uint64(0xC4CEB9FE1A85EC53)


@njit(cache=True, inline="always")
def _hmix(x):
    h = np.uint64(x)
    h ^= h >> _U33
    h *= _MIX
    h ^= h >> _U33
    h *= _MIX2
    h ^= h >> _U33
    return h


@njit(cache=True, inline="always")
def _hfind(hk, x):
    """Slot of key x, or -1 when absent."""
    mask = np.uint64(hk.size - 1)
    j = _hmix(x) & mask
    while True:
        k = hk[np.int64(j)]
        if k == x:
            return np.int64(j)
        if k == H_EMPTY:
            return np.int64(-1)
        j = (j + _U1) & mask


@njit(cache=True, inline="always")
def _hput(hk, hv, x, v):
    """Insert a key known to be absent; caller keeps the load below 1/2."""
    mask = np.uint64(hk.size - 1)
    j = _hmix(x) & mask
    while hk[np.int64(j)] != H_EMPTY:
        j = (j + _U1) & mask
    hk[np.int64(j)] = x
    hv[np.int64(j)] = v


@njit(cache=True)
def _hdel(hk, hv, x):
    """Delete key x, compacting the probe chain by backward shifting."""
    mask = np.uint64(hk.size - 1)
    j = _hmix(x) & mask
    while hk[np.int64(j)] != x:
        j = (j + _U1) & mask
    i = j
    while True:
        j = (j + _U1) & mask
        k = hk[np.int64(j)]
        if k == H_EMPTY:
            break
        home = _hmix(k) & mask
        if ((j - home) & mask) >= ((j - i) & mask):
            hk[np.int64(i)] = k
            hv[np.int64(i)] = hv[np.int64(j)]
            i = j
    hk[np.int64(i)] = H_EMPTY


@njit(cache=True)
def _hgrow(site, cnt):
    """Fresh hash of site[:cnt] with capacity 4x the count (power of two)."""
    cap = 128
    while cap < 4 * (cnt + 1):
        cap *= 2
    hk = np.full(cap, H_EMPTY, dtype=np.int64)
    hv = np.empty(cap, dtype=np.int64)
    for i in range(cnt):
        _hput(hk, hv, site[i], i)
    return hk, hv


@njit(cache=True)
def _grow_i64(arr, cnt):
    grown = np.empty(2 * arr.size, dtype=np.int64)
    grown[:cnt] = arr[:cnt]
    return grown


@njit(cache=True)
def _grow_f64(arr, cnt):
    grown = np.empty(2 * arr.size, dtype=np.float64)
    grown[:cnt] = arr[:cnt]
    return grown


@njit(cache=True, inline="always")
def _eta(zk, ok, m, x):
    """Configuration value at x: deviations override the two-sided profile."""
    if x <= m:
        return 0 if _hfind(zk, x) >= 0 else 1
    return 1 if _hfind(ok, x) >= 0 else 0


@njit(cache=True, inline="always")
def _gtp(tail_p, tail_n, j):
    """Mass of steps z >= j, any integer j."""
    if j >= 1:
        return _tail(tail_p, j)
    return 1.0 - _tail(tail_n, 1 - j)


@njit(cache=True, inline="always")
def _gtn(tail_p, tail_n, j):
    """Mass of steps z <= -j, any integer j."""
    if j >= 1:
        return _tail(tail_n, j)
    return 1.0 - _tail(tail_p, 1 - j)


@njit(cache=True, inline="always")
def _draw_step_geq(sites, cdf, tail_p, tail_n, acut, aidx, mlow, rng):
    """Draw z from the step law conditioned on z >= mlow."""
    t = _gtp(tail_p, tail_n, mlow)
    if t >= 0.25:
        # plentiful tail: rejection off the O(1) alias draw beats the
        # binary search, expected < 4 attempts
        while True:
            z = _draw_step_alias(sites, acut, aidx, rng)
            if z >= mlow:
                return z
    u2 = (1.0 - t) + rng.random() * t
    if u2 >= 1.0:
        u2 = 0.9999999999999999
    k = np.searchsorted(cdf, u2, side="right")
    kmin = np.searchsorted(sites, mlow, side="left")
    if k < kmin:
        k = kmin
    if k >= sites.size:
        k = sites.size - 1
    return sites[k]


@njit(cache=True, inline="always")
def _draw_step_leq(sites, cdf, tail_p, tail_n, acut, aidx, mhigh, rng):
    """Draw z from the step law conditioned on z <= mhigh."""
    t = _gtn(tail_p, tail_n, -mhigh)
    if t >= 0.25:
        while True:
            z = _draw_step_alias(sites, acut, aidx, rng)
            if z <= mhigh:
                return z
    u2 = rng.random() * t
    k = np.searchsorted(cdf, u2, side="right")
    kmax = np.searchsorted(sites, mhigh, side="right") - 1
    if k > kmax:
        k = kmax
    if k < 0:
        k = 0
    return sites[k]


@njit(cache=True, inline="always")
def _sample_tail_index(dtail, rng):
    """Sample j >= 1 with probability tail(j) / TT(1) via the double tail."""
    t1 = _tail(dtail, 1)
    target = t1 * (1.0 - rng.random())
    lo = 2
    hi = dtail.size  # conceptual index with _tail(dtail, size) == 0
    while lo < hi:
        mid = (lo + hi) // 2
        if _tail(dtail, mid) <= target:
            hi = mid
        else:
            lo = mid + 1
    return lo - 1


@njit(cache=True)
def _step_window(sites, masses, w):
    """Masses of the individual steps -w..w as a dense array (0 at index w)."""
    pw = np.zeros(2 * w + 1, dtype=np.float64)
    for d in range(-w, w + 1):
        if d == 0:
            continue
        k = np.searchsorted(sites, d)
        if k < sites.size and sites[k] == d:
            pw[d + w] = masses[k]
    return pw


@njit(cache=True, inline="always")
def _interior_zero(zk, ok, m, s, w):
    """True when every site within w of s is zero and s is w clear of m."""
    if s > m - w:
        return False
    for d in range(1, w + 1):
        if _hfind(zk, s - d) < 0 or _hfind(zk, s + d) < 0:
            return False
    return True


@njit(cache=True, inline="always")
def _interior_one(zk, ok, m, s, w):
    if s < m + 1 + w:
        return False
    for d in range(1, w + 1):
        if _hfind(ok, s - d) < 0 or _hfind(ok, s + d) < 0:
            return False
    return True


@njit(cache=True)
def _boundary_rates_zero(zk, ok, m, s, w, pw, tail_p, tail_n):
    """Exact refined (aggregate weight, ring rate) of a deviant zero."""
    wgt = _gtp(tail_p, tail_n, s - m)
    rr = 1.0
    for d in range(-w, w + 1):
        if d == 0:
            continue
        x2 = s + d
        if _eta(zk, ok, m, x2) == 0:
            rr -= pw[d + w]
            if x2 <= m:
                wgt -= pw[w - d]
    return wgt, rr


@njit(cache=True)
def _boundary_rates_one(zk, ok, m, s, w, pw, tail_p, tail_n):
    wgt = _gtn(tail_p, tail_n, m + 1 - s)
    rr = 1.0
    for d in range(-w, w + 1):
        if d == 0:
            continue
        x2 = s + d
        if _eta(zk, ok, m, x2) == 1:
            rr -= pw[d + w]
            if x2 >= m + 1:
                wgt -= pw[w - d]
    return wgt, rr


@njit(cache=True)
def _rebuild_partition(zsite, wz, rz, zk, zv, osite, wo, ro, ok, ov,
                       si, sf, tail_p, tail_n, pw, w):
    """Reclassify every deviation, repack the two segments, recompute the
    boundary weights and their sums, and rewrite the hash indices."""
    m = si[M]
    nz = si[NZ]
    i = 0
    p = nz
    while i < p:
        if _interior_zero(zk, ok, m, zsite[i], w):
            p -= 1
            tmp = zsite[i]
            zsite[i] = zsite[p]
            zsite[p] = tmp
        else:
            i += 1
    si[ZP] = p
    accw = 0.0
    accr = 0.0
    for i in range(p):
        wgt, rr = _boundary_rates_zero(zk, ok, m, zsite[i], w,
                                       pw, tail_p, tail_n)
        wz[i] = wgt
        rz[i] = rr
        accw += wgt
        accr += rr
    sf[RLZ] = accw
    sf[R1Z] = accr
    for i in range(nz):
        zv[_hfind(zk, zsite[i])] = i

    no = si[NO]
    i = 0
    p = no
    while i < p:
        if _interior_one(zk, ok, m, osite[i], w):
            p -= 1
            tmp = osite[i]
            osite[i] = osite[p]
            osite[p] = tmp
        else:
            i += 1
    si[OP] = p
    accw = 0.0
    accr = 0.0
    for i in range(p):
        wgt, rr = _boundary_rates_one(zk, ok, m, osite[i], w,
                                      pw, tail_p, tail_n)
        wo[i] = wgt
        ro[i] = rr
        accw += wgt
        accr += rr
    sf[RRO] = accw
    sf[R1O] = accr
    for i in range(no):
        ov[_hfind(ok, osite[i])] = i
    si[MUTC] = 0


@njit(cache=True)
def _audit_partition(zsite, wz, rz, zk, zv, osite, wo, ro, ok, ov,
                     si, sf, tail_p, tail_n, pw, w, rint):
    """Max discrepancy between live bookkeeping and exact recomputation.

    Returns a huge number when a structural invariant is broken: an interior
    entry that is not truly interior, or a hash index out of sync.
    """
    m = si[M]
    err = 0.0
    accw = 0.0
    accr = 0.0
    for i in range(si[NZ]):
        s = zsite[i]
        slot = _hfind(zk, s)
        if slot < 0 or zv[slot] != i:
            return 1e18
        if i < si[ZP]:
            wgt, rr = _boundary_rates_zero(zk, ok, m, s, w, pw,
                                           tail_p, tail_n)
            err = max(err, abs(wgt - wz[i]))
            err = max(err, abs(rr - rz[i]))
            accw += wgt
            accr += rr
        elif not _interior_zero(zk, ok, m, s, w):
            return 1e18
    err = max(err, abs(accw - sf[RLZ]))
    err = max(err, abs(accr - sf[R1Z]))
    accw = 0.0
    accr = 0.0
    for i in range(si[NO]):
        s = osite[i]
        slot = _hfind(ok, s)
        if slot < 0 or ov[slot] != i:
            return 1e18
        if i < si[OP]:
            wgt, rr = _boundary_rates_one(zk, ok, m, s, w, pw,
                                          tail_p, tail_n)
            err = max(err, abs(wgt - wo[i]))
            err = max(err, abs(rr - ro[i]))
            accw += wgt
            accr += rr
        elif not _interior_one(zk, ok, m, s, w):
            return 1e18
    err = max(err, abs(accw - sf[RRO]))
    err = max(err, abs(accr - sf[R1O]))
    return err


@njit(cache=True)
def _repivot(zsite, wz, rz, zk, zv, osite, wo, ro, ok, ov, si, sf,
             tail_p, tail_n, pw, w):
    """Move the pivot to the median deviation (clamped into the interface)
    and convert the sites between the old and new pivot.  Configuration, B,
    l, r are unchanged."""
    devs = si[NZ] + si[NO]
    if devs == 0:
        m_new = si[R] if si[R] >= si[L] - 1 else si[L] - 1
    else:
        allpos = np.empty(devs, dtype=np.int64)
        allpos[: si[NZ]] = zsite[: si[NZ]]
        allpos[si[NZ]:] = osite[: si[NO]]
        m_new = np.partition(allpos, devs // 2)[devs // 2]
        # keep the pivot inside the interface: a stray pivot turns the
        # conforming sea beyond l/r into phantom deviations
        if m_new > si[R]:
            m_new = si[R]
        if m_new < si[L] - 1:
            m_new = si[L] - 1
    m_old = si[M]
    if m_new > m_old:
        # profile flips 0 -> 1 on (m_old, m_new]: ones there turn conforming,
        # plain sites there become deviation zeros
        no = 0
        for i in range(si[NO]):
            if osite[i] > m_new:
                osite[no] = osite[i]
                no += 1
        si[NO] = no
        nz = si[NZ]
        for x in range(m_old + 1, m_new + 1):
            if _hfind(ok, x) < 0:
                if nz == zsite.size:
                    zsite = _grow_i64(zsite, nz)
                    wz = _grow_f64(wz, nz)
                    rz = _grow_f64(rz, nz)
                zsite[nz] = x
                nz += 1
        si[NZ] = nz
    elif m_new < m_old:
        nz = 0
        for i in range(si[NZ]):
            if zsite[i] <= m_new:
                zsite[nz] = zsite[i]
                nz += 1
        si[NZ] = nz
        no = si[NO]
        for x in range(m_new + 1, m_old + 1):
            if _hfind(zk, x) < 0:
                if no == osite.size:
                    osite = _grow_i64(osite, no)
                    wo = _grow_f64(wo, no)
                    ro = _grow_f64(ro, no)
                osite[no] = x
                no += 1
        si[NO] = no
    si[M] = m_new
    si[DLAST] = si[NZ] + si[NO]
    if wz.size < zsite.size:
        wz = np.empty(zsite.size, dtype=np.float64)
        rz = np.empty(zsite.size, dtype=np.float64)
    if wo.size < osite.size:
        wo = np.empty(osite.size, dtype=np.float64)
        ro = np.empty(osite.size, dtype=np.float64)
    zk, zv = _hgrow(zsite, si[NZ])
    ok, ov = _hgrow(osite, si[NO])
    _rebuild_partition(zsite, wz, rz, zk, zv, osite, wo, ro, ok, ov,
                       si, sf, tail_p, tail_n, pw, w)
    return zsite, wz, rz, zk, zv, osite, wo, ro, ok, ov


@njit(cache=True)
def _maybe_repivot(zsite, wz, rz, zk, zv, osite, wo, ro, ok, ov, si, sf,
                   tail_p, tail_n, pw, w):
    if (si[NZ] + si[NO] > 2 * si[DLAST] + 16
            or si[M] > si[R] + 64 or si[M] < si[L] - 64):
        return _repivot(zsite, wz, rz, zk, zv, osite, wo, ro, ok, ov,
                        si, sf, tail_p, tail_n, pw, w)
    return zsite, wz, rz, zk, zv, osite, wo, ro, ok, ov


@njit(cache=True, inline="always")
def _rank_below(site, cnt, y):
    """Number of stored sites strictly left of y (unsorted linear count)."""
    r = 0
    for i in range(cnt):
        if site[i] < y:
            r += 1
    return r


@njit(cache=True)
def _flip_to_zero(zsite, wz, rz, zk, zv, osite, wo, ro, ok, ov, si, sf,
                  tail_p, tail_n, pw, w, rint, y, track_b, hybrid_cap):
    """Site y <= pivot, currently conforming-1, flips to 0."""
    m = si[M]
    si[MUTC] += 1
    if track_b:
        rank = _rank_below(zsite, si[NZ], y)
        ones_right = si[NO] + (m - y) - (si[NZ] - rank)
        si[B] += ones_right - rank
    if si[NZ] == zsite.size:
        zsite = _grow_i64(zsite, si[NZ])
        wz = _grow_f64(wz, si[NZ])
        rz = _grow_f64(rz, si[NZ])
    if 2 * (si[NZ] + 2) > zk.size:
        zk, zv = _hgrow(zsite, si[NZ])
    # own refined rates plus neighbour adjustments for eta(y): 1 -> 0;
    # same-side neighbours of a fresh flip can never be interior (their
    # neighbourhood contained the old one at y), so adjusting stored
    # weights directly is safe, and likewise for the cross side
    wgt = _gtp(tail_p, tail_n, y - m)
    rr = 1.0
    interior = y <= m - w
    for d in range(-w, w + 1):
        if d == 0:
            continue
        x2 = y + d
        if x2 <= m:
            slot = _hfind(zk, x2)
            if slot >= 0:
                rr -= pw[d + w]
                wgt -= pw[w - d]
                j = zv[slot]
                rz[j] -= pw[w - d]
                wz[j] -= pw[d + w]
                sf[R1Z] -= pw[w - d]
                sf[RLZ] -= pw[d + w]
            else:
                interior = False
        else:
            interior = False
            slot = _hfind(ok, x2)
            if slot >= 0:
                j = ov[slot]
                ro[j] += pw[w - d]
                sf[R1O] += pw[w - d]
            else:
                rr -= pw[d + w]
    n = si[NZ]
    if interior:
        zsite[n] = y
        _hput(zk, zv, y, n)
    else:
        p = si[ZP]
        if p != n:
            moved = zsite[p]
            zsite[n] = moved
            zv[_hfind(zk, moved)] = n
        zsite[p] = y
        _hput(zk, zv, y, p)
        wz[p] = wgt
        rz[p] = rr
        sf[RLZ] += wgt
        sf[R1Z] += rr
        si[ZP] = p + 1
    si[NZ] = n + 1
    if y < si[L]:
        si[L] = y
    if y == si[R]:
        k = y - 1
        while _hfind(zk, k) >= 0:
            k -= 1
        si[R] = k
    if si[R] - si[L] + 1 > hybrid_cap:
        si[STATUS] = STATUS_CAP
        return zsite, wz, rz, zk, zv, osite, wo, ro, ok, ov
    return _maybe_repivot(zsite, wz, rz, zk, zv, osite, wo, ro, ok, ov,
                          si, sf, tail_p, tail_n, pw, w)


@njit(cache=True)
def _flip_to_one(zsite, wz, rz, zk, zv, osite, wo, ro, ok, ov, si, sf,
                 tail_p, tail_n, pw, w, rint, y, track_b, hybrid_cap):
    """Site y > pivot, currently conforming-0, flips to 1."""
    m = si[M]
    si[MUTC] += 1
    if track_b:
        rank = _rank_below(osite, si[NO], y)
        zeros_left = si[NZ] + (y - m - 1) - rank
        si[B] += zeros_left - (si[NO] - rank)
    if si[NO] == osite.size:
        osite = _grow_i64(osite, si[NO])
        wo = _grow_f64(wo, si[NO])
        ro = _grow_f64(ro, si[NO])
    if 2 * (si[NO] + 2) > ok.size:
        ok, ov = _hgrow(osite, si[NO])
    wgt = _gtn(tail_p, tail_n, m + 1 - y)
    rr = 1.0
    interior = y >= m + 1 + w
    for d in range(-w, w + 1):
        if d == 0:
            continue
        x2 = y + d
        if x2 >= m + 1:
            slot = _hfind(ok, x2)
            if slot >= 0:
                rr -= pw[d + w]
                wgt -= pw[w - d]
                j = ov[slot]
                ro[j] -= pw[w - d]
                wo[j] -= pw[d + w]
                sf[R1O] -= pw[w - d]
                sf[RRO] -= pw[d + w]
            else:
                interior = False
        else:
            interior = False
            slot = _hfind(zk, x2)
            if slot >= 0:
                j = zv[slot]
                rz[j] += pw[w - d]
                sf[R1Z] += pw[w - d]
            else:
                rr -= pw[d + w]
    n = si[NO]
    if interior:
        osite[n] = y
        _hput(ok, ov, y, n)
    else:
        p = si[OP]
        if p != n:
            moved = osite[p]
            osite[n] = moved
            ov[_hfind(ok, moved)] = n
        osite[p] = y
        _hput(ok, ov, y, p)
        wo[p] = wgt
        ro[p] = rr
        sf[RRO] += wgt
        sf[R1O] += rr
        si[OP] = p + 1
    si[NO] = n + 1
    if y > si[R]:
        si[R] = y
    if y == si[L]:
        k = y + 1
        while _hfind(ok, k) >= 0:
            k += 1
        si[L] = k
    if si[R] - si[L] + 1 > hybrid_cap:
        si[STATUS] = STATUS_CAP
        return zsite, wz, rz, zk, zv, osite, wo, ro, ok, ov
    return _maybe_repivot(zsite, wz, rz, zk, zv, osite, wo, ro, ok, ov,
                          si, sf, tail_p, tail_n, pw, w)


@njit(cache=True)
def _heal_zero(zsite, wz, rz, zk, zv, osite, wo, ro, ok, ov, si, sf,
               tail_p, tail_n, pw, w, rint, idx, track_b):
    """Deviation zero zsite[idx] flips to 1 (it copied a one)."""
    m = si[M]
    x = zsite[idx]
    si[MUTC] += 1
    if track_b:
        rank = _rank_below(zsite, si[NZ], x)
        ones_right = si[NO] + (m - x) - (si[NZ] - rank - 1)
        si[B] += rank - ones_right
    psw = 1.0 - rint
    p = si[ZP]
    n = si[NZ]
    _hdel(zk, zv, x)
    if idx < p:
        sf[RLZ] -= wz[idx]
        sf[R1Z] -= rz[idx]
        if idx != p - 1:
            moved = zsite[p - 1]
            zsite[idx] = moved
            wz[idx] = wz[p - 1]
            rz[idx] = rz[p - 1]
            zv[_hfind(zk, moved)] = idx
        if p - 1 != n - 1:
            moved = zsite[n - 1]
            zsite[p - 1] = moved
            zv[_hfind(zk, moved)] = p - 1
        si[ZP] = p - 1
    else:
        if idx != n - 1:
            moved = zsite[n - 1]
            zsite[idx] = moved
            zv[_hfind(zk, moved)] = idx
    si[NZ] = n - 1
    # neighbour adjustments for eta(x): 0 -> 1; interior same-side
    # neighbours stop being interior, so demote them first
    for d in range(-w, w + 1):
        if d == 0:
            continue
        x2 = x + d
        if x2 <= m:
            slot = _hfind(zk, x2)
            if slot >= 0:
                j = zv[slot]
                if j >= si[ZP]:
                    # materialize the exact pre-heal interior rates
                    pj = si[ZP]
                    sj = zsite[j]
                    if j != pj:
                        moved = zsite[pj]
                        zsite[j] = moved
                        zv[_hfind(zk, moved)] = j
                        zsite[pj] = sj
                        zv[slot] = pj
                    wz[pj] = _gtp(tail_p, tail_n, sj - m) - psw
                    rz[pj] = rint
                    sf[RLZ] += wz[pj]
                    sf[R1Z] += rint
                    si[ZP] = pj + 1
                    j = pj
                rz[j] += pw[w - d]
                wz[j] += pw[d + w]
                sf[R1Z] += pw[w - d]
                sf[RLZ] += pw[d + w]
        else:
            slot = _hfind(ok, x2)
            if slot >= 0:
                j = ov[slot]
                ro[j] -= pw[w - d]
                sf[R1O] -= pw[w - d]
    if sf[RLZ] < 0.0:
        sf[RLZ] = 0.0
    if sf[R1Z] < 0.0:
        sf[R1Z] = 0.0
    if x > si[R]:
        si[R] = x
    if x == si[L]:
        if si[NZ] > 0:
            lo = zsite[0]
            for i in range(1, si[NZ]):
                if zsite[i] < lo:
                    lo = zsite[i]
            si[L] = lo
        else:
            k = m + 1
            while _hfind(ok, k) >= 0:
                k += 1
            si[L] = k


@njit(cache=True)
def _heal_one(zsite, wz, rz, zk, zv, osite, wo, ro, ok, ov, si, sf,
              tail_p, tail_n, pw, w, rint, idx, track_b):
    """Deviation one osite[idx] flips to 0 (it copied a zero)."""
    m = si[M]
    x = osite[idx]
    si[MUTC] += 1
    if track_b:
        rank = _rank_below(osite, si[NO], x)
        zeros_left = si[NZ] + (x - m - 1) - rank
        si[B] += (si[NO] - rank - 1) - zeros_left
    psw = 1.0 - rint
    p = si[OP]
    n = si[NO]
    _hdel(ok, ov, x)
    if idx < p:
        sf[RRO] -= wo[idx]
        sf[R1O] -= ro[idx]
        if idx != p - 1:
            moved = osite[p - 1]
            osite[idx] = moved
            wo[idx] = wo[p - 1]
            ro[idx] = ro[p - 1]
            ov[_hfind(ok, moved)] = idx
        if p - 1 != n - 1:
            moved = osite[n - 1]
            osite[p - 1] = moved
            ov[_hfind(ok, moved)] = p - 1
        si[OP] = p - 1
    else:
        if idx != n - 1:
            moved = osite[n - 1]
            osite[idx] = moved
            ov[_hfind(ok, moved)] = idx
    si[NO] = n - 1
    for d in range(-w, w + 1):
        if d == 0:
            continue
        x2 = x + d
        if x2 >= m + 1:
            slot = _hfind(ok, x2)
            if slot >= 0:
                j = ov[slot]
                if j >= si[OP]:
                    pj = si[OP]
                    sj = osite[j]
                    if j != pj:
                        moved = osite[pj]
                        osite[j] = moved
                        ov[_hfind(ok, moved)] = j
                        osite[pj] = sj
                        ov[slot] = pj
                    wo[pj] = _gtn(tail_p, tail_n, m + 1 - sj) - psw
                    ro[pj] = rint
                    sf[RRO] += wo[pj]
                    sf[R1O] += rint
                    si[OP] = pj + 1
                    j = pj
                ro[j] += pw[w - d]
                wo[j] += pw[d + w]
                sf[R1O] += pw[w - d]
                sf[RRO] += pw[d + w]
        else:
            slot = _hfind(zk, x2)
            if slot >= 0:
                j = zv[slot]
                rz[j] -= pw[w - d]
                sf[R1Z] -= pw[w - d]
    if sf[RRO] < 0.0:
        sf[RRO] = 0.0
    if sf[R1O] < 0.0:
        sf[R1O] = 0.0
    if x < si[L]:
        si[L] = x
    if x == si[R]:
        if si[NO] > 0:
            hi = osite[0]
            for i in range(1, si[NO]):
                if osite[i] > hi:
                    hi = osite[i]
            si[R] = hi
        else:
            k = m
            while _hfind(zk, k) >= 0:
                k -= 1
            si[R] = k


@njit(cache=True)
def evolve_sparse(zsite, wz, rz, zk, zv, osite, wo, ro, ok, ov, si, sf,
                  sites, masses, cdf, tail_p, tail_n, dtail_p, dtail_n,
                  acut, aidx, ft_sites, ft_cut, ft_idx, rint,
                  horizon, track_b, hybrid_cap, counters, rng):
    """Run the sparse engine until `horizon` or a cap abort.  Returns the
    (possibly reallocated) deviation, weight and hash arrays.

    ft_sites/ft_cut/ft_idx alias-sample the step law conditioned on
    |z| > REFINE_W (the only steps an interior site can act along);
    rint = mass(|z| > REFINE_W) is the shared interior rate.

    With track_b off the stored inversion count is not maintained; callers
    recount from the bit pattern instead.  `counters` accumulates per-class
    event counts for load diagnostics.
    """
    w = REFINE_W
    pw = _step_window(sites, masses, w)
    psw = 1.0 - rint
    tt1p = _tail(dtail_p, 1)
    tt1n = _tail(dtail_n, 1)
    while si[STATUS] == STATUS_OK:
        if 2 * si[MUTC] >= si[NZ] + si[NO] + 4096:
            # periodic repartition reclaims lazily demoted interior sites
            _rebuild_partition(zsite, wz, rz, zk, zv, osite, wo, ro, ok, ov,
                               si, sf, tail_p, tail_n, pw, w)
        nzi = si[NZ] - si[ZP]
        noi = si[NO] - si[OP]
        ringz = sf[R1Z] + nzi * rint
        ringo = sf[R1O] + noi * rint
        aggl = sf[RLZ] + nzi * rint + tt1p
        aggr = sf[RRO] + noi * rint + tt1n
        lam = ringz + ringo + aggl + aggr
        dt = rng.exponential(1.0 / lam)
        if sf[T] + dt >= horizon:
            sf[T] = horizon
            break
        sf[T] += dt
        u = rng.random() * lam
        if u < ringz:
            idx = np.int64(-1)
            if u < sf[R1Z]:
                if si[ZP] == 0:
                    continue  # guard against float drift in the rate sum
                tries = 64 * si[ZP] + 1024
                while tries > 0:
                    f = rng.random() * si[ZP]
                    cand = np.int64(f)
                    if cand >= si[ZP]:
                        cand = si[ZP] - 1
                    if f - cand < rz[cand]:
                        idx = cand
                        break
                    counters[C_RING_PICK_REJ] += 1
                    tries -= 1
                if idx < 0:
                    _rebuild_partition(zsite, wz, rz, zk, zv,
                                       osite, wo, ro, ok, ov,
                                       si, sf, tail_p, tail_n, pw, w)
                    continue
                s = zsite[idx]
                heal = False
                for attempt in range(4096):
                    z = _draw_step_alias(sites, acut, aidx, rng)
                    if -w <= z <= w:
                        if _eta(zk, ok, si[M], s + z) == 0:
                            counters[C_RING_Z_REJ] += 1
                            continue
                        heal = True  # short step onto a differing value
                        break
                    heal = _eta(zk, ok, si[M], s + z) == 1
                    break
            else:
                if nzi == 0:
                    continue
                idx = si[ZP] + np.int64(rng.random() * nzi)
                if idx >= si[NZ]:
                    idx = si[NZ] - 1
                s = zsite[idx]
                # interior: every |z| <= w copy is a no-op by construction
                z = _draw_step_alias(ft_sites, ft_cut, ft_idx, rng)
                heal = _eta(zk, ok, si[M], s + z) == 1
            if heal:
                _heal_zero(zsite, wz, rz, zk, zv, osite, wo, ro, ok, ov,
                           si, sf, tail_p, tail_n, pw, w, rint, idx, track_b)
                counters[C_HEAL] += 1
            else:
                counters[C_RING_NOOP] += 1
        elif u < ringz + ringo:
            u2 = u - ringz
            idx = np.int64(-1)
            if u2 < sf[R1O]:
                if si[OP] == 0:
                    continue
                tries = 64 * si[OP] + 1024
                while tries > 0:
                    f = rng.random() * si[OP]
                    cand = np.int64(f)
                    if cand >= si[OP]:
                        cand = si[OP] - 1
                    if f - cand < ro[cand]:
                        idx = cand
                        break
                    counters[C_RING_PICK_REJ] += 1
                    tries -= 1
                if idx < 0:
                    _rebuild_partition(zsite, wz, rz, zk, zv,
                                       osite, wo, ro, ok, ov,
                                       si, sf, tail_p, tail_n, pw, w)
                    continue
                s = osite[idx]
                heal = False
                for attempt in range(4096):
                    z = _draw_step_alias(sites, acut, aidx, rng)
                    if -w <= z <= w:
                        if _eta(zk, ok, si[M], s + z) == 1:
                            counters[C_RING_Z_REJ] += 1
                            continue
                        heal = True
                        break
                    heal = _eta(zk, ok, si[M], s + z) == 0
                    break
            else:
                if noi == 0:
                    continue
                idx = si[OP] + np.int64(rng.random() * noi)
                if idx >= si[NO]:
                    idx = si[NO] - 1
                s = osite[idx]
                z = _draw_step_alias(ft_sites, ft_cut, ft_idx, rng)
                heal = _eta(zk, ok, si[M], s + z) == 0
            if heal:
                _heal_one(zsite, wz, rz, zk, zv, osite, wo, ro, ok, ov,
                          si, sf, tail_p, tail_n, pw, w, rint, idx, track_b)
                counters[C_HEAL] += 1
            else:
                counters[C_RING_NOOP] += 1
        elif u < ringz + ringo + aggl:
            m = si[M]
            u2 = u - ringz - ringo
            if u2 < sf[RLZ] and si[ZP] > 0:
                # boundary zero source, picked by its exact refined weight
                tries = 64 * si[ZP] + 1024
                idx = np.int64(-1)
                while tries > 0:
                    f = rng.random() * si[ZP]
                    cand = np.int64(f)
                    if cand >= si[ZP]:
                        cand = si[ZP] - 1
                    if f - cand < wz[cand]:
                        idx = cand
                        break
                    counters[C_AGG_PICK_REJ] += 1
                    tries -= 1
                if idx < 0:
                    _rebuild_partition(zsite, wz, rz, zk, zv,
                                       osite, wo, ro, ok, ov,
                                       si, sf, tail_p, tail_n, pw, w)
                    continue
                s = zsite[idx]
                y = np.int64(0)
                good = False
                for attempt in range(4096):
                    z = _draw_step_geq(sites, cdf, tail_p, tail_n,
                                       acut, aidx, s - m, rng)
                    y = s - z
                    if -w <= z <= w:
                        if _hfind(zk, y) >= 0:
                            counters[C_AGG_Z_REJ] += 1
                            continue
                        good = True  # short step: target known conforming
                        break
                    good = _hfind(zk, y) < 0
                    break
                if not good:
                    counters[C_TARGET_THIN] += 1
                    continue  # long-range target already zero: thin out
            elif u2 < sf[RLZ] + nzi * rint and nzi > 0:
                # interior zero source at upper weight rint; accept by the
                # exact weight gtp(s - m) - psw, then draw a tail step
                idx = si[ZP] + np.int64(rng.random() * nzi)
                if idx >= si[NZ]:
                    idx = si[NZ] - 1
                s = zsite[idx]
                if rng.random() * rint >= _gtp(tail_p, tail_n, s - m) - psw:
                    counters[C_AGG_PICK_REJ] += 1
                    continue
                good = False
                y = np.int64(0)
                for attempt in range(4096):
                    z = _draw_step_alias(ft_sites, ft_cut, ft_idx, rng)
                    if z >= s - m:
                        y = s - z
                        good = _hfind(zk, y) < 0
                        break
                    counters[C_AGG_Z_REJ] += 1
                if not good:
                    counters[C_TARGET_THIN] += 1
                    continue
            else:
                j = _sample_tail_index(dtail_p, rng)
                s = m + j
                if _hfind(ok, s) >= 0:
                    counters[C_SOURCE_THIN] += 1
                    continue  # virtual source is actually a one: thin out
                z = _draw_step_geq(sites, cdf, tail_p, tail_n,
                                   acut, aidx, s - m, rng)
                y = s - z
                if _hfind(zk, y) >= 0:
                    counters[C_TARGET_THIN] += 1
                    continue
            counters[C_FLIP] += 1
            out = _flip_to_zero(zsite, wz, rz, zk, zv, osite, wo, ro, ok, ov,
                                si, sf, tail_p, tail_n, pw, w, rint, y,
                                track_b, hybrid_cap)
            zsite, wz, rz, zk, zv, osite, wo, ro, ok, ov = out
        else:
            m = si[M]
            u2 = u - ringz - ringo - aggl
            if u2 < sf[RRO] and si[OP] > 0:
                tries = 64 * si[OP] + 1024
                idx = np.int64(-1)
                while tries > 0:
                    f = rng.random() * si[OP]
                    cand = np.int64(f)
                    if cand >= si[OP]:
                        cand = si[OP] - 1
                    if f - cand < wo[cand]:
                        idx = cand
                        break
                    counters[C_AGG_PICK_REJ] += 1
                    tries -= 1
                if idx < 0:
                    _rebuild_partition(zsite, wz, rz, zk, zv,
                                       osite, wo, ro, ok, ov,
                                       si, sf, tail_p, tail_n, pw, w)
                    continue
                s = osite[idx]
                y = np.int64(0)
                good = False
                for attempt in range(4096):
                    z = _draw_step_leq(sites, cdf, tail_p, tail_n,
                                       acut, aidx, s - m - 1, rng)
                    y = s - z
                    if -w <= z <= w:
                        if _hfind(ok, y) >= 0:
                            counters[C_AGG_Z_REJ] += 1
                            continue
                        good = True
                        break
                    good = _hfind(ok, y) < 0
                    break
                if not good:
                    counters[C_TARGET_THIN] += 1
                    continue
            elif u2 < sf[RRO] + noi * rint and noi > 0:
                idx = si[OP] + np.int64(rng.random() * noi)
                if idx >= si[NO]:
                    idx = si[NO] - 1
                s = osite[idx]
                if rng.random() * rint >= _gtn(tail_p, tail_n, m + 1 - s) - psw:
                    counters[C_AGG_PICK_REJ] += 1
                    continue
                good = False
                y = np.int64(0)
                for attempt in range(4096):
                    z = _draw_step_alias(ft_sites, ft_cut, ft_idx, rng)
                    if z <= s - m - 1:
                        y = s - z
                        good = _hfind(ok, y) < 0
                        break
                    counters[C_AGG_Z_REJ] += 1
                if not good:
                    counters[C_TARGET_THIN] += 1
                    continue
            else:
                j = _sample_tail_index(dtail_n, rng)
                s = m + 1 - j
                if _hfind(zk, s) >= 0:
                    counters[C_SOURCE_THIN] += 1
                    continue
                z = _draw_step_leq(sites, cdf, tail_p, tail_n,
                                   acut, aidx, s - m - 1, rng)
                y = s - z
                if _hfind(ok, y) >= 0:
                    counters[C_TARGET_THIN] += 1
                    continue
            counters[C_FLIP] += 1
            out = _flip_to_one(zsite, wz, rz, zk, zv, osite, wo, ro, ok, ov,
                               si, sf, tail_p, tail_n, pw, w, rint, y,
                               track_b, hybrid_cap)
            zsite, wz, rz, zk, zv, osite, wo, ro, ok, ov = out
    return zsite, wz, rz, zk, zv, osite, wo, ro, ok, ov
