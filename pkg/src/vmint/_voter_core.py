"""Jitted event loop for the materialized-window voter engine.

Representation invariant: the window covers exactly [l-1, r+1] where l is the
leftmost zero and r the rightmost one; everything left of the window is
unanimously 1, everything right of it unanimously 0.  Window sites carry
their own rate-1 ring clocks; flips of exterior sites are generated by two
aggregate streams whose exact rates come from one-sided tail sums T(m) and
double tails TT(m) of the step law.

State is carried in two small arrays so the jitted functions can mutate it:
si (int64): W_LO, N, OFF, L, R, B, ONES, STATUS
sf (float64): T, RL, RR
bits is a uint8 buffer holding the window at bits[OFF : OFF+N].
"""

from __future__ import annotations

import numpy as np
from numba import njit

W_LO, N, OFF, L, R, B, ONES, STATUS = 0, 1, 2, 3, 4, 5, 6, 7
T, RL, RR = 0, 1, 2

STATUS_OK = 0
STATUS_CAP = 1


@njit(cache=True, inline="always")
def _tail(table, idx):
    if idx >= table.size:
        return 0.0
    return table[idx]


@njit(cache=True, inline="always")
def _draw_step(sites, cdf, rng):
    u = rng.random()
    k = np.searchsorted(cdf, u, side="right")
    if k >= sites.size:
        k = sites.size - 1
    return sites[k]


@njit(cache=True, inline="always")
def _draw_step_alias(sites, acut, aidx, rng):
    """O(1) draw via Walker alias tables; avoids the cdf binary search."""
    u = rng.random() * sites.size
    i = np.int64(u)
    if i >= sites.size:
        i = sites.size - 1
    if u - i < acut[i]:
        return sites[i]
    return sites[aidx[i]]


@njit(cache=True, inline="always")
def _draw_step_tail(sites, cdf, tail_p, m, rng):
    """Draw z from p conditioned on z >= m (m >= 1, positive tail mass)."""
    tm = _tail(tail_p, m)
    u2 = (1.0 - tm) + rng.random() * tm
    if u2 >= 1.0:
        u2 = 0.9999999999999999
    k = np.searchsorted(cdf, u2, side="right")
    kmin = np.searchsorted(sites, m, side="left")
    if k < kmin:
        k = kmin  # float edge; clamp to the first admissible support site
    if k >= sites.size:
        k = sites.size - 1
    return sites[k]


@njit(cache=True)
def _recompute(bits, si, sf, tail_p, tail_n, dtail_p, dtail_n):
    """Full O(n) pass refreshing ONES and both aggregate exterior rates."""
    n = si[N]
    off = si[OFF]
    rl = _tail(dtail_p, n + 1)
    rr = _tail(dtail_n, n + 1)
    ones = 0
    for i in range(n):
        if bits[off + i]:
            ones += 1
            rr += _tail(tail_n, n - i)
        else:
            rl += _tail(tail_p, i + 1)
    si[ONES] = ones
    sf[RL] = rl
    sf[RR] = rr


@njit(cache=True)
def _resize(bits, si, sf, tail_p, tail_n, dtail_p, dtail_n, hybrid_cap):
    """Move the window to [L-1, R+1]; entering cells take the unanimous
    exterior value.  Returns the (possibly reallocated) buffer."""
    new_lo = si[L] - 1
    new_hi = si[R] + 1
    new_n = new_hi - new_lo + 1
    if new_n - 2 > hybrid_cap:
        si[STATUS] = STATUS_CAP
        return bits
    old_lo = si[W_LO]
    old_hi = old_lo + si[N] - 1
    off = si[OFF]
    new_off = off + (new_lo - old_lo)
    if new_off < 0 or new_off + new_n > bits.size:
        cap = bits.size
        while cap < new_n + 64:
            cap *= 2
        if cap < 4 * new_n:
            cap = 4 * new_n  # headroom so steady drift does not thrash
        fresh = np.empty(cap, dtype=np.uint8)
        mid = (cap - new_n) // 2
        lo_keep = max(new_lo, old_lo)
        hi_keep = min(new_hi, old_hi)
        for x in range(lo_keep, hi_keep + 1):
            fresh[mid + (x - new_lo)] = bits[off + (x - old_lo)]
        bits = fresh
        new_off = mid
    for x in range(new_lo, min(old_lo, new_hi + 1)):
        bits[new_off + (x - new_lo)] = 1
    for x in range(max(old_hi + 1, new_lo), new_hi + 1):
        bits[new_off + (x - new_lo)] = 0
    si[W_LO] = new_lo
    si[N] = new_n
    si[OFF] = new_off
    _recompute(bits, si, sf, tail_p, tail_n, dtail_p, dtail_n)
    return bits


@njit(cache=True)
def _window_flip(bits, si, sf, tail_p, tail_n, dtail_p, dtail_n, xi, v,
                 track_b, hybrid_cap):
    """Flip window index xi to value v (caller guarantees it differs)."""
    off = si[OFF]
    n = si[N]
    w_lo = si[W_LO]
    x = w_lo + xi
    if track_b:
        zeros_left = 0
        for i in range(xi):
            if bits[off + i] == 0:
                zeros_left += 1
        ones_right = 0
        for i in range(xi + 1, n):
            if bits[off + i] == 1:
                ones_right += 1
        if v == 0:
            si[B] += ones_right - zeros_left
        else:
            si[B] += zeros_left - ones_right
    bits[off + xi] = v
    if v == 0:
        si[ONES] -= 1
        sf[RL] += _tail(tail_p, xi + 1)
        sf[RR] -= _tail(tail_n, n - xi)
    else:
        si[ONES] += 1
        sf[RL] -= _tail(tail_p, xi + 1)
        sf[RR] += _tail(tail_n, n - xi)
    if sf[RL] < 0.0:
        sf[RL] = 0.0
    if sf[RR] < 0.0:
        sf[RR] = 0.0
    moved = False
    if v == 0:
        if x < si[L]:
            si[L] = x
            moved = True
        if x == si[R]:
            j = xi - 1
            while j >= 0 and bits[off + j] == 0:
                j -= 1
            si[R] = w_lo + j if j >= 0 else w_lo - 1
            moved = True
    else:
        if x > si[R]:
            si[R] = x
            moved = True
        if x == si[L]:
            j = xi + 1
            while j < n and bits[off + j] == 1:
                j += 1
            si[L] = w_lo + j if j < n else w_lo + n
            moved = True
    if moved:
        bits = _resize(bits, si, sf, tail_p, tail_n, dtail_p, dtail_n, hybrid_cap)
    return bits


@njit(cache=True)
def _apply_ext_left(bits, si, sf, tail_p, tail_n, dtail_p, dtail_n, x,
                    track_b, hybrid_cap):
    """An exterior-left site x < w_lo flips to 0 (it copied a zero)."""
    if track_b:
        si[B] += si[ONES] + (si[W_LO] - x - 1)
    si[L] = x
    bits = _resize(bits, si, sf, tail_p, tail_n, dtail_p, dtail_n, hybrid_cap)
    if si[STATUS] != STATUS_OK:
        return bits
    xi = x - si[W_LO]
    bits[si[OFF] + xi] = 0
    si[ONES] -= 1
    sf[RL] += _tail(tail_p, xi + 1)
    sf[RR] -= _tail(tail_n, si[N] - xi)
    return bits


@njit(cache=True)
def _apply_ext_right(bits, si, sf, tail_p, tail_n, dtail_p, dtail_n, x,
                     track_b, hybrid_cap):
    """An exterior-right site x > w_hi flips to 1 (it copied a one)."""
    if track_b:
        si[B] += (si[N] - si[ONES]) + (x - (si[W_LO] + si[N] - 1) - 1)
    si[R] = x
    bits = _resize(bits, si, sf, tail_p, tail_n, dtail_p, dtail_n, hybrid_cap)
    if si[STATUS] != STATUS_OK:
        return bits
    xi = x - si[W_LO]
    bits[si[OFF] + xi] = 1
    si[ONES] += 1
    sf[RL] -= _tail(tail_p, xi + 1)
    sf[RR] += _tail(tail_n, si[N] - xi)
    return bits


@njit(cache=True)
def _ext_left_event(bits, si, sf, sites, masses, cdf, tail_p, tail_n,
                    dtail_p, dtail_n, target, track_b, hybrid_cap, rng):
    """Resolve one aggregate-left event: pick the source zero (window zero or
    a zero beyond the right edge), then the exterior site that copies it."""
    off = si[OFF]
    n = si[N]
    w_lo = si[W_LO]
    acc = 0.0
    for i in range(n):
        if bits[off + i] == 0:
            w = _tail(tail_p, i + 1)
            if target < acc + w:
                z = _draw_step_tail(sites, cdf, tail_p, i + 1, rng)
                x = w_lo + i - z
                return _apply_ext_left(
                    bits, si, sf, tail_p, tail_n, dtail_p, dtail_n, x,
                    track_b, hybrid_cap,
                )
            acc += w
    # source beyond the right edge: weight of distance z is p(z) * (z - n)
    tt = _tail(dtail_p, n + 1)
    if tt <= 0.0:
        return bits  # aggregate drift artifact, treat as no-op
    tgt2 = rng.random() * tt
    acc2 = 0.0
    kstart = np.searchsorted(sites, n + 1, side="left")
    z = -1
    for k in range(kstart, sites.size):
        acc2 += masses[k] * (sites[k] - n)
        if tgt2 < acc2:
            z = sites[k]
            break
    if z < 0:
        z = sites[sites.size - 1]
        if z <= n:
            return bits
    span = z - n
    y = (w_lo + n) + int(rng.random() * span)  # uniform source beyond w_hi
    x = y - z
    return _apply_ext_left(
        bits, si, sf, tail_p, tail_n, dtail_p, dtail_n, x, track_b, hybrid_cap
    )


@njit(cache=True)
def _ext_right_event(bits, si, sf, sites, masses, cdf, tail_p, tail_n,
                     dtail_p, dtail_n, target, track_b, hybrid_cap, rng):
    off = si[OFF]
    n = si[N]
    w_lo = si[W_LO]
    acc = 0.0
    for i in range(n - 1, -1, -1):
        if bits[off + i] == 1:
            w = _tail(tail_n, n - i)
            if target < acc + w:
                # mirrored conditional draw: need z <= -(n - i)
                m = n - i
                tm = _tail(tail_n, m)
                u2 = rng.random() * tm
                k = np.searchsorted(cdf, u2, side="right")
                kmax = np.searchsorted(sites, -m, side="right") - 1
                if k > kmax:
                    k = kmax
                z = sites[k]
                x = w_lo + i - z
                return _apply_ext_right(
                    bits, si, sf, tail_p, tail_n, dtail_p, dtail_n, x,
                    track_b, hybrid_cap,
                )
            acc += w
    tt = _tail(dtail_n, n + 1)
    if tt <= 0.0:
        return bits
    tgt2 = rng.random() * tt
    acc2 = 0.0
    z = 1
    found = False
    kstart = np.searchsorted(sites, -(n + 1), side="right") - 1
    for k in range(kstart, -1, -1):
        zz = -sites[k]
        if zz <= n:
            continue  # defensive: distances below n+1 carry no block pairs
        acc2 += masses[k] * (zz - n)
        if tgt2 < acc2:
            z = zz
            found = True
            break
    if not found:
        zz = -sites[0]
        if zz <= n:
            return bits
        z = zz
    span = z - n
    y = (w_lo - 1) - int(rng.random() * span)  # uniform source left of w_lo
    x = y + z
    return _apply_ext_right(
        bits, si, sf, tail_p, tail_n, dtail_p, dtail_n, x, track_b, hybrid_cap
    )


@njit(cache=True)
def evolve_window(bits, si, sf, sites, masses, cdf, tail_p, tail_n,
                  dtail_p, dtail_n, acut, aidx, horizon, track_b,
                  hybrid_cap, rng):
    """Run the window engine until `horizon` (absolute time) or a cap abort.
    Returns the (possibly reallocated) bits buffer."""
    while si[STATUS] == STATUS_OK:
        n = si[N]
        lam = n + sf[RL] + sf[RR]
        dt = rng.exponential(1.0 / lam)
        if sf[T] + dt >= horizon:
            sf[T] = horizon
            break
        sf[T] += dt
        u = rng.random() * lam
        if u < n:
            xi = int(u)
            if xi >= n:
                xi = n - 1
            z = _draw_step_alias(sites, acut, aidx, rng)
            yi = xi + z
            off = si[OFF]
            if yi < 0:
                v = np.uint8(1)
            elif yi >= n:
                v = np.uint8(0)
            else:
                v = bits[off + yi]
            if v != bits[off + xi]:
                bits = _window_flip(
                    bits, si, sf, tail_p, tail_n, dtail_p, dtail_n, xi, v,
                    track_b, hybrid_cap,
                )
        elif u < n + sf[RL]:
            bits = _ext_left_event(
                bits, si, sf, sites, masses, cdf, tail_p, tail_n, dtail_p,
                dtail_n, u - n, track_b, hybrid_cap, rng,
            )
        else:
            bits = _ext_right_event(
                bits, si, sf, sites, masses, cdf, tail_p, tail_n, dtail_p,
                dtail_n, u - n - sf[RL], track_b, hybrid_cap, rng,
            )
    return bits


@njit(cache=True)
def apply_copy(bits, si, sf, sites, masses, cdf, tail_p, tail_n, dtail_p,
               dtail_n, x, z, track_b, hybrid_cap):
    """Replay hook: site x copies the value at x + z.  Used by tests to drive
    the window representation with an externally generated event list."""
    off = si[OFF]
    n = si[N]
    w_lo = si[W_LO]
    y = x + z
    yi = y - w_lo
    if yi < 0:
        v = np.uint8(1)
    elif yi >= n:
        v = np.uint8(0)
    else:
        v = bits[off + yi]
    xi = x - w_lo
    if 0 <= xi < n:
        if v != bits[off + xi]:
            bits = _window_flip(
                bits, si, sf, tail_p, tail_n, dtail_p, dtail_n, xi, v,
                track_b, hybrid_cap,
            )
    elif xi < 0:
        if v == 0:
            bits = _apply_ext_left(
                bits, si, sf, tail_p, tail_n, dtail_p, dtail_n, x, track_b,
                hybrid_cap,
            )
    else:
        if v == 1:
            bits = _apply_ext_right(
                bits, si, sf, tail_p, tail_n, dtail_p, dtail_n, x, track_b,
                hybrid_cap,
            )
    return bits
