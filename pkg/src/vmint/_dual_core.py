"""Jitted coalescing-walker system backing the dual-process estimators.

Walkers are identified by their index into a position array; a union-find
`parent` array records who merged into whom.  Occupancy is an open-addressing
hash of site -> live walker index, so each jump is O(1) regardless of how far
apart the walkers sit.  The system is a superposition of rate-1 clocks: a
global exponential at the live count, then a uniform pick.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from ._voter_core import _draw_step_alias
from ._voter_sparse import H_EMPTY, _hdel, _hfind, _hput


@njit(cache=True)
def _uf_find(parent, i):
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        nxt = parent[i]
        parent[i] = root
        i = nxt
    return root


@njit(cache=True)
def _evolve_system(pos, parent, t0, duration, sites, acut, aidx, rng,
                   log_t, log_a, log_s, nlog):
    """Evolve every live walker for `duration` starting at time t0.

    pos[i] is only meaningful while i is a union-find root.  A walker that
    jumps onto an occupied site is absorbed by the occupant (the survivor
    keeps the site) and the merge is appended to the log.  Returns the
    updated log length and the live count.
    """
    n = pos.size
    live = np.empty(n, dtype=np.int64)
    nl = 0
    for i in range(n):
        if _uf_find(parent, i) == i:
            live[nl] = i
            nl += 1
    cap = 128
    while cap < 4 * (nl + 1):
        cap *= 2
    hk = np.full(cap, H_EMPTY, dtype=np.int64)
    hv = np.empty(cap, dtype=np.int64)
    for j in range(nl):
        _hput(hk, hv, pos[live[j]], live[j])
    t = t0
    end = t0 + duration
    while nl > 0:
        dt = rng.exponential(1.0 / nl)
        if t + dt >= end:
            break
        t += dt
        j = np.int64(rng.random() * nl)
        if j >= nl:
            j = nl - 1
        i = live[j]
        s = pos[i]
        z = _draw_step_alias(sites, acut, aidx, rng)
        if z == 0:
            continue
        y = s + z
        slot = _hfind(hk, y)
        occ = hv[slot] if slot >= 0 else np.int64(-1)
        _hdel(hk, hv, s)
        if occ >= 0:
            parent[i] = occ
            log_t[nlog] = t
            log_a[nlog] = i
            log_s[nlog] = occ
            nlog += 1
            live[j] = live[nl - 1]
            nl -= 1
        else:
            pos[i] = y
            _hput(hk, hv, y, i)
    return nlog, nl


@njit(cache=True)
def _density_once(lo, n, horizon, core_lo, core_hi, sites, acut, aidx, rng):
    """Live walkers inside [core_lo, core_hi] after one replicate started
    from every site of [lo, lo + n)."""
    pos = np.empty(n, dtype=np.int64)
    parent = np.empty(n, dtype=np.int64)
    for i in range(n):
        pos[i] = lo + i
        parent[i] = i
    log_t = np.empty(n, dtype=np.float64)
    log_a = np.empty(n, dtype=np.int64)
    log_s = np.empty(n, dtype=np.int64)
    _evolve_system(pos, parent, 0.0, horizon, sites, acut, aidx, rng,
                   log_t, log_a, log_s, 0)
    cnt = 0
    for i in range(n):
        if _uf_find(parent, i) == i and core_lo <= pos[i] <= core_hi:
            cnt += 1
    return cnt


@njit(cache=True)
def _census_once(lo, n, split, horizon, sites, acut, aidx, rng,
                 wpos, zpos, fin_w, fin_z, coal):
    """One census replicate: walkers from every site of [lo, lo + n) evolve
    jointly to dual time `split`, the survivors are paired off in position
    order, and the same system then runs on to `horizon`.  Per-pair outputs
    land in the caller's arrays; returns the pair count."""
    pos = np.empty(n, dtype=np.int64)
    parent = np.empty(n, dtype=np.int64)
    for i in range(n):
        pos[i] = lo + i
        parent[i] = i
    log_t = np.empty(n, dtype=np.float64)
    log_a = np.empty(n, dtype=np.int64)
    log_s = np.empty(n, dtype=np.int64)
    nlog, nl = _evolve_system(pos, parent, 0.0, split, sites, acut, aidx,
                              rng, log_t, log_a, log_s, 0)
    surv = np.empty(nl, dtype=np.int64)
    spos = np.empty(nl, dtype=np.int64)
    c = 0
    for i in range(n):
        if _uf_find(parent, i) == i:
            surv[c] = i
            spos[c] = pos[i]
            c += 1
    order = np.argsort(spos)
    if horizon > split:
        _evolve_system(pos, parent, split, horizon - split, sites, acut,
                       aidx, rng, log_t, log_a, log_s, nlog)
    npairs = nl - 1 if nl > 1 else 0
    for q in range(npairs):
        i1 = surv[order[q]]
        i2 = surv[order[q + 1]]
        r1 = _uf_find(parent, i1)
        r2 = _uf_find(parent, i2)
        wpos[q] = spos[order[q]]
        zpos[q] = spos[order[q + 1]]
        fin_w[q] = pos[r1]
        fin_z[q] = pos[r2]
        coal[q] = r1 == r2
    return npairs
