"""Jitted one-replicate cores for the named experiments.

Each function simulates exactly one replicate and draws only from the
Generator it is handed, so the caller decides stream identity per
replicate.  Hitting-order events run on the embedded jump chain; the
excursion and occupation cores advance the continuous rate-2 clock
explicitly because durations enter their events.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from vmint._voter_core import _draw_step_alias


@njit(cache=True)
def _cross_below_once(start, n_jumps, sites, acut, aidx, rng):
    """1 if the chain sits strictly below 0 after n_jumps embedded steps
    without ever landing on 0 along the way, else 0."""
    pos = np.int64(start)
    for _ in range(n_jumps):
        pos += _draw_step_alias(sites, acut, aidx, rng)
        if pos == 0:
            return np.int8(0)
    if pos < 0:
        return np.int8(1)
    return np.int8(0)


@njit(cache=True)
def _exit_interval_once(start, hi, cap, sites, acut, aidx, rng):
    """Embedded chain from start until it leaves the open interval (0, hi).

    Returns (final position, steps used); steps = -1 when the cap fires,
    in which case the final position is the capped, unabsorbed one."""
    pos = np.int64(start)
    for s in range(cap):
        pos += _draw_step_alias(sites, acut, aidx, rng)
        if pos <= 0 or pos >= hi:
            return pos, np.int64(s + 1)
    return pos, np.int64(-1)


@njit(cache=True)
def _dyadic_two_stage_once(start, hi1, hi2, cap, sites, acut, aidx, rng):
    """Exit (0, hi1) to the right, then hit (-inf, 0] before leaving (0, hi2).

    Returns 1 on the event, 0 on failure, -1 when a stage hit the cap.
    A first-stage landing at or beyond hi2 already resolves the second
    stage (the larger interval was left on the same jump), so it fails."""
    pos, steps = _exit_interval_once(start, hi1, cap, sites, acut, aidx, rng)
    if steps < 0:
        return np.int8(-1)
    if pos <= 0 or pos >= hi2:
        return np.int8(0)
    pos, steps = _exit_interval_once(pos, hi2, cap, sites, acut, aidx, rng)
    if steps < 0:
        return np.int8(-1)
    if pos <= 0:
        return np.int8(1)
    return np.int8(0)


@njit(cache=True)
def _fall_below_once(start, cap, sites, acut, aidx, rng):
    """Run from start > 0 until the chain lands at or below 0; returns
    (|landing position|, 1), or (0.0, 0) when the step cap fires first."""
    pos = np.int64(start)
    for _ in range(cap):
        pos += _draw_step_alias(sites, acut, aidx, rng)
        if pos <= 0:
            return np.float64(-pos), np.int8(1)
    return 0.0, np.int8(0)


@njit(cache=True)
def _pair_far_once(k, n_jumps, level, sites, acut, aidx, rng):
    """Two independent rate-1 walkers from 0 and k, advanced through
    n_jumps superposed events (a fair coin picks the mover each event).

    Returns 0 once the walkers meet (at a jump; between jumps both stand
    still, so meetings only happen at jumps), else 1 + 2*far where far
    says some walker finished at or above `level`."""
    a = np.int64(0)
    b = np.int64(k)
    for _ in range(n_jumps):
        z = _draw_step_alias(sites, acut, aidx, rng)
        if rng.random() < 0.5:
            a += z
        else:
            b += z
        if a == b:
            return np.int8(0)
    if np.float64(a) >= level or np.float64(b) >= level:
        return np.int8(3)
    return np.int8(1)


@njit(cache=True)
def _excursion_once(level, reach_window, t, sites, acut, aidx, rng):
    """Rate-2 walk from 0 watched on [0, 2t].

    Detects (a) a departure from 0 at some time s1 <= t/2 whose excursion
    keeps the walk away from 0 for at least 3t/2, and (b) given (a),
    whether that excursion first lands on `level` by s1 + reach_window and
    then stays away from 0 for a further t beyond that landing.  Both are
    decidable inside the 2t horizon because reach_window < t/2 is enforced
    by the caller.  Returns e1 + 2*cond."""
    horizon = 2.0 * t
    half = 0.5 * t
    need = 1.5 * t
    pos = np.int64(0)
    now = 0.0
    in_exc = False
    cand = False
    start = 0.0
    visit = -1.0
    e1 = False
    cond = False
    while True:
        now += -np.log1p(-rng.random()) * 0.5
        if now >= horizon:
            break
        was_zero = pos == 0
        pos += _draw_step_alias(sites, acut, aidx, rng)
        if was_zero:
            in_exc = True
            cand = now <= half
            start = now
            visit = -1.0
        if in_exc and visit < 0.0 and pos == level:
            visit = now
        if not was_zero and pos == 0:
            if in_exc and cand and now - start >= need:
                e1 = True
                if visit >= 0.0 and visit <= start + reach_window and now > visit + t:
                    cond = True
            in_exc = False
    if in_exc and cand and horizon - start >= need:
        # still away from 0 at the horizon; the true end lies beyond it
        e1 = True
        if visit >= 0.0 and visit <= start + reach_window and horizon >= visit + t:
            cond = True
    out = np.int8(0)
    if e1:
        out += np.int8(1)
    if cond:
        out += np.int8(2)
    return out


@njit(cache=True)
def _occupation_once(start, site, hi, cap, sites, acut, aidx, rng):
    """Continuous time the rate-2 chain spends at `site` before leaving
    (0, hi), from `start`.  Returns (time, 1), or (partial time, 0) at cap."""
    pos = np.int64(start)
    acc = 0.0
    for _ in range(cap):
        if pos == site:
            acc += -np.log1p(-rng.random()) * 0.5
        pos += _draw_step_alias(sites, acut, aidx, rng)
        if pos <= 0 or pos >= hi:
            return acc, np.int8(1)
    return acc, np.int8(0)


@njit(cache=True)
def _lands_on_before_exit_once(start, site, hi, cap, sites, acut, aidx, rng):
    """1 if the chain from `start` lands on `site` before leaving (0, hi),
    0 if it exits first, -1 at the cap.  The starting position itself does
    not count as a landing, which is what the return-time question needs."""
    pos = np.int64(start)
    for _ in range(cap):
        pos += _draw_step_alias(sites, acut, aidx, rng)
        if pos <= 0 or pos >= hi:
            return np.int8(0)
        if pos == site:
            return np.int8(1)
    return np.int8(-1)


@njit(cache=True)
def _bounded_walk_once(n_jumps, bound, sites, acut, aidx, rng):
    """Walk n_jumps embedded steps from 0; returns (final position, 1 if
    |position| stayed strictly below `bound` the whole way)."""
    pos = np.int64(0)
    ok = np.int8(1)
    for _ in range(n_jumps):
        pos += _draw_step_alias(sites, acut, aidx, rng)
        if pos >= bound or -pos >= bound:
            ok = np.int8(0)
    return pos, ok
