"""Named, config-driven experiments over the walk, voter and dual layers.

Each entry point estimates one family of interface or walk events on a
parameter grid.  Verdicts only assert what finite data can support:
monotone trends, ratio bands and probability floors, checked through the
reported confidence intervals; no unverifiable constant is ever asserted.

Randomness contract: entry points take an integer `seed`, and every
replicate draws from its own child stream keyed by (seed, experiment tag,
replicate index).  Replicates are fanned over a thread pool in fixed
blocks, so worker count and scheduling can never change any number.
"""

from __future__ import annotations

import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from vmint import _exp_core
from vmint.kernels import (
    Kernel,
    KernelSpec,
    _alias_tables,
    build_kernel,
    split_at,
    symmetrize,
    tail_mass,
)
from vmint.report import (
    EstimateReport,
    binomial_report,
    mean_report,
    wilson_interval,
)
from vmint.rng import substream
from vmint.voter import (
    HYBRID_CAP_DEFAULT,
    CapExceeded,
    init_heavyside,
    run_voter_snapshots,
)
from vmint.walks import DEFAULT_STEP_CAP, EXACT_CEILING, exact_solve

MIN_REPS = 100
REPLICATE_BLOCK = 1024
FACTOR_REPS_DEFAULT = 10_000


class ReplicateError(RuntimeError):
    """A replicate failed; carries exactly what is needed to re-run it."""

    def __init__(self, tag: str, index: int, seed: int):
        super().__init__(
            f"replicate {index} of {tag!r} failed under master seed {seed}"
        )
        self.tag = tag
        self.index = index
        self.seed = seed


def _tag(name: str, **params) -> str:
    parts = [name] + [f"{key}={params[key]!r}" for key in sorted(params)]
    return "/".join(parts)


def _fan_reps(reps: int, workers: int, seed: int, tag: str, body) -> None:
    """Run body(i, rng) for every replicate index i.

    Streams depend on the index alone, and bodies write only to their own
    slot of preallocated arrays, so the thread pool is free to schedule
    blocks in any order without changing a single output bit.
    """

    def span(lo: int, hi: int) -> None:
        for i in range(lo, hi):
            rng = substream(seed, tag, i)
            try:
                body(i, rng)
            except ReplicateError:
                raise
            except Exception as exc:
                raise ReplicateError(tag, i, seed) from exc

    if workers <= 1 or reps <= REPLICATE_BLOCK:
        span(0, reps)
        return
    spans = [
        (lo, min(lo + REPLICATE_BLOCK, reps))
        for lo in range(0, reps, REPLICATE_BLOCK)
    ]
    with ThreadPoolExecutor(max_workers=int(workers)) as pool:
        for fut in [pool.submit(span, lo, hi) for lo, hi in spans]:
            fut.result()


def _alias(kernel: Kernel):
    return kernel.sites, kernel.alias_cut, kernel.alias_idx


def _power_alpha(kernel: Kernel) -> float | None:
    """Tail exponent parsed back from a power-law family tag, else None."""
    m = re.match(r"power_law\(([^,]+),", kernel.family)
    if m is None:
        return None
    return float(m.group(1))


# ---------------------------------------------------------------------------
# walk-event experiments


def exp_Vk(kernel, k: int, t: float, reps: int, seed: int,
           workers: int = 1) -> EstimateReport:
    """Signed crossing without meeting: the difference walk from k sits
    strictly below 0 at time t and never landed on 0 along the way.

    The `normalized` metadata entry is point/(k/sqrt(t)), the scale on
    which estimates are comparable across a (k, t) grid.  A unit-step
    kernel short-circuits to an exact 0: unit steps cannot pass the origin
    without landing on it.
    """
    if k < 1:
        raise ValueError("need k >= 1")
    if t <= 0:
        raise ValueError("need t > 0")
    diff = symmetrize(kernel)
    meta = dict(experiment="vk", k=int(k), t=float(t), seed=int(seed))
    if diff.radius == 1:
        return binomial_report(0, reps, structural_zero=True,
                               normalized=0.0, **meta)
    sites, acut, aidx = _alias(diff)
    hits = np.zeros(reps, dtype=np.int8)

    def body(i, rng):
        n = rng.poisson(2.0 * t)  # difference walk jumps at rate 2
        hits[i] = _exp_core._cross_below_once(k, n, sites, acut, aidx, rng)

    _fan_reps(reps, workers, seed, _tag("vk", k=k, t=t), body)
    succ = int((hits == 1).sum())
    norm = (succ / reps) / (k / math.sqrt(t))
    return binomial_report(succ, reps, normalized=norm, **meta)


def exp_Akr(kernel, k: int, r: int, reps: int, seed: int, workers: int = 1,
            step_cap: int = DEFAULT_STEP_CAP) -> EstimateReport:
    """Dyadic shell event for the difference walk from k: leave (0, k*2^r)
    to the right, then hit (-inf, 0] before leaving (0, k*2^(r+1)).

    Clock-free, so only the embedded chain runs.  `scaled` is 2^r times
    the point estimate, the quantity whose band is checked across r.
    """
    if k < 1:
        raise ValueError("need k >= 1")
    if r < 0:
        raise ValueError("need r >= 0")
    diff = symmetrize(kernel)
    sites, acut, aidx = _alias(diff)
    hi1 = k << r
    hi2 = hi1 << 1
    codes = np.zeros(reps, dtype=np.int8)

    def body(i, rng):
        codes[i] = _exp_core._dyadic_two_stage_once(
            k, hi1, hi2, step_cap, sites, acut, aidx, rng)

    _fan_reps(reps, workers, seed, _tag("akr", k=k, r=r), body)
    censored = int((codes == -1).sum())
    done = reps - censored
    if done == 0:
        raise RuntimeError("all replicates hit the step cap; raise step_cap")
    succ = int((codes == 1).sum())
    return binomial_report(
        succ, done, censored=censored, experiment="akr", k=int(k), r=int(r),
        scaled=(2 ** r) * succ / done, seed=int(seed))


def exp_overshoot(kernel, k: int, r: int, reps: int, seed: int,
                  workers: int = 1,
                  step_cap: int = DEFAULT_STEP_CAP) -> EstimateReport:
    """Landing depth below 0 and the wide-exit probability, from k.

    Point/CI: mean of |landing position| over first passages at or below 0
    that resolved within the cap (bootstrap CI); `depth_over_k` divides it
    by k.  Metadata also carries the exit-side event for the shell
    (0, k*2^r): P(exit position > 3*k*2^r/2), Wilson interval, and its
    2^r-scaled value, with its own censoring count under `exit_censored`.
    """
    if k < 1:
        raise ValueError("need k >= 1")
    if r < 0:
        raise ValueError("need r >= 0")
    diff = symmetrize(kernel)
    sites, acut, aidx = _alias(diff)
    hi1 = k << r
    wide = 1.5 * hi1
    depth = np.zeros(reps, dtype=np.float64)
    dok = np.zeros(reps, dtype=np.int8)
    exceed = np.zeros(reps, dtype=np.int8)
    tag = _tag("overshoot", k=k, r=r)

    def body(i, rng):
        depth[i], dok[i] = _exp_core._fall_below_once(
            k, step_cap, sites, acut, aidx, rng)
        pos, steps = _exp_core._exit_interval_once(
            k, hi1, step_cap, sites, acut, aidx, rng)
        if steps < 0:
            exceed[i] = -1
        elif pos > wide:
            exceed[i] = 1

    _fan_reps(reps, workers, seed, tag, body)
    censored = int((dok == 0).sum())
    if censored == reps:
        raise RuntimeError("all replicates hit the step cap; raise step_cap")
    exc_cens = int((exceed == -1).sum())
    exc_n = reps - exc_cens
    exc_succ = int((exceed == 1).sum())
    lo, hi = wilson_interval(exc_succ, exc_n)
    rep = mean_report(
        depth[dok == 1], substream(seed, tag + "/ci"), censored=censored,
        experiment="overshoot", k=int(k), r=int(r), seed=int(seed),
        exit_point=exc_succ / exc_n, exit_ci_low=lo, exit_ci_high=hi,
        exit_scaled=(2 ** r) * exc_succ / exc_n, exit_censored=exc_cens,
        exit_threshold=wide)
    rep.metadata["depth_over_k"] = rep.point / k
    return rep


def exp_Uk_far(kernel, k: int, m: float, t: float, reps: int, seed: int,
               workers: int = 1) -> EstimateReport:
    """Far-excursion factorization for two walkers started at 0 and k < 0.

    Left side: the walkers never share a site through time t and some
    walker ends at or above m*sqrt(t).  Right side, estimated separately:
    the never-meet probability from the same joint replicates, and the
    displacement tail P(|single walker at 2t| >= m*sqrt(t)) from an
    independent vectorized batch.  `ratio` divides the left side by the
    product; the grid-level verdict only asks that it stays bounded.
    """
    if k > -1:
        raise ValueError("need k <= -1")
    if m <= 0:
        raise ValueError("need m > 0")
    if t <= 0:
        raise ValueError("need t > 0")
    level = m * math.sqrt(t)
    sites, acut, aidx = _alias(kernel)  # each walker steps by the raw law
    flags = np.zeros(reps, dtype=np.int8)
    tag = _tag("uk_far", k=k, m=m, t=t)

    def body(i, rng):
        n = rng.poisson(2.0 * t)  # superposition of two rate-1 clocks
        flags[i] = _exp_core._pair_far_once(
            k, n, level, sites, acut, aidx, rng)

    _fan_reps(reps, workers, seed, tag, body)
    alive = int((flags != 0).sum())
    lhs = int((flags == 3).sum())
    tail_hits = _abs_displacement_tail(
        kernel, 2.0 * t, level, reps, substream(seed, tag + "/tail"))
    u_lo, u_hi = wilson_interval(alive, reps)
    t_lo, t_hi = wilson_interval(tail_hits, reps)
    denom = (alive / reps) * (tail_hits / reps)
    ratio = (lhs / reps) / denom if denom > 0 else float("nan")
    return binomial_report(
        lhs, reps, experiment="uk_far", k=int(k), m=float(m), t=float(t),
        seed=int(seed), level=level, ratio=ratio,
        u_point=alive / reps, u_ci_low=u_lo, u_ci_high=u_hi,
        tail_point=tail_hits / reps, tail_ci_low=t_lo, tail_ci_high=t_hi)


def _abs_displacement_tail(kernel, t: float, level: float, reps: int,
                           rng: np.random.Generator) -> int:
    """Replicates with |position at time t| >= level, compound-Poisson."""
    counts = rng.poisson(t, size=reps)
    steps = kernel.sites[
        np.searchsorted(kernel.cdf, rng.random(int(counts.sum())), side="right")
    ]
    ends = np.cumsum(counts)
    sums = np.concatenate([np.zeros(1, dtype=np.int64), np.cumsum(steps)])
    disp = sums[ends] - sums[ends - counts]
    return int((np.abs(disp) >= level).sum())


def exp_excursion(kernel, k: int, t: float, reps: int, seed: int,
                  workers: int = 1) -> EstimateReport:
    """Long-excursion floor for the rate-2 difference walk from 0.

    Point/CI: probability that a departure from 0 happening by t/2 opens
    an excursion that keeps the walk away from 0 for at least 3t/2.
    Metadata carries the conditional refinement among those replicates:
    the excursion lands on |k| within k*k of its start and then stays away
    from 0 for a further t.  Both are decided inside a 2t watch window,
    which the precondition t > 2*k*k makes sufficient.
    """
    level = abs(int(k))
    if level < 1:
        raise ValueError("need |k| >= 1")
    if t <= 2.0 * level * level:
        raise ValueError("need t > 2*k^2 so the reach window fits the horizon")
    diff = symmetrize(kernel)
    sites, acut, aidx = _alias(diff)
    flags = np.zeros(reps, dtype=np.int8)

    def body(i, rng):
        flags[i] = _exp_core._excursion_once(
            level, float(level * level), float(t), sites, acut, aidx, rng)

    _fan_reps(reps, workers, seed, _tag("excursion", k=k, t=t), body)
    n_e1 = int((flags & 1).astype(bool).sum())
    n_cond = int((flags >= 2).sum())
    meta = dict(experiment="excursion", k=int(k), t=float(t), seed=int(seed),
                conditional_n=n_e1)
    if n_e1 > 0:
        lo, hi = wilson_interval(n_cond, n_e1)
        meta.update(conditional_point=n_cond / n_e1,
                    conditional_ci_low=lo, conditional_ci_high=hi)
    else:
        meta.update(conditional_point=float("nan"),
                    conditional_ci_low=float("nan"),
                    conditional_ci_high=float("nan"))
    return binomial_report(n_e1, reps, **meta)


def exp_greenfn(kernel, k: int, r: int, x: int, l: int, reps: int, seed: int,
                workers: int = 1, step_cap: int = DEFAULT_STEP_CAP,
                ceiling: int = EXACT_CEILING) -> EstimateReport:
    """Held time at an interior site before the difference walk leaves
    (0, k*2^r), three ways.

    Point/CI: direct Monte Carlo of the continuous rate-2 clock, from x,
    accumulating the holds at l.  Metadata: the first-passage/return ratio
    route (P(land on l before exit, from x) / P(exit before landing on l
    again, from l), divided by the jump rate) with a propagated interval,
    and the dense-solver value when the interior fits under `ceiling`
    (`exact` is NaN otherwise and the identity is then checked between the
    two Monte Carlo routes only).
    """
    if k < 1 or r < 0:
        raise ValueError("need k >= 1 and r >= 0")
    hi = k << r
    if not (0 < x < hi and 0 < l < hi):
        raise ValueError(f"x and l must lie inside (0, {hi})")
    diff = symmetrize(kernel)
    sites, acut, aidx = _alias(diff)
    occ = np.zeros(reps, dtype=np.float64)
    ook = np.zeros(reps, dtype=np.int8)
    land = np.zeros(reps, dtype=np.int8)
    ret = np.zeros(reps, dtype=np.int8)
    tag = _tag("greenfn", k=k, r=r, x=x, l=l)

    def body(i, rng):
        occ[i], ook[i] = _exp_core._occupation_once(
            x, l, hi, step_cap, sites, acut, aidx, rng)
        if x != l:
            land[i] = _exp_core._lands_on_before_exit_once(
                x, l, hi, step_cap, sites, acut, aidx, rng)
        ret[i] = _exp_core._lands_on_before_exit_once(
            l, l, hi, step_cap, sites, acut, aidx, rng)

    _fan_reps(reps, workers, seed, tag, body)
    censored = int((ook == 0).sum())
    if censored == reps:
        raise RuntimeError("all replicates hit the step cap; raise step_cap")

    if x == l:
        p1, p1_lo, p1_hi, n1 = 1.0, 1.0, 1.0, reps  # already standing on l
    else:
        n1 = int((land != -1).sum())
        s1 = int((land == 1).sum())
        p1 = s1 / n1
        p1_lo, p1_hi = wilson_interval(s1, n1)
    n2 = int((ret != -1).sum())
    s2 = int((ret == 0).sum())  # exited before landing on l again
    p2 = s2 / n2
    p2_lo, p2_hi = wilson_interval(s2, n2)
    ratio = (p1 / p2) / 2.0 if p2 > 0 else float("inf")
    ratio_lo = (p1_lo / p2_hi) / 2.0 if p2_hi > 0 else float("inf")
    ratio_hi = (p1_hi / p2_lo) / 2.0 if p2_lo > 0 else float("inf")

    exact = float("nan")
    if hi - 1 <= ceiling:
        exact = exact_solve(diff, (0, hi)).occupation_time(x, l, jump_rate=2.0)

    return mean_report(
        occ[ook == 1], substream(seed, tag + "/ci"), censored=censored,
        experiment="greenfn", k=int(k), r=int(r), x=int(x), l=int(l),
        seed=int(seed), ratio_point=ratio, ratio_ci_low=ratio_lo,
        ratio_ci_high=ratio_hi, exact=exact,
        visit_point=p1, visit_ci_low=p1_lo, visit_ci_high=p1_hi,
        escape_point=p2, escape_ci_low=p2_lo, escape_ci_high=p2_hi,
        ratio_censored=int((land == -1).sum()) + int((ret == -1).sum()))


# ---------------------------------------------------------------------------
# forward-model experiments


@dataclass
class ExperimentTable:
    """Row-oriented result of a table experiment, CSV-ready."""

    experiment: str
    rows: list
    verdict: str
    reps: int
    censored: int
    seed: int
    metadata: dict = field(default_factory=dict)


def exp_tightness_sweep(kernel, t_list, M_list, reps: int, seed: int,
                        workers: int = 1,
                        hybrid_cap: int = HYBRID_CAP_DEFAULT,
                        growth_band: float = 2.0) -> ExperimentTable:
    """Survival table of the boundary spread r_t - l_t over a (t, M) grid.

    One forward trajectory per replicate, snapshotted at every t.  Rows
    hold P(r_t - l_t > M) with Wilson intervals; metadata carries, per t,
    the median of the occupied stretch max(r_t - l_t + 1, 0).  Verdict:
    "inconclusive: censored" when cap aborts exceed 1% of replicates;
    "non-monotone" if the survival estimates ever increase in M at fixed t
    (impossible on a common sample, asserted anyway); "growing" when, for
    some M, the interval at the largest t sits above growth_band times the
    interval at the smallest t; else "bounded".
    """
    ts = sorted(float(v) for v in _as_list(t_list))
    Ms = sorted(int(v) for v in _as_list(M_list))
    if not ts or not Ms:
        raise ValueError("t_list and M_list must be nonempty")
    if abs(kernel.mean()) > 1e-9:
        raise ValueError("forward runs need a mean-zero kernel")
    gaps = np.zeros((reps, len(ts)), dtype=np.int64)
    cens = np.zeros(reps, dtype=bool)
    tag = _tag("tightness_sweep", t=tuple(ts), M=tuple(Ms))

    def body(i, rng):
        try:
            snaps = run_voter_snapshots(
                kernel, init_heavyside(), ts, rng,
                track_inversions=False, hybrid_cap=hybrid_cap)
        except CapExceeded:
            cens[i] = True
            return
        gaps[i] = [s.right_one - s.left_zero for s in snaps]

    _fan_reps(reps, workers, seed, tag, body)
    done = ~cens
    n_done = int(done.sum())
    n_cens = reps - n_done
    if n_done == 0:
        raise RuntimeError("every replicate hit the hybrid cap")

    rows = []
    median_size = {}
    for j, t in enumerate(ts):
        col = gaps[done, j]
        median_size[t] = float(np.median(np.maximum(col + 1, 0)))
        for M in Ms:
            succ = int((col > M).sum())
            lo, hi = wilson_interval(succ, n_done)
            rows.append({
                "t": t, "M": M, "p_hat": succ / n_done,
                "ci_low": lo, "ci_high": hi,
                "reps": n_done, "censored": n_cens,
            })

    by_M = {M: {} for M in Ms}
    for row in rows:
        by_M[row["M"]][row["t"]] = row
    if n_cens > 0.01 * reps:
        verdict = "inconclusive: censored"
    elif any(by_M[m2][t]["p_hat"] > by_M[m1][t]["p_hat"]
             for m1, m2 in zip(Ms, Ms[1:]) for t in ts):
        verdict = "non-monotone"
    else:
        verdict = "bounded"
        for M in Ms:
            first = by_M[M][ts[0]]
            last = by_M[M][ts[-1]]
            floor = 1.0 / n_done  # resolution floor when the early cell is 0
            if last["ci_low"] > growth_band * max(first["ci_high"], floor):
                verdict = "growing"
                break
    return ExperimentTable(
        experiment="tightness_sweep", rows=rows, verdict=verdict, reps=reps,
        censored=n_cens, seed=int(seed),
        metadata={"median_size": median_size, "t": ts, "M": Ms,
                  "growth_band": growth_band})


def schedule_points(kernel, C: float, k_list) -> list:
    """Exact (k, M_k, t_k) triples: M_k = 2^k and t_k = C over the one-sided
    mass at or beyond 4*M_k.  Raises when the kernel support cannot carry
    the largest target."""
    if C <= 0:
        raise ValueError("need C > 0")
    ks = sorted(int(k) for k in _as_list(k_list))
    if not ks or ks[0] < 1:
        raise ValueError("k_list must hold integers >= 1")
    if kernel.radius < 4 * 2 ** ks[-1]:
        raise ValueError(
            f"kernel support reaches {kernel.radius}, below the largest "
            f"target jump {4 * 2 ** ks[-1]}; enlarge the cutoff")
    out = []
    for k in ks:
        Mk = 2 ** k
        tail = tail_mass(kernel, 4 * Mk, "pos")
        out.append((k, Mk, C / tail))
    return out


def schedule_factors(kernel, C: float, k: int, reps: int, seed: int,
                     workers: int = 1) -> dict:
    """The three product-bound factors at one schedule point, estimated
    separately on the split step law.

    big-jump bookkeeping: the count of jumps with |step| >= 4*M_k over
    [0, t_k] is Poisson with mean exactly 2C by the choice of t_k; the
    factor asks for exactly one such jump, to the right.  `f_analytic`
    holds the closed form C*exp(-2C).  small-step walk: jumps with
    |step| <= 4*M_k; its endpoint second moment has the exact value
    t_k * sum(x^2 p(x), |x| <= 4*M_k) (`z2_exact`), and the sup factor is
    P(the small-step path stays strictly inside (-M_k, M_k) through t_k).
    """
    [(k, Mk, tk)] = schedule_points(kernel, C, [k])
    lam_big = tail_mass(kernel, 4 * Mk, "two")
    pos_share = tail_mass(kernel, 4 * Mk, "pos") / lam_big
    small, _big = split_at(kernel, 4 * Mk)
    s_sites = small.sites
    s_cut, s_idx = _alias_tables(small.masses / small.total_mass)
    lam_small = small.total_mass

    f_hits = np.zeros(reps, dtype=np.int8)
    z_final = np.zeros(reps, dtype=np.int64)
    z_inside = np.zeros(reps, dtype=np.int8)
    tag = _tag("schedule_factors", C=C, k=k)

    def body(i, rng):
        n_big = rng.poisson(tk * lam_big)
        if n_big == 1 and rng.random() < pos_share:
            f_hits[i] = 1
        n_small = rng.poisson(tk * lam_small)
        z_final[i], z_inside[i] = _exp_core._bounded_walk_once(
            n_small, Mk, s_sites, s_cut, s_idx, rng)

    _fan_reps(reps, workers, seed, tag, body)
    f = int(f_hits.sum())
    f_lo, f_hi = wilson_interval(f, reps)
    sup = int(z_inside.sum())
    s_lo, s_hi = wilson_interval(sup, reps)
    z2_hat = float(np.mean(z_final.astype(np.float64) ** 2))
    z2_exact = tk * small.moment(2)
    return {
        "k": k, "M_k": Mk, "t_k": tk,
        "f_point": f / reps, "f_ci_low": f_lo, "f_ci_high": f_hi,
        "f_analytic": C * math.exp(-2.0 * C), "f_reps": reps,
        "z2_hat": z2_hat, "z2_exact": z2_exact, "z2_ratio": z2_hat / z2_exact,
        "sup_point": sup / reps, "sup_ci_low": s_lo, "sup_ci_high": s_hi,
    }


def exp_theorem2_schedule(kernel, C: float, k_list, reps: int, seed: int,
                          workers: int = 1,
                          factor_reps: int = FACTOR_REPS_DEFAULT,
                          hybrid_cap: int = HYBRID_CAP_DEFAULT,
                          floor: float = 0.01) -> ExperimentTable:
    """Forward-model floor along the doubling schedule, with the three
    product-bound factors at each point.

    Needs a heavy-tail power-law kernel (exponent below 2, symmetric by
    construction) whose cutoff carries the largest target jump.  One
    forward trajectory per replicate, snapshotted at every t_k; row k
    holds P(spread at t_k >= M_k) plus the factor estimates from
    `schedule_factors`.  Verdict: "inconclusive: censored" above 1% cap
    aborts, else "floor-held" iff every forward point estimate reaches
    `floor`.
    """
    alpha = _power_alpha(kernel)
    if alpha is None or alpha >= 2:
        raise ValueError("schedule runs need a power-law kernel with "
                         "exponent below 2")
    points = schedule_points(kernel, C, k_list)
    ts = [tk for _, _, tk in points]
    if sorted(ts) != ts:
        raise ValueError("schedule times must increase with k")
    gaps = np.zeros((reps, len(points)), dtype=np.int64)
    cens = np.zeros(reps, dtype=bool)
    tag = _tag("theorem2_schedule", C=C, k=tuple(k for k, _, _ in points))

    def body(i, rng):
        try:
            snaps = run_voter_snapshots(
                kernel, init_heavyside(), ts, rng,
                track_inversions=False, hybrid_cap=hybrid_cap)
        except CapExceeded:
            cens[i] = True
            return
        gaps[i] = [s.right_one - s.left_zero for s in snaps]

    _fan_reps(reps, workers, seed, tag, body)
    done = ~cens
    n_done = int(done.sum())
    n_cens = reps - n_done
    if n_done == 0:
        raise RuntimeError("every replicate hit the hybrid cap")

    rows = []
    for j, (k, Mk, tk) in enumerate(points):
        succ = int((gaps[done, j] >= Mk).sum())
        lo, hi = wilson_interval(succ, n_done)
        row = {"k": k, "M_k": Mk, "t_k": tk, "p_hat": succ / n_done,
               "ci_low": lo, "ci_high": hi, "reps": n_done,
               "censored": n_cens}
        row.update(schedule_factors(kernel, C, k, factor_reps, seed,
                                    workers=workers))
        rows.append(row)

    if n_cens > 0.01 * reps:
        verdict = "inconclusive: censored"
    elif all(row["p_hat"] >= floor for row in rows):
        verdict = "floor-held"
    else:
        verdict = "floor-violated"
    return ExperimentTable(
        experiment="theorem2_schedule", rows=rows, verdict=verdict,
        reps=reps, censored=n_cens, seed=int(seed),
        metadata={"C": C, "floor": floor, "factor_reps": factor_reps})


# ---------------------------------------------------------------------------
# config-driven layer


@dataclass(frozen=True)
class ExperimentSpec:
    """One named experiment: estimator id, kernel, parameter grid,
    replicate count and master seed, plus per-experiment tolerances."""

    name: str
    kernel_spec: KernelSpec
    grid: dict
    reps: int
    seed: int
    tolerances: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in REGISTRY:
            raise ValueError(
                f"unknown experiment {self.name!r}; known: {sorted(REGISTRY)}")
        if not self.grid:
            raise ValueError("experiment grid is empty")
        if self.reps < MIN_REPS:
            raise ValueError(f"reps must be >= {MIN_REPS}")


@dataclass
class ExperimentOutcome:
    """What one experiment hands the harness: CSV rows, per-instance
    reports (empty for table experiments), the verdict, and accounting."""

    name: str
    kernel_family: str
    rows: list
    reports: list
    verdict: str
    censored: int
    seed: int


def _as_list(value):
    if isinstance(value, (list, tuple)):
        return list(value)
    return [value]


def _grid_product(grid: dict, keys):
    missing = [key for key in keys if key not in grid]
    if missing:
        raise ValueError(f"grid is missing keys {missing}")
    extra = [key for key in grid if key not in keys]
    if extra:
        raise ValueError(f"grid has unknown keys {extra}")
    combos = [{}]
    for key in keys:
        combos = [dict(c, **{key: v}) for c in combos
                  for v in _as_list(grid[key])]
    return combos


def _report_row(params: dict, rep: EstimateReport) -> dict:
    row = dict(params)
    row.update(point=rep.point, ci_low=rep.ci_low, ci_high=rep.ci_high,
               reps=rep.reps, censored=rep.censored)
    for key, val in rep.metadata.items():
        if key in ("experiment", "seed") or key in row:
            continue
        if isinstance(val, (int, float, np.integer, np.floating)):
            row[key] = val
    return row


def _run_grid(spec: ExperimentSpec, kernel, keys, call, workers):
    combos = _grid_product(spec.grid, keys)
    reports = []
    for idx, params in enumerate(combos):
        reports.append((params, call(kernel, params, idx)))
    rows = [_report_row(params, rep) for params, rep in reports]
    censored = sum(rep.censored for _, rep in reports)
    return reports, rows, censored


def _verdict_vk(reports, tol, kernel) -> str:
    by_k = {}
    for params, rep in reports:
        by_k.setdefault(params["k"], []).append((params["t"], rep))
    for k, items in by_k.items():
        items.sort()
        scale = [k / math.sqrt(t) for t, _ in items]
        for (t1, r1), (t2, r2), s1, s2 in zip(items, items[1:], scale, scale[1:]):
            if r2.ci_low / s2 > r1.ci_high / s1:
                return "increase-detected"
    return "nonincreasing"


def _verdict_akr(reports, tol, kernel) -> str:
    band = tol.get("band", 3.0)
    by_k = {}
    for params, rep in reports:
        by_k.setdefault(params["k"], []).append((params["r"], rep))
    for k, items in by_k.items():
        items.sort()
        scaled = [rep.metadata["scaled"] for _, rep in items]
        if min(scaled) <= 0 or max(scaled) / min(scaled) > band:
            return "band-broken"
        for (r1, a), (r2, b) in zip(items, items[1:]):
            if b.ci_low > a.ci_high:  # significantly increasing in r
                return "band-broken"
    return "band-held"


def _verdict_overshoot(reports, tol, kernel) -> str:
    by_r = {}
    for params, rep in reports:
        by_r.setdefault(params["r"], []).append((params["k"], rep))
    verdict = "nonincreasing"
    for r, items in by_r.items():
        items.sort()
        for (k1, a), (k2, b) in zip(items, items[1:]):
            if b.ci_low / k2 > a.ci_high / k1:
                verdict = "increase-detected"
    alpha = _power_alpha(kernel)
    if alpha is not None and alpha < 2:
        return f"reported: {verdict}"  # heavy-tail surrogate, trend not asserted
    return verdict


def _verdict_uk_far(reports, tol, kernel) -> str:
    band = tol.get("ratio_band", 20.0)
    ratios = [rep.metadata["ratio"] for _, rep in reports]
    finite = [v for v in ratios if math.isfinite(v)]
    if not finite:
        return "inconclusive: degenerate"
    return "ratio-bounded" if max(finite) <= band else "ratio-unbounded"


def _verdict_excursion(reports, tol, kernel) -> str:
    floor = tol.get("floor", 0.01)
    for _, rep in reports:
        if rep.point < floor:
            return "floor-violated"
        if rep.metadata["conditional_n"] > 0 and \
                rep.metadata["conditional_point"] < floor:
            return "floor-violated"
    return "floors-held"


def _verdict_greenfn(reports, tol, kernel) -> str:
    for _, rep in reports:
        meta = rep.metadata
        if not (meta["ratio_ci_low"] <= rep.ci_high
                and rep.ci_low <= meta["ratio_ci_high"]):
            return "identity-broken"
        exact = meta["exact"]
        if math.isfinite(exact):
            if not (rep.ci_low <= exact <= rep.ci_high):
                return "identity-broken"
            if not (meta["ratio_ci_low"] <= exact <= meta["ratio_ci_high"]):
                return "identity-broken"
    if all(not math.isfinite(rep.metadata["exact"]) for _, rep in reports):
        return "identity-held (mc-only)"
    return "identity-held"


def run_experiment(spec: ExperimentSpec, workers: int = 1) -> ExperimentOutcome:
    """Execute one configured experiment and fold its grid into CSV rows,
    reports and a single verdict string."""
    kernel = build_kernel(spec.kernel_spec)
    tol = spec.tolerances
    name = spec.name

    if name in _GRID_KEYS:
        keys, call, judge = _GRID_KEYS[name]
        reports, rows, censored = _run_grid(
            spec, kernel, keys,
            lambda ker, p, idx: call(ker, spec, p, workers), workers)
        verdict = judge(reports, tol, kernel)
        return ExperimentOutcome(name, kernel.family, rows, reports, verdict,
                                 censored, spec.seed)

    if name == "tightness_sweep":
        _grid_product(spec.grid, ("t", "M"))  # key validation only
        table = exp_tightness_sweep(
            kernel, spec.grid["t"], spec.grid["M"],
            spec.reps, spec.seed, workers=workers,
            hybrid_cap=int(tol.get("hybrid_cap", HYBRID_CAP_DEFAULT)),
            growth_band=float(tol.get("growth_band", 2.0)))
    elif name == "theorem2_schedule":
        _grid_product(spec.grid, ("C", "k"))
        table = exp_theorem2_schedule(
            kernel, float(_one(spec.grid["C"], "C")),
            spec.grid["k"], spec.reps, spec.seed, workers=workers,
            factor_reps=int(tol.get("factor_reps", FACTOR_REPS_DEFAULT)),
            hybrid_cap=int(tol.get("hybrid_cap", HYBRID_CAP_DEFAULT)),
            floor=float(tol.get("floor", 0.01)))
    else:  # pragma: no cover - REGISTRY and branches kept in lockstep
        raise ValueError(f"unhandled experiment {name!r}")
    return ExperimentOutcome(name, kernel.family, table.rows, [],
                             table.verdict, table.censored, spec.seed)


def _one(value, key):
    vals = _as_list(value)
    if len(vals) != 1:
        raise ValueError(f"{key} must be a single value, got {vals}")
    return vals[0]


_GRID_KEYS = {
    "vk": (
        ("k", "t"),
        lambda ker, spec, p, w: exp_Vk(ker, p["k"], p["t"], spec.reps,
                                       spec.seed, workers=w),
        _verdict_vk,
    ),
    "akr": (
        ("k", "r"),
        lambda ker, spec, p, w: exp_Akr(
            ker, p["k"], p["r"], spec.reps, spec.seed, workers=w,
            step_cap=int(spec.tolerances.get("step_cap", DEFAULT_STEP_CAP))),
        _verdict_akr,
    ),
    "overshoot": (
        ("k", "r"),
        lambda ker, spec, p, w: exp_overshoot(
            ker, p["k"], p["r"], spec.reps, spec.seed, workers=w,
            step_cap=int(spec.tolerances.get("step_cap", DEFAULT_STEP_CAP))),
        _verdict_overshoot,
    ),
    "uk_far": (
        ("k", "m", "t"),
        lambda ker, spec, p, w: exp_Uk_far(ker, p["k"], p["m"], p["t"],
                                           spec.reps, spec.seed, workers=w),
        _verdict_uk_far,
    ),
    "excursion": (
        ("k", "t"),
        lambda ker, spec, p, w: exp_excursion(ker, p["k"], p["t"], spec.reps,
                                              spec.seed, workers=w),
        _verdict_excursion,
    ),
    "greenfn": (
        ("k", "r", "x", "l"),
        lambda ker, spec, p, w: exp_greenfn(
            ker, p["k"], p["r"], p["x"], p["l"], spec.reps, spec.seed,
            workers=w,
            step_cap=int(spec.tolerances.get("step_cap", DEFAULT_STEP_CAP)),
            ceiling=int(spec.tolerances.get("exact_solve_ceiling",
                                            EXACT_CEILING))),
        _verdict_greenfn,
    ),
}

REGISTRY = dict.fromkeys(
    list(_GRID_KEYS) + ["tightness_sweep", "theorem2_schedule"])
