"""Continuous-time lattice random walks and their exact finite solvers.

Hitting-order questions are answered on the embedded jump chain (the
exponential clock never changes which target is reached first), continuous
clocks only enter when a fixed time horizon or an occupation time is asked
for.  The dense solver turns a finite open interval into an absorbing-chain
problem and is the exactness reference the Monte Carlo paths are tested
against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from vmint.kernels import Kernel, sample_step, symmetrize, tail_mass
from vmint.report import EstimateReport, binomial_report

DEFAULT_STEP_CAP = 10**6
EXACT_CEILING = 4000


# ---------------------------------------------------------------------------
# stopping targets


@dataclass(frozen=True)
class Point:
    x: int

    def contains(self, pos: int) -> bool:
        return pos == self.x

    def mask(self, pos: np.ndarray) -> np.ndarray:
        return pos == self.x


@dataclass(frozen=True)
class HalfLineLeq:
    x: int

    def contains(self, pos: int) -> bool:
        return pos <= self.x

    def mask(self, pos: np.ndarray) -> np.ndarray:
        return pos <= self.x


@dataclass(frozen=True)
class HalfLineGeq:
    x: int

    def contains(self, pos: int) -> bool:
        return pos >= self.x

    def mask(self, pos: np.ndarray) -> np.ndarray:
        return pos >= self.x


@dataclass(frozen=True)
class IntervalComplement:
    """Everything outside the open interval (lo, hi)."""

    lo: int
    hi: int

    def __post_init__(self):
        if self.lo >= self.hi:
            raise ValueError("need lo < hi")

    def contains(self, pos: int) -> bool:
        return pos <= self.lo or pos >= self.hi

    def mask(self, pos: np.ndarray) -> np.ndarray:
        return (pos <= self.lo) | (pos >= self.hi)


def point(x: int) -> Point:
    return Point(int(x))


def half_line_leq(x: int) -> HalfLineLeq:
    return HalfLineLeq(int(x))


def half_line_geq(x: int) -> HalfLineGeq:
    return HalfLineGeq(int(x))


def interval_complement(lo: int, hi: int) -> IntervalComplement:
    return IntervalComplement(int(lo), int(hi))


@dataclass(frozen=True)
class StoppingSpec:
    """What ends a walk: an ordered tuple of targets (first match wins),
    an optional time horizon, and the strict-return convention.

    strict_return=False counts time 0, so starting inside a target stops
    immediately; strict_return=True only counts hits from the first jump on.
    """

    targets: tuple = ()
    time_horizon: float | None = None
    strict_return: bool = False

    def __post_init__(self):
        if not self.targets and self.time_horizon is None:
            raise ValueError("stopping spec needs targets or a time horizon")

    def classify(self, pos: int) -> int | None:
        for i, t in enumerate(self.targets):
            if t.contains(pos):
                return i
        return None


@dataclass
class WalkOutcome:
    """first_hit is the index of the target reached first, or None when the
    horizon expired before any target."""

    first_hit: int | None
    hit_time: float | None
    final_position: int
    occupation: dict[int, float] | None = None

    @property
    def horizon_expired(self) -> bool:
        return self.first_hit is None


# ---------------------------------------------------------------------------
# single-walk reference implementation


def run_walk(
    kernel: Kernel,
    start: int,
    stopping: StoppingSpec,
    rng: np.random.Generator,
    jump_rate: float = 1.0,
    track_occupation: bool = False,
) -> WalkOutcome:
    """Simulate one continuous-time walk until its stopping rule fires.

    This is the plain, auditable implementation; the batched estimators
    below are the fast path and are tested against it.
    """
    if jump_rate <= 0:
        raise ValueError("jump_rate must be positive")
    pos = int(start)
    t = 0.0
    horizon = stopping.time_horizon
    occ: dict[int, float] | None = {} if track_occupation else None

    if not stopping.strict_return:
        hit = stopping.classify(pos)
        if hit is not None:
            return WalkOutcome(hit, 0.0, pos, occ)

    scale = 1.0 / jump_rate
    while True:
        dt = rng.exponential(scale)
        if horizon is not None and t + dt >= horizon:
            if occ is not None:
                occ[pos] = occ.get(pos, 0.0) + (horizon - t)
            return WalkOutcome(None, None, pos, occ)
        if occ is not None:
            occ[pos] = occ.get(pos, 0.0) + dt
        t += dt
        pos += sample_step(kernel, rng)
        hit = stopping.classify(pos)
        if hit is not None:
            return WalkOutcome(hit, t, pos, occ)


def run_difference_walk(
    kernel: Kernel,
    start: int,
    stopping: StoppingSpec,
    rng: np.random.Generator,
    track_occupation: bool = False,
) -> WalkOutcome:
    """Walk of the difference of two independent rate-1 walks with step law
    `kernel`: a single walk with the symmetrized step law at jump rate 2."""
    return run_walk(
        symmetrize(kernel), start, stopping, rng, jump_rate=2.0,
        track_occupation=track_occupation,
    )


# ---------------------------------------------------------------------------
# batched Monte Carlo estimators (embedded chain)


def _draw_steps(kernel: Kernel, rng: np.random.Generator, n: int) -> np.ndarray:
    return kernel.sites[np.searchsorted(kernel.cdf, rng.random(n), side="right")]


def _race(kernel, start, targets, reps, rng, strict_return, step_cap):
    """Vectorized hitting-order race.  Returns int8 codes per replicate:
    1 + target index for a resolved race, 0 for walks still alive at the
    step cap (reported as censored, never folded into estimates)."""
    result = np.zeros(reps, dtype=np.int8)
    pos = np.full(reps, int(start), dtype=np.int64)
    if not strict_return:
        code = 0
        for i, tgt in enumerate(targets):
            if tgt.contains(int(start)):
                code = i + 1
                break
        if code:
            result[:] = code
            return result
    idx = np.arange(reps)
    for _ in range(step_cap):
        if idx.size == 0:
            break
        pos[idx] += _draw_steps(kernel, rng, idx.size)
        live_pos = pos[idx]
        codes = np.zeros(idx.size, dtype=np.int8)
        for i, tgt in enumerate(targets):
            codes[(codes == 0) & tgt.mask(live_pos)] = i + 1
        hit = codes != 0
        result[idx[hit]] = codes[hit]
        idx = idx[~hit]
    return result


def hit_before(
    kernel: Kernel,
    start: int,
    target_a,
    target_b,
    reps: int,
    rng: np.random.Generator,
    strict_return: bool = False,
    step_cap: int = DEFAULT_STEP_CAP,
) -> EstimateReport:
    """Estimate P(target_a is reached before target_b) from `start`."""
    codes = _race(kernel, start, (target_a, target_b), reps, rng, strict_return, step_cap)
    censored = int((codes == 0).sum())
    resolved = reps - censored
    if resolved == 0:
        raise RuntimeError("all replicates hit the step cap; raise step_cap")
    return binomial_report(
        int((codes == 1).sum()),
        resolved,
        censored=censored,
        estimator="hit_before",
        start=start,
    )


def return_tail(
    kernel: Kernel, steps: int, reps: int, rng: np.random.Generator,
    chunk: int = 200_000,
) -> EstimateReport:
    """P(the embedded chain started at 0 has not returned to 0 within
    `steps` jumps), the strict-return survival tail."""
    surviving = 0
    for lo in range(0, reps, chunk):
        n = min(chunk, reps - lo)
        pos = np.zeros(n, dtype=np.int64)
        idx = np.arange(n)
        pos[idx] += _draw_steps(kernel, rng, n)  # first jump, cannot return
        idx = idx[pos[idx] != 0]
        for _ in range(steps - 1):
            if idx.size == 0:
                break
            pos[idx] += _draw_steps(kernel, rng, idx.size)
            idx = idx[pos[idx] != 0]
        surviving += idx.size
    return binomial_report(surviving, reps, estimator="return_tail", steps=steps)


def survival_from(
    kernel: Kernel, start: int, t: float, reps: int, rng: np.random.Generator,
    jump_rate: float = 1.0,
) -> EstimateReport:
    """P(the continuous-time walk from `start` has not touched 0 by time t).

    Only the number of jumps in [0, t] matters for a fixed-time survival
    question, so jump counts are drawn as Poisson marks and the embedded
    chain is checked for a visit to 0."""
    if start == 0:
        return binomial_report(0, reps, estimator="survival_from", start=0)
    n_jumps = rng.poisson(jump_rate * t, size=reps)
    pos = np.full(reps, int(start), dtype=np.int64)
    idx = np.arange(reps)
    remaining = n_jumps.copy()
    while idx.size:
        active = remaining[idx] > 0
        idx = idx[active]
        if idx.size == 0:
            break
        pos[idx] += _draw_steps(kernel, rng, idx.size)
        remaining[idx] -= 1
        idx = idx[pos[idx] != 0]
    # walks that touched 0 were frozen there, so survivors are the nonzeros
    survived = int((pos != 0).sum())
    return binomial_report(survived, reps, estimator="survival_from", start=start, t=t)


# ---------------------------------------------------------------------------
# exact dense solver


class ExactSolve:
    """Absorbing-chain solution on the interior of an open interval.

    green[i, j] is the expected number of visits of the embedded chain to
    interior site j started from interior site i before absorption.
    absorption[i, c] is the probability of exiting into exterior class c.
    """

    def __init__(self, kernel: Kernel, interval, classes, absorption, green, sites, names):
        self.kernel = kernel
        self.interval = interval
        self.classes = classes
        self.class_names = names
        self.sites = sites
        self.absorption = absorption
        self.green = green
        self._index = {int(s): i for i, s in enumerate(sites)}

    def _i(self, site: int) -> int:
        try:
            return self._index[int(site)]
        except KeyError:
            raise ValueError(f"{site} is not an interior site of {self.interval}") from None

    def absorption_prob(self, start: int, name: str) -> float:
        return float(self.absorption[self._i(start), self.class_names.index(name)])

    def green_value(self, start: int, site: int) -> float:
        return float(self.green[self._i(start), self._i(site)])

    def hit_before_prob(self, start: int, site: int) -> float:
        """P(reach `site` before leaving the interval), from the green ratio."""
        if start == site:
            return 1.0
        return self.green_value(start, site) / self.green_value(site, site)

    def escape_before_return(self, site: int) -> float:
        """P(leave the interval before returning to `site`), started at `site`."""
        return 1.0 / self.green_value(site, site)

    def occupation_time(self, start: int, site: int, jump_rate: float = 1.0) -> float:
        """Expected continuous time spent at `site` before absorption."""
        return self.green_value(start, site) / jump_rate

    def exit_site_prob(self, start: int, site: int) -> float:
        """P(the first exterior site entered is exactly `site`)."""
        lo, hi = self.interval
        if lo < site < hi:
            raise ValueError("exit site must be outside the open interval")
        i = self._i(start)
        p = 0.0
        for j, s in enumerate(self.sites):
            p += self.green[i, j] * self.kernel.mass_at(int(site - s))
        return float(p)

    def to_csv(self, path) -> None:
        header = "site," + ",".join(self.class_names)
        rows = [header]
        for i, s in enumerate(self.sites):
            rows.append(f"{s}," + ",".join(repr(float(v)) for v in self.absorption[i]))
        with open(path, "w") as fh:
            fh.write("\n".join(rows) + "\n")


def _class_mass(kernel: Kernel, target, site: int, lo: int, hi: int) -> float:
    """Exact one-jump mass from an interior site into an exterior target."""
    if isinstance(target, HalfLineLeq):
        return tail_mass(kernel, site - target.x, "neg")
    if isinstance(target, HalfLineGeq):
        return tail_mass(kernel, target.x - site, "pos")
    if isinstance(target, Point):
        return kernel.mass_at(target.x - site)
    if isinstance(target, IntervalComplement):
        return tail_mass(kernel, site - target.lo, "neg") + tail_mass(
            kernel, target.hi - site, "pos"
        )
    raise TypeError(f"unsupported exterior class: {target!r}")


def exact_solve(
    kernel: Kernel,
    interval: tuple[int, int],
    classes=None,
    ceiling: int = EXACT_CEILING,
    residual_tol: float = 1e-8,
) -> ExactSolve:
    """Dense absorption and green-matrix solve on the open interval.

    classes defaults to the two half-lines left of and right of the
    interval; custom classes must cover every site reachable in one jump
    from the interior, which is validated row by row.
    """
    lo, hi = int(interval[0]), int(interval[1])
    if hi - lo < 2:
        raise ValueError("open interval has empty interior")
    n = hi - lo - 1
    if n > ceiling:
        raise ValueError(
            f"interval interior has {n} sites, above the ceiling {ceiling}; "
            "raise `ceiling` explicitly if you really want a dense solve this big"
        )
    if classes is None:
        classes = [("left", HalfLineLeq(lo)), ("right", HalfLineGeq(hi))]
    names = [name for name, _ in classes]
    sites = np.arange(lo + 1, hi, dtype=np.int64)

    radius = kernel.radius
    dense = np.zeros(2 * radius + 1)
    dense[kernel.sites + radius] = kernel.masses
    off = sites[None, :] - sites[:, None]
    inside = np.abs(off) <= radius
    Q = np.where(inside, dense[np.clip(off + radius, 0, 2 * radius)], 0.0)

    R = np.zeros((n, len(classes)))
    for c, (_, tgt) in enumerate(classes):
        for i, s in enumerate(sites):
            R[i, c] = _class_mass(kernel, tgt, int(s), lo, hi)
    rowsum = Q.sum(axis=1) + R.sum(axis=1)
    if np.any(np.abs(rowsum - 1.0) > 1e-9):
        worst = int(np.argmax(np.abs(rowsum - 1.0)))
        raise ValueError(
            f"exterior classes miss {1 - rowsum[worst]:.3g} of the one-jump mass "
            f"from site {sites[worst]}; classes must cover the reachable exterior"
        )

    A = np.eye(n) - Q
    green = np.linalg.inv(A)
    residual = np.max(np.abs(A @ green - np.eye(n)))
    if residual > residual_tol:
        raise RuntimeError(
            f"dense solve residual {residual:.3g} above {residual_tol}; "
            "system too ill-conditioned to trust"
        )
    absorption = green @ R
    return ExactSolve(kernel, (lo, hi), classes, absorption, green, sites, names)


# ---------------------------------------------------------------------------
# potential kernel


def potential_kernel(
    kernel: Kernel,
    xs,
    terms: int = 5000,
    window: int | None = None,
) -> np.ndarray | float:
    """Truncated potential-kernel series a(x) = sum_i [q_i(0) - q_i(x)] for a
    symmetric step law, via iterated exact convolutions of the embedded chain.

    Truncation error decays like O(x^2 / sqrt(terms)).  The convolution
    window must hold essentially all of the mass; any leak above 1e-12 in a
    single term aborts with the window size that would have been needed.
    """
    asym = 0.0
    for x, m in zip(kernel.sites.tolist(), kernel.masses.tolist()):
        asym = max(asym, abs(m - kernel.mass_at(-x)))
    if asym > 1e-12:
        raise ValueError("potential kernel needs a symmetric step law; symmetrize() it")

    scalar = np.isscalar(xs)
    xs_arr = np.atleast_1d(np.asarray(xs, dtype=np.int64))
    from vmint.kernels import moment  # local import to avoid cycle at module load

    sigma2 = moment(kernel, 2)
    if window is None:
        spread = int(np.ceil(12.0 * np.sqrt(max(terms, 1) * sigma2)))
        window = max(int(np.max(np.abs(xs_arr))) + kernel.radius, spread, 64)
    W = int(window)
    if np.any(np.abs(xs_arr) > W):
        raise ValueError("window smaller than a requested |x|")

    q = np.zeros(2 * W + 1)
    q[W] = 1.0
    acc = np.where(xs_arr == 0, 0.0, 1.0)  # the i = 0 term
    shifts = list(zip(kernel.sites.tolist(), kernel.masses.tolist()))
    prev_total = 1.0
    for i in range(1, terms + 1):
        nxt = np.zeros_like(q)
        for s, m in shifts:
            if s >= 0:
                nxt[s:] += m * q[: q.size - s]
            else:
                nxt[: q.size + s] += m * q[-s:]
        q = nxt
        total = q.sum()
        if prev_total - total > 1e-12:
            need = kernel.radius * terms
            raise ValueError(
                f"mass {prev_total - total:.2e} leaked out of the window at term {i}; "
                f"increase window (at most {need} is always enough)"
            )
        prev_total = total
        acc += q[W] - q[W + xs_arr]
    return float(acc[0]) if scalar else acc
