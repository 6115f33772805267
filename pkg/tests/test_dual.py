import math

import numpy as np
import pytest

from vmint.dual import (
    CrossingEvent,
    crossing_census,
    density,
    dual_marginal,
    evolve,
    init_walkers,
)
from vmint.kernels import KernelSpec, build_kernel
from vmint.report import wilson_interval
from vmint.walks import StoppingSpec, half_line_leq, run_walk, survival_from

NN = build_kernel(KernelSpec("nearest_neighbor"))
U2 = build_kernel(KernelSpec("uniform_range", (2,)))


def ks_2sample(a, b) -> float:
    """Two-sample KS statistic scaled by sqrt(nm/(n+m)); 1.95 is the 0.001
    critical value, so a fixed-seed test triggers only on a real mismatch."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    d = float(np.max(np.abs(fa - fb)))
    return d * math.sqrt(a.size * b.size / (a.size + b.size))


def test_init_walkers_counts():
    assert init_walkers([0]).live_count == 1
    ws = init_walkers(range(10))
    assert ws.walker_count == 10 and ws.live_count == 10
    assert ws.walkers == [(i, i) for i in range(10)]
    assert ws.clock == 0.0 and ws.merge_log == []


def test_init_walkers_orders_by_site():
    ws = init_walkers([7, -3, 2])
    assert ws.walkers == [(0, -3), (1, 2), (2, 7)]


def test_init_walkers_rejects_duplicates():
    with pytest.raises(ValueError):
        init_walkers([1, 2, 2])


def test_evolve_empty_is_noop():
    ws = init_walkers([])
    evolve(ws, U2, 5.0, np.random.default_rng(0))
    assert ws.live_count == 0 and ws.clock == 5.0


def test_evolve_rejects_negative_duration():
    with pytest.raises(ValueError):
        evolve(init_walkers([0]), NN, -1.0, np.random.default_rng(0))


def test_single_walker_matches_free_walk():
    # one walker cannot merge, so its final position must follow the plain
    # walk law; two-sample KS against run_walk
    reps = 10_000
    t = 9.0
    rng = np.random.default_rng(402)
    dual_finals = np.empty(reps, dtype=np.int64)
    for i in range(reps):
        ws = init_walkers([0])
        evolve(ws, U2, t, rng)
        dual_finals[i] = ws.position(0)
    stop = StoppingSpec(time_horizon=t)
    walk_finals = np.array([
        run_walk(U2, 0, stop, rng).final_position for _ in range(reps)
    ])
    assert ks_2sample(dual_finals, walk_finals) < 1.95


def test_surviving_walker_increment_is_free():
    # conditioned on no merge, a surviving walker's increment over [s, s+u]
    # keeps the free-walk law; the partner sits far enough away that the
    # conditioning carries no bias at this resolution (a close partner
    # does bias the increment away from it, measurably at 1e4 reps)
    reps = 10_000
    s, u = 3.0, 4.0
    rng = np.random.default_rng(403)
    incs = []
    while len(incs) < reps:
        ws = init_walkers([0, 40])
        evolve(ws, U2, s, rng)
        if ws.live_count < 2:
            continue
        before = ws.position(0)
        evolve(ws, U2, u, rng)
        if ws.live_count == 2:
            incs.append(ws.position(0) - before)
    stop = StoppingSpec(time_horizon=u)
    free = np.array([
        run_walk(U2, 0, stop, rng).final_position for _ in range(reps)
    ])
    assert ks_2sample(np.array(incs), free) < 1.95


def test_tracked_increment_free_through_merges():
    # the sharp form: one tagged line, followed through any coalescence,
    # is marginally a plain rate-1 walk with no conditioning at all
    reps = 10_000
    u = 4.0
    rng = np.random.default_rng(423)
    incs = np.empty(reps, dtype=np.int64)
    for i in range(reps):
        ws = init_walkers([0, 5])
        evolve(ws, U2, u, rng)
        incs[i] = ws.position(0)
    stop = StoppingSpec(time_horizon=u)
    free = np.array([
        run_walk(U2, 0, stop, rng).final_position for _ in range(reps)
    ])
    assert ks_2sample(incs, free) < 1.95


def test_pair_noncoalescence_matches_difference_walk():
    # P(two walkers from {0, k} never meet by t) via the dual system vs the
    # rate-2 difference walk from k
    k, t, reps = 3, 16.0, 4000
    rng = np.random.default_rng(404)
    alive = 0
    for _ in range(reps):
        ws = init_walkers([0, k])
        evolve(ws, NN, t, rng)
        alive += ws.live_count == 2
    lo, hi = wilson_interval(alive, reps)
    oracle = survival_from(NN, k, t, 40_000, rng, jump_rate=2.0)
    assert lo <= oracle.ci_high and oracle.ci_low <= hi


def test_live_count_monotone():
    rng = np.random.default_rng(405)
    ws = init_walkers(range(10))
    counts = [ws.live_count]
    for _ in range(10):
        evolve(ws, U2, 5.0, rng)
        counts.append(ws.live_count)
    assert all(b <= a for a, b in zip(counts, counts[1:]))
    assert counts[-1] < 10
    assert ws.clock == pytest.approx(50.0)
    times = [t for t, _, _ in ws.merge_log]
    assert times == sorted(times)
    assert all(0.0 < t <= ws.clock for t in times)


def test_merge_log_accounts_for_drops():
    rng = np.random.default_rng(406)
    ws = init_walkers(range(8))
    evolve(ws, U2, 40.0, rng)
    assert ws.walker_count - ws.live_count == len(ws.merge_log)
    for _, absorbed, survivor in ws.merge_log:
        assert ws.find(absorbed) != absorbed
        assert ws.position(absorbed) == ws.position(survivor)


def test_merge_history_csv(tmp_path):
    rng = np.random.default_rng(407)
    ws = init_walkers(range(6))
    evolve(ws, U2, 30.0, rng)
    path = tmp_path / "merges.csv"
    ws.merge_history_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "merge_time,absorbed_id,surviving_id"
    assert len(lines) == 1 + len(ws.merge_log)


def test_dual_marginal_t0_exact():
    rng = np.random.default_rng(408)
    assert dual_marginal(U2, 0, 0.0, 10, rng).point == 1.0
    assert dual_marginal(U2, 1, 0.0, 10, rng).point == 0.0
    assert dual_marginal(U2, -5, 0.0, 10, rng).metadata["exact"] is True


def test_dual_marginal_reflection():
    # P(value 1 at x) + P(value 1 at 1-x) = 1 exactly for a symmetric step
    # law: the two events partition by D <= -x versus D > -x
    rng = np.random.default_rng(409)
    t, reps = 6.0, 40_000
    for x in (-2, 0, 1, 3):
        a = dual_marginal(U2, x, t, reps, rng)
        b = dual_marginal(U2, 1 - x, t, reps, rng)
        slack = a.halfwidth() + b.halfwidth()
        assert abs(a.point + b.point - 1.0) <= slack


def test_dual_marginal_midline_walk_oracle():
    # P(eta_t(x) = 1) equals P(walk from x ends <= 0); cross-check one point
    # against run_walk horizon finals
    rng = np.random.default_rng(410)
    t, x, reps = 8.0, 2, 20_000
    est = dual_marginal(U2, x, t, reps, rng)
    stop = StoppingSpec(time_horizon=t)
    hits = sum(
        run_walk(U2, x, stop, rng).final_position <= 0 for _ in range(5000)
    )
    lo, hi = wilson_interval(hits, 5000)
    assert est.ci_low <= hi and lo <= est.ci_high


def test_density_k0_exact():
    rep = density(U2, 0.0, 200, 5, np.random.default_rng(411))
    assert rep.point == 1.0 and rep.metadata["exact"] is True


def test_density_window_floor():
    with pytest.raises(ValueError):
        density(U2, 4.0, 99, 10, np.random.default_rng(412))


def test_density_margin_must_leave_core():
    # u2 sigma = sqrt(2.5); K = 100 puts the margin at 159 per side
    with pytest.raises(ValueError):
        density(U2, 100.0, 300, 10, np.random.default_rng(413))


def test_density_decays_in_k():
    rng = np.random.default_rng(414)
    d4 = density(NN, 4.0, 1000, 1000, rng)
    d16 = density(NN, 16.0, 1000, 1000, rng)
    assert d4.ci_low > d16.ci_high


def test_density_diffusive_scale_band():
    # sqrt(K) * density should be near-constant for the simple walk
    rng = np.random.default_rng(415)
    a = density(NN, 25.0, 1200, 400, rng).point * 5.0
    b = density(NN, 100.0, 1200, 400, rng).point * 10.0
    assert 0.5 < a / b < 2.0


def test_census_requires_second_leg():
    with pytest.raises(ValueError):
        crossing_census(U2, 10.0, 20.0, 200, 10, np.random.default_rng(416))


def test_census_degenerate_interval():
    rep, events = crossing_census(
        U2, 15.0, 15.0, 200, 25, np.random.default_rng(417))
    assert rep.point == 0.0 and rep.metadata["degenerate"] is True
    assert events == []


def test_census_nearest_neighbor_never_crosses():
    # unit steps cannot swap order without first sharing a site
    rng = np.random.default_rng(418)
    rep, events = crossing_census(NN, 60.0, 10.0, 200, 50, rng)
    assert rep.point == 0.0
    assert all(not ev.crossed for ev in events)


def test_census_decreases_in_k():
    rng = np.random.default_rng(419)
    late, ev_late = crossing_census(U2, 400.0, 50.0, 300, 1000, rng)
    early, ev_early = crossing_census(U2, 400.0, 5.0, 300, 1000, rng)
    assert late.ci_low <= early.ci_high
    for ev in ev_late + ev_early:
        a, b = ev.final_positions
        if ev.crossed:
            assert a >= 0 > b and not ev.coalesced
        assert ev.pair[0] < ev.pair[1]


def test_crossing_event_coherence_enforced():
    with pytest.raises(ValueError):
        CrossingEvent(pair=(-1, 1), final_positions=(2, -2),
                      coalesced=True, crossed=True)
