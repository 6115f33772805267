import numpy as np
import pytest

from vmint.kernels import KernelSpec, build_kernel, symmetrize
from vmint.report import wilson_interval
from vmint.walks import (
    HalfLineGeq,
    HalfLineLeq,
    IntervalComplement,
    Point,
    StoppingSpec,
    exact_solve,
    half_line_geq,
    half_line_leq,
    hit_before,
    point,
    potential_kernel,
    return_tail,
    run_difference_walk,
    run_walk,
    survival_from,
)

NN = build_kernel(KernelSpec("nearest_neighbor"))
U2 = build_kernel(KernelSpec("uniform_range", (2,)))

# frozen by hand: interior of (0,4) under the simple walk, green matrix of
# (I - Q)^-1 with Q tridiagonal(1/2); det = 1/2, cofactors give these visits
GREEN_04 = np.array([[1.5, 1.0, 0.5], [1.0, 2.0, 1.0], [0.5, 1.0, 1.5]])


def test_gamblers_ruin_exact():
    es = exact_solve(NN, (0, 10))
    assert es.absorption_prob(3, "right") == pytest.approx(0.3, abs=1e-10)
    assert es.absorption_prob(3, "left") == pytest.approx(0.7, abs=1e-10)
    total = es.absorption.sum(axis=1)
    assert np.all(np.abs(total - 1.0) <= 1e-12)


def test_green_matrix_hand_values():
    es = exact_solve(NN, (0, 4))
    assert np.allclose(es.green, GREEN_04, atol=1e-12)


def test_green_ratio_identity():
    # g(x, l) equals P^x(hit l first) / P^l(escape before return), both read
    # off the same solve; catches indexing and conditioning mistakes
    es = exact_solve(symmetrize(U2), (0, 8))
    for x in (1, 2, 5):
        for l in (1, 3, 6):
            lhs = es.green_value(x, l)
            rhs = es.hit_before_prob(x, l) / es.escape_before_return(l)
            assert lhs == pytest.approx(rhs, abs=1e-10)


def test_exit_site_decomposition():
    es = exact_solve(U2, (0, 6))
    for x in (1, 3, 5):
        left = es.exit_site_prob(x, 0) + es.exit_site_prob(x, -1)
        assert left == pytest.approx(es.absorption_prob(x, "left"), abs=1e-12)


def test_hit_interior_point_vs_independent_solve():
    # independent oracle: make l absorbing by excising it from the interior
    # and solving the smaller system directly
    kernel = U2
    lo, hi, l = 0, 8, 3
    interior = [s for s in range(lo + 1, hi) if s != l]
    n = len(interior)
    Q = np.zeros((n, n))
    b = np.zeros(n)
    for i, s in enumerate(interior):
        for j, s2 in enumerate(interior):
            Q[i, j] = kernel.mass_at(s2 - s)
        b[i] = kernel.mass_at(l - s)
    u = np.linalg.solve(np.eye(n) - Q, b)
    es = exact_solve(kernel, (lo, hi))
    for i, s in enumerate(interior):
        assert es.hit_before_prob(s, l) == pytest.approx(u[i], abs=1e-10)


def test_interval_ceiling_enforced():
    with pytest.raises(ValueError, match="ceiling"):
        exact_solve(NN, (0, 5000))
    exact_solve(NN, (0, 5000), ceiling=5100)


def test_uncovered_classes_rejected():
    with pytest.raises(ValueError, match="cover"):
        exact_solve(U2, (0, 6), classes=[("left_pt", Point(0)), ("right", HalfLineGeq(6))])


def test_absorption_mc_coverage():
    # 20 random instances; exact absorption should land in the Wilson 95%
    # interval of a 10^4-rep race in at least 18 of them
    pool = [
        NN,
        U2,
        build_kernel(KernelSpec("uniform_range", (3,))),
        build_kernel(KernelSpec("geometric", (0.6,))),
        build_kernel(KernelSpec("power_law", (1.5, 30))),
    ]
    rng = np.random.default_rng(987)
    covered = 0
    for trial in range(20):
        k = pool[trial % len(pool)]
        width = int(rng.integers(4, 15))
        lo = int(rng.integers(-5, 5))
        hi = lo + width
        start = int(rng.integers(lo + 1, hi))
        es = exact_solve(k, (lo, hi))
        truth = es.absorption_prob(start, "left")
        rep = hit_before(k, start, HalfLineLeq(lo), HalfLineGeq(hi), 10000, rng)
        covered += rep.ci_low <= truth <= rep.ci_high
    assert covered >= 18


def test_hit_before_time_zero_convention():
    rng = np.random.default_rng(3)
    rep = hit_before(NN, 0, point(0), point(5), 100, rng)
    assert rep.point == 1.0  # start inside target a, lazy convention
    # strict convention: from 0, P(return to 0 before touching 2) = 3/4
    rep = hit_before(NN, 0, point(0), point(2), 40000, rng, strict_return=True)
    assert rep.ci_low <= 0.75 <= rep.ci_high


def test_return_tail_four_steps_exact():
    rng = np.random.default_rng(11)
    rep = return_tail(NN, 4, 200000, rng)
    assert rep.ci_low <= 0.375 <= rep.ci_high


def test_return_tail_sqrt_decay():
    # n * P(no return within n^2 steps) approaches sqrt(2/pi)
    rng = np.random.default_rng(12)
    rep = return_tail(NN, 400, 400000, rng)
    assert 20 * rep.point == pytest.approx(np.sqrt(2 / np.pi), rel=0.08)


def test_survival_bands():
    # P^x(not yet at 0 by time t) should sit within a factor 3 of
    # min(|x|/sqrt(t), 1) for moderate x, t
    rng = np.random.default_rng(5)
    for kernel in (NN, U2):
        for x, t in ((1, 16.0), (2, 49.0), (4, 64.0)):
            rep = survival_from(kernel, x, t, 20000, rng)
            ref = min(abs(x) / np.sqrt(t), 1.0)
            assert ref / 3 <= rep.point <= min(3 * ref, 1.0), (kernel.family, x, t)


def test_survival_from_zero_is_zero():
    rng = np.random.default_rng(6)
    assert survival_from(NN, 0, 5.0, 50, rng).point == 0.0


def test_run_walk_horizon_and_occupation():
    rng = np.random.default_rng(8)
    spec = StoppingSpec(targets=(point(1000),), time_horizon=2.5)
    out = run_walk(NN, 0, spec, rng, track_occupation=True)
    assert out.horizon_expired
    assert out.hit_time is None
    assert sum(out.occupation.values()) == pytest.approx(2.5, abs=1e-12)


def test_run_walk_occupation_matches_green():
    rng = np.random.default_rng(9)
    spec = StoppingSpec(targets=(IntervalComplement(0, 4),))
    occ1 = np.empty(4000)
    for i in range(occ1.size):
        out = run_walk(NN, 1, spec, rng, track_occupation=True)
        occ1[i] = out.occupation.get(1, 0.0)
    assert occ1.mean() == pytest.approx(1.5, abs=0.1)  # g(1,1) at jump rate 1
    occ2 = np.empty(4000)
    for i in range(occ2.size):
        out = run_walk(NN, 1, spec, rng, jump_rate=2.0, track_occupation=True)
        occ2[i] = out.occupation.get(1, 0.0)
    assert occ2.mean() == pytest.approx(0.75, abs=0.07)  # visits / jump rate


def test_clock_invariance_of_hitting_order():
    # the exponential clock cannot change which target is reached first
    rng = np.random.default_rng(10)
    spec = StoppingSpec(targets=(HalfLineGeq(4), HalfLineLeq(0)))
    counts = []
    for rate in (1.0, 5.0):
        wins = sum(
            run_walk(U2, 1, spec, rng, jump_rate=rate).first_hit == 0
            for _ in range(3000)
        )
        counts.append(wins / 3000)
    es = exact_solve(U2, (0, 4))
    truth = es.absorption_prob(1, "right")
    for p in counts:
        lo, hi = wilson_interval(round(p * 3000), 3000)
        assert lo <= truth <= hi


def test_difference_walk_race_matches_symmetrized_solve():
    # difference of two walks: symmetrized law; hitting order agrees with
    # the dense solve on the symmetrized kernel
    skew = build_kernel(KernelSpec("geometric", (0.4,)))
    rng = np.random.default_rng(14)
    spec = StoppingSpec(targets=(HalfLineLeq(0), HalfLineGeq(6)))
    wins = sum(
        run_difference_walk(skew, 2, spec, rng).first_hit == 0 for _ in range(4000)
    )
    es = exact_solve(symmetrize(skew), (0, 6))
    lo, hi = wilson_interval(wins, 4000)
    assert lo <= es.absorption_prob(2, "left") <= hi


def test_potential_kernel_simple_walk_is_abs():
    a = potential_kernel(NN, [1, 2, 3], terms=30000)
    assert a[0] == pytest.approx(1.0, abs=1e-9)
    assert a[1] == pytest.approx(2.0, rel=0.02)
    assert a[2] == pytest.approx(3.0, rel=0.02)


@pytest.fixture(scope="module")
def a_uniform2():
    return potential_kernel(U2, [1, 2, 3, 8, -8], terms=20000)


def test_potential_kernel_symmetric_in_x(a_uniform2):
    assert a_uniform2[3] == a_uniform2[4]


def test_potential_slope_is_reciprocal_variance(a_uniform2):
    # a(x)/|x| tends to 1/(sum x^2 p(x)); 25% band at x = 8
    assert a_uniform2[3] / 8 == pytest.approx(1 / 2.5, rel=0.25)
    a_nn = potential_kernel(NN, 8, terms=20000)
    assert a_nn / 8 == pytest.approx(1.0, rel=0.25)


def test_escape_probability_reciprocal_of_potential(a_uniform2):
    # P^0(reach x before returning to 0) = 1 / (2 a(x)), checked by a
    # strict-return race independent of the series computation
    rng = np.random.default_rng(15)
    rep = hit_before(U2, 0, point(2), point(0), 30000, rng, strict_return=True)
    predicted = 1.0 / (2.0 * a_uniform2[1])
    assert rep.point == pytest.approx(predicted, abs=0.012)
    rep = hit_before(NN, 0, point(1), point(0), 30000, rng, strict_return=True)
    assert rep.ci_low <= 0.5 <= rep.ci_high  # a(1) = 1 exactly


def test_potential_kernel_rejects_asymmetric():
    skew = build_kernel(KernelSpec("geometric", (0.4,)))
    # geometric is symmetric; build a genuinely skewed table instead
    import numpy as _np

    from vmint.kernels import Kernel

    k = Kernel(_np.array([-1, 2]), _np.array([2 / 3, 1 / 3]), "skew")
    with pytest.raises(ValueError, match="symmetriz"):
        potential_kernel(k, 1, terms=10)
    potential_kernel(skew, 1, terms=10)


def test_potential_kernel_leak_guard():
    with pytest.raises(ValueError, match="window"):
        potential_kernel(NN, 1, terms=200, window=5)


def test_stopping_spec_validation():
    with pytest.raises(ValueError, match="targets or a time horizon"):
        StoppingSpec()
    with pytest.raises(ValueError, match="lo < hi"):
        IntervalComplement(3, 3)


def test_target_constructors():
    assert point(3) == Point(3)
    assert half_line_leq(0) == HalfLineLeq(0)
    assert half_line_geq(2) == HalfLineGeq(2)
