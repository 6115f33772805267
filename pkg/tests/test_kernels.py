import math

import numpy as np
import pytest
from scipy import stats

from vmint.kernels import (
    KernelSpec,
    build_kernel,
    moment,
    parse_kernel_spec,
    sample_step,
    save_table,
    split_at,
    symmetrize,
    tail_mass,
)

# oracle: p(1) on power_law(1.5, 4) is 0.5 / (1 + 2^-2.5 + 3^-2.5 + 4^-2.5),
# evaluated by scalar arithmetic independent of the vectorized builder
P1_POWER_15_4 = 0.5 / (1.0 + 2.0**-2.5 + 3.0**-2.5 + 4.0**-2.5)

ALL_FAMILIES = [
    KernelSpec("nearest_neighbor"),
    KernelSpec("uniform_range", (2,)),
    KernelSpec("uniform_range", (5,)),
    KernelSpec("geometric", (0.5,)),
    KernelSpec("power_law", (1.5, 100)),
    KernelSpec("power_law", (1.2, 1000)),
]


@pytest.mark.parametrize("spec", ALL_FAMILIES, ids=lambda s: s.family + str(s.params))
def test_mass_normalizes(spec):
    k = build_kernel(spec)
    assert abs(k.masses.sum() - 1.0) <= 1e-12
    assert np.all(k.masses > 0)
    assert 0 not in k.sites
    assert abs(k.cdf[-1] - 1.0) == 0.0


@pytest.mark.parametrize("spec", ALL_FAMILIES, ids=lambda s: s.family + str(s.params))
def test_tail_tables_monotone_and_anchored(spec):
    k = build_kernel(spec)
    assert np.all(np.diff(k.tail_pos) <= 0)
    assert np.all(np.diff(k.tail_neg) <= 0)
    assert tail_mass(k, 1, "two") == pytest.approx(1.0, abs=1e-12)
    assert k.tail_pos[-1] == 0.0
    # one-sided tails rebuild the two-sided one
    for m in (1, 2, 3, 10):
        assert tail_mass(k, m, "two") == pytest.approx(
            tail_mass(k, m, "pos") + tail_mass(k, m, "neg"), abs=1e-15
        )


def test_nearest_neighbor_exact():
    k = build_kernel(KernelSpec("nearest_neighbor"))
    assert k.sites.tolist() == [-1, 1]
    assert k.masses.tolist() == [0.5, 0.5]
    assert moment(k, 2) == 1.0
    assert tail_mass(k, 2, "two") == 0.0


def test_uniform_range2_tails_exact():
    k = build_kernel(KernelSpec("uniform_range", (2,)))
    assert tail_mass(k, 2, "pos") == 0.25
    assert tail_mass(k, 2, "two") == 0.5
    # double tails: sum over j >= m of the one-sided tail
    assert k.dtail_pos[1] == pytest.approx(0.75, abs=1e-15)
    assert k.dtail_pos[2] == pytest.approx(0.25, abs=1e-15)
    assert k.dtail_pos[3] == 0.0
    assert moment(k, 2) == pytest.approx(2.5, abs=1e-15)


def test_power_law_normalizer_oracle():
    k = build_kernel(KernelSpec("power_law", (1.5, 4)))
    assert k.mass_at(1) == pytest.approx(P1_POWER_15_4, rel=1e-14)
    assert k.mass_at(-3) == pytest.approx(P1_POWER_15_4 * 3.0**-2.5, rel=1e-14)
    assert k.radius == 4


def test_geometric_half_exact_moments():
    # q = 1/2: normalizer is 2 * q/(1-q) = 2, so p(m) = 2^-|m| / 2
    k = build_kernel(KernelSpec("geometric", (0.5,)))
    assert k.mass_at(1) == pytest.approx(0.25, abs=1e-15)
    assert k.mass_at(-2) == pytest.approx(0.125, abs=1e-15)
    # E|x| = q/(1-q)^2 = 2
    assert moment(k, 1) == pytest.approx(2.0, abs=1e-12)


def test_generalized_one_sided_tail():
    k = build_kernel(KernelSpec("uniform_range", (2,)))
    # m <= 0 folds in the negative support
    assert tail_mass(k, 0, "pos") == pytest.approx(0.5, abs=1e-15)
    assert tail_mass(k, -1, "pos") == pytest.approx(0.75, abs=1e-15)
    assert tail_mass(k, -2, "pos") == pytest.approx(1.0, abs=1e-15)
    assert tail_mass(k, -7, "neg") == pytest.approx(1.0, abs=1e-15)


def test_split_partitions_exactly():
    k = build_kernel(KernelSpec("power_law", (1.5, 100)))
    low, high = split_at(k, 10)
    assert np.all(np.abs(low.sites) <= 10)
    assert np.all(np.abs(high.sites) > 10)
    assert low.total_mass + high.total_mass == pytest.approx(1.0, abs=1e-12)
    merged = dict(zip(low.sites.tolist(), low.masses.tolist()))
    merged.update(zip(high.sites.tolist(), high.masses.tolist()))
    for x, m in zip(k.sites.tolist(), k.masses.tolist()):
        assert merged[x] == m  # masses copied, not recomputed


def test_split_far_tail_matches_tail_mass():
    k = build_kernel(KernelSpec("power_law", (1.2, 1000)))
    _, high = split_at(k, 31)
    assert high.total_mass == pytest.approx(tail_mass(k, 32, "two"), abs=1e-15)


def test_symmetrize_zeroes_mean(tmp_path):
    f = tmp_path / "skew.tbl"
    f.write_text("1 0.7\n-1 0.2\n3 0.1\n")
    k = build_kernel(KernelSpec("table", (str(f),)))
    assert abs(k.mean()) > 0.1
    s = symmetrize(k)
    assert s.mean() == pytest.approx(0.0, abs=1e-15)
    assert s.mass_at(3) == pytest.approx(0.05, abs=1e-15)
    assert abs(s.masses.sum() - 1.0) <= 1e-12


def test_origin_mass_dropped_with_warning(tmp_path):
    f = tmp_path / "z.tbl"
    f.write_text("0 0.5\n1 0.25\n-1 0.25\n")
    with pytest.warns(UserWarning, match="origin"):
        k = build_kernel(KernelSpec("table", (str(f),)))
    assert k.mass_at(1) == pytest.approx(0.5, abs=1e-15)


def test_reducible_support_rejected(tmp_path):
    f = tmp_path / "even.tbl"
    f.write_text("2 0.5\n-2 0.5\n")
    with pytest.raises(ValueError, match="not Z"):
        build_kernel(KernelSpec("table", (str(f),)))
    # gcd(2, 3) = 1 is fine even though neither site is 1
    f2 = tmp_path / "coprime.tbl"
    f2.write_text("2 0.5\n3 0.5\n")
    build_kernel(KernelSpec("table", (str(f2),)))


def test_center_flag_validates_mean(tmp_path):
    f = tmp_path / "skew.tbl"
    f.write_text("1 0.6\n-1 0.4\n")
    with pytest.raises(ValueError, match="symmetrize"):
        build_kernel(KernelSpec("table", (str(f),), center=True))
    build_kernel(KernelSpec("uniform_range", (3,), center=True))


def test_table_roundtrip_exact(tmp_path):
    k = build_kernel(KernelSpec("power_law", (1.2, 50)))
    path = tmp_path / "k.tbl"
    save_table(k, path)
    k2 = build_kernel(KernelSpec("table", (str(path),)))
    assert np.array_equal(k.sites, k2.sites)
    assert np.array_equal(k.masses, k2.masses)


def test_bad_tables_rejected(tmp_path):
    neg = tmp_path / "neg.tbl"
    neg.write_text("1 -0.5\n-1 1.5\n")
    with pytest.raises(ValueError, match="negative"):
        build_kernel(KernelSpec("table", (str(neg),)))
    dup = tmp_path / "dup.tbl"
    dup.write_text("1 0.25\n1 0.25\n-1 0.5\n")
    with pytest.raises(ValueError, match="duplicate"):
        build_kernel(KernelSpec("table", (str(dup),)))
    junk = tmp_path / "junk.tbl"
    junk.write_text("1 0.5 extra\n")
    with pytest.raises(ValueError, match="junk.tbl:1"):
        build_kernel(KernelSpec("table", (str(junk),)))


def test_sampling_matches_masses_chisquare():
    k = build_kernel(KernelSpec("uniform_range", (3,)))
    rng = np.random.default_rng(20240811)
    draws = sample_step(k, rng, size=60000)
    counts = np.array([(draws == x).sum() for x in k.sites])
    expected = 60000 * k.masses
    assert stats.chisquare(counts, expected).pvalue > 0.001


def test_sampling_heavy_tail_chisquare():
    k = build_kernel(KernelSpec("power_law", (1.5, 50)))
    rng = np.random.default_rng(7)
    draws = sample_step(k, rng, size=80000)
    # bin the tail so expected counts stay above 5; bins cover the support
    edges = [-51, -10, -3, 0, 2, 9, 50]
    counts, probs = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (k.sites > lo) & (k.sites <= hi)
        counts.append(((draws > lo) & (draws <= hi)).sum())
        probs.append(k.masses[sel].sum())
    assert stats.chisquare(counts, 80000 * np.array(probs)).pvalue > 0.001


def test_sample_step_scalar_form():
    k = build_kernel(KernelSpec("nearest_neighbor"))
    rng = np.random.default_rng(0)
    v = sample_step(k, rng)
    assert isinstance(v, int)
    assert v in (-1, 1)


def test_parse_kernel_spec_forms():
    assert parse_kernel_spec("nearest_neighbor").family == "nearest_neighbor"
    s = parse_kernel_spec("uniform_range(2)")
    assert s.params == (2,)
    s = parse_kernel_spec("power_law(1.2, 100000)")
    assert s.params == (1.2, 100000)
    s = parse_kernel_spec("table(/tmp/foo.tbl)")
    assert s.params == ("/tmp/foo.tbl",)
    with pytest.raises(ValueError):
        parse_kernel_spec("banana(1)")
    with pytest.raises(ValueError):
        parse_kernel_spec("uniform_range")


def test_moment_matches_direct_sum():
    k = build_kernel(KernelSpec("geometric", (0.7,)))
    direct = sum(abs(int(x)) ** 2 * float(m) for x, m in zip(k.sites, k.masses))
    assert moment(k, 2) == pytest.approx(direct, rel=1e-14)


@pytest.mark.parametrize("spec", ALL_FAMILIES, ids=lambda s: s.family + str(s.params))
def test_alias_tables_reconstruct_masses(spec):
    # every cell i contributes cut[i]/n to site i and the rest to idx[i];
    # summing cell contributions must give back the pmf exactly
    k = build_kernel(spec)
    n = k.sites.size
    recon = np.zeros(n)
    for i in range(n):
        recon[i] += k.alias_cut[i] / n
        recon[int(k.alias_idx[i])] += (1.0 - k.alias_cut[i]) / n
    assert np.abs(recon - k.masses).max() <= 1e-12
