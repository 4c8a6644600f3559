import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssrecon.errors import DegenerateSplitError, ParameterError
from ssrecon.sampling import (GAUSSIAN, UNIFORM, SplitSpec, derive_seed, make_omega_mask, selection_weights,
                              split_omega, splitmix64, uniform_open)

RHO_SWEEP = (0.05, 0.1, 0.2, 0.3, 0.4)


def splitmix64_reference(seed, n):
    # scalar transcription of the published C reference generator
    m = (1 << 64) - 1
    state, out = seed, []
    for _ in range(n):
        state = (state + 0x9E3779B97F4A7C15) & m
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & m
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & m
        out.append(z ^ (z >> 31))
    return out


def test_splitmix64_known_values():
    assert int(splitmix64(0, 1)[0]) == 0xE220A8397B1DCDAF
    assert [int(v) for v in splitmix64(1234567, 3)] == [
        6457827717110365317, 3203168211198807973, 9817491932198370423]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**64 - 1), st.integers(1, 20))
def test_splitmix64_matches_scalar_reference(seed, n):
    assert [int(v) for v in splitmix64(seed, n)] == splitmix64_reference(seed, n)


def test_uniform_open_in_unit_interval():
    u = uniform_open(99, 10000)
    assert u.min() > 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 0.01


def test_derive_seed_order_matters():
    assert derive_seed(1, 2) != derive_seed(2, 1)
    assert derive_seed(5, 6, 7) == derive_seed(5, 6, 7)


def test_mask_64_r4_acs8():
    m = make_omega_mask(64, 64, 4, 8)
    cols = set(range(0, 64, 4)) | set(range(28, 36))
    assert len(cols) == 22
    assert set(np.flatnonzero(m.picked[0])) == cols
    assert m.count == 22 * 64 == 1408
    assert m.acs_cols == (28, 35)
    assert np.all(m.picked == m.picked[0])


def test_mask_trivial_cases():
    assert make_omega_mask(64, 64, 1, 0).count == 4096
    assert make_omega_mask(64, 64, 4, 0).count == 1024
    assert make_omega_mask(64, 64, 4, 0).acs_cols is None


def test_acs_columns_fully_picked():
    m = make_omega_mask(32, 32, 8, 6)
    assert np.all(m.picked[m.acs_grid()])


@pytest.mark.parametrize("accel,acs", [(0, 4), (4, 65), (4, -1)])
def test_mask_parameter_errors(accel, acs):
    with pytest.raises(ParameterError):
        make_omega_mask(64, 64, accel, acs)


def test_split_counts_at_rho_04():
    s = split_omega(make_omega_mask(64, 64, 4, 8), 0.4, GAUSSIAN, seed=0)
    assert s.lam.sum() == 563
    assert s.theta.sum() == 845


def test_split_singleton_lambda():
    m = make_omega_mask(64, 64, 4, 8)
    s = split_omega(m, 0.6 / 1408, UNIFORM, seed=3)
    assert s.lam.sum() == 1
    assert s.theta.sum() == 1407
    assert not np.any(s.theta & s.lam)


def test_split_determinism():
    m = make_omega_mask(64, 64, 4, 8)
    a = split_omega(m, 0.3, GAUSSIAN, seed=11)
    b = split_omega(m, 0.3, GAUSSIAN, seed=11)
    c = split_omega(m, 0.3, GAUSSIAN, seed=12)
    assert np.array_equal(a.lam, b.lam) and np.array_equal(a.theta, b.theta)
    assert not np.array_equal(a.lam, c.lam)


@pytest.mark.parametrize("rho", [0.0, 1.0, -0.1, 1.5])
def test_split_rho_range(rho):
    with pytest.raises(ParameterError):
        split_omega(make_omega_mask(16, 16, 4, 4), rho)


def test_split_degenerate_after_rounding():
    m = make_omega_mask(8, 8, 4, 0)  # 16 points
    with pytest.raises(DegenerateSplitError):
        split_omega(m, 0.01, UNIFORM)
    with pytest.raises(DegenerateSplitError):
        split_omega(m, 0.99, UNIFORM)


def test_rounding_is_half_to_even():
    m = make_omega_mask(8, 8, 4, 0)  # |Omega| = 16
    # 0.15625 * 16 = 2.5 -> 2, 0.21875 * 16 = 3.5 -> 4
    assert split_omega(m, 0.15625, UNIFORM).lam.sum() == 2
    assert split_omega(m, 0.21875, UNIFORM).lam.sum() == 4


def test_exclude_acs():
    m = make_omega_mask(64, 64, 4, 8)
    s = split_omega(m, 0.4, GAUSSIAN, seed=1, exclude_acs=True)
    assert not np.any(s.lam & m.acs_grid())
    assert s.lam.sum() == 563
    # by default the ACS block is eligible, and the Gaussian weighting draws from it
    assert np.any(split_omega(m, 0.4, GAUSSIAN, seed=1).lam & m.acs_grid())


def test_codes_roundtrip():
    s = split_omega(make_omega_mask(16, 16, 4, 4), 0.25, UNIFORM, seed=2)
    back = SplitSpec.from_codes(s.codes(), s.rho, s.scheme, s.seed)
    assert np.array_equal(back.theta, s.theta) and np.array_equal(back.lam, s.lam)


def test_gaussian_weights_sigma():
    w = selection_weights((64, 64), GAUSSIAN)
    assert w[32, 32] == 1.0
    assert np.isclose(w[32, 48], np.exp(-0.5))  # one sigma = 16 pixels
    with pytest.raises(ParameterError):
        selection_weights((8, 8), "poisson")


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**64 - 1), rho=st.sampled_from(RHO_SWEEP),
       scheme=st.sampled_from([UNIFORM, GAUSSIAN]))
def test_partition_and_cardinality(seed, rho, scheme):
    m = make_omega_mask(64, 64, 4, 8)
    s = split_omega(m, rho, scheme, seed)
    assert not np.any(s.theta & s.lam)
    assert np.array_equal(s.theta | s.lam, m.picked)
    assert s.lam.sum() == round(rho * 1408)


def test_gaussian_density_concentrates_centrally():
    m = make_omega_mask(64, 64, 4, 8)
    counts = np.zeros((64, 64))
    for seed in range(1000):
        counts += split_omega(m, 0.2, GAUSSIAN, seed).lam
    freq = counts / 1000
    rr, cc = np.meshgrid(np.arange(64) - 32, np.arange(64) - 32, indexing="ij")
    dist = np.hypot(rr, cc)[m.picked]
    f = freq[m.picked]
    order = np.argsort(dist, kind="stable")
    quarter = order.size // 4
    assert f[order[:quarter]].mean() > f[order[-quarter:]].mean()


def test_weighted_draw_probabilities():
    # a single weighted draw picks each point with probability proportional to
    # its weight; three points at 0, 1 and 2 sigma from the center
    mask = np.zeros((1, 8), bool)
    mask[0, [4, 5, 6]] = True
    w = selection_weights((1, 8), GAUSSIAN, sigma=1.0)[0, [4, 5, 6]]
    hits = np.zeros(3)
    n = 20000
    for seed in range(n):
        lam = split_omega(mask, 0.34, GAUSSIAN, seed, sigma=1.0).lam[0, [4, 5, 6]]
        hits += lam
    expected = w / w.sum()
    assert np.allclose(hits / n, expected, atol=0.015)
