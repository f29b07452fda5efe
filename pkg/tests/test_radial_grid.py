import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from radial_aggregation import errors
from radial_aggregation.potential import ball_volume
from radial_aggregation.radial_grid import (RadialProfile, clenshaw_curtis, l1_distance, lm_norm_m,
                                            make_grid, mass, normalize_mass, profile_from_function,
                                            resample)


@pytest.mark.parametrize("N,R,n,want", [(1, 1.0, 64, 2.0), (3, 1.0, 128, 4 * math.pi / 3),
                                        (2, 2.0, 64, 4 * math.pi)])
def test_volume_weights_sum_to_ball_volume(N, R, n, want):
    grid = make_grid(N, R, n)
    assert grid.volume_weights.sum() == pytest.approx(want, rel=1e-6)
    assert grid.ball_volume == pytest.approx(want, rel=1e-14)


def test_nodes_structure():
    grid = make_grid(2, 3.0, 33)
    x = grid.nodes
    assert x[0] == 0.0 and x[-1] == 3.0
    assert np.all(np.diff(x) > 0)
    assert np.all(grid.quad_weights > 0)
    with pytest.raises(ValueError):
        grid.nodes[0] = 1.0


def test_bad_resolution():
    with pytest.raises(errors.BadResolution):
        make_grid(1, 1.0, 7)


def test_clenshaw_curtis_exact_on_polynomials():
    x, w = clenshaw_curtis(17)
    for k in range(16):
        want = 2 / (k + 1) if k % 2 == 0 else 0.0
        assert w @ x**k == pytest.approx(want, rel=1e-13, abs=1e-15)


@pytest.mark.parametrize("N", [1, 2, 3])
def test_mass_of_constant(N):
    grid = make_grid(N, 1.7, 64)
    p = profile_from_function(grid, lambda r: 0.3 + 0 * r)
    assert mass(p) == pytest.approx(0.3 * ball_volume(N, 1.7), rel=1e-10)
    assert lm_norm_m(p, 2.5) == pytest.approx(0.3**2.5 * ball_volume(N, 1.7), rel=1e-10)
    assert mass(p.with_values(np.zeros_like(p.values))) == 0.0


def test_gaussian_mass_1d():
    grid = make_grid(1, 8.0, 128)
    p = profile_from_function(grid, lambda r: np.exp(-r**2 / 2) / math.sqrt(2 * math.pi))
    assert mass(p) == pytest.approx(1.0, abs=1e-6)


def test_lm_norm_of_normalized_indicator():
    grid = make_grid(2, 1.5, 64)
    p = normalize_mass(profile_from_function(grid, lambda r: np.ones_like(r)))
    assert lm_norm_m(p, 2.0) == pytest.approx(1 / grid.ball_volume, rel=1e-10)


def test_lm_norm_against_fine_trapezoid():
    N, R, m = 3, 2.0, 1.7
    f = lambda r: (1 + np.cos(np.pi * r / R)) * np.exp(-r)
    p = profile_from_function(make_grid(N, R, 128), f)
    r = np.linspace(0, R, 1_000_001)
    want = 4 * math.pi * np.trapezoid(f(r) ** m * r**2, r)
    assert lm_norm_m(p, m) == pytest.approx(want, rel=1e-8)
    with pytest.raises(ValueError):
        lm_norm_m(p, 1.0)


def test_normalize_mass():
    grid = make_grid(3, 2.0, 64)
    p = profile_from_function(grid, lambda r: np.exp(-r))
    a = normalize_mass(p)
    b = normalize_mass(p.with_values(7 * p.values))
    np.testing.assert_allclose(a.values, b.values, rtol=1e-14)
    assert mass(a) == pytest.approx(1.0, abs=1e-12)
    c = normalize_mass(profile_from_function(grid, lambda r: np.ones_like(r)))
    np.testing.assert_allclose(c.values, 3 / (4 * math.pi * 8), rtol=1e-10)
    with pytest.raises(errors.ZeroMass):
        normalize_mass(p.with_values(np.zeros(grid.n)))


def test_profile_rejects_misaligned_values():
    grid = make_grid(1, 1.0, 16)
    with pytest.raises(ValueError):
        RadialProfile(grid, np.ones(15))


def test_resample():
    g1 = make_grid(2, 3.0, 64)
    p = profile_from_function(g1, lambda r: np.exp(-r**2))
    same = resample(p, make_grid(2, 3.0, 64))
    np.testing.assert_array_equal(same.values, p.values)
    fine = resample(p, make_grid(2, 3.0, 128))
    back = resample(fine, g1)
    assert np.max(np.abs(back.values - p.values)) <= 1e-5
    big = make_grid(2, 6.0, 64)
    ext = resample(p, big)
    assert np.all(ext.values[big.nodes > 3.0] == 0.0)
    with pytest.raises(errors.DimensionMismatch):
        resample(p, make_grid(3, 3.0, 64))


def test_monotone_flag_and_support():
    grid = make_grid(1, 2.0, 64)
    p = profile_from_function(grid, lambda r: np.maximum(1 - r, 0))
    assert p.is_nonincreasing()
    assert p.support_radius() == pytest.approx(1.0, abs=grid.local_spacing(1.0))
    q = profile_from_function(grid, lambda r: r)
    assert not q.is_nonincreasing()


def test_serialization_roundtrip(tmp_path):
    grid = make_grid(2, 1.5, 32)
    p = profile_from_function(grid, lambda r: np.exp(-r))
    text = p.to_csv(tmp_path / "rho.csv")
    assert text.splitlines()[0] == "r,rho"
    q = RadialProfile.from_csv(tmp_path / "rho.csv", 2)
    np.testing.assert_array_equal(q.values, p.values)
    np.testing.assert_array_equal(q.grid.nodes, p.grid.nodes)
    p.to_json(tmp_path / "rho.json")
    s = RadialProfile.from_json(tmp_path / "rho.json")
    np.testing.assert_array_equal(s.values, p.values)


def test_interpolation_is_zero_outside():
    grid = make_grid(1, 1.0, 32)
    p = profile_from_function(grid, lambda r: 1 - r**2)
    assert p(2.0) == 0.0
    assert p(0.5) == pytest.approx(0.75, rel=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.floats(0.2, 10), st.floats(0.1, 5), st.floats(1.05, 4))
def test_mass_properties(N, R, scale, m):
    grid = make_grid(N, R, 48)
    p = profile_from_function(grid, lambda r: np.exp(-r / R))
    s = p.with_values(scale * p.values)
    assert mass(s) == pytest.approx(scale * mass(p), rel=1e-12)
    assert lm_norm_m(s, m) == pytest.approx(scale**m * lm_norm_m(p, m), rel=1e-12)
    assert mass(normalize_mass(s)) == pytest.approx(1.0, abs=1e-12)
    assert l1_distance(normalize_mass(s), normalize_mass(p)) < 1e-12
