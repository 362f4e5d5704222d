import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddisrk.errors import NonpositiveStepSize, ParameterOutOfRange, ZeroDimension
from ddisrk.randvars import (THREE_POINT, TRAJ_BLOCK, TWO_POINT, RngStream, build_increments,
                             ihat_from_uniform, increments_batch, increments_from_values,
                             itilde_from_uniform, mixed_area, parse_mode, sample_ihat, uniforms)


def test_uniforms_in_unit_interval():
    u = uniforms(1, 0, 0, 1000, 5)
    assert u.shape == (1000, 5)
    assert u.min() >= 0.0 and u.max() < 1.0


def test_uniforms_addressing_is_slice_invariant():
    full = uniforms(42, 3, 0, 200, 3)
    np.testing.assert_array_equal(full[37:50], uniforms(42, 3, 37, 13, 3))
    np.testing.assert_array_equal(full[5:6], uniforms(42, 3, 5, 1, 3))


def test_uniforms_across_block_boundary():
    first = TRAJ_BLOCK - 3
    joined = uniforms(9, 1, first, 6, 2)
    np.testing.assert_array_equal(joined[:3], uniforms(9, 1, first, 3, 2))
    np.testing.assert_array_equal(joined[3:], uniforms(9, 1, TRAJ_BLOCK, 3, 2))


def test_streams_differ_by_seed_and_step():
    a = uniforms(1, 0, 0, 50, 1)
    assert not np.array_equal(a, uniforms(2, 0, 0, 50, 1))
    assert not np.array_equal(a, uniforms(1, 1, 0, 50, 1))


def test_three_point_law():
    h = 0.3
    x = ihat_from_uniform(uniforms(5, 0, 0, 400_000, 1)[:, 0], h)
    r = math.sqrt(3 * h)
    assert set(np.unique(x)) <= {-r, 0.0, r}
    n = x.size
    for v, p in ((-r, 1 / 6), (0.0, 2 / 3), (r, 1 / 6)):
        freq = np.mean(x == v)
        assert abs(freq - p) < 5 * math.sqrt(p * (1 - p) / n)
    # moments of N(0, h) up to order five
    assert abs(np.mean(x)) < 5 * math.sqrt(h / n)
    assert np.mean(x**2) == pytest.approx(h, rel=0.01)
    assert np.mean(x**4) == pytest.approx(3 * h * h, rel=0.02)


def test_two_point_law():
    h = 0.5
    x = ihat_from_uniform(uniforms(5, 0, 0, 100_000, 1)[:, 0], h, TWO_POINT)
    assert set(np.unique(x)) == {-math.sqrt(h), math.sqrt(h)}
    assert np.mean(x**2) == pytest.approx(h, rel=1e-12)
    assert abs(np.mean(x > 0) - 0.5) < 0.01


@given(st.floats(0.0, 1.0, exclude_max=True), st.floats(1e-6, 10.0))
def test_ihat_maps_into_support(u, h):
    r = math.sqrt(3 * h)
    v = float(ihat_from_uniform(u, h))
    assert v in (-r, 0.0, r)
    w = float(itilde_from_uniform(u, h))
    assert w in (-math.sqrt(h), math.sqrt(h))


@settings(max_examples=50)
@given(st.integers(1, 6), st.floats(1e-4, 2.0))
def test_mixed_area_structure(m, h):
    inc = increments_batch(h, m, THREE_POINT, 11, 0, 0, 4)
    kl = inc.ihatkl
    I = inc.ihat
    for k in range(m):
        np.testing.assert_allclose(kl[:, k, k], 0.5 * (I[:, k] ** 2 - h), atol=1e-14)
        for l in range(m):
            if l != k:
                np.testing.assert_allclose(kl[:, k, l] + kl[:, l, k], I[:, k] * I[:, l], atol=1e-14)


def test_mixed_area_sign_convention():
    h = 0.25
    kl = mixed_area(h, [1.0, 2.0, 3.0], [0.5, -0.5])
    sq = math.sqrt(h)
    assert kl[0, 1] == pytest.approx(0.5 * (2.0 - sq * 0.5))
    assert kl[1, 0] == pytest.approx(0.5 * (2.0 + sq * 0.5))
    assert kl[1, 2] == pytest.approx(0.5 * (6.0 - sq * -0.5))
    assert kl[2, 0] == pytest.approx(0.5 * (3.0 + sq * 0.5))


def test_batch_uses_two_m_minus_one_draws():
    h, m = 0.1, 4
    inc = increments_batch(h, m, THREE_POINT, 3, 7, 10, 5)
    u = uniforms(3, 7, 10, 5, 2 * m - 1)
    np.testing.assert_array_equal(inc.ihat, ihat_from_uniform(u[:, :m], h))
    np.testing.assert_array_equal(inc.itilde, itilde_from_uniform(u[:, m:], h))
    assert inc.m == m


def test_single_trajectory_matches_batch_row():
    b = increments_batch(0.2, 3, THREE_POINT, 8, 2, 0, 10)
    one = build_increments(0.2, 3, THREE_POINT, RngStream(8, trajectory=6, step=2))
    np.testing.assert_array_equal(one.ihat, b.ihat[6])
    np.testing.assert_array_equal(one.ihatkl, b.ihatkl[6])
    assert sample_ihat(0.2, THREE_POINT, RngStream(8, 6, 2)) == b.ihat[6, 0]


def test_increments_from_values_reshapes_itilde():
    inc = increments_from_values(0.5, [[0.1, 0.2]], [0.7])
    assert inc.itilde.shape == (1, 1)


def test_errors():
    with pytest.raises(NonpositiveStepSize):
        increments_batch(0.0, 1, THREE_POINT, 0, 0, 0, 1)
    with pytest.raises(ZeroDimension):
        increments_batch(0.1, 0, THREE_POINT, 0, 0, 0, 1)
    with pytest.raises(ParameterOutOfRange):
        parse_mode("4pt")
    assert parse_mode("2pt") == TWO_POINT and parse_mode("3PT") == THREE_POINT
