import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from agestruct import AgeProfile, InvalidArgument, OutOfResolventSet, SurvivalFactors, make_grid, resolvent_apply, transport_step
from agestruct.operators import exit_mass


def test_resolvent_pure_head():
    g = make_grid(5, 500)
    phi = resolvent_apply(0.0, 1.0, 2.0, AgeProfile.zeros(g))
    np.testing.assert_allclose(phi.scalar, 2 * np.exp(-g.nodes), atol=1e-14)


def test_resolvent_constant_tail():
    g = make_grid(5, 500)
    phi = resolvent_apply(0.0, 1.0, 0.0, AgeProfile.constant(g, 1.0))
    np.testing.assert_allclose(phi.scalar, 1 - np.exp(-g.nodes), atol=1e-5)


def test_resolvent_outside_resolvent_set():
    g = make_grid(1, 10)
    with pytest.raises(OutOfResolventSet):
        resolvent_apply(-1.0, 1.0, 0.0, AgeProfile.zeros(g))
    with pytest.raises(OutOfResolventSet):
        resolvent_apply(-2.0, 1.0, 0.0, AgeProfile.zeros(g))


def test_resolvent_second_order():
    # psi(l) = cos(l): phi(a) = int_0^a e^{-k(a-l)} cos l dl in closed form
    lam, gam = 0.5, 1.0
    k = lam + gam

    def exact(a):
        return (k * np.cos(a) + np.sin(a) - k * np.exp(-k * a)) / (1 + k * k)

    errs = []
    for n in (100, 200, 400):
        g = make_grid(4, n)
        phi = resolvent_apply(lam, gam, 0.0, AgeProfile.from_function(g, np.cos))
        errs.append(np.max(np.abs(phi.scalar - exact(g.nodes))))
    assert 3.8 < errs[0] / errs[1] < 4.2
    assert 3.8 < errs[1] / errs[2] < 4.2


@given(st.floats(0, 5, allow_subnormal=False), st.lists(st.floats(0, 10, allow_subnormal=False), min_size=11, max_size=11), st.floats(-0.9, 3))
def test_resolvent_positive(alpha, psi, lam):
    g = make_grid(1, 10)
    phi = resolvent_apply(lam, 1.0, alpha, AgeProfile(g, np.array(psi)))
    assert np.all(phi.scalar >= 0)


def test_survival_factors_constant_rate():
    g = make_grid(2, 20)
    s = SurvivalFactors.from_rate(g, 1.0)
    np.testing.assert_allclose(s.factors, math.exp(-g.da))
    np.testing.assert_allclose(s.along(3), math.exp(-3 * g.da))


@given(st.lists(st.floats(0.5, 4), min_size=21, max_size=21))
def test_survival_bounds(rate):
    g = make_grid(2, 20)
    s = SurvivalFactors.from_rate(g, np.array(rate))
    assert np.all(s.factors > 0) and np.all(s.factors <= 1)
    assert np.all(s.factors <= math.exp(-0.5 * g.da) + 1e-15)


def test_transport_moves_indicator():
    g = make_grid(1, 10)
    s = SurvivalFactors.from_rate(g, 1.0)
    p = np.zeros(11)
    p[4] = 1.0
    out = transport_step(AgeProfile(g, p), s, 0.0).scalar
    expect = np.zeros(11)
    expect[5] = math.exp(-g.da)
    np.testing.assert_allclose(out, expect)


def test_transport_inflow_only():
    g = make_grid(1, 10)
    out = transport_step(AgeProfile.zeros(g), SurvivalFactors.from_rate(g, 1.0), 3.0).scalar
    assert out[0] == 3.0 and np.all(out[1:] == 0)


def test_two_steps_cocycle():
    g = make_grid(1, 10)
    s = SurvivalFactors.from_rate(g, 0.7)
    p = transport_step(AgeProfile.zeros(g), s, 2.0)
    p = transport_step(p, s, 5.0).scalar
    assert p[0] == 5.0
    assert p[1] == pytest.approx(s.factors[0] * 2.0)
    assert np.all(p[2:] == 0)


def test_k_steps_equal_one_shift():
    g = make_grid(2, 40)
    s = SurvivalFactors.from_rate(g, np.linspace(0.5, 2, 41))
    p0 = AgeProfile.from_function(g, lambda a: np.exp(-a) + a)
    p = p0
    for _ in range(7):
        p = transport_step(p, s, 0.0)
    expect = np.zeros(41)
    expect[7:] = s.along(7) * p0.scalar[:-7]
    np.testing.assert_allclose(p.scalar, expect, rtol=1e-13)


@given(st.lists(st.floats(0, 5, allow_subnormal=False), min_size=11, max_size=11), st.lists(st.floats(0, 5, allow_subnormal=False), min_size=11, max_size=11), st.floats(0, 3, allow_subnormal=False), st.floats(0, 3, allow_subnormal=False))
def test_transport_positive_and_monotone(a, bump, b1, b2):
    g = make_grid(1, 10)
    s = SurvivalFactors.from_rate(g, 1.3)
    p = AgeProfile(g, np.array(a))
    q = AgeProfile(g, np.array(a) + np.array(bump))
    sp = transport_step(p, s, b1).scalar
    sq = transport_step(q, s, b1 + b2).scalar
    assert np.all(sp >= 0)
    assert np.all(sp <= sq)


def test_grid_mismatch():
    with pytest.raises(InvalidArgument):
        transport_step(AgeProfile.zeros(make_grid(1, 10)), SurvivalFactors.from_rate(make_grid(1, 5), 1.0), 0.0)


def test_exit_mass():
    g = make_grid(1, 10)
    assert exit_mass(AgeProfile.constant(g, 2.0)) == pytest.approx(0.2)
