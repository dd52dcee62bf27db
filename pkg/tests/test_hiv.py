import numpy as np
import pytest

from agestruct import (
    AgeProfile,
    HivModel,
    HivParams,
    HivState,
    InvalidArgument,
    PreconditionError,
    functional_series,
    hiv_bounds,
    hiv_frozen_simulate,
    hiv_simulate,
    hiv_step,
    make_grid,
    monotone_iterate,
    sandwich_verify,
    spectral_hiv,
)

from conftest import indicator


def params(g, **kw):
    base = dict(s_in=1.0, d=1.0, k=1.0, c=1.0, p_prod=1.0, delta_a=1.0)
    base.update(kw)
    return HivParams.build(g, **base)


def test_params_validation():
    g = make_grid(1, 10)
    with pytest.raises(InvalidArgument):
        params(g, c=0.0)
    with pytest.raises(InvalidArgument):
        params(g, p_prod=-1.0)
    with pytest.raises(InvalidArgument):
        HivParams.build(g, 1, 1, 1, 1, 1.0, 0.5, delta0=1.0)


def test_uninfected_step():
    g = make_grid(1, 10)
    st1 = hiv_step(HivState(0.0, 0.0, AgeProfile.zeros(g)), params(g), g)
    assert st1.T == pytest.approx(0.1 / 1.1, abs=1e-15)
    assert st1.V == 0 and np.all(st1.i.scalar == 0)


def test_virion_decay_without_production():
    g = make_grid(1, 10)
    st1 = hiv_step(HivState(1.0, 2.0, AgeProfile.zeros(g)), params(g, p_prod=0.0, c=3.0), g)
    assert st1.V == pytest.approx(2.0 / 1.3, rel=1e-15)


def test_uninfected_equilibrium_limit():
    g = make_grid(5, 500)
    tr = hiv_simulate(HivState(0.0, 0.0, AgeProfile.zeros(g)), params(g, s_in=2.0), g, 20.0)
    assert np.all(tr.profiles == 0) and np.all(tr.heads["V"] == 0)
    assert tr.heads["T"][-1] == pytest.approx(2.0, abs=1e-6)


def test_matches_monotone_iteration_oracle():
    g = make_grid(10, 1000)
    p = params(g)
    st0 = HivState(1.0, 0.5, AgeProfile.from_function(g, indicator(0, 1)))
    tr = hiv_simulate(st0, p, g, 1.0)
    model = HivModel(p, g, st0)
    rep = monotone_iterate(None, model, horizon=1.0)
    assert rep.converged
    assert np.max(np.abs(model.pack_trajectory(tr) - rep.solution)) <= 1e-8


def test_a_priori_bounds_random_runs():
    g = make_grid(5, 250)
    rng = np.random.default_rng(7)
    for _ in range(50):
        kw = dict(s_in=rng.uniform(0.2, 2), d=rng.uniform(0.2, 2), k=rng.uniform(0.2, 2), c=rng.uniform(0.2, 2))
        vals = rng.uniform(0, 2, 4)
        dvals = rng.uniform(0.5, 2, 4)
        xs = np.linspace(0, 5, 4)
        p = params(g, p_prod=lambda a: np.interp(a, xs, vals), delta_a=lambda a: np.interp(a, xs, dvals), **kw)
        i0 = AgeProfile.from_function(g, lambda a: rng.uniform(0, 1) * np.exp(-a))
        tr = hiv_simulate(HivState(rng.uniform(0, 2), rng.uniform(0, 2), i0), p, g, 5.0)
        assert tr.diagnostics["TI_margin"].min() >= -1e-9
        assert tr.diagnostics["V_margin"].min() >= -1e-9
        assert tr.profiles.min() >= 0 and tr.heads["T"].min() >= 0 and tr.heads["V"].min() >= 0


def test_bounds_example():
    g = make_grid(10, 100)
    b = hiv_bounds(HivState(1.0, 0.0, AgeProfile.zeros(g)), params(g))
    assert tuple(b) == pytest.approx((0.5, 1.0, 1.0, 2.0), abs=1e-15)


def test_bounds_large_initial_mass():
    g = make_grid(10, 1000)
    p = params(g)
    st0 = HivState(1.0, 0.0, AgeProfile.constant(g, 1.0))
    b = hiv_bounds(st0, p)
    assert b.T_plus == pytest.approx(11.0)
    T = hiv_simulate(st0, p, g, 20.0).heads["T"]
    assert T.min() >= b.T_minus - 1e-9 and T.max() <= b.T_plus + 1e-9


def test_T_within_bounds_long_run():
    g = make_grid(10, 1000)
    p = params(g)
    st0 = HivState(1.0, 0.2, AgeProfile.from_function(g, indicator(0, 1)))
    b = hiv_bounds(st0, p)
    T = hiv_simulate(st0, p, g, 50.0).heads["T"]
    assert T.min() >= b.T_minus - 1e-9 and T.max() <= b.T_plus + 1e-9


def test_bounds_need_positive_T0():
    g = make_grid(1, 10)
    with pytest.raises(PreconditionError):
        hiv_bounds(HivState(0.0, 1.0, AgeProfile.zeros(g)), params(g))


def test_frozen_zero_and_decay():
    g = make_grid(5, 500)
    p = params(g)
    tr = hiv_frozen_simulate(AgeProfile.zeros(g), 0.0, 1.0, p, g, 1.0)
    assert np.all(tr.profiles == 0) and np.all(tr.heads["V"] == 0)
    tr = hiv_frozen_simulate(AgeProfile.zeros(g), 2.0, 1.0, params(g, p_prod=0.0, c=2.0), g, 1.0)
    expected = 2.0 * (1 + 2.0 * g.dt) ** (-np.arange(len(tr.times)))
    assert np.allclose(tr.heads["V"], expected, rtol=1e-12)
    assert tr.heads["V"][-1] == pytest.approx(2.0 * np.exp(-2.0), rel=0.02)
    with pytest.raises(PreconditionError):
        hiv_frozen_simulate(AgeProfile.zeros(g), 1.0, 0.0, p, g, 1.0)


def test_frozen_functional_grows_like_exp_t():
    g = make_grid(30, 3000)
    p = params(g, p_prod=4.0)
    sd = spectral_hiv(1.0, p, g)
    assert sd.lam == pytest.approx(1.0, abs=1e-8)
    tr = hiv_frozen_simulate(AgeProfile.from_function(g, indicator(0, 1)), 0.5, 1.0, p, g, 1.0)
    f = functional_series(tr, sd)
    rel = np.abs(f * np.exp(-tr.times) / f[0] - 1)
    assert rel.max() < 0.1


def test_sandwich_short_horizon():
    g = make_grid(10, 500)
    p = params(g)
    st0 = HivState(1.0, 0.0, AgeProfile.from_function(g, indicator(0, 1)))
    b = hiv_bounds(st0, p)
    mid = hiv_simulate(st0, p, g, 5.0)
    lo = hiv_frozen_simulate(st0.i, st0.V, b.T_minus, p, g, 5.0)
    hi = hiv_frozen_simulate(st0.i, st0.V, b.T_plus, p, g, 5.0)
    assert sandwich_verify(lo, mid, hi, 1e-6 + 5 * g.dt).ok


def test_negative_state_rejected():
    g = make_grid(1, 10)
    with pytest.raises(InvalidArgument):
        HivState(1.0, -1.0, AgeProfile.zeros(g))
