import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from agestruct import (
    AgeProfile,
    DivergenceError,
    InvalidArgument,
    PreconditionError,
    SirModel,
    SirParams,
    SirState,
    Trajectory,
    check_subsolution,
    check_supersolution,
    make_grid,
    monotone_iterate,
    order_probe,
    sandwich_verify,
    sir_frozen_simulate,
    sir_simulate,
    solve_lambda_sir,
    volterra_iterate_B,
)

from conftest import indicator


def sir(g, beta=1.0, nu=1.0):
    return SirParams.build(g, 1.0, 0.5, 1.0, beta, nu)


@pytest.fixture(scope="module")
def g():
    return make_grid(10, 500)


def test_zero_model_zero_iterates(g):
    model = SirModel(sir(g), g, AgeProfile.zeros(g), S_frozen=1.0)
    rep = monotone_iterate(None, model, horizon=1.0)
    assert rep.converged and np.all(rep.solution == 0)
    assert rep.gaps[0] == 0.0


def test_frozen_iterates_increase_to_scheme(g):
    p = sir(g)
    i0 = AgeProfile.from_function(g, indicator(0, 1))
    model = SirModel(p, g, i0, S_frozen=2.0)
    ref = model.pack_trajectory(sir_frozen_simulate(i0, 2.0, p, g, 1.0))
    K = g.steps_for(1.0)
    zero = np.zeros((K + 1, model.size))
    assert check_subsolution(zero, model)
    rep = monotone_iterate(zero, model, horizon=1.0)
    assert rep.converged and rep.all_increasing
    assert np.max(np.abs(rep.solution - ref)) <= 1e-8
    rep = monotone_iterate(np.tile(model.initial, (K + 1, 1)), model, horizon=1.0)
    assert rep.converged
    assert np.max(np.abs(rep.solution - ref)) <= 1e-8


def test_iterates_decrease_from_supersolution(g):
    p = sir(g)
    i0 = AgeProfile.from_function(g, indicator(0, 1))
    model = SirModel(p, g, i0, S_frozen=2.0)
    ref = model.pack_trajectory(sir_frozen_simulate(i0, 2.0, p, g, 1.0))
    t = np.arange(ref.shape[0]) * g.dt
    sup = ref * np.exp(t)[:, None]
    assert check_supersolution(sup, model)
    rep = monotone_iterate(sup, model, horizon=1.0)
    assert rep.converged and rep.all_decreasing
    assert np.max(np.abs(rep.solution - ref)) <= 1e-8


def test_ordered_data_give_ordered_fixed_points(g):
    p = sir(g, beta=lambda a: np.exp(-a))
    lo_i = AgeProfile.from_function(g, indicator(0, 1))
    hi_i = AgeProfile.from_function(g, lambda a: indicator(0, 1)(a) + 0.2 * np.exp(-a))
    lo = monotone_iterate(None, SirModel(p, g, lo_i, S_frozen=1.5), horizon=2.0).solution
    hi = monotone_iterate(None, SirModel(p, g, hi_i, S_frozen=1.5), horizon=2.0).solution
    assert np.all(lo <= hi + 1e-12)


def test_windows_split_horizon(g):
    model = SirModel(sir(g), g, AgeProfile.from_function(g, indicator(0, 1)), S_frozen=1.0)
    rep = monotone_iterate(None, model, horizon=2.0)
    span = 1 / (2 * (rep.gamma + model.coupling_rate()))
    assert len(rep.windows) == int(np.ceil(2.0 / (int(span / g.dt) * g.dt) - 1e-9))
    assert rep.gamma_verified


def test_bad_shapes_rejected(g):
    model = SirModel(sir(g), g, AgeProfile.zeros(g), S_frozen=1.0)
    with pytest.raises(InvalidArgument):
        monotone_iterate(np.zeros((3, model.size)), model, horizon=1.0)
    with pytest.raises(InvalidArgument):
        monotone_iterate(None, model, g=make_grid(10, 100), horizon=1.0)


def test_divergence_reported(g):
    class Unstable(SirModel):
        def psi_step(self, w_prev, v_prev, v_next, gamma):
            return 3.0 * v_next + 1.0

    model = Unstable(sir(g), g, AgeProfile.zeros(g), S_frozen=1.0)
    with pytest.raises(DivergenceError):
        monotone_iterate(None, model, horizon=0.1)


def test_order_probe_detects_reversal(g):
    model = SirModel(sir(g), g, AgeProfile.zeros(g), S_frozen=1.0)
    assert order_probe(model, model.default_gamma(), 2.0)

    class Reversing(SirModel):
        def psi_step(self, w_prev, v_prev, v_next, gamma):
            return 10.0 - v_next

    assert not order_probe(Reversing(sir(g), g, AgeProfile.zeros(g), S_frozen=1.0), 1.0, 2.0)


def test_volterra_zero_datum(g):
    rep = volterra_iterate_B(AgeProfile.zeros(g), 2.0, sir(g), g, 2.0, 5)
    assert np.all(rep.solution == 0)


@given(st.lists(st.floats(0, 2, allow_subnormal=False), min_size=5, max_size=5), st.floats(0.2, 3))
def test_volterra_iterates_increase(vals, S):
    g = make_grid(5, 100)
    p = sir(g, beta=lambda a: np.exp(-a / 2))
    i0 = AgeProfile.from_function(g, lambda a: np.interp(a, np.linspace(0, 5, 5), vals))
    rep = volterra_iterate_B(i0, S, p, g, 2.0, 8)
    assert all(up for up, _ in rep.pair_order)
    for a, b in zip(rep.iterates, rep.iterates[1:]):
        assert np.all(a <= b + 1e-12)


def test_volterra_limit_is_frozen_boundary_and_grows_at_lambda():
    g = make_grid(20, 1000)
    p = sir(g)
    i0 = AgeProfile.from_function(g, indicator(0, 1))
    rep = volterra_iterate_B(i0, 2.0, p, g, 6.0, 400)
    assert rep.converged
    trace = sir_frozen_simulate(i0, 2.0, p, g, 6.0).profiles[:, 0, 0]
    assert np.max(np.abs(rep.solution - trace)) <= 1e-8 * np.max(trace)
    lam = solve_lambda_sir(2.0, p, g)
    ratio = rep.solution[-1] / rep.solution[-2]
    assert ratio == pytest.approx(np.exp(lam * g.dt), rel=0.01)


def test_subsolution_equilibrium_and_solver_output(g):
    p = sir(g)
    st0 = SirState(2.0, AgeProfile.zeros(g))
    model = SirModel(p, g, st0)
    tr = sir_simulate(st0, p, g, 1.0)
    assert check_subsolution(tr, model) and check_supersolution(tr, model)
    st1 = SirState(1.0, AgeProfile.from_function(g, indicator(0, 1)))
    model = SirModel(p, g, st1)
    tr = sir_simulate(st1, p, g, 1.0)
    assert check_subsolution(tr, model, tol=1e-10)


def test_scaled_solution_is_not_subsolution(g):
    p = sir(g)
    i0 = AgeProfile.from_function(g, indicator(0, 1))
    model = SirModel(p, g, i0, S_frozen=2.0)
    w = 1.5 * model.pack_trajectory(sir_frozen_simulate(i0, 2.0, p, g, 1.0))
    rep = check_subsolution(w, model)
    assert not rep.ok
    assert rep.margins["initial"] > 0
    t, a, comp = rep.locations["initial"]
    assert t == 0.0 and 0 <= a <= 1 and comp == 0
    # without the initial constraint the scaled linear solution still satisfies the scheme
    assert check_subsolution(w, model, x=w[0]).ok


def test_subsolution_negative_candidate(g):
    model = SirModel(sir(g), g, AgeProfile.zeros(g), S_frozen=1.0)
    with pytest.raises(PreconditionError):
        check_subsolution(-np.ones((3, model.size)), model)


def _traj(g, values):
    values = np.asarray(values, float)
    return Trajectory(g, np.arange(len(values)) * g.dt, values[:, :, None])


def test_sandwich_identity_and_zero_lower(g):
    tr = sir_frozen_simulate(AgeProfile.from_function(g, indicator(0, 1)), 1.0, sir(g), g, 1.0)
    rep = sandwich_verify(tr, tr, tr, 0.0)
    assert rep.ok and rep.lower_margin == 0 and rep.upper_margin == 0
    zero = _traj(g, np.zeros(tr.profiles.shape[:2]))
    assert sandwich_verify(zero, tr, tr, 0.0).ok


def test_sandwich_locates_violation(g):
    base = np.zeros((3, g.n_nodes))
    mid = base.copy()
    mid[2, 7] = 1.0
    rep = sandwich_verify(_traj(g, base), _traj(g, mid), _traj(g, base), 1e-6)
    assert not rep.ok
    assert rep.upper_margin == pytest.approx(1.0)
    assert rep.upper_location[:2] == pytest.approx((2 * g.dt, g.nodes[7]))


def test_sandwich_shape_mismatch(g):
    a = _traj(g, np.zeros((3, g.n_nodes)))
    b = _traj(g, np.zeros((4, g.n_nodes)))
    with pytest.raises(InvalidArgument):
        sandwich_verify(a, b, a, 0.0)
