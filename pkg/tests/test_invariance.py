import math

import numpy as np
import pytest

from agestruct import (
    INFINITE_AGE,
    AgeProfile,
    HivParams,
    HivState,
    PreconditionError,
    Region,
    SirParams,
    SirState,
    SurvivalFactors,
    a_star,
    boundary_explicit,
    classify,
    hiv_bounds,
    hiv_simulate,
    integrate,
    invariance_check,
    make_grid,
    sir_bounds,
    sir_simulate,
    spectral_hiv,
    spectral_sir,
)

from conftest import indicator


@pytest.fixture(scope="module")
def g():
    return make_grid(10, 1000)


def sir(g, beta=1.0):
    return SirParams.build(g, 1.0, 0.5, 1.0, beta, 1.0)


def test_a_star_examples(g):
    assert a_star(AgeProfile.from_function(g, indicator(0, 2))) == pytest.approx(2.0)
    assert a_star(AgeProfile.from_function(g, lambda a: np.exp(-a))) == INFINITE_AGE
    assert math.isinf(INFINITE_AGE)
    with pytest.raises(PreconditionError):
        a_star(AgeProfile.zeros(g))


def test_classify_examples(g):
    v = classify(SirState(1.0, AgeProfile.from_function(g, indicator(3, 4))), 2.0)
    assert v.region is Region.BOUNDARY and v.mass_below_astar == 0.0
    v = classify(SirState(1.0, AgeProfile.from_function(g, indicator(1, 2))), 2.0)
    assert v.region is Region.INTERIOR and v.mass_below_astar == pytest.approx(1.0, abs=1e-2)
    v = classify(HivState(1.0, 0.1, AgeProfile.zeros(g)), 2.0)
    assert v.region is Region.INTERIOR and v.head == 0.1


def test_classify_tolerance(g):
    i = AgeProfile.from_function(g, lambda a: 1e-14 * (a < 1))
    assert classify(SirState(1.0, i), 2.0).region is Region.INTERIOR
    assert classify(SirState(1.0, i), 2.0, tol_mass=1e-12).region is Region.BOUNDARY


def test_classify_infinite_astar_uses_all_mass(g):
    i = AgeProfile.from_function(g, indicator(8, 9))
    v = classify(SirState(1.0, i), INFINITE_AGE)
    assert v.mass_below_astar == pytest.approx(float(integrate(i)[0]))


def test_boundary_explicit_examples(g):
    surv = SurvivalFactors.from_rate(g, 1.0)
    i0 = AgeProfile.from_function(g, indicator(2, 3))
    assert np.array_equal(boundary_explicit(i0, surv, 0.0).values, i0.values)
    i1 = boundary_explicit(i0, surv, 1.0)
    assert float(integrate(i1)[0]) == pytest.approx(math.exp(-1) * float(integrate(i0)[0]), rel=1e-12)
    assert float(integrate(i1)[0]) == pytest.approx(math.exp(-1), rel=0.02)
    assert np.all(i1.scalar[g.nodes < 3 - 1e-9] == 0)
    norms = [float(integrate(boundary_explicit(i0, surv, t))[0]) for t in np.arange(0, 5, 0.5)]
    assert np.all(np.array(norms) <= np.exp(-np.arange(0, 5, 0.5)) * norms[0] * (1 + 1e-9))


def test_boundary_run_matches_explicit():
    g = make_grid(30, 3000)
    p = sir(g, beta=indicator(0, 2))
    astar = a_star(p.beta)
    assert astar == pytest.approx(2.0)
    i0 = AgeProfile.from_function(g, indicator(2, 3, left_open=True))
    tr = sir_simulate(SirState(1.0, i0), p, g, 20.0)
    rep = invariance_check(tr, astar, kernel=p.beta, delta=1.0, surv=SurvivalFactors.from_rate(g, p.nu_I))
    assert rep.ok and rep.region is Region.BOUNDARY
    assert rep.explicit_error <= 1e-10
    assert rep.max_inflow == 0.0
    assert rep.decay_ok


def test_interior_sir_run_certified(g):
    p = sir(g, beta=indicator(0, 2))
    st0 = SirState(1.0, AgeProfile.from_function(g, indicator(0, 1)))
    tr = sir_simulate(st0, p, g, 20.0)
    sd = spectral_sir(sir_bounds(st0, p).S_minus, p, g)
    rep = invariance_check(tr, a_star(p.beta), spectral=sd)
    assert rep.ok and rep.region is Region.INTERIOR and rep.certified
    assert rep.min_level > rep.tol_mass


def test_interior_hiv_run(g):
    p = HivParams.build(g, 1.0, 1.0, 1.0, 1.0, indicator(0, 2), 1.0)
    st0 = HivState(1.0, 0.3, AgeProfile.zeros(g))
    tr = hiv_simulate(st0, p, g, 20.0)
    sd = spectral_hiv(hiv_bounds(st0, p).T_minus, p, g)
    rep = invariance_check(tr, a_star(p.p_prod), spectral=sd)
    assert rep.ok and rep.region is Region.INTERIOR


def test_flip_is_reported(g):
    # a profile that starts interior but empties below a-star is flagged
    from agestruct import Trajectory

    prof = np.zeros((3, g.n_nodes, 1))
    prof[0, :, 0] = indicator(0, 1)(g.nodes)
    prof[1, :, 0] = indicator(0, 1)(g.nodes)
    tr = Trajectory(g, np.arange(3) * g.dt, prof)
    rep = invariance_check(tr, 2.0)
    assert not rep.ok and rep.flip_step == 2 and rep.mass_margin < 0
