"""SIR model with infection age.

    S' = gamma_in - nu_S S - eta S int beta(a) i(t,a) da
    i_t + i_a = -nu_I(a) i
    i(t,0) = eta S(t) int beta(a) i(t,a) da

Stepping is on characteristics with ``dt == da``. ``S`` is advanced
implicitly in its linear terms, the boundary value is solved
semi-implicitly at the new level, so all compartments stay nonnegative.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .comparison import DiscreteModel, shifted_tail
from .errors import InvalidArgument, PreconditionError, StepSizeError
from .grid import AgeGrid, AgeProfile, integrate
from .operators import SurvivalFactors, exit_mass
from .trajectory import Trajectory, warn_if_truncated


@dataclass(frozen=True)
class SirParams:
    gamma_in: float
    nu_S: float
    eta: float
    beta: AgeProfile
    nu_I: AgeProfile
    delta_floor: float

    def __post_init__(self):
        for name in ("gamma_in", "nu_S", "eta", "delta_floor"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise InvalidArgument(f"{name} must be positive, got {v}")
        if self.beta.grid != self.nu_I.grid:
            raise InvalidArgument("beta and nu_I sampled on different grids")
        if np.any(self.beta.scalar < 0):
            raise InvalidArgument("beta must be nonnegative")
        if np.any(self.nu_I.scalar < self.delta_floor * (1 - 1e-12)):
            raise InvalidArgument(f"nu_I must stay above delta_floor={self.delta_floor}")

    @classmethod
    def build(cls, grid: AgeGrid, gamma_in, nu_S, eta, beta, nu_I, delta_floor=None) -> "SirParams":
        """Sample ``beta`` and ``nu_I`` (constants or vectorized callables) on ``grid``."""
        b = _sample(grid, beta)
        n = _sample(grid, nu_I)
        if delta_floor is None:
            delta_floor = float(np.min(n.scalar))
        return cls(float(gamma_in), float(nu_S), float(eta), b, n, float(delta_floor))

    @property
    def grid(self) -> AgeGrid:
        return self.beta.grid

    @property
    def beta_sup(self) -> float:
        return float(np.max(self.beta.scalar))


def _sample(grid, f) -> AgeProfile:
    if isinstance(f, AgeProfile):
        return f
    if callable(f):
        return AgeProfile.from_function(grid, f)
    return AgeProfile.constant(grid, float(f))


@dataclass(frozen=True)
class SirState:
    S: float
    i: AgeProfile

    def __post_init__(self):
        if self.S < 0:
            raise InvalidArgument("S must be nonnegative")


class SirBounds(NamedTuple):
    S_minus: float
    S_plus: float
    M: float


def _check_grid(p: SirParams, g: AgeGrid, i: AgeProfile | None = None):
    if p.grid != g or (i is not None and i.grid != g):
        raise InvalidArgument("parameters, state and grid must share one AgeGrid")


def _boundary(eta_S, bw0, rest, step=None, grid=None):
    """Solve ``B = eta_S (bw0 B + rest)`` for the new boundary value."""
    den = 1.0 - eta_S * bw0
    if den <= 0:
        suggested = None
        if grid is not None and eta_S * bw0 > 0:
            suggested = 0.5 * grid.da / (eta_S * bw0)
        raise StepSizeError(
            f"boundary solve needs eta*S*w0*beta(0) < 1, got {eta_S * bw0:.4g}; reduce da",
            step=step,
            suggested_da=suggested,
        )
    return eta_S * rest / den


class _Stepper:
    """Precomputed arrays shared by every step on one grid."""

    def __init__(self, p: SirParams, g: AgeGrid):
        _check_grid(p, g)
        self.p = p
        self.g = g
        self.s = SurvivalFactors.from_rate(g, p.nu_I).factors
        self.bw = g.weights * p.beta.scalar
        self.nuw = g.weights * p.nu_I.scalar

    def advance(self, S, i, S_frozen=None, step=None):
        p, dt = self.p, self.g.dt
        lam_old = float(np.dot(self.bw, i))
        if S_frozen is None:
            S_new = (S + dt * p.gamma_in) / (1.0 + dt * (p.nu_S + p.eta * lam_old))
        else:
            S_new = S_frozen
        new = np.empty_like(i)
        new[1:] = self.s * i[:-1]
        new[0] = _boundary(p.eta * S_new, self.bw[0], float(np.dot(self.bw[1:], new[1:])), step, self.g)
        return S_new, new


def sir_step(st: SirState, p: SirParams, g: AgeGrid) -> SirState:
    """One time step of length ``da``."""
    _check_grid(p, g, st.i)
    S, i = _Stepper(p, g).advance(st.S, st.i.scalar)
    return SirState(S, AgeProfile(g, i))


def _simulate(p, g, S0, i0, horizon, S_frozen=None):
    K = g.steps_for(horizon)
    stepper = _Stepper(p, g)
    prof = np.empty((K + 1, g.n_nodes, 1))
    S = np.empty(K + 1)
    prof[0, :, 0] = i0
    S[0] = S0 if S_frozen is None else S_frozen
    dropped = np.zeros(K + 1)
    i = np.array(i0, float)
    s = S[0]
    for n in range(K):
        dropped[n + 1] = g.da * i[-1]
        s, i = stepper.advance(s, i, S_frozen, step=n)
        S[n + 1] = s
        prof[n + 1, :, 0] = i
    w = g.weights
    lam = prof[:, :, 0] @ stepper.bw
    diag = {
        "I": prof[:, :, 0] @ w,
        "Lambda": lam,
        "removal": prof[:, :, 0] @ stepper.nuw,
        "dropped_mass": dropped,
    }
    traj = Trajectory(g, np.arange(K + 1) * g.dt, prof, diagnostics=diag)
    if S_frozen is None:
        traj.heads["S"] = S
        traj.meta["model"] = "sir"
    else:
        traj.meta.update(model="sir-frozen", S_frozen=float(S_frozen))
    warn_if_truncated(traj, float(diag["I"][0]))
    return traj


def sir_simulate(st0: SirState, p: SirParams, g: AgeGrid, horizon: float) -> Trajectory:
    """Run the nonlinear model; diagnostics hold ``I``, ``Lambda`` and dropped mass."""
    _check_grid(p, g, st0.i)
    return _simulate(p, g, st0.S, st0.i.scalar, horizon)


def sir_frozen_simulate(i0: AgeProfile, S_frozen: float, p: SirParams, g: AgeGrid, horizon: float) -> Trajectory:
    """Linear renewal system with ``S`` held at ``S_frozen``."""
    if not S_frozen > 0:
        raise PreconditionError("S_frozen must be positive")
    _check_grid(p, g, i0)
    return _simulate(p, g, S_frozen, i0.scalar, horizon, S_frozen=S_frozen)


def sir_bounds(st0: SirState, p: SirParams) -> SirBounds:
    """A priori bounds ``S_minus <= S(t) <= S_plus`` and ``S + I <= M``.

    ``M = max(S0 + I0, gamma_in / min(nu_S, delta))`` comes from
    ``(S + I)' <= gamma_in - min(nu_S, delta)(S + I)``.
    """
    if not st0.S > 0:
        raise PreconditionError("S0 must be positive; restart from a small t > 0 where S > 0")
    I0 = float(integrate(st0.i)[0])
    S_plus = st0.S + p.gamma_in / p.nu_S
    M = max(st0.S + I0, p.gamma_in / min(p.nu_S, p.delta_floor))
    S_minus = min(st0.S, p.gamma_in / (p.nu_S + p.eta * p.beta_sup * M))
    return SirBounds(S_minus, S_plus, M)


class SirModel(DiscreteModel):
    """SIR closure for the comparison engine.

    With ``S_frozen`` set the state is the age profile only (the linear
    bounding system); otherwise ``S`` is carried as a head compartment.
    """

    def __init__(self, p: SirParams, g: AgeGrid, initial: SirState | AgeProfile | None = None, S_frozen=None):
        _check_grid(p, g)
        self.p = p
        self.S_frozen = S_frozen
        self.head_names = () if S_frozen is not None else ("S",)
        super().__init__(g, 1)
        self.surv = SurvivalFactors.from_rate(g, p.nu_I)
        self.bw = g.weights * p.beta.scalar
        if initial is not None:
            if isinstance(initial, SirState):
                self.initial = self.pack([initial.S] if S_frozen is None else [], initial.i)
            else:
                self.initial = self.pack([], initial)

    def psi_step(self, w_prev, v_prev, v_next, gamma):
        dt = self.grid.dt
        wh, wt = self.split(w_prev)
        vh, vt = self.split(v_prev)
        nh, nt = self.split(v_next)
        out = np.empty_like(w_prev)
        oh, ot = self.split(out)
        ot[1:] = shifted_tail(self.surv, wt, vt, gamma, dt)
        if self.S_frozen is None:
            lam = float(np.dot(self.bw, vt[:, 0]))
            oh[0] = (wh[0] + dt * self.p.gamma_in) / (1.0 + dt * (self.p.nu_S + self.p.eta * lam))
            S = nh[0]
        else:
            S = self.S_frozen
        ot[0, 0] = self.p.eta * S * float(np.dot(self.bw, nt[:, 0]))
        return out

    def default_gamma(self) -> float:
        return float(np.max(self.p.nu_I.scalar)) + 1.0

    def coupling_rate(self) -> float:
        S = self.S_frozen
        if S is None:
            S = self.p.gamma_in / self.p.nu_S + (self.initial[0] if self.initial is not None else 0.0)
        return self.p.eta * S * self.p.beta_sup * min(1.0, self.grid.a_max)
