"""Within-host HIV model with infection age.

    T' = s - d T - k T V
    i_t + i_a = -delta(a) i,     i(t,0) = k T(t) V(t)
    V' = int p(a) i(t,a) da - c V

Per step: ``T`` then ``V`` are advanced implicitly in their linear terms,
then the boundary takes ``k T_new V_new`` (Gauss-Seidel order).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .comparison import DiscreteModel, shifted_tail
from .errors import InvalidArgument, PreconditionError
from .grid import AgeGrid, AgeProfile, integrate
from .operators import SurvivalFactors
from .sir import _sample
from .trajectory import Trajectory, warn_if_truncated


@dataclass(frozen=True)
class HivParams:
    s_in: float
    d: float
    k: float
    c: float
    p_prod: AgeProfile
    delta_a: AgeProfile
    delta0: float

    def __post_init__(self):
        for name in ("s_in", "d", "k", "c", "delta0"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise InvalidArgument(f"{name} must be positive, got {v}")
        if self.p_prod.grid != self.delta_a.grid:
            raise InvalidArgument("p_prod and delta_a sampled on different grids")
        if np.any(self.p_prod.scalar < 0):
            raise InvalidArgument("p_prod must be nonnegative")
        if np.any(self.delta_a.scalar < self.delta0 * (1 - 1e-12)):
            raise InvalidArgument(f"delta_a must stay above delta0={self.delta0}")

    @classmethod
    def build(cls, grid: AgeGrid, s_in, d, k, c, p_prod, delta_a, delta0=None) -> "HivParams":
        pp = _sample(grid, p_prod)
        da = _sample(grid, delta_a)
        if delta0 is None:
            delta0 = float(np.min(da.scalar))
        return cls(float(s_in), float(d), float(k), float(c), pp, da, float(delta0))

    @property
    def grid(self) -> AgeGrid:
        return self.p_prod.grid

    @property
    def p_sup(self) -> float:
        return float(np.max(self.p_prod.scalar))

    @property
    def d0(self) -> float:
        return min(self.d, self.delta0)


@dataclass(frozen=True)
class HivState:
    T: float
    V: float
    i: AgeProfile

    def __post_init__(self):
        if self.T < 0 or self.V < 0:
            raise InvalidArgument("T and V must be nonnegative")


class HivBounds(NamedTuple):
    T_minus: float
    T_plus: float
    V_cap: float
    d_1: float


def _check_grid(p: HivParams, g: AgeGrid, i: AgeProfile | None = None):
    if p.grid != g or (i is not None and i.grid != g):
        raise InvalidArgument("parameters, state and grid must share one AgeGrid")


class _Stepper:
    def __init__(self, p: HivParams, g: AgeGrid):
        _check_grid(p, g)
        self.p = p
        self.g = g
        self.s = SurvivalFactors.from_rate(g, p.delta_a).factors
        self.pw = g.weights * p.p_prod.scalar
        self.dw = g.weights * p.delta_a.scalar

    def advance(self, T, V, i, T_frozen=None):
        p, dt = self.p, self.g.dt
        P = float(np.dot(self.pw, i))
        T_new = T_frozen if T_frozen is not None else (T + dt * p.s_in) / (1.0 + dt * (p.d + p.k * V))
        V_new = (V + dt * P) / (1.0 + dt * p.c)
        new = np.empty_like(i)
        new[1:] = self.s * i[:-1]
        new[0] = p.k * T_new * V_new
        return T_new, V_new, new


def hiv_step(st: HivState, p: HivParams, g: AgeGrid) -> HivState:
    _check_grid(p, g, st.i)
    T, V, i = _Stepper(p, g).advance(st.T, st.V, st.i.scalar)
    return HivState(T, V, AgeProfile(g, i))


def _simulate(p, g, T0, V0, i0, horizon, T_frozen=None):
    K = g.steps_for(horizon)
    stepper = _Stepper(p, g)
    prof = np.empty((K + 1, g.n_nodes, 1))
    T = np.empty(K + 1)
    V = np.empty(K + 1)
    dropped = np.zeros(K + 1)
    T[0] = T0 if T_frozen is None else T_frozen
    V[0] = V0
    prof[0, :, 0] = i0
    t_, v_, i = T[0], V0, np.array(i0, float)
    for n in range(K):
        dropped[n + 1] = g.da * i[-1]
        t_, v_, i = stepper.advance(t_, v_, i, T_frozen)
        T[n + 1], V[n + 1] = t_, v_
        prof[n + 1, :, 0] = i
    I = prof[:, :, 0] @ g.weights
    diag = {"I": I, "P": prof[:, :, 0] @ stepper.pw, "dropped_mass": dropped}
    traj = Trajectory(g, np.arange(K + 1) * g.dt, prof, heads={"V": V}, diagnostics=diag)
    if T_frozen is None:
        traj.heads["T"] = T
        TI_cap = max(T0 + I[0], p.s_in / p.d0)
        diag["TI_margin"] = TI_cap - (T + I)
        diag["V_margin"] = max(V0, p.p_sup / p.c * TI_cap) - V
        traj.meta["model"] = "hiv"
    else:
        traj.meta.update(model="hiv-frozen", T_frozen=float(T_frozen))
    warn_if_truncated(traj, float(I[0]))
    return traj


def hiv_simulate(st0: HivState, p: HivParams, g: AgeGrid, horizon: float) -> Trajectory:
    """Run the nonlinear model.

    Diagnostics include the slack of ``T + I <= max(T0 + I0, s/d0)`` and of
    the derived cap on ``V`` (``TI_margin``, ``V_margin``; negative = violated).
    """
    _check_grid(p, g, st0.i)
    return _simulate(p, g, st0.T, st0.V, st0.i.scalar, horizon)


def hiv_frozen_simulate(i0: AgeProfile, V0: float, T_frozen: float, p: HivParams, g: AgeGrid, horizon: float) -> Trajectory:
    if not T_frozen > 0:
        raise PreconditionError("T_frozen must be positive")
    _check_grid(p, g, i0)
    return _simulate(p, g, T_frozen, V0, i0.scalar, horizon, T_frozen=T_frozen)


def hiv_bounds(st0: HivState, p: HivParams) -> HivBounds:
    if not st0.T > 0:
        raise PreconditionError("T0 must be positive; restart at a small t > 0 where T > 0")
    I0 = float(integrate(st0.i)[0])
    T_plus = max(st0.T + I0, p.s_in / p.d0)
    V_cap = max(st0.V, p.p_sup / p.c * T_plus)
    d_1 = p.d + p.k * (p.p_sup / p.c) * T_plus
    return HivBounds(min(st0.T, p.s_in / d_1), T_plus, V_cap, d_1)


class HivModel(DiscreteModel):
    """HIV closure for the comparison engine; heads are ``(T, V)`` or ``(V,)`` when frozen."""

    def __init__(self, p: HivParams, g: AgeGrid, initial: HivState | tuple | None = None, T_frozen=None):
        _check_grid(p, g)
        self.p = p
        self.T_frozen = T_frozen
        self.head_names = ("V",) if T_frozen is not None else ("T", "V")
        super().__init__(g, 1)
        self.surv = SurvivalFactors.from_rate(g, p.delta_a)
        self.pw = g.weights * p.p_prod.scalar
        if isinstance(initial, HivState):
            heads = [initial.V] if T_frozen is not None else [initial.T, initial.V]
            self.initial = self.pack(heads, initial.i)
        elif initial is not None:
            V0, i0 = initial
            self.initial = self.pack([V0], i0)

    def psi_step(self, w_prev, v_prev, v_next, gamma):
        p, dt = self.p, self.grid.dt
        wh, wt = self.split(w_prev)
        vh, vt = self.split(v_prev)
        nh, nt = self.split(v_next)
        out = np.empty_like(w_prev)
        oh, ot = self.split(out)
        ot[1:] = shifted_tail(self.surv, wt, vt, gamma, dt)
        P = float(np.dot(self.pw, vt[:, 0]))
        iv = 0 if self.T_frozen is not None else 1
        if self.T_frozen is None:
            oh[0] = (wh[0] + dt * p.s_in) / (1.0 + dt * (p.d + p.k * vh[1]))
            T = nh[0]
        else:
            T = self.T_frozen
        oh[iv] = (wh[iv] + dt * (P + gamma * nh[iv])) / (1.0 + dt * (p.c + gamma))
        ot[0, 0] = p.k * T * nh[iv]
        return out

    def default_gamma(self) -> float:
        return float(np.max(self.p.delta_a.scalar)) + 1.0

    def coupling_rate(self) -> float:
        T = self.T_frozen if self.T_frozen is not None else self.p.s_in / self.p.d0
        return self.p.k * T + self.p.p_sup
