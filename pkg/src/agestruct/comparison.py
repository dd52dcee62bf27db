"""Monotone fixed-point iteration, sub/super-solution checks and sandwich reports.

A model enters this module through :class:`DiscreteModel`: its state at one
time level is packed into a flat vector (scalar compartments first, then the
age profile), and it provides one step of the shifted map

    w_{n+1} = Psi(w_n; v_n, v_{n+1}),

i.e. transport with extra ``exp(-gamma dt)`` decay applied to the iterate
``w`` plus the source ``F(v) + gamma v`` injected along the characteristic.
When ``w == v`` this reproduces the model's own time step exactly, so the
fixed point of the iteration is the discrete solution.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, InvalidArgument, PreconditionError
from .grid import AgeGrid, AgeProfile, default_tol
from .operators import SurvivalFactors
from .trajectory import Trajectory

GAP_TOL = 1e-10
GROWTH_LIMIT = 5
PROBE_SAMPLES = 32


class DiscreteModel:
    """Packed-state interface used by the comparison engine.

    Subclasses set ``head_names`` and implement :meth:`psi_step`,
    :meth:`default_gamma` and :meth:`coupling_rate`.
    """

    head_names: tuple = ()

    def __init__(self, grid: AgeGrid, dim: int = 1, initial=None):
        self.grid = grid
        self.dim = dim
        self.initial = None if initial is None else np.asarray(initial, float)

    @property
    def n_heads(self) -> int:
        return len(self.head_names)

    @property
    def size(self) -> int:
        return self.n_heads + self.grid.n_nodes * self.dim

    def split(self, u: np.ndarray):
        u = np.asarray(u)
        heads = u[..., : self.n_heads]
        tail = u[..., self.n_heads :].reshape(u.shape[:-1] + (self.grid.n_nodes, self.dim))
        return heads, tail

    def pack(self, heads, profile) -> np.ndarray:
        if isinstance(profile, AgeProfile):
            profile = profile.values
        profile = np.asarray(profile, float).reshape(self.grid.n_nodes, self.dim)
        return np.concatenate([np.atleast_1d(np.asarray(heads, float)), profile.ravel()])

    def pack_trajectory(self, traj: Trajectory) -> np.ndarray:
        if traj.grid != self.grid:
            raise InvalidArgument("trajectory grid differs from the model grid")
        cols = [np.asarray(traj.heads[name], float)[:, None] for name in self.head_names]
        cols.append(traj.profiles.reshape(len(traj.times), -1))
        return np.hstack(cols)

    def to_trajectory(self, u: np.ndarray, t0: float = 0.0) -> Trajectory:
        heads, tail = self.split(u)
        times = t0 + np.arange(len(u)) * self.grid.dt
        return Trajectory(
            self.grid,
            times,
            np.array(tail),
            heads={n: np.array(heads[:, k]) for k, n in enumerate(self.head_names)},
        )

    def psi_step(self, w_prev, v_prev, v_next, gamma: float) -> np.ndarray:
        raise NotImplementedError

    def scheme_step(self, prev, nxt) -> np.ndarray:
        """The unshifted scheme evaluated with ``nxt`` in the implicit slots."""
        return self.psi_step(prev, prev, nxt, 0.0)

    def default_gamma(self) -> float:
        raise NotImplementedError

    def coupling_rate(self) -> float:
        """Rough Lipschitz rate of the source; used to size iteration windows."""
        return 0.0


def shifted_tail(surv: SurvivalFactors | np.ndarray, w_tail, v_tail, gamma: float, dt: float):
    """Interior nodes of one Psi step for a model whose mortality sits in ``A``."""
    s = surv.factors if isinstance(surv, SurvivalFactors) else surv
    e = math.exp(-gamma * dt)
    return s[:, None] * (e * w_tail[:-1] + (1.0 - e) * v_tail[:-1])


# --------------------------------------------------------------------------
# monotone iteration


@dataclass
class IterationReport:
    """Outcome of a monotone or Volterra iteration.

    ``pair_order`` has one ``(increasing, decreasing)`` verdict per
    consecutive iterate pair; ``iterates`` is only filled on request.
    """

    solution: np.ndarray
    pair_order: list = field(default_factory=list)
    gaps: list = field(default_factory=list)
    converged: bool = False
    final_gap: float = math.inf
    gamma: float = 0.0
    gamma_verified: bool = False
    windows: list = field(default_factory=list)
    iterates: list = field(default_factory=list)

    @property
    def monotone_flags(self) -> list:
        return [inc or dec for inc, dec in self.pair_order]

    @property
    def all_increasing(self) -> bool:
        return all(inc for inc, _ in self.pair_order)

    @property
    def all_decreasing(self) -> bool:
        return all(dec for _, dec in self.pair_order)


def _psi(model: DiscreteModel, x, v, gamma):
    w = np.empty_like(v)
    w[0] = x
    for n in range(len(v) - 1):
        w[n + 1] = model.psi_step(w[n], v[n], v[n + 1], gamma)
    return w


def order_probe(model: DiscreteModel, gamma: float, bound: float, samples=PROBE_SAMPLES, seed=0):
    """Sample-check that the one-step source map is order preserving.

    Draws nonnegative ordered pairs ``v <= v'`` with entries below ``bound``
    and compares ``Psi(0; v, v)`` with ``Psi(0; v', v')``.
    """
    rng = np.random.default_rng(seed)
    zero = np.zeros(model.size)
    bound = max(bound, 1e-12)
    for _ in range(samples):
        v = rng.uniform(0.0, 0.5 * bound, model.size)
        vp = v + rng.uniform(0.0, 0.5 * bound, model.size)
        lo = model.psi_step(zero, v, v, gamma)
        hi = model.psi_step(zero, vp, vp, gamma)
        if np.any(lo > hi + default_tol(lo, hi)) or np.any(lo < -default_tol(lo)):
            return False
    return True


def monotone_iterate(
    v0,
    model: DiscreteModel,
    gamma_q: float | None = None,
    g: AgeGrid | None = None,
    horizon: float = 1.0,
    max_iter: int = 200,
    x=None,
    keep_iterates: bool = False,
    tol: float | None = None,
) -> IterationReport:
    """Iterate the shifted map from ``v0`` to its fixed point on ``[0, horizon]``.

    ``v0`` is a packed trajectory (array of shape ``(K+1, model.size)``), a
    :class:`Trajectory`, or None for the zero trajectory. ``x`` is the initial
    state (defaults to ``model.initial``). The horizon is split into windows of
    length ``min(horizon, 1/(2 (gamma + L)))`` with ``L`` the model's coupling
    rate, and the windows are chained.
    """
    g = g or model.grid
    if g != model.grid:
        raise InvalidArgument("grid differs from the model grid")
    K = g.steps_for(horizon)
    x = model.initial if x is None else np.asarray(x, float)
    if x is None:
        raise InvalidArgument("no initial state given")
    if v0 is None:
        v0 = np.zeros((K + 1, model.size))
    elif isinstance(v0, Trajectory):
        v0 = model.pack_trajectory(v0)
    v0 = np.asarray(v0, float)
    if v0.shape != (K + 1, model.size):
        raise InvalidArgument(f"v0 must have shape {(K + 1, model.size)}, got {v0.shape}")

    gamma = model.default_gamma() if gamma_q is None else float(gamma_q)
    bound = 2.0 * (np.max(np.abs(v0)) + np.max(np.abs(x)) + 1.0)
    report = IterationReport(solution=np.empty_like(v0), gamma=gamma)
    report.gamma_verified = order_probe(model, gamma, bound)

    span = 1.0 / (2.0 * (gamma + model.coupling_rate())) if gamma > 0 else horizon
    kw = max(1, min(K, int(span / g.dt))) if K else 0
    report.solution[0] = x
    start = 0
    start_state = x
    while start < K:
        stop = min(K, start + kw)
        u = v0[start : stop + 1].copy()
        growth = 0
        win = {"start": start, "stop": stop, "iterations": 0, "gaps": []}
        for it in range(max_iter):
            nxt = _psi(model, start_state, u, gamma)
            ptol = default_tol(u, nxt) if tol is None else tol
            report.pair_order.append(
                (bool(np.all(nxt >= u - ptol)), bool(np.all(nxt <= u + ptol)))
            )
            gap = float(np.max(np.abs(nxt - u)))
            if keep_iterates:
                report.iterates.append((start, nxt))
            if win["gaps"] and gap > win["gaps"][-1]:
                growth += 1
            else:
                growth = 0
            win["gaps"].append(gap)
            report.gaps.append(gap)
            u = nxt
            win["iterations"] = it + 1
            if growth >= GROWTH_LIMIT:
                raise DivergenceError(
                    f"iteration gap grew {GROWTH_LIMIT} times in window starting at step {start}",
                    gaps=win["gaps"],
                )
            if gap <= GAP_TOL * (1.0 + np.max(np.abs(u))):
                break
        else:
            win["converged"] = False
        win.setdefault("converged", True)
        report.windows.append(win)
        report.solution[start : stop + 1] = u
        start_state = u[-1]
        start = stop

    report.converged = all(w["converged"] for w in report.windows)
    report.final_gap = report.gaps[-1] if report.gaps else 0.0
    return report


# --------------------------------------------------------------------------
# sub- and super-solutions


@dataclass
class SolutionCheck:
    ok: bool
    margins: dict
    locations: dict

    def __bool__(self):
        return self.ok


def check_subsolution(w, model: DiscreteModel, g=None, tol=None, upper=False, x=None) -> SolutionCheck:
    """Verify the discrete lower (``upper=False``) or upper solution inequalities.

    For every step the candidate must satisfy ``w_{n+1} <= Phi(w_n, w_{n+1})``
    where ``Phi`` is the scheme itself: along characteristics this is the
    upwind difference ``(w_{n+1,j} - w_{n,j-1})/dt`` against the mortality
    term, at node 0 it is ``w(t,0) <= C(w(t,.))``. The initial value is
    compared with ``x`` (default ``model.initial``) when available. Margins
    are the worst signed violations; positive means violated.
    """
    if isinstance(w, Trajectory):
        w = model.pack_trajectory(w)
    w = np.asarray(w, float)
    if g is not None and g != model.grid:
        raise InvalidArgument("grid differs from the model grid")
    if np.any(w < -default_tol(w)):
        raise PreconditionError("candidate must be nonnegative")
    tol = default_tol(w) if tol is None else tol
    sign = -1.0 if upper else 1.0
    dt = model.grid.dt
    nh = model.n_heads
    margins = {"initial": -math.inf, "interior": -math.inf, "boundary": -math.inf, "heads": -math.inf}
    locations = {}

    def record(name, value, where):
        if value > margins[name]:
            margins[name] = float(value)
            locations[name] = where

    x = model.initial if x is None else x
    if x is not None:
        d = sign * (w[0] - np.asarray(x, float))
        k = int(np.argmax(d))
        record("initial", d[k], _where(model, 0.0, k))
    for n in range(len(w) - 1):
        pred = model.scheme_step(w[n], w[n + 1])
        d = sign * (w[n + 1] - pred)
        t = (n + 1) * dt
        if nh:
            k = int(np.argmax(d[:nh]))
            record("heads", d[k], _where(model, t, k))
        _, dtail = model.split(d)
        bnd = int(np.argmax(dtail[0]))
        record("boundary", dtail[0, bnd], (t, 0.0, bnd))
        if dtail.shape[0] > 1:
            j, c = np.unravel_index(int(np.argmax(dtail[1:])), dtail[1:].shape)
            record("interior", dtail[1 + j, c], (t, float(model.grid.nodes[1 + j]), int(c)))
    margins = {k: v for k, v in margins.items() if v != -math.inf}
    ok = all(m <= tol for m in margins.values())
    return SolutionCheck(ok, margins, locations)


def _where(model, t, k):
    if k < model.n_heads:
        return (t, model.head_names[k])
    j, c = divmod(k - model.n_heads, model.dim)
    return (t, float(model.grid.nodes[j]), c)


def check_supersolution(w, model, g=None, tol=None, x=None) -> SolutionCheck:
    return check_subsolution(w, model, g, tol, upper=True, x=x)


# --------------------------------------------------------------------------
# renewal (Volterra) iteration for the SIR boundary value


def volterra_iterate_B(i0: AgeProfile, S_plus: float, p, g: AgeGrid, horizon: float, n: int, B0=None):
    """Iterate the renewal map for the boundary value at frozen ``S_plus``.

    ``B^k(t) = eta S_plus [ int_t^inf beta(a) surv i0(a-t) da
    + int_0^t beta(a) surv(0, a) B^{k-1}(t-a) da ]``, both integrals by the
    trapezoid rule on the grid. ``B0`` is the starting boundary trace (a
    length ``K+1`` array or a :class:`Trajectory`); zero when omitted.
    Returns an :class:`IterationReport` whose ``solution`` is the last iterate.
    """
    if i0.grid != g:
        raise InvalidArgument("initial profile on a different grid")
    K = g.steps_for(horizon)
    w = g.weights
    beta = p.beta.scalar
    surv = SurvivalFactors.from_rate(g, p.nu_I)
    c = surv.log_cumulative
    u0 = i0.scalar
    N = g.n_cells
    free = np.zeros(K + 1)
    for m in range(1, K + 1):
        if m <= N:
            free[m] = np.dot(w[m:] * beta[m:] * np.exp(-(c[m:] - c[: N + 1 - m])), u0[: N + 1 - m])
    ker = w * beta * np.exp(-c)
    ker = ker[: K + 1] if K + 1 <= len(ker) else np.concatenate([ker, np.zeros(K + 1 - len(ker))])
    scale = p.eta * S_plus

    if B0 is None:
        B = np.zeros(K + 1)
    elif isinstance(B0, Trajectory):
        B = np.array(B0.profiles[:, 0, 0], float)
    else:
        B = np.array(B0, float)
    if B.shape != (K + 1,):
        raise InvalidArgument(f"B0 must have length {K + 1}")
    B[0] = u0[0]

    report = IterationReport(solution=B)
    report.iterates.append(B.copy())
    for _ in range(n):
        src = B.copy()
        src[0] = 0.0  # age-zero-at-time-zero belongs to the initial datum
        nxt = np.empty_like(B)
        nxt[0] = u0[0]
        nxt[1:] = scale * (free[1:] + np.convolve(ker, src)[1 : K + 1])
        ptol = default_tol(B, nxt)
        report.pair_order.append((bool(np.all(nxt >= B - ptol)), bool(np.all(nxt <= B + ptol))))
        gap = float(np.max(np.abs(nxt - B)))
        report.gaps.append(gap)
        B = nxt
        report.iterates.append(B.copy())
        if gap <= GAP_TOL * (1.0 + np.max(np.abs(B))):
            report.converged = True
            break
    report.solution = B
    report.final_gap = report.gaps[-1] if report.gaps else 0.0
    return report


# --------------------------------------------------------------------------
# sandwich


@dataclass
class SandwichReport:
    ok: bool
    lower_margin: float
    upper_margin: float
    lower_location: tuple
    upper_location: tuple
    tol: float

    @property
    def worst_margin(self) -> float:
        return max(self.lower_margin, self.upper_margin)


def sandwich_verify(lower: Trajectory, mid: Trajectory, upper: Trajectory, tol: float) -> SandwichReport:
    """Check ``lower <= mid <= upper`` at every node and step, heads included.

    Margins are the largest violations (``<= 0`` means strictly ordered);
    locations are ``(t, a)`` or ``(t, head_name)``.
    """
    mid.check_compatible(lower)
    mid.check_compatible(upper)
    if not np.allclose(mid.times, lower.times) or not np.allclose(mid.times, upper.times):
        raise InvalidArgument("trajectories use different time levels")

    def worst(a: Trajectory, b: Trajectory):
        d = a.profiles - b.profiles
        k, j, _ = np.unravel_index(int(np.argmax(d)), d.shape)
        best = (float(d[k, j, _]), (float(mid.times[k]), float(mid.grid.nodes[j])))
        for name in sorted(set(a.heads) & set(b.heads)):
            dh = np.asarray(a.heads[name]) - np.asarray(b.heads[name])
            kh = int(np.argmax(dh))
            if dh[kh] > best[0]:
                best = (float(dh[kh]), (float(mid.times[kh]), name))
        return best

    lo, lo_at = worst(lower, mid)
    up, up_at = worst(mid, upper)
    return SandwichReport(lo <= tol and up <= tol, lo, up, lo_at, up_at, tol)
