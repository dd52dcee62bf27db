"""General n-component age-structured system with nonlocal coefficients.

    u_t + u_a = mu(G(t), a) u,         G(t) = int alpha(a) u(t,a) da
    u(t,0) = int beta(Sigma(t), a) u(t,a) da,   Sigma(t) = int sigma(a) u(t,a) da

``mu`` is a growth rate (negative for mortality). ``mu_fn(G, ages)`` and
``beta_fn(Sigma, ages)`` return one ``n x n`` matrix per age node. Numerics
use the discrete L1 norm throughout.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import expm

from .comparison import DiscreteModel
from .errors import InvalidArgument, StepSizeError
from .grid import AgeGrid, AgeProfile, default_tol
from .trajectory import Trajectory, warn_if_truncated


def _matrices(x, n_nodes: int, n: int, name: str) -> np.ndarray:
    """Normalize a scalar, constant matrix, per-node scalar, per-node diagonal or per-node matrix."""
    a = np.asarray(x, float)
    if a.ndim == 0:
        a = np.full(n_nodes, float(a))
    if a.shape == (n, n) and n_nodes != n:
        return np.broadcast_to(a, (n_nodes, n, n)).copy()
    if a.shape == (n_nodes,):
        a = a[:, None] * np.ones(n)
    if a.shape == (n_nodes, n):
        out = np.zeros((n_nodes, n, n))
        idx = np.arange(n)
        out[:, idx, idx] = a
        return out
    if a.shape == (n_nodes, n, n):
        return a
    raise InvalidArgument(f"{name}: expected per-node {n}x{n} matrices, got shape {a.shape}")


def _kernel(grid, x, n, name):
    if isinstance(x, AgeProfile):
        x = x.values[:, 0] if x.dim == 1 else x.values
    elif callable(x):
        x = x(grid.nodes)
    return _matrices(x, grid.n_nodes, n, name)


@dataclass(frozen=True, eq=False)
class GeneralParams:
    """Coefficients of the general system on one grid.

    ``gamma_hint`` seeds the quasi-monotonicity search; by default it is
    ``max(-mu(0, a)) + 1`` over the diagonal.
    """

    grid: AgeGrid
    dim: int
    alpha: np.ndarray
    sigma: np.ndarray
    mu_fn: Callable
    beta_fn: Callable
    p_exponent: int = 1
    gamma_hint: float | None = None

    def __post_init__(self):
        n, N = self.dim, self.grid.n_nodes
        if not (isinstance(n, (int, np.integer)) and 1 <= n <= 3):
            raise InvalidArgument(f"dim must be 1, 2 or 3, got {n}")
        if self.p_exponent != 1:
            raise InvalidArgument("only p_exponent=1 is supported")
        for name in ("alpha", "sigma"):
            k = _kernel(self.grid, getattr(self, name), n, name)
            if np.any(k < 0):
                raise InvalidArgument(f"{name} must be entrywise nonnegative")
            k.flags.writeable = False
            object.__setattr__(self, name, k)
        assert self.alpha.shape == (N, n, n)

    def mu(self, G) -> np.ndarray:
        return _matrices(self.mu_fn(np.asarray(G, float), self.grid.nodes), self.grid.n_nodes, self.dim, "mu_fn")

    def beta(self, Sigma) -> np.ndarray:
        return _matrices(self.beta_fn(np.asarray(Sigma, float), self.grid.nodes), self.grid.n_nodes, self.dim, "beta_fn")

    def suggested_gamma(self) -> float:
        if self.gamma_hint is not None:
            return float(self.gamma_hint)
        m = self.mu(np.zeros(self.dim))
        diag = np.diagonal(m, axis1=1, axis2=2)
        return max(0.0, float(np.max(-diag))) + 1.0


@dataclass(frozen=True)
class GeneralState:
    u: AgeProfile


MODULATIONS = ("none", "reciprocal", "linear", "exp")


def modulation(kind: str, rate: float = 1.0) -> Callable:
    """Scalar factor ``chi(x)``: 1, ``1/(1+r x)``, ``1 + r x`` or ``exp(r x)``."""
    if kind == "none":
        return lambda x: 1.0
    if kind == "reciprocal":
        return lambda x: 1.0 / (1.0 + rate * x)
    if kind == "linear":
        return lambda x: 1.0 + rate * x
    if kind == "exp":
        return lambda x: math.exp(rate * x)
    raise InvalidArgument(f"unknown modulation {kind!r}; expected one of {MODULATIONS}")


def scalar_params(grid: AgeGrid, mu0, beta0, alpha=1.0, sigma=1.0, mu_mod=None, beta_mod=None, gamma_hint=None) -> GeneralParams:
    """One-component model ``mu = -mu0(a) chi(G)``, ``beta = beta0(a) psi(Sigma)``.

    ``mu0``, ``beta0``, ``alpha``, ``sigma`` are constants, callables or node
    arrays; ``chi`` and ``psi`` default to 1.
    """
    m0 = _kernel(grid, mu0, 1, "mu0")[:, 0, 0].copy()
    b0 = _kernel(grid, beta0, 1, "beta0")[:, 0, 0].copy()
    chi = mu_mod or (lambda x: 1.0)
    psi = beta_mod or (lambda x: 1.0)
    if gamma_hint is None:
        gamma_hint = max(0.0, float(np.max(m0)) * float(chi(0.0))) + 1.0
    return GeneralParams(
        grid, 1, alpha, sigma,
        mu_fn=lambda G, a: -m0 * chi(float(G[0])),
        beta_fn=lambda S, a: b0 * psi(float(S[0])),
        gamma_hint=gamma_hint,
    )


def _aggregate(grid, kernel, u):
    """``sum_j w_j K_j u_j`` for ``u`` of shape ``(n_nodes, n)``."""
    return np.einsum("j,jkl,jl->k", grid.weights, kernel, u)


def birth_C(phi: AgeProfile, p: GeneralParams) -> np.ndarray:
    if phi.grid != p.grid or phi.dim != p.dim:
        raise InvalidArgument("profile does not match the parameter grid")
    Sigma = _aggregate(p.grid, p.sigma, phi.values)
    return _aggregate(p.grid, p.beta(Sigma), phi.values)


def mortality_D(phi: AgeProfile, p: GeneralParams) -> AgeProfile:
    if phi.grid != p.grid or phi.dim != p.dim:
        raise InvalidArgument("profile does not match the parameter grid")
    G = _aggregate(p.grid, p.alpha, phi.values)
    return AgeProfile(p.grid, np.einsum("jkl,jl->jk", p.mu(G), phi.values))


def _is_diagonal(m):
    n = m.shape[-1]
    return n == 1 or not np.any(m[:, ~np.eye(n, dtype=bool)])


def cell_propagators(p: GeneralParams, G) -> np.ndarray:
    """``exp(da * trapezoid average of mu(G, .) over each cell)``, shape ``(n_cells, n, n)``."""
    m = p.mu(G)
    avg = 0.5 * p.grid.da * (m[:-1] + m[1:])
    if _is_diagonal(avg):
        out = np.zeros_like(avg)
        idx = np.arange(p.dim)
        out[:, idx, idx] = np.exp(avg[:, idx, idx])
        return out
    return expm(avg)


class _Stepper:
    def __init__(self, p: GeneralParams, g: AgeGrid):
        if p.grid != g:
            raise InvalidArgument("parameters sampled on a different grid")
        self.p = p
        self.g = g
        self.eye = np.eye(p.dim)

    def boundary(self, prev_head, tail, step=None):
        """Solve ``(I - w_0 beta_0) b = sum_{j>=1} w_j beta_j u_j`` with ``Sigma`` lagged at node 0."""
        p, g = self.p, self.g
        w = g.weights
        Sigma = np.einsum("j,jkl,jl->k", w[1:], p.sigma[1:], tail) + w[0] * p.sigma[0] @ prev_head
        beta = p.beta(Sigma)
        rhs = np.einsum("j,jkl,jl->k", w[1:], beta[1:], tail)
        m = w[0] * beta[0]
        if np.max(np.abs(np.linalg.eigvals(m))) >= 1.0:
            raise StepSizeError(
                "boundary system I - da/2 beta(0) is not invertible with a nonnegative inverse; reduce da",
                step=step,
                suggested_da=0.5 * g.da,
            )
        return np.linalg.solve(self.eye - m, rhs)

    def advance(self, u, step=None):
        G = _aggregate(self.g, self.p.alpha, u)
        E = cell_propagators(self.p, G)
        new = np.empty_like(u)
        new[1:] = np.einsum("jkl,jl->jk", E, u[:-1])
        new[0] = self.boundary(u[0], new[1:], step)
        return new, G


def general_step(st: GeneralState, p: GeneralParams, g: AgeGrid) -> GeneralState:
    new, _ = _Stepper(p, g).advance(st.u.values)
    return GeneralState(AgeProfile(g, new))


def general_simulate(u0: GeneralState, p: GeneralParams, g: AgeGrid, horizon: float) -> Trajectory:
    """Step on characteristics; diagnostics hold ``G``, ``Sigma``, mass and dropped mass."""
    if u0.u.grid != g or u0.u.dim != p.dim:
        raise InvalidArgument("initial profile does not match the grid or dimension")
    K = g.steps_for(horizon)
    stepper = _Stepper(p, g)
    prof = np.empty((K + 1, g.n_nodes, p.dim))
    prof[0] = u0.u.values
    G = np.empty((K + 1, p.dim))
    dropped = np.zeros(K + 1)
    u = np.array(u0.u.values, float)
    for n in range(K):
        dropped[n + 1] = g.da * float(np.sum(u[-1]))
        u, G[n] = stepper.advance(u, step=n)
        prof[n + 1] = u
    G[K] = _aggregate(g, p.alpha, u)
    Sigma = np.einsum("j,jkl,njl->nk", g.weights, p.sigma, prof)
    diag = {"G": G, "Sigma": Sigma, "mass": np.einsum("j,njk->n", g.weights, prof), "dropped_mass": dropped}
    traj = Trajectory(g, np.arange(K + 1) * g.dt, prof, diagnostics=diag, meta={"model": "general"})
    warn_if_truncated(traj, float(diag["mass"][0]))
    return traj


class GeneralModel(DiscreteModel):
    """Closure for the comparison engine; the state is the profile only."""

    def __init__(self, p: GeneralParams, g: AgeGrid, initial: GeneralState | AgeProfile | None = None):
        super().__init__(g, p.dim)
        self.p = p
        self.stepper = _Stepper(p, g)
        if initial is not None:
            prof = initial.u if isinstance(initial, GeneralState) else initial
            self.initial = self.pack([], prof)

    def psi_step(self, w_prev, v_prev, v_next, gamma):
        _, wt = self.split(w_prev)
        _, vt = self.split(v_prev)
        _, nt = self.split(v_next)
        G = _aggregate(self.grid, self.p.alpha, vt)
        E = cell_propagators(self.p, G)
        e = math.exp(-gamma * self.grid.dt)
        out = np.empty_like(wt)
        out[1:] = e * wt[:-1] + np.einsum("jkl,jl->jk", E - e * np.eye(self.dim), vt[:-1])
        # the implicit slot for node 0 is filled from v_next, with Sigma lagged as in the scheme
        p, w = self.p, self.grid.weights
        Sigma = np.einsum("j,jkl,jl->k", w[1:], p.sigma[1:], nt[1:]) + w[0] * p.sigma[0] @ vt[0]
        out[0] = np.einsum("j,jkl,jl->k", w, p.beta(Sigma), nt)
        return out.ravel()

    def default_gamma(self) -> float:
        return self.p.suggested_gamma()

    def coupling_rate(self) -> float:
        x = self.initial if self.initial is not None else np.zeros(self.size)
        _, t = self.split(x)
        Sigma = _aggregate(self.grid, self.p.sigma, t)
        b = self.p.beta(Sigma)
        return float(np.max(np.abs(b).sum(axis=2))) * min(1.0, self.grid.a_max)


# --------------------------------------------------------------------------
# assumption probe


@dataclass
class ProbeVerdict:
    """``certified`` with the smallest working ``gamma``, or a counterexample.

    ``counterexample`` holds ``kind`` (``"C-positive"``, ``"C-monotone"``,
    ``"D-positive"``, ``"D-monotone"``), the pair ``phi <= psi``, the worst
    margin and its node/component.
    """

    certified: bool
    gamma: float | None
    samples: int
    counterexample: dict | None = None
    gammas_tried: list = field(default_factory=list)


def _random_profile(rng, grid, n, knots=8):
    xs = np.linspace(0.0, grid.a_max, knots)
    return np.stack([np.interp(grid.nodes, xs, rng.uniform(0.0, 1.0, knots)) for _ in range(n)], axis=1)


def _l1(grid, v):
    return float(grid.weights @ np.abs(v).sum(axis=1))


def _sample_pairs(p: GeneralParams, norm_bound: float, samples: int, seed: int):
    rng = np.random.default_rng(seed)
    g, n = p.grid, p.dim
    pairs = []
    for _ in range(samples):
        phi = _random_profile(rng, g, n)
        bump = _random_profile(rng, g, n) * (rng.uniform() < 0.9)
        total = _l1(g, phi + bump)
        scale = rng.uniform(0.0, 1.0) * norm_bound / total if total > 0 else 0.0
        pairs.append((AgeProfile(g, scale * phi), AgeProfile(g, scale * (phi + bump))))
    return pairs


def _worst(d):
    """Largest entry of ``d`` (positive means violated) and its location."""
    k = int(np.argmax(d))
    return float(d.flat[k]), np.unravel_index(k, d.shape)


def _as_list(idx):
    return [int(i) for i in idx]


def assumption_probe(p: GeneralParams, norm_bound: float = 1.0, samples: int = 32, seed: int = 0, max_doublings: int = 20) -> ProbeVerdict:
    """Sample the positivity and monotonicity hypotheses on ordered pairs ``phi <= psi``.

    ``C`` must be nonnegative and increasing; ``gamma phi + D(phi)`` must be
    nonnegative and increasing for some ``gamma`` in ``g0, 2 g0, 4 g0, ...``
    starting from :meth:`GeneralParams.suggested_gamma`.
    """
    if samples < 1:
        raise InvalidArgument("samples must be at least 1")
    pairs = _sample_pairs(p, norm_bound, samples, seed)

    def cex(kind, phi, psi, margin, where):
        return {"kind": kind, "phi": phi.values.tolist(), "psi": psi.values.tolist(), "margin": margin, "location": _as_list(where)}

    for phi, psi in pairs:
        c_lo, c_hi = birth_C(phi, p), birth_C(psi, p)
        tol = default_tol(c_lo, c_hi)
        m, where = _worst(-c_lo)
        if m > tol:
            return ProbeVerdict(False, None, samples, cex("C-positive", phi, psi, m, where))
        m, where = _worst(c_lo - c_hi)
        if m > tol:
            return ProbeVerdict(False, None, samples, cex("C-monotone", phi, psi, m, where))

    D = [(mortality_D(phi, p).values, mortality_D(psi, p).values) for phi, psi in pairs]
    gamma = p.suggested_gamma()
    tried = []
    last = None
    for _ in range(max_doublings + 1):
        tried.append(gamma)
        bad = None
        for (phi, psi), (d_lo, d_hi) in zip(pairs, D):
            lo = gamma * phi.values + d_lo
            hi = gamma * psi.values + d_hi
            tol = default_tol(lo, hi)
            m, where = _worst(-lo)
            if m > tol:
                bad = cex("D-positive", phi, psi, m, where)
                break
            m, where = _worst(lo - hi)
            if m > tol:
                bad = cex("D-monotone", phi, psi, m, where)
                break
        if bad is None:
            return ProbeVerdict(True, gamma, samples, None, tried)
        last = bad
        gamma *= 2.0
    last["gamma"] = tried[-1]
    return ProbeVerdict(False, None, samples, last, tried)


# --------------------------------------------------------------------------
# increasing / decreasing trajectories


class Monotonicity(enum.Enum):
    INCREASING = "Increasing"
    DECREASING = "Decreasing"
    NEITHER = "Neither"


@dataclass
class MonotoneVerdict:
    """Classification of the datum, and whether the simulation confirmed it.

    ``interior`` and ``boundary`` are the worst signed values of
    ``u1 - u0`` (min and max) along characteristics and at age 0 after one
    scheme step.
    """

    result: Monotonicity
    claimed: Monotonicity
    verified: bool
    interior: tuple
    boundary: tuple
    step_margin: float | None = None
    trajectory: Trajectory | None = None

    def __eq__(self, other):
        if isinstance(other, Monotonicity):
            return self.result is other
        return NotImplemented

    __hash__ = None


def trajectory_monotone_check(u0: GeneralState, p: GeneralParams, g: AgeGrid, horizon: float, tol: float | None = None) -> MonotoneVerdict:
    """Classify ``u0`` by the discrete inequalities, then check the simulated trajectory.

    Along characteristics the test is ``exp(da mu) u0(a - da) >= u0(a)`` (the
    upwind form of ``u0' <= D(u0)``), at age 0 it is ``b(u0) >= u0(0)`` with
    ``b`` the scheme's boundary value (the form of ``u0(0) <= C(u0)``). The
    reversed pair gives the decreasing case. The claim is returned only if
    the trajectory is monotone step over step within ``tol``.
    """
    stepper = _Stepper(p, g)
    x = u0.u.values
    u1, _ = stepper.advance(x)
    d = u1 - x
    tol = default_tol(x, u1) if tol is None else tol
    interior = (float(np.min(d[1:])) if len(d) > 1 else 0.0, float(np.max(d[1:])) if len(d) > 1 else 0.0)
    boundary = (float(np.min(d[0])), float(np.max(d[0])))
    if interior[0] >= -tol and boundary[0] >= -tol:
        claimed = Monotonicity.INCREASING
    elif interior[1] <= tol and boundary[1] <= tol:
        claimed = Monotonicity.DECREASING
    else:
        return MonotoneVerdict(Monotonicity.NEITHER, Monotonicity.NEITHER, True, interior, boundary)
    traj = general_simulate(u0, p, g, horizon)
    steps = np.diff(traj.profiles, axis=0)
    scale = default_tol(traj.profiles)
    if claimed is Monotonicity.INCREASING:
        margin = float(np.min(steps)) if steps.size else 0.0
        ok = margin >= -scale
    else:
        margin = -float(np.max(steps)) if steps.size else 0.0
        ok = margin >= -scale
    result = claimed if ok else Monotonicity.NEITHER
    return MonotoneVerdict(result, claimed, ok, interior, boundary, margin, traj)
